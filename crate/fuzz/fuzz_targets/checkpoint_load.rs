#![no_main]

use libfuzzer_sys::fuzz_target;
use newton_deconv::checkpoint;

fuzz_target!(|data: &[u8]| {
    // Anything accepted must re-encode to the same bytes.
    if let Ok(state) = checkpoint::load(data) {
        assert_eq!(checkpoint::save(&state), data);
    }
});
