#![no_main]

use libfuzzer_sys::fuzz_target;
use newton_deconv::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = RunConfig::parse(text) {
        let listed = cfg.to_text();
        let again = RunConfig::parse(&listed).expect("listing must parse");
        assert_eq!(again.to_text(), listed);
    }
    let mut cfg = RunConfig::default();
    for line in text.lines().take(8) {
        let _ = cfg.set_pair(line);
    }
});
