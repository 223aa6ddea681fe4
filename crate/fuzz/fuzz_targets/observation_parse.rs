#![no_main]

use libfuzzer_sys::fuzz_target;
use newton_deconv::{ColumnSel, Observations};

fuzz_target!(|data: &[u8]| {
    let Some((&sel, body)) = data.split_first() else {
        return;
    };
    let column = match sel % 4 {
        0 => None,
        1 => Some(ColumnSel::Index((sel / 4) as usize % 4)),
        2 => Some(ColumnSel::Name("y".into())),
        _ => Some(ColumnSel::parse("x")),
    };
    for v in Observations::new(body, column) {
        match v {
            Ok(y) => assert!(y.is_finite()),
            Err(_) => break,
        }
    }
});
