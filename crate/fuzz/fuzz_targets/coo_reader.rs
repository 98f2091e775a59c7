#![no_main]

use adaptive_langevin::operator::{export_coo, parse_coo};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = parse_coo(text) {
        let back = parse_coo(&export_coo(&m)).expect("exported matrix parses");
        assert_eq!(back.shape(), m.shape());
        assert_eq!(back.nnz(), m.nnz());
    }
});
