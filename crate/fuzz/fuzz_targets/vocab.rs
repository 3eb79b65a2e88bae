#![no_main]

use hgn::kg::{normalize_concept, parse_vocab};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(names) = parse_vocab(text, "fuzz", true) {
        for n in &names {
            assert_eq!(&normalize_concept(n), n, "normalization is idempotent");
        }
    }
    let _ = parse_vocab(text, "fuzz", false);
});
