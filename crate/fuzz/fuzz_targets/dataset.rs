#![no_main]

use hgn::dataset::parse_dataset;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(examples) = parse_dataset(text, "fuzz") {
        for e in &examples {
            assert!(e.gold < e.candidates.len());
        }
    }
});
