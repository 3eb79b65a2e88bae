#![no_main]

use hgn::features::{parse_generated_fixture, parse_statement_fixture};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok((dim, rows)) = parse_generated_fixture(text, "fuzz") {
        assert!(rows.values().all(|v| v.len() == dim));
    }
    if let Ok((dim, rows)) = parse_statement_fixture(text, "fuzz") {
        assert!(rows.values().all(|v| v.len() == dim));
    }
});
