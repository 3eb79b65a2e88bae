#![no_main]

use hgn::features::{parse_training_prompt, serialize_training_prompt};
use libfuzzer_sys::fuzz_target;

// Whatever parses must serialize back to a prompt with the same triple.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Some((h, r, t)) = parse_training_prompt(text) {
        let again = serialize_training_prompt(&h, &r, &t);
        assert_eq!(parse_training_prompt(&again), Some((h, r, t)));
    }
});
