#![no_main]

use hgn::grounding::Grounder;
use hgn::kg::{KgOptions, KnowledgeGraph};
use libfuzzer_sys::fuzz_target;

// Input is `entity vocabulary \0 text`.
fuzz_target!(|data: &[u8]| {
    let Ok(input) = std::str::from_utf8(data) else {
        return;
    };
    let (vocab, text) = input.split_once('\0').unwrap_or((input, input));
    let Ok(kg) = KnowledgeGraph::from_strs("", vocab, "r\n", KgOptions::default()) else {
        return;
    };
    let g = Grounder::new(&kg);
    let got = g.ground(text, &kg);
    assert_eq!(got.ids.len(), got.spans.len());
    let chars = text.chars().count();
    assert!(got.spans.iter().all(|&(s, e)| s < e && e <= chars));
});
