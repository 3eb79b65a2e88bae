#![no_main]

use hgn::kg::{KgOptions, KnowledgeGraph};
use libfuzzer_sys::fuzz_target;

// Input is `facts \0 entities \0 relations`; anything that parses must
// survive a text round trip unchanged.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let mut parts = text.splitn(3, '\0');
    let (facts, entities, relations) = (
        parts.next().unwrap_or(""),
        parts.next().unwrap_or(""),
        parts.next().unwrap_or(""),
    );
    let inverse = facts.len() % 2 == 1;
    let opts = KgOptions {
        add_inverse_relations: inverse,
    };
    if let Ok(kg) = KnowledgeGraph::from_strs(facts, entities, relations, opts) {
        if !inverse {
            let (f, e, r) = kg.to_strings();
            let again = KnowledgeGraph::from_strs(&f, &e, &r, KgOptions::default()).unwrap();
            assert_eq!(kg, again);
        }
    }
});
