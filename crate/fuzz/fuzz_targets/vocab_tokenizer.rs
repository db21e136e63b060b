//! Fuzz the tokenizer: vocab construction from arbitrary lines, then the
//! round-trip invariant tokenize -> detokenize on arbitrary text.

#![no_main]

use libfuzzer_sys::fuzz_target;
use steerage::model::Tokenizer;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // First line is the input text, the rest is the vocabulary.
    let mut lines = text.lines();
    let Some(input) = lines.next() else { return };
    let vocab: Vec<String> = lines.map(str::to_string).collect();
    let Ok(tokenizer) = Tokenizer::new(vocab) else {
        return;
    };
    let ids = tokenizer.tokenize(input);
    let back = tokenizer.detokenize(&ids).expect("round trip decodes");
    assert_eq!(back, input, "tokenize/detokenize must round-trip");
});
