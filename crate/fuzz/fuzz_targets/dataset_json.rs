//! Fuzz the dataset parser and the flatten step behind it.

#![no_main]

use libfuzzer_sys::fuzz_target;
use steerage::corpus::{flatten_qa_pairs, parse_dataset};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(records) = parse_dataset(text) {
        let pairs = flatten_qa_pairs(&records);
        let expected: usize = records
            .iter()
            .map(|r| r.truthful_answers.len() + r.untruthful_answers.len())
            .sum();
        assert_eq!(pairs.len(), expected);
    }
});
