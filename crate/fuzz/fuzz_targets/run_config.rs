//! Fuzz the TOML run-configuration parser and resolution.

#![no_main]

use libfuzzer_sys::fuzz_target;
use steerage::pipeline::{FileConfig, Overrides, RunConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(file) = FileConfig::parse(text) {
        let _ = RunConfig::resolve(Some(file), &Overrides::default());
    }
});
