//! Fuzz the weight-archive parser: header decoding, bounds bookkeeping,
//! tensor extraction, and full model construction must never panic.

#![no_main]

use libfuzzer_sys::fuzz_target;
use steerage::model::{Model, TensorArchive};

fuzz_target!(|data: &[u8]| {
    if let Ok(archive) = TensorArchive::from_bytes(data) {
        // Decoding every declared tensor exercises dtype and bounds paths.
        let names: Vec<String> = archive.names().map(str::to_string).collect();
        for name in names {
            let _ = archive.tensor(&name);
        }
        // A structurally valid archive may still be an invalid model.
        let _ = Model::from_archive(&archive);
    }
});
