//! Fuzz the activation-cache loader.

#![no_main]

use libfuzzer_sys::fuzz_target;
use steerage::pipeline::cache_from_bytes;

fuzz_target!(|data: &[u8]| {
    if let Ok((data, meta)) = cache_from_bytes(data) {
        // Geometry recorded in the header must match the decoded samples.
        assert_eq!(data.n_layers, meta.n_layers);
        for sample in &data.samples {
            assert_eq!(sample.concat.len(), data.concat_dim());
        }
    }
});
