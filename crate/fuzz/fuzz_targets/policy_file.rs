//! Fuzz the steering-policy loader: container, header JSON, named vectors.

#![no_main]

use libfuzzer_sys::fuzz_target;
use steerage::probe::policy_from_bytes;

fuzz_target!(|data: &[u8]| {
    if let Ok(policy) = policy_from_bytes(data) {
        // A policy that parses must satisfy its own invariants.
        policy.validate().expect("parsed policy validates");
    }
});
