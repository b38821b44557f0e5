//! Feed arbitrary text to the generator key-value config parser.

#![no_main]

use libfuzzer_sys::fuzz_target;
use lrod::portfolio::GeneratorConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = GeneratorConfig::parse(text);
    }
});
