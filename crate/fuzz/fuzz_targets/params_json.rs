//! Feed arbitrary bytes through the parameter-file path: JSON decode, then the
//! semantic validation that turns a file into a forecaster.

#![no_main]

use libfuzzer_sys::fuzz_target;
use lrod::params::ParamsFile;

fuzz_target!(|data: &[u8]| {
    if let Ok(file) = serde_json::from_slice::<ParamsFile>(data) {
        let _ = file.into_forecaster();
    }
});
