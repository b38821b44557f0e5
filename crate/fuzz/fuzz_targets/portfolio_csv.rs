//! Feed arbitrary bytes to the portfolio CSV reader. Anything short of a panic or
//! hang is fine: malformed books must come back as Err, never crash.

#![no_main]

use libfuzzer_sys::fuzz_target;
use lrod::portfolio::{read_portfolio, CsvSchema};

fuzz_target!(|data: &[u8]| {
    let _ = read_portfolio(data, "fuzz", &CsvSchema::with_term(240));
});
