//! Fixtures shared by the pricing benchmarks.

use informed_core::{MarketParams, OptionSpec, QuoteRow};

/// At-the-money one-year call on a 100 spot.
pub fn atm_call() -> OptionSpec {
    OptionSpec::call(100.0, 1.0).expect("valid contract")
}

/// mu = 5%, sigma = 20%, r = 1%, p0 = 0.5 with step `1 / n`.
pub fn market(n: usize) -> MarketParams {
    MarketParams::new(0.05, 0.2, 0.01, 0.5)
        .and_then(|m| m.with_dt(1.0 / n as f64))
        .expect("valid parameters")
}

/// A small chain of calls priced from `price(strike, expiry)`.
pub fn chain(price: impl Fn(f64, f64) -> f64) -> Vec<QuoteRow> {
    let mut quotes = Vec::new();
    for expiry in [0.25, 0.5, 1.0] {
        for strike in [90.0, 100.0, 110.0] {
            let id = quotes.len();
            quotes.push(QuoteRow::new(id, strike, expiry, price(strike, expiry), 100.0).expect("valid quote"));
        }
    }
    quotes
}
