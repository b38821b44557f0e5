//! Loss-optimised recovery decision times (LROD) for right-censored loan portfolios.
//!
//! A lender observing a portfolio of monthly loan histories must decide how much
//! accrued delinquency to tolerate before starting recovery proceedings. This crate
//! implements the full pipeline for making that decision on data:
//!
//! 1. complete each censored account's receipt series to contractual term with one of
//!    two forecasting techniques (independent Bernoulli receipts with distribution-drawn
//!    truncation, or an eight-state delinquency Markov chain),
//! 2. sweep a grid of delinquency thresholds `d`, pricing each account at its earliest
//!    threshold breach (or at term if it never breaches) with a discounted two-component
//!    loss, and
//! 3. locate the threshold minimising total portfolio loss, optionally across a 3x3
//!    train/optimise sample matrix and with a Monte Carlo band around the loss curve.
//!
//! All randomness flows from one master seed through stable per-account substreams
//! ([`rng::substream`]), so every result is reproducible regardless of thread count or
//! iteration order.

pub mod amort;
pub mod complete;
pub mod delinquency;
pub mod error;
pub mod loss;
pub mod markov_defaults;
pub mod params;
pub mod portfolio;
pub mod random_defaults;
pub mod rng;
pub mod validate;

pub use error::{Error, Result};
