//! Evolution strategy for noisy black-box optimization under inequality
//! constraints, with an extreme-barrier constraint handler, sufficient-decrease
//! step acceptance and guided subspace sampling.

pub mod constraints;
pub mod diagnostics;
pub mod engine;
pub mod guided;
pub mod oracles;
pub mod problems;
pub mod rng;
pub mod suites;
