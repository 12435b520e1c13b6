//! Exact ground truth for small instances and the binomial-tail tooling
//! behind the sampling lower bound.

mod chain;
mod sampling;
mod tail;

pub use chain::{
    absorption_probabilities, finite_horizon_distribution, step_distribution, ChainIndex,
    Distribution, MAX_HORIZON, MAX_ORACLE_AGENTS,
};
pub use sampling::sample_majority_trial;
pub use tail::{
    binomial_tail_exact, kl_bernoulli, margin_one_error, min_samples, tail_lower_bound, SAMPLE_CAP,
};
