//! Simulator and experiment harness for third-state approximate-majority
//! population protocols.
//!
//! The crate is split by concern:
//!
//! - [`engine`] runs one execution of TriAM, DBAM or DBAMC under a uniform
//!   random scheduler, with optional leaks and Byzantine agents.
//! - [`metrics`] computes the progress measures `x̂ = x + b/2`,
//!   `ŷ = y + b/2`, `P` and the phase/stage a configuration is in.
//! - [`oracle`] holds exact small-population ground truth (Markov-chain
//!   absorption and push-forward) and binomial-tail lower-bound numerics.
//! - [`experiments`] fans trials out over seeds, aggregates them and
//!   writes CSV.
//!
//! ```
//! use popdyn::engine::*;
//!
//! let spec = make_protocol(ProtocolKind::Dbamc);
//! let cfg = init_configuration(Model::Ci, 200, 200, 54, InitialWorkers::AllBlank, &FaultSpec::none())?;
//! let out = run(cfg, &spec, &FaultSpec::none(), &mut rng_from_seed(7), 20_000, StopRule::AtConvergence, 0);
//! assert!(out.record.converged);
//! # Ok::<(), popdyn::Error>(())
//! ```

pub mod engine;
mod error;
pub mod experiments;
pub mod metrics;
pub mod oracle;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/protocols.md")]
    mod protocols {}
    #[doc = include_str!("../../../book/src/faults.md")]
    mod faults {}
    #[doc = include_str!("../../../book/src/measures.md")]
    mod measures {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/command-line.md")]
    mod command_line {}
}
