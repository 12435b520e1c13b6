//! Counts-based execution of population-protocol runs.
//!
//! A run is a [`Configuration`] (per-state counts), a [`ProtocolSpec`]
//! (rule table and success predicate), a [`FaultSpec`] (leaks and
//! Byzantine agents) and a seeded [`SimRng`]. Each call to [`step`] consumes
//! one time step: with probability `beta` a single agent leaks, otherwise
//! an ordered pair (or triple) of distinct agents is drawn uniformly and the
//! matching rule fires.

mod fault;
mod protocol;
mod rng;
mod sim;
mod state;

pub use fault::{leak, ByzMode, FaultSpec, LeakModel, LeakPool};
pub use protocol::{
    apply_rule, apply_slots, make_protocol, ProtocolKind, ProtocolSpec, StepClass, TerminalClass,
    Tuple,
};
pub use rng::{derive_seed, rng_from_seed, SimRng};
pub use sim::{
    protocol_for, run, sample_interaction, sample_output, step, validate_setup, Checkpoint,
    OutcomeCounters, RunOutput, RunRecord, SampleOutput, StepOutcome, StopRule,
};
pub use state::{
    init_configuration, AgentState, Configuration, InitialWorkers, Model, Slot, NUM_SLOTS,
};
