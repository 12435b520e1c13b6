//! Monte Carlo campaigns over the engine: sweeps, seeded trial fan-out,
//! aggregation and CSV output.

mod campaign;
mod config;
mod figures;
mod records;

pub use campaign::{
    run_campaign, run_campaign_with, thread_count, CampaignResult, Cell, CellFailure, CellResult,
    THREADS_ENV,
};
pub use config::{
    BetaSpec, CheckpointSpec, ExperimentConfig, FaultConfig, HorizonSpec, MarginSpec, Sweep,
};
pub use figures::{
    equivalence_campaign, figure2_campaign, figure3_campaign, figure3_config,
    leak_robustness_config, margin_threshold_campaign, margin_threshold_config, mean_sample_error,
    median_sample_error, EquivalenceResult, EquivalenceRow, EquivalenceSide, Figure2Cell,
    Figure2Options, EQUIVALENCE_FACTORS, FIGURE2_BETAS, FIGURE2_SIZES, FIGURE3_INPUTS,
    FIGURE3_TRIALS, FIGURE3_WORKERS,
};
pub use records::{
    aggregate, format_float, read_csv, read_rows, round_sig9, wilson_interval, write_csv,
    write_rows, AggregateRecord, CsvRow, TrajectoryRow, TrialRecord, AGGREGATE_HEADER,
    TRAJECTORY_HEADER, TRIAL_HEADER,
};
