use rayon::prelude::*;

use super::config::{BetaSpec, ExperimentConfig, MarginSpec};
use super::records::{aggregate, format_float, AggregateRecord, TrialRecord};
use crate::engine::{
    derive_seed, init_configuration, protocol_for, rng_from_seed, run, sample_output,
    validate_setup, Configuration, FaultSpec, Model, ProtocolSpec, SampleOutput, StopRule,
};
use crate::error::{Error, Result};
use crate::metrics::{sample_error, trajectory_snapshots, PhaseParams, ProgressSnapshot};

/// Environment variable capping the trial worker pool.
pub const THREADS_ENV: &str = "POPDYN_THREADS";

/// Worker threads for trial fan-out: `POPDYN_THREADS` if set to a positive
/// integer, otherwise the machine's parallelism.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Fully resolved parameters of one campaign cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub n_inputs: u64,
    pub m_workers: u64,
    pub margin: i64,
    pub beta: f64,
    pub byz_count: u64,
    pub horizon: u64,
}

impl Cell {
    pub fn group_key(&self) -> String {
        format!(
            "n={};m={};margin={};beta={};byz={}",
            self.n_inputs,
            self.m_workers,
            self.margin,
            format_float(self.beta),
            self.byz_count
        )
    }
}

/// Trials of one cell in trial-index order, with their summary.
#[derive(Clone, Debug)]
pub struct CellResult {
    pub cell: Cell,
    pub trials: Vec<TrialRecord>,
    pub aggregate: AggregateRecord,
    /// Per-trial checkpoint snapshots; empty unless checkpoints were asked for.
    pub trajectories: Vec<Vec<ProgressSnapshot>>,
}

/// A cell that could not run; the rest of the campaign goes on.
#[derive(Clone, Debug, PartialEq)]
pub struct CellFailure {
    pub group_key: String,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct CampaignResult {
    pub cells: Vec<CellResult>,
    pub failures: Vec<CellFailure>,
}

impl CampaignResult {
    /// Every trial row, cell by cell.
    pub fn trials(&self) -> Vec<TrialRecord> {
        self.cells
            .iter()
            .flat_map(|c| c.trials.iter().cloned())
            .collect()
    }

    pub fn aggregates(&self) -> Vec<AggregateRecord> {
        self.cells.iter().map(|c| c.aggregate.clone()).collect()
    }
}

/// Everything a trial needs besides its index.
struct TrialSetup<'a> {
    cfg: &'a ExperimentConfig,
    cell: &'a Cell,
    model: Model,
    spec: ProtocolSpec,
    fault: FaultSpec,
    init: Configuration,
    stop: StopRule,
    checkpoint_every: u64,
}

impl TrialSetup<'_> {
    fn run_trial(&self, index: u64) -> Result<(TrialRecord, Option<Vec<ProgressSnapshot>>)> {
        let seed = derive_seed(self.cfg.base_seed, index);
        let mut rng = rng_from_seed(seed);
        let out = run(
            self.init.clone(),
            &self.spec,
            &self.fault,
            &mut rng,
            self.cell.horizon,
            self.stop,
            self.checkpoint_every,
        );
        let rec = out.record;
        let mut hits = 0u64;
        for _ in 0..self.cfg.samples_per_trial {
            if sample_output(&rec.final_config, &mut rng)? == SampleOutput::Maj {
                hits += 1;
            }
        }
        let trajectory = (self.checkpoint_every > 0).then(|| {
            let params = PhaseParams::for_run(&self.init, self.fault.effective_beta());
            trajectory_snapshots(&out.trajectory, &params)
        });
        let fin = &rec.final_config;
        let record = TrialRecord {
            trial_index: index,
            seed,
            protocol: self.cfg.protocol,
            model: self.model,
            n_inputs: self.cell.n_inputs,
            m_workers: self.cell.m_workers,
            margin: self.cell.margin,
            beta: self.cell.beta,
            leak_model: self.fault.leak_model,
            leak_pool: self.fault.leak_pool,
            byz_mode: self.fault.byz_mode,
            byz_count: self.cell.byz_count,
            horizon: self.cell.horizon,
            steps_run: rec.steps_run,
            converged: rec.converged,
            steps_to_converge: rec.steps_to_converge,
            terminal_class: rec.terminal,
            final_x: fin.x(),
            final_y: fin.y(),
            final_b: fin.b(),
            sample_error: sample_error(fin),
            sample_success: hits as f64 / self.cfg.samples_per_trial as f64,
            cum_null: rec.counters.null,
            cum_xy: rec.counters.xy,
            cum_blank: rec.counters.blank,
            cum_leaks: rec.counters.leaks,
        };
        Ok((record, trajectory))
    }
}

/// Raw sweep point before resolution.
struct Point {
    n: u64,
    m: u64,
    margin: MarginSpec,
    beta: BetaSpec,
    byz: u64,
}

impl Point {
    fn raw_key(&self) -> String {
        format!(
            "n={};m={};margin={};beta={};byz={}",
            self.n, self.m, self.margin, self.beta, self.byz
        )
    }
}

fn points(cfg: &ExperimentConfig) -> Vec<Point> {
    let mut out = Vec::new();
    for &n in cfg.n_inputs.values() {
        for &m in cfg.m_workers.values() {
            for &margin in cfg.margin.values() {
                for &beta in cfg.fault.beta.values() {
                    for &byz in cfg.fault.byz_count.values() {
                        out.push(Point {
                            n,
                            m,
                            margin,
                            beta,
                            byz,
                        });
                    }
                }
            }
        }
    }
    out
}

fn run_cell(
    cfg: &ExperimentConfig,
    model: Model,
    point: &Point,
    pool: &rayon::ThreadPool,
) -> Result<CellResult> {
    let honest = match model {
        Model::Ci => point.n + point.m,
        Model::Standard => point.n,
    };
    let cell = Cell {
        n_inputs: point.n,
        m_workers: point.m,
        margin: point.margin.resolve(point.n, honest)?,
        beta: point.beta.resolve(honest),
        byz_count: point.byz,
        horizon: cfg.horizon.resolve(honest + point.byz),
    };
    let fault = cfg.fault.spec(cell.beta, cell.byz_count);
    fault.validate()?;
    let spec = protocol_for(cfg.protocol, &fault)?;
    let init = init_configuration(
        model,
        cell.n_inputs,
        cell.m_workers,
        cell.margin,
        cfg.initial_workers,
        &fault,
    )?;
    validate_setup(&init, &spec, &fault)?;
    if init.workers() == 0 {
        return Err(Error::EmptyWorkerPool);
    }
    let setup = TrialSetup {
        cfg,
        cell: &cell,
        model,
        spec,
        fault,
        init,
        stop: if fault.is_fault_free() {
            cfg.stop
        } else {
            StopRule::AtHorizon
        },
        checkpoint_every: cfg.checkpoint_every.resolve(cell.horizon),
    };
    let results: Vec<_> = pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|i| setup.run_trial(i))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut trials = Vec::with_capacity(results.len());
    let mut trajectories = Vec::new();
    for (rec, traj) in results {
        trials.push(rec);
        trajectories.extend(traj);
    }
    let aggregate = aggregate(&cell.group_key(), &trials, cfg.samples_per_trial);
    Ok(CellResult {
        cell,
        trials,
        aggregate,
        trajectories,
    })
}

/// Run every cell of `cfg`, calling `on_cell` as each one finishes.
///
/// Trial `i` of every cell draws from the stream derived from
/// `(base_seed, i)`, so results do not depend on the thread count.
pub fn run_campaign_with<F: FnMut(&CellResult)>(
    cfg: &ExperimentConfig,
    mut on_cell: F,
) -> Result<CampaignResult> {
    cfg.validate()?;
    let model = cfg.resolved_model()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let mut result = CampaignResult::default();
    for point in points(cfg) {
        match run_cell(cfg, model, &point, &pool) {
            Ok(cell) => {
                on_cell(&cell);
                result.cells.push(cell);
            }
            Err(e) => result.failures.push(CellFailure {
                group_key: point.raw_key(),
                message: e.to_string(),
            }),
        }
    }
    Ok(result)
}

pub fn run_campaign(cfg: &ExperimentConfig) -> Result<CampaignResult> {
    run_campaign_with(cfg, |_| {})
}
