//! Prebuilt campaigns: trajectory grid, success-rate sweep over worker
//! counts, margin threshold, leak robustness, and the leak/Byzantine
//! equivalence comparison.

use super::campaign::{run_campaign, CampaignResult, CellResult};
use super::config::{BetaSpec, CheckpointSpec, ExperimentConfig, HorizonSpec, MarginSpec, Sweep};
use super::records::{format_float, CsvRow};
use crate::engine::{ByzMode, LeakModel, ProtocolKind, StopRule};
use crate::error::{Error, Result};

/// Mean final sample error over the trials of a cell.
pub fn mean_sample_error(cell: &CellResult) -> f64 {
    let n = cell.trials.len().max(1) as f64;
    cell.trials.iter().map(|t| t.sample_error).sum::<f64>() / n
}

/// Median final sample error over the trials of a cell.
pub fn median_sample_error(cell: &CellResult) -> f64 {
    let mut v: Vec<f64> = cell.trials.iter().map(|t| t.sample_error).collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        (v[k / 2 - 1] + v[k / 2]) / 2.0
    }
}

fn only_cell(res: CampaignResult) -> Result<CellResult> {
    if let Some(f) = res.failures.into_iter().next() {
        return Err(Error::InvalidConfig(format!(
            "{}: {}",
            f.group_key, f.message
        )));
    }
    res.cells
        .into_iter()
        .next()
        .ok_or_else(|| Error::InvalidConfig("campaign produced no cells".into()))
}

pub const FIGURE2_SIZES: [u64; 3] = [300, 1000, 5000];

pub const FIGURE2_BETAS: [BetaSpec; 4] = [
    BetaSpec::Value(0.0),
    BetaSpec::InvN,
    BetaSpec::LnNOverN,
    BetaSpec::SqrtNLnNOver8N,
];

#[derive(Clone, Debug)]
pub struct Figure2Options {
    /// Values of `m = n`.
    pub sizes: Vec<u64>,
    pub betas: Vec<BetaSpec>,
    pub base_seed: u64,
    pub checkpoint_every: CheckpointSpec,
}

impl Default for Figure2Options {
    fn default() -> Self {
        Figure2Options {
            sizes: FIGURE2_SIZES.to_vec(),
            betas: FIGURE2_BETAS.to_vec(),
            base_seed: 0,
            checkpoint_every: CheckpointSpec::Auto,
        }
    }
}

/// One panel of the trajectory grid.
#[derive(Clone, Debug)]
pub struct Figure2Cell {
    pub size: u64,
    pub beta: BetaSpec,
    pub result: CellResult,
}

impl Figure2Cell {
    /// File name of the panel's trajectory CSV.
    pub fn file_name(&self) -> String {
        let label = match self.beta {
            BetaSpec::Value(0.0) => "0".to_string(),
            BetaSpec::Value(v) => format_float(v),
            BetaSpec::InvN => "inv_n".into(),
            BetaSpec::LnNOverN => "ln_n_over_n".into(),
            BetaSpec::SqrtNLnNOver8N => "sqrt_n_ln_n_over_8n".into(),
        };
        format!("figure2_n{}_beta_{}.csv", self.size, label)
    }
}

/// Single DBAMC runs with adversarial leaks over the `m = n` by leak-rate
/// grid, margin `√(N ln N)`, horizon `4 N ln N`, with checkpoints.
pub fn figure2_campaign(opts: &Figure2Options) -> Result<Vec<Figure2Cell>> {
    let mut cells = Vec::new();
    for &size in &opts.sizes {
        for &beta in &opts.betas {
            let mut cfg = ExperimentConfig::new(ProtocolKind::Dbamc, size, size);
            cfg.fault.leak_model = LeakModel::Adversarial;
            cfg.fault.beta = Sweep::one(beta);
            cfg.checkpoint_every = opts.checkpoint_every;
            cfg.base_seed = opts.base_seed;
            cfg.stop = StopRule::AtHorizon;
            let result = only_cell(run_campaign(&cfg)?)?;
            cells.push(Figure2Cell { size, beta, result });
        }
    }
    Ok(cells)
}

pub const FIGURE3_INPUTS: u64 = 600;

pub const FIGURE3_WORKERS: [u64; 7] = [60, 150, 300, 600, 1200, 2400, 3000];

pub const FIGURE3_TRIALS: u64 = 3000;

/// DBAMC with `n = 600`, `β = 1/N`, margin `√(N ln N)`, one output sample
/// after `4 N ln N` steps, swept over the worker count.
pub fn figure3_config(trials: u64, base_seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(ProtocolKind::Dbamc, FIGURE3_INPUTS, 0);
    cfg.m_workers = Sweep(FIGURE3_WORKERS.to_vec());
    cfg.fault.leak_model = LeakModel::Adversarial;
    cfg.fault.beta = Sweep::one(BetaSpec::InvN);
    cfg.trials = trials;
    cfg.base_seed = base_seed;
    cfg.stop = StopRule::AtHorizon;
    cfg
}

pub fn figure3_campaign(trials: u64, base_seed: u64) -> Result<CampaignResult> {
    run_campaign(&figure3_config(trials, base_seed))
}

/// DBAMC without faults at each margin; the convergence rate within
/// `4 N ln N` steps is the cell's `conv_rate`.
pub fn margin_threshold_config(
    n: u64,
    m: u64,
    margins: &[i64],
    trials: u64,
    base_seed: u64,
) -> Result<ExperimentConfig> {
    if margins.is_empty() || margins.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidConfig(
            "margins must be sorted ascending".into(),
        ));
    }
    let mut cfg = ExperimentConfig::new(ProtocolKind::Dbamc, n, m);
    cfg.margin = Sweep(margins.iter().map(|&x| MarginSpec::Fixed(x)).collect());
    cfg.trials = trials;
    cfg.base_seed = base_seed;
    Ok(cfg)
}

pub fn margin_threshold_campaign(
    n: u64,
    m: u64,
    margins: &[i64],
    trials: u64,
    base_seed: u64,
) -> Result<CampaignResult> {
    run_campaign(&margin_threshold_config(n, m, margins, trials, base_seed)?)
}

/// Standard-model DBAM under adversarial leaks at each rate, with
/// `samples_per_trial` output samples per trial.
pub fn leak_robustness_config(
    n: u64,
    betas: Vec<BetaSpec>,
    trials: u64,
    samples_per_trial: u64,
    base_seed: u64,
) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(ProtocolKind::Dbam, n, 0);
    cfg.fault.leak_model = LeakModel::Adversarial;
    cfg.fault.beta = Sweep(betas);
    cfg.trials = trials;
    cfg.samples_per_trial = samples_per_trial;
    cfg.base_seed = base_seed;
    cfg.stop = StopRule::AtHorizon;
    cfg
}

pub const EQUIVALENCE_FACTORS: [f64; 3] = [1.0, 2.0, 4.0];

/// One side of the equivalence comparison.
#[derive(Clone, Debug)]
pub struct EquivalenceSide {
    /// `None` for the leak side.
    pub factor: Option<f64>,
    pub byz_count: u64,
    pub result: CellResult,
    pub mean_sample_error: f64,
}

#[derive(Clone, Debug)]
pub struct EquivalenceResult {
    pub leak: EquivalenceSide,
    pub byzantine: Vec<EquivalenceSide>,
}

/// Summary row of an equivalence campaign.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceRow {
    pub side: String,
    pub factor: Option<f64>,
    pub byz_count: u64,
    pub trials: u64,
    pub mean_sample_error: f64,
    /// Byzantine mean error over leak mean error (1 for the leak side).
    pub ratio: Option<f64>,
}

impl CsvRow for EquivalenceRow {
    const HEADER: &'static [&'static str] = &[
        "side",
        "factor",
        "byz_count",
        "trials",
        "mean_sample_error",
        "ratio",
    ];

    fn to_fields(&self) -> Vec<String> {
        vec![
            self.side.clone(),
            self.factor.map(format_float).unwrap_or_default(),
            self.byz_count.to_string(),
            self.trials.to_string(),
            format_float(self.mean_sample_error),
            self.ratio.map(format_float).unwrap_or_default(),
        ]
    }

    fn from_fields(r: &csv::StringRecord) -> Result<Self> {
        let get = |i: usize| r.get(i).unwrap_or("");
        let num = |i: usize| -> Result<Option<f64>> {
            match get(i) {
                "" => Ok(None),
                s => s
                    .parse()
                    .map(Some)
                    .map_err(|_| Error::Parse(format!("bad number `{s}`"))),
            }
        };
        let int = |i: usize| -> Result<u64> {
            get(i)
                .parse()
                .map_err(|_| Error::Parse(format!("bad count `{}`", get(i))))
        };
        Ok(EquivalenceRow {
            side: get(0).to_string(),
            factor: num(1)?,
            byz_count: int(2)?,
            trials: int(3)?,
            mean_sample_error: num(4)?.unwrap_or(0.0),
            ratio: num(5)?,
        })
    }
}

impl EquivalenceResult {
    /// Byzantine mean error over leak mean error; `None` when the leak side
    /// has no error at all.
    pub fn ratio(&self, side: &EquivalenceSide) -> Option<f64> {
        (self.leak.mean_sample_error > 0.0)
            .then(|| side.mean_sample_error / self.leak.mean_sample_error)
    }

    pub fn rows(&self) -> Vec<EquivalenceRow> {
        let row = |label: &str, s: &EquivalenceSide| EquivalenceRow {
            side: label.to_string(),
            factor: s.factor,
            byz_count: s.byz_count,
            trials: s.result.trials.len() as u64,
            mean_sample_error: s.mean_sample_error,
            ratio: self.ratio(s),
        };
        std::iter::once(row("leak", &self.leak))
            .chain(self.byzantine.iter().map(|s| row("byzantine", s)))
            .collect()
    }
}

fn ln_horizon(agents: u64, n: u64) -> u64 {
    (4.0 * agents as f64 * (n as f64).ln()).ceil() as u64
}

/// `n` honest DBAM agents under weak leaks at rate `beta`, against `n`
/// honest agents plus `⌈f n β⌉` stubborn-Y agents without leaks, for each
/// factor `f`. Horizons are `4 n ln n` and `4 (n + B) ln n`.
pub fn equivalence_campaign(
    n: u64,
    beta: f64,
    factors: &[f64],
    trials: u64,
    base_seed: u64,
) -> Result<EquivalenceResult> {
    if !(0.0..=0.1).contains(&beta) {
        return Err(Error::InvalidConfig(format!(
            "leak rate {beta} outside [0, 0.1]"
        )));
    }
    let base = |horizon: u64| {
        let mut cfg = ExperimentConfig::new(ProtocolKind::Dbam, n, 0);
        cfg.horizon = HorizonSpec::Steps(horizon);
        cfg.trials = trials;
        cfg.base_seed = base_seed;
        cfg.stop = StopRule::AtHorizon;
        cfg
    };
    let mut leak_cfg = base(ln_horizon(n, n));
    leak_cfg.fault.leak_model = LeakModel::Weak;
    leak_cfg.fault.beta = Sweep::one(BetaSpec::Value(beta));
    let leak_cell = only_cell(run_campaign(&leak_cfg)?)?;
    let leak = EquivalenceSide {
        factor: None,
        byz_count: 0,
        mean_sample_error: mean_sample_error(&leak_cell),
        result: leak_cell,
    };

    let mut byzantine = Vec::new();
    for &f in factors {
        if f.is_nan() || f < 0.0 {
            return Err(Error::InvalidConfig(format!("equivalence factor {f}")));
        }
        let count = (f * n as f64 * beta).ceil() as u64;
        let mut cfg = base(ln_horizon(n + count, n));
        if count > 0 {
            cfg.fault.byz_mode = ByzMode::StubbornY;
            cfg.fault.byz_count = Sweep::one(count);
        }
        let cell = only_cell(run_campaign(&cfg)?)?;
        byzantine.push(EquivalenceSide {
            factor: Some(f),
            byz_count: count,
            mean_sample_error: mean_sample_error(&cell),
            result: cell,
        });
    }
    Ok(EquivalenceResult { leak, byzantine })
}
