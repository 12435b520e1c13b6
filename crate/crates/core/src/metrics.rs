//! Progress measures, phase classification and sample error.
//!
//! With `x`, `y`, `b` the honest worker counts, the measures are
//! `x̂ = x + b/2`, `ŷ = y + b/2` and the gap `P`, which is `ε + x̂ - ŷ` in
//! the catalytic-input model (`ε = i_X - i_Y`) and `x̂ - ŷ` in the standard
//! model. All three are half-integers; they are stored doubled
//! (`x_hat2 = 2x + b` and so on) so that every comparison is exact.
//!
//! Phases follow the convergence analysis of each setting:
//!
//! | setting | phase 1 ends | phase 2 ends | then |
//! |---|---|---|---|
//! | CI, no leaks | `ŷ ≤ m/16` | `ŷ ≤ α ln m` | phase 3 until `ŷ = 0` |
//! | CI, large `β` | `ŷ ≤ m/16` | `ŷ ≤ 300 β m` | done |
//! | CI, small `β` | `ŷ ≤ m/16` | `ŷ ≤ 300 a ln m` | done |
//! | standard, large `β` | `ŷ ≤ n/6` | `ŷ ≤ 25 β n` | done |
//! | standard, small or zero `β` | `ŷ ≤ n/6` | `ŷ ≤ 25 a ln n` | done (phase 3 to `ŷ = 0` when `β = 0`) |
//!
//! Phase 1 stage `t` is the largest `t` with `Δ₀ 2^t ≤ P`, where `Δ₀` is the
//! gap at step 0. Phase 2 stage `s` is the largest `s` with
//! `ŷ 2^s ≤ ŷ_start`, where `ŷ_start` is `m/16` or `n/6`. Both follow the
//! current value, so a regression moves the stage back.

use std::fmt;

use crate::engine::{Checkpoint, Configuration, Model, OutcomeCounters};

/// Leak-rate regime.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Regime {
    NoLeak,
    /// `β > ln N / N`.
    LargeBeta,
    /// `0 < β ≤ ln N / N`.
    SmallBeta,
}

impl Regime {
    /// Regime of leak rate `beta` in a population of `population` agents.
    pub fn classify(beta: f64, population: u64) -> Regime {
        if beta <= 0.0 {
            return Regime::NoLeak;
        }
        let n = population.max(2) as f64;
        if beta > n.ln() / n {
            Regime::LargeBeta
        } else {
            Regime::SmallBeta
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    One,
    Two,
    Three,
    Done,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::One => "1",
            Phase::Two => "2",
            Phase::Three => "3",
            Phase::Done => "DONE",
        })
    }
}

impl std::str::FromStr for Phase {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "1" => Ok(Phase::One),
            "2" => Ok(Phase::Two),
            "3" => Ok(Phase::Three),
            "DONE" => Ok(Phase::Done),
            other => Err(crate::Error::Parse(format!("unknown phase `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PhaseTag {
    pub phase: Phase,
    pub stage: Option<u32>,
    pub regime: Regime,
}

/// Constants the phase boundaries depend on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseParams {
    pub model: Model,
    /// `m` (CI) or `n` (standard).
    pub workers: u64,
    /// `i_X - i_Y`; zero in the standard model.
    pub epsilon: i64,
    /// Doubled gap at step 0.
    pub delta0_2: i64,
    pub beta: f64,
    pub alpha: f64,
    pub a: f64,
    pub regime: Regime,
}

impl PhaseParams {
    /// Parameters for a run starting from `initial` with leak rate `beta`,
    /// and `α = a = 1`.
    pub fn for_run(initial: &Configuration, beta: f64) -> Self {
        let epsilon = match initial.model() {
            Model::Ci => initial.margin(),
            Model::Standard => 0,
        };
        let population = match initial.model() {
            Model::Ci => initial.total(),
            Model::Standard => initial.workers(),
        };
        let mut params = PhaseParams {
            model: initial.model(),
            workers: initial.workers(),
            epsilon,
            delta0_2: 0,
            beta,
            alpha: 1.0,
            a: 1.0,
            regime: Regime::classify(beta, population),
        };
        params.delta0_2 = gap2(initial, &params);
        params
    }

    pub fn with_constants(mut self, alpha: f64, a: f64) -> Self {
        self.alpha = alpha;
        self.a = a;
        self
    }

    /// `k` such that phase 1 ends once `ŷ ≤ workers / k`.
    fn phase1_divisor(&self) -> u64 {
        match self.model {
            Model::Ci => 16,
            Model::Standard => 6,
        }
    }

    /// Phase 2 terminal threshold on `ŷ`.
    pub fn phase2_threshold(&self) -> f64 {
        let w = self.workers as f64;
        let ln_w = w.max(1.0).ln();
        match (self.model, self.regime) {
            (Model::Ci, Regime::NoLeak) => self.alpha * ln_w,
            (Model::Ci, Regime::LargeBeta) => 300.0 * self.beta * w,
            (Model::Ci, Regime::SmallBeta) => 300.0 * self.a * ln_w,
            (Model::Standard, Regime::LargeBeta) => 25.0 * self.beta * w,
            (Model::Standard, _) => 25.0 * self.a * ln_w,
        }
    }
}

/// Progress measures at one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProgressSnapshot {
    pub step: u64,
    pub x: u64,
    pub y: u64,
    pub b: u64,
    pub x_hat2: i64,
    pub y_hat2: i64,
    pub p2: i64,
    pub sample_error: f64,
    pub phase: PhaseTag,
    pub cum_productive: u64,
    pub cum_blank: u64,
    pub cum_leaks: u64,
}

impl ProgressSnapshot {
    pub fn x_hat(&self) -> f64 {
        self.x_hat2 as f64 / 2.0
    }

    pub fn y_hat(&self) -> f64 {
        self.y_hat2 as f64 / 2.0
    }

    pub fn p(&self) -> f64 {
        self.p2 as f64 / 2.0
    }
}

fn gap2(cfg: &Configuration, params: &PhaseParams) -> i64 {
    let x_hat2 = 2 * cfg.x() as i64 + cfg.b() as i64;
    let y_hat2 = 2 * cfg.y() as i64 + cfg.b() as i64;
    2 * params.epsilon + x_hat2 - y_hat2
}

/// `(y + b) / workers`, taking `X` as the majority.
pub fn sample_error(cfg: &Configuration) -> f64 {
    let w = cfg.workers();
    if w == 0 {
        return 0.0;
    }
    (cfg.y() + cfg.b()) as f64 / w as f64
}

/// Exact progress measures of `cfg` plus its phase tag.
pub fn snapshot(
    step: u64,
    cfg: &Configuration,
    counters: &OutcomeCounters,
    params: &PhaseParams,
) -> ProgressSnapshot {
    let (x, y, b) = (cfg.x(), cfg.y(), cfg.b());
    let x_hat2 = 2 * x as i64 + b as i64;
    let y_hat2 = 2 * y as i64 + b as i64;
    let mut snap = ProgressSnapshot {
        step,
        x,
        y,
        b,
        x_hat2,
        y_hat2,
        p2: 2 * params.epsilon + x_hat2 - y_hat2,
        sample_error: sample_error(cfg),
        phase: PhaseTag {
            phase: Phase::One,
            stage: None,
            regime: params.regime,
        },
        cum_productive: counters.xy + counters.blank + counters.byz + counters.leaks,
        cum_blank: counters.blank,
        cum_leaks: counters.leaks,
    };
    snap.phase = classify_phase(&snap, params);
    snap
}

/// Snapshots for every checkpoint of a trajectory.
pub fn trajectory_snapshots(
    trajectory: &[Checkpoint],
    params: &PhaseParams,
) -> Vec<ProgressSnapshot> {
    trajectory
        .iter()
        .map(|c| snapshot(c.step, &c.config, &c.counters, params))
        .collect()
}

/// Phase and stage whose entry condition holds and exit condition does not.
pub fn classify_phase(snap: &ProgressSnapshot, params: &PhaseParams) -> PhaseTag {
    let regime = params.regime;
    let tag = |phase, stage| PhaseTag {
        phase,
        stage,
        regime,
    };
    let y_hat2 = snap.y_hat2 as u64;
    if regime == Regime::NoLeak && y_hat2 == 0 {
        return tag(Phase::Done, None);
    }
    let k = params.phase1_divisor();
    // ŷ > w/k  <=>  k * y_hat2 > 2w
    if k * y_hat2 > 2 * params.workers {
        return tag(Phase::One, Some(doubling_stage(snap.p2, params.delta0_2)));
    }
    if snap.y_hat() > params.phase2_threshold() {
        // largest s with ŷ 2^s ≤ w/k  <=>  k * y_hat2 * 2^s ≤ 2w
        let mut s = 0u32;
        while (k * y_hat2) << (s + 1) <= 2 * params.workers {
            s += 1;
        }
        return tag(Phase::Two, Some(s));
    }
    if regime == Regime::NoLeak {
        tag(Phase::Three, None)
    } else {
        tag(Phase::Done, None)
    }
}

fn doubling_stage(p2: i64, delta0_2: i64) -> u32 {
    if delta0_2 <= 0 || p2 < delta0_2 {
        return 0;
    }
    let mut t = 0u32;
    while t < 62 && delta0_2 << (t + 1) <= p2 {
        t += 1;
    }
    t
}
