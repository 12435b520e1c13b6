use rand::Rng;
use serde::{Deserialize, Serialize};

use super::fault::{leak, FaultSpec, LeakPool};
use super::protocol::{apply_slots, ProtocolKind, ProtocolSpec, StepClass, TerminalClass, Tuple};
use super::state::{AgentState, Configuration, Slot, NUM_SLOTS};
use super::ByzMode;
use crate::error::{Error, Result};

/// What happened in one time step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    pub class: StepClass,
    pub before: Tuple,
    pub after: Tuple,
}

/// Cumulative per-class step counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct OutcomeCounters {
    pub null: u64,
    pub xy: u64,
    pub blank: u64,
    pub leaks: u64,
    pub byz: u64,
}

impl OutcomeCounters {
    #[inline]
    pub fn record(&mut self, class: StepClass) {
        match class {
            StepClass::Null => self.null += 1,
            StepClass::ProductiveXy => self.xy += 1,
            StepClass::ProductiveBlank => self.blank += 1,
            StepClass::Leak => self.leaks += 1,
            StepClass::ByzContact => self.byz += 1,
        }
    }

    /// Non-null interaction steps (leaks excluded).
    pub fn productive(&self) -> u64 {
        self.xy + self.blank + self.byz
    }

    pub fn total(&self) -> u64 {
        self.null + self.xy + self.blank + self.leaks + self.byz
    }
}

/// Build the effective rule table for `kind` under `fault`.
pub fn protocol_for(kind: ProtocolKind, fault: &FaultSpec) -> Result<ProtocolSpec> {
    let spec = super::make_protocol(kind);
    if fault.byz_mode == ByzMode::SuperAdversarial {
        spec.with_super_adversarial()
    } else {
        Ok(spec)
    }
}

/// Check that a configuration, rule table and fault spec belong together.
pub fn validate_setup(cfg: &Configuration, spec: &ProtocolSpec, fault: &FaultSpec) -> Result<()> {
    fault.validate()?;
    if cfg.model() != spec.kind().model() {
        return Err(Error::InvalidConfig(format!(
            "protocol {} runs in the {} model, configuration is {}",
            spec.kind(),
            spec.kind().model(),
            cfg.model()
        )));
    }
    if cfg.count(AgentState::T) > 0 && !spec.is_super_adversarial() {
        return Err(Error::InvalidConfig(
            "T agents present but the rule table has no super-adversarial rule".into(),
        ));
    }
    if cfg.total() < spec.arity() as u64 {
        return Err(Error::PopulationTooSmall {
            needed: spec.arity() as u64,
            actual: cfg.total(),
        });
    }
    Ok(())
}

#[inline]
fn pick(counts: &[u64; NUM_SLOTS], mut r: u64) -> usize {
    for (i, &c) in counts.iter().enumerate() {
        if r < c {
            return i;
        }
        r -= c;
    }
    unreachable!("draw exceeds population")
}

/// Draw an ordered tuple of distinct agents uniformly at random.
pub fn sample_interaction<R: Rng + ?Sized>(
    cfg: &Configuration,
    arity: usize,
    rng: &mut R,
) -> Result<Tuple> {
    let total = cfg.total();
    if total < arity as u64 || !(1..=3).contains(&arity) {
        return Err(Error::PopulationTooSmall {
            needed: arity as u64,
            actual: total,
        });
    }
    Ok(draw(cfg.slots(), total, arity, rng))
}

#[inline]
fn draw<R: Rng + ?Sized>(slots: &[u64; NUM_SLOTS], total: u64, arity: usize, rng: &mut R) -> Tuple {
    let mut remaining = *slots;
    let mut picked = [Slot::Honest(AgentState::X); 3];
    for (k, p) in picked.iter_mut().enumerate().take(arity) {
        let i = pick(&remaining, rng.random_range(0..total - k as u64));
        remaining[i] -= 1;
        *p = Slot::from_index(i);
    }
    Tuple::new(&picked[..arity])
}

#[inline]
fn commit(cfg: &mut Configuration, before: &Tuple, after: &Tuple) {
    let slots = cfg.slots_mut();
    for s in before.as_slice() {
        slots[s.index()] -= 1;
    }
    for s in after.as_slice() {
        slots[s.index()] += 1;
    }
}

/// Advance `cfg` by one time step.
///
/// With probability `beta` one agent of the leak pool leaks; otherwise an
/// interaction is scheduled. Null steps still consume the step.
pub fn step<R: Rng + ?Sized>(
    cfg: &mut Configuration,
    spec: &ProtocolSpec,
    fault: &FaultSpec,
    rng: &mut R,
) -> StepOutcome {
    #[cfg(debug_assertions)]
    let snapshot = (
        cfg.total(),
        cfg.inputs(),
        cfg.count(AgentState::T),
        cfg.byz_stubborn_y(),
        cfg.workers(),
    );

    let beta = fault.effective_beta();
    // no coin is drawn without leaks, so beta = 0 matches a leak-free stream
    let outcome = if beta > 0.0 && rng.random::<f64>() < beta {
        leak_step(cfg, fault, rng)
    } else {
        let before = draw(cfg.slots(), cfg.total(), spec.arity(), rng);
        let (after, class) = apply_slots(spec, &before);
        if class != StepClass::Null {
            commit(cfg, &before, &after);
        }
        StepOutcome {
            class,
            before,
            after,
        }
    };

    #[cfg(debug_assertions)]
    {
        assert_eq!(cfg.total(), snapshot.0, "population size changed");
        assert_eq!(cfg.inputs(), snapshot.1, "catalyst count changed");
        assert_eq!(cfg.count(AgentState::T), snapshot.2, "T count changed");
        assert_eq!(cfg.byz_stubborn_y(), snapshot.3, "stubborn count changed");
        assert_eq!(cfg.workers(), snapshot.4, "worker count changed");
    }
    outcome
}

fn leak_step<R: Rng + ?Sized>(
    cfg: &mut Configuration,
    fault: &FaultSpec,
    rng: &mut R,
) -> StepOutcome {
    let slots = *cfg.slots();
    let pool_size = match fault.leak_pool {
        LeakPool::AllAgents => cfg.total(),
        LeakPool::WorkersOnly => cfg.workers(),
    };
    if pool_size == 0 {
        let t = Tuple::new(&[Slot::Honest(AgentState::B)]);
        return StepOutcome {
            class: StepClass::Leak,
            before: t,
            after: t,
        };
    }
    // workers occupy the first three slots, so a draw below `workers()`
    // lands on a worker in either pool
    let slot = Slot::from_index(pick(&slots, rng.random_range(0..pool_size)));
    let after = match slot {
        Slot::Honest(s) => Slot::Honest(leak(fault.leak_model, s)),
        Slot::StubbornY => Slot::StubbornY,
    };
    let before = Tuple::new(&[slot]);
    let after = Tuple::new(&[after]);
    commit(cfg, &before, &after);
    StepOutcome {
        class: StepClass::Leak,
        before,
        after,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StopRule {
    #[default]
    #[serde(rename = "convergence")]
    AtConvergence,
    #[serde(rename = "horizon")]
    AtHorizon,
}

/// Counts and counters at one checkpoint.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Checkpoint {
    pub step: u64,
    pub config: Configuration,
    pub counters: OutcomeCounters,
}

/// Outcome of one run.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RunRecord {
    pub steps_run: u64,
    /// The success predicate held at some step.
    pub converged: bool,
    pub steps_to_converge: Option<u64>,
    pub terminal: TerminalClass,
    pub final_config: Configuration,
    pub counters: OutcomeCounters,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RunOutput {
    pub record: RunRecord,
    pub trajectory: Vec<Checkpoint>,
}

/// Execute steps until convergence or `horizon`.
///
/// With [`StopRule::AtConvergence`] a fault-free run also stops early once
/// it is absorbed in a wrong consensus or a blank deadlock. Checkpoints are
/// taken at step 0, every `checkpoint_every` steps (0 disables), and at the
/// final step.
pub fn run<R: Rng + ?Sized>(
    mut cfg: Configuration,
    spec: &ProtocolSpec,
    fault: &FaultSpec,
    rng: &mut R,
    horizon: u64,
    stop: StopRule,
    checkpoint_every: u64,
) -> RunOutput {
    let mut counters = OutcomeCounters::default();
    let mut trajectory = vec![Checkpoint {
        step: 0,
        config: cfg.clone(),
        counters,
    }];
    let mut first_converged = spec.converged(&cfg).then_some(0);
    let fault_free = fault.effective_beta() == 0.0;
    let mut steps = 0;
    while steps < horizon {
        if stop == StopRule::AtConvergence
            && (first_converged.is_some()
                || (fault_free
                    && spec.terminal_class(&cfg) != TerminalClass::None
                    && spec.is_absorbing(&cfg)))
        {
            break;
        }
        let outcome = step(&mut cfg, spec, fault, rng);
        counters.record(outcome.class);
        steps += 1;
        if first_converged.is_none() && spec.converged(&cfg) {
            first_converged = Some(steps);
        }
        if checkpoint_every > 0 && steps % checkpoint_every == 0 {
            trajectory.push(Checkpoint {
                step: steps,
                config: cfg.clone(),
                counters,
            });
        }
    }
    if trajectory.last().map(|c| c.step) != Some(steps) {
        trajectory.push(Checkpoint {
            step: steps,
            config: cfg.clone(),
            counters,
        });
    }
    RunOutput {
        record: RunRecord {
            steps_run: steps,
            converged: first_converged.is_some(),
            steps_to_converge: first_converged,
            terminal: spec.terminal_class(&cfg),
            final_config: cfg,
            counters,
        },
        trajectory,
    }
}

/// Output observed by sampling one agent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SampleOutput {
    Maj,
    Min,
    Undecided,
}

/// Sample one honest worker uniformly (catalysts and Byzantine agents are
/// never sampled) and report its output, taking `X` as the majority.
pub fn sample_output<R: Rng + ?Sized>(cfg: &Configuration, rng: &mut R) -> Result<SampleOutput> {
    let w = cfg.workers();
    if w == 0 {
        return Err(Error::EmptyWorkerPool);
    }
    let r = rng.random_range(0..w);
    Ok(if r < cfg.x() {
        SampleOutput::Maj
    } else if r < cfg.x() + cfg.y() {
        SampleOutput::Min
    } else {
        SampleOutput::Undecided
    })
}
