//! Exact Markov chain of the counts process for small populations.

use std::collections::{BTreeMap, HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};

use crate::engine::{
    apply_slots, leak, validate_setup, AgentState, Configuration, FaultSpec, LeakPool,
    ProtocolSpec, Slot, StepClass, TerminalClass, Tuple, NUM_SLOTS,
};
use crate::error::{Error, Result};

/// Largest population the exact oracle accepts.
pub const MAX_ORACLE_AGENTS: u64 = 20;

/// Longest horizon accepted by [`finite_horizon_distribution`].
pub const MAX_HORIZON: u64 = 1_000_000;

/// Probability mapping over configurations.
pub type Distribution = BTreeMap<Configuration, f64>;

fn guard(cfg: &Configuration) -> Result<()> {
    if cfg.total() > MAX_ORACLE_AGENTS {
        return Err(Error::OracleTooLarge {
            limit: MAX_ORACLE_AGENTS,
            actual: cfg.total(),
        });
    }
    Ok(())
}

/// Every configuration sharing the conserved totals of a template.
///
/// Inputs, `T` agents and stubborn agents never change, and the honest
/// worker count is fixed, so the state space is the set of `(x, y, b)`
/// splits of the worker count.
#[derive(Clone, Debug)]
pub struct ChainIndex {
    configs: Vec<Configuration>,
    index: HashMap<Configuration, usize>,
}

impl ChainIndex {
    pub fn new(template: &Configuration) -> Result<Self> {
        guard(template)?;
        let w = template.workers();
        let mut configs = Vec::new();
        for x in 0..=w {
            for y in 0..=w - x {
                let b = w - x - y;
                configs.push(
                    template
                        .clone()
                        .with(AgentState::X, x)
                        .with(AgentState::Y, y)
                        .with(AgentState::B, b),
                );
            }
        }
        let index = configs
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        Ok(ChainIndex { configs, index })
    }

    pub fn configs(&self) -> &[Configuration] {
        &self.configs
    }

    pub fn index_of(&self, cfg: &Configuration) -> Option<usize> {
        self.index.get(cfg).copied()
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }
}

fn successor(cfg: &Configuration, before: &[Slot], after: &[Slot]) -> Configuration {
    let mut next = cfg.clone();
    let slots = next.slots_mut();
    for s in before {
        slots[s.index()] -= 1;
    }
    for s in after {
        slots[s.index()] += 1;
    }
    next
}

fn add(dist: &mut Distribution, cfg: Configuration, p: f64) {
    if p > 0.0 {
        *dist.entry(cfg).or_insert(0.0) += p;
    }
}

/// One-step transition probabilities out of `cfg`.
///
/// Every ordered tuple of distinct agents is equally likely; tuples are
/// grouped by their slot kinds and weighted by how many agent tuples
/// realise each kind sequence.
pub fn step_distribution(
    cfg: &Configuration,
    spec: &ProtocolSpec,
    fault: &FaultSpec,
) -> Result<Distribution> {
    guard(cfg)?;
    validate_setup(cfg, spec, fault)?;
    let beta = fault.effective_beta();
    let mut dist = Distribution::new();

    if beta < 1.0 {
        let arity = spec.arity();
        let total = cfg.total();
        let denom: u64 = (0..arity as u64).map(|k| total - k).product();
        let counts = cfg.slots();
        let mut kinds = [0usize; 3];
        let combos = NUM_SLOTS.pow(arity as u32);
        for mut code in 0..combos {
            for k in (0..arity).rev() {
                kinds[k] = code % NUM_SLOTS;
                code /= NUM_SLOTS;
            }
            let mut remaining = *counts;
            let mut weight = 1u64;
            for &i in &kinds[..arity] {
                weight *= remaining[i];
                remaining[i] = remaining[i].saturating_sub(1);
            }
            if weight == 0 {
                continue;
            }
            let before: Vec<Slot> = kinds[..arity]
                .iter()
                .map(|&i| Slot::from_index(i))
                .collect();
            let (after, class) = apply_slots(spec, &Tuple::new(&before));
            let p = (1.0 - beta) * weight as f64 / denom as f64;
            let next = if class == StepClass::Null {
                cfg.clone()
            } else {
                successor(cfg, &before, after.as_slice())
            };
            add(&mut dist, next, p);
        }
    }

    if beta > 0.0 {
        let pool = match fault.leak_pool {
            LeakPool::AllAgents => cfg.total(),
            LeakPool::WorkersOnly => cfg.workers(),
        };
        if pool == 0 {
            add(&mut dist, cfg.clone(), beta);
        } else {
            let limit = match fault.leak_pool {
                LeakPool::AllAgents => NUM_SLOTS,
                LeakPool::WorkersOnly => 3,
            };
            for i in 0..limit {
                let c = cfg.slots()[i];
                if c == 0 {
                    continue;
                }
                let slot = Slot::from_index(i);
                let after = match slot {
                    Slot::Honest(s) => Slot::Honest(leak(fault.leak_model, s)),
                    Slot::StubbornY => Slot::StubbornY,
                };
                let p = beta * c as f64 / pool as f64;
                add(&mut dist, successor(cfg, &[slot], &[after]), p);
            }
        }
    }
    Ok(dist)
}

/// Configurations reachable from `init`, with their transition rows.
struct Kernel {
    states: Vec<Configuration>,
    rows: Vec<Vec<(usize, f64)>>,
}

fn reachable_kernel(
    init: &Configuration,
    spec: &ProtocolSpec,
    fault: &FaultSpec,
) -> Result<Kernel> {
    let space = ChainIndex::new(init)?;
    let mut local: HashMap<usize, usize> = HashMap::new();
    let mut states = Vec::new();
    let mut rows = Vec::new();
    let mut queue = VecDeque::new();

    let start = space
        .index_of(init)
        .expect("template lies in its own state space");
    local.insert(start, 0);
    states.push(init.clone());
    queue.push_back(0usize);
    while let Some(i) = queue.pop_front() {
        let dist = step_distribution(&states[i], spec, fault)?;
        let mut row = Vec::with_capacity(dist.len());
        for (next, p) in dist {
            let global = space
                .index_of(&next)
                .expect("transitions conserve the chain totals");
            let j = *local.entry(global).or_insert_with(|| {
                states.push(next.clone());
                queue.push_back(states.len() - 1);
                states.len() - 1
            });
            row.push((j, p));
        }
        if rows.len() <= i {
            rows.resize(i + 1, Vec::new());
        }
        rows[i] = row;
    }
    Ok(Kernel { states, rows })
}

/// Probability of ending in each absorbing class, starting from `init`.
///
/// Only defined without leaks; absorbing configurations that are not a
/// consensus or blank deadlock are reported under [`TerminalClass::None`].
pub fn absorption_probabilities(
    init: &Configuration,
    spec: &ProtocolSpec,
    fault: &FaultSpec,
) -> Result<BTreeMap<TerminalClass, f64>> {
    if fault.effective_beta() > 0.0 {
        return Err(Error::NotAbsorbing(fault.effective_beta()));
    }
    let kernel = reachable_kernel(init, spec, fault)?;
    let absorbing: Vec<bool> = kernel.states.iter().map(|c| spec.is_absorbing(c)).collect();
    let class_of = |i: usize| spec.terminal_class(&kernel.states[i]);

    let mut out = BTreeMap::new();
    if absorbing[0] {
        out.insert(class_of(0), 1.0);
        return Ok(out);
    }

    let transient: Vec<usize> = (0..kernel.states.len())
        .filter(|&i| !absorbing[i])
        .collect();
    let mut pos = vec![usize::MAX; kernel.states.len()];
    for (k, &i) in transient.iter().enumerate() {
        pos[i] = k;
    }
    let t = transient.len();
    // (I - Q) h = r, one right-hand side column per class
    let classes: Vec<TerminalClass> = {
        let mut v: Vec<TerminalClass> = (0..kernel.states.len())
            .filter(|&i| absorbing[i])
            .map(class_of)
            .collect();
        v.sort();
        v.dedup();
        v
    };
    let mut a = DMatrix::<f64>::identity(t, t);
    let mut r = DMatrix::<f64>::zeros(t, classes.len());
    for (k, &i) in transient.iter().enumerate() {
        for &(j, p) in &kernel.rows[i] {
            if absorbing[j] {
                let c = classes.binary_search(&class_of(j)).unwrap();
                r[(k, c)] += p;
            } else {
                a[(k, pos[j])] -= p;
            }
        }
    }
    let h = a
        .lu()
        .solve(&r)
        .ok_or_else(|| Error::Domain("chain has a closed class without absorption".into()))?;
    let start = pos[0];
    for (c, class) in classes.iter().enumerate() {
        out.insert(*class, h[(start, c)].clamp(0.0, 1.0));
    }
    Ok(out)
}

/// Distribution of the configuration after exactly `horizon` steps.
pub fn finite_horizon_distribution(
    init: &Configuration,
    spec: &ProtocolSpec,
    fault: &FaultSpec,
    horizon: u64,
) -> Result<Distribution> {
    if horizon > MAX_HORIZON {
        return Err(Error::Domain(format!(
            "horizon {horizon} exceeds {MAX_HORIZON} steps"
        )));
    }
    guard(init)?;
    validate_setup(init, spec, fault)?;
    if horizon == 0 {
        return Ok(Distribution::from([(init.clone(), 1.0)]));
    }
    let kernel = reachable_kernel(init, spec, fault)?;
    let mut mass = DVector::<f64>::zeros(kernel.states.len());
    mass[0] = 1.0;
    let mut next = DVector::<f64>::zeros(kernel.states.len());
    for _ in 0..horizon {
        next.fill(0.0);
        for (i, row) in kernel.rows.iter().enumerate() {
            let m = mass[i];
            if m == 0.0 {
                continue;
            }
            for &(j, p) in row {
                next[j] += m * p;
            }
        }
        std::mem::swap(&mut mass, &mut next);
    }
    Ok(kernel
        .states
        .into_iter()
        .zip(mass.iter())
        .filter(|(_, &m)| m > 0.0)
        .map(|(c, &m)| (c, m))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{make_protocol, protocol_for, ByzMode, LeakModel, ProtocolKind};

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn dbam_step_example() {
        let spec = make_protocol(ProtocolKind::Dbam);
        let d = step_distribution(&Configuration::standard(2, 1, 1), &spec, &FaultSpec::none())
            .unwrap();
        // X+Y -> B+B, X+B -> X+X, Y+B -> Y+Y, X+X null
        assert!(close(d[&Configuration::standard(1, 0, 3)], 1.0 / 3.0));
        assert!(close(d[&Configuration::standard(3, 1, 0)], 1.0 / 3.0));
        assert!(close(d[&Configuration::standard(2, 2, 0)], 1.0 / 6.0));
        assert!(close(d[&Configuration::standard(2, 1, 1)], 1.0 / 6.0));
        assert_eq!(d.len(), 4);
    }

    #[test]
    fn trivial_steps() {
        let spec = make_protocol(ProtocolKind::Dbam);
        let d = step_distribution(&Configuration::standard(2, 0, 0), &spec, &FaultSpec::none())
            .unwrap();
        assert_eq!(d.len(), 1);
        assert!(close(d[&Configuration::standard(2, 0, 0)], 1.0));

        let forced = FaultSpec::leaks(LeakModel::Adversarial, 1.0);
        let d = step_distribution(&Configuration::standard(3, 0, 0), &spec, &forced).unwrap();
        assert_eq!(d.len(), 1);
        assert!(close(d[&Configuration::standard(2, 1, 0)], 1.0));
    }

    #[test]
    fn guard_rejects_large_populations() {
        let spec = make_protocol(ProtocolKind::Dbam);
        let err = step_distribution(
            &Configuration::standard(21, 0, 0),
            &spec,
            &FaultSpec::none(),
        );
        assert!(matches!(err, Err(Error::OracleTooLarge { actual: 21, .. })));
    }

    #[test]
    fn chain_index_is_exhaustive() {
        let idx = ChainIndex::new(&Configuration::catalytic(2, 1, 1, 1, 2)).unwrap();
        // splits of 4 workers into three states
        assert_eq!(idx.len(), 15);
        for (i, c) in idx.configs().iter().enumerate() {
            assert_eq!(idx.index_of(c), Some(i));
            assert_eq!(c.workers(), 4);
            assert_eq!(c.inputs(), 3);
        }
    }

    #[test]
    fn absorption_examples() {
        let dbam = make_protocol(ProtocolKind::Dbam);
        let none = FaultSpec::none();
        let p = absorption_probabilities(&Configuration::standard(1, 1, 0), &dbam, &none).unwrap();
        assert!(close(p[&TerminalClass::AllBlankDeadlock], 1.0));
        let p = absorption_probabilities(&Configuration::standard(4, 0, 0), &dbam, &none).unwrap();
        assert!(close(p[&TerminalClass::AllX], 1.0));

        let dbamc = make_protocol(ProtocolKind::Dbamc);
        let p = absorption_probabilities(&Configuration::catalytic(1, 0, 0, 0, 1), &dbamc, &none)
            .unwrap();
        assert!(close(p[&TerminalClass::AllX], 1.0));
    }

    #[test]
    fn absorption_symmetry_and_mass() {
        let dbam = make_protocol(ProtocolKind::Dbam);
        let none = FaultSpec::none();
        let p = absorption_probabilities(&Configuration::standard(3, 3, 0), &dbam, &none).unwrap();
        let total: f64 = p.values().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((p[&TerminalClass::AllX] - p[&TerminalClass::AllY]).abs() < 1e-12);

        let p = absorption_probabilities(&Configuration::standard(5, 2, 1), &dbam, &none).unwrap();
        assert!(p[&TerminalClass::AllX] > p[&TerminalClass::AllY]);
    }

    #[test]
    fn absorption_rejects_leaks() {
        let dbam = make_protocol(ProtocolKind::Dbam);
        let fault = FaultSpec::leaks(LeakModel::Weak, 0.1);
        let err = absorption_probabilities(&Configuration::standard(2, 1, 0), &dbam, &fault);
        assert!(matches!(err, Err(Error::NotAbsorbing(_))));
    }

    #[test]
    fn byzantine_chains_end_in_y() {
        let fault = FaultSpec::none().with_byzantine(ByzMode::StubbornY, 1);
        let dbam = protocol_for(ProtocolKind::Dbam, &fault).unwrap();
        let init = Configuration::standard(3, 0, 0).with_stubborn_y(1);
        let p = absorption_probabilities(&init, &dbam, &fault).unwrap();
        assert!(close(p[&TerminalClass::AllY], 1.0));

        let fault = FaultSpec::none().with_byzantine(ByzMode::SuperAdversarial, 1);
        let dbamc = protocol_for(ProtocolKind::Dbamc, &fault).unwrap();
        let init = Configuration::catalytic(3, 0, 2, 0, 1).with(AgentState::T, 1);
        let p = absorption_probabilities(&init, &dbamc, &fault).unwrap();
        assert!(close(p[&TerminalClass::AllY], 1.0));
    }

    #[test]
    fn finite_horizon_examples() {
        let dbam = make_protocol(ProtocolKind::Dbam);
        let none = FaultSpec::none();
        let init = Configuration::standard(1, 1, 0);
        let d = finite_horizon_distribution(&init, &dbam, &none, 0).unwrap();
        assert_eq!(d, Distribution::from([(init.clone(), 1.0)]));
        let d = finite_horizon_distribution(&init, &dbam, &none, 1).unwrap();
        assert!(close(d[&Configuration::standard(0, 0, 2)], 1.0));

        let dbamc = make_protocol(ProtocolKind::Dbamc);
        let d =
            finite_horizon_distribution(&Configuration::catalytic(1, 1, 0, 0, 2), &dbamc, &none, 1)
                .unwrap();
        assert!(close(
            d[&Configuration::catalytic(1, 1, 1, 0, 1)],
            1.0 / 3.0
        ));
        assert!(close(
            d[&Configuration::catalytic(1, 1, 0, 1, 1)],
            1.0 / 3.0
        ));
        assert!(close(
            d[&Configuration::catalytic(1, 1, 0, 0, 2)],
            1.0 / 3.0
        ));
    }

    #[test]
    fn finite_horizon_keeps_mass_under_leaks() {
        let dbamc = make_protocol(ProtocolKind::Dbamc);
        let fault = FaultSpec::leaks(LeakModel::Weak, 0.05);
        let d = finite_horizon_distribution(
            &Configuration::catalytic(3, 2, 0, 0, 5),
            &dbamc,
            &fault,
            500,
        )
        .unwrap();
        assert!((d.values().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(finite_horizon_distribution(
            &Configuration::catalytic(3, 2, 0, 0, 5),
            &dbamc,
            &fault,
            MAX_HORIZON + 1
        )
        .is_err());
    }
}
