use std::fmt;

use serde::{Deserialize, Serialize};

use super::state::{AgentState, Configuration, Model, Slot, NUM_SLOTS};
use crate::error::{Error, Result};

use AgentState::{Ix, Iy, B, T, X, Y};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    /// Tri-molecular `X+X+Y -> X+X+X`, `X+Y+Y -> Y+Y+Y`.
    Triam,
    /// Double-B third-state dynamics.
    Dbam,
    /// Double-B with catalytic inputs.
    Dbamc,
}

impl ProtocolKind {
    /// The population model the rule table is written for.
    pub fn model(self) -> Model {
        match self {
            ProtocolKind::Dbamc => Model::Ci,
            ProtocolKind::Triam | ProtocolKind::Dbam => Model::Standard,
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProtocolKind::Triam => "triam",
            ProtocolKind::Dbam => "dbam",
            ProtocolKind::Dbamc => "dbamc",
        })
    }
}

impl std::str::FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "triam" => Ok(ProtocolKind::Triam),
            "dbam" => Ok(ProtocolKind::Dbam),
            "dbamc" => Ok(ProtocolKind::Dbamc),
            other => Err(Error::Parse(format!("unknown protocol `{other}`"))),
        }
    }
}

/// Classification of one time step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StepClass {
    Null,
    /// `X+Y` (and the two tri-molecular reactions).
    ProductiveXy,
    /// `B+X`, `B+Y`, `B+I_X`, `B+I_Y`.
    ProductiveBlank,
    Leak,
    /// A state change caused by contact with a Byzantine agent.
    ByzContact,
}

/// Absorbing classes of a fault-free run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TerminalClass {
    AllX,
    AllY,
    AllBlankDeadlock,
    /// Not an absorbing consensus.
    None,
}

impl TerminalClass {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminalClass::AllX => "ALL_X",
            TerminalClass::AllY => "ALL_Y",
            TerminalClass::AllBlankDeadlock => "ALL_BLANK_DEADLOCK",
            TerminalClass::None => "NONE",
        }
    }
}

impl fmt::Display for TerminalClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TerminalClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ALL_X" => Ok(TerminalClass::AllX),
            "ALL_Y" => Ok(TerminalClass::AllY),
            "ALL_BLANK_DEADLOCK" => Ok(TerminalClass::AllBlankDeadlock),
            "NONE" => Ok(TerminalClass::None),
            other => Err(Error::Parse(format!("unknown terminal class `{other}`"))),
        }
    }
}

/// A fixed-capacity ordered tuple of up to three participants.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tuple {
    slots: [Slot; 3],
    len: u8,
}

impl Tuple {
    pub fn new(slots: &[Slot]) -> Self {
        assert!((1..=3).contains(&slots.len()), "tuples hold 1 to 3 agents");
        let mut buf = [Slot::Honest(X); 3];
        buf[..slots.len()].copy_from_slice(slots);
        Tuple {
            slots: buf,
            len: slots.len() as u8,
        }
    }

    pub fn from_states(states: &[AgentState]) -> Self {
        let slots: Vec<Slot> = states.iter().map(|&s| Slot::Honest(s)).collect();
        Self::new(&slots)
    }

    #[inline]
    pub fn as_slice(&self) -> &[Slot] {
        &self.slots[..self.len as usize]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Honest states of the tuple, with stubborn agents shown as `Y`.
    pub fn states(&self) -> Vec<AgentState> {
        self.as_slice().iter().map(|s| s.apparent()).collect()
    }
}

impl fmt::Debug for Tuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, s) in self.as_slice().iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{s}")?;
        }
        f.write_str(")")
    }
}

const TABLE_LEN: usize = 6 * 6 * 6;

/// A rule table plus the convergence predicate of one protocol.
///
/// Tuples absent from the table are null interactions.
#[derive(Clone)]
pub struct ProtocolSpec {
    kind: ProtocolKind,
    arity: usize,
    table: Vec<Option<[AgentState; 3]>>,
    super_adversarial: bool,
}

fn encode(states: &[AgentState]) -> usize {
    states.iter().fold(0, |acc, s| acc * 6 + s.index())
}

fn decode(mut code: usize, arity: usize) -> Vec<AgentState> {
    let mut out = vec![X; arity];
    for slot in out.iter_mut().rev() {
        *slot = AgentState::from_index(code % 6);
        code /= 6;
    }
    out
}

impl ProtocolSpec {
    fn empty(kind: ProtocolKind, arity: usize) -> Self {
        ProtocolSpec {
            kind,
            arity,
            table: vec![None; TABLE_LEN],
            super_adversarial: false,
        }
    }

    fn insert(&mut self, from: &[AgentState], to: &[AgentState]) {
        debug_assert_eq!(from.len(), self.arity);
        let mut img = [X; 3];
        img[..to.len()].copy_from_slice(to);
        self.table[encode(from)] = Some(img);
    }

    /// Insert a pairwise rule together with its initiator/responder swap.
    fn insert_symmetric(&mut self, a: AgentState, b: AgentState, c: AgentState, d: AgentState) {
        self.insert(&[a, b], &[c, d]);
        self.insert(&[b, a], &[d, c]);
    }

    fn validate(&self) -> Result<()> {
        for (from, to) in self.rules() {
            for (s, t) in from.iter().zip(&to) {
                if s.is_persistent() && s != t {
                    return Err(Error::InvalidProtocol(format!(
                        "rule {from:?} -> {to:?} changes persistent state {s}"
                    )));
                }
            }
            if self.arity == 2 {
                let swapped = [from[1], from[0]];
                let expect = [to[1], to[0]];
                if self.lookup(&swapped) != Some(&expect[..]) {
                    return Err(Error::InvalidProtocol(format!(
                        "rule {from:?} -> {to:?} is not symmetric"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> ProtocolKind {
        self.kind
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn is_super_adversarial(&self) -> bool {
        self.super_adversarial
    }

    /// Add `T + s -> T + Y` for every non-catalytic, non-`T` state `s`.
    pub fn with_super_adversarial(mut self) -> Result<Self> {
        if self.arity != 2 {
            return Err(Error::InvalidProtocol(
                "super-adversarial agents need a pairwise protocol".into(),
            ));
        }
        // T + Y -> T + Y is the identity, so only X and B need entries
        for s in [X, B] {
            self.insert_symmetric(T, s, T, Y);
        }
        self.super_adversarial = true;
        self.validate()?;
        Ok(self)
    }

    /// Rule image for an ordered tuple of states, if any rule matches.
    #[inline]
    pub fn lookup(&self, tuple: &[AgentState]) -> Option<&[AgentState]> {
        if tuple.len() != self.arity {
            return None;
        }
        self.table[encode(tuple)]
            .as_ref()
            .map(|img| &img[..self.arity])
    }

    /// Every ordered tuple with a rule, in table order.
    pub fn rules(&self) -> Vec<(Vec<AgentState>, Vec<AgentState>)> {
        let span = 6usize.pow(self.arity as u32);
        (0..span)
            .filter_map(|code| {
                self.table[code].map(|img| (decode(code, self.arity), img[..self.arity].to_vec()))
            })
            .collect()
    }

    /// The protocol's success predicate.
    pub fn converged(&self, cfg: &Configuration) -> bool {
        match self.kind {
            ProtocolKind::Triam => cfg.y() == 0 || cfg.x() == 0,
            ProtocolKind::Dbam | ProtocolKind::Dbamc => cfg.x() == cfg.workers(),
        }
    }

    /// Whether any scheduled interaction can change `cfg`.
    pub fn is_absorbing(&self, cfg: &Configuration) -> bool {
        let c = cfg.slots();
        let present: Vec<usize> = (0..NUM_SLOTS).filter(|&i| c[i] > 0).collect();
        let mut idx = [0usize; 3];
        let arity = self.arity;
        // every ordered tuple of slot kinds realizable by distinct agents
        let combos = present.len().pow(arity as u32);
        for mut code in 0..combos {
            let mut used = [0u64; NUM_SLOTS];
            let mut ok = true;
            for k in (0..arity).rev() {
                idx[k] = present[code % present.len()];
                code /= present.len();
            }
            for &i in &idx[..arity] {
                used[i] += 1;
                if used[i] > c[i] {
                    ok = false;
                }
            }
            if !ok {
                continue;
            }
            let slots: Vec<Slot> = idx[..arity].iter().map(|&i| Slot::from_index(i)).collect();
            let (_, class) = apply_slots(self, &Tuple::new(&slots));
            if class != StepClass::Null {
                return false;
            }
        }
        true
    }

    /// Consensus class of the honest workers, reported only when the
    /// configuration admits no further interaction-driven change for
    /// blank deadlocks.
    pub fn terminal_class(&self, cfg: &Configuration) -> TerminalClass {
        let w = cfg.workers();
        if w == 0 {
            return TerminalClass::None;
        }
        if cfg.x() == w {
            TerminalClass::AllX
        } else if cfg.y() == w {
            TerminalClass::AllY
        } else if cfg.b() == w && self.is_absorbing(cfg) {
            TerminalClass::AllBlankDeadlock
        } else {
            TerminalClass::None
        }
    }
}

impl fmt::Debug for ProtocolSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProtocolSpec")
            .field("kind", &self.kind)
            .field("arity", &self.arity)
            .field("rules", &self.rules())
            .finish()
    }
}

/// Exact rule table for `kind`.
pub fn make_protocol(kind: ProtocolKind) -> ProtocolSpec {
    let spec = match kind {
        ProtocolKind::Triam => {
            let mut spec = ProtocolSpec::empty(kind, 3);
            // all orderings of the two reactions
            for code in 0..TABLE_LEN {
                let t = decode(code, 3);
                if t.iter().any(|s| !matches!(s, X | Y)) {
                    continue;
                }
                let xs = t.iter().filter(|&&s| s == X).count();
                match xs {
                    2 => spec.insert(&t, &[X, X, X]),
                    1 => spec.insert(&t, &[Y, Y, Y]),
                    _ => {}
                }
            }
            spec
        }
        ProtocolKind::Dbam | ProtocolKind::Dbamc => {
            let mut spec = ProtocolSpec::empty(kind, 2);
            spec.insert_symmetric(X, Y, B, B);
            spec.insert_symmetric(X, B, X, X);
            spec.insert_symmetric(Y, B, Y, Y);
            if kind == ProtocolKind::Dbamc {
                spec.insert_symmetric(Ix, B, Ix, X);
                spec.insert_symmetric(Iy, B, Iy, Y);
            }
            spec
        }
    };
    spec.validate()
        .expect("built-in rule tables are well formed");
    spec
}

/// Apply `spec` to an ordered tuple of honest states.
pub fn apply_rule(spec: &ProtocolSpec, tuple: &[AgentState]) -> (Vec<AgentState>, StepClass) {
    let (after, class) = apply_slots(spec, &Tuple::from_states(tuple));
    (after.states(), class)
}

/// Apply `spec` to scheduled participants. Stubborn agents act as `Y`
/// but keep their state.
#[inline]
pub fn apply_slots(spec: &ProtocolSpec, tuple: &Tuple) -> (Tuple, StepClass) {
    let before = tuple.as_slice();
    if before.len() != spec.arity {
        return (*tuple, StepClass::Null);
    }
    let mut apparent = [X; 3];
    for (a, s) in apparent.iter_mut().zip(before) {
        *a = s.apparent();
    }
    let Some(img) = spec.lookup(&apparent[..before.len()]) else {
        return (*tuple, StepClass::Null);
    };
    let mut after = *tuple;
    let mut changed = false;
    let mut byz = false;
    let mut blank = false;
    for (k, slot) in before.iter().enumerate() {
        byz |= slot.is_byzantine();
        if let Slot::Honest(s) = slot {
            if *s != img[k] {
                changed = true;
                blank |= *s == B;
                after.slots[k] = Slot::Honest(img[k]);
            }
        }
    }
    let class = if !changed {
        StepClass::Null
    } else if byz {
        StepClass::ByzContact
    } else if blank {
        StepClass::ProductiveBlank
    } else {
        StepClass::ProductiveXy
    };
    (after, class)
}
