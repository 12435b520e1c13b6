use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The state vocabulary shared by every rule table.
///
/// `Ix`, `Iy` are catalytic inputs and `T` marks a super-adversarial
/// Byzantine agent. All three are persistent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgentState {
    X,
    Y,
    B,
    Ix,
    Iy,
    T,
}

impl AgentState {
    pub const ALL: [AgentState; 6] = [
        AgentState::X,
        AgentState::Y,
        AgentState::B,
        AgentState::Ix,
        AgentState::Iy,
        AgentState::T,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn from_index(i: usize) -> AgentState {
        Self::ALL[i]
    }

    #[inline]
    pub fn is_persistent(self) -> bool {
        matches!(self, AgentState::Ix | AgentState::Iy | AgentState::T)
    }

    #[inline]
    pub fn is_worker(self) -> bool {
        matches!(self, AgentState::X | AgentState::Y | AgentState::B)
    }

    #[inline]
    pub fn is_catalyst(self) -> bool {
        matches!(self, AgentState::Ix | AgentState::Iy)
    }
}

impl fmt::Display for AgentState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentState::X => "X",
            AgentState::Y => "Y",
            AgentState::B => "B",
            AgentState::Ix => "I_X",
            AgentState::Iy => "I_Y",
            AgentState::T => "T",
        })
    }
}

/// One scheduled participant: an honest agent in some state, or a
/// stubborn-Y Byzantine agent that looks like `Y` but never updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Slot {
    Honest(AgentState),
    StubbornY,
}

/// Number of slot kinds in a [`Configuration`]: six states plus stubborn-Y.
pub const NUM_SLOTS: usize = 7;
const STUBBORN_SLOT: usize = 6;

impl Slot {
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Slot::Honest(s) => s.index(),
            Slot::StubbornY => STUBBORN_SLOT,
        }
    }

    #[inline]
    pub fn from_index(i: usize) -> Slot {
        if i == STUBBORN_SLOT {
            Slot::StubbornY
        } else {
            Slot::Honest(AgentState::from_index(i))
        }
    }

    /// The state other agents observe when interacting with this one.
    #[inline]
    pub fn apparent(self) -> AgentState {
        match self {
            Slot::Honest(s) => s,
            Slot::StubbornY => AgentState::Y,
        }
    }

    #[inline]
    pub fn is_byzantine(self) -> bool {
        matches!(self, Slot::StubbornY | Slot::Honest(AgentState::T))
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::Honest(s) => s.fmt(f),
            Slot::StubbornY => f.write_str("Y*"),
        }
    }
}

/// Population model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Standard,
    #[serde(alias = "catalytic")]
    Ci,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Standard => "standard",
            Model::Ci => "ci",
        })
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Model::Standard),
            "ci" | "catalytic" => Ok(Model::Ci),
            other => Err(Error::Parse(format!("unknown model `{other}`"))),
        }
    }
}

/// Exact per-state counts of the whole population.
///
/// Agents are anonymous, so the multiset of states is the whole simulation
/// state. Stubborn-Y Byzantine agents are tracked apart from honest `Y`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    model: Model,
    slots: [u64; NUM_SLOTS],
}

impl Configuration {
    /// An empty population in the given model.
    pub fn empty(model: Model) -> Self {
        Configuration {
            model,
            slots: [0; NUM_SLOTS],
        }
    }

    /// Standard-model population with the given opinion counts.
    pub fn standard(x: u64, y: u64, b: u64) -> Self {
        Self::empty(Model::Standard)
            .with(AgentState::X, x)
            .with(AgentState::Y, y)
            .with(AgentState::B, b)
    }

    /// Catalytic-input population with inputs `(ix, iy)` and workers `(x, y, b)`.
    pub fn catalytic(ix: u64, iy: u64, x: u64, y: u64, b: u64) -> Self {
        Self::empty(Model::Ci)
            .with(AgentState::Ix, ix)
            .with(AgentState::Iy, iy)
            .with(AgentState::X, x)
            .with(AgentState::Y, y)
            .with(AgentState::B, b)
    }

    pub fn with(mut self, state: AgentState, count: u64) -> Self {
        self.slots[state.index()] = count;
        self
    }

    pub fn with_stubborn_y(mut self, count: u64) -> Self {
        self.slots[STUBBORN_SLOT] = count;
        self
    }

    #[inline]
    pub fn model(&self) -> Model {
        self.model
    }

    #[inline]
    pub fn count(&self, state: AgentState) -> u64 {
        self.slots[state.index()]
    }

    #[inline]
    pub fn slot_count(&self, slot: Slot) -> u64 {
        self.slots[slot.index()]
    }

    #[inline]
    pub fn slots(&self) -> &[u64; NUM_SLOTS] {
        &self.slots
    }

    #[inline]
    pub(crate) fn slots_mut(&mut self) -> &mut [u64; NUM_SLOTS] {
        &mut self.slots
    }

    #[inline]
    pub fn x(&self) -> u64 {
        self.slots[0]
    }

    #[inline]
    pub fn y(&self) -> u64 {
        self.slots[1]
    }

    #[inline]
    pub fn b(&self) -> u64 {
        self.slots[2]
    }

    #[inline]
    pub fn byz_stubborn_y(&self) -> u64 {
        self.slots[STUBBORN_SLOT]
    }

    /// Byzantine agents of either kind.
    pub fn byzantine(&self) -> u64 {
        self.byz_stubborn_y() + self.count(AgentState::T)
    }

    /// Honest non-catalytic agents: `x + y + b`. This is `m` in the CI
    /// model and `n` in the standard model.
    #[inline]
    pub fn workers(&self) -> u64 {
        self.slots[0] + self.slots[1] + self.slots[2]
    }

    /// Catalytic input agents, `i_X + i_Y`.
    pub fn inputs(&self) -> u64 {
        self.count(AgentState::Ix) + self.count(AgentState::Iy)
    }

    /// Total population `N`, Byzantine agents included.
    #[inline]
    pub fn total(&self) -> u64 {
        self.slots.iter().sum()
    }

    /// Signed input margin `i_X - i_Y` (CI) or opinion margin `x - y` (standard).
    pub fn margin(&self) -> i64 {
        match self.model {
            Model::Ci => self.count(AgentState::Ix) as i64 - self.count(AgentState::Iy) as i64,
            Model::Standard => self.x() as i64 - self.y() as i64,
        }
    }
}

impl fmt::Debug for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        let mut first = true;
        for i in 0..NUM_SLOTS {
            if self.slots[i] == 0 {
                continue;
            }
            if !first {
                f.write_str(", ")?;
            }
            first = false;
            write!(f, "{}:{}", Slot::from_index(i), self.slots[i])?;
        }
        f.write_str("}")
    }
}

/// How worker agents start in [`init_configuration`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialWorkers {
    #[default]
    AllBlank,
    /// Workers split as evenly as possible between `X` and `Y`.
    Split,
}

/// Build the initial configuration for a run.
///
/// `margin` must have the parity of the opinion-carrying population (`n`)
/// so that both halves are integral.
pub fn init_configuration(
    model: Model,
    n_inputs: u64,
    m_workers: u64,
    margin: i64,
    initial_workers: InitialWorkers,
    fault: &super::FaultSpec,
) -> Result<Configuration> {
    if margin.unsigned_abs() > n_inputs {
        return Err(Error::InvalidConfig(format!(
            "margin {margin} exceeds population {n_inputs}"
        )));
    }
    if (n_inputs as i64 + margin).rem_euclid(2) != 0 {
        return Err(Error::InvalidConfig(format!(
            "margin {margin} and population {n_inputs} differ in parity"
        )));
    }
    let major = ((n_inputs as i64 + margin) / 2) as u64;
    let minor = ((n_inputs as i64 - margin) / 2) as u64;
    let mut cfg = match model {
        Model::Ci => {
            let (x, y, b) = match initial_workers {
                InitialWorkers::AllBlank => (0, 0, m_workers),
                InitialWorkers::Split => (m_workers.div_ceil(2), m_workers / 2, 0),
            };
            Configuration::catalytic(major, minor, x, y, b)
        }
        Model::Standard => {
            if m_workers != 0 {
                return Err(Error::InvalidConfig(
                    "worker agents exist only in the catalytic-input model".into(),
                ));
            }
            Configuration::standard(major, minor, 0)
        }
    };
    match fault.byz_mode {
        super::ByzMode::None => {
            if fault.byz_count != 0 {
                return Err(Error::InvalidConfig(
                    "byzantine count given without a byzantine mode".into(),
                ));
            }
        }
        super::ByzMode::StubbornY => cfg = cfg.with_stubborn_y(fault.byz_count),
        super::ByzMode::SuperAdversarial => cfg = cfg.with(AgentState::T, fault.byz_count),
    }
    Ok(cfg)
}
