use std::fmt;

use serde::{Deserialize, Serialize};

use super::state::AgentState;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeakModel {
    #[default]
    None,
    /// Every worker state leaks to `Y`.
    Adversarial,
    /// One degree less confident: `X -> B`, `B -> Y`.
    Weak,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeakPool {
    /// Any agent, catalysts and Byzantine agents acting as fixed points.
    #[default]
    #[serde(alias = "all")]
    AllAgents,
    /// Honest workers only.
    #[serde(alias = "workers")]
    WorkersOnly,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ByzMode {
    #[default]
    None,
    #[serde(alias = "stubborn")]
    StubbornY,
    #[serde(alias = "super")]
    SuperAdversarial,
}

macro_rules! text_enum {
    ($ty:ty { $($variant:path => $text:literal $(| $alias:literal)*),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $text),+ })
            }
        }

        impl std::str::FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text $(| $alias)* => Ok($variant),)+
                    other => Err(Error::Parse(format!(
                        concat!("unknown ", stringify!($ty), " `{}`"),
                        other
                    ))),
                }
            }
        }
    };
}

text_enum!(LeakModel {
    LeakModel::None => "none",
    LeakModel::Adversarial => "adversarial",
    LeakModel::Weak => "weak",
});

text_enum!(LeakPool {
    LeakPool::AllAgents => "all" | "all_agents",
    LeakPool::WorkersOnly => "workers" | "workers_only",
});

text_enum!(ByzMode {
    ByzMode::None => "none",
    ByzMode::StubbornY => "stubborn" | "stubborn_y",
    ByzMode::SuperAdversarial => "super" | "super_adversarial",
});

/// Leak model and Byzantine census of one run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub leak_model: LeakModel,
    pub beta: f64,
    pub leak_pool: LeakPool,
    pub byz_mode: ByzMode,
    pub byz_count: u64,
}

impl Default for FaultSpec {
    fn default() -> Self {
        Self::none()
    }
}

impl FaultSpec {
    pub fn none() -> Self {
        FaultSpec {
            leak_model: LeakModel::None,
            beta: 0.0,
            leak_pool: LeakPool::AllAgents,
            byz_mode: ByzMode::None,
            byz_count: 0,
        }
    }

    pub fn leaks(model: LeakModel, beta: f64) -> Self {
        FaultSpec {
            leak_model: model,
            beta,
            ..Self::none()
        }
    }

    pub fn with_pool(mut self, pool: LeakPool) -> Self {
        self.leak_pool = pool;
        self
    }

    pub fn with_byzantine(mut self, mode: ByzMode, count: u64) -> Self {
        self.byz_mode = mode;
        self.byz_count = count;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidConfig(format!(
                "leak rate {} outside [0, 1]",
                self.beta
            )));
        }
        if self.leak_model == LeakModel::None && self.beta > 0.0 {
            return Err(Error::InvalidConfig(
                "positive leak rate with leak model `none`".into(),
            ));
        }
        if self.byz_mode == ByzMode::None && self.byz_count > 0 {
            return Err(Error::InvalidConfig(
                "byzantine count given without a byzantine mode".into(),
            ));
        }
        Ok(())
    }

    /// Per-step leak probability actually in force.
    #[inline]
    pub fn effective_beta(&self) -> f64 {
        match self.leak_model {
            LeakModel::None => 0.0,
            _ => self.beta,
        }
    }

    /// No leaks and no Byzantine agents.
    pub fn is_fault_free(&self) -> bool {
        self.effective_beta() == 0.0 && (self.byz_mode == ByzMode::None || self.byz_count == 0)
    }
}

/// The leak function.
///
/// Persistent states (catalysts and `T`) are fixed points of every model.
pub fn leak(model: LeakModel, s: AgentState) -> AgentState {
    use AgentState::*;
    if s.is_persistent() {
        return s;
    }
    match model {
        LeakModel::None => s,
        LeakModel::Adversarial => Y,
        LeakModel::Weak => match s {
            X => B,
            _ => Y,
        },
    }
}
