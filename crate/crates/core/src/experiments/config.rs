use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::de::{self, Deserializer};
use serde::Deserialize;

use crate::engine::{
    ByzMode, FaultSpec, InitialWorkers, LeakModel, LeakPool, Model, ProtocolKind, StopRule,
};
use crate::error::{Error, Result};

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("bad {what} `{s}`")))
}

/// Text inside `name(...)`, case-insensitive on the name.
fn call_arg<'a>(s: &'a str, name: &str) -> Option<&'a str> {
    let s = s.trim();
    let open = s.find('(')?;
    if !s[..open].trim().eq_ignore_ascii_case(name) || !s.ends_with(')') {
        return None;
    }
    Some(&s[open + 1..s.len() - 1])
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumOrText {
    Int(i64),
    Float(f64),
    Text(String),
}

/// Initial input margin `i_X - i_Y` (or `x - y` in the standard model).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MarginSpec {
    Fixed(i64),
    /// Smallest integer `≥ α √(N ln N)` with the parity of the input count.
    Auto(f64),
}

impl MarginSpec {
    /// Resolve against `n` inputs in a population of `pop` honest agents.
    pub fn resolve(&self, n_inputs: u64, pop: u64) -> Result<i64> {
        match *self {
            MarginSpec::Fixed(m) => Ok(m),
            MarginSpec::Auto(alpha) => {
                if alpha.is_nan() || alpha <= 0.0 {
                    return Err(Error::InvalidConfig(format!("auto margin factor {alpha}")));
                }
                let n = pop as f64;
                let target = if pop > 1 {
                    alpha * (n * n.ln()).sqrt()
                } else {
                    0.0
                };
                let mut m = target.ceil().max(0.0) as i64;
                if (m - n_inputs as i64).rem_euclid(2) != 0 {
                    m += 1;
                }
                if m.unsigned_abs() > n_inputs {
                    return Err(Error::InvalidConfig(format!(
                        "auto margin {m} exceeds {n_inputs} inputs"
                    )));
                }
                Ok(m)
            }
        }
    }
}

impl fmt::Display for MarginSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarginSpec::Fixed(m) => write!(f, "{m}"),
            MarginSpec::Auto(a) if *a == 1.0 => f.write_str("auto"),
            MarginSpec::Auto(a) => write!(f, "auto({a})"),
        }
    }
}

impl FromStr for MarginSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("auto") {
            return Ok(MarginSpec::Auto(1.0));
        }
        if let Some(arg) = call_arg(t, "auto") {
            return Ok(MarginSpec::Auto(parse_f64(arg, "margin factor")?));
        }
        t.parse::<i64>()
            .map(MarginSpec::Fixed)
            .map_err(|_| Error::Parse(format!("bad margin `{s}`")))
    }
}

impl<'de> Deserialize<'de> for MarginSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match NumOrText::deserialize(d)? {
            NumOrText::Int(m) => Ok(MarginSpec::Fixed(m)),
            NumOrText::Float(v) => Err(de::Error::custom(format!("margin {v} is not an integer"))),
            NumOrText::Text(s) => s.parse().map_err(de::Error::custom),
        }
    }
}

/// Number of steps a run may take.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HorizonSpec {
    Steps(u64),
    /// `⌈f · N ln N⌉` for a population of `N` agents.
    MultNLogN(f64),
}

impl HorizonSpec {
    pub fn resolve(&self, pop: u64) -> u64 {
        match *self {
            HorizonSpec::Steps(s) => s,
            HorizonSpec::MultNLogN(f) => {
                let n = pop as f64;
                (f * n * n.max(1.0).ln()).ceil() as u64
            }
        }
    }
}

impl fmt::Display for HorizonSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HorizonSpec::Steps(s) => write!(f, "{s}"),
            HorizonSpec::MultNLogN(k) => write!(f, "{k}nlogn"),
        }
    }
}

impl FromStr for HorizonSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let lower = t.to_ascii_lowercase();
        if let Some(arg) = call_arg(t, "mult_nlogn") {
            return Ok(HorizonSpec::MultNLogN(parse_f64(arg, "horizon factor")?));
        }
        if let Some(factor) = lower.strip_suffix("nlogn") {
            let f = if factor.is_empty() {
                1.0
            } else {
                parse_f64(factor, "horizon factor")?
            };
            return Ok(HorizonSpec::MultNLogN(f));
        }
        t.parse::<u64>()
            .map(HorizonSpec::Steps)
            .map_err(|_| Error::Parse(format!("bad horizon `{s}`")))
    }
}

impl<'de> Deserialize<'de> for HorizonSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match NumOrText::deserialize(d)? {
            NumOrText::Int(s) if s >= 0 => Ok(HorizonSpec::Steps(s as u64)),
            NumOrText::Int(s) => Err(de::Error::custom(format!("negative horizon {s}"))),
            NumOrText::Float(v) => Err(de::Error::custom(format!("horizon {v} is not an integer"))),
            NumOrText::Text(s) => s.parse().map_err(de::Error::custom),
        }
    }
}

/// Leak rate, either literal or scaled by the honest population `N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BetaSpec {
    Value(f64),
    /// `1/N`
    InvN,
    /// `ln N / N`
    LnNOverN,
    /// `√(N ln N) / (8N)`
    SqrtNLnNOver8N,
}

impl BetaSpec {
    pub fn resolve(&self, pop: u64) -> f64 {
        let n = pop as f64;
        match *self {
            BetaSpec::Value(b) => b,
            BetaSpec::InvN => 1.0 / n,
            BetaSpec::LnNOverN => n.ln() / n,
            BetaSpec::SqrtNLnNOver8N => (n * n.ln()).sqrt() / (8.0 * n),
        }
    }
}

impl fmt::Display for BetaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BetaSpec::Value(b) => write!(f, "{b}"),
            BetaSpec::InvN => f.write_str("1/N"),
            BetaSpec::LnNOverN => f.write_str("lnN/N"),
            BetaSpec::SqrtNLnNOver8N => f.write_str("sqrt(NlnN)/(8N)"),
        }
    }
}

impl FromStr for BetaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        match compact.as_str() {
            "1/N" => Ok(BetaSpec::InvN),
            "lnN/N" | "ln(N)/N" => Ok(BetaSpec::LnNOverN),
            "sqrt(NlnN)/(8N)" | "sqrt(N*lnN)/(8*N)" => Ok(BetaSpec::SqrtNLnNOver8N),
            other => parse_f64(other, "leak rate").map(BetaSpec::Value),
        }
    }
}

impl<'de> Deserialize<'de> for BetaSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match NumOrText::deserialize(d)? {
            NumOrText::Int(v) => Ok(BetaSpec::Value(v as f64)),
            NumOrText::Float(v) => Ok(BetaSpec::Value(v)),
            NumOrText::Text(s) => s.parse().map_err(de::Error::custom),
        }
    }
}

/// Checkpoint spacing of recorded trajectories.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum CheckpointSpec {
    /// Every this many steps; 0 records only the endpoints.
    Every(u64),
    /// About 200 checkpoints over the horizon.
    #[default]
    Auto,
}

impl CheckpointSpec {
    pub fn resolve(&self, horizon: u64) -> u64 {
        match *self {
            CheckpointSpec::Every(k) => k,
            CheckpointSpec::Auto => (horizon / 200).max(1),
        }
    }
}

impl FromStr for CheckpointSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("auto") {
            return Ok(CheckpointSpec::Auto);
        }
        s.trim()
            .parse::<u64>()
            .map(CheckpointSpec::Every)
            .map_err(|_| Error::Parse(format!("bad checkpoint spacing `{s}`")))
    }
}

impl<'de> Deserialize<'de> for CheckpointSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match NumOrText::deserialize(d)? {
            NumOrText::Int(k) if k >= 0 => Ok(CheckpointSpec::Every(k as u64)),
            NumOrText::Text(s) => s.parse().map_err(de::Error::custom),
            _ => Err(de::Error::custom(
                "checkpoint spacing must be a count or `auto`",
            )),
        }
    }
}

/// A scalar or a list of values to sweep over.
#[derive(Clone, Debug, PartialEq)]
pub struct Sweep<T>(pub Vec<T>);

impl<T> Sweep<T> {
    pub fn one(v: T) -> Self {
        Sweep(vec![v])
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }
}

impl<T> From<Vec<T>> for Sweep<T> {
    fn from(v: Vec<T>) -> Self {
        Sweep(v)
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Sweep<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum OneOrMany<T> {
            Many(Vec<T>),
            One(T),
        }
        let values = match OneOrMany::deserialize(d)? {
            OneOrMany::Many(v) => v,
            OneOrMany::One(v) => vec![v],
        };
        if values.is_empty() {
            return Err(de::Error::custom("empty sweep list"));
        }
        Ok(Sweep(values))
    }
}

/// Fault settings of a campaign; `beta` and `byz_count` may be swept.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FaultConfig {
    pub leak_model: LeakModel,
    pub beta: Sweep<BetaSpec>,
    pub leak_pool: LeakPool,
    pub byz_mode: ByzMode,
    pub byz_count: Sweep<u64>,
}

impl Default for FaultConfig {
    fn default() -> Self {
        FaultConfig {
            leak_model: LeakModel::None,
            beta: Sweep::one(BetaSpec::Value(0.0)),
            leak_pool: LeakPool::AllAgents,
            byz_mode: ByzMode::None,
            byz_count: Sweep::one(0),
        }
    }
}

impl FaultConfig {
    pub fn spec(&self, beta: f64, byz_count: u64) -> FaultSpec {
        FaultSpec {
            leak_model: self.leak_model,
            beta,
            leak_pool: self.leak_pool,
            byz_mode: self.byz_mode,
            byz_count,
        }
    }
}

fn default_workers() -> Sweep<u64> {
    Sweep::one(0)
}

fn default_margin() -> Sweep<MarginSpec> {
    Sweep::one(MarginSpec::Auto(1.0))
}

fn default_horizon() -> HorizonSpec {
    HorizonSpec::MultNLogN(4.0)
}

fn default_one() -> u64 {
    1
}

fn default_checkpoint() -> CheckpointSpec {
    CheckpointSpec::Every(0)
}

/// A Monte Carlo campaign: the cross product of every swept field, each
/// cell run for `trials` seeded trials.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: ProtocolKind,
    /// Defaults to the protocol's own model.
    #[serde(default)]
    pub model: Option<Model>,
    pub n_inputs: Sweep<u64>,
    #[serde(default = "default_workers")]
    pub m_workers: Sweep<u64>,
    #[serde(default = "default_margin")]
    pub margin: Sweep<MarginSpec>,
    #[serde(default)]
    pub fault: FaultConfig,
    #[serde(default = "default_horizon")]
    pub horizon: HorizonSpec,
    #[serde(default = "default_one")]
    pub trials: u64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_checkpoint")]
    pub checkpoint_every: CheckpointSpec,
    #[serde(default = "default_one")]
    pub samples_per_trial: u64,
    #[serde(default)]
    pub initial_workers: InitialWorkers,
    /// Fault-free runs may stop once absorbed; runs with faults always
    /// continue to the horizon.
    #[serde(default)]
    pub stop: StopRule,
}

impl ExperimentConfig {
    /// A single-cell campaign with defaults for everything but the protocol
    /// and population.
    pub fn new(protocol: ProtocolKind, n_inputs: u64, m_workers: u64) -> Self {
        ExperimentConfig {
            protocol,
            model: None,
            n_inputs: Sweep::one(n_inputs),
            m_workers: Sweep::one(m_workers),
            margin: default_margin(),
            fault: FaultConfig::default(),
            horizon: default_horizon(),
            trials: 1,
            base_seed: 0,
            checkpoint_every: default_checkpoint(),
            samples_per_trial: 1,
            initial_workers: InitialWorkers::AllBlank,
            stop: StopRule::AtConvergence,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("experiment config: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    /// The population model, checked against the protocol.
    pub fn resolved_model(&self) -> Result<Model> {
        let native = self.protocol.model();
        match self.model {
            Some(m) if m != native => Err(Error::InvalidConfig(format!(
                "protocol {} runs in the {} model, not {}",
                self.protocol, native, m
            ))),
            _ => Ok(native),
        }
    }

    /// Whole-campaign checks; per-cell problems surface when cells run.
    pub fn validate(&self) -> Result<()> {
        self.resolved_model()?;
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be positive".into()));
        }
        if self.samples_per_trial == 0 {
            return Err(Error::InvalidConfig(
                "samples_per_trial must be positive".into(),
            ));
        }
        if self.fault.leak_model == LeakModel::None
            && self
                .fault
                .beta
                .values()
                .iter()
                .any(|b| *b != BetaSpec::Value(0.0))
        {
            return Err(Error::InvalidConfig(
                "leak rates given with leak model `none`".into(),
            ));
        }
        Ok(())
    }
}
