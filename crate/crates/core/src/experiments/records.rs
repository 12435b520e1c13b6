use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::engine::{ByzMode, LeakModel, LeakPool, Model, ProtocolKind, TerminalClass};
use crate::error::{Error, Result};
use crate::metrics::{Phase, ProgressSnapshot};

/// Round to 9 significant digits, the precision floats are written with.
pub fn round_sig9(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.8e}").parse().expect("formatted float parses")
}

/// Shortest text that reads back as `round_sig9(v)`.
pub fn format_float(v: f64) -> String {
    let r = round_sig9(v);
    if r == 0.0 {
        "0".into()
    } else {
        r.to_string()
    }
}

fn parse_field<T: FromStr>(row: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    let raw = row
        .get(i)
        .ok_or_else(|| Error::Parse(format!("missing column {name}")))?;
    raw.parse()
        .map_err(|_| Error::Parse(format!("bad {name} value `{raw}`")))
}

fn parse_opt<T: FromStr>(row: &csv::StringRecord, i: usize, name: &str) -> Result<Option<T>> {
    match row.get(i) {
        Some("") => Ok(None),
        _ => parse_field(row, i, name).map(Some),
    }
}

fn opt_text<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Outcome of one seeded trial together with its resolved parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub seed: u64,
    pub protocol: ProtocolKind,
    pub model: Model,
    pub n_inputs: u64,
    pub m_workers: u64,
    pub margin: i64,
    pub beta: f64,
    pub leak_model: LeakModel,
    pub leak_pool: LeakPool,
    pub byz_mode: ByzMode,
    pub byz_count: u64,
    pub horizon: u64,
    pub steps_run: u64,
    pub converged: bool,
    pub steps_to_converge: Option<u64>,
    pub terminal_class: TerminalClass,
    pub final_x: u64,
    pub final_y: u64,
    pub final_b: u64,
    pub sample_error: f64,
    /// Fraction of output samples that returned the majority.
    pub sample_success: f64,
    pub cum_null: u64,
    pub cum_xy: u64,
    pub cum_blank: u64,
    pub cum_leaks: u64,
}

pub const TRIAL_HEADER: [&str; 26] = [
    "trial_index",
    "seed",
    "protocol",
    "model",
    "n_inputs",
    "m_workers",
    "margin",
    "beta",
    "leak_model",
    "leak_pool",
    "byz_mode",
    "byz_count",
    "horizon",
    "steps_run",
    "converged",
    "steps_to_converge",
    "terminal_class",
    "final_x",
    "final_y",
    "final_b",
    "sample_error",
    "sample_success",
    "cum_null",
    "cum_xy",
    "cum_blank",
    "cum_leaks",
];

pub const AGGREGATE_HEADER: [&str; 8] = [
    "group_key",
    "trials",
    "mean_sample_success",
    "sd_sample_success",
    "wilson_lo",
    "wilson_hi",
    "conv_rate",
    "mean_steps_converged",
];

pub const TRAJECTORY_HEADER: [&str; 13] = [
    "step",
    "x",
    "y",
    "b",
    "x_hat2",
    "y_hat2",
    "P2",
    "sample_error",
    "phase",
    "stage",
    "cum_productive",
    "cum_blank",
    "cum_leaks",
];

/// A row type with a fixed CSV layout.
pub trait CsvRow: Sized {
    const HEADER: &'static [&'static str];

    fn to_fields(&self) -> Vec<String>;

    fn from_fields(row: &csv::StringRecord) -> Result<Self>;
}

impl CsvRow for TrialRecord {
    const HEADER: &'static [&'static str] = &TRIAL_HEADER;

    fn to_fields(&self) -> Vec<String> {
        vec![
            self.trial_index.to_string(),
            self.seed.to_string(),
            self.protocol.to_string(),
            self.model.to_string(),
            self.n_inputs.to_string(),
            self.m_workers.to_string(),
            self.margin.to_string(),
            format_float(self.beta),
            self.leak_model.to_string(),
            self.leak_pool.to_string(),
            self.byz_mode.to_string(),
            self.byz_count.to_string(),
            self.horizon.to_string(),
            self.steps_run.to_string(),
            self.converged.to_string(),
            opt_text(self.steps_to_converge),
            self.terminal_class.to_string(),
            self.final_x.to_string(),
            self.final_y.to_string(),
            self.final_b.to_string(),
            format_float(self.sample_error),
            format_float(self.sample_success),
            self.cum_null.to_string(),
            self.cum_xy.to_string(),
            self.cum_blank.to_string(),
            self.cum_leaks.to_string(),
        ]
    }

    fn from_fields(r: &csv::StringRecord) -> Result<Self> {
        Ok(TrialRecord {
            trial_index: parse_field(r, 0, "trial_index")?,
            seed: parse_field(r, 1, "seed")?,
            protocol: parse_field(r, 2, "protocol")?,
            model: parse_field(r, 3, "model")?,
            n_inputs: parse_field(r, 4, "n_inputs")?,
            m_workers: parse_field(r, 5, "m_workers")?,
            margin: parse_field(r, 6, "margin")?,
            beta: parse_field(r, 7, "beta")?,
            leak_model: parse_field(r, 8, "leak_model")?,
            leak_pool: parse_field(r, 9, "leak_pool")?,
            byz_mode: parse_field(r, 10, "byz_mode")?,
            byz_count: parse_field(r, 11, "byz_count")?,
            horizon: parse_field(r, 12, "horizon")?,
            steps_run: parse_field(r, 13, "steps_run")?,
            converged: parse_field(r, 14, "converged")?,
            steps_to_converge: parse_opt(r, 15, "steps_to_converge")?,
            terminal_class: parse_field(r, 16, "terminal_class")?,
            final_x: parse_field(r, 17, "final_x")?,
            final_y: parse_field(r, 18, "final_y")?,
            final_b: parse_field(r, 19, "final_b")?,
            sample_error: parse_field(r, 20, "sample_error")?,
            sample_success: parse_field(r, 21, "sample_success")?,
            cum_null: parse_field(r, 22, "cum_null")?,
            cum_xy: parse_field(r, 23, "cum_xy")?,
            cum_blank: parse_field(r, 24, "cum_blank")?,
            cum_leaks: parse_field(r, 25, "cum_leaks")?,
        })
    }
}

/// Summary statistics of one campaign cell.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRecord {
    pub group_key: String,
    pub trials: u64,
    pub mean_sample_success: f64,
    pub sd_sample_success: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    pub conv_rate: f64,
    pub mean_steps_converged: Option<f64>,
}

impl CsvRow for AggregateRecord {
    const HEADER: &'static [&'static str] = &AGGREGATE_HEADER;

    fn to_fields(&self) -> Vec<String> {
        vec![
            self.group_key.clone(),
            self.trials.to_string(),
            format_float(self.mean_sample_success),
            format_float(self.sd_sample_success),
            format_float(self.wilson_lo),
            format_float(self.wilson_hi),
            format_float(self.conv_rate),
            opt_text(self.mean_steps_converged.map(format_float)),
        ]
    }

    fn from_fields(r: &csv::StringRecord) -> Result<Self> {
        Ok(AggregateRecord {
            group_key: parse_field(r, 0, "group_key")?,
            trials: parse_field(r, 1, "trials")?,
            mean_sample_success: parse_field(r, 2, "mean_sample_success")?,
            sd_sample_success: parse_field(r, 3, "sd_sample_success")?,
            wilson_lo: parse_field(r, 4, "wilson_lo")?,
            wilson_hi: parse_field(r, 5, "wilson_hi")?,
            conv_rate: parse_field(r, 6, "conv_rate")?,
            mean_steps_converged: parse_opt(r, 7, "mean_steps_converged")?,
        })
    }
}

/// One trajectory checkpoint as written to CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub step: u64,
    pub x: u64,
    pub y: u64,
    pub b: u64,
    pub x_hat2: i64,
    pub y_hat2: i64,
    pub p2: i64,
    pub sample_error: f64,
    pub phase: Phase,
    pub stage: Option<u32>,
    pub cum_productive: u64,
    pub cum_blank: u64,
    pub cum_leaks: u64,
}

impl From<&ProgressSnapshot> for TrajectoryRow {
    fn from(s: &ProgressSnapshot) -> Self {
        TrajectoryRow {
            step: s.step,
            x: s.x,
            y: s.y,
            b: s.b,
            x_hat2: s.x_hat2,
            y_hat2: s.y_hat2,
            p2: s.p2,
            sample_error: round_sig9(s.sample_error),
            phase: s.phase.phase,
            stage: s.phase.stage,
            cum_productive: s.cum_productive,
            cum_blank: s.cum_blank,
            cum_leaks: s.cum_leaks,
        }
    }
}

impl CsvRow for TrajectoryRow {
    const HEADER: &'static [&'static str] = &TRAJECTORY_HEADER;

    fn to_fields(&self) -> Vec<String> {
        vec![
            self.step.to_string(),
            self.x.to_string(),
            self.y.to_string(),
            self.b.to_string(),
            self.x_hat2.to_string(),
            self.y_hat2.to_string(),
            self.p2.to_string(),
            format_float(self.sample_error),
            self.phase.to_string(),
            opt_text(self.stage),
            self.cum_productive.to_string(),
            self.cum_blank.to_string(),
            self.cum_leaks.to_string(),
        ]
    }

    fn from_fields(r: &csv::StringRecord) -> Result<Self> {
        Ok(TrajectoryRow {
            step: parse_field(r, 0, "step")?,
            x: parse_field(r, 1, "x")?,
            y: parse_field(r, 2, "y")?,
            b: parse_field(r, 3, "b")?,
            x_hat2: parse_field(r, 4, "x_hat2")?,
            y_hat2: parse_field(r, 5, "y_hat2")?,
            p2: parse_field(r, 6, "P2")?,
            sample_error: parse_field(r, 7, "sample_error")?,
            phase: parse_field(r, 8, "phase")?,
            stage: parse_opt(r, 9, "stage")?,
            cum_productive: parse_field(r, 10, "cum_productive")?,
            cum_blank: parse_field(r, 11, "cum_blank")?,
            cum_leaks: parse_field(r, 12, "cum_leaks")?,
        })
    }
}

/// Write a header row and then `rows` to any writer.
pub fn write_rows<T: CsvRow, W: Write>(rows: &[T], out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(T::HEADER)?;
    for row in rows {
        w.write_record(row.to_fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Parse rows written by [`write_rows`], checking the header.
pub fn read_rows<T: CsvRow, R: Read>(input: R) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r
        .headers()
        .map_err(|e| Error::Parse(format!("csv header: {e}")))?
        .clone();
    if header.iter().ne(T::HEADER.iter().copied()) {
        return Err(Error::Parse(format!(
            "unexpected csv header `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    r.records()
        .map(|row| {
            let row = row.map_err(|e| Error::Parse(format!("csv row: {e}")))?;
            T::from_fields(&row)
        })
        .collect()
}

/// Write `rows` to `path` as CSV, header first.
pub fn write_csv<T: CsvRow>(rows: &[T], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_rows(rows, std::io::BufWriter::new(file)).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_csv<T: CsvRow>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_rows(std::io::BufReader::new(file))
}

/// 95% Wilson score interval for `successes` out of `total`.
pub fn wilson_interval(successes: u64, total: u64) -> (f64, f64) {
    if total == 0 {
        return (0.0, 1.0);
    }
    const Z: f64 = 1.959_963_984_540_054;
    let n = total as f64;
    let p = successes as f64 / n;
    let z2 = Z * Z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = Z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Summarise the trials of one cell.
///
/// Statistics are computed from the values as written to CSV, so
/// re-aggregating parsed trial rows reproduces the emitted aggregate.
/// The Wilson interval pools every output sample of every trial.
pub fn aggregate(
    group_key: &str,
    trials: &[TrialRecord],
    samples_per_trial: u64,
) -> AggregateRecord {
    let k = trials.len() as f64;
    let successes: Vec<f64> = trials
        .iter()
        .map(|t| round_sig9(t.sample_success))
        .collect();
    let mean = if trials.is_empty() {
        0.0
    } else {
        successes.iter().sum::<f64>() / k
    };
    let sd = if trials.len() < 2 {
        0.0
    } else {
        (successes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    };
    let hits: u64 = successes
        .iter()
        .map(|s| (s * samples_per_trial as f64).round() as u64)
        .sum();
    let (lo, hi) = wilson_interval(hits, samples_per_trial * trials.len() as u64);
    let steps: Vec<u64> = trials.iter().filter_map(|t| t.steps_to_converge).collect();
    AggregateRecord {
        group_key: group_key.to_string(),
        trials: trials.len() as u64,
        mean_sample_success: mean,
        sd_sample_success: sd,
        wilson_lo: lo,
        wilson_hi: hi,
        conv_rate: if trials.is_empty() {
            0.0
        } else {
            trials.iter().filter(|t| t.converged).count() as f64 / k
        },
        mean_steps_converged: if steps.is_empty() {
            None
        } else {
            Some(steps.iter().sum::<u64>() as f64 / steps.len() as f64)
        },
    }
}
