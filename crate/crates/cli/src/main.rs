use std::fmt::Display;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::Context;
use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Args, CommandFactory, Parser, Subcommand};

use popdyn::engine::{
    init_configuration, protocol_for, ByzMode, FaultSpec, InitialWorkers, LeakModel, LeakPool,
    Model, ProtocolKind,
};
use popdyn::experiments::{
    equivalence_campaign, figure2_campaign, figure3_config, format_float, margin_threshold_config,
    run_campaign, write_csv, write_rows, BetaSpec, CampaignResult, CheckpointSpec, CsvRow,
    ExperimentConfig, Figure2Options, HorizonSpec, MarginSpec, Sweep, TrajectoryRow,
    EQUIVALENCE_FACTORS, FIGURE3_TRIALS,
};
use popdyn::oracle::{absorption_probabilities, min_samples};

#[derive(Parser)]
#[command(
    name = "popdyn",
    version,
    about = "Simulate third-state approximate-majority protocols"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one seeded trial and print its CSV row
    Run(Params),
    /// Run every cell of a parameter sweep
    Campaign(Params),
    /// DBAMC trajectories over population size and leak rate, one CSV per panel
    Figure2(Params),
    /// DBAMC success rate against the number of workers
    Figure3(Params),
    /// DBAMC convergence rate against the input margin
    Margins(Params),
    /// Weak leaks against stubborn Byzantine agents
    Equivalence(Params),
    /// Exact small-population and lower-bound computations
    #[command(subcommand)]
    Oracle(OracleCommand),
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Smallest sample count whose majority errs with probability at most n^-c
    MinSamples(MinSamplesArgs),
    /// Absorption probabilities of small fault-free or Byzantine chains
    Absorption(AbsorptionArgs),
}

fn parse<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: Display,
{
    s.parse::<T>().map_err(|e| e.to_string())
}

fn protocol_parser() -> impl TypedValueParser<Value = ProtocolKind> {
    PossibleValuesParser::new(["triam", "dbam", "dbamc"]).map(|s| s.parse().unwrap())
}

fn model_parser() -> impl TypedValueParser<Value = Model> {
    PossibleValuesParser::new(["standard", "ci"]).map(|s| s.parse().unwrap())
}

fn leak_parser() -> impl TypedValueParser<Value = LeakModel> {
    PossibleValuesParser::new(["none", "adversarial", "weak"]).map(|s| s.parse().unwrap())
}

fn pool_parser() -> impl TypedValueParser<Value = LeakPool> {
    PossibleValuesParser::new(["all", "workers"]).map(|s| s.parse().unwrap())
}

fn byz_parser() -> impl TypedValueParser<Value = ByzMode> {
    PossibleValuesParser::new(["none", "stubborn", "super"]).map(|s| s.parse().unwrap())
}

/// Run parameters. List-valued flags take comma-separated values and are
/// swept by `campaign`; each one replaces the matching config-file field.
#[derive(Args, Default)]
struct Params {
    /// Protocol
    #[arg(long, value_parser = protocol_parser())]
    protocol: Option<ProtocolKind>,
    /// Population model; must match the protocol
    #[arg(long, value_parser = model_parser())]
    model: Option<Model>,
    /// Input agents (opinion holders in the standard model)
    #[arg(short = 'n', long, value_delimiter = ',', value_parser = parse::<u64>)]
    inputs: Vec<u64>,
    /// Worker agents (CI model only)
    #[arg(short = 'm', long, value_delimiter = ',', value_parser = parse::<u64>)]
    workers: Vec<u64>,
    /// Initial margin: an integer, or `auto` for the smallest value of the
    /// input parity at least alpha * sqrt(N ln N)
    #[arg(long, value_name = "INT|auto", value_delimiter = ',', value_parser = parse::<MarginSpec>)]
    margin: Vec<MarginSpec>,
    /// Factor of the automatic margin [default: 1]
    #[arg(long, value_parser = parse::<f64>)]
    alpha: Option<f64>,
    /// Leak rate: a number or one of 1/N, lnN/N, sqrt(NlnN)/(8N)
    #[arg(long, value_name = "FLOAT", value_delimiter = ',', value_parser = parse::<BetaSpec>)]
    beta: Vec<BetaSpec>,
    /// Leak model
    #[arg(long, value_parser = leak_parser())]
    leak: Option<LeakModel>,
    /// Agents a leak may hit [default: all]
    #[arg(long, value_parser = pool_parser())]
    leak_pool: Option<LeakPool>,
    /// Byzantine agents
    #[arg(long, value_parser = byz_parser())]
    byz: Option<ByzMode>,
    /// Number of Byzantine agents
    #[arg(long, value_name = "INT", value_delimiter = ',', value_parser = parse::<u64>)]
    byz_count: Vec<u64>,
    /// Step budget: an integer or `4nlogn` (any factor, e.g. `2nlogn`) [default: 4nlogn]
    #[arg(long, value_name = "INT|4nlogn", value_parser = parse::<HorizonSpec>)]
    horizon: Option<HorizonSpec>,
    /// Trials per cell
    #[arg(long, value_parser = parse::<u64>)]
    trials: Option<u64>,
    /// Base seed; trial i uses the i-th derived stream
    #[arg(long, value_parser = parse::<u64>)]
    seed: Option<u64>,
    /// Steps between trajectory checkpoints, 0 for none, or `auto`
    #[arg(long, value_name = "INT|auto", value_parser = parse::<CheckpointSpec>)]
    checkpoint: Option<CheckpointSpec>,
    /// Output samples drawn per trial
    #[arg(long, value_parser = parse::<u64>)]
    samples: Option<u64>,
    /// Output file (run, equivalence) or directory (campaign, figure2, figure3, margins)
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON experiment config; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct MinSamplesArgs {
    /// Population sizes
    #[arg(long = "n", required = true, value_delimiter = ',', value_parser = parse::<u64>)]
    n: Vec<u64>,
    /// Error exponents
    #[arg(long = "c", default_value = "2", value_delimiter = ',', value_parser = parse::<u32>)]
    c: Vec<u32>,
    /// Output file instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AbsorptionArgs {
    /// Protocol
    #[arg(long, required = true, value_parser = protocol_parser())]
    protocol: ProtocolKind,
    /// Population model; must match the protocol
    #[arg(long, value_parser = model_parser())]
    model: Option<Model>,
    /// Input agents
    #[arg(short = 'n', long, required = true, value_delimiter = ',', value_parser = parse::<u64>)]
    inputs: Vec<u64>,
    /// Worker agents (CI model only)
    #[arg(short = 'm', long, value_delimiter = ',', value_parser = parse::<u64>)]
    workers: Vec<u64>,
    /// Initial margins [default: every margin of the input parity]
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, value_parser = parse::<i64>)]
    margin: Vec<i64>,
    /// Byzantine agents
    #[arg(long, value_parser = byz_parser())]
    byz: Option<ByzMode>,
    /// Number of Byzantine agents
    #[arg(long, value_name = "INT", default_value = "0", value_parser = parse::<u64>)]
    byz_count: u64,
    /// Output file instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome = Result<(), Failure>;

fn usage<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Usage(msg.into()))
}

impl Params {
    fn given(&self) -> Vec<&'static str> {
        let flags = [
            ("--protocol", self.protocol.is_some()),
            ("--model", self.model.is_some()),
            ("--inputs", !self.inputs.is_empty()),
            ("--workers", !self.workers.is_empty()),
            ("--margin", !self.margin.is_empty()),
            ("--alpha", self.alpha.is_some()),
            ("--beta", !self.beta.is_empty()),
            ("--leak", self.leak.is_some()),
            ("--leak-pool", self.leak_pool.is_some()),
            ("--byz", self.byz.is_some()),
            ("--byz-count", !self.byz_count.is_empty()),
            ("--horizon", self.horizon.is_some()),
            ("--trials", self.trials.is_some()),
            ("--seed", self.seed.is_some()),
            ("--checkpoint", self.checkpoint.is_some()),
            ("--samples", self.samples.is_some()),
            ("--out", self.out.is_some()),
            ("--config", self.config.is_some()),
        ];
        flags.into_iter().filter(|f| f.1).map(|f| f.0).collect()
    }

    fn only(&self, command: &str, allowed: &[&str]) -> Outcome {
        match self.given().into_iter().find(|f| !allowed.contains(f)) {
            Some(flag) => usage(format!("{command} does not take {flag}")),
            None => Ok(()),
        }
    }

    fn single<T: Copy>(values: &[T], flag: &str, command: &str) -> Result<Option<T>, Failure> {
        match values {
            [] => Ok(None),
            [v] => Ok(Some(*v)),
            _ => usage(format!("{command} takes a single value for {flag}")),
        }
    }

    /// The config file if one was given, otherwise `preset`.
    fn base(
        &self,
        preset: impl FnOnce(&Params) -> Result<ExperimentConfig, Failure>,
    ) -> Result<ExperimentConfig, Failure> {
        match &self.config {
            Some(path) => {
                ExperimentConfig::from_path(path).map_err(|e| Failure::Usage(e.to_string()))
            }
            None => preset(self),
        }
    }

    fn apply(&self, cfg: &mut ExperimentConfig) -> Outcome {
        if let Some(p) = self.protocol {
            cfg.protocol = p;
        }
        if self.model.is_some() {
            cfg.model = self.model;
        }
        if !self.inputs.is_empty() {
            cfg.n_inputs = Sweep(self.inputs.clone());
        }
        if !self.workers.is_empty() {
            cfg.m_workers = Sweep(self.workers.clone());
        }
        if !self.margin.is_empty() {
            cfg.margin = Sweep(self.margin.clone());
        }
        if let Some(alpha) = self.alpha {
            if alpha.is_nan() || alpha <= 0.0 {
                return usage(format!("--alpha must be positive, got {alpha}"));
            }
            if cfg
                .margin
                .values()
                .iter()
                .any(|m| !matches!(m, MarginSpec::Auto(_)))
            {
                return usage("--alpha applies only to --margin auto");
            }
            cfg.margin = Sweep(vec![MarginSpec::Auto(alpha)]);
        }
        if !self.beta.is_empty() {
            cfg.fault.beta = Sweep(self.beta.clone());
        }
        if let Some(l) = self.leak {
            cfg.fault.leak_model = l;
        }
        if let Some(p) = self.leak_pool {
            cfg.fault.leak_pool = p;
        }
        if let Some(b) = self.byz {
            cfg.fault.byz_mode = b;
        }
        if !self.byz_count.is_empty() {
            cfg.fault.byz_count = Sweep(self.byz_count.clone());
        }
        if let Some(h) = self.horizon {
            cfg.horizon = h;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(s) = self.seed {
            cfg.base_seed = s;
        }
        if let Some(c) = self.checkpoint {
            cfg.checkpoint_every = c;
        }
        if let Some(s) = self.samples {
            cfg.samples_per_trial = s;
        }
        if cfg.fault.byz_mode == ByzMode::None
            && cfg.fault.byz_count.values().iter().any(|&c| c > 0)
        {
            return usage("--byz-count needs --byz stubborn or --byz super");
        }
        cfg.validate().map_err(|e| Failure::Usage(e.to_string()))
    }
}

fn flag_preset(p: &Params) -> Result<ExperimentConfig, Failure> {
    let Some(protocol) = p.protocol else {
        return usage("--protocol is required unless --config is given");
    };
    let Some(&n) = p.inputs.first() else {
        return usage("-n/--inputs is required unless --config is given");
    };
    Ok(ExperimentConfig::new(protocol, n, 0))
}

fn cell_count(cfg: &ExperimentConfig) -> usize {
    cfg.n_inputs.values().len()
        * cfg.m_workers.values().len()
        * cfg.margin.values().len()
        * cfg.fault.beta.values().len()
        * cfg.fault.byz_count.values().len()
}

fn write_to<T: CsvRow>(rows: &[T], out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(path) => Ok(write_csv(rows, path)?),
        None => {
            let stdout = io::stdout();
            write_rows(rows, stdout.lock()).context("writing to stdout")
        }
    }
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("{}: cannot create directory", dir.display()))
}

fn report_failures(res: &CampaignResult) -> Outcome {
    for f in &res.failures {
        eprintln!("error: cell {}: {}", f.group_key, f.message);
    }
    match res.failures.len() {
        0 => Ok(()),
        k => Err(Failure::Runtime(anyhow::anyhow!("{k} cell(s) failed"))),
    }
}

fn cmd_run(p: &Params) -> Outcome {
    let mut cfg = p.base(flag_preset)?;
    p.apply(&mut cfg)?;
    if cell_count(&cfg) != 1 || cfg.trials != 1 {
        return usage("run takes one value per parameter and one trial; use campaign to sweep");
    }
    let res = run_campaign(&cfg).map_err(anyhow::Error::from)?;
    // a lone cell fails only on its own parameters
    if let Some(f) = res.failures.first() {
        return usage(f.message.clone());
    }
    let cell = &res.cells[0];
    write_to(&cell.trials, p.out.as_deref())?;
    if let (Some(out), Some(traj)) = (&p.out, cell.trajectories.first()) {
        let rows: Vec<TrajectoryRow> = traj.iter().map(TrajectoryRow::from).collect();
        write_csv(&rows, &out.with_extension("trajectory.csv")).map_err(anyhow::Error::from)?;
    }
    Ok(())
}

/// Aggregates on stdout, or trial, aggregate and trajectory files in `--out`.
fn emit_campaign(res: &CampaignResult, out: Option<&Path>) -> Outcome {
    match out {
        None => write_to(&res.aggregates(), None)?,
        Some(dir) => {
            create_dir(dir)?;
            write_csv(&res.trials(), &dir.join("trials.csv")).map_err(anyhow::Error::from)?;
            write_csv(&res.aggregates(), &dir.join("aggregate.csv"))
                .map_err(anyhow::Error::from)?;
            for (c, cell) in res.cells.iter().enumerate() {
                for (t, traj) in cell.trajectories.iter().enumerate() {
                    let rows: Vec<TrajectoryRow> = traj.iter().map(TrajectoryRow::from).collect();
                    let path = dir.join(format!("trajectory_c{c}_t{t}.csv"));
                    write_csv(&rows, &path).map_err(anyhow::Error::from)?;
                }
            }
        }
    }
    report_failures(res)
}

fn cmd_campaign(p: &Params) -> Outcome {
    let mut cfg = p.base(flag_preset)?;
    p.apply(&mut cfg)?;
    let res = run_campaign(&cfg).map_err(anyhow::Error::from)?;
    emit_campaign(&res, p.out.as_deref())
}

fn cmd_figure3(p: &Params) -> Outcome {
    let mut cfg = p.base(|_| Ok(figure3_config(FIGURE3_TRIALS, 0)))?;
    p.apply(&mut cfg)?;
    let res = run_campaign(&cfg).map_err(anyhow::Error::from)?;
    emit_campaign(&res, p.out.as_deref())
}

const MARGINS_INPUTS: u64 = 400;
const MARGINS_DEFAULT: [i64; 7] = [2, 10, 20, 40, 60, 80, 120];
const MARGINS_TRIALS: u64 = 300;

fn cmd_margins(p: &Params) -> Outcome {
    let mut cfg = p.base(|p| {
        let n = Params::single(&p.inputs, "--inputs", "margins")?.unwrap_or(MARGINS_INPUTS);
        let m = Params::single(&p.workers, "--workers", "margins")?.unwrap_or(n);
        let margins = if p.margin.is_empty() {
            MARGINS_DEFAULT.to_vec()
        } else {
            let mut v = Vec::new();
            for spec in &p.margin {
                match spec {
                    MarginSpec::Fixed(x) => v.push(*x),
                    MarginSpec::Auto(_) => return usage("margins takes integer --margin values"),
                }
            }
            v
        };
        margin_threshold_config(n, m, &margins, MARGINS_TRIALS, 0)
            .map_err(|e| Failure::Usage(e.to_string()))
    })?;
    p.apply(&mut cfg)?;
    let res = run_campaign(&cfg).map_err(anyhow::Error::from)?;
    emit_campaign(&res, p.out.as_deref())
}

fn cmd_figure2(p: &Params) -> Outcome {
    p.only(
        "figure2",
        &["--inputs", "--beta", "--seed", "--checkpoint", "--out"],
    )?;
    let mut opts = Figure2Options::default();
    if !p.inputs.is_empty() {
        opts.sizes = p.inputs.clone();
    }
    if !p.beta.is_empty() {
        opts.betas = p.beta.clone();
    }
    if let Some(s) = p.seed {
        opts.base_seed = s;
    }
    if let Some(c) = p.checkpoint {
        opts.checkpoint_every = c;
    }
    let dir = p.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let cells = figure2_campaign(&opts).map_err(anyhow::Error::from)?;
    create_dir(&dir)?;
    for c in &cells {
        let rows: Vec<TrajectoryRow> = c
            .result
            .trajectories
            .first()
            .into_iter()
            .flatten()
            .map(TrajectoryRow::from)
            .collect();
        write_csv(&rows, &dir.join(c.file_name())).map_err(anyhow::Error::from)?;
    }
    Ok(())
}

const EQUIVALENCE_INPUTS: u64 = 1000;
const EQUIVALENCE_BETA: f64 = 0.002;
const EQUIVALENCE_TRIALS: u64 = 500;

fn cmd_equivalence(p: &Params) -> Outcome {
    p.only(
        "equivalence",
        &["--inputs", "--beta", "--trials", "--seed", "--out"],
    )?;
    let n = Params::single(&p.inputs, "--inputs", "equivalence")?.unwrap_or(EQUIVALENCE_INPUTS);
    let beta = match Params::single(&p.beta, "--beta", "equivalence")? {
        None => EQUIVALENCE_BETA,
        Some(BetaSpec::Value(b)) => b,
        Some(other) => other.resolve(n),
    };
    let trials = p.trials.unwrap_or(EQUIVALENCE_TRIALS);
    if trials == 0 {
        return usage("--trials must be positive");
    }
    let res = equivalence_campaign(n, beta, &EQUIVALENCE_FACTORS, trials, p.seed.unwrap_or(0))
        .map_err(|e| Failure::Usage(e.to_string()))?;
    write_to(&res.rows(), p.out.as_deref())?;
    Ok(())
}

fn open_out(out: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => {
            Box::new(BufWriter::new(File::create(path).with_context(|| {
                format!("{}: cannot create file", path.display())
            })?))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_min_samples(a: &MinSamplesArgs) -> Outcome {
    let mut lines = vec!["kind,n,c,S_min".to_string()];
    for &n in &a.n {
        for &c in &a.c {
            let s = min_samples(n, c).with_context(|| format!("min_samples(n={n}, c={c})"))?;
            lines.push(format!("min_samples,{n},{c},{s}"));
        }
    }
    let mut w = open_out(a.out.as_deref())?;
    for line in lines {
        writeln!(w, "{line}").context("writing output")?;
    }
    w.flush().context("writing output")?;
    Ok(())
}

fn cmd_absorption(a: &AbsorptionArgs) -> Outcome {
    let native = a.protocol.model();
    if a.model.is_some_and(|m| m != native) {
        return usage(format!(
            "protocol {} runs in the {native} model",
            a.protocol
        ));
    }
    let byz = a.byz.unwrap_or(ByzMode::None);
    if byz == ByzMode::None && a.byz_count > 0 {
        return usage("--byz-count needs --byz stubborn or --byz super");
    }
    let fault = FaultSpec::none().with_byzantine(byz, a.byz_count);
    let spec = protocol_for(a.protocol, &fault).map_err(|e| Failure::Usage(e.to_string()))?;
    let workers = if a.workers.is_empty() {
        vec![0]
    } else {
        a.workers.clone()
    };
    let mut lines = vec!["config,class,prob".to_string()];
    for &n in &a.inputs {
        let margins: Vec<i64> = if a.margin.is_empty() {
            (0..=n).map(|k| n as i64 - 2 * k as i64).collect()
        } else {
            a.margin.clone()
        };
        for &m in &workers {
            for &margin in &margins {
                let init =
                    init_configuration(native, n, m, margin, InitialWorkers::AllBlank, &fault)
                        .map_err(|e| Failure::Usage(e.to_string()))?;
                let probs = absorption_probabilities(&init, &spec, &fault)
                    .with_context(|| format!("absorption from {init}"))?;
                let label = init.to_string().replace(", ", " ");
                for (class, prob) in probs {
                    lines.push(format!("{label},{class},{}", format_float(prob)));
                }
            }
        }
    }
    let mut w = open_out(a.out.as_deref())?;
    for line in lines {
        writeln!(w, "{line}").context("writing output")?;
    }
    w.flush().context("writing output")?;
    Ok(())
}

fn dispatch(command: &Command) -> (Outcome, &'static str) {
    match command {
        Command::Run(p) => (cmd_run(p), "run"),
        Command::Campaign(p) => (cmd_campaign(p), "campaign"),
        Command::Figure2(p) => (cmd_figure2(p), "figure2"),
        Command::Figure3(p) => (cmd_figure3(p), "figure3"),
        Command::Margins(p) => (cmd_margins(p), "margins"),
        Command::Equivalence(p) => (cmd_equivalence(p), "equivalence"),
        Command::Oracle(OracleCommand::MinSamples(a)) => (cmd_min_samples(a), "oracle min-samples"),
        Command::Oracle(OracleCommand::Absorption(a)) => (cmd_absorption(a), "oracle absorption"),
    }
}

/// Usage line of the deepest subcommand named by the leading words.
fn subcommand_usage<'a>(words: impl IntoIterator<Item = &'a str>) -> String {
    let mut cur = Cli::command();
    cur.build();
    for name in words {
        match cur.find_subcommand(name) {
            Some(sub) => cur = sub.clone(),
            None => break,
        }
    }
    cur.render_usage().to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            eprint!("{text}");
            if !text.contains("Usage:") {
                let args: Vec<String> = std::env::args().skip(1).collect();
                eprintln!("\n{}", subcommand_usage(args.iter().map(String::as_str)));
            }
            return ExitCode::from(1);
        }
    };
    match dispatch(&cli.command) {
        (Ok(()), _) => ExitCode::SUCCESS,
        (Err(Failure::Usage(msg)), name) => {
            eprintln!(
                "error: {msg}\n\n{}\n\nFor more information, try '--help'.",
                subcommand_usage(name.split(' '))
            );
            ExitCode::from(1)
        }
        (Err(Failure::Runtime(e)), _) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
