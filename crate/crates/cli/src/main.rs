//! `qfuzz`: run the reinforcement fuzzer and its experiments from the shell.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 target
//! environment error, 3 aborted run.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qfuzz::experiments::{
    compare_baseline, generalization_run, reward_correlation, sweep, ExperimentError, SweepDimension,
};
use qfuzz::fuzz_loop::{load_seeds, run, GenerationRecord, LoopConfig, LoopError, Policy, RunReport};
use qfuzz::harness::{CommandTarget, HarnessError, MiniParser, RewardMode, Target};
use qfuzz::mutation::{build_dictionary, DEFAULT_MAX_TOKENS, DEFAULT_MIN_TOKEN_LEN};

#[derive(Parser)]
#[command(name = "qfuzz", version, about = "Deep Q-learning fuzzer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one fuzzing campaign and write its report.
    Fuzz(Common),
    /// Compare the learned policy with the uniform baseline.
    Bench(Common),
    /// Run one comparison per value of a parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// state_width, activation or gamma.
        #[arg(long)]
        dimension: SweepDimension,
        /// Comma-separated values, e.g. `32,80` or `tanh,relu`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Pearson correlation between block coverage and execution time.
    Correlate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 500)]
        samples: usize,
    },
    /// Train on the first half of the seed, evaluate frozen on the second.
    Generalize(Common),
    /// Re-run the config embedded in a report and check the records agree.
    Replay {
        report: PathBuf,
        #[arg(long, default_value = "builtin")]
        target: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the token dictionary extracted from the seeds.
    Dict {
        #[arg(long = "seed")]
        seeds: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// TOML loop configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `builtin`, or a command template where `@@` names the input file.
    #[arg(long, default_value = "builtin")]
    target: String,
    /// Seed input; repeatable. Defaults to the bundled sample document.
    #[arg(long = "seed")]
    seeds: Vec<PathBuf>,
    #[arg(long)]
    generations: Option<u64>,
    #[arg(long)]
    reward: Option<RewardMode>,
    /// learned, baseline or frozen:<weights file>.
    #[arg(long, value_parser = parse_policy)]
    policy: Option<Policy>,
    #[arg(long)]
    rng_seed: Option<u64>,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    /// Output directory; results go to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_policy(s: &str) -> Result<Policy, String> {
    match s {
        "learned" => Ok(Policy::Learned),
        "baseline" => Ok(Policy::BaselineRandom),
        _ => match s.strip_prefix("frozen:") {
            Some(path) if !path.is_empty() => Ok(Policy::Frozen(PathBuf::from(path))),
            _ => Err(format!("expected learned, baseline or frozen:<path>, got {s:?}")),
        },
    }
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<LoopError> for Failure {
    fn from(e: LoopError) -> Self {
        let code = if matches!(e, LoopError::Environment(_)) { 2 } else { 1 };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        let code = if e.is_environment() { 2 } else { 1 };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        LoopError::Environment(e).into()
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::usage(format!("{}: {e}", path.display()))
}

fn make_target(spec: &str) -> Result<Box<dyn Target>, Failure> {
    if spec == "builtin" {
        Ok(Box::new(MiniParser::new()))
    } else {
        Ok(Box::new(CommandTarget::new(spec)?))
    }
}

impl Common {
    fn resolve(&self) -> Result<LoopConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => LoopConfig::load(path)?,
            None => LoopConfig::default(),
        };
        if !self.seeds.is_empty() {
            cfg.seed_paths = self.seeds.clone();
        }
        if let Some(g) = self.generations {
            cfg.generations = g;
        }
        if let Some(mode) = self.reward {
            cfg.reward.mode = mode;
        }
        if let Some(p) = &self.policy {
            cfg.policy = p.clone();
        }
        if let Some(s) = self.rng_seed {
            cfg.rng_seed = s;
        }
        if self.trials == 0 {
            return Err(Failure::usage("--trials must be at least 1"));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn prepare_out(out: Option<&Path>) -> Result<(), Failure> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    }
    Ok(())
}

/// Writes `text` to `<out>/<name>`, or to stdout without an output directory.
fn emit(out: Option<&Path>, name: &str, text: &str) -> Result<(), Failure> {
    match out {
        Some(dir) => {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| io_failure(&path, e))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn summarize(report: &RunReport) -> String {
    let mut s = format!(
        "{} generations, total reward {}, {} findings",
        report.records.len(),
        report.total_reward(),
        report.findings.len()
    );
    let counts = report.action_counts();
    let pairs: Vec<String> = report
        .action_names
        .iter()
        .zip(&counts)
        .map(|(n, c)| format!("{n}={c}"))
        .collect();
    let _ = write!(s, "; actions: {}", pairs.join(" "));
    s
}

fn aborted(report: &RunReport) -> Result<(), Failure> {
    match &report.aborted {
        Some(reason) => Err(Failure {
            code: 3,
            message: format!("run aborted: {reason}"),
        }),
        None => Ok(()),
    }
}

fn fuzz(common: &Common) -> Result<(), Failure> {
    let mut cfg = common.resolve()?;
    let out = common.out.as_deref();
    prepare_out(out)?;
    if let Some(dir) = out {
        cfg.findings_dir.get_or_insert_with(|| dir.join("findings"));
        if cfg.policy == Policy::Learned {
            cfg.weights_out.get_or_insert_with(|| dir.join("weights.txt"));
        }
    }
    let mut target = make_target(&common.target)?;
    let output = run(&cfg, &mut *target)?;
    eprintln!("{}", summarize(&output.report));
    emit(out, "report.txt", &output.report.to_text())?;
    aborted(&output.report)
}

fn bench(common: &Common) -> Result<(), Failure> {
    let cfg = common.resolve()?;
    prepare_out(common.out.as_deref())?;
    let mut target = make_target(&common.target)?;
    let report = compare_baseline(&cfg, common.trials, &mut *target)?;
    for bad in &report.invalid {
        eprintln!("trial with rng seed {} invalid: {}", bad.rng_seed, bad.reason);
    }
    emit(common.out.as_deref(), "bench.txt", &report.to_text())
}

fn run_sweep(common: &Common, dimension: SweepDimension, values: &[String]) -> Result<(), Failure> {
    let cfg = common.resolve()?;
    prepare_out(common.out.as_deref())?;
    let mut target = make_target(&common.target)?;
    let table = sweep(dimension, values, &cfg, common.trials, &mut *target)?;
    for row in &table.rows {
        if let Err(e) = &row.cell {
            eprintln!("{} = {}: {e}", dimension.as_str(), row.value);
        }
    }
    emit(common.out.as_deref(), "sweep.csv", &table.to_text())
}

fn correlate(common: &Common, samples: usize) -> Result<(), Failure> {
    let cfg = common.resolve()?;
    prepare_out(common.out.as_deref())?;
    let mut target = make_target(&common.target)?;
    let r = reward_correlation(&cfg, samples, &mut *target)?;
    emit(common.out.as_deref(), "correlation.txt", &format!("samples={samples}\npearson={r}\n"))
}

fn generalize(common: &Common) -> Result<(), Failure> {
    let cfg = common.resolve()?;
    prepare_out(common.out.as_deref())?;
    let mut target = make_target(&common.target)?;
    let report = generalization_run(&cfg, common.trials, &mut *target)?;
    emit(common.out.as_deref(), "generalize.txt", &report.to_text())
}

fn first_difference(a: &[GenerationRecord], b: &[GenerationRecord]) -> Option<u64> {
    // wall times are measurements, so only the decisions and outcomes must agree
    let same = |x: &GenerationRecord, y: &GenerationRecord| {
        x.generation == y.generation
            && x.offset == y.offset
            && x.action == y.action
            && x.epsilon == y.epsilon
            && x.outcome == y.outcome
            && x.blocks == y.blocks
    };
    if let Some(pos) = a.iter().zip(b).position(|(x, y)| !same(x, y)) {
        return Some(pos as u64);
    }
    (a.len() != b.len()).then(|| a.len().min(b.len()) as u64)
}

fn replay(report: &Path, target: &str, out: Option<&Path>) -> Result<(), Failure> {
    let text = std::fs::read_to_string(report).map_err(|e| io_failure(report, e))?;
    let original = RunReport::from_text(&text).map_err(|e| Failure::usage(format!("{}: {e}", report.display())))?;
    let mut cfg = original.config.clone();
    // a replay must not overwrite the original run's artifacts
    cfg.weights_out = None;
    cfg.findings_dir = None;
    prepare_out(out)?;
    let mut target = make_target(target)?;
    let output = run(&cfg, &mut *target)?;
    emit(out, "replay.txt", &output.report.to_text())?;
    aborted(&output.report)?;
    match first_difference(&original.records, &output.report.records) {
        None => {
            eprintln!("replay agrees with {} on all {} generations", report.display(), original.records.len());
            Ok(())
        }
        Some(g) => Err(Failure::usage(format!("replay diverged at generation {g}"))),
    }
}

fn dict(seeds: &[PathBuf], out: Option<&Path>) -> Result<(), Failure> {
    let seeds = load_seeds(seeds)?;
    let dict = build_dictionary(&seeds, DEFAULT_MIN_TOKEN_LEN, DEFAULT_MAX_TOKENS)
        .map_err(|e| Failure::usage(e.to_string()))?;
    prepare_out(out)?;
    emit(out, "dictionary.txt", &dict.to_text())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Fuzz(c) => fuzz(c),
        Command::Bench(c) => bench(c),
        Command::Sweep {
            common,
            dimension,
            values,
        } => run_sweep(common, *dimension, values),
        Command::Correlate { common, samples } => correlate(common, *samples),
        Command::Generalize(c) => generalize(c),
        Command::Replay { report, target, out } => replay(report, target, out.as_deref()),
        Command::Dict { seeds, out } => dict(seeds, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("qfuzz: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
