//! Experiment protocols built on the loop: learned-vs-baseline comparison,
//! reward correlation, the half-split generalization test and parameter
//! sweeps.
//!
//! A comparison scores the last [`SCORE_WINDOW`] generations of each arm. Arms
//! of one trial share `rng_seed`, hence the same offset sequence.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::fuzz_loop::{load_seeds, run_on_seeds, LoopConfig, LoopError, Policy, RunReport};
use crate::harness::{HarnessError, RewardConfig, RewardMode, Target};
use crate::mdp::{Input, OffsetRegion};
use crate::qnet::{Activation, Network};

pub const SCORE_WINDOW: usize = 500;
pub const MIN_CORRELATION_SAMPLES: usize = 30;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Loop(#[from] LoopError),
    #[error("no valid trials: {0}")]
    NoValidTrials(String),
    #[error("need at least {MIN_CORRELATION_SAMPLES} samples, got {0}")]
    TooFewSamples(usize),
    #[error("correlation undefined: {0} series has zero variance")]
    ZeroVariance(&'static str),
    #[error("bad sweep value {value:?}: {message}")]
    SweepValue { value: String, message: String },
    #[error("table line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl ExperimentError {
    /// Whether a target failure, rather than a bad request, caused this.
    pub fn is_environment(&self) -> bool {
        matches!(self, ExperimentError::Loop(LoopError::Environment(_)))
    }
}

/// What a comparison sums over the scoring window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Score {
    Reward,
    WallTime,
}

impl Score {
    /// The combined reward is scored on execution time.
    pub fn for_mode(mode: RewardMode) -> Self {
        match mode {
            RewardMode::CombinedR3 => Score::WallTime,
            RewardMode::CoverageR1 | RewardMode::TimeR2 => Score::Reward,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Score::Reward => "reward",
            Score::WallTime => "wall_time",
        }
    }
}

impl FromStr for Score {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reward" => Ok(Score::Reward),
            "wall_time" => Ok(Score::WallTime),
            other => Err(format!("unknown score {other:?}")),
        }
    }
}

/// Sum of the score over the last `SCORE_WINDOW` records (all of them when
/// the run is shorter).
pub fn window_sum(report: &RunReport, score: Score) -> f64 {
    let skip = report.records.len().saturating_sub(SCORE_WINDOW);
    report.records[skip..]
        .iter()
        .map(|r| match score {
            Score::Reward => r.reward,
            Score::WallTime => r.wall_time,
        })
        .sum()
}

/// Whether two runs observed the same offsets, generation by generation.
pub fn offsets_match(a: &RunReport, b: &RunReport) -> bool {
    a.records.len() == b.records.len()
        && a.records.iter().zip(&b.records).all(|(x, y)| x.offset == y.offset)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub rng_seed: u64,
    pub rl_sum: f64,
    pub baseline_sum: f64,
    /// `rl_sum / baseline_sum`.
    pub quotient: f64,
    pub offsets_matched: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvalidTrial {
    pub rng_seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImprovementReport {
    pub mode: RewardMode,
    pub score: Score,
    pub trials: Vec<TrialResult>,
    pub invalid: Vec<InvalidTrial>,
    /// Means over valid trials.
    pub rl_last500_sum: f64,
    pub baseline_last500_sum: f64,
    /// Mean of the per-trial quotients.
    pub quotient: f64,
    pub min_quotient: f64,
    pub max_quotient: f64,
}

impl ImprovementReport {
    pub fn from_trials(
        mode: RewardMode,
        score: Score,
        trials: Vec<TrialResult>,
        invalid: Vec<InvalidTrial>,
    ) -> Result<Self, ExperimentError> {
        if trials.is_empty() {
            let reasons: Vec<String> = invalid
                .iter()
                .map(|t| format!("seed {}: {}", t.rng_seed, t.reason))
                .collect();
            return Err(ExperimentError::NoValidTrials(reasons.join("; ")));
        }
        let n = trials.len() as f64;
        let mean = |f: fn(&TrialResult) -> f64| trials.iter().map(f).sum::<f64>() / n;
        let quotients = trials.iter().map(|t| t.quotient);
        Ok(Self {
            mode,
            score,
            rl_last500_sum: mean(|t| t.rl_sum),
            baseline_last500_sum: mean(|t| t.baseline_sum),
            quotient: mean(|t| t.quotient),
            min_quotient: quotients.clone().fold(f64::INFINITY, f64::min),
            max_quotient: quotients.fold(f64::NEG_INFINITY, f64::max),
            trials,
            invalid,
        })
    }

    /// Trials where the learned arm beat the baseline.
    pub fn wins(&self) -> usize {
        self.trials.iter().filter(|t| t.quotient > 1.0).count()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# improvement mode={} score={}\n## trials\nrng_seed,rl_sum,baseline_sum,quotient,offsets_matched\n",
            self.mode.as_str(),
            self.score.as_str()
        );
        for t in &self.trials {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                t.rng_seed, t.rl_sum, t.baseline_sum, t.quotient, t.offsets_matched
            );
        }
        out.push_str("## invalid\nrng_seed,reason\n");
        for t in &self.invalid {
            let _ = writeln!(out, "{},{}", t.rng_seed, one_line(&t.reason));
        }
        let _ = write!(
            out,
            "## summary\nquotient={}\nmin_quotient={}\nmax_quotient={}\nrl_last500_sum={}\nbaseline_last500_sum={}\n",
            self.quotient, self.min_quotient, self.max_quotient, self.rl_last500_sum, self.baseline_last500_sum
        );
        out
    }

    /// Parses [`ImprovementReport::to_text`] output. Summary values are
    /// recomputed from the trials.
    pub fn from_text(text: &str) -> Result<Self, ExperimentError> {
        let perr = |line: usize, message: String| ExperimentError::Parse { line, message };
        let head = text.lines().next().unwrap_or("");
        let mut mode = None;
        let mut score = None;
        for part in head.trim_start_matches('#').split_whitespace() {
            match part.split_once('=') {
                Some(("mode", v)) => mode = Some(v.parse::<RewardMode>().map_err(|e| perr(1, e))?),
                Some(("score", v)) => score = Some(v.parse::<Score>().map_err(|e| perr(1, e))?),
                _ => {}
            }
        }
        let (mode, score) = mode
            .zip(score)
            .ok_or_else(|| perr(1, "header needs mode= and score=".into()))?;

        let mut section = "";
        let mut trials = Vec::new();
        let mut invalid = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            let line_no = i + 1;
            if let Some(name) = line.strip_prefix("## ") {
                section = name.trim();
                continue;
            }
            if line.is_empty() || line.starts_with("rng_seed,") {
                continue;
            }
            match section {
                "trials" => {
                    let p: Vec<&str> = line.split(',').collect();
                    if p.len() != 5 {
                        return Err(perr(line_no, format!("expected 5 fields, found {}", p.len())));
                    }
                    let num = |s: &str| s.parse::<f64>().map_err(|_| perr(line_no, format!("bad number {s:?}")));
                    trials.push(TrialResult {
                        rng_seed: p[0].parse().map_err(|_| perr(line_no, "bad seed".into()))?,
                        rl_sum: num(p[1])?,
                        baseline_sum: num(p[2])?,
                        quotient: num(p[3])?,
                        offsets_matched: p[4].parse().map_err(|_| perr(line_no, "bad flag".into()))?,
                    });
                }
                "invalid" => {
                    let (seed, reason) = line
                        .split_once(',')
                        .ok_or_else(|| perr(line_no, "expected seed,reason".into()))?;
                    invalid.push(InvalidTrial {
                        rng_seed: seed.parse().map_err(|_| perr(line_no, "bad seed".into()))?,
                        reason: reason.to_owned(),
                    });
                }
                _ => {}
            }
        }
        Self::from_trials(mode, score, trials, invalid)
    }
}

fn one_line(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

/// One side of a comparison.
#[derive(Debug, Clone)]
struct Arm {
    policy: Policy,
    network: Option<Network>,
    region: OffsetRegion,
}

impl Arm {
    fn new(policy: Policy, region: OffsetRegion) -> Self {
        Self {
            policy,
            network: None,
            region,
        }
    }
}

fn run_arm(
    config: &LoopConfig,
    seeds: &[Input],
    arm: &Arm,
    target: &mut dyn Target,
) -> Result<RunReport, ExperimentError> {
    let mut cfg = config.clone();
    cfg.policy = arm.policy.clone();
    cfg.offset_region = arm.region;
    let out = run_on_seeds(&cfg, seeds, target, arm.network.clone())?;
    Ok(out.report)
}

fn trial(
    config: &LoopConfig,
    seeds: &[Input],
    rl: &Arm,
    baseline: &Arm,
    target: &mut dyn Target,
) -> Result<Result<TrialResult, String>, ExperimentError> {
    let score = Score::for_mode(config.reward.mode);
    let rl_report = run_arm(config, seeds, rl, target)?;
    let base_report = run_arm(config, seeds, baseline, target)?;
    for (name, r) in [("learned", &rl_report), ("baseline", &base_report)] {
        if let Some(reason) = &r.aborted {
            return Ok(Err(format!("{name} arm aborted: {reason}")));
        }
    }
    let rl_sum = window_sum(&rl_report, score);
    let baseline_sum = window_sum(&base_report, score);
    if !(baseline_sum > 0.0) {
        return Ok(Err(format!("baseline sum {baseline_sum} is not positive")));
    }
    Ok(Ok(TrialResult {
        rng_seed: config.rng_seed,
        rl_sum,
        baseline_sum,
        quotient: rl_sum / baseline_sum,
        offsets_matched: offsets_match(&rl_report, &base_report),
    }))
}

/// Runs `trials` trials with seeds `rng_seed, rng_seed + 1, ...`. Aborted
/// trials are recorded as invalid; environment failures before a run starts
/// are returned as errors.
fn compare_arms(
    config: &LoopConfig,
    trials: usize,
    target: &mut dyn Target,
    mut arms: impl FnMut(&LoopConfig, &[Input], &mut dyn Target) -> Result<Result<(Arm, Arm), String>, ExperimentError>,
) -> Result<ImprovementReport, ExperimentError> {
    let seeds = load_seeds(&config.seed_paths)?;
    let mut ok = Vec::new();
    let mut invalid = Vec::new();
    for t in 0..trials.max(1) {
        let mut cfg = config.clone();
        cfg.rng_seed = config.rng_seed.wrapping_add(t as u64);
        let result = match arms(&cfg, &seeds, target)? {
            Ok((rl, base)) => trial(&cfg, &seeds, &rl, &base, target)?,
            Err(reason) => Err(reason),
        };
        match result {
            Ok(r) => {
                log::info!("trial {} quotient {:.4}", cfg.rng_seed, r.quotient);
                ok.push(r);
            }
            Err(reason) => {
                log::warn!("trial {} invalid: {reason}", cfg.rng_seed);
                invalid.push(InvalidTrial {
                    rng_seed: cfg.rng_seed,
                    reason,
                });
            }
        }
    }
    ImprovementReport::from_trials(config.reward.mode, Score::for_mode(config.reward.mode), ok, invalid)
}

/// Learned policy against the uniform baseline.
pub fn compare_baseline(
    config: &LoopConfig,
    trials: usize,
    target: &mut dyn Target,
) -> Result<ImprovementReport, ExperimentError> {
    compare_policies(config, Policy::Learned, Policy::BaselineRandom, trials, target)
}

/// Any two policies under the comparison protocol.
pub fn compare_policies(
    config: &LoopConfig,
    rl: Policy,
    baseline: Policy,
    trials: usize,
    target: &mut dyn Target,
) -> Result<ImprovementReport, ExperimentError> {
    let region = config.offset_region;
    compare_arms(config, trials, target, |_, _, _| {
        Ok(Ok((Arm::new(rl.clone(), region), Arm::new(baseline.clone(), region))))
    })
}

/// Trains on first-half offsets, then compares the frozen greedy policy with
/// the baseline on second-half offsets.
pub fn generalization_run(
    config: &LoopConfig,
    trials: usize,
    target: &mut dyn Target,
) -> Result<ImprovementReport, ExperimentError> {
    compare_arms(config, trials, target, |cfg, seeds, target| {
        let mut train = cfg.clone();
        train.policy = Policy::Learned;
        train.offset_region = OffsetRegion::FirstHalf;
        let out = run_on_seeds(&train, seeds, target, None)?;
        if let Some(reason) = out.report.aborted {
            return Ok(Err(format!("training aborted: {reason}")));
        }
        let frozen = Arm {
            policy: Policy::Frozen(PathBuf::from(format!("first-half-trial-{}", cfg.rng_seed))),
            network: out.network,
            region: OffsetRegion::SecondHalf,
        };
        Ok(Ok((frozen, Arm::new(Policy::BaselineRandom, OffsetRegion::SecondHalf))))
    })
}

/// Evaluates a given network, frozen, against the baseline.
pub fn evaluate_frozen(
    config: &LoopConfig,
    network: &Network,
    trials: usize,
    target: &mut dyn Target,
) -> Result<ImprovementReport, ExperimentError> {
    let region = config.offset_region;
    compare_arms(config, trials, target, |_, _, _| {
        let frozen = Arm {
            policy: Policy::Frozen(PathBuf::from("provided")),
            network: Some(network.clone()),
            region,
        };
        Ok(Ok((frozen, Arm::new(Policy::BaselineRandom, region))))
    })
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, ExperimentError> {
    assert_eq!(xs.len(), ys.len(), "series lengths differ");
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(ExperimentError::ZeroVariance("first"));
    }
    if syy == 0.0 {
        return Err(ExperimentError::ZeroVariance("second"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson coefficient between memoryless coverage and execution time over
/// `samples` uniformly random mutations of the seed.
pub fn reward_correlation(
    config: &LoopConfig,
    samples: usize,
    target: &mut dyn Target,
) -> Result<f64, ExperimentError> {
    if samples < MIN_CORRELATION_SAMPLES {
        return Err(ExperimentError::TooFewSamples(samples));
    }
    let mut cfg = config.clone();
    cfg.generations = samples as u64;
    cfg.policy = Policy::BaselineRandom;
    cfg.reward = RewardConfig {
        mode: RewardMode::CoverageR1,
        ..config.reward.clone()
    };
    cfg.history_policy = crate::fuzz_loop::HistoryPolicy::ResetEachStep;
    let seeds = load_seeds(&cfg.seed_paths)?;
    let report = run_on_seeds(&cfg, &seeds, target, None)?.report;
    if let Some(reason) = report.aborted {
        return Err(LoopError::Environment(HarnessError::Environment(reason)).into());
    }
    let blocks: Vec<f64> = report.records.iter().map(|r| r.blocks as f64).collect();
    let times: Vec<f64> = report.records.iter().map(|r| r.wall_time).collect();
    pearson(&blocks, &times)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepDimension {
    StateWidth,
    Activation,
    Gamma,
}

impl SweepDimension {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepDimension::StateWidth => "state_width",
            SweepDimension::Activation => "activation",
            SweepDimension::Gamma => "gamma",
        }
    }

    /// Applies one sweep value to a config.
    pub fn apply(self, config: &mut LoopConfig, value: &str) -> Result<(), ExperimentError> {
        let bad = |message: String| ExperimentError::SweepValue {
            value: value.to_owned(),
            message,
        };
        match self {
            SweepDimension::StateWidth => {
                let w: usize = value.parse().map_err(|_| bad("not a width".into()))?;
                if w == 0 {
                    return Err(bad("width must be positive".into()));
                }
                config.state_width = w;
            }
            SweepDimension::Activation => {
                config.network.activation = value.parse::<Activation>().map_err(bad)?;
            }
            SweepDimension::Gamma => {
                let g: f64 = value.parse().map_err(|_| bad("not a number".into()))?;
                if !(0.0..=1.0).contains(&g) {
                    return Err(bad("gamma outside [0, 1]".into()));
                }
                config.gamma = g;
            }
        }
        Ok(())
    }
}

impl FromStr for SweepDimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "state_width" | "width" => Ok(SweepDimension::StateWidth),
            "activation" => Ok(SweepDimension::Activation),
            "gamma" => Ok(SweepDimension::Gamma),
            other => Err(format!(
                "unknown sweep dimension {other:?} (expected state_width, activation or gamma)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub quotient: f64,
    pub min_quotient: f64,
    pub max_quotient: f64,
    pub rl_last500_sum: f64,
    pub baseline_last500_sum: f64,
    pub valid_trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    /// `Err` holds the reason the cell failed.
    pub cell: Result<SweepCell, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub dimension: SweepDimension,
    pub rows: Vec<SweepRow>,
}

const SWEEP_HEADER: &str = "value,quotient,min_quotient,max_quotient,rl_sum,baseline_sum,valid_trials,error";

impl SweepTable {
    pub fn to_text(&self) -> String {
        let mut out = format!("# sweep {}\n{SWEEP_HEADER}\n", self.dimension.as_str());
        for row in &self.rows {
            match &row.cell {
                Ok(c) => {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},",
                        row.value, c.quotient, c.min_quotient, c.max_quotient, c.rl_last500_sum, c.baseline_last500_sum, c.valid_trials
                    );
                }
                Err(e) => {
                    let _ = writeln!(out, "{},,,,,,0,{}", row.value, one_line(e));
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ExperimentError> {
        let perr = |line: usize, message: String| ExperimentError::Parse { line, message };
        let mut lines = text.lines().enumerate();
        let (_, head) = lines.next().ok_or_else(|| perr(1, "empty table".into()))?;
        let dimension: SweepDimension = head
            .strip_prefix("# sweep ")
            .ok_or_else(|| perr(1, "expected '# sweep <dimension>'".into()))?
            .trim()
            .parse()
            .map_err(|e| perr(1, e))?;
        let mut rows = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            if line.is_empty() || line == SWEEP_HEADER {
                continue;
            }
            let p: Vec<&str> = line.splitn(8, ',').collect();
            if p.len() != 8 {
                return Err(perr(line_no, format!("expected 8 fields, found {}", p.len())));
            }
            let cell = if p[1].is_empty() {
                Err(p[7].to_owned())
            } else {
                let num = |s: &str| s.parse::<f64>().map_err(|_| perr(line_no, format!("bad number {s:?}")));
                Ok(SweepCell {
                    quotient: num(p[1])?,
                    min_quotient: num(p[2])?,
                    max_quotient: num(p[3])?,
                    rl_last500_sum: num(p[4])?,
                    baseline_last500_sum: num(p[5])?,
                    valid_trials: p[6].parse().map_err(|_| perr(line_no, "bad count".into()))?,
                })
            };
            rows.push(SweepRow {
                value: p[0].to_owned(),
                cell,
            });
        }
        Ok(Self { dimension, rows })
    }
}

/// One `compare_baseline` per value, all with the same trial seeds. A cell
/// that fails is recorded and the sweep moves on.
pub fn sweep(
    dimension: SweepDimension,
    values: &[String],
    config: &LoopConfig,
    trials: usize,
    target: &mut dyn Target,
) -> Result<SweepTable, ExperimentError> {
    if values.is_empty() {
        return Err(ExperimentError::SweepValue {
            value: String::new(),
            message: "no values to sweep".into(),
        });
    }
    let mut rows = Vec::with_capacity(values.len());
    for value in values {
        let mut cfg = config.clone();
        let cell = dimension
            .apply(&mut cfg, value)
            .and_then(|()| compare_baseline(&cfg, trials, target))
            .map(|r| SweepCell {
                quotient: r.quotient,
                min_quotient: r.min_quotient,
                max_quotient: r.max_quotient,
                rl_last500_sum: r.rl_last500_sum,
                baseline_last500_sum: r.baseline_last500_sum,
                valid_trials: r.trials.len(),
            })
            .map_err(|e| one_line(&e.to_string()));
        if let Ok(c) = &cell {
            log::info!("{}={value}: quotient {:.4}", dimension.as_str(), c.quotient);
        }
        rows.push(SweepRow {
            value: value.clone(),
            cell,
        });
    }
    Ok(SweepTable { dimension, rows })
}
