//! Target execution and reward evaluation.
//!
//! A [`Target`] runs one candidate input and reports an [`ExecutionTrace`]:
//! the distinct basic blocks it hit, how long the run took, and how it ended.
//! Rewards are pure functions of traces (plus the block history for the
//! coverage reward).

mod external;
pub mod miniparser;
mod reward;
pub mod testing;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use external::{CommandTarget, COVERAGE_ENV_VAR, INPUT_PLACEHOLDER};
pub use miniparser::{builtin_miniparser, MiniParser};
pub use reward::{
    reward_combined, reward_coverage, reward_time, BlockHistory, RewardConfig, RewardMode,
    DEFAULT_TIME_SCALE,
};

pub type BlockId = u32;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error("target environment: {0}")]
    Environment(String),
    #[error("invalid reward config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    RejectedEarly,
    Crashed,
    TimedOut,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Completed => "completed",
            Outcome::RejectedEarly => "rejected_early",
            Outcome::Crashed => "crashed",
            Outcome::TimedOut => "timed_out",
        }
    }

    /// Outcomes worth keeping the input for.
    pub fn is_finding(self) -> bool {
        matches!(self, Outcome::Crashed | Outcome::TimedOut)
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "completed" => Ok(Outcome::Completed),
            "rejected_early" => Ok(Outcome::RejectedEarly),
            "crashed" => Ok(Outcome::Crashed),
            "timed_out" => Ok(Outcome::TimedOut),
            other => Err(format!("unknown outcome {other:?}")),
        }
    }
}

/// Result of running one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionTrace {
    pub blocks: BTreeSet<BlockId>,
    /// Seconds.
    pub wall_time: f64,
    pub outcome: Outcome,
}

impl ExecutionTrace {
    pub fn new(blocks: impl IntoIterator<Item = BlockId>, wall_time: f64, outcome: Outcome) -> Self {
        Self {
            blocks: blocks.into_iter().collect(),
            wall_time: wall_time.max(0.0),
            outcome,
        }
    }
}

pub trait Target {
    /// Runs `input` once. Crashes and timeouts are outcomes; `Err` is reserved
    /// for a broken environment (missing binary, unreadable coverage channel).
    fn execute(&mut self, input: &[u8], timeout: Duration) -> Result<ExecutionTrace, HarnessError>;

    fn describe(&self) -> String;
}

impl<T: Target + ?Sized> Target for &mut T {
    fn execute(&mut self, input: &[u8], timeout: Duration) -> Result<ExecutionTrace, HarnessError> {
        (**self).execute(input, timeout)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

impl<T: Target + ?Sized> Target for Box<T> {
    fn execute(&mut self, input: &[u8], timeout: Duration) -> Result<ExecutionTrace, HarnessError> {
        (**self).execute(input, timeout)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

/// `execute` for any target, with a positive-timeout check.
pub fn execute(
    target: &mut dyn Target,
    input: &[u8],
    timeout: Duration,
) -> Result<ExecutionTrace, HarnessError> {
    if timeout.is_zero() {
        return Err(HarnessError::Environment("timeout must be positive".into()));
    }
    target.execute(input, timeout)
}

/// Variance over squared mean of repeated wall times; small values mean the
/// time reward is stable on this machine.
pub fn timing_dispersion(times: &[f64]) -> Option<f64> {
    if times.len() < 2 {
        return None;
    }
    let n = times.len() as f64;
    let mean = times.iter().sum::<f64>() / n;
    if mean <= 0.0 {
        return None;
    }
    let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some(var / (mean * mean))
}
