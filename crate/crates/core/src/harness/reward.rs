use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{BlockId, ExecutionTrace, HarnessError};

/// Multiplier that brings execution seconds onto the scale of block counts.
pub const DEFAULT_TIME_SCALE: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum RewardMode {
    /// Blocks not already in the history.
    #[serde(rename = "r1")]
    CoverageR1,
    /// Execution time in seconds.
    #[default]
    #[serde(rename = "r2")]
    TimeR2,
    /// Memoryless block count plus rescaled time.
    #[serde(rename = "r3")]
    CombinedR3,
}

impl RewardMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RewardMode::CoverageR1 => "r1",
            RewardMode::TimeR2 => "r2",
            RewardMode::CombinedR3 => "r3",
        }
    }
}

impl std::str::FromStr for RewardMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "r1" => Ok(RewardMode::CoverageR1),
            "r2" => Ok(RewardMode::TimeR2),
            "r3" => Ok(RewardMode::CombinedR3),
            other => Err(format!("unknown reward {other:?} (expected r1, r2 or r3)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub mode: RewardMode,
    #[serde(default = "default_scale")]
    pub time_scale: f64,
    /// Per-action bonus, indexed like the enabled actions. Missing
    /// entries count as zero.
    #[serde(default)]
    pub action_bonus: Vec<f64>,
}

fn default_scale() -> f64 {
    DEFAULT_TIME_SCALE
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self::new(RewardMode::default())
    }
}

impl RewardConfig {
    pub fn new(mode: RewardMode) -> Self {
        Self {
            mode,
            time_scale: DEFAULT_TIME_SCALE,
            action_bonus: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.time_scale > 0.0 && self.time_scale.is_finite()) {
            return Err(HarnessError::Config(format!(
                "time scale {} must be positive",
                self.time_scale
            )));
        }
        if self.action_bonus.iter().any(|b| !b.is_finite()) {
            return Err(HarnessError::Config("action bonus must be finite".into()));
        }
        Ok(())
    }

    pub fn bonus(&self, action: usize) -> f64 {
        self.action_bonus.get(action).copied().unwrap_or(0.0)
    }

    /// Base reward of the configured mode plus the action bonus.
    pub fn evaluate(&self, trace: &ExecutionTrace, history: &BlockHistory, action: usize) -> f64 {
        let base = match self.mode {
            RewardMode::CoverageR1 => reward_coverage(trace, history),
            RewardMode::TimeR2 => reward_time(trace),
            RewardMode::CombinedR3 => reward_combined(trace, self),
        };
        base + self.bonus(action)
    }
}

/// Blocks seen by earlier executions since the last reset.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BlockHistory {
    seen: BTreeSet<BlockId>,
}

impl BlockHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_blocks(blocks: impl IntoIterator<Item = BlockId>) -> Self {
        Self {
            seen: blocks.into_iter().collect(),
        }
    }

    pub fn merge(&mut self, trace: &ExecutionTrace) {
        self.seen.extend(trace.blocks.iter().copied());
    }

    pub fn clear(&mut self) {
        self.seen.clear();
    }

    pub fn seen(&self) -> &BTreeSet<BlockId> {
        &self.seen
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}

/// `|blocks \ history|`; the history is not modified.
pub fn reward_coverage(trace: &ExecutionTrace, history: &BlockHistory) -> f64 {
    trace
        .blocks
        .iter()
        .filter(|b| !history.seen.contains(b))
        .count() as f64
}

pub fn reward_time(trace: &ExecutionTrace) -> f64 {
    trace.wall_time
}

/// Block count against an empty history plus `time_scale` times the wall time.
pub fn reward_combined(trace: &ExecutionTrace, cfg: &RewardConfig) -> f64 {
    trace.blocks.len() as f64 + cfg.time_scale * trace.wall_time
}
