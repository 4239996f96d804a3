//! Deterministic targets for tests and demonstrations.

use std::time::Duration;

use super::{BlockId, ExecutionTrace, HarnessError, Outcome, Target};

/// Hits block 1 exactly when the input is shorter than `seed_len`, so under
/// the memoryless coverage reward only deleting actions pay.
#[derive(Debug, Clone)]
pub struct RiggedTarget {
    pub seed_len: usize,
}

impl Target for RiggedTarget {
    fn execute(&mut self, input: &[u8], _timeout: Duration) -> Result<ExecutionTrace, HarnessError> {
        let blocks: Vec<BlockId> = if input.len() < self.seed_len { vec![1] } else { vec![] };
        Ok(ExecutionTrace::new(blocks, 0.0, Outcome::Completed))
    }

    fn describe(&self) -> String {
        format!("rigged(seed_len={})", self.seed_len)
    }
}

/// Reports a wall time that is a pure function of the input, and one block
/// per distinct leading byte value up to `blocks_from_prefix` bytes.
#[derive(Debug, Clone)]
pub struct FakeTimeTarget {
    pub seconds_per_byte: f64,
    pub blocks_from_prefix: usize,
}

impl Default for FakeTimeTarget {
    fn default() -> Self {
        Self {
            seconds_per_byte: 1e-7,
            blocks_from_prefix: 16,
        }
    }
}

impl Target for FakeTimeTarget {
    fn execute(&mut self, input: &[u8], _timeout: Duration) -> Result<ExecutionTrace, HarnessError> {
        let blocks = input
            .iter()
            .take(self.blocks_from_prefix)
            .map(|&b| BlockId::from(b));
        let wall_time = input.len() as f64 * self.seconds_per_byte;
        Ok(ExecutionTrace::new(blocks, wall_time, Outcome::Completed))
    }

    fn describe(&self) -> String {
        "fake-time".into()
    }
}

/// Never finishes on its own; reports a timeout after sleeping for the
/// allotted time (capped at `max_sleep`).
#[derive(Debug, Clone)]
pub struct HangingTarget {
    pub max_sleep: Duration,
}

impl Target for HangingTarget {
    fn execute(&mut self, _input: &[u8], timeout: Duration) -> Result<ExecutionTrace, HarnessError> {
        let slept = timeout.min(self.max_sleep);
        std::thread::sleep(slept);
        Ok(ExecutionTrace::new([], slept.as_secs_f64(), Outcome::TimedOut))
    }

    fn describe(&self) -> String {
        "hanging".into()
    }
}

/// Crashes whenever the input contains `needle`.
#[derive(Debug, Clone)]
pub struct CrashOnTarget {
    pub needle: Vec<u8>,
}

impl Target for CrashOnTarget {
    fn execute(&mut self, input: &[u8], _timeout: Duration) -> Result<ExecutionTrace, HarnessError> {
        let hit = !self.needle.is_empty() && input.windows(self.needle.len()).any(|w| w == self.needle);
        let outcome = if hit { Outcome::Crashed } else { Outcome::Completed };
        Ok(ExecutionTrace::new([0], 0.0, outcome))
    }

    fn describe(&self) -> String {
        "crash-on".into()
    }
}

/// Fails every call with an environment error.
#[derive(Debug, Clone, Default)]
pub struct BrokenTarget;

impl Target for BrokenTarget {
    fn execute(&mut self, _input: &[u8], _timeout: Duration) -> Result<ExecutionTrace, HarnessError> {
        Err(HarnessError::Environment("target is unavailable".into()))
    }

    fn describe(&self) -> String {
        "broken".into()
    }
}
