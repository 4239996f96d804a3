//! Action selection and the learning target.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mdp::StateVector;
use crate::qnet::argmax;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("no Q-values to choose from")]
    EmptyQValues,
    #[error("Q-value {index} is not finite ({value})")]
    NonFiniteQ { index: usize, value: f64 },
    #[error("replay memory is empty")]
    EmptyMemory,
    #[error("invalid epsilon schedule: {0}")]
    Schedule(String),
}

/// Linear decay from `eps_start` to `eps_final` over `decay_steps` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub eps_start: f64,
    pub eps_final: f64,
    pub decay_steps: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            eps_start: 1.0,
            eps_final: 0.1,
            decay_steps: 500,
        }
    }
}

impl EpsilonSchedule {
    pub fn validate(&self) -> Result<(), AgentError> {
        let ok = (0.0..=1.0).contains(&self.eps_start)
            && (0.0..=1.0).contains(&self.eps_final)
            && self.eps_final <= self.eps_start
            && self.decay_steps >= 1;
        if ok {
            Ok(())
        } else {
            Err(AgentError::Schedule(format!("{self:?}")))
        }
    }

    pub fn epsilon_at(&self, step: u64) -> f64 {
        if step >= self.decay_steps {
            return self.eps_final;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.eps_start + (self.eps_final - self.eps_start) * frac
    }
}

/// What an exploration step may pick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exploration {
    /// Uniform over the actions other than the greedy one.
    #[default]
    ExcludeGreedy,
    /// Uniform over all actions (textbook epsilon-greedy).
    Uniform,
}

pub fn greedy_action(q_values: &[f64]) -> Result<usize, AgentError> {
    if let Some((index, &value)) = q_values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(AgentError::NonFiniteQ { index, value });
    }
    argmax(q_values).ok_or(AgentError::EmptyQValues)
}

pub fn select_action<R: Rng + ?Sized>(
    q_values: &[f64],
    epsilon: f64,
    exploration: Exploration,
    rng: &mut R,
) -> Result<usize, AgentError> {
    let greedy = greedy_action(q_values)?;
    let n = q_values.len();
    if !rng.gen_bool(epsilon.clamp(0.0, 1.0)) {
        return Ok(greedy);
    }
    match exploration {
        Exploration::Uniform => Ok(rng.gen_range(0..n)),
        Exploration::ExcludeGreedy if n == 1 => Ok(greedy),
        Exploration::ExcludeGreedy => {
            let pick = rng.gen_range(0..n - 1);
            Ok(if pick >= greedy { pick + 1 } else { pick })
        }
    }
}

/// `reward + gamma * max(next_q)`; an empty `next_q` means a terminal state.
pub fn q_target(reward: f64, gamma: f64, next_q: &[f64]) -> f64 {
    let best = next_q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if best.is_finite() {
        reward + gamma * best
    } else {
        reward
    }
}

/// The state-independent uniform policy used as the comparison baseline.
pub fn baseline_select<R: Rng + ?Sized>(action_count: usize, rng: &mut R) -> usize {
    assert!(action_count >= 1, "baseline needs at least one action");
    rng.gen_range(0..action_count)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: StateVector,
    pub action: usize,
    pub reward: f64,
    pub next_state: StateVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayConfig {
    pub enabled: bool,
    pub capacity: usize,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            capacity: 10_000,
        }
    }
}

/// FIFO ring of past transitions.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    buffer: VecDeque<Experience>,
    capacity: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        Self {
            buffer: VecDeque::with_capacity(capacity.min(1024)),
            capacity,
        }
    }

    pub fn store(&mut self, e: Experience) {
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(e);
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<&Experience, AgentError> {
        if self.buffer.is_empty() {
            return Err(AgentError::EmptyMemory);
        }
        Ok(&self.buffer[rng.gen_range(0..self.buffer.len())])
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.buffer.iter()
    }
}
