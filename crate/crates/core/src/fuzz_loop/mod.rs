//! The fuzzing loop: extract a window, pick an action, mutate a copy of the
//! seed, run the target, learn from the reward, restore the seed.

mod report;

pub use report::{Finding, GenerationRecord, ReportError, RunReport};

use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{
    baseline_select, greedy_action, q_target, select_action, AgentError, EpsilonSchedule,
    Experience, Exploration, ReplayConfig, ReplayMemory,
};
use crate::harness::{BlockHistory, HarnessError, Outcome, RewardConfig, Target};
use crate::mdp::{
    encode_state_with, extract_state, offset_range, validate_seed, ByteEncoding, Input,
    OffsetRegion, StateVector, StateWindow,
};
use crate::mutation::{
    apply_action, build_dictionary, default_actions, enabled_actions, ActionKind, ActionSpec,
    Effect, MutationContext, MutationError, TokenDictionary, DEFAULT_MAX_TOKENS,
    DEFAULT_MIN_TOKEN_LEN,
};
use crate::qnet::{Activation, LossReduction, Network, NetworkConfig, QNetError};

#[derive(Debug, thiserror::Error)]
pub enum LoopError {
    #[error("invalid loop config: {0}")]
    Config(String),
    #[error("seed: {0}")]
    Seed(String),
    #[error(transparent)]
    Environment(#[from] HarnessError),
    #[error(transparent)]
    Network(#[from] QNetError),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    #[default]
    Learned,
    BaselineRandom,
    /// Greedy actions from fixed weights, without exploration or updates.
    Frozen(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryPolicy {
    /// Clear the block history after every generation (memoryless coverage).
    #[default]
    ResetEachStep,
    /// Keep accumulating blocks across generations.
    Merge,
}

/// Q-network hyperparameters; layer sizes follow from the state width and
/// action count unless `hidden` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkParams {
    pub activation: Activation,
    pub learning_rate: f64,
    pub weight_init_max: f64,
    pub loss_reduction: LossReduction,
    pub hidden: Option<[usize; 2]>,
}

impl Default for NetworkParams {
    fn default() -> Self {
        let base = NetworkConfig::for_state(1, 1);
        Self {
            activation: base.activation,
            learning_rate: base.learning_rate,
            weight_init_max: base.weight_init_max,
            loss_reduction: base.loss_reduction,
            hidden: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    pub generations: u64,
    pub state_width: usize,
    pub rng_seed: u64,
    pub gamma: f64,
    pub policy: Policy,
    pub history_policy: HistoryPolicy,
    pub exploration: Exploration,
    pub encoding: ByteEncoding,
    pub offset_region: OffsetRegion,
    pub timeout_ms: u64,
    /// Empty means the bundled sample document.
    pub seed_paths: Vec<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub findings_dir: Option<PathBuf>,
    pub weights_out: Option<PathBuf>,
    pub reward: RewardConfig,
    pub epsilon: EpsilonSchedule,
    pub network: NetworkParams,
    pub replay: ReplayConfig,
    pub actions: Vec<ActionSpec>,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            generations: 1000,
            state_width: 32,
            rng_seed: 0,
            gamma: 0.5,
            policy: Policy::Learned,
            history_policy: HistoryPolicy::ResetEachStep,
            exploration: Exploration::ExcludeGreedy,
            encoding: ByteEncoding::Normalized,
            offset_region: OffsetRegion::Whole,
            timeout_ms: 1000,
            seed_paths: Vec::new(),
            dictionary: None,
            findings_dir: None,
            weights_out: None,
            reward: RewardConfig::default(),
            epsilon: EpsilonSchedule::default(),
            network: NetworkParams::default(),
            replay: ReplayConfig::default(),
            actions: default_actions(),
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), LoopError> {
        let bad = |m: String| Err(LoopError::Config(m));
        if self.generations == 0 {
            return bad("generations must be at least 1".into());
        }
        if self.state_width == 0 {
            return bad("state width must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if self.timeout_ms == 0 {
            return bad("timeout must be positive".into());
        }
        if self.replay.enabled && self.replay.capacity == 0 {
            return bad("replay capacity must be positive".into());
        }
        self.reward
            .validate()
            .map_err(|e| LoopError::Config(e.to_string()))?;
        self.epsilon
            .validate()
            .map_err(|e| LoopError::Config(e.to_string()))?;
        enabled_actions(&self.actions).map_err(|e| LoopError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, LoopError> {
        let cfg: LoopConfig = toml::from_str(text).map_err(|e| LoopError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("every config field is representable in TOML")
    }

    pub fn load(path: &Path) -> Result<Self, LoopError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LoopError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn network_config(&self, action_count: usize) -> NetworkConfig {
        let mut cfg = NetworkConfig::for_state(self.state_width, action_count);
        if let Some(hidden) = self.network.hidden {
            cfg.hidden_dims = hidden;
        }
        cfg.activation = self.network.activation;
        cfg.learning_rate = self.network.learning_rate;
        cfg.weight_init_max = self.network.weight_init_max;
        cfg.loss_reduction = self.network.loss_reduction;
        cfg
    }
}

/// Independent random streams derived from one seed. The offset stream does
/// not depend on the policy, so runs with equal seeds see equal windows.
struct Streams {
    offset: ChaCha8Rng,
    policy: ChaCha8Rng,
    mutation: ChaCha8Rng,
    init: ChaCha8Rng,
    replay: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let stream = |n: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(n);
            rng
        };
        Self {
            offset: stream(1),
            policy: stream(2),
            mutation: stream(3),
            init: stream(4),
            replay: stream(5),
        }
    }
}

/// A finished (or aborted) run and the network it ended with.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub network: Option<Network>,
}

pub fn load_seeds(paths: &[PathBuf]) -> Result<Vec<Input>, LoopError> {
    if paths.is_empty() {
        return Ok(vec![Input::new(crate::sample::SAMPLE_SEED).expect("bundled seed is non-empty")]);
    }
    paths
        .iter()
        .map(|p| {
            let bytes =
                std::fs::read(p).map_err(|e| LoopError::Seed(format!("{}: {e}", p.display())))?;
            Input::new(bytes).map_err(|e| LoopError::Seed(format!("{}: {e}", p.display())))
        })
        .collect()
}

/// Loads seeds, dictionary and frozen weights named by `config`, then runs.
pub fn run(config: &LoopConfig, target: &mut dyn Target) -> Result<RunOutput, LoopError> {
    let seeds = load_seeds(&config.seed_paths)?;
    let initial = match &config.policy {
        Policy::Frozen(path) => Some(Network::load(path)?),
        _ => None,
    };
    run_on_seeds(config, &seeds, target, initial)
}

/// Returns the pristine seed and applies the history policy.
pub fn reset(seed: &Input, history: &mut BlockHistory, policy: HistoryPolicy) -> Input {
    if policy == HistoryPolicy::ResetEachStep {
        history.clear();
    }
    seed.clone()
}

pub fn run_on_seeds(
    config: &LoopConfig,
    seeds: &[Input],
    target: &mut dyn Target,
    initial: Option<Network>,
) -> Result<RunOutput, LoopError> {
    config.validate()?;
    if seeds.is_empty() {
        return Err(LoopError::Seed("no seeds".into()));
    }
    for seed in seeds {
        validate_seed(seed, config.state_width).map_err(|e| LoopError::Seed(e.to_string()))?;
        offset_range(seed.len(), config.state_width, config.offset_region)
            .map_err(|e| LoopError::Seed(format!("{:?} offsets: {e}", config.offset_region)))?;
    }
    let actions = enabled_actions(&config.actions).map_err(|e| LoopError::Config(e.to_string()))?;
    let dictionary = match &config.dictionary {
        Some(path) => TokenDictionary::load(path).map_err(|e| LoopError::Config(e.to_string()))?,
        None => build_dictionary(seeds, DEFAULT_MIN_TOKEN_LEN, DEFAULT_MAX_TOKENS)
            .map_err(|e| LoopError::Config(e.to_string()))?,
    };

    if dictionary.is_empty() && actions.contains(&ActionKind::InsertToken) {
        log::warn!("token dictionary is empty; insert_token will leave inputs unchanged");
    }

    let mut streams = Streams::new(config.rng_seed);
    let net_config = config.network_config(actions.len());
    let mut network = match (&config.policy, initial) {
        (Policy::BaselineRandom, _) => None,
        (Policy::Learned, None) => {
            net_config.validate_for_fuzzing()?;
            Some(Network::init(net_config, &mut streams.init)?)
        }
        (_, Some(net)) => Some(net),
        (Policy::Frozen(path), None) => Some(Network::load(path)?),
    };
    if let Some(net) = &network {
        let cfg = net.config();
        if cfg.input_dim != config.state_width || cfg.output_dim != actions.len() {
            return Err(LoopError::Config(format!(
                "network is {}->{} but the loop needs {}->{}",
                cfg.input_dim,
                cfg.output_dim,
                config.state_width,
                actions.len()
            )));
        }
    }

    let timeout = config.timeout();
    target.execute(seeds[0].as_bytes(), timeout)?;

    let mut looper = Looper {
        config,
        seeds,
        actions: &actions,
        dictionary: &dictionary,
        ctx: MutationContext {
            max_width: config.state_width,
            ..MutationContext::default()
        },
        history: BlockHistory::new(),
        replay: config
            .replay
            .enabled
            .then(|| ReplayMemory::new(config.replay.capacity)),
        streams,
        report: RunReport::new(config.clone(), actions.iter().map(ActionKind::name).collect()),
    };
    if let Err(reason) = looper.run(target, network.as_mut()) {
        log::warn!("run aborted after {} generations: {reason}", looper.report.records.len());
        looper.report.aborted = Some(reason);
    }

    let mut report = looper.report;
    if let (Some(path), Some(net), Policy::Learned) = (&config.weights_out, &network, &config.policy) {
        net.save(path)?;
        report.weights = Some(path.clone());
    }
    Ok(RunOutput { report, network })
}

struct Looper<'a> {
    config: &'a LoopConfig,
    seeds: &'a [Input],
    actions: &'a [ActionKind],
    dictionary: &'a TokenDictionary,
    ctx: MutationContext,
    history: BlockHistory,
    replay: Option<ReplayMemory>,
    streams: Streams,
    report: RunReport,
}

impl Looper<'_> {
    fn seed_for(&self, generation: u64) -> &Input {
        &self.seeds[(generation % self.seeds.len() as u64) as usize]
    }

    fn draw_window(&mut self, generation: u64, width: usize) -> Result<StateWindow, String> {
        let seed = self.seed_for(generation).clone();
        let width = width.min(seed.len());
        let region = if width == self.config.state_width {
            self.config.offset_region
        } else {
            OffsetRegion::Whole
        };
        let range = offset_range(seed.len(), width, region).map_err(|e| e.to_string())?;
        let offset = rand::Rng::gen_range(&mut self.streams.offset, range);
        extract_state(&seed, offset, width).map_err(|e| e.to_string())
    }

    fn encode(&self, window: &StateWindow) -> StateVector {
        encode_state_with(window, self.config.encoding, self.config.state_width)
    }

    fn choose(&mut self, network: Option<&Network>, state: &StateVector, epsilon: f64) -> Result<usize, String> {
        let agent_err = |e: AgentError| e.to_string();
        match (&self.config.policy, network) {
            (Policy::BaselineRandom, _) | (_, None) => {
                Ok(baseline_select(self.actions.len(), &mut self.streams.policy))
            }
            (policy, Some(net)) => {
                let q = net.forward(state.values()).map_err(|e| e.to_string())?;
                if *policy == Policy::Learned {
                    select_action(&q, epsilon, self.config.exploration, &mut self.streams.policy)
                        .map_err(agent_err)
                } else {
                    greedy_action(&q).map_err(agent_err)
                }
            }
        }
    }

    fn persist_finding(&mut self, generation: u64, outcome: Outcome, input: &Input) -> Result<(), String> {
        let path = match &self.config.findings_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
                let path = dir.join(format!("{generation}_{outcome}.bin"));
                std::fs::write(&path, input.as_bytes())
                    .map_err(|e| format!("{}: {e}", path.display()))?;
                Some(path)
            }
            None => None,
        };
        self.report.findings.push(Finding {
            generation,
            outcome,
            len: input.len(),
            path,
        });
        Ok(())
    }

    fn run(&mut self, target: &mut dyn Target, mut network: Option<&mut Network>) -> Result<(), String> {
        let cfg = self.config;
        let timeout = cfg.timeout();
        let mut window = self.draw_window(0, cfg.state_width)?;

        for generation in 0..cfg.generations {
            let seed = self.seed_for(generation).clone();
            let state = self.encode(&window);
            let epsilon = match cfg.policy {
                Policy::Learned => cfg.epsilon.epsilon_at(generation),
                Policy::BaselineRandom => 1.0,
                Policy::Frozen(_) => 0.0,
            };
            let action = self.choose(network.as_deref(), &state, epsilon)?;

            let mutation = match apply_action(
                &seed,
                &window,
                &self.actions[action],
                self.dictionary,
                &self.ctx,
                &mut self.streams.mutation,
            ) {
                Ok(m) => m,
                Err(MutationError::DegenerateInput { .. }) => crate::mutation::Mutation {
                    input: seed.clone(),
                    effect: Effect::NoOp,
                },
                Err(e) => return Err(format!("generation {generation}: {e}")),
            };

            let trace = target
                .execute(mutation.input.as_bytes(), timeout)
                .map_err(|e| format!("generation {generation}: {e}"))?;
            let reward = cfg.reward.evaluate(&trace, &self.history, action);
            if !reward.is_finite() {
                return Err(format!("generation {generation}: reward {reward} is not finite"));
            }
            if trace.outcome.is_finding() {
                self.persist_finding(generation, trace.outcome, &mutation.input)?;
            }
            if cfg.history_policy == HistoryPolicy::Merge {
                self.history.merge(&trace);
            }

            let mut next_width = window.width();
            match mutation.effect {
                Effect::FlipRatioScale(scale) => self.ctx.flip_ratio_scale = scale,
                Effect::View { width, .. } => next_width = width,
                _ => {}
            }
            let next_window = match mutation.effect {
                Effect::View { offset, width } => {
                    let next_seed = self.seed_for(generation + 1).clone();
                    match extract_state(&next_seed, offset, width) {
                        Ok(w) => w,
                        Err(_) => self.draw_window(generation + 1, next_width)?,
                    }
                }
                _ => self.draw_window(generation + 1, next_width)?,
            };

            let mut loss = None;
            if let (Some(net), Policy::Learned) = (network.as_deref_mut(), &cfg.policy) {
                let next_state = self.encode(&next_window);
                loss = Some(self.learn(net, &state, action, reward, &next_state, generation)?);
            }

            let _ = reset(&seed, &mut self.history, cfg.history_policy);
            self.report.push(GenerationRecord {
                generation,
                offset: window.offset(),
                action,
                reward,
                epsilon,
                loss,
                outcome: trace.outcome,
                blocks: trace.blocks.len(),
                wall_time: trace.wall_time,
            });
            window = next_window;
        }
        Ok(())
    }

    fn learn(
        &mut self,
        net: &mut Network,
        state: &StateVector,
        action: usize,
        reward: f64,
        next_state: &StateVector,
        generation: u64,
    ) -> Result<f64, String> {
        let gamma = self.config.gamma;
        let step = |net: &mut Network, s: &StateVector, a: usize, r: f64, next: &StateVector| {
            let next_q = net.forward(next.values())?;
            net.train_step(s.values(), a, q_target(r, gamma, &next_q))
        };
        let diag = |e: QNetError| format!("generation {generation}: {e}");
        let loss = step(net, state, action, reward, next_state).map_err(diag)?;
        if let Some(memory) = self.replay.as_mut() {
            memory.store(Experience {
                state: state.clone(),
                action,
                reward,
                next_state: next_state.clone(),
            });
            let e = memory.sample(&mut self.streams.replay).map_err(|e| e.to_string())?.clone();
            step(net, &e.state, e.action, e.reward, &e.next_state).map_err(diag)?;
        }
        Ok(loss)
    }
}
