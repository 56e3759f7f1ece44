use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::dqn::DqnConfig;
use crate::exploiter::{ExploiterRewardConfig, RewardMode};
use crate::games::{make_environment, ENVIRONMENT_IDS};
use crate::minimax::SearchDepth;
use crate::neural::{LossKind, MlpSpec};

/// One experiment: an environment, a learner configuration and the seeds to run.
///
/// ```toml
/// name = "tictactoe-minimax"
/// environment = "tictactoe"
/// mode = "minimax"
/// seeds = [0, 1, 2, 3, 4]
/// output_dir = "runs/tictactoe-minimax"
///
/// [budget]
/// max_env_steps = 200000
///
/// [reward]
/// alpha = 0.1
///
/// [opponent]
/// kind = "minimax"
/// depth = "unlimited"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub environment: String,
    pub mode: RewardMode,
    pub seeds: Vec<u64>,
    #[serde(default = "defaults::eval_interval")]
    pub eval_interval: u64,
    #[serde(default = "defaults::eval_episodes")]
    pub eval_episodes: u64,
    #[serde(default)]
    pub output_dir: PathBuf,
    /// Save a checkpoint every this many evaluations (0: final only).
    #[serde(default)]
    pub checkpoint_every: u64,
    /// Worker threads for running seeds; defaults to the available cores.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub budget: BudgetSection,
    #[serde(default)]
    pub reward: RewardSection,
    #[serde(default)]
    pub agent: AgentSection,
    #[serde(default)]
    pub opponent: OpponentSection,
    #[serde(default)]
    pub league: LeagueSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    pub max_env_steps: Option<u64>,
    pub max_wall_seconds: Option<f64>,
    /// Stop a seed early once an evaluation reaches this score.
    pub stop_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSection {
    #[serde(default)]
    pub alpha: f64,
    /// γ inside the shaping term.
    #[serde(default = "defaults::discount")]
    pub discount: f64,
    #[serde(default = "defaults::hit_reward")]
    pub hit_reward: f64,
    /// Overrides the environment's lower reward bound.
    #[serde(default)]
    pub reward_min: Option<f64>,
    /// Shift by the opponent's tracked value floor instead of `|R_min|`
    /// (learned opponents only).
    #[serde(default)]
    pub use_value_floor: bool,
}

impl Default for RewardSection {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            discount: defaults::discount(),
            hit_reward: defaults::hit_reward(),
            reward_min: None,
            use_value_floor: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    #[serde(default = "defaults::hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "defaults::discount")]
    pub discount: f64,
    #[serde(default = "defaults::epsilon")]
    pub epsilon: f64,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::replay_capacity")]
    pub replay_capacity: usize,
    #[serde(default = "defaults::target_sync")]
    pub target_sync: u64,
    #[serde(default = "defaults::learn_start")]
    pub learn_start: usize,
    /// Agent decisions per optimizer step.
    #[serde(default = "defaults::train_every")]
    pub train_every: u64,
    /// Huber loss with this δ; squared error when absent.
    #[serde(default)]
    pub huber_delta: Option<f64>,
}

impl Default for AgentSection {
    fn default() -> Self {
        Self {
            hidden: defaults::hidden(),
            discount: defaults::discount(),
            epsilon: defaults::epsilon(),
            learning_rate: defaults::learning_rate(),
            batch_size: defaults::batch_size(),
            replay_capacity: defaults::replay_capacity(),
            target_sync: defaults::target_sync(),
            learn_start: defaults::learn_start(),
            train_every: defaults::train_every(),
            huber_delta: None,
        }
    }
}

impl AgentSection {
    pub fn dqn_config(&self) -> DqnConfig {
        DqnConfig {
            discount: self.discount,
            epsilon: self.epsilon,
            replay_capacity: self.replay_capacity,
            batch_size: self.batch_size,
            target_sync_period: self.target_sync,
            learn_start: self.learn_start,
            learning_rate: self.learning_rate,
            loss: match self.huber_delta {
                Some(delta) => LossKind::Huber { delta },
                None => LossKind::Mse,
            },
        }
    }

    pub fn spec(&self, input_dim: usize, output_dim: usize) -> MlpSpec {
        MlpSpec::with_layers(input_dim, self.hidden.clone(), output_dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpponentKind {
    /// Negamax searcher (board games).
    #[default]
    Minimax,
    /// Rule-based duelist (DuelSim).
    Scripted,
    /// Uniformly random legal moves.
    Random,
    /// Main agent / main exploiter league (DuelSim).
    League,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DepthValue {
    Plies(u32),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpponentSection {
    #[serde(default)]
    pub kind: OpponentKind,
    #[serde(default = "defaults::depth")]
    pub depth: DepthValue,
    /// Attack / block / recover weights of the scripted duelist.
    #[serde(default)]
    pub scripted_weights: Option<[f64; 3]>,
}

impl Default for OpponentSection {
    fn default() -> Self {
        Self {
            kind: OpponentKind::default(),
            depth: defaults::depth(),
            scripted_weights: None,
        }
    }
}

impl OpponentSection {
    pub fn search_depth(&self) -> Result<SearchDepth, HarnessError> {
        match &self.depth {
            DepthValue::Plies(0) => Err(HarnessError::ConfigInvalid("opponent depth must be ≥ 1".into())),
            DepthValue::Plies(d) => Ok(SearchDepth::Limited(*d)),
            DepthValue::Named(s) => match s.parse::<SearchDepth>() {
                Ok(SearchDepth::Limited(0)) => Err(HarnessError::ConfigInvalid("opponent depth must be ≥ 1".into())),
                Ok(d) => Ok(d),
                Err(e) => Err(HarnessError::ConfigInvalid(e)),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeagueSection {
    #[serde(default = "defaults::threshold")]
    pub threshold: f64,
    #[serde(default = "defaults::window")]
    pub window: usize,
    /// Cap on main-agent pretraining against the scripted opponent; not
    /// counted against the league budget.
    #[serde(default = "defaults::pretrain_max_steps")]
    pub pretrain_max_steps: u64,
    /// ε used by frozen pool members when they play.
    #[serde(default = "defaults::epsilon")]
    pub opponent_epsilon: f64,
}

impl Default for LeagueSection {
    fn default() -> Self {
        Self {
            threshold: defaults::threshold(),
            window: defaults::window(),
            pretrain_max_steps: defaults::pretrain_max_steps(),
            opponent_epsilon: defaults::epsilon(),
        }
    }
}

mod defaults {
    use super::DepthValue;

    pub fn eval_interval() -> u64 {
        100
    }
    pub fn eval_episodes() -> u64 {
        100
    }
    pub fn discount() -> f64 {
        0.995
    }
    pub fn hit_reward() -> f64 {
        1.0
    }
    pub fn hidden() -> Vec<usize> {
        vec![64, 64]
    }
    pub fn epsilon() -> f64 {
        0.01
    }
    pub fn learning_rate() -> f64 {
        1e-3
    }
    pub fn batch_size() -> usize {
        64
    }
    pub fn replay_capacity() -> usize {
        100_000
    }
    pub fn target_sync() -> u64 {
        1000
    }
    pub fn learn_start() -> usize {
        1000
    }
    pub fn train_every() -> u64 {
        1
    }
    pub fn depth() -> DepthValue {
        DepthValue::Named("unlimited".into())
    }
    pub fn threshold() -> f64 {
        0.85
    }
    pub fn window() -> usize {
        200
    }
    pub fn pretrain_max_steps() -> u64 {
        2_000_000
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config; a relative `output_dir` is resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if cfg.output_dir.is_relative() {
            if let Some(parent) = path.parent() {
                cfg.output_dir = parent.join(&cfg.output_dir);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::ConfigInvalid(m.to_string()));
        if !ENVIRONMENT_IDS.contains(&self.environment.as_str()) {
            return Err(HarnessError::EnvironmentUnknown(self.environment.clone()));
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if self.budget.max_env_steps.is_none() && self.budget.max_wall_seconds.is_none() {
            return bad("set budget.max_env_steps and/or budget.max_wall_seconds");
        }
        if self.eval_interval == 0 || self.eval_episodes == 0 {
            return bad("eval_interval and eval_episodes must be positive");
        }
        if self.agent.train_every == 0 {
            return bad("agent.train_every must be positive");
        }
        if self.agent.hidden.iter().any(|&h| h == 0) {
            return bad("hidden layer sizes must be positive");
        }
        self.agent.dqn_config().validate()?;
        self.reward_config()?.validate()?;
        let board = self.environment != "duelsim";
        match self.opponent.kind {
            OpponentKind::Minimax if !board => return bad("minimax opponents need a board game"),
            OpponentKind::Scripted | OpponentKind::League if board => {
                return bad("scripted and league opponents are DuelSim only")
            }
            _ => {}
        }
        self.opponent.search_depth()?;
        if self.mode.uses_opponent() && matches!(self.opponent.kind, OpponentKind::Scripted | OpponentKind::Random) {
            return bad("minimax and gamma-zero modes need an opponent with a value function");
        }
        if self.opponent.kind == OpponentKind::League {
            let l = &self.league;
            if !(l.threshold > 0.0 && l.threshold <= 1.0) || l.window == 0 {
                return bad("league threshold must be in (0, 1] and window ≥ 1");
            }
        }
        Ok(())
    }

    pub fn reward_config(&self) -> Result<ExploiterRewardConfig, HarnessError> {
        let env = make_environment(&self.environment)?;
        let (lo, hi) = env.reward_bounds();
        let lo = self.reward.reward_min.unwrap_or(lo);
        Ok(ExploiterRewardConfig::new(self.mode, self.reward.alpha, lo, hi)
            .with_discount(self.reward.discount)
            .with_hit_reward(self.reward.hit_reward))
    }

    pub fn workers(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .clamp(1, self.seeds.len())
    }
}
