//! Exploiter reward transforms.
//!
//! The Minimax reward subtracts a scaled estimate of the frozen opponent's
//! value at the state it faces after the exploiter acts:
//!
//! ```text
//! r' = r - α γ (1 - d) (max_a Q_opp(s', a) + shift),   shift = |R_min|
//! ```
//!
//! With `max Q_opp ≥ R_min` the subtracted term is non-negative, so shaping
//! never adds reward. `d` is set when the exploiter's action ends the game,
//! i.e. the opponent never faces `s'`; a transition closed by the opponent's
//! reply is still shaped. In simultaneous-move games an exploiter transition is
//! paired with the opponent's earliest decision state at or after the tick
//! following the exploiter's action; several exploiter transitions may share
//! one opponent state.

use std::io::Write;
use std::marker::PhantomData;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dqn::{DqnError, FrozenModel};
use crate::game::Transition;
use crate::games::BoardGame;
use crate::minimax::{value_proxy, MinimaxConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExploiterError {
    #[error("non-finite input to the reward transform")]
    NonFiniteInput,
    #[error("traces come from different episodes ({exploiter} vs {opponent})")]
    EpisodeMismatch { exploiter: u64, opponent: u64 },
    #[error("trace is not sorted by timestamp")]
    UnsortedTrace,
    #[error("transition at tick {0} has no usable opponent state")]
    MissingPairing(u64),
    #[error("invalid reward configuration: {0}")]
    InvalidConfig(String),
    #[error("opponent evaluation failed: {0}")]
    Evaluator(String),
}

impl From<DqnError> for ExploiterError {
    fn from(e: DqnError) -> Self {
        ExploiterError::Evaluator(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    Vanilla,
    Minimax,
    GammaZero,
    Aggressive,
    Defensive,
}

impl RewardMode {
    pub const ALL: [RewardMode; 5] = [
        RewardMode::Vanilla,
        RewardMode::Minimax,
        RewardMode::GammaZero,
        RewardMode::Aggressive,
        RewardMode::Defensive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RewardMode::Vanilla => "vanilla",
            RewardMode::Minimax => "minimax",
            RewardMode::GammaZero => "gamma_zero",
            RewardMode::Aggressive => "aggressive",
            RewardMode::Defensive => "defensive",
        }
    }

    /// Whether the transform needs the opponent's value estimates.
    pub fn uses_opponent(self) -> bool {
        matches!(self, RewardMode::Minimax | RewardMode::GammaZero)
    }
}

impl std::fmt::Display for RewardMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for RewardMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "vanilla" => Ok(RewardMode::Vanilla),
            "minimax" => Ok(RewardMode::Minimax),
            "gamma_zero" | "gamma0" | "gammazero" => Ok(RewardMode::GammaZero),
            "aggressive" => Ok(RewardMode::Aggressive),
            "defensive" => Ok(RewardMode::Defensive),
            other => Err(format!("unknown reward mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExploiterRewardConfig {
    pub mode: RewardMode,
    /// Opponent-signal coefficient α.
    pub alpha: f64,
    /// γ inside the shaping term; independent of the learner's TD discount.
    pub discount: f64,
    pub reward_min: f64,
    pub reward_max: f64,
    pub shift: f64,
    /// Per-point bonus/penalty for the aggressive and defensive baselines.
    pub hit_reward: f64,
}

impl ExploiterRewardConfig {
    pub fn new(mode: RewardMode, alpha: f64, reward_min: f64, reward_max: f64) -> Self {
        Self {
            mode,
            alpha,
            discount: 0.995,
            reward_min,
            reward_max,
            shift: reward_min.abs(),
            hit_reward: 1.0,
        }
    }

    pub fn vanilla() -> Self {
        Self::new(RewardMode::Vanilla, 0.0, -1.0, 1.0)
    }

    /// Replaces the `|R_min|` shift by the negated running minimum of the
    /// opponent's own greedy values.
    pub fn with_value_floor(mut self, floor: f64) -> Self {
        self.shift = -floor;
        self
    }

    pub fn with_discount(mut self, discount: f64) -> Self {
        self.discount = discount;
        self
    }

    pub fn with_hit_reward(mut self, hit_reward: f64) -> Self {
        self.hit_reward = hit_reward;
        self
    }

    /// α actually applied: γ-0 always shapes at full strength.
    pub fn effective_alpha(&self) -> f64 {
        match self.mode {
            RewardMode::GammaZero => 1.0,
            _ => self.alpha,
        }
    }

    /// TD discount the consuming learner should use.
    pub fn learner_discount(&self, base: f64) -> f64 {
        match self.mode {
            RewardMode::GammaZero => 0.0,
            _ => base,
        }
    }

    pub fn validate(&self) -> Result<(), ExploiterError> {
        let bad = |m: String| Err(ExploiterError::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha {} outside [0, 1]", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return bad(format!("discount {} outside [0, 1]", self.discount));
        }
        if !(self.reward_min <= self.reward_max) {
            return bad(format!("reward bounds [{}, {}]", self.reward_min, self.reward_max));
        }
        if !self.shift.is_finite() || !self.hit_reward.is_finite() {
            return bad("shift and hit reward must be finite".into());
        }
        Ok(())
    }
}

/// `r - α γ (1 - d) (opp_max_q + shift)` using the configured α (γ-0 uses 1).
pub fn minimax_reward(
    r_env: f64,
    opp_max_q: f64,
    done: bool,
    cfg: &ExploiterRewardConfig,
) -> Result<f64, ExploiterError> {
    if !r_env.is_finite() || !opp_max_q.is_finite() {
        return Err(ExploiterError::NonFiniteInput);
    }
    if done {
        return Ok(r_env);
    }
    Ok(r_env - cfg.effective_alpha() * cfg.discount * (opp_max_q + cfg.shift))
}

/// True when the shaped addition is non-positive for this opponent value.
pub fn shift_bound_check(opp_max_q: f64, cfg: &ExploiterRewardConfig) -> bool {
    -opp_max_q - cfg.shift <= 0.0
}

/// Opponent decision state matched to an exploiter transition.
#[derive(Debug, Clone, PartialEq)]
pub struct OpponentState {
    pub timestamp: u64,
    pub state: Vec<f64>,
    pub legal: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedTransition {
    pub transition: Transition,
    /// `None` when the opponent never decides again: no shaping.
    pub opponent: Option<OpponentState>,
}

impl PairedTransition {
    pub fn pairing_timestamp(&self) -> Option<u64> {
        self.opponent.as_ref().map(|o| o.timestamp)
    }

    pub fn is_terminal_paired(&self) -> bool {
        self.opponent.is_none()
    }
}

fn check_sorted(trace: &[Transition]) -> Result<(), ExploiterError> {
    if trace.windows(2).all(|w| w[0].timestamp < w[1].timestamp) {
        Ok(())
    } else {
        Err(ExploiterError::UnsortedTrace)
    }
}

/// Pairs every exploiter transition at tick `t` with the opponent's earliest
/// decision state at tick `≥ t + 1`.
pub fn pair_transitions(
    exploiter: &[Transition],
    opponent: &[Transition],
) -> Result<Vec<PairedTransition>, ExploiterError> {
    check_sorted(exploiter)?;
    check_sorted(opponent)?;
    if let Some(first) = exploiter.first().or(opponent.first()) {
        if let Some(bad) = exploiter.iter().chain(opponent).find(|t| t.episode != first.episode) {
            return Err(ExploiterError::EpisodeMismatch {
                exploiter: first.episode,
                opponent: bad.episode,
            });
        }
    }
    Ok(exploiter
        .iter()
        .map(|t| {
            let after = t.timestamp + 1;
            let idx = opponent.partition_point(|o| o.timestamp < after);
            PairedTransition {
                transition: t.clone(),
                opponent: opponent.get(idx).map(|o| OpponentState {
                    timestamp: o.timestamp,
                    state: o.state.clone(),
                    legal: o.legal.clone(),
                }),
            }
        })
        .collect())
}

/// Read-only access to the frozen opponent's value at its own decision states.
pub trait OpponentEvaluator {
    /// Maximum Q over the legal actions of `state`.
    fn max_q(&self, state: &[f64], legal: &[bool]) -> Result<f64, ExploiterError>;
}

impl OpponentEvaluator for FrozenModel {
    fn max_q(&self, state: &[f64], legal: &[bool]) -> Result<f64, ExploiterError> {
        Ok(FrozenModel::max_q(self, state, legal)?)
    }
}

/// Uses the game-theoretic value of a scripted searcher as its "Q".
#[derive(Debug, Clone)]
pub struct MinimaxEvaluator<G> {
    pub config: MinimaxConfig,
    _game: PhantomData<fn() -> G>,
}

impl<G: BoardGame> MinimaxEvaluator<G> {
    pub fn new(config: MinimaxConfig) -> Self {
        Self {
            config,
            _game: PhantomData,
        }
    }
}

impl<G: BoardGame> OpponentEvaluator for MinimaxEvaluator<G> {
    fn max_q(&self, state: &[f64], _legal: &[bool]) -> Result<f64, ExploiterError> {
        let board = G::decode(state).map_err(|e| ExploiterError::Evaluator(e.to_string()))?;
        Ok(value_proxy(&board, board.to_move(), &self.config))
    }
}

/// Per-batch statistics for the audit log.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BatchAudit {
    pub transitions: usize,
    pub shaped: usize,
    pub terminal_paired: usize,
    pub bound_violations: usize,
    pub mean_shaped_reward: f64,
    pub mean_opp_max_q: f64,
}

/// Rewrites rewards according to `cfg.mode`.
pub fn transform_batch(
    batch: &[PairedTransition],
    evaluator: &dyn OpponentEvaluator,
    cfg: &ExploiterRewardConfig,
) -> Result<(Vec<Transition>, BatchAudit), ExploiterError> {
    let mut audit = BatchAudit {
        transitions: batch.len(),
        ..BatchAudit::default()
    };
    let mut q_sum = 0.0;
    let mut out = Vec::with_capacity(batch.len());
    for p in batch {
        let mut t = p.transition.clone();
        if p.opponent.is_none() {
            audit.terminal_paired += 1;
        }
        // d refers to the state the opponent faces after our action, so a
        // transition closed by the opponent's winning reply is still shaped.
        if p.opponent.is_some() {
            match cfg.mode {
                RewardMode::Vanilla => {}
                RewardMode::Aggressive => t.reward += cfg.hit_reward * t.damage_dealt as f64,
                RewardMode::Defensive => t.reward -= cfg.hit_reward * t.damage_taken as f64,
                RewardMode::Minimax | RewardMode::GammaZero => {
                    if let Some(opp) = &p.opponent {
                        if opp.state.is_empty() || !opp.legal.iter().any(|&l| l) {
                            return Err(ExploiterError::MissingPairing(t.timestamp));
                        }
                        let q = evaluator.max_q(&opp.state, &opp.legal)?;
                        if !shift_bound_check(q, cfg) {
                            audit.bound_violations += 1;
                        }
                        t.reward = minimax_reward(t.reward, q, false, cfg)?;
                        q_sum += q;
                        audit.shaped += 1;
                    }
                }
            }
        }
        out.push(t);
    }
    if !out.is_empty() {
        audit.mean_shaped_reward = out.iter().map(|t| t.reward).sum::<f64>() / out.len() as f64;
    }
    if audit.shaped > 0 {
        audit.mean_opp_max_q = q_sum / audit.shaped as f64;
    }
    Ok((out, audit))
}

/// CSV audit log, one row per transformed batch.
pub struct AuditLog<W: Write> {
    writer: csv::Writer<W>,
    batch: u64,
}

impl<W: Write> AuditLog<W> {
    pub fn new(out: W) -> Self {
        Self {
            writer: csv::Writer::from_writer(out),
            batch: 0,
        }
    }

    pub fn record(&mut self, audit: &BatchAudit) -> std::io::Result<()> {
        if self.batch == 0 {
            self.writer.write_record([
                "batch",
                "transitions",
                "shaped",
                "terminal_paired",
                "bound_violations",
                "mean_shaped_reward",
                "mean_opp_max_q",
            ])?;
        }
        self.writer.write_record([
            self.batch.to_string(),
            audit.transitions.to_string(),
            audit.shaped.to_string(),
            audit.terminal_paired.to_string(),
            audit.bound_violations.to_string(),
            audit.mean_shaped_reward.to_string(),
            audit.mean_opp_max_q.to_string(),
        ])?;
        self.batch += 1;
        Ok(())
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.writer.flush()
    }
}
