//! Two-player zero-sum environment contract.
//!
//! Turn-based games expose a single role in [`StepOutcome::decision_owner`] that
//! alternates every tick; simultaneous games may expose both roles at once, or
//! only one of them while the other is disabled. Time is an integer tick that
//! advances by exactly one per [`Environment::step`].

use std::fmt;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index into an environment's discrete action space.
pub type Action = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlayerRole {
    First,
    Second,
}

impl PlayerRole {
    pub const BOTH: [PlayerRole; 2] = [PlayerRole::First, PlayerRole::Second];

    pub fn opponent(self) -> PlayerRole {
        match self {
            PlayerRole::First => PlayerRole::Second,
            PlayerRole::Second => PlayerRole::First,
        }
    }

    pub fn index(self) -> usize {
        match self {
            PlayerRole::First => 0,
            PlayerRole::Second => 1,
        }
    }

    pub fn from_index(index: usize) -> PlayerRole {
        if index == 0 {
            PlayerRole::First
        } else {
            PlayerRole::Second
        }
    }
}

impl fmt::Display for PlayerRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlayerRole::First => f.write_str("first"),
            PlayerRole::Second => f.write_str("second"),
        }
    }
}

/// Set of roles allowed to act at the current tick.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleSet {
    first: bool,
    second: bool,
}

impl RoleSet {
    pub const EMPTY: RoleSet = RoleSet { first: false, second: false };
    pub const BOTH: RoleSet = RoleSet { first: true, second: true };

    pub fn only(role: PlayerRole) -> RoleSet {
        let mut set = RoleSet::EMPTY;
        set.insert(role);
        set
    }

    pub fn insert(&mut self, role: PlayerRole) {
        match role {
            PlayerRole::First => self.first = true,
            PlayerRole::Second => self.second = true,
        }
    }

    pub fn contains(&self, role: PlayerRole) -> bool {
        match role {
            PlayerRole::First => self.first,
            PlayerRole::Second => self.second,
        }
    }

    pub fn is_empty(&self) -> bool {
        !self.first && !self.second
    }

    pub fn len(&self) -> usize {
        self.first as usize + self.second as usize
    }

    pub fn iter(&self) -> impl Iterator<Item = PlayerRole> + '_ {
        PlayerRole::BOTH.into_iter().filter(|r| self.contains(*r))
    }
}

/// Actions submitted for one tick, keyed by role.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct JointAction([Option<Action>; 2]);

impl JointAction {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(role: PlayerRole, action: Action) -> Self {
        let mut joint = Self::default();
        joint.set(role, action);
        joint
    }

    pub fn both(first: Action, second: Action) -> Self {
        Self([Some(first), Some(second)])
    }

    pub fn set(&mut self, role: PlayerRole, action: Action) {
        self.0[role.index()] = Some(action);
    }

    pub fn get(&self, role: PlayerRole) -> Option<Action> {
        self.0[role.index()]
    }
}

/// Per-step side information used by dense-reward baselines.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepEvents {
    /// Damage dealt by each role during the step.
    pub damage_dealt: [u32; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub observations: [Vec<f64>; 2],
    pub rewards: [f64; 2],
    pub done: bool,
    pub decision_owner: RoleSet,
    pub timestamp: u64,
    pub events: StepEvents,
}

impl StepOutcome {
    pub fn observation(&self, role: PlayerRole) -> &[f64] {
        &self.observations[role.index()]
    }

    pub fn reward(&self, role: PlayerRole) -> f64 {
        self.rewards[role.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FinalOutcome {
    WinFirst,
    WinSecond,
    Draw,
}

impl FinalOutcome {
    pub fn winner(self) -> Option<PlayerRole> {
        match self {
            FinalOutcome::WinFirst => Some(PlayerRole::First),
            FinalOutcome::WinSecond => Some(PlayerRole::Second),
            FinalOutcome::Draw => None,
        }
    }

    pub fn win_for(role: PlayerRole) -> FinalOutcome {
        match role {
            PlayerRole::First => FinalOutcome::WinFirst,
            PlayerRole::Second => FinalOutcome::WinSecond,
        }
    }

    /// Match result from `role`'s point of view.
    pub fn result_for(self, role: PlayerRole) -> MatchResult {
        match self.winner() {
            Some(w) if w == role => MatchResult::Win,
            Some(_) => MatchResult::Loss,
            None => MatchResult::Draw,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatchResult {
    Win,
    Loss,
    Draw,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GameError {
    #[error("illegal action {action} for {role}")]
    IllegalAction { role: PlayerRole, action: Action },
    #[error("no action supplied for {0}, which is due to act")]
    MissingAction(PlayerRole),
    #[error("{0} is not allowed to act at this tick")]
    NotYourTurn(PlayerRole),
    #[error("episode already finished")]
    EpisodeOver,
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("trace is incomplete (no terminal transition)")]
    IncompleteTrace,
    #[error("unknown environment id `{0}`")]
    UnknownEnvironment(String),
    #[error("trace io: {0}")]
    TraceIo(String),
}

/// A two-player zero-sum environment.
///
/// Instances are single-owner. Independent instances may run on separate threads.
pub trait Environment: Send {
    fn id(&self) -> &'static str;
    fn num_actions(&self) -> usize;
    fn observation_dim(&self) -> usize;
    /// Terminal reward bounds `(R_min, R_max)` of the sparse reward.
    fn reward_bounds(&self) -> (f64, f64);

    fn reset(&mut self, seed: u64) -> StepOutcome;
    fn step(&mut self, actions: &JointAction) -> Result<StepOutcome, GameError>;
    fn legal_actions(&self, role: PlayerRole) -> Result<Vec<bool>, GameError>;
    fn decision_owner(&self) -> RoleSet;
    fn outcome(&self) -> Option<FinalOutcome>;
    fn observe(&self, role: PlayerRole) -> Vec<f64>;
}

/// One agent decision: the unit of replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub episode: u64,
    pub role: PlayerRole,
    /// Tick at which `state` was observed and `action` chosen.
    pub timestamp: u64,
    pub state: Vec<f64>,
    pub legal: Vec<bool>,
    pub action: Action,
    /// Reward accumulated from `timestamp` until the role's next decision (or the end).
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// Legal mask at `next_state`; all-false when `done`.
    pub next_legal: Vec<bool>,
    pub done: bool,
    #[serde(default)]
    pub damage_dealt: u32,
    #[serde(default)]
    pub damage_taken: u32,
}

/// Per-role decision sequences of one episode plus the raw per-tick reward stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub episode: u64,
    pub transitions: [Vec<Transition>; 2],
    /// `(tick, rewards)` for every step taken.
    pub step_rewards: Vec<(u64, [f64; 2])>,
    pub outcome: Option<FinalOutcome>,
}

impl EpisodeTrace {
    pub fn role(&self, role: PlayerRole) -> &[Transition] {
        &self.transitions[role.index()]
    }

    pub fn is_complete(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn len_ticks(&self) -> usize {
        self.step_rewards.len()
    }
}

/// Discounted return `Σ γ^t R_t` of `role`, with `t` the global tick of each step.
pub fn returns(trace: &EpisodeTrace, role: PlayerRole, discount: f64) -> Result<f64, GameError> {
    if !trace.is_complete() {
        return Err(GameError::IncompleteTrace);
    }
    let mut total = 0.0;
    for (tick, rewards) in &trace.step_rewards {
        let r = rewards[role.index()];
        if r != 0.0 {
            total += discount.powi(*tick as i32) * r;
        }
    }
    Ok(total)
}

/// Builds an [`EpisodeTrace`] from successive environment steps.
#[derive(Debug)]
pub struct EpisodeRecorder {
    trace: EpisodeTrace,
    pending: [Option<Transition>; 2],
}

impl EpisodeRecorder {
    pub fn new(episode: u64) -> Self {
        Self {
            trace: EpisodeTrace {
                episode,
                transitions: [Vec::new(), Vec::new()],
                step_rewards: Vec::new(),
                outcome: None,
            },
            pending: [None, None],
        }
    }

    /// Records one tick. `before` is the outcome the actions were chosen from and
    /// `legal` the masks that applied to each acting role; `next_legal` holds the
    /// masks of the roles due to act in `after`.
    pub fn record(
        &mut self,
        before: &StepOutcome,
        legal: &[Option<Vec<bool>>; 2],
        actions: &JointAction,
        after: &StepOutcome,
        next_legal: &[Option<Vec<bool>>; 2],
        outcome: Option<FinalOutcome>,
    ) {
        for role in before.decision_owner.iter() {
            let action = actions.get(role).expect("recorded action for acting role");
            self.pending[role.index()] = Some(Transition {
                episode: self.trace.episode,
                role,
                timestamp: before.timestamp,
                state: before.observation(role).to_vec(),
                legal: legal[role.index()].clone().unwrap_or_default(),
                action,
                reward: 0.0,
                next_state: Vec::new(),
                next_legal: Vec::new(),
                done: false,
                damage_dealt: 0,
                damage_taken: 0,
            });
        }
        self.trace.step_rewards.push((before.timestamp, after.rewards));
        for role in PlayerRole::BOTH {
            if let Some(pending) = self.pending[role.index()].as_mut() {
                pending.reward += after.rewards[role.index()];
                pending.damage_dealt += after.events.damage_dealt[role.index()];
                pending.damage_taken += after.events.damage_dealt[role.opponent().index()];
            }
        }
        for role in PlayerRole::BOTH {
            let closes = after.done || after.decision_owner.contains(role);
            if !closes {
                continue;
            }
            if let Some(mut t) = self.pending[role.index()].take() {
                t.next_state = after.observation(role).to_vec();
                t.done = after.done;
                t.next_legal = match &next_legal[role.index()] {
                    Some(mask) if !after.done => mask.clone(),
                    _ => vec![false; t.legal.len()],
                };
                self.trace.transitions[role.index()].push(t);
            }
        }
        if after.done {
            self.trace.outcome = outcome;
        }
    }

    pub fn finish(self) -> EpisodeTrace {
        self.trace
    }
}

/// Something that picks an action for a role from its own observation.
pub trait Policy {
    fn act(&mut self, role: PlayerRole, observation: &[f64], legal: &[bool]) -> Action;

    /// Called once before each episode.
    fn begin_episode(&mut self, _episode_seed: u64) {}
}

/// Plays a full episode between two policies and records it.
pub fn play_episode(
    env: &mut dyn Environment,
    seed: u64,
    episode: u64,
    policies: [&mut dyn Policy; 2],
) -> Result<EpisodeTrace, GameError> {
    play_episode_with_opening(env, seed, episode, policies, 0)
}

/// Like [`play_episode`], but the first `opening_plies` ticks are uniformly
/// random legal actions drawn from a generator seeded by `seed`. Opening
/// ticks are not recorded; returns start counting from the first policy move.
pub fn play_episode_with_opening(
    env: &mut dyn Environment,
    seed: u64,
    episode: u64,
    policies: [&mut dyn Policy; 2],
    opening_plies: u32,
) -> Result<EpisodeTrace, GameError> {
    let [first, second] = policies;
    let mut players: [&mut dyn Policy; 2] = [first, second];
    for p in players.iter_mut() {
        p.begin_episode(seed);
    }
    let mut recorder = EpisodeRecorder::new(episode);
    let mut current = env.reset(seed);
    let mut opening_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0BE1_1A5E_ED00_0001);
    for _ in 0..opening_plies {
        if current.done {
            break;
        }
        let mut joint = JointAction::new();
        for role in current.decision_owner.iter() {
            let legal: Vec<Action> = env
                .legal_actions(role)?
                .iter()
                .enumerate()
                .filter_map(|(a, &ok)| ok.then_some(a))
                .collect();
            joint.set(role, legal[opening_rng.gen_range(0..legal.len())]);
        }
        let next = env.step(&joint)?;
        if next.done {
            // Never hand the policies a finished game: replay without the last ply.
            return play_episode_with_opening(env, seed.wrapping_add(0x9E37_79B9), episode, players, opening_plies);
        }
        current = next;
    }
    while !current.done {
        let mut joint = JointAction::new();
        let mut legal: [Option<Vec<bool>>; 2] = [None, None];
        for role in current.decision_owner.iter() {
            let mask = env.legal_actions(role)?;
            let action = players[role.index()].act(role, current.observation(role), &mask);
            joint.set(role, action);
            legal[role.index()] = Some(mask);
        }
        let next = env.step(&joint)?;
        let mut next_legal: [Option<Vec<bool>>; 2] = [None, None];
        if !next.done {
            for role in next.decision_owner.iter() {
                next_legal[role.index()] = Some(env.legal_actions(role)?);
            }
        }
        recorder.record(&current, &legal, &joint, &next, &next_legal, env.outcome());
        current = next;
    }
    Ok(recorder.finish())
}

/// Writes every transition of `trace` as one JSON object per line, ordered by
/// timestamp then role.
pub fn write_trace<W: Write>(trace: &EpisodeTrace, mut out: W) -> Result<(), GameError> {
    let mut all: Vec<&Transition> = trace.transitions.iter().flatten().collect();
    all.sort_by_key(|t| (t.timestamp, t.role));
    for t in all {
        serde_json::to_writer(&mut out, t).map_err(|e| GameError::TraceIo(e.to_string()))?;
        out.write_all(b"\n").map_err(|e| GameError::TraceIo(e.to_string()))?;
    }
    Ok(())
}

/// Reads transitions written by [`write_trace`], in file order.
pub fn read_transitions<R: BufRead>(input: R) -> Result<Vec<Transition>, GameError> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line.map_err(|e| GameError::TraceIo(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| GameError::TraceIo(e.to_string()))?);
    }
    Ok(out)
}
