//! A simultaneous-move duel in which landing a blow stuns the target.
//!
//! Both fighters choose at every tick unless stunned; a stunned fighter is
//! skipped (it performs [`DuelAction::NoOp`]) so the two decision streams drift
//! apart whenever a stun lands. Interactions of the actions that are chosen:
//!
//! | attacker | defender       | effect                                              |
//! |----------|----------------|-----------------------------------------------------|
//! | Attack   | Block          | no damage; the attacker is parried (stunned)        |
//! | Attack   | anything else  | defender loses 1 health; stunned unless already so  |
//! | Recover  | Block          | guard broken: the blocker is stunned, no damage     |
//!
//! Stun lasts [`STUN_TICKS`] ticks. Hits on an already stunned fighter deal
//! damage without extending the stun. The duel ends when a fighter reaches zero
//! health (±[`WIN_REWARD`], or a draw if both fall together) or after
//! [`MAX_TICKS`] ticks (draw).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::game::{
    Action, Environment, FinalOutcome, GameError, JointAction, PlayerRole, Policy, RoleSet,
    StepEvents, StepOutcome,
};

pub const MAX_HEALTH: u8 = 10;
pub const STUN_TICKS: u8 = 2;
pub const DAMAGE: u8 = 1;
pub const MAX_TICKS: u64 = 100;
pub const WIN_REWARD: f64 = 10.0;
pub const OBSERVATION_DIM: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DuelAction {
    Attack,
    Block,
    Recover,
    NoOp,
}

impl DuelAction {
    pub const ALL: [DuelAction; 4] = [
        DuelAction::Attack,
        DuelAction::Block,
        DuelAction::Recover,
        DuelAction::NoOp,
    ];

    pub fn index(self) -> Action {
        self as Action
    }

    pub fn from_index(index: Action) -> Option<DuelAction> {
        DuelAction::ALL.get(index).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DuelState {
    pub health: [u8; 2],
    pub stun_ticks_remaining: [u8; 2],
    pub last_action: [DuelAction; 2],
    pub tick: u64,
}

impl Default for DuelState {
    fn default() -> Self {
        Self {
            health: [MAX_HEALTH; 2],
            stun_ticks_remaining: [0; 2],
            last_action: [DuelAction::NoOp; 2],
            tick: 0,
        }
    }
}

impl DuelState {
    pub fn is_stunned(&self, role: PlayerRole) -> bool {
        self.stun_ticks_remaining[role.index()] > 0
    }

    pub fn outcome(&self) -> Option<FinalOutcome> {
        match (self.health[0] == 0, self.health[1] == 0) {
            (true, true) => Some(FinalOutcome::Draw),
            (true, false) => Some(FinalOutcome::WinSecond),
            (false, true) => Some(FinalOutcome::WinFirst),
            (false, false) if self.tick >= MAX_TICKS => Some(FinalOutcome::Draw),
            _ => None,
        }
    }

    pub fn decision_owner(&self) -> RoleSet {
        if self.outcome().is_some() {
            return RoleSet::EMPTY;
        }
        let mut set = RoleSet::EMPTY;
        for role in PlayerRole::BOTH {
            if !self.is_stunned(role) {
                set.insert(role);
            }
        }
        set
    }

    pub fn observe(&self, role: PlayerRole) -> Vec<f64> {
        let me = role.index();
        let them = role.opponent().index();
        let mut obs = vec![0.0; OBSERVATION_DIM];
        obs[0] = self.health[me] as f64 / MAX_HEALTH as f64;
        obs[1] = self.health[them] as f64 / MAX_HEALTH as f64;
        obs[2] = self.stun_ticks_remaining[me] as f64 / STUN_TICKS as f64;
        obs[3] = self.stun_ticks_remaining[them] as f64 / STUN_TICKS as f64;
        obs[4 + self.last_action[me].index()] = 1.0;
        obs[8 + self.last_action[them].index()] = 1.0;
        obs[12] = self.tick as f64 / MAX_TICKS as f64;
        obs
    }
}

/// Terminal rewards and per-step events produced by [`duel_step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DuelStepResult {
    pub rewards: [f64; 2],
    pub done: bool,
    pub events: StepEvents,
}

/// Advances the duel by one tick.
pub fn duel_step(
    state: &DuelState,
    actions: [Option<DuelAction>; 2],
) -> Result<(DuelState, DuelStepResult), GameError> {
    if state.outcome().is_some() {
        return Err(GameError::EpisodeOver);
    }
    let mut chosen = [DuelAction::NoOp; 2];
    for role in PlayerRole::BOTH {
        let i = role.index();
        match (state.is_stunned(role), actions[i]) {
            (false, Some(a)) => chosen[i] = a,
            (false, None) => return Err(GameError::MissingAction(role)),
            (true, None) | (true, Some(DuelAction::NoOp)) => {}
            (true, Some(_)) => return Err(GameError::NotYourTurn(role)),
        }
    }

    let mut next = *state;
    let mut newly_stunned = [false; 2];
    let mut events = StepEvents::default();
    for role in PlayerRole::BOTH {
        let me = role.index();
        let them = role.opponent().index();
        match (chosen[me], chosen[them]) {
            (DuelAction::Attack, DuelAction::Block) => newly_stunned[me] = true,
            (DuelAction::Attack, _) => {
                next.health[them] = next.health[them].saturating_sub(DAMAGE);
                events.damage_dealt[me] += DAMAGE as u32;
                if !state.is_stunned(role.opponent()) {
                    newly_stunned[them] = true;
                }
            }
            (DuelAction::Recover, DuelAction::Block) => newly_stunned[them] = true,
            _ => {}
        }
    }
    for i in 0..2 {
        if state.stun_ticks_remaining[i] > 0 {
            next.stun_ticks_remaining[i] -= 1;
        }
        if newly_stunned[i] {
            next.stun_ticks_remaining[i] = STUN_TICKS;
        }
    }
    next.last_action = chosen;
    next.tick += 1;

    let outcome = next.outcome();
    let rewards = match outcome {
        Some(FinalOutcome::WinFirst) => [WIN_REWARD, -WIN_REWARD],
        Some(FinalOutcome::WinSecond) => [-WIN_REWARD, WIN_REWARD],
        _ => [0.0, 0.0],
    };
    Ok((
        next,
        DuelStepResult {
            rewards,
            done: outcome.is_some(),
            events,
        },
    ))
}

#[derive(Debug, Clone, Default)]
pub struct DuelEnv {
    state: DuelState,
}

impl DuelEnv {
    pub const ID: &'static str = "duelsim";

    pub fn new() -> Self {
        Self::default()
    }

    pub fn state(&self) -> &DuelState {
        &self.state
    }

    fn snapshot(&self, result: Option<DuelStepResult>) -> StepOutcome {
        let (rewards, events) = result.map_or(([0.0, 0.0], StepEvents::default()), |r| (r.rewards, r.events));
        StepOutcome {
            observations: [
                self.state.observe(PlayerRole::First),
                self.state.observe(PlayerRole::Second),
            ],
            rewards,
            done: self.state.outcome().is_some(),
            decision_owner: self.state.decision_owner(),
            timestamp: self.state.tick,
            events,
        }
    }
}

impl Environment for DuelEnv {
    fn id(&self) -> &'static str {
        Self::ID
    }

    fn num_actions(&self) -> usize {
        DuelAction::ALL.len()
    }

    fn observation_dim(&self) -> usize {
        OBSERVATION_DIM
    }

    fn reward_bounds(&self) -> (f64, f64) {
        (-WIN_REWARD, WIN_REWARD)
    }

    fn reset(&mut self, _seed: u64) -> StepOutcome {
        self.state = DuelState::default();
        self.snapshot(None)
    }

    fn step(&mut self, actions: &JointAction) -> Result<StepOutcome, GameError> {
        let mut chosen = [None, None];
        for role in PlayerRole::BOTH {
            if let Some(a) = actions.get(role) {
                let action = DuelAction::from_index(a).ok_or(GameError::IllegalAction { role, action: a })?;
                chosen[role.index()] = Some(action);
            }
        }
        let (next, result) = duel_step(&self.state, chosen)?;
        self.state = next;
        Ok(self.snapshot(Some(result)))
    }

    fn legal_actions(&self, role: PlayerRole) -> Result<Vec<bool>, GameError> {
        if !self.state.decision_owner().contains(role) {
            return Err(GameError::NotYourTurn(role));
        }
        Ok(vec![true; DuelAction::ALL.len()])
    }

    fn decision_owner(&self) -> RoleSet {
        self.state.decision_owner()
    }

    fn outcome(&self) -> Option<FinalOutcome> {
        self.state.outcome()
    }

    fn observe(&self, role: PlayerRole) -> Vec<f64> {
        self.state.observe(role)
    }
}

/// Rule-based opponent: punishes a stunned opponent, otherwise draws from a
/// fixed action distribution.
#[derive(Debug, Clone)]
pub struct ScriptedDuelist {
    /// Probabilities of Attack, Block, Recover (NoOp gets the remainder).
    pub weights: [f64; 3],
    rng: ChaCha8Rng,
}

impl ScriptedDuelist {
    pub const DEFAULT_WEIGHTS: [f64; 3] = [0.5, 0.3, 0.2];

    pub fn new(seed: u64) -> Self {
        Self::with_weights(seed, Self::DEFAULT_WEIGHTS)
    }

    pub fn with_weights(seed: u64, weights: [f64; 3]) -> Self {
        Self {
            weights,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for ScriptedDuelist {
    fn act(&mut self, _role: PlayerRole, observation: &[f64], _legal: &[bool]) -> Action {
        if observation[3] > 0.0 {
            return DuelAction::Attack.index();
        }
        let u: f64 = self.rng.gen();
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        DuelAction::NoOp.index()
    }
}
