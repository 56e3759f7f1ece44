use crate::game::{
    Action, Environment, FinalOutcome, GameError, JointAction, PlayerRole, RoleSet, StepEvents,
    StepOutcome,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Mark {
    #[default]
    Empty,
    First,
    Second,
}

impl Mark {
    pub fn of(role: PlayerRole) -> Mark {
        match role {
            PlayerRole::First => Mark::First,
            PlayerRole::Second => Mark::Second,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoardOutcome {
    Ongoing,
    Win(PlayerRole),
    Draw,
}

impl BoardOutcome {
    pub fn is_terminal(self) -> bool {
        self != BoardOutcome::Ongoing
    }

    /// Terminal utility for `role`: +1 win, -1 loss, 0 draw or ongoing.
    pub fn utility(self, role: PlayerRole) -> f64 {
        match self {
            BoardOutcome::Win(w) if w == role => 1.0,
            BoardOutcome::Win(_) => -1.0,
            _ => 0.0,
        }
    }

    pub fn final_outcome(self) -> Option<FinalOutcome> {
        match self {
            BoardOutcome::Ongoing => None,
            BoardOutcome::Win(r) => Some(FinalOutcome::win_for(r)),
            BoardOutcome::Draw => Some(FinalOutcome::Draw),
        }
    }
}

/// A perfect-information, alternating-move grid game.
///
/// The rules of both built-in games are symmetric in the two players, so a
/// position seen from the side to move carries everything search needs.
pub trait BoardGame: Clone + Send + Sync + 'static {
    const ID: &'static str;
    const NUM_ACTIONS: usize;
    const NUM_CELLS: usize;

    fn initial() -> Self;
    fn to_move(&self) -> PlayerRole;
    fn cells(&self) -> &[Mark];
    fn is_legal(&self, action: Action) -> bool;
    /// Applies `action` for the side to move. Fails on illegal actions or
    /// finished games.
    fn play(&self, action: Action) -> Result<Self, GameError>;
    /// Outcome of a state assumed to satisfy the game's invariants.
    fn status(&self) -> BoardOutcome;
    /// Rebuilds a position from cell contents, inferring the side to move
    /// from piece counts.
    fn from_cells(cells: &[Mark]) -> Result<Self, GameError>;

    /// Exact game-theoretic value for the side to move, when a solved table exists.
    fn solved_value(&self) -> Option<i8> {
        None
    }

    fn legal_mask(&self) -> Vec<bool> {
        if self.status().is_terminal() {
            return vec![false; Self::NUM_ACTIONS];
        }
        (0..Self::NUM_ACTIONS).map(|a| self.is_legal(a)).collect()
    }

    fn legal_moves(&self) -> Vec<Action> {
        if self.status().is_terminal() {
            return Vec::new();
        }
        (0..Self::NUM_ACTIONS).filter(|&a| self.is_legal(a)).collect()
    }

    /// One-hot planes `[empty, own, opponent]` from `role`'s point of view.
    fn encode(&self, role: PlayerRole) -> Vec<f64> {
        let n = Self::NUM_CELLS;
        let own = Mark::of(role);
        let mut out = vec![0.0; 3 * n];
        for (i, &m) in self.cells().iter().enumerate() {
            let plane = match m {
                Mark::Empty => 0,
                m if m == own => 1,
                _ => 2,
            };
            out[plane * n + i] = 1.0;
        }
        out
    }

    /// Inverse of [`BoardGame::encode`] for a position where the observer is to move.
    fn decode(observation: &[f64]) -> Result<Self, GameError> {
        let n = Self::NUM_CELLS;
        if observation.len() != 3 * n {
            return Err(GameError::InvalidState(format!(
                "observation has {} entries, expected {}",
                observation.len(),
                3 * n
            )));
        }
        let own = (0..n).filter(|&i| observation[n + i] > 0.5).count();
        let theirs = (0..n).filter(|&i| observation[2 * n + i] > 0.5).count();
        let observer = if own == theirs {
            PlayerRole::First
        } else if theirs == own + 1 {
            PlayerRole::Second
        } else {
            return Err(GameError::InvalidState(
                "piece counts do not allow the observer to move".into(),
            ));
        };
        let cells: Vec<Mark> = (0..n)
            .map(|i| {
                if observation[n + i] > 0.5 {
                    Mark::of(observer)
                } else if observation[2 * n + i] > 0.5 {
                    Mark::of(observer.opponent())
                } else {
                    Mark::Empty
                }
            })
            .collect();
        Self::from_cells(&cells)
    }
}

/// Adapts a [`BoardGame`] to the [`Environment`] contract with sparse ±1 rewards.
#[derive(Debug, Clone)]
pub struct BoardEnv<G: BoardGame> {
    state: G,
    tick: u64,
}

impl<G: BoardGame> Default for BoardEnv<G> {
    fn default() -> Self {
        Self::new()
    }
}

impl<G: BoardGame> BoardEnv<G> {
    pub fn new() -> Self {
        Self {
            state: G::initial(),
            tick: 0,
        }
    }

    pub fn state(&self) -> &G {
        &self.state
    }

    /// Replaces the current position, keeping the tick counter.
    pub fn set_state(&mut self, state: G) {
        self.state = state;
    }

    fn snapshot(&self, rewards: [f64; 2]) -> StepOutcome {
        let done = self.state.status().is_terminal();
        StepOutcome {
            observations: [
                self.state.encode(PlayerRole::First),
                self.state.encode(PlayerRole::Second),
            ],
            rewards,
            done,
            decision_owner: if done {
                RoleSet::EMPTY
            } else {
                RoleSet::only(self.state.to_move())
            },
            timestamp: self.tick,
            events: StepEvents::default(),
        }
    }
}

impl<G: BoardGame> Environment for BoardEnv<G> {
    fn id(&self) -> &'static str {
        G::ID
    }

    fn num_actions(&self) -> usize {
        G::NUM_ACTIONS
    }

    fn observation_dim(&self) -> usize {
        3 * G::NUM_CELLS
    }

    fn reward_bounds(&self) -> (f64, f64) {
        (-1.0, 1.0)
    }

    fn reset(&mut self, _seed: u64) -> StepOutcome {
        self.state = G::initial();
        self.tick = 0;
        self.snapshot([0.0, 0.0])
    }

    fn step(&mut self, actions: &JointAction) -> Result<StepOutcome, GameError> {
        if self.state.status().is_terminal() {
            return Err(GameError::EpisodeOver);
        }
        let mover = self.state.to_move();
        if actions.get(mover.opponent()).is_some() {
            return Err(GameError::NotYourTurn(mover.opponent()));
        }
        let action = actions.get(mover).ok_or(GameError::MissingAction(mover))?;
        if !self.state.is_legal(action) {
            return Err(GameError::IllegalAction { role: mover, action });
        }
        self.state = self.state.play(action)?;
        self.tick += 1;
        let rewards = match self.state.status() {
            BoardOutcome::Win(w) => {
                let mut r = [-1.0, -1.0];
                r[w.index()] = 1.0;
                r
            }
            _ => [0.0, 0.0],
        };
        Ok(self.snapshot(rewards))
    }

    fn legal_actions(&self, role: PlayerRole) -> Result<Vec<bool>, GameError> {
        if self.state.status().is_terminal() || role != self.state.to_move() {
            return Err(GameError::NotYourTurn(role));
        }
        Ok(self.state.legal_mask())
    }

    fn decision_owner(&self) -> RoleSet {
        if self.state.status().is_terminal() {
            RoleSet::EMPTY
        } else {
            RoleSet::only(self.state.to_move())
        }
    }

    fn outcome(&self) -> Option<FinalOutcome> {
        self.state.status().final_outcome()
    }

    fn observe(&self, role: PlayerRole) -> Vec<f64> {
        self.state.encode(role)
    }
}
