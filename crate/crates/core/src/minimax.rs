//! Exact and depth-limited negamax for the turn-based games.
//!
//! Depth-limited search scores non-terminal horizon leaves as 0, so a shallow
//! searcher plays arbitrarily (via the seeded tie-break) unless a win or a
//! forced loss lies inside its window. Unlimited search on TicTacToe reads the
//! memoized solution table.

use std::marker::PhantomData;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::game::{Action, GameError, PlayerRole, Policy};
use crate::games::{BoardGame, BoardOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SearchDepth {
    /// Plies searched from the root, counting the root move.
    Limited(u32),
    Unlimited,
}

impl std::str::FromStr for SearchDepth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "unlimited" | "full" | "exact" => Ok(SearchDepth::Unlimited),
            other => other
                .parse::<u32>()
                .map(SearchDepth::Limited)
                .map_err(|_| format!("invalid search depth `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MinimaxConfig {
    pub max_depth: SearchDepth,
    pub tie_break_seed: u64,
}

impl MinimaxConfig {
    pub fn unlimited(tie_break_seed: u64) -> Self {
        Self {
            max_depth: SearchDepth::Unlimited,
            tie_break_seed,
        }
    }

    pub fn limited(depth: u32, tie_break_seed: u64) -> Self {
        Self {
            max_depth: SearchDepth::Limited(depth),
            tie_break_seed,
        }
    }

    pub fn with_seed(self, tie_break_seed: u64) -> Self {
        Self {
            tie_break_seed,
            ..self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MinimaxError {
    #[error("position is terminal")]
    TerminalState,
    #[error("search depth must be at least 1")]
    InvalidDepth,
    #[error(transparent)]
    Game(#[from] GameError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Value of the position for the evaluated role, in [-1, 1].
    pub value: f64,
    /// Chosen move for the side to move (seeded tie-break among optimal moves).
    pub best_action: Action,
    /// Per-action value for the side to move; `None` for illegal actions.
    pub action_values: Vec<Option<f64>>,
}

impl Evaluation {
    pub fn optimal_actions(&self) -> Vec<Action> {
        let best = self
            .action_values
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        self.action_values
            .iter()
            .enumerate()
            .filter_map(|(a, v)| v.filter(|v| (*v - best).abs() < 1e-12).map(|_| a))
            .collect()
    }
}

fn negamax<G: BoardGame>(state: &G, depth: Option<u32>) -> f64 {
    match state.status() {
        BoardOutcome::Ongoing => {}
        terminal => return terminal.utility(state.to_move()),
    }
    match depth {
        Some(0) => return 0.0,
        None => {
            if let Some(v) = state.solved_value() {
                return v as f64;
            }
        }
        Some(_) => {}
    }
    let child_depth = depth.map(|d| d - 1);
    let mut best = f64::NEG_INFINITY;
    for a in state.legal_moves() {
        let child = state.play(a).expect("legal move");
        let v = -negamax(&child, child_depth);
        if v > best {
            best = v;
            if best >= 1.0 {
                break;
            }
        }
    }
    best
}

/// Evaluates a non-terminal position for `role`.
pub fn evaluate<G: BoardGame>(
    state: &G,
    role: PlayerRole,
    config: &MinimaxConfig,
) -> Result<Evaluation, MinimaxError> {
    if state.status().is_terminal() {
        return Err(MinimaxError::TerminalState);
    }
    let depth = match config.max_depth {
        SearchDepth::Limited(0) => return Err(MinimaxError::InvalidDepth),
        SearchDepth::Limited(d) => Some(d - 1),
        SearchDepth::Unlimited => None,
    };
    let mut action_values = vec![None; G::NUM_ACTIONS];
    for a in state.legal_moves() {
        let child = state.play(a)?;
        action_values[a] = Some(-negamax(&child, depth));
    }
    let mut evaluation = Evaluation {
        value: 0.0,
        best_action: 0,
        action_values,
    };
    let optimal = evaluation.optimal_actions();
    let mut rng = ChaCha8Rng::seed_from_u64(config.tie_break_seed);
    evaluation.best_action = optimal[rng.gen_range(0..optimal.len())];
    let mover_value = evaluation.action_values[evaluation.best_action].expect("legal");
    evaluation.value = if role == state.to_move() {
        mover_value
    } else {
        -mover_value
    };
    Ok(evaluation)
}

/// Move chosen by the searcher for the side to move.
pub fn act<G: BoardGame>(
    state: &G,
    role: PlayerRole,
    config: &MinimaxConfig,
) -> Result<Action, MinimaxError> {
    if state.status().is_terminal() {
        return Err(MinimaxError::TerminalState);
    }
    if role != state.to_move() {
        return Err(GameError::NotYourTurn(role).into());
    }
    Ok(evaluate(state, role, config)?.best_action)
}

/// Terminal utility at terminal states, search value elsewhere.
pub fn value_proxy<G: BoardGame>(state: &G, role: PlayerRole, config: &MinimaxConfig) -> f64 {
    match state.status() {
        BoardOutcome::Ongoing => evaluate(state, role, config)
            .map(|e| e.value)
            .unwrap_or(0.0),
        terminal => terminal.utility(role),
    }
}

/// Scripted opponent that decodes its observation and plays the searcher's move,
/// drawing a fresh tie-break seed for every decision.
#[derive(Debug, Clone)]
pub struct MinimaxPolicy<G> {
    depth: SearchDepth,
    base_seed: u64,
    rng: ChaCha8Rng,
    _game: PhantomData<fn() -> G>,
}

impl<G: BoardGame> MinimaxPolicy<G> {
    pub fn new(depth: SearchDepth, seed: u64) -> Self {
        Self {
            depth,
            base_seed: seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            _game: PhantomData,
        }
    }

    pub fn depth(&self) -> SearchDepth {
        self.depth
    }
}

impl<G: BoardGame> Policy for MinimaxPolicy<G> {
    fn act(&mut self, role: PlayerRole, observation: &[f64], _legal: &[bool]) -> Action {
        let state = G::decode(observation).expect("decodable board observation");
        let config = MinimaxConfig {
            max_depth: self.depth,
            tie_break_seed: self.rng.next_u64(),
        };
        act(&state, role, &config).expect("minimax move on a live position")
    }

    fn begin_episode(&mut self, episode_seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(self.base_seed ^ episode_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{Connect4State, TicTacToeState};

    #[test]
    fn forced_immediate_win() {
        // X to move with X X . on the top row.
        let s = TicTacToeState::parse("XX.OO....").unwrap();
        let e = evaluate(&s, PlayerRole::First, &MinimaxConfig::unlimited(0)).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.best_action, 2);
        assert_eq!(act(&s, PlayerRole::First, &MinimaxConfig::unlimited(9)).unwrap(), 2);
        // Same position seen from O.
        let e_o = evaluate(&s, PlayerRole::Second, &MinimaxConfig::unlimited(0)).unwrap();
        assert_eq!(e_o.value, -1.0);
    }

    #[test]
    fn terminal_state_is_rejected() {
        let s = TicTacToeState::parse("XXXOO....").unwrap();
        assert_eq!(
            evaluate(&s, PlayerRole::First, &MinimaxConfig::unlimited(0)),
            Err(MinimaxError::TerminalState)
        );
        assert_eq!(value_proxy(&s, PlayerRole::First, &MinimaxConfig::unlimited(0)), 1.0);
        assert_eq!(value_proxy(&s, PlayerRole::Second, &MinimaxConfig::unlimited(0)), -1.0);
    }

    #[test]
    fn zero_depth_is_invalid() {
        let s = TicTacToeState::initial();
        assert_eq!(
            evaluate(&s, PlayerRole::First, &MinimaxConfig::limited(0, 0)),
            Err(MinimaxError::InvalidDepth)
        );
    }

    #[test]
    fn act_is_deterministic_per_seed() {
        let s = Connect4State::initial();
        let cfg = MinimaxConfig::limited(3, 1234);
        let a = act(&s, PlayerRole::First, &cfg).unwrap();
        for _ in 0..5 {
            assert_eq!(act(&s, PlayerRole::First, &cfg).unwrap(), a);
        }
    }

    #[test]
    fn neutral_connect4_opening_scores_zero_at_depth_three() {
        let s = Connect4State::initial();
        assert_eq!(value_proxy(&s, PlayerRole::First, &MinimaxConfig::limited(3, 0)), 0.0);
    }

    #[test]
    fn depth_parsing() {
        assert_eq!("unlimited".parse::<SearchDepth>().unwrap(), SearchDepth::Unlimited);
        assert_eq!("3".parse::<SearchDepth>().unwrap(), SearchDepth::Limited(3));
        assert!("deep".parse::<SearchDepth>().is_err());
    }
}
