//! Built-in environments and the string registry used by configuration files.

mod board;
pub mod connect4;
pub mod duel;
pub mod tictactoe;

pub use board::{BoardEnv, BoardGame, BoardOutcome, Mark};
pub use connect4::{connect4_outcome, Connect4State};
pub use duel::{duel_step, DuelAction, DuelEnv, DuelState, ScriptedDuelist};
pub use tictactoe::{tictactoe_outcome, TicTacToeState};

use crate::game::{Environment, GameError};

pub type TicTacToeEnv = BoardEnv<TicTacToeState>;
pub type Connect4Env = BoardEnv<Connect4State>;

pub const ENVIRONMENT_IDS: [&str; 3] = [TicTacToeState::ID, Connect4State::ID, DuelEnv::ID];

/// Constructs an environment from its registry id
/// (`"tictactoe"`, `"connect4"` or `"duelsim"`).
pub fn make_environment(id: &str) -> Result<Box<dyn Environment>, GameError> {
    match id {
        TicTacToeState::ID => Ok(Box::new(TicTacToeEnv::new())),
        Connect4State::ID => Ok(Box::new(Connect4Env::new())),
        DuelEnv::ID => Ok(Box::new(DuelEnv::new())),
        other => Err(GameError::UnknownEnvironment(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_builds_every_id() {
        for id in ENVIRONMENT_IDS {
            let env = make_environment(id).unwrap();
            assert_eq!(env.id(), id);
        }
        assert!(matches!(
            make_environment("chess"),
            Err(GameError::UnknownEnvironment(_))
        ));
    }

    #[test]
    fn observation_dims() {
        assert_eq!(make_environment("tictactoe").unwrap().observation_dim(), 27);
        assert_eq!(make_environment("connect4").unwrap().observation_dim(), 126);
    }
}
