use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use super::board::{BoardGame, BoardOutcome, Mark};
use crate::game::{Action, GameError, PlayerRole};

pub(crate) const LINES: [[usize; 3]; 8] = [
    [0, 1, 2],
    [3, 4, 5],
    [6, 7, 8],
    [0, 3, 6],
    [1, 4, 7],
    [2, 5, 8],
    [0, 4, 8],
    [2, 4, 6],
];

/// 3×3 board; X is [`PlayerRole::First`], O is [`PlayerRole::Second`].
/// Cells are numbered row-major from the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TicTacToeState {
    cells: [Mark; 9],
    to_move: PlayerRole,
}

impl Default for TicTacToeState {
    fn default() -> Self {
        Self::initial()
    }
}

impl TicTacToeState {
    /// Builds a position from a 9-character string of `X`, `O` and `.`/`-`/space.
    pub fn parse(s: &str) -> Result<Self, GameError> {
        let cells: Vec<Mark> = s
            .chars()
            .filter(|c| !matches!(c, '\n' | '\r' | '|' | '/'))
            .map(|c| match c {
                'X' | 'x' => Ok(Mark::First),
                'O' | 'o' => Ok(Mark::Second),
                '.' | '-' | '_' | ' ' => Ok(Mark::Empty),
                other => Err(GameError::InvalidState(format!("unexpected cell `{other}`"))),
            })
            .collect::<Result<_, _>>()?;
        Self::from_cells(&cells)
    }

    pub fn with_cells(cells: [Mark; 9]) -> Result<Self, GameError> {
        Self::from_cells(&cells)
    }

    /// Base-3 encoding of the cells; the side to move is implied by the counts.
    pub fn key(&self) -> u32 {
        self.cells.iter().fold(0u32, |acc, m| {
            acc * 3
                + match m {
                    Mark::Empty => 0,
                    Mark::First => 1,
                    Mark::Second => 2,
                }
        })
    }

    fn line_winner(&self) -> (bool, bool) {
        let mut x = false;
        let mut o = false;
        for line in LINES {
            let [a, b, c] = line.map(|i| self.cells[i]);
            if a != Mark::Empty && a == b && b == c {
                match a {
                    Mark::First => x = true,
                    Mark::Second => o = true,
                    Mark::Empty => {}
                }
            }
        }
        (x, o)
    }
}

/// Classifies a position, rejecting states that cannot arise in play.
pub fn tictactoe_outcome(state: &TicTacToeState) -> Result<BoardOutcome, GameError> {
    let x = state.cells.iter().filter(|m| **m == Mark::First).count();
    let o = state.cells.iter().filter(|m| **m == Mark::Second).count();
    if !(x == o || x == o + 1) {
        return Err(GameError::InvalidState(format!("{x} X against {o} O")));
    }
    let (x_line, o_line) = state.line_winner();
    match (x_line, o_line) {
        (true, true) => Err(GameError::InvalidState("both players have a line".into())),
        (true, false) if x != o + 1 => {
            Err(GameError::InvalidState("X line but O moved last".into()))
        }
        (false, true) if x != o => Err(GameError::InvalidState("O line but X moved last".into())),
        _ => Ok(state.status()),
    }
}

impl BoardGame for TicTacToeState {
    const ID: &'static str = "tictactoe";
    const NUM_ACTIONS: usize = 9;
    const NUM_CELLS: usize = 9;

    fn initial() -> Self {
        Self {
            cells: [Mark::Empty; 9],
            to_move: PlayerRole::First,
        }
    }

    fn to_move(&self) -> PlayerRole {
        self.to_move
    }

    fn cells(&self) -> &[Mark] {
        &self.cells
    }

    fn is_legal(&self, action: Action) -> bool {
        action < 9 && self.cells[action] == Mark::Empty
    }

    fn play(&self, action: Action) -> Result<Self, GameError> {
        if self.status().is_terminal() {
            return Err(GameError::EpisodeOver);
        }
        if !self.is_legal(action) {
            return Err(GameError::IllegalAction {
                role: self.to_move,
                action,
            });
        }
        let mut next = *self;
        next.cells[action] = Mark::of(self.to_move);
        next.to_move = self.to_move.opponent();
        Ok(next)
    }

    fn status(&self) -> BoardOutcome {
        match self.line_winner() {
            (true, _) => BoardOutcome::Win(PlayerRole::First),
            (_, true) => BoardOutcome::Win(PlayerRole::Second),
            _ if self.cells.iter().all(|m| *m != Mark::Empty) => BoardOutcome::Draw,
            _ => BoardOutcome::Ongoing,
        }
    }

    fn from_cells(cells: &[Mark]) -> Result<Self, GameError> {
        if cells.len() != 9 {
            return Err(GameError::InvalidState(format!("{} cells, expected 9", cells.len())));
        }
        let mut arr = [Mark::Empty; 9];
        arr.copy_from_slice(cells);
        let x = arr.iter().filter(|m| **m == Mark::First).count();
        let o = arr.iter().filter(|m| **m == Mark::Second).count();
        let to_move = if x == o {
            PlayerRole::First
        } else if x == o + 1 {
            PlayerRole::Second
        } else {
            return Err(GameError::InvalidState(format!("{x} X against {o} O")));
        };
        let state = Self { cells: arr, to_move };
        tictactoe_outcome(&state)?;
        Ok(state)
    }

    fn solved_value(&self) -> Option<i8> {
        solved_table().get(&self.key()).copied()
    }
}

impl fmt::Display for TicTacToeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in 0..3 {
            for col in 0..3 {
                let c = match self.cells[row * 3 + col] {
                    Mark::Empty => '.',
                    Mark::First => 'X',
                    Mark::Second => 'O',
                };
                write!(f, "{c}")?;
            }
            if row < 2 {
                writeln!(f)?;
            }
        }
        Ok(())
    }
}

/// Negamax value (side to move) of every reachable position, keyed by [`TicTacToeState::key`].
fn solved_table() -> &'static HashMap<u32, i8> {
    static TABLE: OnceLock<HashMap<u32, i8>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = HashMap::with_capacity(6000);
        solve(&TicTacToeState::initial(), &mut table);
        table
    })
}

fn solve(state: &TicTacToeState, table: &mut HashMap<u32, i8>) -> i8 {
    if let Some(v) = table.get(&state.key()) {
        return *v;
    }
    let value = match state.status() {
        BoardOutcome::Win(w) if w == state.to_move => 1,
        BoardOutcome::Win(_) => -1,
        BoardOutcome::Draw => 0,
        BoardOutcome::Ongoing => state
            .legal_moves()
            .into_iter()
            .map(|a| -solve(&state.play(a).expect("legal move"), table))
            .max()
            .expect("ongoing state has a move"),
    };
    table.insert(state.key(), value);
    value
}

/// Number of distinct positions reachable from the empty board (terminal ones included).
pub fn reachable_position_count() -> usize {
    solved_table().len()
}
