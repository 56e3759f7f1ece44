use std::fmt;
use std::sync::OnceLock;

use super::board::{BoardGame, BoardOutcome, Mark};
use crate::game::{Action, GameError, PlayerRole};

pub const ROWS: usize = 6;
pub const COLS: usize = 7;

/// 6×7 grid with gravity. Cell `row * 7 + col`, row 0 at the bottom; actions
/// are column indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Connect4State {
    cells: [Mark; ROWS * COLS],
    heights: [u8; COLS],
    to_move: PlayerRole,
}

fn lines() -> &'static [[usize; 4]] {
    static LINES: OnceLock<Vec<[usize; 4]>> = OnceLock::new();
    LINES.get_or_init(|| {
        let mut out = Vec::with_capacity(69);
        let dirs: [(isize, isize); 4] = [(0, 1), (1, 0), (1, 1), (1, -1)];
        for r in 0..ROWS as isize {
            for c in 0..COLS as isize {
                for (dr, dc) in dirs {
                    let end_r = r + 3 * dr;
                    let end_c = c + 3 * dc;
                    if !(0..ROWS as isize).contains(&end_r) || !(0..COLS as isize).contains(&end_c) {
                        continue;
                    }
                    let mut line = [0usize; 4];
                    for (k, slot) in line.iter_mut().enumerate() {
                        let k = k as isize;
                        *slot = ((r + k * dr) * COLS as isize + (c + k * dc)) as usize;
                    }
                    out.push(line);
                }
            }
        }
        out
    })
}

impl Connect4State {
    pub fn cell(&self, row: usize, col: usize) -> Mark {
        self.cells[row * COLS + col]
    }

    pub fn column_height(&self, col: usize) -> usize {
        self.heights[col] as usize
    }

    pub fn piece_count(&self) -> usize {
        self.heights.iter().map(|&h| h as usize).sum()
    }

    /// Plays a sequence of columns from the empty grid.
    pub fn from_moves(moves: &[Action]) -> Result<Self, GameError> {
        moves.iter().try_fold(Self::initial(), |s, &a| s.play(a))
    }

    /// Parses six rows of `X`/`O`/`.`, top row first.
    pub fn parse(rows: &str) -> Result<Self, GameError> {
        let lines: Vec<&str> = rows.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        if lines.len() != ROWS {
            return Err(GameError::InvalidState(format!("{} rows, expected 6", lines.len())));
        }
        let mut cells = [Mark::Empty; ROWS * COLS];
        for (i, line) in lines.iter().enumerate() {
            let row = ROWS - 1 - i;
            let chars: Vec<char> = line.chars().filter(|c| !c.is_whitespace()).collect();
            if chars.len() != COLS {
                return Err(GameError::InvalidState(format!("row {i} has {} cells", chars.len())));
            }
            for (col, ch) in chars.into_iter().enumerate() {
                cells[row * COLS + col] = match ch {
                    'X' | 'x' | '1' => Mark::First,
                    'O' | 'o' | '2' => Mark::Second,
                    '.' | '-' | '0' => Mark::Empty,
                    other => return Err(GameError::InvalidState(format!("unexpected cell `{other}`"))),
                };
            }
        }
        Self::from_cells(&cells)
    }

    fn line_winner(&self) -> (bool, bool) {
        let mut first = false;
        let mut second = false;
        for line in lines() {
            let a = self.cells[line[0]];
            if a == Mark::Empty {
                continue;
            }
            if line[1..].iter().all(|&i| self.cells[i] == a) {
                match a {
                    Mark::First => first = true,
                    Mark::Second => second = true,
                    Mark::Empty => {}
                }
            }
        }
        (first, second)
    }
}

/// Classifies a grid, rejecting states that violate gravity or turn order.
pub fn connect4_outcome(state: &Connect4State) -> Result<BoardOutcome, GameError> {
    let first = state.cells.iter().filter(|m| **m == Mark::First).count();
    let second = state.cells.iter().filter(|m| **m == Mark::Second).count();
    if !(first == second || first == second + 1) {
        return Err(GameError::InvalidState(format!("{first} against {second} pieces")));
    }
    for col in 0..COLS {
        let mut seen_empty = false;
        for row in 0..ROWS {
            match state.cell(row, col) {
                Mark::Empty => seen_empty = true,
                _ if seen_empty => {
                    return Err(GameError::InvalidState(format!("floating piece in column {col}")))
                }
                _ => {}
            }
        }
    }
    match state.line_winner() {
        (true, true) => Err(GameError::InvalidState("both players have four in a row".into())),
        (true, false) if first != second + 1 => {
            Err(GameError::InvalidState("first player's line but second moved last".into()))
        }
        (false, true) if first != second => {
            Err(GameError::InvalidState("second player's line but first moved last".into()))
        }
        _ => Ok(state.status()),
    }
}

impl BoardGame for Connect4State {
    const ID: &'static str = "connect4";
    const NUM_ACTIONS: usize = COLS;
    const NUM_CELLS: usize = ROWS * COLS;

    fn initial() -> Self {
        Self {
            cells: [Mark::Empty; ROWS * COLS],
            heights: [0; COLS],
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
        action < COLS && (self.heights[action] as usize) < ROWS
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
        let row = next.heights[action] as usize;
        next.cells[row * COLS + action] = Mark::of(self.to_move);
        next.heights[action] += 1;
        next.to_move = self.to_move.opponent();
        Ok(next)
    }

    fn status(&self) -> BoardOutcome {
        match self.line_winner() {
            (true, _) => BoardOutcome::Win(PlayerRole::First),
            (_, true) => BoardOutcome::Win(PlayerRole::Second),
            _ if self.piece_count() == ROWS * COLS => BoardOutcome::Draw,
            _ => BoardOutcome::Ongoing,
        }
    }

    fn from_cells(cells: &[Mark]) -> Result<Self, GameError> {
        if cells.len() != ROWS * COLS {
            return Err(GameError::InvalidState(format!("{} cells, expected 42", cells.len())));
        }
        let mut arr = [Mark::Empty; ROWS * COLS];
        arr.copy_from_slice(cells);
        let mut heights = [0u8; COLS];
        for (col, h) in heights.iter_mut().enumerate() {
            *h = (0..ROWS).filter(|&r| arr[r * COLS + col] != Mark::Empty).count() as u8;
        }
        let first = arr.iter().filter(|m| **m == Mark::First).count();
        let second = arr.iter().filter(|m| **m == Mark::Second).count();
        let to_move = if first == second {
            PlayerRole::First
        } else {
            PlayerRole::Second
        };
        let state = Self {
            cells: arr,
            heights,
            to_move,
        };
        connect4_outcome(&state)?;
        Ok(state)
    }
}

impl fmt::Display for Connect4State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in (0..ROWS).rev() {
            for col in 0..COLS {
                let c = match self.cell(row, col) {
                    Mark::Empty => '.',
                    Mark::First => 'X',
                    Mark::Second => 'O',
                };
                write!(f, "{c}")?;
            }
            if row > 0 {
                writeln!(f)?;
            }
        }
        Ok(())
    }
}
