//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each exported function has a plain Rust counterpart returning
//! `Result<_, String>` so the logic is testable off the browser.

use minimax_exploiter::exploiter::{minimax_reward, ExploiterRewardConfig, RewardMode};
use minimax_exploiter::games::{BoardGame, TicTacToeState};
use minimax_exploiter::league::{sampling_probabilities, Archetype, OpponentPool};
use minimax_exploiter::minimax::{evaluate, MinimaxConfig};
use wasm_bindgen::prelude::*;

/// Per-move analysis of a TicTacToe position, flattened as
/// `[value_0, shaped_0, value_1, shaped_1, ...]` over the nine cells.
///
/// `value` is the exact minimax value of the move for the side to move;
/// `shaped` is the exploiter reward the move would receive against a
/// perfect opponent. Illegal cells hold NaN.
pub fn analyse(board: &str, alpha: f64, discount: f64) -> Result<Vec<f64>, String> {
    let state = TicTacToeState::parse(board).map_err(|e| e.to_string())?;
    if state.status().is_terminal() {
        return Err("game is over".into());
    }
    let me = state.to_move();
    let exact = MinimaxConfig::unlimited(0);
    let cfg = ExploiterRewardConfig::new(RewardMode::Minimax, alpha, -1.0, 1.0).with_discount(discount);
    cfg.validate().map_err(|e| e.to_string())?;
    let mut out = vec![f64::NAN; 18];
    for a in state.legal_moves() {
        let next = state.play(a).map_err(|e| e.to_string())?;
        let outcome = next.status();
        let (value, shaped) = if outcome.is_terminal() {
            let r = outcome.utility(me);
            (r, r)
        } else {
            let opp = evaluate(&next, next.to_move(), &exact).map_err(|e| e.to_string())?.value;
            (-opp, minimax_reward(0.0, opp, false, &cfg).map_err(|e| e.to_string())?)
        };
        out[2 * a] = value;
        out[2 * a + 1] = shaped;
    }
    Ok(out)
}

/// Single application of the shaped reward.
pub fn shaped_reward(
    reward: f64,
    opponent_max_q: f64,
    done: bool,
    alpha: f64,
    discount: f64,
    reward_min: f64,
    reward_max: f64,
) -> Result<f64, String> {
    let cfg = ExploiterRewardConfig::new(RewardMode::Minimax, alpha, reward_min, reward_max).with_discount(discount);
    cfg.validate().map_err(|e| e.to_string())?;
    minimax_reward(reward, opponent_max_q, done, &cfg).map_err(|e| e.to_string())
}

/// Matchmaking probabilities for a pool described by each entry's win rate
/// against the main agent.
pub fn matchmaking(win_rates: &[f64]) -> Result<Vec<f64>, String> {
    let mut pool = OpponentPool::new();
    for (i, &w) in win_rates.iter().enumerate() {
        let id = format!("entry-{i}");
        pool.insert(id.clone(), Archetype::ConvergedExploiter, ()).map_err(|e| e.to_string())?;
        pool.set_win_rate(&id, w, 1).map_err(|e| e.to_string())?;
    }
    sampling_probabilities(&pool).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = analysePosition)]
pub fn analyse_position(board: &str, alpha: f64, discount: f64) -> Result<Vec<f64>, JsError> {
    analyse(board, alpha, discount).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = shapedReward)]
pub fn shaped_reward_js(
    reward: f64,
    opponent_max_q: f64,
    done: bool,
    alpha: f64,
    discount: f64,
    reward_min: f64,
    reward_max: f64,
) -> Result<f64, JsError> {
    shaped_reward(reward, opponent_max_q, done, alpha, discount, reward_min, reward_max).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = matchmakingProbabilities)]
pub fn matchmaking_probabilities(win_rates: Vec<f64>) -> Result<Vec<f64>, JsError> {
    matchmaking(&win_rates).map_err(|e| JsError::new(&e))
}
