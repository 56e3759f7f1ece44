//! Competitive self-play toolkit built around the Minimax Exploiter reward.
//!
//! * [`game`] – zero-sum environment contract, transitions and episode traces.
//! * [`games`] – TicTacToe, Connect4 and the DuelSim simultaneous duel.
//! * [`minimax`] – exact and depth-limited negamax (scripted opponent and value oracle).
//! * [`neural`] – MLP Q-network, backprop and Adam.
//! * [`dqn`] – double-DQN learner, replay and checkpoints.
//! * [`exploiter`] – Minimax reward, shift, chronological pairing and baselines.
//! * [`league`] – opponent pool, matchmaking, convergence gates and generations.
//! * [`harness`] – config-driven experiments, tournaments and curve aggregation.

pub mod dqn;
pub mod exploiter;
pub mod game;
pub mod games;
pub mod harness;
pub mod league;
pub mod minimax;
pub mod neural;
