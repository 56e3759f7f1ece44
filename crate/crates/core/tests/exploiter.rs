use std::collections::HashMap;

use minimax_exploiter::dqn::FrozenModel;
use minimax_exploiter::exploiter::{
    minimax_reward, pair_transitions, shift_bound_check, transform_batch, AuditLog, ExploiterError,
    ExploiterRewardConfig, MinimaxEvaluator, OpponentEvaluator, OpponentState, PairedTransition, RewardMode,
};
use minimax_exploiter::game::{play_episode, Action, PlayerRole, Policy, Transition};
use minimax_exploiter::games::{make_environment, BoardGame, Mark, TicTacToeState};
use minimax_exploiter::harness::RandomPolicy;
use minimax_exploiter::minimax::MinimaxConfig;
use minimax_exploiter::neural::{MlpSpec, ParameterSet};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tr(timestamp: u64, reward: f64, done: bool) -> Transition {
    Transition {
        episode: 1,
        role: PlayerRole::First,
        timestamp,
        state: vec![timestamp as f64],
        legal: vec![true],
        action: 0,
        reward,
        next_state: vec![0.0],
        next_legal: vec![!done],
        done,
        damage_dealt: 0,
        damage_taken: 0,
    }
}

struct Constant(f64);

impl OpponentEvaluator for Constant {
    fn max_q(&self, _: &[f64], _: &[bool]) -> Result<f64, ExploiterError> {
        Ok(self.0)
    }
}

fn minimax_cfg(alpha: f64) -> ExploiterRewardConfig {
    ExploiterRewardConfig::new(RewardMode::Minimax, alpha, -1.0, 1.0)
}

#[test]
fn reward_examples() {
    let r = minimax_reward(0.0, -0.2, false, &minimax_cfg(0.1)).unwrap();
    assert!((r - -0.07960).abs() < 1e-12, "{r}");
    assert_eq!(minimax_reward(1.0, 0.9, true, &minimax_cfg(0.1)).unwrap(), 1.0);
    assert_eq!(minimax_reward(-0.3, 0.9, false, &minimax_cfg(0.0)).unwrap(), -0.3);
    assert_eq!(
        minimax_reward(0.0, f64::INFINITY, false, &minimax_cfg(0.1)),
        Err(ExploiterError::NonFiniteInput)
    );

    let g0 = ExploiterRewardConfig::new(RewardMode::GammaZero, 0.1, -1.0, 1.0);
    assert_eq!(g0.effective_alpha(), 1.0);
    assert_eq!(g0.learner_discount(0.99), 0.0);
    assert_eq!(minimax_cfg(0.1).learner_discount(0.99), 0.99);
    let r = minimax_reward(0.0, 0.0, false, &g0).unwrap();
    assert!((r - -0.995).abs() < 1e-12);
}

#[test]
fn config_validation() {
    assert!(minimax_cfg(1.5).validate().is_err());
    assert!(minimax_cfg(0.5).with_discount(1.2).validate().is_err());
    assert!(ExploiterRewardConfig::new(RewardMode::Minimax, 0.1, 1.0, -1.0).validate().is_err());
    assert!(minimax_cfg(0.1).validate().is_ok());
    for m in RewardMode::ALL {
        assert_eq!(m.name().parse::<RewardMode>().unwrap(), m);
    }
    assert!("greedy".parse::<RewardMode>().is_err());
}

#[test]
fn scripted_opponent_with_a_forced_win() {
    // O to move and wins at cell 5; its game value is +1.
    let board = TicTacToeState::parse("XX.OO...X").unwrap();
    assert_eq!(board.to_move(), PlayerRole::Second);
    let opp = OpponentState {
        timestamp: 5,
        state: board.encode(PlayerRole::Second),
        legal: board.legal_mask(),
    };
    let eval = MinimaxEvaluator::<TicTacToeState>::new(MinimaxConfig::unlimited(0));
    assert_eq!(eval.max_q(&opp.state, &opp.legal).unwrap(), 1.0);
    let batch = [PairedTransition { transition: tr(4, 0.0, false), opponent: Some(opp) }];
    let (out, audit) = transform_batch(&batch, &eval, &minimax_cfg(0.1)).unwrap();
    assert!((out[0].reward - -0.19900).abs() < 1e-12, "{}", out[0].reward);
    assert_eq!(audit.shaped, 1);
    assert_eq!(audit.mean_opp_max_q, 1.0);
}

#[test]
fn pairing_examples() {
    let exploiter = [tr(0, 0.0, false), tr(1, 0.0, false), tr(2, 0.0, false)];
    let opponent = [tr(1, 0.0, false), tr(3, 0.0, false)];
    let paired = pair_transitions(&exploiter, &opponent).unwrap();
    let ts: Vec<_> = paired.iter().map(|p| p.pairing_timestamp()).collect();
    assert_eq!(ts, vec![Some(1), Some(3), Some(3)]);
    assert_eq!(paired[1].opponent.as_ref().unwrap().state, vec![3.0]);

    // Nothing at or after tick 4: terminal-paired, reward untouched.
    let paired = pair_transitions(&[tr(3, 0.25, true)], &opponent).unwrap();
    assert!(paired[0].is_terminal_paired());
    let (out, audit) = transform_batch(&paired, &Constant(0.7), &minimax_cfg(0.5)).unwrap();
    assert_eq!(out[0].reward, 0.25);
    assert_eq!((audit.shaped, audit.terminal_paired), (0, 1));

    let mut other = tr(2, 0.0, false);
    other.episode = 9;
    assert_eq!(
        pair_transitions(&exploiter, &[other]),
        Err(ExploiterError::EpisodeMismatch { exploiter: 1, opponent: 9 })
    );
    assert_eq!(
        pair_transitions(&[tr(2, 0.0, false), tr(1, 0.0, false)], &opponent),
        Err(ExploiterError::UnsortedTrace)
    );
    assert!(pair_transitions(&[], &[]).unwrap().is_empty());
}

#[test]
fn empty_opponent_state_is_a_missing_pairing() {
    let batch = [PairedTransition {
        transition: tr(0, 0.0, false),
        opponent: Some(OpponentState { timestamp: 1, state: vec![], legal: vec![] }),
    }];
    assert_eq!(
        transform_batch(&batch, &Constant(0.0), &minimax_cfg(0.1)).unwrap_err(),
        ExploiterError::MissingPairing(0)
    );
}

#[test]
fn bound_violations_are_counted() {
    assert!(shift_bound_check(-1.0, &minimax_cfg(0.1)));
    assert!(!shift_bound_check(-1.01, &minimax_cfg(0.1)));
    let batch: Vec<_> = (0..4)
        .map(|i| PairedTransition {
            transition: tr(2 * i, 0.0, false),
            opponent: Some(OpponentState { timestamp: 2 * i + 1, state: vec![0.0], legal: vec![true] }),
        })
        .collect();
    let (_, audit) = transform_batch(&batch, &Constant(-3.0), &minimax_cfg(0.1)).unwrap();
    assert_eq!(audit.bound_violations, 4);
    let floor = minimax_cfg(0.1).with_value_floor(-3.0);
    let (out, audit) = transform_batch(&batch, &Constant(-3.0), &floor).unwrap();
    assert_eq!(audit.bound_violations, 0);
    assert!(out.iter().all(|t| t.reward == 0.0));
}

/// Negamax value for the side to move, computed from cells only.
fn oracle_value(cells: [u8; 9], memo: &mut HashMap<[u8; 9], f64>) -> f64 {
    const LINES: [[usize; 3]; 8] = [[0, 1, 2], [3, 4, 5], [6, 7, 8], [0, 3, 6], [1, 4, 7], [2, 5, 8], [0, 4, 8], [2, 4, 6]];
    if let Some(&v) = memo.get(&cells) {
        return v;
    }
    let xs = cells.iter().filter(|&&c| c == 1).count();
    let os = cells.iter().filter(|&&c| c == 2).count();
    let me = if xs == os { 1 } else { 2 };
    let won = LINES.iter().find(|l| cells[l[0]] != 0 && cells[l[0]] == cells[l[1]] && cells[l[1]] == cells[l[2]]);
    let v = match won {
        Some(l) if cells[l[0]] == me => 1.0,
        Some(_) => -1.0,
        None if cells.iter().all(|&c| c != 0) => 0.0,
        None => (0..9)
            .filter(|&i| cells[i] == 0)
            .map(|i| {
                let mut n = cells;
                n[i] = me;
                -oracle_value(n, memo)
            })
            .fold(f64::NEG_INFINITY, f64::max),
    };
    memo.insert(cells, v);
    v
}

#[test]
fn tictactoe_traces_match_a_brute_force_opponent() {
    let mut env = make_environment("tictactoe").unwrap();
    let eval = MinimaxEvaluator::<TicTacToeState>::new(MinimaxConfig::unlimited(0));
    let cfg = minimax_cfg(0.1);
    let mut memo = HashMap::new();
    let mut a = RandomPolicy::new(1);
    let mut b = RandomPolicy::new(2);
    for e in 0..200u64 {
        let trace = play_episode(env.as_mut(), e, e, [&mut a, &mut b]).unwrap();
        for role in [PlayerRole::First, PlayerRole::Second] {
            let mine = trace.role(role);
            let paired = pair_transitions(mine, trace.role(role.opponent())).unwrap();
            assert_eq!(paired.len(), mine.len());
            let (out, audit) = transform_batch(&paired, &eval, &cfg).unwrap();
            for (p, o) in paired.iter().zip(&out) {
                let t = &p.transition;
                match &p.opponent {
                    None => {
                        assert!(t.done);
                        assert_eq!(o.reward, t.reward);
                    }
                    Some(opp) => {
                        // Turn-based: the opponent decides on the very next tick.
                        assert_eq!(opp.timestamp, t.timestamp + 1);
                        let board = TicTacToeState::decode(&opp.state).unwrap();
                        let cells: Vec<u8> = board
                            .cells()
                            .iter()
                            .map(|m| match m {
                                Mark::First => 1,
                                Mark::Second => 2,
                                Mark::Empty => 0,
                            })
                            .collect();
                        let v = oracle_value(cells.try_into().unwrap(), &mut memo);
                        let expected = t.reward - 0.1 * 0.995 * (v + 1.0);
                        assert!((o.reward - expected).abs() < 1e-12);
                        assert!(o.reward <= t.reward);
                    }
                }
            }
            assert_eq!(audit.shaped + audit.terminal_paired, mine.len());
            // Only the side that made the final move is terminal-paired.
            assert!(audit.terminal_paired <= 1);
        }
    }
}

#[test]
fn duel_baselines_and_vanilla_identity() {
    let mut env = make_environment("duelsim").unwrap();
    let mut a = RandomPolicy::new(5);
    let mut b = RandomPolicy::new(6);
    let mut hits = 0;
    for e in 0..50u64 {
        let trace = play_episode(env.as_mut(), e, e, [&mut a, &mut b]).unwrap();
        let paired = pair_transitions(trace.role(PlayerRole::First), trace.role(PlayerRole::Second)).unwrap();

        let (vanilla, _) = transform_batch(&paired, &Constant(0.0), &ExploiterRewardConfig::vanilla()).unwrap();
        for (p, v) in paired.iter().zip(&vanilla) {
            assert_eq!(p.transition.reward.to_bits(), v.reward.to_bits());
        }

        let base = ExploiterRewardConfig::new(RewardMode::Aggressive, 0.0, -1.0, 1.0).with_hit_reward(0.5);
        let (agg, _) = transform_batch(&paired, &Constant(0.0), &base).unwrap();
        let def_cfg = ExploiterRewardConfig { mode: RewardMode::Defensive, ..base.clone() };
        let (def, _) = transform_batch(&paired, &Constant(0.0), &def_cfg).unwrap();
        for ((p, g), d) in paired.iter().zip(&agg).zip(&def) {
            let t = &p.transition;
            let (up, down) = if p.opponent.is_some() {
                (0.5 * t.damage_dealt as f64, 0.5 * t.damage_taken as f64)
            } else {
                (0.0, 0.0)
            };
            assert!((g.reward - (t.reward + up)).abs() < 1e-12);
            assert!((d.reward - (t.reward - down)).abs() < 1e-12);
            hits += t.damage_dealt;
        }
    }
    assert!(hits > 0);
}

#[test]
fn frozen_network_is_an_evaluator() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params = ParameterSet::he_uniform(MlpSpec::new(3, [4, 4], 3), &mut rng).unwrap();
    let model = FrozenModel::new("opp", params.clone());
    let s = [0.2, -0.4, 1.0];
    let legal = [true, false, true];
    let q = params.forward(&s).unwrap();
    let expected = q[0].max(q[2]);
    assert_eq!(OpponentEvaluator::max_q(&model, &s, &legal).unwrap(), expected);
}

#[test]
fn audit_log_writes_one_row_per_batch() {
    let mut buf = Vec::new();
    {
        let mut log = AuditLog::new(&mut buf);
        let batch = [PairedTransition {
            transition: tr(0, 0.0, false),
            opponent: Some(OpponentState { timestamp: 1, state: vec![1.0], legal: vec![true] }),
        }];
        for _ in 0..3 {
            let (_, audit) = transform_batch(&batch, &Constant(0.0), &minimax_cfg(0.1)).unwrap();
            log.record(&audit).unwrap();
        }
        log.flush().unwrap();
    }
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("batch,transitions,shaped"));
    assert!(lines[3].starts_with("2,1,1,0,0,"));
}

struct Script(Vec<Action>, usize);

impl Policy for Script {
    fn act(&mut self, _: PlayerRole, _: &[f64], _: &[bool]) -> Action {
        self.1 += 1;
        self.0[self.1 - 1]
    }

    fn begin_episode(&mut self, _: u64) {
        self.1 = 0;
    }
}

#[test]
fn losing_blunder_is_shaped_through_the_reply() {
    // X: 0, 1, 8 ; O: 3, 4, 5. X's last move lets O complete the middle row.
    let mut env = make_environment("tictactoe").unwrap();
    let mut x = Script(vec![0, 1, 8], 0);
    let mut o = Script(vec![3, 4, 5], 0);
    let trace = play_episode(env.as_mut(), 0, 0, [&mut x, &mut o]).unwrap();
    let paired = pair_transitions(trace.role(PlayerRole::First), trace.role(PlayerRole::Second)).unwrap();
    let eval = MinimaxEvaluator::<TicTacToeState>::new(MinimaxConfig::unlimited(0));
    let (out, _) = transform_batch(&paired, &eval, &minimax_cfg(0.1)).unwrap();
    let last = out.last().unwrap();
    assert!(last.done);
    assert!((last.reward - (-1.0 - 0.1 * 0.995 * 2.0)).abs() < 1e-12, "{}", last.reward);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn shaping_never_adds_reward(
        alpha in 0.0f64..=1.0,
        discount in 0.0f64..=1.0,
        lo in -10.0f64..-0.01,
        hi in 0.01f64..10.0,
        u in 0.0f64..=1.0,
        r in -10.0f64..10.0,
        done in any::<bool>(),
    ) {
        let cfg = ExploiterRewardConfig::new(RewardMode::Minimax, alpha, lo, hi).with_discount(discount);
        let q = lo + u * (hi - lo);
        let shaped = minimax_reward(r, q, done, &cfg).unwrap();
        if done {
            prop_assert_eq!(shaped, r);
        } else {
            prop_assert!(shaped <= r);
        }
    }

    #[test]
    fn vanilla_is_bit_identical(rewards in prop::collection::vec(-5.0f64..5.0, 1..20), q in -5.0f64..5.0) {
        let exploiter: Vec<Transition> = rewards.iter().enumerate().map(|(i, &r)| tr(2 * i as u64, r, false)).collect();
        let opponent: Vec<Transition> = (0..rewards.len()).map(|i| tr(2 * i as u64 + 1, 0.0, false)).collect();
        let paired = pair_transitions(&exploiter, &opponent).unwrap();
        let (out, _) = transform_batch(&paired, &Constant(q), &ExploiterRewardConfig::vanilla()).unwrap();
        for (a, b) in out.iter().zip(&exploiter) {
            prop_assert_eq!(a.reward.to_bits(), b.reward.to_bits());
        }
    }

    #[test]
    fn pairing_is_total_and_forward(
        mine in prop::collection::btree_set(0u64..60, 0..20),
        theirs in prop::collection::btree_set(0u64..60, 0..20),
    ) {
        let exploiter: Vec<Transition> = mine.iter().map(|&t| tr(t, 0.0, false)).collect();
        let opponent: Vec<Transition> = theirs.iter().map(|&t| tr(t, 0.0, false)).collect();
        let paired = pair_transitions(&exploiter, &opponent).unwrap();
        prop_assert_eq!(paired.len(), exploiter.len());
        for p in &paired {
            let t = p.transition.timestamp;
            let expected = theirs.range(t + 1..).next().copied();
            prop_assert_eq!(p.pairing_timestamp(), expected);
        }
    }
}
