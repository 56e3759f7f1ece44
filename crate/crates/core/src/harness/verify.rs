//! Invariant and oracle checks runnable from the command line.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::RandomPolicy;
use crate::dqn::{DqnAgent, DqnConfig};
use crate::exploiter::{minimax_reward, pair_transitions, ExploiterRewardConfig, RewardMode};
use crate::game::{play_episode, returns, PlayerRole};
use crate::games::{make_environment, BoardGame, TicTacToeState, ENVIRONMENT_IDS};
use crate::league::{sample_opponent, sampling_probabilities, Archetype, OpponentPool};
use crate::minimax::{evaluate, MinimaxConfig};
use crate::neural::{backward, LossKind, MlpSpec, ParameterSet, TdSample};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn report(name: &'static str, passed: bool, detail: String) -> CheckReport {
    CheckReport { name, passed, detail }
}

/// Runs every check; `scale` multiplies the sample counts (1.0 = full size).
pub fn run_all(scale: f64, seed: u64) -> Vec<CheckReport> {
    let n = |base: f64| ((base * scale).ceil() as usize).max(1);
    vec![
        zero_sum(n(10_000.0), seed),
        shaping_non_positive(n(100_000.0), seed),
        tabular_identity(),
        gradient_check(n(20.0), seed),
        pairing(n(1000.0), seed),
        matchmaking(n(100_000.0), seed),
        checkpoint_roundtrip(seed),
    ]
}

/// Random rollouts: rewards antisymmetric per step, returns cancel per episode.
pub fn zero_sum(episodes: usize, seed: u64) -> CheckReport {
    let mut worst = 0.0f64;
    for (k, id) in ENVIRONMENT_IDS.iter().enumerate() {
        let mut env = make_environment(id).expect("known id");
        let mut a = RandomPolicy::new(seed ^ k as u64);
        let mut b = RandomPolicy::new(seed ^ (k as u64 + 100));
        for e in 0..episodes.div_ceil(ENVIRONMENT_IDS.len()) {
            let trace = play_episode(env.as_mut(), seed.wrapping_add(e as u64), e as u64, [&mut a, &mut b])
                .expect("random legal play");
            for (_, r) in &trace.step_rewards {
                worst = worst.max((r[0] + r[1]).abs());
            }
            let g1 = returns(&trace, PlayerRole::First, 1.0).expect("complete");
            let g2 = returns(&trace, PlayerRole::Second, 1.0).expect("complete");
            worst = worst.max((g1 + g2).abs());
        }
    }
    report("zero_sum", worst <= 1e-12, format!("max |r1 + r2| = {worst:e} over {episodes} episodes"))
}

/// Shaped addition ≤ 0 for in-bound opponent values and exactly 0 at terminals.
pub fn shaping_non_positive(samples: usize, seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0usize;
    for _ in 0..samples {
        let (lo, hi) = (-rng.gen_range(0.1..20.0), rng.gen_range(0.1..20.0));
        let mut cfg = ExploiterRewardConfig::new(RewardMode::Minimax, rng.gen_range(0.0..=1.0), lo, hi);
        cfg.discount = rng.gen_range(0.0..=1.0);
        let q = rng.gen_range(lo..=hi);
        let r = rng.gen_range(lo..=hi);
        let done = rng.gen_bool(0.5);
        let shaped = minimax_reward(r, q, done, &cfg).expect("finite") - r;
        if (done && shaped != 0.0) || (!done && shaped > 0.0) {
            violations += 1;
        }
    }
    report("shaping_non_positive", violations == 0, format!("{violations} violations in {samples} samples"))
}

/// `Q(s, a) = r - V_opp(s')` on every reachable TicTacToe position.
pub fn tabular_identity() -> CheckReport {
    let mut seen = HashSet::new();
    let mut stack = vec![TicTacToeState::initial()];
    let mut pairs = 0usize;
    let mut worst = 0.0f64;
    let exact = MinimaxConfig::unlimited(0);
    while let Some(s) = stack.pop() {
        if !seen.insert(s.key()) || s.status().is_terminal() {
            continue;
        }
        let eval = evaluate(&s, s.to_move(), &exact).expect("live position");
        for a in s.legal_moves() {
            let next = s.play(a).expect("legal");
            let (r, v_opp) = match next.status() {
                o if o.is_terminal() => (o.utility(s.to_move()), 0.0),
                _ => (0.0, evaluate(&next, next.to_move(), &exact).expect("live").value),
            };
            worst = worst.max((eval.action_values[a].expect("legal") - (r - v_opp)).abs());
            pairs += 1;
            stack.push(next);
        }
    }
    report("tabular_identity", worst <= 1e-12, format!("{pairs} state-action pairs, max error {worst:e}"))
}

/// Central finite differences against backprop on random networks.
pub fn gradient_check(instances: usize, seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let spec = MlpSpec::with_layers(
            rng.gen_range(1..6),
            (0..rng.gen_range(1..3)).map(|_| rng.gen_range(2..8)).collect(),
            rng.gen_range(1..5),
        );
        let mut params = ParameterSet::he_uniform(spec.clone(), &mut rng).expect("valid spec");
        // Zero biases can park a unit exactly on the ReLU kink; jitter everything.
        for v in params.values_mut() {
            *v += rng.gen_range(-0.1..0.1);
        }
        let batch = rng.gen_range(1..6);
        let states: Vec<Vec<f64>> = (0..batch)
            .map(|_| (0..spec.input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let samples: Vec<TdSample> = states
            .iter()
            .map(|s| TdSample {
                state: s,
                action: rng.gen_range(0..spec.output_dim),
                target: rng.gen_range(-1.0..1.0),
            })
            .collect();
        let (_, grad) = backward(&params, &samples, LossKind::Mse).expect("valid batch");
        let h = 1e-6;
        for i in 0..params.len() {
            let orig = params.values()[i];
            params.values_mut()[i] = orig + h;
            let up = backward(&params, &samples, LossKind::Mse).expect("valid").0;
            params.values_mut()[i] = orig - h;
            let down = backward(&params, &samples, LossKind::Mse).expect("valid").0;
            params.values_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let err = (numeric - grad[i]).abs() / numeric.abs().max(grad[i].abs()).max(1e-4);
            worst = worst.max(err);
        }
    }
    report("gradient_check", worst <= 1e-4, format!("max relative error {worst:e} over {instances} networks"))
}

/// Pairing on random DuelSim episodes: one output per exploiter transition,
/// and stuns produce reused opponent states.
pub fn pairing(episodes: usize, seed: u64) -> CheckReport {
    let mut env = make_environment("duelsim").expect("duelsim");
    let mut a = RandomPolicy::new(seed);
    let mut b = RandomPolicy::new(seed.wrapping_add(1));
    let mut count_ok = true;
    let mut reused = 0usize;
    for e in 0..episodes {
        let trace = play_episode(env.as_mut(), seed.wrapping_add(e as u64), e as u64, [&mut a, &mut b]).expect("play");
        let mine = trace.role(PlayerRole::First);
        let paired = pair_transitions(mine, trace.role(PlayerRole::Second)).expect("sorted traces");
        count_ok &= paired.len() == mine.len();
        let ts: Vec<u64> = paired.iter().filter_map(|p| p.pairing_timestamp()).collect();
        reused += ts.windows(2).filter(|w| w[0] == w[1]).count();
    }
    report(
        "pairing",
        count_ok && reused > 0,
        format!("counts match: {count_ok}; {reused} reused opponent states over {episodes} episodes"),
    )
}

/// χ² goodness of fit of `sample_opponent` at the 1% level on three pools.
pub fn matchmaking(draws: usize, seed: u64) -> CheckReport {
    let pools: [&[f64]; 3] = [&[0.8, 0.2, 0.0], &[0.0, 0.0, 0.0, 0.0], &[0.1, 0.5, 0.9, 0.3, 0.6]];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut details = Vec::new();
    let mut passed = true;
    for rates in pools {
        let mut pool = OpponentPool::new();
        for (i, &r) in rates.iter().enumerate() {
            let id = format!("p{i}");
            pool.insert(id.clone(), Archetype::ConvergedExploiter, ()).expect("unique ids");
            pool.set_win_rate(&id, r, 1).expect("present");
        }
        let probs = sampling_probabilities(&pool).expect("non-empty");
        let mut counts = vec![0usize; rates.len()];
        for _ in 0..draws {
            let id = &sample_opponent(&pool, &mut rng).expect("non-empty").id;
            counts[pool.position(id).expect("present")] += 1;
        }
        let stat: f64 = counts
            .iter()
            .zip(&probs)
            .map(|(&c, &p)| {
                let expected = p * draws as f64;
                (c as f64 - expected).powi(2) / expected
            })
            .sum();
        let critical = ChiSquared::new((rates.len() - 1) as f64).expect("dof ≥ 1").inverse_cdf(0.99);
        passed &= stat <= critical;
        details.push(format!("χ²={stat:.2} (crit {critical:.2})"));
    }
    report("matchmaking", passed, details.join(", "))
}

/// Save/restore reproduces parameters bit for bit.
pub fn checkpoint_roundtrip(seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agent = DqnAgent::new(MlpSpec::new(13, [16, 16], 4), DqnConfig::default(), &mut rng).expect("valid");
    let restored = DqnAgent::restore(&agent.checkpoint());
    let passed = restored.as_ref().is_ok_and(|r| {
        r.online().values().iter().zip(agent.online().values()).all(|(a, b)| a.to_bits() == b.to_bits())
            && r.target() == agent.target()
    });
    report("checkpoint_roundtrip", passed, format!("{} parameters", agent.online().len()))
}
