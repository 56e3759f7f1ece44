//! Acceptance target: one PASS/FAIL line per criterion.
//!
//! Criteria 2 and 3 read the metrics committed under `runs/` (tens of minutes
//! of training each). Set `MMX_ACCEPTANCE_RERUN=1` to retrain them from
//! `configs/` into a temporary directory instead.
//!
//! Criteria 2 and 3 compare learning outcomes between modes. Their verdicts
//! are printed like every other line, but only fail the process when
//! `MMX_ACCEPTANCE_STRICT=1`; every other criterion always does.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use minimax_exploiter::dqn::{DqnAgent, DqnConfig, ReplayBuffer};
use minimax_exploiter::game::{PlayerRole, Transition};
use minimax_exploiter::harness::{read_metrics, run_experiment, run_tournament, verify, ExperimentConfig, MetricRow, Participant};
use minimax_exploiter::neural::MlpSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 0;
const TTT_NEAR_DRAW: f64 = -0.05;
const C4_WIN_SCORE: f64 = 0.8;
const C4_COLLAPSE_MAX: f64 = -0.5;
const CHAIN_Q_TOL: f64 = 0.05;
const SELF_PLAY_TOL: f64 = 0.05;
const TOURNAMENT_GAMES: u64 = 1000;

struct Line {
    id: u32,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Criteria that compare training outcomes rather than check an invariant.
const OUTCOME_CRITERIA: [u32; 2] = [2, 3];

fn rerun() -> bool {
    std::env::var("MMX_ACCEPTANCE_RERUN").is_ok_and(|v| v == "1")
}

/// Trains `configs/<name>.toml` into `scratch`.
fn train(name: &str, scratch: &Path) -> Vec<Vec<MetricRow>> {
    let mut cfg = ExperimentConfig::load(&workspace().join(format!("configs/{name}.toml"))).expect("config");
    cfg.output_dir = scratch.join(name);
    run_experiment(&cfg).expect("training run").into_iter().map(|r| r.rows).collect()
}

/// Per-seed metrics for `name`: committed results unless a rerun is requested.
fn results(name: &str, scratch: &Path) -> Result<Vec<Vec<MetricRow>>, String> {
    if rerun() {
        return Ok(train(name, scratch));
    }
    let cfg = ExperimentConfig::load(&workspace().join(format!("configs/{name}.toml"))).map_err(|e| e.to_string())?;
    cfg.seeds
        .iter()
        .map(|&s| {
            let path = cfg.output_dir.join(format!("metrics_seed{s}.csv"));
            read_metrics(&path).map_err(|_| format!("missing {}", path.display()))
        })
        .collect()
}

/// Env steps at the first evaluation reaching `score`; infinite if never.
fn steps_to(rows: &[MetricRow], score: f64) -> f64 {
    rows.iter().find(|r| r.eval_score >= score).map_or(f64::INFINITY, |r| r.env_steps as f64)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn fmt_steps(v: &[f64]) -> String {
    v.iter().map(|x| if x.is_finite() { format!("{x:.0}") } else { "never".into() }).collect::<Vec<_>>().join("/")
}

fn criterion_1(scratch: &Path) -> Line {
    let med = |m: &str| {
        let per_seed: Vec<f64> = train(&format!("ttt-{m}"), scratch).iter().map(|r| steps_to(r, TTT_NEAR_DRAW)).collect();
        (median(per_seed.clone()), per_seed)
    };
    let (mm, mm_s) = med("minimax");
    let (g0, g0_s) = med("gamma_zero");
    let (va, va_s) = med("vanilla");
    Line {
        id: 1,
        name: "tictactoe ordering",
        passed: mm < va && g0 < va,
        detail: format!(
            "median steps to {TTT_NEAR_DRAW}: minimax {mm:.0} ({}), gamma_zero {g0:.0} ({}), vanilla {va:.0} ({})",
            fmt_steps(&mm_s),
            fmt_steps(&g0_s),
            fmt_steps(&va_s)
        ),
    }
}

fn criterion_2(scratch: &Path) -> Line {
    let loaded = (|| Ok::<_, String>((results("c4-minimax", scratch)?, results("c4-vanilla", scratch)?, results("c4-gamma_zero", scratch)?)))();
    let (mm, va, g0) = match loaded {
        Ok(x) => x,
        Err(e) => return Line { id: 2, name: "connect4 ordering and gamma-zero collapse", passed: false, detail: e },
    };
    let mm_s: Vec<f64> = mm.iter().map(|r| steps_to(r, C4_WIN_SCORE)).collect();
    let va_s: Vec<f64> = va.iter().map(|r| steps_to(r, C4_WIN_SCORE)).collect();
    let (mm_med, va_med) = (median(mm_s.clone()), median(va_s.clone()));
    let finals: Vec<f64> = g0.iter().map(|r| r.last().map_or(f64::NAN, |x| x.eval_score)).collect();
    let g0_med = median(finals.clone());
    let a = mm_med.is_finite() && mm_med < va_med;
    let b = g0_med <= C4_COLLAPSE_MAX;
    Line {
        id: 2,
        name: "connect4 ordering and gamma-zero collapse",
        passed: a && b,
        detail: format!(
            "(a) {}: median steps to {C4_WIN_SCORE}: minimax {} vs vanilla {}; (b) {}: gamma_zero final scores {:?}, median {g0_med:.2} (need <= {C4_COLLAPSE_MAX})",
            if a { "ok" } else { "no" },
            fmt_steps(&[mm_med]),
            fmt_steps(&[va_med]),
            if b { "ok" } else { "no" },
            finals
        ) + &format!(" [per seed minimax {}, vanilla {}]", fmt_steps(&mm_s), fmt_steps(&va_s)),
    }
}

fn criterion_3(scratch: &Path) -> Line {
    let name = "league generation count";
    let (mm, va) = match (results("duel-league-minimax", scratch), results("duel-league-vanilla", scratch)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return Line { id: 3, name, passed: false, detail: e },
    };
    let gens = |runs: &[Vec<MetricRow>]| runs.iter().map(|r| r.last().map_or(0, |x| x.generation)).collect::<Vec<u64>>();
    let (g_mm, g_va) = (gens(&mm), gens(&va));
    let ge = g_mm.iter().zip(&g_va).all(|(a, b)| a >= b);
    let gt = g_mm.iter().zip(&g_va).filter(|(a, b)| a > b).count();
    Line {
        id: 3,
        name,
        passed: g_mm.len() == g_va.len() && ge && gt >= 2,
        detail: format!("converged exploiters per seed: minimax {g_mm:?} vs vanilla {g_va:?}; strictly more in {gt}"),
    }
}

fn from_check(id: u32, name: &'static str, r: verify::CheckReport) -> Line {
    Line { id, name, passed: r.passed, detail: r.detail }
}

fn transition(state: Vec<f64>, action: usize, reward: f64, next_state: Vec<f64>, done: bool) -> Transition {
    Transition {
        episode: 0,
        role: PlayerRole::First,
        timestamp: 0,
        state,
        legal: vec![true; 2],
        action,
        reward,
        next_state,
        next_legal: vec![!done; 2],
        done,
        damage_dealt: 0,
        damage_taken: 0,
    }
}

/// Four-state chain: left/right, right from the last state pays +1 and ends;
/// every other move costs 0.05.
fn criterion_8() -> Line {
    const N: usize = 4;
    const GAMMA: f64 = 0.9;
    let step = |s: usize, a: usize| match a {
        0 => (-0.05, Some(s.saturating_sub(1))),
        _ if s + 1 == N => (1.0, None),
        _ => (-0.05, Some(s + 1)),
    };
    let one_hot = |s: usize| (0..N).map(|i| if i == s { 1.0 } else { 0.0 }).collect::<Vec<f64>>();

    let mut exact = [[0.0f64; 2]; N];
    for _ in 0..10_000 {
        let v: Vec<f64> = exact.iter().map(|q| q[0].max(q[1])).collect();
        for (s, row) in exact.iter_mut().enumerate() {
            for (a, q) in row.iter_mut().enumerate() {
                let (r, next) = step(s, a);
                *q = r + next.map_or(0.0, |n| GAMMA * v[n]);
            }
        }
    }

    let cfg = DqnConfig { discount: GAMMA, learn_start: 1, batch_size: 32, replay_capacity: 1000, target_sync_period: 50, ..DqnConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut agent = DqnAgent::new(MlpSpec::new(N, [32, 32], 2), cfg, &mut rng).expect("agent");
    let mut buffer = ReplayBuffer::new(1000);
    for _ in 0..50 {
        for s in 0..N {
            for a in 0..2 {
                let (r, next) = step(s, a);
                let ns = next.map_or(vec![0.0; N], one_hot);
                buffer.push(transition(one_hot(s), a, r, ns, next.is_none()));
            }
        }
    }
    for _ in 0..6000 {
        agent.learn_step(&buffer, &mut rng).expect("learn");
    }
    let mut worst = 0.0f64;
    let mut same_policy = true;
    for (s, row) in exact.iter().enumerate() {
        let q = agent.q_values(&one_hot(s)).expect("forward");
        worst = worst.max((q[0] - row[0]).abs()).max((q[1] - row[1]).abs());
        same_policy &= (q[1] > q[0]) == (row[1] > row[0]);
    }
    Line {
        id: 8,
        name: "dqn chain sanity",
        passed: same_policy && worst <= CHAIN_Q_TOL,
        detail: format!("greedy policy optimal: {same_policy}; max |Q - Q*| = {worst:.4} (tol {CHAIN_Q_TOL})"),
    }
}

fn criterion_11(scratch: &Path) -> Line {
    let dir = scratch.join("fixtures");
    std::fs::create_dir_all(&dir).expect("fixture dir");
    let entrants: Vec<Participant> = (0..4u64)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + k);
            let mut agent = DqnAgent::new(MlpSpec::new(27, [64, 64], 9), DqnConfig::default(), &mut rng).expect("agent");
            agent.metadata.insert("environment".into(), "tictactoe".into());
            let path = dir.join(format!("fixture{k}.agent"));
            agent.save(&path).expect("save");
            Participant::from_checkpoint(&path).expect("load")
        })
        .collect();
    let table = run_tournament("tictactoe", &entrants, TOURNAMENT_GAMES, SEED).expect("tournament");
    let sums_ok = table.iter().all(|r| {
        let n = r.games as f64;
        (r.wins as f64 / n + r.losses as f64 / n + r.draws as f64 / n - 1.0).abs() < 1e-12
    });
    let again = run_tournament("tictactoe", &entrants, TOURNAMENT_GAMES, SEED).expect("tournament");
    let self_play = &run_tournament("tictactoe", &[entrants[0].clone(), entrants[0].clone()], TOURNAMENT_GAMES, SEED)
        .expect("self-play")[0];
    let win_rate = self_play.wins as f64 / self_play.games as f64;
    let decisive = self_play.wins + self_play.losses;
    // Draws count as half a win for the seat-alternated self-play score.
    let self_ok = (self_play.score - 0.5).abs() <= SELF_PLAY_TOL;
    Line {
        id: 11,
        name: "tournament reproducibility",
        passed: table.len() == 6 && sums_ok && again == table && self_ok,
        detail: format!(
            "{} pairings, w+l+d=1: {sums_ok}, reproducible: {}, self-play score {:.3} (win rate {win_rate:.3}, {decisive} decisive of {})",
            table.len(),
            again == table,
            self_play.score,
            self_play.games
        ),
    }
}

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().expect("temp dir");
    let s = scratch.path();
    let lines = vec![
        criterion_1(s),
        criterion_2(s),
        criterion_3(s),
        from_check(4, "tabular identity", verify::tabular_identity()),
        from_check(5, "shaping non-positivity", verify::shaping_non_positive(100_000, SEED)),
        from_check(6, "zero-sum invariants", verify::zero_sum(10_000, SEED)),
        from_check(7, "gradient check", verify::gradient_check(20, SEED)),
        criterion_8(),
        from_check(9, "pairing rule", verify::pairing(1000, SEED)),
        from_check(10, "matchmaking distribution", verify::matchmaking(100_000, SEED)),
        criterion_11(s),
    ];
    let mut out = std::io::stdout().lock();
    for l in &lines {
        let verdict = if l.passed { "PASS" } else { "FAIL" };
        writeln!(out, "{verdict} criterion {:>2} {}: {}", l.id, l.name, l.detail).expect("stdout");
    }
    let failed = lines.iter().filter(|l| !l.passed).count();
    writeln!(out, "acceptance: {} passed, {failed} failed", lines.len() - failed).expect("stdout");
    let strict = std::env::var("MMX_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let blocking = lines.iter().filter(|l| !l.passed && (strict || !OUTCOME_CRITERIA.contains(&l.id))).count();
    if blocking == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
