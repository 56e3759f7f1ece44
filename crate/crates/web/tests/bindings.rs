use minimax_exploiter_web::{analyse, matchmaking, shaped_reward};

#[test]
fn empty_board_is_a_draw_everywhere() {
    let out = analyse(".........", 0.1, 0.995).unwrap();
    for cell in 0..9 {
        assert_eq!(out[2 * cell], 0.0);
        // 0 - 0.1 * 0.995 * (0 + 1)
        assert!((out[2 * cell + 1] + 0.0995).abs() < 1e-12);
    }
}

#[test]
fn winning_and_blocking_moves() {
    // X to move with X X . on the top row; O threatens the middle row.
    let out = analyse("XX.OO....", 0.1, 0.995).unwrap();
    assert_eq!(out[4], 1.0);
    assert_eq!(out[5], 1.0);
    assert!(out[0].is_nan() && out[1].is_nan());
    // Any other move lets O win at once.
    assert_eq!(out[2 * 6], -1.0);
    assert!((out[2 * 6 + 1] + 0.1 * 0.995 * 2.0).abs() < 1e-12);
}

#[test]
fn finished_or_malformed_boards_are_rejected() {
    assert!(analyse("XXXOO....", 0.1, 0.995).is_err());
    assert!(analyse("XXQ......", 0.1, 0.995).is_err());
    assert!(analyse("....", 0.1, 0.995).is_err());
}

#[test]
fn reward_calculator() {
    let r = shaped_reward(0.0, -0.2, false, 0.1, 0.995, -1.0, 1.0).unwrap();
    assert!((r + 0.1 * 0.995 * 0.8).abs() < 1e-12);
    assert_eq!(shaped_reward(1.0, 0.9, true, 0.1, 0.995, -1.0, 1.0).unwrap(), 1.0);
    assert!(shaped_reward(0.0, 0.0, false, 2.0, 0.995, -1.0, 1.0).is_err());
}

#[test]
fn matchmaking_mixture() {
    // The entry that always beats the main agent is sampled most.
    let p = matchmaking(&[1.0, 0.0]).unwrap();
    assert!((p[0] - 0.95).abs() < 1e-12);
    assert!((p[1] - 0.05).abs() < 1e-12);
    assert!(matchmaking(&[]).is_err());
}
