use minimax_exploiter::neural::{
    backward, read_parameters, write_parameters, Adam, LossKind, MlpSpec, NeuralError, ParameterSet, TdSample,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn net_1x1x1(weight: f64) -> ParameterSet {
    // input -> 1 hidden (ReLU) -> output, unit output weight, zero biases
    ParameterSet::from_values(MlpSpec::with_layers(1, vec![1], 1), vec![weight, 0.0, 1.0, 0.0]).unwrap()
}

fn loss_via_forward(params: &ParameterSet, states: &[Vec<f64>], actions: &[usize], targets: &[f64]) -> f64 {
    let n = states.len() as f64;
    states
        .iter()
        .zip(actions)
        .zip(targets)
        .map(|((s, &a), t)| (params.forward(s).unwrap()[a] - t).powi(2))
        .sum::<f64>()
        / n
}

#[test]
fn forward_examples() {
    let zero = ParameterSet::zeros(MlpSpec::new(5, [4, 3], 2)).unwrap();
    assert_eq!(zero.forward(&[1.0, -2.0, 3.0, 0.5, 9.0]).unwrap(), vec![0.0, 0.0]);
    assert_eq!(net_1x1x1(1.0).forward(&[2.0]).unwrap(), vec![2.0]);
    assert_eq!(net_1x1x1(1.0).forward(&[-3.0]).unwrap(), vec![0.0]);
    assert!(matches!(
        zero.forward(&[1.0]),
        Err(NeuralError::DimensionMismatch { expected: 5, got: 1 })
    ));
}

#[test]
fn parameter_count_matches_layout() {
    let spec = MlpSpec::new(27, [64, 64], 9);
    assert_eq!(spec.param_count(), 27 * 64 + 64 + 64 * 64 + 64 + 64 * 9 + 9);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let p = ParameterSet::he_uniform(spec.clone(), &mut rng).unwrap();
    assert_eq!(p.len(), spec.param_count());
    assert!(MlpSpec::new(0, [4, 4], 2).validate().is_err());
}

#[test]
fn backward_examples() {
    // Zero TD error everywhere gives a zero gradient.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = ParameterSet::he_uniform(MlpSpec::new(3, [5, 4], 2), &mut rng).unwrap();
    let s = [0.3, -0.7, 1.1];
    let q = p.forward(&s).unwrap();
    let batch = [TdSample { state: &s, action: 1, target: q[1] }];
    let (loss, grad) = backward(&p, &batch, LossKind::Mse).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grad.iter().all(|&g| g == 0.0));

    // One linear layer, weights stored input-major (w[i * outputs + o]):
    // dL/dW = 2 (q - y) x at the chosen output only.
    let linear = ParameterSet::from_values(MlpSpec::with_layers(2, vec![], 2), vec![0.5, -1.0, 2.0, 0.25, 0.1, -0.2])
        .unwrap();
    let x = [2.0, 3.0];
    let q = linear.forward(&x).unwrap();
    assert!((q[0] - (0.5 * 2.0 + 2.0 * 3.0 + 0.1)).abs() < 1e-15);
    let (_, grad) = backward(&linear, &[TdSample { state: &x, action: 0, target: 1.0 }], LossKind::Mse).unwrap();
    let e = 2.0 * (q[0] - 1.0);
    assert_eq!(grad, vec![e * 2.0, 0.0, e * 3.0, 0.0, e, 0.0]);

    assert!(matches!(backward(&linear, &[], LossKind::Mse), Err(NeuralError::EmptyBatch)));
}

#[test]
fn gradients_match_central_differences_on_twenty_seeds() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = MlpSpec::new(rng.gen_range(1..6), [rng.gen_range(2..7), rng.gen_range(2..7)], rng.gen_range(1..4));
        let mut params = ParameterSet::he_uniform(spec.clone(), &mut rng).unwrap();
        // Perturb everything so biases are non-zero too.
        for v in params.values_mut() {
            *v += rng.gen_range(-0.1..0.1);
        }
        let batch = rng.gen_range(1..5);
        let states: Vec<Vec<f64>> = (0..batch)
            .map(|_| (0..spec.input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let actions: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..spec.output_dim)).collect();
        let targets: Vec<f64> = (0..batch).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let samples: Vec<TdSample> = (0..batch)
            .map(|i| TdSample { state: &states[i], action: actions[i], target: targets[i] })
            .collect();
        let (loss, grad) = backward(&params, &samples, LossKind::Mse).unwrap();
        assert!((loss - loss_via_forward(&params, &states, &actions, &targets)).abs() < 1e-12);
        let h = 1e-5;
        for i in 0..params.len() {
            let orig = params.values()[i];
            params.values_mut()[i] = orig + h;
            let up = loss_via_forward(&params, &states, &actions, &targets);
            params.values_mut()[i] = orig - h;
            let down = loss_via_forward(&params, &states, &actions, &targets);
            params.values_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let rel = (numeric - grad[i]).abs() / numeric.abs().max(grad[i].abs()).max(1e-3);
            assert!(rel <= 1e-4, "seed {seed} param {i}: numeric {numeric} analytic {}", grad[i]);
        }
    }
}

#[test]
fn huber_gradient_is_clipped() {
    let linear = ParameterSet::from_values(MlpSpec::with_layers(1, vec![], 1), vec![1.0, 0.0]).unwrap();
    let x = [10.0];
    let (_, grad) = backward(&linear, &[TdSample { state: &x, action: 0, target: 0.0 }], LossKind::Huber { delta: 1.0 })
        .unwrap();
    assert_eq!(grad, vec![10.0, 1.0]);
}

#[test]
fn adam_examples() {
    let spec = MlpSpec::with_layers(2, vec![], 1);
    let start = ParameterSet::from_values(spec.clone(), vec![0.3, -0.4, 0.1]).unwrap();

    let mut p = start.clone();
    let mut opt = Adam::new(p.len(), 1e-3).unwrap();
    opt.step(&mut p, &[0.0, 0.0, 0.0]).unwrap();
    for (a, b) in p.values().iter().zip(start.values()) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(opt.steps(), 1);

    let mut p = start.clone();
    let mut opt = Adam::new(p.len(), 1e-3).unwrap();
    opt.step(&mut p, &[0.5, -2.0, 7.0]).unwrap();
    let moved: Vec<f64> = p.values().iter().zip(start.values()).map(|(a, b)| a - b).collect();
    for (d, sign) in moved.iter().zip([-1.0, 1.0, -1.0]) {
        assert!((d - sign * 1e-3).abs() < 1e-8, "{d}");
    }

    assert!(matches!(
        Adam::new(3, 1e-3).unwrap().step(&mut p, &[f64::NAN, 0.0, 0.0]),
        Err(NeuralError::NonFiniteGradient)
    ));
    assert!(Adam::new(3, 0.0).is_err());
}

#[test]
fn adam_descends_a_scalar_quadratic() {
    let mut p = ParameterSet::from_values(MlpSpec::with_layers(1, vec![], 1), vec![0.0, 0.0]).unwrap();
    let mut opt = Adam::new(2, 0.1).unwrap();
    for _ in 0..100 {
        let w = p.values()[0];
        opt.step(&mut p, &[2.0 * (w - 3.0), 0.0]).unwrap();
    }
    assert!((p.values()[0] - 3.0).abs() < 0.5, "{}", p.values()[0]);
}

#[test]
fn truncated_parameter_file_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = ParameterSet::he_uniform(MlpSpec::new(4, [3, 3], 2), &mut rng).unwrap();
    let mut buf = Vec::new();
    write_parameters(&p, &mut buf).unwrap();
    buf.truncate(buf.len() - 3);
    assert!(read_parameters(buf.as_slice()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn serialization_round_trips_bit_exactly(seed in any::<u64>(), i in 1usize..8, h in 1usize..8, o in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = ParameterSet::he_uniform(MlpSpec::new(i, [h, h + 1], o), &mut rng).unwrap();
        let mut buf = Vec::new();
        write_parameters(&p, &mut buf).unwrap();
        let back = read_parameters(buf.as_slice()).unwrap();
        prop_assert_eq!(back.spec(), p.spec());
        prop_assert!(back.values().iter().zip(p.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn forward_is_pure(seed in any::<u64>(), x in prop::collection::vec(-5.0f64..5.0, 6)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = ParameterSet::he_uniform(MlpSpec::new(6, [8, 8], 3), &mut rng).unwrap();
        let a = p.forward(&x).unwrap();
        let b = p.forward(&x).unwrap();
        prop_assert!(a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits()));
        let batch = p.forward_batch(&[x.clone(), x.clone()].concat(), 2).unwrap();
        prop_assert!(batch[..3].iter().zip(&a).all(|(u, v)| (u - v).abs() < 1e-12));
    }
}
