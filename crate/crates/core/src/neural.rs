//! Fully connected Q-network: ReLU hidden layers, linear output, 64-bit math.
//!
//! Parameters live in one flat vector. Each layer contributes its weight
//! matrix (`in × out`, row-major) followed by its bias vector.

use std::io::{Read, Write};

use rand::Rng;
use thiserror::Error;

const CHECKPOINT_MAGIC: &[u8; 4] = b"MXNN";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NeuralError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("action {action} out of range for {outputs} outputs")]
    ActionOutOfRange { action: usize, outputs: usize },
    #[error("gradient contains non-finite values")]
    NonFiniteGradient,
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("checkpoint format/version mismatch: {0}")]
    FormatVersionMismatch(String),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl MlpSpec {
    /// The standard two-hidden-layer Q-network.
    pub fn new(input_dim: usize, hidden: [usize; 2], output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: hidden.to_vec(),
            output_dim,
        }
    }

    pub fn with_layers(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden,
            output_dim,
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.iter().any(|&h| h == 0) {
            return Err(NeuralError::InvalidSpec(format!("all dims must be >= 1: {self:?}")));
        }
        Ok(())
    }

    /// `(in, out)` of every layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    fn offsets(&self) -> Vec<(usize, usize)> {
        let mut offset = 0;
        self.layer_dims()
            .into_iter()
            .map(|(i, o)| {
                let w = offset;
                let b = w + i * o;
                offset = b + o;
                (w, b)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LossKind {
    #[default]
    Mse,
    Huber {
        delta: f64,
    },
}

impl LossKind {
    fn value_and_slope(self, err: f64) -> (f64, f64) {
        match self {
            LossKind::Mse => (err * err, 2.0 * err),
            LossKind::Huber { delta } => {
                if err.abs() <= delta {
                    (0.5 * err * err, err)
                } else {
                    (delta * (err.abs() - 0.5 * delta), delta * err.signum())
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    spec: MlpSpec,
    values: Vec<f64>,
}

impl ParameterSet {
    pub fn zeros(spec: MlpSpec) -> Result<Self, NeuralError> {
        spec.validate()?;
        let n = spec.param_count();
        Ok(Self {
            spec,
            values: vec![0.0; n],
        })
    }

    /// He-uniform weights (limit `sqrt(6 / fan_in)`), zero biases.
    pub fn he_uniform<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self, NeuralError> {
        let mut params = Self::zeros(spec)?;
        for ((w, b), (fan_in, _)) in params.spec.offsets().into_iter().zip(params.spec.layer_dims()) {
            let limit = (6.0 / fan_in as f64).sqrt();
            for v in &mut params.values[w..b] {
                *v = rng.gen_range(-limit..limit);
            }
        }
        Ok(params)
    }

    pub fn from_values(spec: MlpSpec, values: Vec<f64>) -> Result<Self, NeuralError> {
        spec.validate()?;
        if values.len() != spec.param_count() {
            return Err(NeuralError::DimensionMismatch {
                expected: spec.param_count(),
                got: values.len(),
            });
        }
        Ok(Self { spec, values })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Weight matrix (`in × out`, row-major) and bias of `layer`.
    pub fn layer(&self, layer: usize) -> (&[f64], &[f64]) {
        let (w, b) = self.spec.offsets()[layer];
        let out = self.spec.layer_dims()[layer].1;
        (&self.values[w..b], &self.values[b..b + out])
    }

    pub fn layer_mut(&mut self, layer: usize) -> (&mut [f64], &mut [f64]) {
        let (w, b) = self.spec.offsets()[layer];
        let out = self.spec.layer_dims()[layer].1;
        let (head, tail) = self.values[w..b + out].split_at_mut(b - w);
        (head, tail)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NeuralError> {
        self.forward_batch(input, 1)
    }

    /// Row-major `batch × input_dim` in, `batch × output_dim` out.
    pub fn forward_batch(&self, inputs: &[f64], batch: usize) -> Result<Vec<f64>, NeuralError> {
        let expected = batch * self.spec.input_dim;
        if inputs.len() != expected {
            return Err(NeuralError::DimensionMismatch {
                expected,
                got: inputs.len(),
            });
        }
        let mut act = inputs.to_vec();
        let dims = self.spec.layer_dims();
        let last = dims.len() - 1;
        for (l, ((w, b), (fan_in, fan_out))) in self.spec.offsets().into_iter().zip(dims).enumerate() {
            let mut z = affine(&act, batch, fan_in, fan_out, &self.values[w..b], &self.values[b..b + fan_out]);
            if l != last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            act = z;
        }
        Ok(act)
    }
}

/// `x · W + b` for a row-major batch.
fn affine(x: &[f64], batch: usize, fan_in: usize, fan_out: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let mut z = Vec::with_capacity(batch * fan_out);
    for _ in 0..batch {
        z.extend_from_slice(b);
    }
    unsafe {
        // SAFETY: slice lengths match the strides and dimensions passed.
        matrixmultiply::dgemm(
            batch,
            fan_in,
            fan_out,
            1.0,
            x.as_ptr(),
            fan_in as isize,
            1,
            w.as_ptr(),
            fan_out as isize,
            1,
            1.0,
            z.as_mut_ptr(),
            fan_out as isize,
            1,
        );
    }
    z
}

/// One regression sample: only output `action` is pulled towards `target`.
#[derive(Debug, Clone, Copy)]
pub struct TdSample<'a> {
    pub state: &'a [f64],
    pub action: usize,
    pub target: f64,
}

/// Mean TD loss over the batch and its gradient with respect to every parameter.
pub fn backward(
    params: &ParameterSet,
    samples: &[TdSample<'_>],
    loss: LossKind,
) -> Result<(f64, Vec<f64>), NeuralError> {
    if samples.is_empty() {
        return Err(NeuralError::EmptyBatch);
    }
    let spec = params.spec();
    let batch = samples.len();
    let mut inputs = Vec::with_capacity(batch * spec.input_dim);
    for s in samples {
        if s.state.len() != spec.input_dim {
            return Err(NeuralError::DimensionMismatch {
                expected: spec.input_dim,
                got: s.state.len(),
            });
        }
        if s.action >= spec.output_dim {
            return Err(NeuralError::ActionOutOfRange {
                action: s.action,
                outputs: spec.output_dim,
            });
        }
        inputs.extend_from_slice(s.state);
    }

    let dims = spec.layer_dims();
    let offsets = spec.offsets();
    let last = dims.len() - 1;
    // activations[l] is the input of layer l; the final entry holds the Q-values.
    let mut activations = vec![inputs];
    for (l, (&(w, b), &(fan_in, fan_out))) in offsets.iter().zip(&dims).enumerate() {
        let mut z = affine(&activations[l], batch, fan_in, fan_out, &params.values[w..b], &params.values[b..b + fan_out]);
        if l != last {
            z.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        activations.push(z);
    }

    let q = &activations[dims.len()];
    let out_dim = spec.output_dim;
    let mut delta = vec![0.0; batch * out_dim];
    let mut total = 0.0;
    for (i, s) in samples.iter().enumerate() {
        let err = q[i * out_dim + s.action] - s.target;
        let (l, slope) = loss.value_and_slope(err);
        total += l;
        delta[i * out_dim + s.action] = slope / batch as f64;
    }

    let mut grad = vec![0.0; params.len()];
    for l in (0..dims.len()).rev() {
        let (fan_in, fan_out) = dims[l];
        let (w, b) = offsets[l];
        let input = &activations[l];
        unsafe {
            // SAFETY: dW (fan_in × fan_out) = inputᵀ (fan_in × batch) · delta (batch × fan_out).
            matrixmultiply::dgemm(
                fan_in,
                batch,
                fan_out,
                1.0,
                input.as_ptr(),
                1,
                fan_in as isize,
                delta.as_ptr(),
                fan_out as isize,
                1,
                0.0,
                grad[w..b].as_mut_ptr(),
                fan_out as isize,
                1,
            );
        }
        for row in delta.chunks_exact(fan_out) {
            for (g, d) in grad[b..b + fan_out].iter_mut().zip(row) {
                *g += d;
            }
        }
        if l == 0 {
            break;
        }
        let mut prev = vec![0.0; batch * fan_in];
        unsafe {
            // SAFETY: dX (batch × fan_in) = delta (batch × fan_out) · Wᵀ (fan_out × fan_in).
            matrixmultiply::dgemm(
                batch,
                fan_out,
                fan_in,
                1.0,
                delta.as_ptr(),
                fan_out as isize,
                1,
                params.values[w..b].as_ptr(),
                1,
                fan_out as isize,
                0.0,
                prev.as_mut_ptr(),
                fan_in as isize,
                1,
            );
        }
        // ReLU derivative at the previous layer's output.
        for (d, a) in prev.iter_mut().zip(input) {
            if *a <= 0.0 {
                *d = 0.0;
            }
        }
        delta = prev;
    }
    Ok((total / batch as f64, grad))
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step: u64,
}

impl Adam {
    pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;

    pub fn new(param_count: usize, learning_rate: f64) -> Result<Self, NeuralError> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(NeuralError::InvalidSpec(format!("learning rate {learning_rate}")));
        }
        Ok(Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            step: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// First and second moment estimates.
    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.first_moment, &self.second_moment)
    }

    /// Restores optimizer state saved with [`Adam::moments`] and [`Adam::steps`].
    pub fn set_moments(&mut self, first: Vec<f64>, second: Vec<f64>, step: u64) -> Result<(), NeuralError> {
        if first.len() != self.first_moment.len() || second.len() != self.second_moment.len() {
            return Err(NeuralError::DimensionMismatch {
                expected: self.first_moment.len(),
                got: first.len(),
            });
        }
        self.first_moment = first;
        self.second_moment = second;
        self.step = step;
        Ok(())
    }

    pub fn step(&mut self, params: &mut ParameterSet, grads: &[f64]) -> Result<(), NeuralError> {
        if grads.len() != params.len() || self.first_moment.len() != params.len() {
            return Err(NeuralError::DimensionMismatch {
                expected: params.len(),
                got: grads.len(),
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(NeuralError::NonFiniteGradient);
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params
            .values
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

/// Writes the layout descriptor and the flat parameter vector (little-endian).
pub fn write_parameters<W: Write>(params: &ParameterSet, mut out: W) -> Result<(), NeuralError> {
    let io = |e: std::io::Error| NeuralError::Io(e.to_string());
    let spec = params.spec();
    out.write_all(CHECKPOINT_MAGIC).map_err(io)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io)?;
    let mut dims = vec![spec.input_dim];
    dims.extend(&spec.hidden);
    dims.push(spec.output_dim);
    out.write_all(&(dims.len() as u32).to_le_bytes()).map_err(io)?;
    for d in dims {
        out.write_all(&(d as u32).to_le_bytes()).map_err(io)?;
    }
    out.write_all(&(params.len() as u64).to_le_bytes()).map_err(io)?;
    for v in params.values() {
        out.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    Ok(())
}

pub fn read_parameters<R: Read>(mut input: R) -> Result<ParameterSet, NeuralError> {
    fn exact<const N: usize, R: Read>(input: &mut R, what: &str) -> Result<[u8; N], NeuralError> {
        let mut buf = [0u8; N];
        input
            .read_exact(&mut buf)
            .map_err(|_| NeuralError::FormatVersionMismatch(format!("truncated {what}")))?;
        Ok(buf)
    }
    let magic: [u8; 4] = exact(&mut input, "magic")?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(NeuralError::FormatVersionMismatch("bad magic".into()));
    }
    let version = u32::from_le_bytes(exact(&mut input, "version")?);
    if version != CHECKPOINT_VERSION {
        return Err(NeuralError::FormatVersionMismatch(format!(
            "version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let n_dims = u32::from_le_bytes(exact(&mut input, "layout")?) as usize;
    if !(2..=64).contains(&n_dims) {
        return Err(NeuralError::FormatVersionMismatch(format!("{n_dims} layout entries")));
    }
    let mut dims = Vec::with_capacity(n_dims);
    for _ in 0..n_dims {
        dims.push(u32::from_le_bytes(exact(&mut input, "layout")?) as usize);
    }
    let spec = MlpSpec::with_layers(dims[0], dims[1..n_dims - 1].to_vec(), dims[n_dims - 1]);
    spec.validate()
        .map_err(|e| NeuralError::FormatVersionMismatch(e.to_string()))?;
    let count = u64::from_le_bytes(exact(&mut input, "parameter count")?) as usize;
    if count != spec.param_count() {
        return Err(NeuralError::FormatVersionMismatch(format!(
            "{count} parameters for a layout needing {}",
            spec.param_count()
        )));
    }
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        values.push(f64::from_le_bytes(exact(&mut input, "parameters")?));
    }
    ParameterSet::from_values(spec, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_net() -> ParameterSet {
        ParameterSet::from_values(MlpSpec::with_layers(1, vec![1], 1), vec![1.0, 0.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let p = ParameterSet::zeros(MlpSpec::new(5, [8, 8], 3)).unwrap();
        assert_eq!(p.forward(&[1.0, -2.0, 3.0, 0.5, 9.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn relu_identity_net() {
        let p = identity_net();
        assert_eq!(p.forward(&[2.0]).unwrap(), vec![2.0]);
        assert_eq!(p.forward(&[-3.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let p = identity_net();
        assert_eq!(
            p.forward(&[1.0, 2.0]),
            Err(NeuralError::DimensionMismatch { expected: 1, got: 2 })
        );
    }

    #[test]
    fn linear_net_gradient_closed_form() {
        // No hidden layers: q = w·x + b.
        let spec = MlpSpec::with_layers(3, vec![], 1);
        let p = ParameterSet::from_values(spec, vec![0.5, -1.0, 2.0, 0.25]).unwrap();
        let x = [1.0, 2.0, -0.5];
        let q = 0.5 - 2.0 - 1.0 + 0.25;
        let target = 1.0;
        let (_, g) = backward(&p, &[TdSample { state: &x, action: 0, target }], LossKind::Mse).unwrap();
        let scale = 2.0 * (q - target);
        let expected = [scale * x[0], scale * x[1], scale * x[2], scale];
        for (a, b) in g.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_td_error_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = ParameterSet::he_uniform(MlpSpec::new(4, [6, 5], 3), &mut rng).unwrap();
        let states: Vec<Vec<f64>> = (0..5).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let samples: Vec<TdSample> = states
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let q = p.forward(s).unwrap();
                TdSample { state: s, action: i % 3, target: q[i % 3] }
            })
            .collect();
        let (loss, g) = backward(&p, &samples, LossKind::Mse).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn empty_batch_is_rejected() {
        assert_eq!(backward(&identity_net(), &[], LossKind::Mse), Err(NeuralError::EmptyBatch));
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let mut p = identity_net();
        let before = p.clone();
        let mut opt = Adam::new(p.len(), 1e-3).unwrap();
        opt.step(&mut p, &[0.0; 4]).unwrap();
        for (a, b) in p.values().iter().zip(before.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut p = identity_net();
        let before = p.clone();
        let mut opt = Adam::new(p.len(), 1e-3).unwrap();
        let g = [0.3, -2.0, 5.0, -0.01];
        opt.step(&mut p, &g).unwrap();
        for ((a, b), g) in p.values().iter().zip(before.values()).zip(g) {
            assert!(((a - b) + 1e-3 * g.signum()).abs() < 1e-7, "{a} {b} {g}");
        }
    }

    #[test]
    fn adam_descends_a_scalar_quadratic() {
        // f(w) = (w - 3)^2 through a bias-only linear unit with zero input.
        let spec = MlpSpec::with_layers(1, vec![], 1);
        let mut p = ParameterSet::from_values(spec, vec![0.0, 0.0]).unwrap();
        let mut opt = Adam::new(p.len(), 0.1).unwrap();
        for _ in 0..100 {
            let w = p.values()[1];
            let grad = [0.0, 2.0 * (w - 3.0)];
            opt.step(&mut p, &grad).unwrap();
        }
        assert!((p.values()[1] - 3.0).abs() < 0.5, "{}", p.values()[1]);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = identity_net();
        let mut opt = Adam::new(p.len(), 1e-3).unwrap();
        assert_eq!(opt.step(&mut p, &[f64::NAN, 0.0, 0.0, 0.0]), Err(NeuralError::NonFiniteGradient));
    }

    #[test]
    fn truncated_checkpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = ParameterSet::he_uniform(MlpSpec::new(3, [4, 4], 2), &mut rng).unwrap();
        let mut buf = Vec::new();
        write_parameters(&p, &mut buf).unwrap();
        assert_eq!(read_parameters(&buf[..]).unwrap(), p);
        let cut = &buf[..buf.len() - 3];
        assert!(matches!(read_parameters(cut), Err(NeuralError::FormatVersionMismatch(_))));
        let mut wrong = buf.clone();
        wrong[4] = 9;
        assert!(matches!(read_parameters(&wrong[..]), Err(NeuralError::FormatVersionMismatch(_))));
    }
}
