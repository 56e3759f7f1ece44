//! Double-DQN learner: uniform replay, ε-greedy acting, online-argmax /
//! target-evaluation TD targets and periodic target synchronisation.

use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, BufReader, Read, Write};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::game::{Action, PlayerRole, Policy, Transition};
use crate::neural::{
    backward, read_parameters, write_parameters, Adam, LossKind, MlpSpec, NeuralError,
    ParameterSet, TdSample,
};

const AGENT_HEADER: &str = "minimax-exploiter agent";
pub const AGENT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DqnError {
    #[error("no legal action available")]
    NoLegalAction,
    #[error("replay holds {have} transitions, learning starts at {need}")]
    BufferTooSmall { have: usize, need: usize },
    #[error("frozen models cannot learn")]
    Frozen,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint format/version mismatch: {0}")]
    FormatVersionMismatch(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DqnConfig {
    pub discount: f64,
    pub epsilon: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub target_sync_period: u64,
    pub learn_start: usize,
    pub learning_rate: f64,
    pub loss: LossKind,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            discount: 0.995,
            epsilon: 0.01,
            replay_capacity: 100_000,
            batch_size: 64,
            target_sync_period: 1000,
            learn_start: 1000,
            learning_rate: Adam::DEFAULT_LEARNING_RATE,
            loss: LossKind::Mse,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<(), DqnError> {
        let bad = |m: String| Err(DqnError::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.discount) {
            return bad(format!("discount {} outside [0, 1]", self.discount));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon {} outside [0, 1]", self.epsilon));
        }
        if self.batch_size == 0 || self.batch_size > self.replay_capacity {
            return bad(format!(
                "batch size {} must be in 1..={}",
                self.batch_size, self.replay_capacity
            ));
        }
        if self.target_sync_period == 0 {
            return bad("target sync period must be positive".into());
        }
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning rate {}", self.learning_rate));
        }
        Ok(())
    }
}

/// FIFO ring of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn extend<I: IntoIterator<Item = Transition>>(&mut self, items: I) {
        for t in items {
            self.push(t);
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform sample with replacement.
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, n: usize, rng: &mut R) -> Vec<&'a Transition> {
        (0..n)
            .map(|_| &self.items[rng.gen_range(0..self.items.len())])
            .collect()
    }
}

/// Replay shared between rollout workers and one learner. Appends and samples
/// are serialized by a lock, so they are linearizable.
#[derive(Debug, Clone)]
pub struct SharedReplay(Arc<Mutex<ReplayBuffer>>);

impl SharedReplay {
    pub fn new(capacity: usize) -> Self {
        Self(Arc::new(Mutex::new(ReplayBuffer::new(capacity))))
    }

    pub fn push_many(&self, items: Vec<Transition>) {
        self.0.lock().expect("replay lock").extend(items);
    }

    pub fn len(&self) -> usize {
        self.0.lock().expect("replay lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Runs `f` with exclusive access, e.g. to perform a learn step.
    pub fn with<T>(&self, f: impl FnOnce(&ReplayBuffer) -> T) -> T {
        f(&self.0.lock().expect("replay lock"))
    }
}

/// Greedy action over the legal set; ties go to the lowest index.
pub fn greedy_action(q: &[f64], legal: &[bool]) -> Result<Action, DqnError> {
    let mut best: Option<(Action, f64)> = None;
    for (a, (&v, &ok)) in q.iter().zip(legal).enumerate() {
        if ok && best.map_or(true, |(_, b)| v > b) {
            best = Some((a, v));
        }
    }
    best.map(|(a, _)| a).ok_or(DqnError::NoLegalAction)
}

/// Largest Q-value over legal actions.
pub fn masked_max(q: &[f64], legal: &[bool]) -> Option<f64> {
    q.iter()
        .zip(legal)
        .filter(|(_, &ok)| ok)
        .map(|(&v, _)| v)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
}

/// ε-greedy choice: uniform over legal actions with probability ε, otherwise
/// the masked argmax.
pub fn select_action<R: Rng + ?Sized>(
    q: &[f64],
    legal: &[bool],
    epsilon: f64,
    rng: &mut R,
) -> Result<Action, DqnError> {
    let legal_count = legal.iter().filter(|&&l| l).count();
    if legal_count == 0 {
        return Err(DqnError::NoLegalAction);
    }
    if rng.gen::<f64>() < epsilon {
        let pick = rng.gen_range(0..legal_count);
        return Ok(legal
            .iter()
            .enumerate()
            .filter(|(_, &l)| l)
            .nth(pick)
            .map(|(a, _)| a)
            .expect("pick < legal_count"));
    }
    greedy_action(q, legal)
}

/// Learner state: online and target networks, optimizer and counters.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    online: ParameterSet,
    target: ParameterSet,
    optimizer: Adam,
    config: DqnConfig,
    learn_steps: u64,
    frozen: bool,
    /// Smallest greedy value seen while acting during training.
    value_floor: Option<f64>,
    pub metadata: BTreeMap<String, String>,
}

impl DqnAgent {
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, config: DqnConfig, rng: &mut R) -> Result<Self, DqnError> {
        let online = ParameterSet::he_uniform(spec, rng)?;
        Self::from_parameters(online, config)
    }

    pub fn from_parameters(online: ParameterSet, config: DqnConfig) -> Result<Self, DqnError> {
        config.validate()?;
        let optimizer = Adam::new(online.len(), config.learning_rate)?;
        Ok(Self {
            target: online.clone(),
            online,
            optimizer,
            config,
            learn_steps: 0,
            frozen: false,
            value_floor: None,
            metadata: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &DqnConfig {
        &self.config
    }

    /// Changes the TD discount (used by the γ-0 overlay).
    pub fn set_discount(&mut self, discount: f64) {
        self.config.discount = discount;
    }

    pub fn online(&self) -> &ParameterSet {
        &self.online
    }

    pub fn target(&self) -> &ParameterSet {
        &self.target
    }

    pub fn online_mut(&mut self) -> &mut ParameterSet {
        &mut self.online
    }

    pub fn target_mut(&mut self) -> &mut ParameterSet {
        &mut self.target
    }

    pub fn learn_steps(&self) -> u64 {
        self.learn_steps
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn value_floor(&self) -> Option<f64> {
        self.value_floor
    }

    pub fn observe_value(&mut self, v: f64) {
        if v.is_finite() {
            self.value_floor = Some(self.value_floor.map_or(v, |m| m.min(v)));
        }
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>, DqnError> {
        Ok(self.online.forward(state)?)
    }

    /// ε-greedy action from the online network; records the greedy value.
    pub fn act<R: Rng + ?Sized>(&mut self, state: &[f64], legal: &[bool], rng: &mut R) -> Result<Action, DqnError> {
        let q = self.q_values(state)?;
        if let Some(v) = masked_max(&q, legal) {
            self.observe_value(v);
        }
        select_action(&q, legal, self.config.epsilon, rng)
    }

    /// `r + γ (1 - d) Q_target(s', argmax_a Q_online(s', a))` with the argmax
    /// restricted to actions legal in `s'`.
    pub fn td_targets(&self, batch: &[&Transition]) -> Result<Vec<f64>, DqnError> {
        let live: Vec<&Transition> = batch
            .iter()
            .copied()
            .filter(|t| !t.done && t.next_legal.iter().any(|&l| l))
            .collect();
        let mut next_values = Vec::with_capacity(live.len());
        if !live.is_empty() {
            let dim = self.online.spec().input_dim;
            let mut inputs = Vec::with_capacity(live.len() * dim);
            for t in &live {
                inputs.extend_from_slice(&t.next_state);
            }
            let q_online = self.online.forward_batch(&inputs, live.len())?;
            let q_target = self.target.forward_batch(&inputs, live.len())?;
            let n = self.online.spec().output_dim;
            for (i, t) in live.iter().enumerate() {
                let a = greedy_action(&q_online[i * n..(i + 1) * n], &t.next_legal)?;
                next_values.push(q_target[i * n + a]);
            }
        }
        let mut next = next_values.into_iter();
        Ok(batch
            .iter()
            .map(|t| {
                if t.done || !t.next_legal.iter().any(|&l| l) {
                    t.reward
                } else {
                    t.reward + self.config.discount * next.next().expect("one value per live transition")
                }
            })
            .collect())
    }

    /// One optimizer step on a uniform batch; returns the batch loss.
    pub fn learn_step<R: Rng + ?Sized>(&mut self, buffer: &ReplayBuffer, rng: &mut R) -> Result<f64, DqnError> {
        if self.frozen {
            return Err(DqnError::Frozen);
        }
        let need = self.config.learn_start.max(1);
        if buffer.len() < need {
            return Err(DqnError::BufferTooSmall {
                have: buffer.len(),
                need,
            });
        }
        let batch = buffer.sample(self.config.batch_size, rng);
        self.learn_on(&batch)
    }

    /// One optimizer step on the given transitions.
    pub fn learn_on(&mut self, batch: &[&Transition]) -> Result<f64, DqnError> {
        if self.frozen {
            return Err(DqnError::Frozen);
        }
        let targets = self.td_targets(batch)?;
        let samples: Vec<TdSample> = batch
            .iter()
            .zip(&targets)
            .map(|(t, &y)| TdSample {
                state: &t.state,
                action: t.action,
                target: y,
            })
            .collect();
        let (loss, grad) = backward(&self.online, &samples, self.config.loss)?;
        self.optimizer.step(&mut self.online, &grad)?;
        self.learn_steps += 1;
        if self.learn_steps % self.config.target_sync_period == 0 {
            self.target = self.online.clone();
        }
        Ok(loss)
    }

    /// Immutable forward-only snapshot of the online network.
    pub fn freeze(&self, id: impl Into<String>) -> FrozenModel {
        FrozenModel {
            id: id.into(),
            params: Arc::new(self.online.clone()),
            value_floor: self.value_floor,
        }
    }

    /// Serializes the agent: a human-readable header followed by the binary
    /// online network, target network and optimizer moments.
    pub fn checkpoint(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let c = &self.config;
        let mut header = format!(
            "{AGENT_HEADER}\nformat={AGENT_FORMAT_VERSION}\nfrozen={}\nlearn_steps={}\ndiscount={}\nepsilon={}\nreplay_capacity={}\nbatch_size={}\ntarget_sync_period={}\nlearn_start={}\nlearning_rate={}\nloss={}\nvalue_floor={}\nadam_step={}\n",
            self.frozen as u8,
            self.learn_steps,
            c.discount,
            c.epsilon,
            c.replay_capacity,
            c.batch_size,
            c.target_sync_period,
            c.learn_start,
            c.learning_rate,
            match c.loss {
                LossKind::Mse => "mse".to_string(),
                LossKind::Huber { delta } => format!("huber:{delta}"),
            },
            self.value_floor.map_or("none".to_string(), |v| v.to_string()),
            self.optimizer.steps(),
        );
        for (k, v) in &self.metadata {
            header.push_str(&format!("meta.{k}={v}\n"));
        }
        header.push_str("end\n");
        out.extend_from_slice(header.as_bytes());
        write_parameters(&self.online, &mut out).expect("write to Vec");
        write_parameters(&self.target, &mut out).expect("write to Vec");
        let (m, v) = self.optimizer.moments();
        for x in m.iter().chain(v) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    /// Checkpoint of a frozen copy: restores as an agent that refuses to learn.
    pub fn checkpoint_frozen(&self) -> Vec<u8> {
        let mut frozen = self.clone();
        frozen.frozen = true;
        frozen.checkpoint()
    }

    pub fn restore(blob: &[u8]) -> Result<Self, DqnError> {
        let mismatch = |m: &str| DqnError::FormatVersionMismatch(m.to_string());
        let mut reader = BufReader::new(blob);
        let mut fields = BTreeMap::new();
        let mut metadata = BTreeMap::new();
        let mut first = true;
        loop {
            let mut line = String::new();
            let n = reader.read_line(&mut line).map_err(|e| DqnError::Io(e.to_string()))?;
            if n == 0 {
                return Err(mismatch("truncated header"));
            }
            let line = line.trim_end();
            if first {
                if line != AGENT_HEADER {
                    return Err(mismatch("not an agent checkpoint"));
                }
                first = false;
                continue;
            }
            if line == "end" {
                break;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| mismatch("malformed header line"))?;
            if let Some(meta) = k.strip_prefix("meta.") {
                metadata.insert(meta.to_string(), v.to_string());
            } else {
                fields.insert(k.to_string(), v.to_string());
            }
        }
        let get = |k: &str| fields.get(k).ok_or_else(|| mismatch(&format!("missing `{k}`")));
        fn num<T: std::str::FromStr>(s: &str, k: &str) -> Result<T, DqnError> {
            s.parse()
                .map_err(|_| DqnError::FormatVersionMismatch(format!("bad value for `{k}`")))
        }
        let format: u32 = num(get("format")?, "format")?;
        if format != AGENT_FORMAT_VERSION {
            return Err(mismatch(&format!("format {format}, expected {AGENT_FORMAT_VERSION}")));
        }
        let loss = match get("loss")?.as_str() {
            "mse" => LossKind::Mse,
            other => match other.strip_prefix("huber:") {
                Some(d) => LossKind::Huber { delta: num(d, "loss")? },
                None => return Err(mismatch("unknown loss")),
            },
        };
        let config = DqnConfig {
            discount: num(get("discount")?, "discount")?,
            epsilon: num(get("epsilon")?, "epsilon")?,
            replay_capacity: num(get("replay_capacity")?, "replay_capacity")?,
            batch_size: num(get("batch_size")?, "batch_size")?,
            target_sync_period: num(get("target_sync_period")?, "target_sync_period")?,
            learn_start: num(get("learn_start")?, "learn_start")?,
            learning_rate: num(get("learning_rate")?, "learning_rate")?,
            loss,
        };
        let value_floor = match get("value_floor")?.as_str() {
            "none" => None,
            v => Some(num(v, "value_floor")?),
        };
        let online = read_parameters(&mut reader).map_err(|e| mismatch(&e.to_string()))?;
        let target = read_parameters(&mut reader).map_err(|e| mismatch(&e.to_string()))?;
        if online.spec() != target.spec() {
            return Err(mismatch("online/target layout differ"));
        }
        let n = online.len();
        let mut moments = vec![0.0; 2 * n];
        let mut buf = [0u8; 8];
        for x in moments.iter_mut() {
            reader.read_exact(&mut buf).map_err(|_| mismatch("truncated optimizer state"))?;
            *x = f64::from_le_bytes(buf);
        }
        let mut optimizer = Adam::new(n, config.learning_rate)?;
        let second = moments.split_off(n);
        optimizer.set_moments(moments, second, num(get("adam_step")?, "adam_step")?)?;
        let mut agent = Self {
            online,
            target,
            optimizer,
            config,
            learn_steps: num(get("learn_steps")?, "learn_steps")?,
            frozen: get("frozen")? == "1",
            value_floor,
            metadata,
        };
        agent.config.validate()?;
        if agent.value_floor.is_some_and(|v| !v.is_finite()) {
            agent.value_floor = None;
        }
        Ok(agent)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), DqnError> {
        let mut f = std::fs::File::create(path).map_err(|e| DqnError::Io(e.to_string()))?;
        f.write_all(&self.checkpoint()).map_err(|e| DqnError::Io(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, DqnError> {
        let mut blob = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut blob))
            .map_err(|e| DqnError::Io(format!("{}: {e}", path.display())))?;
        Self::restore(&blob)
    }
}

/// Forward-only snapshot shared by rollout workers and reward evaluators.
#[derive(Debug, Clone)]
pub struct FrozenModel {
    pub id: String,
    params: Arc<ParameterSet>,
    value_floor: Option<f64>,
}

impl FrozenModel {
    pub fn new(id: impl Into<String>, params: ParameterSet) -> Self {
        Self {
            id: id.into(),
            params: Arc::new(params),
            value_floor: None,
        }
    }

    pub fn from_agent(id: impl Into<String>, agent: &DqnAgent) -> Self {
        agent.freeze(id)
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    /// Running minimum of the model's own greedy values while it trained.
    pub fn value_floor(&self) -> Option<f64> {
        self.value_floor
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>, DqnError> {
        Ok(self.params.forward(state)?)
    }

    pub fn max_q(&self, state: &[f64], legal: &[bool]) -> Result<f64, DqnError> {
        let q = self.q_values(state)?;
        masked_max(&q, legal).ok_or(DqnError::NoLegalAction)
    }

    pub fn policy(&self, epsilon: f64, seed: u64) -> ModelPolicy {
        ModelPolicy {
            params: Arc::clone(&self.params),
            epsilon,
            base_seed: seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            value_floor: None,
        }
    }
}

/// ε-greedy [`Policy`] over a shared parameter snapshot.
#[derive(Debug, Clone)]
pub struct ModelPolicy {
    params: Arc<ParameterSet>,
    epsilon: f64,
    base_seed: u64,
    rng: ChaCha8Rng,
    value_floor: Option<f64>,
}

impl ModelPolicy {
    pub fn from_params(params: ParameterSet, epsilon: f64, seed: u64) -> Self {
        FrozenModel::new("policy", params).policy(epsilon, seed)
    }

    /// Minimum greedy value seen since construction.
    pub fn value_floor(&self) -> Option<f64> {
        self.value_floor
    }

    /// Keeps the RNG stream running across episodes instead of reseeding.
    pub fn continuous(mut self) -> Self {
        self.base_seed = u64::MAX;
        self
    }
}

impl Policy for ModelPolicy {
    fn act(&mut self, _role: PlayerRole, observation: &[f64], legal: &[bool]) -> Action {
        let q = self.params.forward(observation).expect("observation matches network input");
        if let Some(v) = masked_max(&q, legal) {
            self.value_floor = Some(self.value_floor.map_or(v, |m| m.min(v)));
        }
        select_action(&q, legal, self.epsilon, &mut self.rng).expect("at least one legal action")
    }

    fn begin_episode(&mut self, episode_seed: u64) {
        if self.base_seed != u64::MAX {
            self.rng = ChaCha8Rng::seed_from_u64(self.base_seed ^ episode_seed.wrapping_mul(0xA24B_AED4_963E_E407));
        }
    }
}
