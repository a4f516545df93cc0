//! REINFORCE for softmax-PQC policies with pooled return normalization,
//! inverse-temperature annealing, early stopping and per-batch metrics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::infometrics::{self, BinSpec, DistributionWindow, JointHistogram, MetricSample, MetricSeries};
use crate::policy::{PolicyInit, SoftmaxPqcPolicy};
use crate::quantum::{CircuitSpec, GradientMethod};

/// Batches averaged for the logged moving-average reward.
pub const MOVING_AVERAGE_WINDOW: usize = 10;

/// One episode together with what the policy produced along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    /// Action distribution at each visited state.
    pub probs: Vec<Vec<f64>>,
    /// `∇ log pi(a_t | s_t)` for the action taken.
    pub scores: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Plays one episode to termination.
pub fn rollout<E: Environment, R: Rng + ?Sized>(
    env: &E,
    policy: &SoftmaxPqcPolicy,
    method: GradientMethod,
    rng: &mut R,
) -> Result<Trajectory> {
    let mut traj = Trajectory {
        observations: Vec::new(),
        actions: Vec::new(),
        rewards: Vec::new(),
        probs: Vec::new(),
        scores: Vec::new(),
    };
    let mut state = env.reset(rng);
    while !env.is_terminal(&state) {
        let obs = env.observe(&state);
        let action = policy.action_probs(&obs)?.sample(rng);
        let (dist, score) = policy.score(&obs, action, method)?;
        let step = env.step(&state, action, rng)?;
        traj.observations.push(obs);
        traj.actions.push(action);
        traj.rewards.push(step.reward);
        traj.probs.push(dist.probs);
        traj.scores.push(score);
        state = step.state;
    }
    Ok(traj)
}

/// `G_t = sum_{k >= 0} gamma^k r_{t+k}`, by one backward pass.
pub fn compute_returns(rewards: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(Error::Empty("trajectory rewards"));
    }
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (g, r) in out.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *g = acc;
    }
    Ok(out)
}

/// `G_t = sum_{j >= t} gamma^j r_j`: the discount counts from the start of
/// the episode rather than from `t`.
pub fn compute_returns_absolute(rewards: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let mut out = compute_returns(rewards, gamma)?;
    let mut scale = 1.0;
    for g in &mut out {
        *g *= scale;
        scale *= gamma;
    }
    Ok(out)
}

/// Standardizes with the pooled mean and sample standard deviation.
/// Returns zeros when fewer than two values are given or the standard
/// deviation is below `1e-8`.
pub fn normalize_returns(returns: &[f64]) -> Vec<f64> {
    let n = returns.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let mean = returns.iter().sum::<f64>() / n as f64;
    let var = returns.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    if std < 1e-8 {
        return vec![0.0; n];
    }
    returns.iter().map(|g| (g - mean) / std).collect()
}

/// Per-step reward signals for a batch, split back by trajectory.
pub fn batch_signals(batch: &[Trajectory], gamma: f64, normalize: bool) -> Result<Vec<Vec<f64>>> {
    let returns = batch
        .iter()
        .map(|t| compute_returns(&t.rewards, gamma))
        .collect::<Result<Vec<_>>>()?;
    if !normalize {
        return Ok(returns);
    }
    let pooled: Vec<f64> = returns.iter().flatten().copied().collect();
    let mut flat = normalize_returns(&pooled).into_iter();
    Ok(returns
        .iter()
        .map(|r| flat.by_ref().take(r.len()).collect())
        .collect())
}

/// `(1/N) sum_i sum_t score_{i,t} * signal_{i,t}`.
pub fn batch_gradient(batch: &[Trajectory], signals: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = batch.first().ok_or(Error::Empty("batch"))?;
    let dim = first
        .scores
        .first()
        .map(Vec::len)
        .ok_or(Error::Empty("trajectory"))?;
    if signals.len() != batch.len() {
        return Err(Error::Dimension {
            what: "signals per batch",
            expected: batch.len(),
            actual: signals.len(),
        });
    }
    let mut delta = vec![0.0; dim];
    for (traj, sig) in batch.iter().zip(signals) {
        if sig.len() != traj.scores.len() {
            return Err(Error::Dimension {
                what: "signals per trajectory",
                expected: traj.scores.len(),
                actual: sig.len(),
            });
        }
        for (score, g) in traj.scores.iter().zip(sig) {
            for (d, s) in delta.iter_mut().zip(score) {
                *d += s * g;
            }
        }
    }
    let n = batch.len() as f64;
    for d in &mut delta {
        *d /= n;
    }
    if delta.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("policy gradient"));
    }
    Ok(delta)
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One plain ascent step on `batch` with normalized returns.
/// Returns the norm of the batch gradient, measured before the update.
pub fn policy_gradient_step(
    policy: &mut SoftmaxPqcPolicy,
    batch: &[Trajectory],
    gamma: f64,
    learning_rate: f64,
) -> Result<f64> {
    let signals = batch_signals(batch, gamma, true)?;
    let delta = batch_gradient(batch, &signals)?;
    let mut theta = policy.flat_params();
    for (t, d) in theta.iter_mut().zip(&delta) {
        *t += learning_rate * d;
    }
    policy.set_flat_params(&theta)?;
    Ok(l2_norm(&delta))
}

/// Linear interpolation from `start` at batch 0 to `end` at `max_batches`.
pub fn beta_schedule(batch: usize, max_batches: usize, start: f64, end: f64) -> Result<f64> {
    if batch > max_batches {
        return Err(Error::OutOfRange {
            index: batch,
            max: max_batches,
        });
    }
    if max_batches == 0 || batch == 0 {
        return Ok(start);
    }
    if batch == max_batches {
        return Ok(end);
    }
    Ok(start + (end - start) * batch as f64 / max_batches as f64)
}

/// `true` iff at least 10 entries exist and the mean of the last 5 is below
/// the mean of the 5 before them.
pub fn early_stop_check(history: &[f64]) -> bool {
    let n = history.len();
    if n < 10 {
        return false;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    mean(&history[n - 5..]) < mean(&history[n - 10..n - 5])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// `theta += lr * delta`.
    Sgd,
    /// Adam with `(0.9, 0.999, 1e-8)` moments, ascending.
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EarlyStopping {
    pub enabled: bool,
    /// Consecutive batches the stop rule must fire before training halts.
    pub patience: usize,
    /// The rule is not consulted before this many batches have run.
    pub warmup: usize,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        Self {
            enabled: true,
            patience: 8,
            warmup: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub n_layers: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    /// Optional separate step size for the action weights `w`.
    pub weight_learning_rate: Option<f64>,
    pub optimizer: Optimizer,
    pub beta_start: f64,
    pub beta_end: f64,
    pub max_batches: usize,
    pub early_stopping: EarlyStopping,
    pub bins: usize,
    pub expressivity_window: usize,
    pub seed: u64,
    pub gradient_method: GradientMethod,
    pub normalize_returns: bool,
    pub init: PolicyInit,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_layers: 5,
            batch_size: 10,
            gamma: 0.99,
            learning_rate: 0.02,
            weight_learning_rate: None,
            optimizer: Optimizer::Sgd,
            beta_start: 1.0,
            beta_end: 1.5,
            max_batches: 500,
            early_stopping: EarlyStopping::default(),
            bins: 50,
            expressivity_window: 10,
            seed: 0,
            gradient_method: GradientMethod::Adjoint,
            normalize_returns: true,
            init: PolicyInit::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_layers == 0 {
            return bad("n_layers must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {}", self.learning_rate));
        }
        if let Some(lr) = self.weight_learning_rate {
            if !(lr >= 0.0 && lr.is_finite()) {
                return bad(format!("weight_learning_rate {lr}"));
            }
        }
        if !(self.beta_start.is_finite() && self.beta_end.is_finite() && self.beta_start >= 0.0) {
            return bad("beta endpoints must be finite and nonnegative".into());
        }
        if self.beta_end < self.beta_start {
            return bad("beta_end must not be below beta_start".into());
        }
        if self.bins == 0 {
            return bad("bins must be at least 1".into());
        }
        if self.expressivity_window == 0 {
            return bad("expressivity_window must be at least 1".into());
        }
        if self.early_stopping.patience == 0 {
            return bad("early_stopping.patience must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(dim: usize) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    fn direction(&mut self, grad: &[f64]) -> Vec<f64> {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        grad.iter()
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
            .map(|(g, (m, v))| {
                *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                (*m / c1) / ((*v / c2).sqrt() + Self::EPS)
            })
            .collect()
    }
}

/// Samples from one batch used by the metric estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchMetrics {
    pub mi_tet_proxy: f64,
    pub entropy: f64,
    pub mean_distribution: Vec<f64>,
    pub score_norm_max: f64,
    pub signal_abs_max: f64,
    pub bin_width: f64,
}

/// Plug-in `I(A; Ỹ)` over a pooled batch, with the grid spanning the
/// observed signal range. A constant signal carries no information.
pub fn signal_mutual_information(
    actions: &[usize],
    signals: &[f64],
    n_actions: usize,
    bins: usize,
) -> Result<(f64, f64)> {
    let spec = match BinSpec::from_samples(bins, signals) {
        Ok(spec) => spec,
        Err(Error::Degenerate(_)) => return Ok((0.0, 0.0)),
        Err(e) => return Err(e),
    };
    let pairs = actions
        .iter()
        .zip(signals)
        .map(|(&a, &y)| spec.discretize(y).map(|k| (a, k)))
        .collect::<Result<Vec<_>>>()?;
    let hist = JointHistogram::from_pairs(n_actions, bins, pairs)?;
    Ok((infometrics::mutual_information(&hist)?, spec.delta()))
}

pub fn batch_metrics(
    batch: &[Trajectory],
    signals: &[Vec<f64>],
    n_actions: usize,
    bins: usize,
) -> Result<BatchMetrics> {
    let actions: Vec<usize> = batch.iter().flat_map(|t| t.actions.iter().copied()).collect();
    let flat: Vec<f64> = signals.iter().flatten().copied().collect();
    if actions.is_empty() {
        return Err(Error::Empty("batch steps"));
    }
    let (mi, bin_width) = signal_mutual_information(&actions, &flat, n_actions, bins)?;
    let steps = actions.len() as f64;
    let mut entropy = 0.0;
    let mut mean_distribution = vec![0.0; n_actions];
    for p in batch.iter().flat_map(|t| &t.probs) {
        entropy += infometrics::entropy(p);
        for (m, q) in mean_distribution.iter_mut().zip(p) {
            *m += q;
        }
    }
    for m in &mut mean_distribution {
        *m /= steps;
    }
    let score_norm_max = batch
        .iter()
        .flat_map(|t| &t.scores)
        .map(|s| l2_norm(s))
        .fold(0.0, f64::max);
    Ok(BatchMetrics {
        mi_tet_proxy: mi,
        entropy: entropy / steps,
        mean_distribution,
        score_norm_max,
        signal_abs_max: flat.iter().fold(0.0, |m, y| m.max(y.abs())),
        bin_width,
    })
}

/// Builds the circuit and initial policy for `env` from `config`.
pub fn initial_policy<E: Environment, R: Rng + ?Sized>(
    config: &TrainConfig,
    env: &E,
    rng: &mut R,
) -> Result<SoftmaxPqcPolicy> {
    let spec = CircuitSpec::ring(env.state_dim(), config.n_layers)?;
    SoftmaxPqcPolicy::initialize(spec, env.n_actions(), config.beta_start, config.init, rng)
}

/// Generates `n` episodes, each from its own generator seeded by `rng`.
pub fn collect_batch<E: Environment, R: Rng + ?Sized>(
    env: &E,
    policy: &SoftmaxPqcPolicy,
    n: usize,
    method: GradientMethod,
    rng: &mut R,
) -> Result<Vec<Trajectory>> {
    (0..n)
        .map(|_| {
            let mut episode_rng = ChaCha8Rng::seed_from_u64(rng.gen());
            rollout(env, policy, method, &mut episode_rng)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub series: MetricSeries,
    pub policy: SoftmaxPqcPolicy,
    pub early_stopped: bool,
}

/// Runs REINFORCE. `on_batch` sees every sample as soon as it is logged.
pub fn train<E: Environment>(
    config: &TrainConfig,
    env: &E,
    mut on_batch: impl FnMut(&MetricSample),
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut policy = initial_policy(config, env, &mut rng)?;
    let n_actions = policy.n_actions();
    let weight_offset = policy.n_params() - n_actions;
    let mut adam = Adam::new(policy.n_params());
    let mut window = DistributionWindow::new(config.expressivity_window);
    let mut series = MetricSeries::new();
    let mut rewards = Vec::new();
    let mut episodes = 0;
    let mut streak = 0;
    let mut early_stopped = false;

    for batch_index in 0..config.max_batches {
        policy.beta = beta_schedule(
            batch_index,
            config.max_batches,
            config.beta_start,
            config.beta_end,
        )?;
        let batch = collect_batch(env, &policy, config.batch_size, config.gradient_method, &mut rng)?;
        episodes += batch.len();
        let signals = batch_signals(&batch, config.gamma, config.normalize_returns)?;
        let delta = batch_gradient(&batch, &signals)?;
        let metrics = batch_metrics(&batch, &signals, n_actions, config.bins)?;

        window.push(metrics.mean_distribution.clone())?;
        let expressivity = if window.len() >= 2 {
            infometrics::jsd_expressivity(&window)?
        } else {
            0.0
        };
        let mean_reward = batch.iter().map(Trajectory::total_reward).sum::<f64>() / batch.len() as f64;
        rewards.push(mean_reward);
        let recent = &rewards[rewards.len().saturating_sub(MOVING_AVERAGE_WINDOW)..];
        let sample = MetricSample {
            batch: batch_index,
            episodes,
            mean_reward,
            moving_avg_reward: recent.iter().sum::<f64>() / recent.len() as f64,
            beta: policy.beta,
            grad_norm: l2_norm(&delta),
            mi_tet_proxy: metrics.mi_tet_proxy,
            entropy: metrics.entropy,
            expressivity_proxy: expressivity,
            score_norm_max: metrics.score_norm_max,
            signal_abs_max: metrics.signal_abs_max,
            bin_width: metrics.bin_width,
        };
        on_batch(&sample);
        series.push(sample);

        let step = match config.optimizer {
            Optimizer::Sgd => delta,
            Optimizer::Adam => adam.direction(&delta),
        };
        let mut theta = policy.flat_params();
        for (i, (t, d)) in theta.iter_mut().zip(&step).enumerate() {
            let lr = match config.weight_learning_rate {
                Some(lr) if i >= weight_offset => lr,
                _ => config.learning_rate,
            };
            *t += lr * d;
        }
        policy.set_flat_params(&theta)?;

        let stop = &config.early_stopping;
        if stop.enabled && batch_index + 1 >= stop.warmup {
            streak = if early_stop_check(&rewards) { streak + 1 } else { 0 };
            if streak >= stop.patience {
                early_stopped = true;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        series,
        policy,
        early_stopped,
    })
}
