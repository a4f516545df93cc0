//! Exact checks of the gradient and expressivity bounds on instances small
//! enough to enumerate. Nothing here samples: every probability, gradient
//! and information quantity is computed in closed form.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::env::{OneShotGame, TabularMdp};
use crate::error::{Error, Result};
use crate::infometrics::{
    self, compare_bound, conditional_mutual_information_exact, entropy, kl_divergence,
    mutual_information_exact, total_variation, weighted_jsd, weighted_l2, weighted_tv, BinSpec, BoundStatus,
};
use crate::policy::{softmax, SoftmaxPqcPolicy};
use crate::quantum::GradientMethod;

/// Largest `n_states * n_actions` accepted by the MDP checks.
pub const MAX_STATE_ACTIONS: usize = 64;
pub const MAX_HORIZON: usize = 10;
/// Largest number of enumerated trajectories.
pub const MAX_PATHS: usize = 1 << 21;

/// Identities are asserted to this absolute tolerance.
pub const IDENTITY_TOLERANCE: f64 = 1e-10;
/// The two routes to the objective gradient must agree this closely.
pub const GRADIENT_AGREEMENT: f64 = 1e-9;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn axpy(acc: &mut [f64], a: f64, x: &[f64]) {
    for (y, xi) in acc.iter_mut().zip(x) {
        *y += a * xi;
    }
}

/// Random point of the simplex; with `sparse`, some entries are exactly 0.
pub fn random_distribution<R: Rng + ?Sized>(n: usize, sparse: bool, rng: &mut R) -> Vec<f64> {
    let mut raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    if sparse {
        let keep = rng.gen_range(0..n);
        for (i, v) in raw.iter_mut().enumerate() {
            if i != keep && rng.gen_bool(0.25) {
                *v = 0.0;
            }
        }
    }
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// `pi(a|s) ∝ exp(theta · phi(s, a))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SoftmaxLinearPolicy {
    /// `features[s][a]`, each of length `dim`.
    features: Vec<Vec<Vec<f64>>>,
    theta: Vec<f64>,
}

impl SoftmaxLinearPolicy {
    pub fn new(features: Vec<Vec<Vec<f64>>>, theta: Vec<f64>) -> Result<Self> {
        let n_actions = features.first().map_or(0, Vec::len);
        if features.is_empty() || n_actions == 0 {
            return Err(Error::Empty("policy features"));
        }
        for per_state in &features {
            if per_state.len() != n_actions {
                return Err(Error::Dimension {
                    what: "feature actions",
                    expected: n_actions,
                    actual: per_state.len(),
                });
            }
            for phi in per_state {
                if phi.len() != theta.len() {
                    return Err(Error::Dimension {
                        what: "feature dimension",
                        expected: theta.len(),
                        actual: phi.len(),
                    });
                }
            }
        }
        if features
            .iter()
            .flatten()
            .flatten()
            .chain(&theta)
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("policy parameters"));
        }
        Ok(Self { features, theta })
    }

    /// One parameter per `(s, a)`: `pi(.|s) = softmax(logits[s])`.
    pub fn tabular(logits: Vec<Vec<f64>>) -> Result<Self> {
        let n_states = logits.len();
        let n_actions = logits.first().map_or(0, Vec::len);
        let dim = n_states * n_actions;
        let features = (0..n_states)
            .map(|s| {
                (0..n_actions)
                    .map(|a| {
                        let mut phi = vec![0.0; dim];
                        phi[s * n_actions + a] = 1.0;
                        phi
                    })
                    .collect()
            })
            .collect();
        Self::new(features, logits.into_iter().flatten().collect())
    }

    /// Gaussian-like features in `[-1, 1]` and parameters in `[-2, 2]`.
    pub fn random<R: Rng + ?Sized>(
        n_states: usize,
        n_actions: usize,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let features = (0..n_states)
            .map(|_| {
                (0..n_actions)
                    .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect())
                    .collect()
            })
            .collect();
        let theta = (0..dim).map(|_| rng.gen_range(-2.0..=2.0)).collect();
        Self::new(features, theta)
    }

    pub fn n_states(&self) -> usize {
        self.features.len()
    }

    pub fn n_actions(&self) -> usize {
        self.features[0].len()
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn probs(&self, s: usize) -> Vec<f64> {
        let logits: Vec<f64> = self.features[s]
            .iter()
            .map(|phi| phi.iter().zip(&self.theta).map(|(f, t)| f * t).sum())
            .collect();
        softmax(&logits)
    }

    /// `pi[s][a]`.
    pub fn table(&self) -> Vec<Vec<f64>> {
        (0..self.n_states()).map(|s| self.probs(s)).collect()
    }

    /// `∇ log pi(a|s) = phi(s, a) - sum_b pi(b|s) phi(s, b)`.
    pub fn score(&self, s: usize, a: usize) -> Vec<f64> {
        let pi = self.probs(s);
        let mut out = self.features[s][a].clone();
        for (b, p) in pi.iter().enumerate() {
            axpy(&mut out, -p, &self.features[s][b]);
        }
        out
    }

    /// `scores[s][a]`.
    pub fn scores(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.n_states())
            .map(|s| (0..self.n_actions()).map(|a| self.score(s, a)).collect())
            .collect()
    }
}

/// One side-by-side inequality `lhs <= rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Inequality {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub status: BoundStatus,
}

impl Inequality {
    pub fn new(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            slack: rhs - lhs,
            status: compare_bound(lhs, rhs),
        }
    }

    pub fn violated(&self) -> bool {
        self.status.is_violation()
    }
}

/// Bin grid symmetric about zero. A zero bound falls back to `[-1, 1]`.
fn symmetric_bins(bins: usize, bound: f64) -> Result<BinSpec> {
    let half = if bound > 0.0 { bound } else { 1.0 };
    BinSpec::new(bins, -half, half)
}

/// `sqrt(2) G Y sqrt(mi) + G delta` (`delta = 0` for the unbinned form).
fn gradient_bound(g_max: f64, y_max: f64, mi: f64, delta: f64) -> f64 {
    std::f64::consts::SQRT_2 * g_max * y_max * mi.max(0.0).sqrt() + g_max * delta
}

/// Groups equal values; returns a column index per entry.
fn value_columns(values: &[f64]) -> (Vec<usize>, usize) {
    let mut ids: BTreeMap<u64, usize> = BTreeMap::new();
    let cols = values
        .iter()
        .map(|v| {
            // +0.0 and -0.0 are the same reward
            let key = if *v == 0.0 { 0 } else { v.to_bits() };
            let next = ids.len();
            *ids.entry(key).or_insert(next)
        })
        .collect();
    (cols, ids.len())
}

/// One state with probabilities, scores and a deterministic reward per
/// action, seen by the one-shot theorems.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OneShotReport {
    pub seed: Option<u64>,
    pub probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub bins: usize,
    pub gradient: Vec<f64>,
    pub gradient_norm: f64,
    /// `||E[S]||`, zero up to rounding.
    pub score_mean_norm: f64,
    pub g_max: f64,
    pub r_max: f64,
    pub delta: f64,
    pub mi_reward: f64,
    pub mi_binned: f64,
    pub unbinned: Inequality,
    pub binned: Inequality,
}

impl OneShotReport {
    pub fn violations(&self) -> usize {
        usize::from(self.unbinned.violated())
            + usize::from(self.binned.violated())
            + usize::from(self.score_mean_norm > IDENTITY_TOLERANCE)
    }
}

/// Evaluates both one-shot bounds for explicit probabilities and scores.
pub fn one_shot_bounds(
    probs: &[f64],
    scores: &[Vec<f64>],
    rewards: &[f64],
    r_max: f64,
    bins: usize,
) -> Result<OneShotReport> {
    let n = probs.len();
    if scores.len() != n || rewards.len() != n {
        return Err(Error::Dimension {
            what: "one-shot tables",
            expected: n,
            actual: scores.len().min(rewards.len()),
        });
    }
    crate::policy::validate_distribution(probs)?;
    let dim = scores.first().map_or(0, Vec::len);
    let mut gradient = vec![0.0; dim];
    let mut score_mean = vec![0.0; dim];
    for a in 0..n {
        axpy(&mut gradient, probs[a] * rewards[a], &scores[a]);
        axpy(&mut score_mean, probs[a], &scores[a]);
    }
    let g_max = (0..n)
        .filter(|&a| probs[a] > 0.0)
        .map(|a| norm(&scores[a]))
        .fold(0.0, f64::max);

    let (cols, n_values) = value_columns(rewards);
    let mut joint = vec![vec![0.0; n_values]; n];
    for a in 0..n {
        joint[a][cols[a]] = probs[a];
    }
    let mi_reward = mutual_information_exact(&joint);

    let spec = symmetric_bins(bins, r_max)?;
    let mut binned = vec![vec![0.0; bins]; n];
    for a in 0..n {
        binned[a][spec.discretize(rewards[a])?] = probs[a];
    }
    let mi_binned = mutual_information_exact(&binned);
    let gradient_norm = norm(&gradient);
    Ok(OneShotReport {
        seed: None,
        probs: probs.to_vec(),
        rewards: rewards.to_vec(),
        bins,
        gradient,
        gradient_norm,
        score_mean_norm: norm(&score_mean),
        g_max,
        r_max,
        delta: spec.delta(),
        mi_reward,
        mi_binned,
        unbinned: Inequality::new(gradient_norm, gradient_bound(g_max, r_max, mi_reward, 0.0)),
        binned: Inequality::new(
            gradient_norm,
            gradient_bound(g_max, r_max, mi_binned, spec.delta()),
        ),
    })
}

/// A softmax-linear policy facing a one-shot game.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactOneShot {
    pub policy: SoftmaxLinearPolicy,
    pub game: OneShotGame,
}

impl ExactOneShot {
    pub fn new(policy: SoftmaxLinearPolicy, game: OneShotGame) -> Result<Self> {
        if policy.n_states() != 1 {
            return Err(Error::InvalidConfig(
                "one-shot policy must have a single state".into(),
            ));
        }
        if policy.n_actions() != game.rewards().len() {
            return Err(Error::Dimension {
                what: "one-shot actions",
                expected: game.rewards().len(),
                actual: policy.n_actions(),
            });
        }
        Ok(Self { policy, game })
    }

    pub fn check(&self, bins: usize) -> Result<OneShotReport> {
        one_shot_bounds(
            &self.policy.probs(0),
            &self.policy.scores()[0],
            self.game.rewards(),
            self.game.r_max(),
            bins,
        )
    }
}

/// Same checks with a softmax-PQC policy at a fixed observation.
pub fn pqc_one_shot_check(
    policy: &SoftmaxPqcPolicy,
    observation: &[f64],
    game: &OneShotGame,
    bins: usize,
) -> Result<OneShotReport> {
    let n = policy.n_actions();
    if n != game.rewards().len() {
        return Err(Error::Dimension {
            what: "one-shot actions",
            expected: game.rewards().len(),
            actual: n,
        });
    }
    let probs = policy.action_probs(observation)?.probs;
    let scores = (0..n)
        .map(|a| policy.log_policy_gradient(observation, a, GradientMethod::ParameterShift))
        .collect::<Result<Vec<_>>>()?;
    one_shot_bounds(&probs, &scores, game.rewards(), game.r_max(), bins)
}

/// One enumerated trajectory.
struct Path<'a> {
    states: &'a [usize],
    actions: &'a [usize],
    rewards: &'a [f64],
    prob: f64,
}

fn check_mdp_size(mdp: &TabularMdp) -> Result<()> {
    if mdp.n_states() * mdp.n_actions() > MAX_STATE_ACTIONS {
        return Err(Error::SizeLimit(format!(
            "{} states x {} actions exceeds {MAX_STATE_ACTIONS}",
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    if mdp.horizon() > MAX_HORIZON {
        return Err(Error::SizeLimit(format!(
            "horizon {} exceeds {MAX_HORIZON}",
            mdp.horizon()
        )));
    }
    Ok(())
}

/// Visits every positive-probability trajectory. Fails once more than
/// [`MAX_PATHS`] have been produced.
fn enumerate_paths(mdp: &TabularMdp, policy: &[Vec<f64>], mut visit: impl FnMut(&Path)) -> Result<usize> {
    #[allow(clippy::too_many_arguments)]
    fn go(
        mdp: &TabularMdp,
        policy: &[Vec<f64>],
        states: &mut Vec<usize>,
        actions: &mut Vec<usize>,
        rewards: &mut Vec<f64>,
        prob: f64,
        count: &mut usize,
        visit: &mut dyn FnMut(&Path),
    ) -> Result<()> {
        if actions.len() == mdp.horizon() {
            *count += 1;
            if *count > MAX_PATHS {
                return Err(Error::SizeLimit(format!("more than {MAX_PATHS} trajectories")));
            }
            visit(&Path {
                states,
                actions,
                rewards,
                prob,
            });
            return Ok(());
        }
        let s = *states.last().unwrap();
        for (a, &pa) in policy[s].iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            actions.push(a);
            rewards.push(mdp.reward(s, a));
            for (next, &pt) in mdp.transition(s, a).iter().enumerate() {
                if pt == 0.0 {
                    continue;
                }
                states.push(next);
                go(
                    mdp,
                    policy,
                    states,
                    actions,
                    rewards,
                    prob * pa * pt,
                    count,
                    visit,
                )?;
                states.pop();
            }
            actions.pop();
            rewards.pop();
        }
        Ok(())
    }

    let mut count = 0;
    let (mut states, mut actions, mut rewards) = (Vec::new(), Vec::new(), Vec::new());
    for (s0, &p0) in mdp.initial_dist().iter().enumerate() {
        if p0 == 0.0 {
            continue;
        }
        states.push(s0);
        go(
            mdp,
            policy,
            &mut states,
            &mut actions,
            &mut rewards,
            p0,
            &mut count,
            &mut visit,
        )?;
        states.pop();
    }
    Ok(count)
}

/// `(1 - gamma) / (1 - gamma^T)`.
pub fn occupancy_normalizer(gamma: f64, horizon: usize) -> f64 {
    if gamma == 0.0 {
        return 1.0;
    }
    (1.0 - gamma) / (1.0 - gamma.powi(horizon as i32))
}

/// Exact quantities of a tabular MDP under a fixed policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactMdpQuantities {
    /// `rho(s) = sum_{t < T} gamma^t Pr(s_t = s)`.
    pub occupancy: Vec<f64>,
    /// `d(s) = (1 - gamma) / (1 - gamma^T) rho(s)`; sums to 1.
    pub distribution: Vec<f64>,
    /// `Q_t(s, a)`, the value of taking `a` in `s` at step `t`.
    pub q_by_step: Vec<Vec<Vec<f64>>>,
    /// Occupancy-weighted `sum_t gamma^t Pr(s_t = s) Q_t(s, a) / rho(s)`
    /// (taken as `Q_0` where `rho(s) = 0`).
    pub q: Vec<Vec<f64>>,
}

pub fn exact_quantities(mdp: &TabularMdp, policy: &[Vec<f64>]) -> Result<ExactMdpQuantities> {
    let marginals = mdp.state_marginals(policy)?;
    let (n_s, n_a, horizon, gamma) = (mdp.n_states(), mdp.n_actions(), mdp.horizon(), mdp.gamma());

    let mut q_by_step = vec![vec![vec![0.0; n_a]; n_s]; horizon];
    for t in (0..horizon).rev() {
        for s in 0..n_s {
            for a in 0..n_a {
                let mut q = mdp.reward(s, a);
                if t + 1 < horizon {
                    let next = &q_by_step[t + 1];
                    let cont: f64 = mdp
                        .transition(s, a)
                        .iter()
                        .enumerate()
                        .map(|(n, pt)| pt * policy[n].iter().zip(&next[n]).map(|(p, q)| p * q).sum::<f64>())
                        .sum();
                    q += gamma * cont;
                }
                q_by_step[t][s][a] = q;
            }
        }
    }

    let c = occupancy_normalizer(gamma, horizon);
    let mut occupancy = vec![0.0; n_s];
    let mut weighted_q = vec![vec![0.0; n_a]; n_s];
    let mut discount = 1.0;
    for t in 0..horizon {
        for s in 0..n_s {
            let w = discount * marginals[t][s];
            occupancy[s] += w;
            axpy(&mut weighted_q[s], w, &q_by_step[t][s]);
        }
        discount *= gamma;
    }
    let q = (0..n_s)
        .map(|s| {
            if occupancy[s] > 0.0 {
                weighted_q[s].iter().map(|v| v / occupancy[s]).collect()
            } else {
                q_by_step[0][s].clone()
            }
        })
        .collect();
    Ok(ExactMdpQuantities {
        distribution: occupancy.iter().map(|r| c * r).collect(),
        occupancy,
        q_by_step,
        q,
    })
}

/// The multi-state bound for one choice of binned signal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignalBound {
    pub y_max: f64,
    pub delta: f64,
    /// `I(A; Ỹ | S)` under `S ~ d`.
    pub conditional_mi: f64,
    pub inequality: Inequality,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MdpReport {
    pub seed: Option<u64>,
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub bins: usize,
    pub paths: usize,
    pub quantities: ExactMdpQuantities,
    /// `E_{s ~ d}[g_s]` with `g_s = E_{A ~ pi}[S(s, A) Q(s, A)]`.
    pub gradient_lemma: Vec<f64>,
    /// `c sum_tau P(tau) (sum_t S_t)(sum_t gamma^t R_t)` over all trajectories.
    pub gradient_direct: Vec<f64>,
    pub gradient_agreement: f64,
    pub g_max: f64,
    /// `Ỹ` bins the action values.
    pub q_binned: SignalBound,
    /// `Ỹ` bins the per-step returns.
    pub return_binned: SignalBound,
}

impl MdpReport {
    pub fn violations(&self) -> usize {
        usize::from(self.q_binned.inequality.violated())
            + usize::from(self.return_binned.inequality.violated())
            + usize::from(!(self.gradient_agreement <= GRADIENT_AGREEMENT))
            + usize::from((self.quantities.distribution.iter().sum::<f64>() - 1.0).abs() > 1e-12)
    }
}

/// `I(A; Ỹ | S)` with `S ~ d` from per-state `(action, signal, weight)`
/// triples.
fn binned_conditional_mi(
    per_state: &[Vec<(usize, f64, f64)>],
    n_actions: usize,
    spec: &BinSpec,
) -> Result<f64> {
    let mut blocks = Vec::with_capacity(per_state.len());
    for entries in per_state {
        let mut block = vec![vec![0.0; spec.bins()]; n_actions];
        for &(a, y, w) in entries {
            block[a][spec.discretize(y)?] += w;
        }
        blocks.push(block);
    }
    Ok(conditional_mutual_information_exact(&blocks))
}

/// Checks the gradient lemma and the multi-state bound exactly.
pub fn exact_mdp_check(mdp: &TabularMdp, policy: &SoftmaxLinearPolicy, bins: usize) -> Result<MdpReport> {
    check_mdp_size(mdp)?;
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(Error::Dimension {
            what: "policy shape",
            expected: mdp.n_states() * mdp.n_actions(),
            actual: policy.n_states() * policy.n_actions(),
        });
    }
    let table = policy.table();
    let scores = policy.scores();
    let quantities = exact_quantities(mdp, &table)?;
    let (n_s, n_a, dim, gamma) = (mdp.n_states(), mdp.n_actions(), policy.dim(), mdp.gamma());
    let c = occupancy_normalizer(gamma, mdp.horizon());

    let mut gradient_lemma = vec![0.0; dim];
    for s in 0..n_s {
        for a in 0..n_a {
            axpy(
                &mut gradient_lemma,
                quantities.distribution[s] * table[s][a] * quantities.q[s][a],
                &scores[s][a],
            );
        }
    }

    let mut gradient_direct = vec![0.0; dim];
    // (state, action, per-step return) -> weight c gamma^t P
    let mut return_mass: BTreeMap<(usize, usize, u64), f64> = BTreeMap::new();
    let paths = enumerate_paths(mdp, &table, |path| {
        let mut score_sum = vec![0.0; dim];
        let mut discounted = 0.0;
        let mut discount = 1.0;
        for (t, (&s, &a)) in path.states.iter().zip(path.actions).enumerate() {
            axpy(&mut score_sum, 1.0, &scores[s][a]);
            discounted += discount * path.rewards[t];
            discount *= gamma;
        }
        axpy(&mut gradient_direct, c * path.prob * discounted, &score_sum);

        let mut to_go = 0.0;
        for t in (0..path.actions.len()).rev() {
            to_go = path.rewards[t] + gamma * to_go;
            let key = (path.states[t], path.actions[t], to_go.to_bits());
            *return_mass.entry(key).or_insert(0.0) += c * gamma.powi(t as i32) * path.prob;
        }
    })?;
    let gradient_agreement = gradient_lemma
        .iter()
        .zip(&gradient_direct)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let reachable = |s: usize| quantities.occupancy[s] > 0.0;
    let table = &table;
    let g_max = (0..n_s)
        .filter(|&s| reachable(s))
        .flat_map(|s| (0..n_a).filter(move |&a| table[s][a] > 0.0).map(move |a| (s, a)))
        .map(|(s, a)| norm(&scores[s][a]))
        .fold(0.0, f64::max);
    let grad_norm = norm(&gradient_lemma);

    let q_entries: Vec<Vec<(usize, f64, f64)>> = (0..n_s)
        .map(|s| {
            (0..n_a)
                .map(|a| (a, quantities.q[s][a], quantities.distribution[s] * table[s][a]))
                .collect()
        })
        .collect();
    let q_max = (0..n_s)
        .filter(|&s| reachable(s))
        .flat_map(|s| quantities.q[s].iter().map(|v| v.abs()))
        .fold(0.0, f64::max);
    let q_binned = signal_bound(&q_entries, n_a, bins, q_max, g_max, grad_norm)?;

    let mut g_entries = vec![Vec::new(); n_s];
    let mut g_max_abs = 0.0f64;
    for (&(s, a, bits), &w) in &return_mass {
        let y = f64::from_bits(bits);
        g_max_abs = g_max_abs.max(y.abs());
        g_entries[s].push((a, y, w));
    }
    let return_binned = signal_bound(&g_entries, n_a, bins, g_max_abs, g_max, grad_norm)?;

    Ok(MdpReport {
        seed: None,
        n_states: n_s,
        n_actions: n_a,
        horizon: mdp.horizon(),
        gamma,
        bins,
        paths,
        quantities,
        gradient_lemma,
        gradient_direct,
        gradient_agreement,
        g_max,
        q_binned,
        return_binned,
    })
}

fn signal_bound(
    entries: &[Vec<(usize, f64, f64)>],
    n_actions: usize,
    bins: usize,
    y_max: f64,
    g_max: f64,
    grad_norm: f64,
) -> Result<SignalBound> {
    let spec = symmetric_bins(bins, y_max)?;
    let conditional_mi = binned_conditional_mi(entries, n_actions, &spec)?;
    Ok(SignalBound {
        y_max,
        delta: spec.delta(),
        conditional_mi,
        inequality: Inequality::new(
            grad_norm,
            gradient_bound(g_max, y_max, conditional_mi, spec.delta()),
        ),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineReport {
    pub seed: Option<u64>,
    /// Largest `||E[S_t sum_{j<t} gamma^j R_j]||` over `t`.
    pub past_reward_term: f64,
    /// Largest `||E_{A ~ pi(.|s)}[S(s, A) B(s)]||` over states.
    pub state_baseline_term: f64,
}

impl BaselineReport {
    pub fn violations(&self) -> usize {
        usize::from(!(self.past_reward_term <= IDENTITY_TOLERANCE))
            + usize::from(!(self.state_baseline_term <= IDENTITY_TOLERANCE))
    }
}

/// Verifies that past rewards and state-only baselines do not bias the
/// score-function gradient.
pub fn baseline_identity_check(
    mdp: &TabularMdp,
    policy: &SoftmaxLinearPolicy,
    baseline: &[f64],
) -> Result<BaselineReport> {
    check_mdp_size(mdp)?;
    if baseline.len() != mdp.n_states() {
        return Err(Error::Dimension {
            what: "baseline",
            expected: mdp.n_states(),
            actual: baseline.len(),
        });
    }
    let table = policy.table();
    let scores = policy.scores();
    let gamma = mdp.gamma();
    let mut per_step = vec![vec![0.0; policy.dim()]; mdp.horizon()];
    enumerate_paths(mdp, &table, |path| {
        let mut past = 0.0;
        let mut discount = 1.0;
        for t in 0..path.actions.len() {
            axpy(
                &mut per_step[t],
                path.prob * past,
                &scores[path.states[t]][path.actions[t]],
            );
            past += discount * path.rewards[t];
            discount *= gamma;
        }
    })?;
    let past_reward_term = per_step.iter().map(|v| norm(v)).fold(0.0, f64::max);
    let state_baseline_term = (0..mdp.n_states())
        .map(|s| {
            let mut acc = vec![0.0; policy.dim()];
            for a in 0..mdp.n_actions() {
                axpy(&mut acc, table[s][a] * baseline[s], &scores[s][a]);
            }
            norm(&acc)
        })
        .fold(0.0, f64::max);
    Ok(BaselineReport {
        seed: None,
        past_reward_term,
        state_baseline_term,
    })
}

/// Sizes and tables of a joint `P(s) P(z|s) P(y|z,s) P(a|y,s)`, in which the
/// action depends on the window index only through the binned signal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpressivityConstruction {
    pub state: Vec<f64>,
    /// `index[s][z]`.
    pub index: Vec<Vec<f64>>,
    /// `signal[s][z][y]`.
    pub signal: Vec<Vec<Vec<f64>>>,
    /// `action[s][y][a]`.
    pub action: Vec<Vec<Vec<f64>>>,
}

impl ExpressivityConstruction {
    pub fn random<R: Rng + ?Sized>(
        n_states: usize,
        n_index: usize,
        n_signal: usize,
        n_actions: usize,
        rng: &mut R,
    ) -> Self {
        let sparse = rng.gen_bool(0.3);
        let state = random_distribution(n_states, false, rng);
        let index = (0..n_states)
            .map(|_| random_distribution(n_index, false, rng))
            .collect();
        let signal = (0..n_states)
            .map(|_| {
                (0..n_index)
                    .map(|_| random_distribution(n_signal, sparse, rng))
                    .collect()
            })
            .collect();
        let action = (0..n_states)
            .map(|_| {
                (0..n_signal)
                    .map(|_| random_distribution(n_actions, sparse, rng))
                    .collect()
            })
            .collect();
        Self {
            state,
            index,
            signal,
            action,
        }
    }

    fn n_actions(&self) -> usize {
        self.action[0][0].len()
    }

    /// `pi_z^s(a) = sum_y P(y|z,s) P(a|y,s)`.
    pub fn action_given_index(&self, s: usize, z: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_actions()];
        for (y, py) in self.signal[s][z].iter().enumerate() {
            axpy(&mut out, *py, &self.action[s][y]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpressivityReport {
    pub seed: Option<u64>,
    /// `I(A; Z | Ỹ, S)`, zero by construction.
    pub residual: f64,
    pub mi_index: f64,
    pub mi_signal: f64,
    pub jsd: f64,
    pub l2: f64,
    pub tv: f64,
    /// `|JSD - I(A; Z | S)|`.
    pub jsd_identity_gap: f64,
    pub index_vs_signal: Inequality,
    pub l2_bound: Inequality,
    pub tv_bound: Inequality,
}

impl ExpressivityReport {
    pub fn violations(&self) -> usize {
        usize::from(self.index_vs_signal.violated())
            + usize::from(self.l2_bound.violated())
            + usize::from(self.tv_bound.violated())
            + usize::from(!(self.jsd_identity_gap <= 1e-12))
            + usize::from(!(self.residual <= 1e-12))
    }
}

pub fn expressivity_theorem_check(c: &ExpressivityConstruction) -> Result<ExpressivityReport> {
    let n_s = c.state.len();
    if n_s == 0 || c.index.len() != n_s || c.signal.len() != n_s || c.action.len() != n_s {
        return Err(Error::Dimension {
            what: "construction states",
            expected: n_s,
            actual: c.index.len(),
        });
    }
    let n_z = c.index[0].len();
    let n_y = c.signal[0][0].len();
    let n_a = c.n_actions();

    let mut az = Vec::with_capacity(n_s);
    let mut ay = Vec::with_capacity(n_s);
    let mut az_given_y = Vec::new();
    let (mut jsd, mut l2, mut tv) = (0.0, 0.0, 0.0);
    for s in 0..n_s {
        let ps = c.state[s];
        // p(z, a | s) and p(y, a | s) scaled by p(s)
        let mut block_z = vec![vec![0.0; n_a]; n_z];
        let mut block_y = vec![vec![0.0; n_a]; n_y];
        // p(z, a | y, s) blocks, one per (s, y)
        let mut by_y = vec![vec![vec![0.0; n_a]; n_z]; n_y];
        for z in 0..n_z {
            for y in 0..n_y {
                for a in 0..n_a {
                    let p = ps * c.index[s][z] * c.signal[s][z][y] * c.action[s][y][a];
                    block_z[z][a] += p;
                    block_y[y][a] += p;
                    by_y[y][z][a] += p;
                }
            }
        }
        az.push(block_z);
        ay.push(block_y);
        az_given_y.extend(by_y);

        let dists: Vec<Vec<f64>> = (0..n_z).map(|z| c.action_given_index(s, z)).collect();
        let refs: Vec<&[f64]> = dists.iter().map(Vec::as_slice).collect();
        jsd += ps * weighted_jsd(&c.index[s], &refs);
        l2 += ps * weighted_l2(&c.index[s], &refs);
        tv += ps * weighted_tv(&c.index[s], &refs);
    }
    let mi_index = conditional_mutual_information_exact(&az);
    let mi_signal = conditional_mutual_information_exact(&ay);
    Ok(ExpressivityReport {
        seed: None,
        residual: conditional_mutual_information_exact(&az_given_y),
        mi_index,
        mi_signal,
        jsd,
        l2,
        tv,
        jsd_identity_gap: (jsd - mi_index).abs(),
        index_vs_signal: Inequality::new(mi_index, mi_signal),
        l2_bound: Inequality::new(l2, 2.0 * mi_signal),
        tv_bound: Inequality::new(tv, 0.5 * mi_signal),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProxyGapReport {
    pub seed: Option<u64>,
    pub mi_signal: f64,
    pub mi_state: f64,
    pub conditional: f64,
    pub state_entropy_given_signal: f64,
    /// `I(A; Ỹ | S) - I(A; Ỹ)`.
    pub gap: f64,
    /// `|gap - (I(A; S | Ỹ) - I(A; S))|`.
    pub gap_identity_error: f64,
    pub lower: Inequality,
    pub upper: Inequality,
}

impl ProxyGapReport {
    pub fn violations(&self) -> usize {
        usize::from(self.lower.violated())
            + usize::from(self.upper.violated())
            + usize::from(!(self.gap_identity_error <= IDENTITY_TOLERANCE))
    }
}

/// Sandwich of the conditional measure between its unconditioned proxy and
/// the proxy's corrections, on an explicit joint `p[a][s][y]`.
pub fn proxy_gap_check(joint: &[Vec<Vec<f64>>]) -> Result<ProxyGapReport> {
    let n_a = joint.len();
    let n_s = joint.first().map_or(0, Vec::len);
    let n_y = joint.first().and_then(|r| r.first()).map_or(0, Vec::len);
    if n_a == 0 || n_s == 0 || n_y == 0 {
        return Err(Error::Empty("joint table"));
    }
    let total: f64 = joint.iter().flatten().flatten().sum();
    if (total - 1.0).abs() > 1e-9 || joint.iter().flatten().flatten().any(|p| !(*p >= 0.0)) {
        return Err(Error::InvalidDistribution(format!("joint sums to {total}")));
    }
    let ay: Vec<Vec<f64>> = (0..n_a)
        .map(|a| (0..n_y).map(|y| (0..n_s).map(|s| joint[a][s][y]).sum()).collect())
        .collect();
    let as_: Vec<Vec<f64>> = (0..n_a)
        .map(|a| (0..n_s).map(|s| joint[a][s].iter().sum()).collect())
        .collect();
    let by_state: Vec<Vec<Vec<f64>>> = (0..n_s)
        .map(|s| (0..n_a).map(|a| joint[a][s].clone()).collect())
        .collect();
    let by_signal: Vec<Vec<Vec<f64>>> = (0..n_y)
        .map(|y| {
            (0..n_a)
                .map(|a| (0..n_s).map(|s| joint[a][s][y]).collect())
                .collect()
        })
        .collect();
    let mi_signal = mutual_information_exact(&ay);
    let mi_state = mutual_information_exact(&as_);
    let conditional = conditional_mutual_information_exact(&by_state);
    let mi_state_given_signal = conditional_mutual_information_exact(&by_signal);
    let sy: Vec<f64> = (0..n_s)
        .flat_map(|s| (0..n_y).map(move |y| (s, y)))
        .map(|(s, y)| (0..n_a).map(|a| joint[a][s][y]).sum())
        .collect();
    let py: Vec<f64> = (0..n_y).map(|y| ay.iter().map(|row| row[y]).sum()).collect();
    let state_entropy_given_signal = (entropy(&sy) - entropy(&py)).max(0.0);
    let gap = conditional - mi_signal;
    Ok(ProxyGapReport {
        seed: None,
        mi_signal,
        mi_state,
        conditional,
        state_entropy_given_signal,
        gap,
        gap_identity_error: (gap - (mi_state_given_signal - mi_state)).abs(),
        lower: Inequality::new(mi_signal - mi_state, conditional),
        upper: Inequality::new(conditional, mi_signal + state_entropy_given_signal),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PinskerAudit {
    pub pairs: usize,
    /// Largest `TV / sqrt(KL / 2)` seen (pairs with `KL = 0` skipped).
    pub max_ratio: f64,
    pub violations: usize,
}

/// `TV(p, q) <= sqrt(KL(p || q) / 2)` on random pairs.
pub fn pinsker_audit<R: Rng + ?Sized>(pairs: usize, rng: &mut R) -> PinskerAudit {
    let mut max_ratio = 0.0f64;
    let mut violations = 0;
    for _ in 0..pairs {
        let n = rng.gen_range(2..=8);
        let p = random_distribution(n, rng.gen_bool(0.2), rng);
        let q = random_distribution(n, false, rng);
        let tv = total_variation(&p, &q);
        let rhs = (0.5 * kl_divergence(&p, &q)).sqrt();
        if compare_bound(tv, rhs).is_violation() {
            violations += 1;
        }
        if rhs > 0.0 {
            max_ratio = max_ratio.max(tv / rhs);
        }
    }
    PinskerAudit {
        pairs,
        max_ratio,
        violations,
    }
}

/// Instance counts for a full audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuiteConfig {
    pub seed: u64,
    pub one_shot: usize,
    pub pqc_one_shot: usize,
    pub mdp: usize,
    pub baseline: usize,
    pub expressivity: usize,
    pub proxy_gap: usize,
    pub pinsker_pairs: usize,
}

impl SuiteConfig {
    /// `n` one-shot games and proxy joints, `n / 5` MDPs, `n / 2`
    /// expressivity constructions, `n / 50` PQC games and `10 n` Pinsker
    /// pairs. `n = 1000` is the full audit.
    pub fn scaled(n: usize, seed: u64) -> Self {
        Self {
            seed,
            one_shot: n,
            pqc_one_shot: n / 50,
            mdp: n / 5,
            baseline: n / 5,
            expressivity: n / 2,
            proxy_gap: n,
            pinsker_pairs: 10 * n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub config: SuiteConfig,
    pub one_shot: Vec<OneShotReport>,
    pub pqc_one_shot: Vec<OneShotReport>,
    pub mdp: Vec<MdpReport>,
    pub baseline: Vec<BaselineReport>,
    pub expressivity: Vec<ExpressivityReport>,
    pub proxy_gap: Vec<ProxyGapReport>,
    pub pinsker: PinskerAudit,
    pub max_gradient_disagreement: f64,
    pub violations: usize,
}

const BIN_CHOICES: [usize; 6] = [1, 2, 5, 10, 20, 50];

/// Random game: rewards in `[-1, 1]`, sometimes drawn from a few levels so
/// that distinct actions share a reward.
pub fn random_one_shot<R: Rng + ?Sized>(rng: &mut R) -> Result<ExactOneShot> {
    let n_actions = rng.gen_range(2..=5);
    let dim = rng.gen_range(1..=4);
    let policy = SoftmaxLinearPolicy::random(1, n_actions, dim, rng)?;
    let levels = rng.gen_bool(0.3);
    let rewards: Vec<f64> = (0..n_actions)
        .map(|_| {
            if levels {
                [-1.0, 0.0, 0.5][rng.gen_range(0..3)]
            } else {
                rng.gen_range(-1.0..=1.0)
            }
        })
        .collect();
    let r_max = rewards.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    ExactOneShot::new(policy, OneShotGame::new(rewards, r_max)?)
}

/// Random tiny MDP (2-3 states and actions, horizon 1-4) with a random
/// softmax-linear policy.
pub fn random_mdp_instance<R: Rng + ?Sized>(rng: &mut R) -> Result<(TabularMdp, SoftmaxLinearPolicy)> {
    let n_s = rng.gen_range(2..=3);
    let n_a = rng.gen_range(2..=3);
    let horizon = rng.gen_range(1..=4);
    let gamma = [0.0, 0.5, 0.9, 0.99][rng.gen_range(0..4)];
    let mdp = TabularMdp::random(n_s, n_a, horizon, gamma, rng)?;
    let policy = if rng.gen_bool(0.5) {
        SoftmaxLinearPolicy::random(n_s, n_a, rng.gen_range(1..=4), rng)?
    } else {
        SoftmaxLinearPolicy::tabular(
            (0..n_s)
                .map(|_| (0..n_a).map(|_| rng.gen_range(-2.0..=2.0)).collect())
                .collect(),
        )?
    };
    Ok((mdp, policy))
}

/// Random joint over `(A, S, Ỹ)`; about a third are generated with extra
/// structure (constant state or a state that is a function of the signal).
pub fn random_proxy_joint<R: Rng + ?Sized>(rng: &mut R) -> Vec<Vec<Vec<f64>>> {
    let (n_a, n_s, n_y) = (rng.gen_range(2..=4), rng.gen_range(1..=4), rng.gen_range(2..=5));
    let flat = random_distribution(n_a * n_s * n_y, rng.gen_bool(0.3), rng);
    let mut joint: Vec<Vec<Vec<f64>>> = (0..n_a)
        .map(|a| {
            (0..n_s)
                .map(|s| flat[(a * n_s + s) * n_y..(a * n_s + s + 1) * n_y].to_vec())
                .collect()
        })
        .collect();
    if rng.gen_bool(0.3) {
        // zero out cells whose state is not y mod n_s, then renormalize
        for a in 0..n_a {
            for s in 0..n_s {
                for y in 0..n_y {
                    if y % n_s != s {
                        joint[a][s][y] = 0.0;
                    }
                }
            }
        }
        let total: f64 = joint.iter().flatten().flatten().sum();
        for v in joint.iter_mut().flatten().flatten() {
            *v /= total;
        }
    }
    joint
}

fn instance_rng(master: &mut ChaCha8Rng) -> (u64, ChaCha8Rng) {
    let seed = master.gen();
    (seed, ChaCha8Rng::seed_from_u64(seed))
}

/// Runs every audit. Instances are drawn from per-instance seeds recorded in
/// the report.
pub fn run_suite(config: &SuiteConfig) -> Result<SuiteReport> {
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);

    let mut one_shot = Vec::with_capacity(config.one_shot);
    for _ in 0..config.one_shot {
        let (seed, mut rng) = instance_rng(&mut master);
        let game = random_one_shot(&mut rng)?;
        let mut report = game.check(BIN_CHOICES[rng.gen_range(0..BIN_CHOICES.len())])?;
        report.seed = Some(seed);
        one_shot.push(report);
    }

    let mut pqc_one_shot = Vec::with_capacity(config.pqc_one_shot);
    for _ in 0..config.pqc_one_shot {
        let (seed, mut rng) = instance_rng(&mut master);
        let spec = crate::quantum::CircuitSpec::ring(2, rng.gen_range(1..=2))?;
        let policy = SoftmaxPqcPolicy::initialize(
            spec,
            2,
            rng.gen_range(0.5..2.0),
            crate::policy::PolicyInit::default(),
            &mut rng,
        )?;
        let observation: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rewards: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let r_max = rewards.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        let game = OneShotGame::new(rewards, r_max)?;
        let bins = BIN_CHOICES[rng.gen_range(0..BIN_CHOICES.len())];
        let mut report = pqc_one_shot_check(&policy, &observation, &game, bins)?;
        report.seed = Some(seed);
        pqc_one_shot.push(report);
    }

    let mut mdp = Vec::with_capacity(config.mdp);
    for _ in 0..config.mdp {
        let (seed, mut rng) = instance_rng(&mut master);
        let (instance, policy) = random_mdp_instance(&mut rng)?;
        let mut report = exact_mdp_check(
            &instance,
            &policy,
            BIN_CHOICES[rng.gen_range(0..BIN_CHOICES.len())],
        )?;
        report.seed = Some(seed);
        mdp.push(report);
    }

    let mut baseline = Vec::with_capacity(config.baseline);
    for _ in 0..config.baseline {
        let (seed, mut rng) = instance_rng(&mut master);
        let (instance, policy) = random_mdp_instance(&mut rng)?;
        let b: Vec<f64> = (0..instance.n_states())
            .map(|_| rng.gen_range(-10.0..10.0))
            .collect();
        let mut report = baseline_identity_check(&instance, &policy, &b)?;
        report.seed = Some(seed);
        baseline.push(report);
    }

    let mut expressivity = Vec::with_capacity(config.expressivity);
    for _ in 0..config.expressivity {
        let (seed, mut rng) = instance_rng(&mut master);
        let dims = (
            rng.gen_range(1..=3),
            rng.gen_range(2..=6),
            rng.gen_range(2..=5),
            rng.gen_range(2..=4),
        );
        let c = ExpressivityConstruction::random(dims.0, dims.1, dims.2, dims.3, &mut rng);
        let mut report = expressivity_theorem_check(&c)?;
        report.seed = Some(seed);
        expressivity.push(report);
    }

    let mut proxy_gap = Vec::with_capacity(config.proxy_gap);
    for _ in 0..config.proxy_gap {
        let (seed, mut rng) = instance_rng(&mut master);
        let mut report = proxy_gap_check(&random_proxy_joint(&mut rng))?;
        report.seed = Some(seed);
        proxy_gap.push(report);
    }

    let (_, mut pinsker_rng) = instance_rng(&mut master);
    let pinsker = pinsker_audit(config.pinsker_pairs, &mut pinsker_rng);

    let violations = one_shot.iter().map(OneShotReport::violations).sum::<usize>()
        + pqc_one_shot.iter().map(OneShotReport::violations).sum::<usize>()
        + mdp.iter().map(MdpReport::violations).sum::<usize>()
        + baseline.iter().map(BaselineReport::violations).sum::<usize>()
        + expressivity
            .iter()
            .map(ExpressivityReport::violations)
            .sum::<usize>()
        + proxy_gap.iter().map(ProxyGapReport::violations).sum::<usize>()
        + pinsker.violations;
    Ok(SuiteReport {
        config: *config,
        max_gradient_disagreement: mdp.iter().map(|r| r.gradient_agreement).fold(0.0, f64::max),
        one_shot,
        pqc_one_shot,
        mdp,
        baseline,
        expressivity,
        proxy_gap,
        pinsker,
        violations,
    })
}

/// Used by the PQC-free entropy route in tests and reports.
pub fn mutual_information_from_entropies(joint: &[Vec<f64>]) -> f64 {
    let px: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let cols = joint.first().map_or(0, Vec::len);
    let py: Vec<f64> = (0..cols).map(|c| joint.iter().map(|r| r[c]).sum()).collect();
    let flat: Vec<f64> = joint.iter().flatten().copied().collect();
    infometrics::entropy(&px) + infometrics::entropy(&py) - infometrics::entropy(&flat)
}
