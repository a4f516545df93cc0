//! Softmax-PQC policy.
//!
//! Each action `a` owns a fixed base observable `O_a` and a trainable weight
//! `w_a`. For an environment state `s` the circuit input is `arctan(s)`
//! component-wise, and
//!
//! ```text
//! pi(a|s) = exp(beta * w_a * <O_a>_s) / sum_b exp(beta * w_b * <O_b>_s)
//! ```
//!
//! The trainable vector is laid out as `phi ‖ lam ‖ w`.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{self, CircuitSpec, GradientMethod, Observable, PqcParams};

/// Action probabilities for one state, together with the weighted
/// expectations `w_a * <O_a>` they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    pub probs: Vec<f64>,
    pub expectations: Vec<f64>,
}

impl ActionDistribution {
    /// Builds a distribution directly from probabilities.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        validate_distribution(&probs)?;
        Ok(Self {
            expectations: vec![0.0; probs.len()],
            probs,
        })
    }

    pub fn n_actions(&self) -> usize {
        self.probs.len()
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_action(self, rng)
    }

    pub fn entropy(&self) -> f64 {
        policy_entropy(self)
    }
}

pub(crate) fn validate_distribution(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidDistribution("no entries".into()));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidDistribution(format!("{probs:?}")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(format!("sums to {total}")));
    }
    Ok(())
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn sample_action<R: Rng + ?Sized>(dist: &ActionDistribution, rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut cumulative = 0.0;
    for (a, p) in dist.probs.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return a;
        }
    }
    // u landed in the rounding gap above the last partial sum
    dist.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Shannon entropy in nats, with `0 log 0 = 0`.
pub fn policy_entropy(dist: &ActionDistribution) -> f64 {
    crate::infometrics::entropy(&dist.probs)
}

/// Base observables for an action head: two actions share the all-qubit
/// parity with opposite signs; larger heads use `Z` on qubit `a`.
pub fn default_observables(n_qubits: usize, n_actions: usize) -> Result<Vec<Observable>> {
    match n_actions {
        2 => Ok(vec![
            Observable::parity(n_qubits, 1.0),
            Observable::parity(n_qubits, -1.0),
        ]),
        n if n >= 1 && n <= n_qubits => Ok((0..n).map(Observable::z).collect()),
        n => Err(Error::InvalidConfig(format!(
            "no default head for {n} actions on {n_qubits} qubits"
        ))),
    }
}

/// Parameter initialization: `phi ~ U(phi_low, phi_high)`, constant
/// `lam` and `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyInit {
    pub phi_low: f64,
    pub phi_high: f64,
    pub lam: f64,
    pub weight: f64,
}

impl Default for PolicyInit {
    fn default() -> Self {
        Self {
            phi_low: 0.0,
            phi_high: std::f64::consts::PI,
            lam: 1.0,
            weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxPqcPolicy {
    spec: CircuitSpec,
    pub params: PqcParams,
    pub weights: Vec<f64>,
    pub beta: f64,
    observables: Vec<Observable>,
    diagonals: Vec<Vec<f64>>,
}

impl SoftmaxPqcPolicy {
    pub fn new(
        spec: CircuitSpec,
        params: PqcParams,
        weights: Vec<f64>,
        beta: f64,
        observables: Vec<Observable>,
    ) -> Result<Self> {
        params.check(&spec)?;
        if observables.is_empty() {
            return Err(Error::InvalidConfig("policy needs at least one action".into()));
        }
        if weights.len() != observables.len() {
            return Err(Error::Dimension {
                what: "observable weights",
                expected: observables.len(),
                actual: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("observable weights"));
        }
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::InvalidConfig(format!("inverse temperature {beta}")));
        }
        for obs in &observables {
            obs.check(spec.n_qubits())?;
        }
        let diagonals = observables.iter().map(|o| o.diagonal(spec.n_qubits())).collect();
        Ok(Self {
            spec,
            params,
            weights,
            beta,
            observables,
            diagonals,
        })
    }

    /// Random initialization with the default action head.
    pub fn initialize<R: Rng + ?Sized>(
        spec: CircuitSpec,
        n_actions: usize,
        beta: f64,
        init: PolicyInit,
        rng: &mut R,
    ) -> Result<Self> {
        if !(init.phi_low <= init.phi_high) {
            return Err(Error::InvalidConfig("phi_low must not exceed phi_high".into()));
        }
        let observables = default_observables(spec.n_qubits(), n_actions)?;
        let phi = (0..spec.n_phi())
            .map(|_| {
                if init.phi_low == init.phi_high {
                    init.phi_low
                } else {
                    rng.gen_range(init.phi_low..init.phi_high)
                }
            })
            .collect();
        let params = PqcParams {
            phi,
            lam: vec![init.lam; spec.n_lam()],
        };
        Self::new(spec, params, vec![init.weight; n_actions], beta, observables)
    }

    pub fn spec(&self) -> &CircuitSpec {
        &self.spec
    }

    pub fn observables(&self) -> &[Observable] {
        &self.observables
    }

    pub fn n_actions(&self) -> usize {
        self.observables.len()
    }

    pub fn n_params(&self) -> usize {
        self.spec.n_phi() + self.spec.n_lam() + self.n_actions()
    }

    /// `phi ‖ lam ‖ w`.
    pub fn flat_params(&self) -> Vec<f64> {
        self.params
            .phi
            .iter()
            .chain(&self.params.lam)
            .chain(&self.weights)
            .copied()
            .collect()
    }

    pub fn set_flat_params(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(Error::Dimension {
                what: "flat parameter vector",
                expected: self.n_params(),
                actual: theta.len(),
            });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("flat parameter vector"));
        }
        let (phi, rest) = theta.split_at(self.spec.n_phi());
        let (lam, w) = rest.split_at(self.spec.n_lam());
        self.params.phi.copy_from_slice(phi);
        self.params.lam.copy_from_slice(lam);
        self.weights.copy_from_slice(w);
        Ok(())
    }

    /// Circuit input for an environment state: `arctan` of each component.
    pub fn encode(&self, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.spec.n_qubits() {
            return Err(Error::Dimension {
                what: "policy input",
                expected: self.spec.n_qubits(),
                actual: state.len(),
            });
        }
        Ok(state.iter().map(|x| x.atan()).collect())
    }

    /// Unweighted `<O_a>` for every action.
    pub fn raw_expectations(&self, state: &[f64]) -> Result<Vec<f64>> {
        let input = self.encode(state)?;
        let psi = quantum::run_pqc(&self.spec, &self.params, &input)?;
        Ok(self.diagonals.iter().map(|d| psi.expectation_diag(d)).collect())
    }

    pub fn action_probs(&self, state: &[f64]) -> Result<ActionDistribution> {
        let raw = self.raw_expectations(state)?;
        Ok(self.distribution_from_raw(&raw))
    }

    fn distribution_from_raw(&self, raw: &[f64]) -> ActionDistribution {
        let expectations: Vec<f64> = raw.iter().zip(&self.weights).map(|(e, w)| w * e).collect();
        let logits: Vec<f64> = expectations.iter().map(|e| self.beta * e).collect();
        ActionDistribution {
            probs: softmax(&logits),
            expectations,
        }
    }

    /// `∇_θ log pi(action | state)` over `phi ‖ lam ‖ w`.
    ///
    /// The circuit part is the gradient of the single observable
    /// `beta * sum_b (1[b = a] - pi(b)) w_b O_b`, so one gradient
    /// evaluation covers all actions.
    pub fn log_policy_gradient(
        &self,
        state: &[f64],
        action: usize,
        method: GradientMethod,
    ) -> Result<Vec<f64>> {
        Ok(self.score(state, action, method)?.1)
    }

    /// Distribution at `state` together with the score of `action`.
    pub fn score(
        &self,
        state: &[f64],
        action: usize,
        method: GradientMethod,
    ) -> Result<(ActionDistribution, Vec<f64>)> {
        let n_actions = self.n_actions();
        if action >= n_actions {
            return Err(Error::ActionOutOfRange { action, n_actions });
        }
        let input = self.encode(state)?;
        let psi = quantum::run_pqc(&self.spec, &self.params, &input)?;
        let raw: Vec<f64> = self.diagonals.iter().map(|d| psi.expectation_diag(d)).collect();
        let dist = self.distribution_from_raw(&raw);

        let mut combined = Observable::default();
        for (b, obs) in self.observables.iter().enumerate() {
            let indicator = if b == action { 1.0 } else { 0.0 };
            let coeff = self.beta * (indicator - dist.probs[b]) * self.weights[b];
            if coeff != 0.0 {
                combined.terms.extend(obs.scaled(coeff).terms);
            }
        }
        let mut grad = Vec::with_capacity(self.n_params());
        if combined.terms.is_empty() {
            grad.resize(self.spec.n_phi() + self.spec.n_lam(), 0.0);
        } else {
            let (_, g) =
                quantum::expectation_and_gradient(&self.spec, &self.params, &input, &combined, method)?;
            grad.extend(g.phi);
            grad.extend(g.lam);
        }
        for b in 0..n_actions {
            let indicator = if b == action { 1.0 } else { 0.0 };
            grad.push(self.beta * (indicator - dist.probs[b]) * raw[b]);
        }
        Ok((dist, grad))
    }

    /// Plain-text checkpoint, one `key = value` per line. Floats use the
    /// shortest representation that parses back to the same bits.
    pub fn to_checkpoint(&self) -> String {
        fn list(values: &[f64]) -> String {
            values
                .iter()
                .map(|v| format!("{v:?}"))
                .collect::<Vec<_>>()
                .join(",")
        }
        let mut out = String::new();
        let _ = writeln!(out, "n_qubits = {}", self.spec.n_qubits());
        let _ = writeln!(out, "n_layers = {}", self.spec.n_layers());
        let pairs: Vec<String> = self
            .spec
            .entanglers()
            .iter()
            .map(|(a, b)| format!("{a}-{b}"))
            .collect();
        let _ = writeln!(out, "entanglers = {}", pairs.join(","));
        let _ = writeln!(out, "n_actions = {}", self.n_actions());
        let _ = writeln!(out, "beta = {:?}", self.beta);
        let _ = writeln!(out, "phi = {}", list(&self.params.phi));
        let _ = writeln!(out, "lam = {}", list(&self.params.lam));
        let _ = writeln!(out, "w = {}", list(&self.weights));
        out
    }

    /// Inverse of [`to_checkpoint`](Self::to_checkpoint). The action head
    /// is rebuilt with [`default_observables`].
    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut fields = std::collections::BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", lineno + 1)))?;
            fields.insert(key.trim().to_string(), value.trim().to_string());
        }
        let get = |key: &str| {
            fields
                .get(key)
                .map(String::as_str)
                .ok_or_else(|| Error::Parse(format!("missing key `{key}`")))
        };
        let int = |key: &str| -> Result<usize> {
            get(key)?.parse().map_err(|e| Error::Parse(format!("{key}: {e}")))
        };
        let floats = |key: &str| -> Result<Vec<f64>> {
            let raw = get(key)?;
            if raw.is_empty() {
                return Ok(Vec::new());
            }
            raw.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("{key}: {e}")))
                })
                .collect()
        };
        let entanglers = {
            let raw = get("entanglers")?;
            let mut pairs = Vec::new();
            for item in raw.split(',').filter(|s| !s.trim().is_empty()) {
                let (a, b) = item
                    .split_once('-')
                    .ok_or_else(|| Error::Parse(format!("entangler `{item}`")))?;
                let parse = |s: &str| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|e| Error::Parse(format!("entangler `{item}`: {e}")))
                };
                pairs.push((parse(a)?, parse(b)?));
            }
            pairs
        };
        let n_qubits = int("n_qubits")?;
        let spec = CircuitSpec::new(n_qubits, int("n_layers")?, entanglers)?;
        let beta = get("beta")?
            .parse::<f64>()
            .map_err(|e| Error::Parse(format!("beta: {e}")))?;
        let params = PqcParams {
            phi: floats("phi")?,
            lam: floats("lam")?,
        };
        let observables = default_observables(n_qubits, int("n_actions")?)?;
        Self::new(spec, params, floats("w")?, beta, observables)
    }
}
