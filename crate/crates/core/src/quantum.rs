//! Dense statevector simulation of the data-reuploading circuit.
//!
//! Qubit `q` is bit `q` of the basis index (little-endian), so basis index
//! `0b0010` is the state with qubit 1 set and every other qubit clear.
//!
//! Every layer of the circuit applies, in order:
//!
//! 1. a variational sublayer `Rz(phi[l,q,0]) · Ry(phi[l,q,1])` on each qubit
//!    (so `Ry` acts first),
//! 2. a ring of `CZ` entanglers,
//! 3. an encoding sublayer `Rx(lam[l,q] * x[q])` on each qubit.
//!
//! All rotations are generated by Pauli operators, `R_P(t) = exp(-i t P / 2)`,
//! which is what makes the two-point shift rule exact.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense simulation cap. A 12-qubit register holds 4096 amplitudes.
pub const MAX_QUBITS: usize = 12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    amps: Vec<Complex64>,
    n_qubits: usize,
}

fn check_qubits(n_qubits: usize) -> Result<()> {
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        return Err(Error::QubitCount(n_qubits));
    }
    Ok(())
}

impl Statevector {
    /// `|0...0>` on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        check_qubits(n_qubits)?;
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[0] = ONE;
        Ok(Self { amps, n_qubits })
    }

    /// Wraps raw amplitudes. The length must be a power of two and the
    /// vector must be normalized to within `1e-10`.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::Dimension {
                what: "amplitude vector (power of two)",
                expected: len.next_power_of_two().max(2),
                actual: len,
            });
        }
        let n_qubits = len.trailing_zeros() as usize;
        check_qubits(n_qubits)?;
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::NonFinite("amplitudes"));
        }
        let state = Self { amps, n_qubits };
        if (state.norm_sqr() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidDistribution(format!(
                "statevector norm^2 = {}",
                state.norm_sqr()
            )));
        }
        Ok(state)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Statevector) -> Complex64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.n_qubits {
            return Err(Error::QubitIndex {
                index: qubit,
                n_qubits: self.n_qubits,
            });
        }
        Ok(())
    }

    pub fn apply_rotation(&mut self, qubit: usize, axis: Axis, angle: f64) -> Result<()> {
        self.check_qubit(qubit)?;
        if !angle.is_finite() {
            return Err(Error::NonFinite("rotation angle"));
        }
        self.rotate(qubit, axis, angle);
        Ok(())
    }

    pub fn apply_cz(&mut self, q1: usize, q2: usize) -> Result<()> {
        self.check_qubit(q1)?;
        self.check_qubit(q2)?;
        if q1 == q2 {
            return Err(Error::SameQubit(q1));
        }
        self.cz(q1, q2);
        Ok(())
    }

    pub fn expectation(&self, obs: &Observable) -> Result<f64> {
        obs.check(self.n_qubits)?;
        Ok(self.expectation_diag(&obs.diagonal(self.n_qubits)))
    }

    /// Expectation of a diagonal operator given by its diagonal entries.
    pub(crate) fn expectation_diag(&self, diag: &[f64]) -> f64 {
        self.amps.iter().zip(diag).map(|(a, d)| a.norm_sqr() * d).sum()
    }

    fn rotate(&mut self, qubit: usize, axis: Axis, angle: f64) {
        let half = 0.5 * angle;
        let (s, c) = half.sin_cos();
        let mask = 1usize << qubit;
        match axis {
            Axis::X => {
                let mis = Complex64::new(0.0, -s);
                for i in (0..self.amps.len()).filter(|i| i & mask == 0) {
                    let (a, b) = (self.amps[i], self.amps[i | mask]);
                    self.amps[i] = a * c + b * mis;
                    self.amps[i | mask] = a * mis + b * c;
                }
            }
            Axis::Y => {
                for i in (0..self.amps.len()).filter(|i| i & mask == 0) {
                    let (a, b) = (self.amps[i], self.amps[i | mask]);
                    self.amps[i] = a * c - b * s;
                    self.amps[i | mask] = a * s + b * c;
                }
            }
            Axis::Z => {
                let lo = Complex64::new(c, -s);
                let hi = Complex64::new(c, s);
                for (i, amp) in self.amps.iter_mut().enumerate() {
                    *amp *= if i & mask == 0 { lo } else { hi };
                }
            }
        }
    }

    fn cz(&mut self, q1: usize, q2: usize) {
        let mask = (1usize << q1) | (1usize << q2);
        for (i, amp) in self.amps.iter_mut().enumerate() {
            if i & mask == mask {
                *amp = -*amp;
            }
        }
    }

    /// `<bra| P_qubit |self>` for a single-qubit Pauli `P`.
    fn pauli_matrix_element(&self, bra: &Statevector, qubit: usize, axis: Axis) -> Complex64 {
        let mask = 1usize << qubit;
        let mut acc = ZERO;
        for (i, b) in bra.amps.iter().enumerate() {
            let applied = match axis {
                Axis::X => self.amps[i ^ mask],
                // Y|0> = i|1>, Y|1> = -i|0>
                Axis::Y => {
                    if i & mask == 0 {
                        self.amps[i | mask] * Complex64::new(0.0, -1.0)
                    } else {
                        self.amps[i & !mask] * Complex64::new(0.0, 1.0)
                    }
                }
                Axis::Z => {
                    if i & mask == 0 {
                        self.amps[i]
                    } else {
                        -self.amps[i]
                    }
                }
            };
            acc += b.conj() * applied;
        }
        acc
    }
}

/// Circuit shape: qubit count, number of reuploading layers and the
/// entangling pairs applied in every layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitSpec {
    n_qubits: usize,
    n_layers: usize,
    entanglers: Vec<(usize, usize)>,
}

impl CircuitSpec {
    /// Circuit with a ring of nearest-neighbour `CZ` entanglers,
    /// `(0,1), (1,2), ..., (n-1,0)`. Two qubits get a single pair and one
    /// qubit gets none.
    pub fn ring(n_qubits: usize, n_layers: usize) -> Result<Self> {
        let entanglers = match n_qubits {
            0 | 1 => Vec::new(),
            2 => vec![(0, 1)],
            n => (0..n).map(|q| (q, (q + 1) % n)).collect(),
        };
        Self::new(n_qubits, n_layers, entanglers)
    }

    pub fn new(n_qubits: usize, n_layers: usize, entanglers: Vec<(usize, usize)>) -> Result<Self> {
        check_qubits(n_qubits)?;
        if n_layers == 0 {
            return Err(Error::InvalidConfig("circuit needs at least one layer".into()));
        }
        for &(a, b) in &entanglers {
            for q in [a, b] {
                if q >= n_qubits {
                    return Err(Error::QubitIndex { index: q, n_qubits });
                }
            }
            if a == b {
                return Err(Error::SameQubit(a));
            }
        }
        Ok(Self {
            n_qubits,
            n_layers,
            entanglers,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn entanglers(&self) -> &[(usize, usize)] {
        &self.entanglers
    }

    pub fn n_phi(&self) -> usize {
        2 * self.n_layers * self.n_qubits
    }

    pub fn n_lam(&self) -> usize {
        self.n_layers * self.n_qubits
    }

    /// Flat index of the variational angle for `(layer, qubit, axis)`.
    /// Only `Axis::Z` (slot 0) and `Axis::Y` (slot 1) carry parameters.
    pub fn phi_index(&self, layer: usize, qubit: usize, axis: Axis) -> Option<usize> {
        if layer >= self.n_layers || qubit >= self.n_qubits {
            return None;
        }
        let slot = match axis {
            Axis::Z => 0,
            Axis::Y => 1,
            Axis::X => return None,
        };
        Some((layer * self.n_qubits + qubit) * 2 + slot)
    }

    pub fn lam_index(&self, layer: usize, qubit: usize) -> Option<usize> {
        (layer < self.n_layers && qubit < self.n_qubits).then(|| layer * self.n_qubits + qubit)
    }

    /// Expands the circuit into its gate sequence for one input.
    pub fn gates(&self, params: &PqcParams, input: &[f64]) -> Result<Vec<Gate>> {
        params.check(self)?;
        if input.len() != self.n_qubits {
            return Err(Error::Dimension {
                what: "circuit input",
                expected: self.n_qubits,
                actual: input.len(),
            });
        }
        if input.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("circuit input"));
        }
        let n = self.n_qubits;
        let mut gates = Vec::with_capacity(self.n_layers * (3 * n + self.entanglers.len()));
        for layer in 0..self.n_layers {
            for q in 0..n {
                let base = (layer * n + q) * 2;
                gates.push(Gate::Rotation {
                    qubit: q,
                    axis: Axis::Y,
                    angle: params.phi[base + 1],
                    slot: Some(ParamSlot::Phi(base + 1)),
                });
                gates.push(Gate::Rotation {
                    qubit: q,
                    axis: Axis::Z,
                    angle: params.phi[base],
                    slot: Some(ParamSlot::Phi(base)),
                });
            }
            gates.extend(self.entanglers.iter().map(|&(a, b)| Gate::Cz(a, b)));
            for (q, &x) in input.iter().enumerate() {
                let index = layer * n + q;
                gates.push(Gate::Rotation {
                    qubit: q,
                    axis: Axis::X,
                    angle: params.lam[index] * x,
                    slot: Some(ParamSlot::Lam { index, input: x }),
                });
            }
        }
        Ok(gates)
    }
}

/// Trainable circuit parameters: variational angles and input scalings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PqcParams {
    pub phi: Vec<f64>,
    pub lam: Vec<f64>,
}

impl PqcParams {
    pub fn zeros(spec: &CircuitSpec) -> Self {
        Self {
            phi: vec![0.0; spec.n_phi()],
            lam: vec![0.0; spec.n_lam()],
        }
    }

    pub fn check(&self, spec: &CircuitSpec) -> Result<()> {
        if self.phi.len() != spec.n_phi() {
            return Err(Error::Dimension {
                what: "phi",
                expected: spec.n_phi(),
                actual: self.phi.len(),
            });
        }
        if self.lam.len() != spec.n_lam() {
            return Err(Error::Dimension {
                what: "lam",
                expected: spec.n_lam(),
                actual: self.lam.len(),
            });
        }
        if self.phi.iter().chain(&self.lam).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("circuit parameters"));
        }
        Ok(())
    }
}

/// Which trainable entry a gate angle depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamSlot {
    Phi(usize),
    /// Encoding angle `lam[index] * input`.
    Lam {
        index: usize,
        input: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    Rotation {
        qubit: usize,
        axis: Axis,
        angle: f64,
        slot: Option<ParamSlot>,
    },
    Cz(usize, usize),
}

fn simulate(n_qubits: usize, gates: &[Gate]) -> Statevector {
    let mut state = Statevector::zero(n_qubits).expect("validated qubit count");
    for gate in gates {
        apply_gate(&mut state, gate, false);
    }
    state
}

fn apply_gate(state: &mut Statevector, gate: &Gate, inverse: bool) {
    match *gate {
        Gate::Rotation {
            qubit, axis, angle, ..
        } => state.rotate(qubit, axis, if inverse { -angle } else { angle }),
        Gate::Cz(a, b) => state.cz(a, b),
    }
}

pub fn run_pqc(spec: &CircuitSpec, params: &PqcParams, input: &[f64]) -> Result<Statevector> {
    let gates = spec.gates(params, input)?;
    Ok(simulate(spec.n_qubits, &gates))
}

/// One weighted Pauli-Z string, `coeff * prod_{q in qubits} Z_q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZTerm {
    pub qubits: Vec<usize>,
    pub coeff: f64,
}

/// Real linear combination of Pauli-Z strings. Always diagonal in the
/// computational basis.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Observable {
    pub terms: Vec<ZTerm>,
}

impl Observable {
    pub fn new(terms: Vec<ZTerm>) -> Self {
        Self { terms }
    }

    pub fn z(qubit: usize) -> Self {
        Self::z_string(vec![qubit], 1.0)
    }

    pub fn z_string(qubits: Vec<usize>, coeff: f64) -> Self {
        Self {
            terms: vec![ZTerm { qubits, coeff }],
        }
    }

    /// `Z ⊗ Z ⊗ ... ⊗ Z` over all `n_qubits`.
    pub fn parity(n_qubits: usize, coeff: f64) -> Self {
        Self::z_string((0..n_qubits).collect(), coeff)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| ZTerm {
                    qubits: t.qubits.clone(),
                    coeff: t.coeff * factor,
                })
                .collect(),
        }
    }

    /// `sum |coeff|`, the bound on `|<O>|` for any normalized state.
    pub fn coefficient_bound(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff.abs()).sum()
    }

    pub fn check(&self, n_qubits: usize) -> Result<()> {
        for term in &self.terms {
            if let Some(&q) = term.qubits.iter().find(|&&q| q >= n_qubits) {
                return Err(Error::QubitIndex { index: q, n_qubits });
            }
            if !term.coeff.is_finite() {
                return Err(Error::NonFinite("observable coefficient"));
            }
        }
        Ok(())
    }

    /// Diagonal of the operator in the computational basis.
    pub fn diagonal(&self, n_qubits: usize) -> Vec<f64> {
        let mut diag = vec![0.0; 1 << n_qubits];
        for term in &self.terms {
            let mask = term.qubits.iter().fold(0usize, |m, &q| m ^ (1 << q));
            for (i, d) in diag.iter_mut().enumerate() {
                let sign = if (i & mask).count_ones() % 2 == 0 {
                    1.0
                } else {
                    -1.0
                };
                *d += term.coeff * sign;
            }
        }
        diag
    }
}

/// Derivatives of an expectation value with respect to `phi` and `lam`.
#[derive(Debug, Clone, PartialEq)]
pub struct PqcGradient {
    pub phi: Vec<f64>,
    pub lam: Vec<f64>,
}

impl PqcGradient {
    fn zeros(spec: &CircuitSpec) -> Self {
        Self {
            phi: vec![0.0; spec.n_phi()],
            lam: vec![0.0; spec.n_lam()],
        }
    }

    fn accumulate(&mut self, slot: ParamSlot, angle_derivative: f64) {
        match slot {
            ParamSlot::Phi(k) => self.phi[k] += angle_derivative,
            ParamSlot::Lam { index, input } => self.lam[index] += input * angle_derivative,
        }
    }

    /// `phi` followed by `lam`.
    pub fn flat(&self) -> Vec<f64> {
        self.phi.iter().chain(&self.lam).copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMethod {
    /// Two shifted circuit evaluations per parameter.
    #[default]
    ParameterShift,
    /// One backward sweep over the gate list. Same values as the shift rule
    /// up to rounding, at the cost of roughly three circuit evaluations.
    Adjoint,
}

/// Gradient of `<obs>` by the two-point shift rule:
/// `dE/dt = (E(t + pi/2) - E(t - pi/2)) / 2` for every rotation angle,
/// chained through `x[q]` for the input scalings.
pub fn param_shift_gradient(
    spec: &CircuitSpec,
    params: &PqcParams,
    input: &[f64],
    obs: &Observable,
) -> Result<PqcGradient> {
    obs.check(spec.n_qubits)?;
    let gates = spec.gates(params, input)?;
    let diag = obs.diagonal(spec.n_qubits);
    Ok(shift_rule(spec, &gates, &diag))
}

fn shift_rule(spec: &CircuitSpec, gates: &[Gate], diag: &[f64]) -> PqcGradient {
    let mut grad = PqcGradient::zeros(spec);
    // prefix holds the state just before gate k
    let mut prefix = Statevector::zero(spec.n_qubits).expect("validated qubit count");
    for (k, gate) in gates.iter().enumerate() {
        if let Gate::Rotation {
            qubit,
            axis,
            angle,
            slot: Some(slot),
        } = *gate
        {
            let mut shifted = [0.0; 2];
            for (value, shift) in shifted.iter_mut().zip([FRAC_PI_2, -FRAC_PI_2]) {
                let mut state = prefix.clone();
                state.rotate(qubit, axis, angle + shift);
                for g in &gates[k + 1..] {
                    apply_gate(&mut state, g, false);
                }
                *value = state.expectation_diag(diag);
            }
            grad.accumulate(slot, 0.5 * (shifted[0] - shifted[1]));
        }
        apply_gate(&mut prefix, gate, false);
    }
    grad
}

/// Gradient of `<obs>` by reverse-mode sweep over the gate list.
pub fn adjoint_gradient(
    spec: &CircuitSpec,
    params: &PqcParams,
    input: &[f64],
    obs: &Observable,
) -> Result<PqcGradient> {
    obs.check(spec.n_qubits)?;
    let gates = spec.gates(params, input)?;
    let diag = obs.diagonal(spec.n_qubits);
    Ok(adjoint_sweep(spec, &gates, &diag).1)
}

/// Returns `(<O>, dE/dparams)`.
fn adjoint_sweep(spec: &CircuitSpec, gates: &[Gate], diag: &[f64]) -> (f64, PqcGradient) {
    let mut grad = PqcGradient::zeros(spec);
    let mut ket = simulate(spec.n_qubits, gates);
    let value = ket.expectation_diag(diag);
    let mut bra = ket.clone();
    for (amp, d) in bra.amps.iter_mut().zip(diag) {
        *amp *= d;
    }
    // With U = exp(-i t P / 2): dE/dt = 2 Re <bra| (-i/2) P |ket> = Im <bra|P|ket>,
    // where bra = U_{k+1}^† ... O |psi> and ket = U_k ... |0>.
    for gate in gates.iter().rev() {
        if let Gate::Rotation {
            qubit,
            axis,
            slot: Some(slot),
            ..
        } = *gate
        {
            let element = ket.pauli_matrix_element(&bra, qubit, axis);
            grad.accumulate(slot, element.im);
        }
        apply_gate(&mut ket, gate, true);
        apply_gate(&mut bra, gate, true);
    }
    (value, grad)
}

/// Expectation value together with its gradient by the chosen method.
pub fn expectation_and_gradient(
    spec: &CircuitSpec,
    params: &PqcParams,
    input: &[f64],
    obs: &Observable,
    method: GradientMethod,
) -> Result<(f64, PqcGradient)> {
    obs.check(spec.n_qubits)?;
    let gates = spec.gates(params, input)?;
    let diag = obs.diagonal(spec.n_qubits);
    Ok(match method {
        GradientMethod::Adjoint => adjoint_sweep(spec, &gates, &diag),
        GradientMethod::ParameterShift => {
            let value = simulate(spec.n_qubits, &gates).expectation_diag(&diag);
            (value, shift_rule(spec, &gates, &diag))
        }
    })
}
