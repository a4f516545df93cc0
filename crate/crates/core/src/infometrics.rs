//! Information-theoretic estimators used to monitor training.
//!
//! Everything is in nats. Zero-probability cells contribute nothing to any
//! sum (`0 log 0 = 0`).

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shannon entropy of a probability vector.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// `D_KL(p || q)`. Infinite when `p` puts mass where `q` has none.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| {
            if qi > 0.0 {
                pi * (pi / qi).ln()
            } else {
                f64::INFINITY
            }
        })
        .sum()
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Equal-width grid over `[y_min, y_max]` with `bins` half-open cells
/// `[b_k, b_k + delta)`. Values outside the range clamp to the first or
/// last cell, and `y_max` itself lands in the last cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    bins: usize,
    y_min: f64,
    y_max: f64,
}

impl BinSpec {
    pub fn new(bins: usize, y_min: f64, y_max: f64) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidConfig("bin count must be at least 1".into()));
        }
        if !y_min.is_finite() || !y_max.is_finite() {
            return Err(Error::NonFinite("bin range"));
        }
        if y_max <= y_min {
            return Err(Error::Degenerate("bin range has zero width"));
        }
        Ok(Self { bins, y_min, y_max })
    }

    /// Grid spanning the observed range of `values`.
    pub fn from_samples(bins: usize, values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("samples for bin range"));
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::new(bins, lo, hi)
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn delta(&self) -> f64 {
        (self.y_max - self.y_min) / self.bins as f64
    }

    /// Left edge of cell `k` (0-based).
    pub fn edge(&self, k: usize) -> f64 {
        self.y_min + k as f64 * self.delta()
    }

    pub fn midpoint(&self, k: usize) -> f64 {
        self.edge(k) + 0.5 * self.delta()
    }

    /// 0-based index of the cell containing `y`.
    pub fn discretize(&self, y: f64) -> Result<usize> {
        if !y.is_finite() {
            return Err(Error::NonFinite("value to discretize"));
        }
        let k = ((y - self.y_min) / self.delta()).floor();
        Ok(if k < 0.0 {
            0
        } else {
            (k as usize).min(self.bins - 1)
        })
    }
}

/// Count table indexed by `(row, col)`, typically `(action, reward bin)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointHistogram {
    rows: usize,
    cols: usize,
    counts: Vec<u64>,
    total: u64,
}

impl JointHistogram {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            counts: vec![0; rows * cols],
            total: 0,
        }
    }

    pub fn from_counts(rows: usize, cols: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != rows * cols {
            return Err(Error::Dimension {
                what: "histogram counts",
                expected: rows * cols,
                actual: counts.len(),
            });
        }
        let total = counts.iter().sum();
        Ok(Self {
            rows,
            cols,
            counts,
            total,
        })
    }

    pub fn from_pairs(
        rows: usize,
        cols: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut hist = Self::new(rows, cols);
        for (r, c) in pairs {
            hist.add(r, c)?;
        }
        Ok(hist)
    }

    pub fn add(&mut self, row: usize, col: usize) -> Result<()> {
        if row >= self.rows {
            return Err(Error::OutOfRange {
                index: row,
                max: self.rows.saturating_sub(1),
            });
        }
        if col >= self.cols {
            return Err(Error::OutOfRange {
                index: col,
                max: self.cols.saturating_sub(1),
            });
        }
        self.counts[row * self.cols + col] += 1;
        self.total += 1;
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn count(&self, row: usize, col: usize) -> u64 {
        self.counts[row * self.cols + col]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.counts
            .chunks(self.cols.max(1))
            .map(|r| r.iter().sum())
            .collect()
    }

    pub fn col_totals(&self) -> Vec<u64> {
        (0..self.cols)
            .map(|c| (0..self.rows).map(|r| self.count(r, c)).sum())
            .collect()
    }

    /// Merges columns `(0,1), (2,3), ...`; an odd trailing column stays alone.
    pub fn merge_adjacent_cols(&self) -> Self {
        let cols = self.cols.div_ceil(2);
        let mut merged = Self::new(self.rows, cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                merged.counts[r * cols + c / 2] += self.count(r, c);
            }
        }
        merged.total = self.total;
        merged
    }
}

/// Plug-in estimate of `I(row; col)` from a count table.
pub fn mutual_information(hist: &JointHistogram) -> Result<f64> {
    if hist.total == 0 {
        return Err(Error::Empty("histogram"));
    }
    let n = hist.total as f64;
    let rows = hist.row_totals();
    let cols = hist.col_totals();
    let mut mi = 0.0;
    for r in 0..hist.rows {
        for c in 0..hist.cols {
            let joint = hist.count(r, c);
            if joint == 0 {
                continue;
            }
            let joint = joint as f64;
            mi += joint / n * (joint * n / (rows[r] as f64 * cols[c] as f64)).ln();
        }
    }
    Ok(mi.max(0.0))
}

/// `I(X; Y)` of an exact joint probability table `p[x][y]`.
pub fn mutual_information_exact(joint: &[Vec<f64>]) -> f64 {
    let px: Vec<f64> = joint.iter().map(|row| row.iter().sum()).collect();
    let cols = joint.first().map_or(0, Vec::len);
    let py: Vec<f64> = (0..cols).map(|c| joint.iter().map(|row| row[c]).sum()).collect();
    let mut mi = 0.0;
    for (x, row) in joint.iter().enumerate() {
        for (y, &p) in row.iter().enumerate() {
            if p > 0.0 {
                mi += p * (p / (px[x] * py[y])).ln();
            }
        }
    }
    mi.max(0.0)
}

/// `I(X; Y | C)` from per-condition blocks `blocks[c][x][y]` of one joint
/// distribution. Blocks need not be normalized individually.
pub fn conditional_mutual_information_exact(blocks: &[Vec<Vec<f64>>]) -> f64 {
    let mut total = 0.0;
    for block in blocks {
        let mass: f64 = block.iter().flatten().sum();
        if mass <= 0.0 {
            continue;
        }
        let normalized: Vec<Vec<f64>> = block
            .iter()
            .map(|row| row.iter().map(|p| p / mass).collect())
            .collect();
        total += mass * mutual_information_exact(&normalized);
    }
    total
}

/// One `(state, action, reward bin)` observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedSample<K> {
    pub state: K,
    pub action: usize,
    pub bin: usize,
}

/// Plug-in `I(A; Ỹ | S) = sum_s p(s) I(A; Ỹ | S = s)` over discrete state keys.
pub fn conditional_mutual_information<K: Ord + Clone>(
    samples: &[ConditionedSample<K>],
    n_actions: usize,
    n_bins: usize,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("conditional MI samples"));
    }
    let mut groups: BTreeMap<K, JointHistogram> = BTreeMap::new();
    for s in samples {
        groups
            .entry(s.state.clone())
            .or_insert_with(|| JointHistogram::new(n_actions, n_bins))
            .add(s.action, s.bin)?;
    }
    let n = samples.len() as f64;
    let mut cmi = 0.0;
    for hist in groups.values() {
        cmi += hist.total() as f64 / n * mutual_information(hist)?;
    }
    Ok(cmi)
}

/// The most recent `capacity` action distributions, weighted uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionWindow {
    capacity: usize,
    dists: VecDeque<Vec<f64>>,
}

impl DistributionWindow {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            dists: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, dist: Vec<f64>) -> Result<()> {
        crate::policy::validate_distribution(&dist)?;
        if let Some(first) = self.dists.front() {
            if first.len() != dist.len() {
                return Err(Error::Dimension {
                    what: "windowed distribution",
                    expected: first.len(),
                    actual: dist.len(),
                });
            }
        }
        if self.dists.len() == self.capacity {
            self.dists.pop_front();
        }
        self.dists.push_back(dist);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dists.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn distributions(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.dists.iter()
    }

    fn as_weighted(&self) -> Result<(Vec<f64>, Vec<&[f64]>)> {
        if self.dists.len() < 2 {
            return Err(Error::Degenerate("window holds fewer than two distributions"));
        }
        let w = 1.0 / self.dists.len() as f64;
        Ok((
            vec![w; self.dists.len()],
            self.dists.iter().map(Vec::as_slice).collect(),
        ))
    }
}

/// `sum_i w_i pi_i`.
pub fn mixture(weights: &[f64], dists: &[&[f64]]) -> Vec<f64> {
    let len = dists.first().map_or(0, |d| d.len());
    let mut mean = vec![0.0; len];
    for (w, d) in weights.iter().zip(dists) {
        for (m, p) in mean.iter_mut().zip(d.iter()) {
            *m += w * p;
        }
    }
    mean
}

/// Generalized Jensen-Shannon divergence `sum_i w_i KL(pi_i || pi_bar)`.
pub fn weighted_jsd(weights: &[f64], dists: &[&[f64]]) -> f64 {
    let mean = mixture(weights, dists);
    weights
        .iter()
        .zip(dists)
        .map(|(w, d)| w * kl_divergence(d, &mean))
        .sum::<f64>()
        .max(0.0)
}

/// `sum_i w_i ||pi_i - pi_bar||_2^2`.
pub fn weighted_l2(weights: &[f64], dists: &[&[f64]]) -> f64 {
    let mean = mixture(weights, dists);
    weights
        .iter()
        .zip(dists)
        .map(|(w, d)| w * d.iter().zip(&mean).map(|(p, m)| (p - m).powi(2)).sum::<f64>())
        .sum()
}

/// `sum_i w_i TV(pi_i, pi_bar)^2`.
pub fn weighted_tv(weights: &[f64], dists: &[&[f64]]) -> f64 {
    let mean = mixture(weights, dists);
    weights
        .iter()
        .zip(dists)
        .map(|(w, d)| w * total_variation(d, &mean).powi(2))
        .sum()
}

/// Expressivity of a window: the JSD of its distributions, equal to
/// `I(A; Z)` with `Z` the uniformly weighted window index.
pub fn jsd_expressivity(window: &DistributionWindow) -> Result<f64> {
    let (w, d) = window.as_weighted()?;
    Ok(weighted_jsd(&w, &d))
}

pub fn l2_divergence(window: &DistributionWindow) -> Result<f64> {
    let (w, d) = window.as_weighted()?;
    Ok(weighted_l2(&w, &d))
}

pub fn tv_divergence(window: &DistributionWindow) -> Result<f64> {
    let (w, d) = window.as_weighted()?;
    Ok(weighted_tv(&w, &d))
}

/// Sample Pearson correlation coefficient.
pub fn pearson_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            what: "correlation series",
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::Degenerate("correlation needs at least two points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("zero variance"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// One logged training batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub batch: usize,
    /// Episodes generated up to and including this batch.
    pub episodes: usize,
    pub mean_reward: f64,
    pub moving_avg_reward: f64,
    pub beta: f64,
    pub grad_norm: f64,
    /// `I(A; Ỹ)` over the batch's pooled steps.
    pub mi_tet_proxy: f64,
    /// Mean of `H(A | S = s)` over visited states.
    pub entropy: f64,
    /// `I(A; Z)` over the recent per-batch mean action distributions.
    pub expressivity_proxy: f64,
    /// Largest score norm `||∇ log pi(a|s)||` seen in the batch.
    pub score_norm_max: f64,
    /// Largest `|Y|` among the binned reward signals.
    pub signal_abs_max: f64,
    /// Reward-signal bin width used for the batch (0 when degenerate).
    pub bin_width: f64,
}

pub type MetricSeries = Vec<MetricSample>;

/// Empirical constants with `grad_norm <= C sqrt(MI)` and
/// `expressivity <= K MI` at every logged batch with positive MI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingConstants {
    pub c: f64,
    pub k: f64,
    /// Batches used (those with `MI > 0`).
    pub retained: usize,
}

/// Trajectory data needed by the scaling fit; implemented for
/// [`MetricSample`] and for plain tuples in tests and reports.
pub trait BoundPoint {
    fn grad_norm(&self) -> f64;
    fn mi(&self) -> f64;
    fn expressivity(&self) -> f64;
}

impl BoundPoint for MetricSample {
    fn grad_norm(&self) -> f64 {
        self.grad_norm
    }
    fn mi(&self) -> f64 {
        self.mi_tet_proxy
    }
    fn expressivity(&self) -> f64 {
        self.expressivity_proxy
    }
}

/// `(grad_norm, mi, expressivity)`.
impl BoundPoint for (f64, f64, f64) {
    fn grad_norm(&self) -> f64 {
        self.0
    }
    fn mi(&self) -> f64 {
        self.1
    }
    fn expressivity(&self) -> f64 {
        self.2
    }
}

pub fn estimate_scaling_constants<P: BoundPoint>(series: &[P]) -> Result<ScalingConstants> {
    if series.is_empty() {
        return Err(Error::Empty("metric series"));
    }
    let mut c = 0.0f64;
    let mut k = 0.0f64;
    let mut retained = 0;
    for p in series.iter().filter(|p| p.mi() > 0.0) {
        c = c.max(p.grad_norm() / p.mi().sqrt());
        k = k.max(p.expressivity() / p.mi());
        retained += 1;
    }
    if retained == 0 {
        return Err(Error::Degenerate("every MI value is zero"));
    }
    Ok(ScalingConstants { c, k, retained })
}

/// Constants entering the theorem-form gradient bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub g_max: f64,
    pub y_max: f64,
    pub r_max: f64,
    pub delta: f64,
}

impl BoundParams {
    /// `sqrt(2) G_max Y_max sqrt(mi) + G_max Delta`.
    pub fn gradient_bound(&self, mi: f64) -> f64 {
        std::f64::consts::SQRT_2 * self.g_max * self.y_max * mi.max(0.0).sqrt() + self.g_max * self.delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundStatus {
    Satisfied,
    /// Equal to the bound within relative `1e-12`.
    Boundary,
    Violated,
}

impl BoundStatus {
    pub fn is_violation(self) -> bool {
        self == BoundStatus::Violated
    }
}

/// Classifies `lhs <= rhs`.
pub fn compare_bound(lhs: f64, rhs: f64) -> BoundStatus {
    let tol = 1e-12 * lhs.abs().max(rhs.abs()).max(1.0);
    if (lhs - rhs).abs() <= tol {
        BoundStatus::Boundary
    } else if lhs < rhs {
        BoundStatus::Satisfied
    } else {
        BoundStatus::Violated
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchBoundCheck {
    pub index: usize,
    /// Theorem form: `grad_norm` against `sqrt(2) G Y sqrt(MI) + G Delta`.
    pub theorem: BoundStatus,
    /// `grad_norm` against `C sqrt(MI)`.
    pub scaled_gradient: BoundStatus,
    /// `expressivity` against `K MI`.
    pub scaled_expressivity: BoundStatus,
}

fn ratio_status(value: f64, mi: f64, root: bool, constant: f64) -> BoundStatus {
    if mi > 0.0 {
        let scale = if root { mi.sqrt() } else { mi };
        compare_bound(value / scale, constant)
    } else {
        compare_bound(value, 0.0)
    }
}

/// Per-batch bound checks. The scaled forms are evaluated as ratios
/// (`grad_norm / sqrt(MI) <= C`), so the batch that defines a constant
/// reports `Boundary` rather than a rounding-level violation.
pub fn bound_report<P: BoundPoint>(
    series: &[P],
    bounds: &BoundParams,
    constants: &ScalingConstants,
) -> Vec<BatchBoundCheck> {
    series
        .iter()
        .enumerate()
        .map(|(index, p)| BatchBoundCheck {
            index,
            theorem: compare_bound(p.grad_norm(), bounds.gradient_bound(p.mi())),
            scaled_gradient: ratio_status(p.grad_norm(), p.mi(), true, constants.c),
            scaled_expressivity: ratio_status(p.expressivity(), p.mi(), false, constants.k),
        })
        .collect()
}
