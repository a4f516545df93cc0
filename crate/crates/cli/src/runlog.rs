//! Run artifacts: the per-batch CSV and the JSON summary.

use std::path::Path;

use anyhow::{bail, Context, Result};
use mitet::infometrics::{
    bound_report, estimate_scaling_constants, pearson_correlation, BoundParams, BoundPoint, BoundStatus,
    MetricSample, ScalingConstants,
};
use serde::{Deserialize, Serialize};

pub const CSV_HEADER: [&str; 8] = [
    "batch",
    "mean_reward",
    "moving_avg_reward",
    "beta",
    "grad_norm",
    "mi_tet_proxy",
    "entropy",
    "expressivity_proxy",
];

/// Columns entering the correlation matrix (everything but `batch`).
pub const METRIC_COLUMNS: [&str; 7] = [
    "mean_reward",
    "moving_avg_reward",
    "beta",
    "grad_norm",
    "mi_tet_proxy",
    "entropy",
    "expressivity_proxy",
];

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRow {
    pub batch: usize,
    pub mean_reward: f64,
    pub moving_avg_reward: f64,
    pub beta: f64,
    pub grad_norm: f64,
    pub mi_tet_proxy: f64,
    pub entropy: f64,
    pub expressivity_proxy: f64,
}

impl From<&MetricSample> for RunRow {
    fn from(s: &MetricSample) -> Self {
        Self {
            batch: s.batch,
            mean_reward: s.mean_reward,
            moving_avg_reward: s.moving_avg_reward,
            beta: s.beta,
            grad_norm: s.grad_norm,
            mi_tet_proxy: s.mi_tet_proxy,
            entropy: s.entropy,
            expressivity_proxy: s.expressivity_proxy,
        }
    }
}

impl RunRow {
    pub fn column(&self, name: &str) -> f64 {
        match name {
            "batch" => self.batch as f64,
            "mean_reward" => self.mean_reward,
            "moving_avg_reward" => self.moving_avg_reward,
            "beta" => self.beta,
            "grad_norm" => self.grad_norm,
            "mi_tet_proxy" => self.mi_tet_proxy,
            "entropy" => self.entropy,
            "expressivity_proxy" => self.expressivity_proxy,
            other => panic!("unknown column {other}"),
        }
    }
}

impl BoundPoint for RunRow {
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

pub fn write_csv(path: &Path, rows: &[RunRow]) -> Result<()> {
    // header written by hand so that an empty run still gets one
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    writer.write_record(CSV_HEADER)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<RunRow>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        bail!("{}: unexpected header {:?}", path.display(), header.join(","));
    }
    let rows = reader
        .deserialize()
        .collect::<Result<Vec<RunRow>, _>>()
        .with_context(|| format!("parsing {}", path.display()))?;
    if rows.is_empty() {
        bail!("{}: no batches", path.display());
    }
    Ok(rows)
}

/// Pairwise Pearson correlations; `None` where a column is constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub columns: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl CorrelationMatrix {
    pub fn from_rows(rows: &[RunRow]) -> Self {
        let data: Vec<Vec<f64>> = METRIC_COLUMNS
            .iter()
            .map(|c| rows.iter().map(|r| r.column(c)).collect())
            .collect();
        let values = data
            .iter()
            .map(|x| data.iter().map(|y| pearson_correlation(x, y).ok()).collect())
            .collect();
        Self {
            columns: METRIC_COLUMNS.iter().map(|c| c.to_string()).collect(),
            values,
        }
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.columns.iter().position(|c| c == a)?;
        let j = self.columns.iter().position(|c| c == b)?;
        self.values[i][j]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub satisfied: usize,
    pub boundary: usize,
    pub violated: usize,
}

impl StatusCounts {
    fn add(&mut self, status: BoundStatus) {
        match status {
            BoundStatus::Satisfied => self.satisfied += 1,
            BoundStatus::Boundary => self.boundary += 1,
            BoundStatus::Violated => self.violated += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundCounts {
    /// Gradient norm against the theorem-form bound with the run's own
    /// `G`, `Y` and bin width.
    pub theorem: StatusCounts,
    pub scaled_gradient: StatusCounts,
    pub scaled_expressivity: StatusCounts,
}

pub fn count_bounds(rows: &[RunRow], bounds: &BoundParams, constants: &ScalingConstants) -> BoundCounts {
    let mut counts = BoundCounts::default();
    for check in bound_report(rows, bounds, constants) {
        counts.theorem.add(check.theorem);
        counts.scaled_gradient.add(check.scaled_gradient);
        counts.scaled_expressivity.add(check.scaled_expressivity);
    }
    counts
}

/// Run-wide constants of the theorem-form bound: the largest score norm,
/// the largest binned signal magnitude and the widest bin seen.
pub fn observed_bound_params(series: &[MetricSample], r_max: f64) -> BoundParams {
    let fold = |f: fn(&MetricSample) -> f64| series.iter().map(f).fold(0.0, f64::max);
    BoundParams {
        g_max: fold(|s| s.score_norm_max),
        y_max: fold(|s| s.signal_abs_max),
        r_max,
        delta: fold(|s| s.bin_width),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub n_layers: usize,
    pub batches: usize,
    pub episodes: usize,
    pub early_stopped: bool,
    pub final_moving_avg_reward: f64,
    pub best_moving_avg_reward: f64,
    pub first_batch_entropy: f64,
    pub mi_entropy_correlation: Option<f64>,
    pub correlations: CorrelationMatrix,
    pub bound_params: BoundParams,
    /// Absent when every batch had zero MI.
    pub scaling_constants: Option<ScalingConstants>,
    pub bound_counts: Option<BoundCounts>,
}

impl RunSummary {
    pub fn build(
        series: &[MetricSample],
        seed: u64,
        n_layers: usize,
        early_stopped: bool,
        r_max: f64,
    ) -> Result<Self> {
        let Some(last) = series.last() else {
            bail!("training produced no batches");
        };
        let rows: Vec<RunRow> = series.iter().map(RunRow::from).collect();
        let correlations = CorrelationMatrix::from_rows(&rows);
        let bound_params = observed_bound_params(series, r_max);
        let scaling_constants = estimate_scaling_constants(&rows).ok();
        Ok(Self {
            seed,
            n_layers,
            batches: series.len(),
            episodes: last.episodes,
            early_stopped,
            final_moving_avg_reward: last.moving_avg_reward,
            best_moving_avg_reward: series.iter().map(|s| s.moving_avg_reward).fold(0.0, f64::max),
            first_batch_entropy: series[0].entropy,
            mi_entropy_correlation: correlations.get("mi_tet_proxy", "entropy"),
            bound_counts: scaling_constants.map(|c| count_bounds(&rows, &bound_params, &c)),
            correlations,
            bound_params,
            scaling_constants,
        })
    }
}
