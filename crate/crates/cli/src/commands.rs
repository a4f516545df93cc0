use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mitet::env::{CartPole, Environment, TabularMdp};
use mitet::infometrics::{estimate_scaling_constants, BoundParams};
use mitet::theorem_lab::{self, MdpReport, SoftmaxLinearPolicy, SuiteConfig, SuiteReport};
use mitet::trainer::{self, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::charts::{self, BoundShading};
use crate::runlog::{self, CorrelationMatrix, RunRow, RunSummary};
use crate::svg::{LineChart, Series, PALETTE};

/// Bad invocation or unusable configuration; the binary exits with 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    let config: TrainConfig = serde_json::from_str(&text)
        .map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))?;
    config
        .validate()
        .map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))?;
    Ok(config)
}

fn apply_overrides(
    mut config: TrainConfig,
    seed: Option<u64>,
    layers: Option<usize>,
    bins: Option<usize>,
) -> Result<TrainConfig> {
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(layers) = layers {
        config.n_layers = layers;
    }
    if let Some(bins) = bins {
        config.bins = bins;
    }
    config.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(config)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_chart(dir: &Path, name: &str, chart: &LineChart) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, chart.render()).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub layers: Option<usize>,
    pub bins: Option<usize>,
}

/// Trains on CartPole and writes `config.json`, `run.csv`,
/// `checkpoint.txt`, `summary.json` and the single-run charts.
pub fn train(args: &TrainArgs) -> Result<RunSummary> {
    let config = apply_overrides(load_config(&args.config)?, args.seed, args.layers, args.bins)?;
    create_dir(&args.out)?;
    write_json(&args.out.join("config.json"), &config)?;

    let env = CartPole::default();
    let outcome = trainer::train(&config, &env, |s| {
        if (s.batch + 1) % 50 == 0 {
            eprintln!(
                "batch {:4}  moving avg {:6.1}  MI {:.4}",
                s.batch + 1,
                s.moving_avg_reward,
                s.mi_tet_proxy
            );
        }
    })?;
    let rows: Vec<RunRow> = outcome.series.iter().map(RunRow::from).collect();
    runlog::write_csv(&args.out.join("run.csv"), &rows)?;
    fs::write(args.out.join("checkpoint.txt"), outcome.policy.to_checkpoint())?;

    let r_max = env.params.max_steps as f64;
    let summary = RunSummary::build(
        &outcome.series,
        config.seed,
        config.n_layers,
        outcome.early_stopped,
        r_max,
    )?;
    write_json(&args.out.join("summary.json"), &summary)?;
    for (name, chart) in charts::single_run_charts(&rows, Some(BoundShading::Raw(summary.bound_params))) {
        write_chart(&args.out, name, &chart)?;
    }
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct SweepArgs {
    pub config: PathBuf,
    pub out: PathBuf,
    pub bins: Vec<usize>,
    pub seed: Option<u64>,
    pub layers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub bins: usize,
    pub mi_tet_proxy: f64,
    pub bin_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub seed: u64,
    pub n_layers: usize,
    pub episodes: usize,
    pub steps: usize,
    pub beta: f64,
    pub points: Vec<SweepPoint>,
}

/// MI proxy of one batch from the initial policy at several bin counts,
/// all on the same sample pool.
pub fn bin_sweep(args: &SweepArgs) -> Result<SweepReport> {
    if args.bins.is_empty() {
        return Err(UsageError("--bins needs at least one bin count".into()).into());
    }
    if args.bins.contains(&0) {
        return Err(UsageError("bin counts must be positive".into()).into());
    }
    let config = apply_overrides(load_config(&args.config)?, args.seed, args.layers, None)?;
    let env = CartPole::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let policy = trainer::initial_policy(&config, &env, &mut rng)?;
    let batch = trainer::collect_batch(&env, &policy, config.batch_size, config.gradient_method, &mut rng)?;
    let signals = trainer::batch_signals(&batch, config.gamma, config.normalize_returns)?;
    let actions: Vec<usize> = batch.iter().flat_map(|t| t.actions.iter().copied()).collect();
    let flat: Vec<f64> = signals.into_iter().flatten().collect();
    let points = args
        .bins
        .iter()
        .map(|&bins| {
            let (mi, width) = trainer::signal_mutual_information(&actions, &flat, env.n_actions(), bins)?;
            Ok(SweepPoint {
                bins,
                mi_tet_proxy: mi,
                bin_width: width,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = SweepReport {
        seed: config.seed,
        n_layers: config.n_layers,
        episodes: batch.len(),
        steps: actions.len(),
        beta: policy.beta,
        points,
    };

    create_dir(&args.out)?;
    write_json(&args.out.join("sweep.json"), &report)?;
    let mut writer = csv::Writer::from_path(args.out.join("sweep.csv"))?;
    for p in &report.points {
        writer.serialize(p)?;
    }
    writer.flush()?;
    let mut chart = LineChart::new("MI-TET proxy against bin count", "bins", "I(A; Y) [nats]");
    chart.series.push(Series::new(
        "MI-TET proxy",
        report
            .points
            .iter()
            .map(|p| (p.bins as f64, p.mi_tet_proxy))
            .collect(),
        PALETTE[0],
    ));
    write_chart(&args.out, "bin_sweep.svg", &chart)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct TheoremArgs {
    pub out: PathBuf,
    pub instances: usize,
    pub seed: u64,
    /// Optional MDP file audited under a uniform policy in addition to the
    /// random suite.
    pub mdp: Option<PathBuf>,
    pub bins: usize,
}

#[derive(Debug, Clone)]
pub struct TheoremOutcome {
    pub suite: SuiteReport,
    pub supplied: Option<MdpReport>,
    pub violations: usize,
}

/// Runs the audit suite and writes `theorems.json`. The MDP instance with
/// the least relative slack is saved as `tightest_mdp.json`.
pub fn theorems(args: &TheoremArgs) -> Result<TheoremOutcome> {
    let supplied_mdp = match &args.mdp {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| UsageError(format!("cannot read MDP {}: {e}", path.display())))?;
            let mdp: TabularMdp = serde_json::from_str(&text)
                .map_err(|e| UsageError(format!("invalid MDP {}: {e}", path.display())))?;
            Some(mdp)
        }
        None => None,
    };
    if args.bins == 0 {
        return Err(UsageError("bin counts must be positive".into()).into());
    }

    let suite = theorem_lab::run_suite(&SuiteConfig::scaled(args.instances, args.seed))?;
    let supplied = match &supplied_mdp {
        Some(mdp) => {
            let uniform = SoftmaxLinearPolicy::tabular(vec![vec![0.0; mdp.n_actions()]; mdp.n_states()])?;
            Some(theorem_lab::exact_mdp_check(mdp, &uniform, args.bins)?)
        }
        None => None,
    };
    let violations = suite.violations + supplied.as_ref().map_or(0, MdpReport::violations);

    create_dir(&args.out)?;
    write_json(&args.out.join("theorems.json"), &suite)?;
    if let Some(report) = &supplied {
        write_json(&args.out.join("supplied_mdp.json"), report)?;
    }
    let relative_slack = |r: &MdpReport| {
        let ineq = r.return_binned.inequality;
        ineq.slack / ineq.rhs.max(f64::MIN_POSITIVE)
    };
    if let Some(tightest) = suite
        .mdp
        .iter()
        .min_by(|a, b| relative_slack(a).total_cmp(&relative_slack(b)))
    {
        let seed = tightest.seed.expect("suite reports carry seeds");
        let (mdp, _) = theorem_lab::random_mdp_instance(&mut ChaCha8Rng::seed_from_u64(seed))?;
        write_json(&args.out.join("tightest_mdp.json"), &mdp)?;
    }
    Ok(TheoremOutcome {
        suite,
        supplied,
        violations,
    })
}

#[derive(Debug, Clone)]
pub struct ReportArgs {
    pub runs: Vec<PathBuf>,
    pub out: PathBuf,
    pub scaled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunCorrelations {
    pub label: String,
    pub batches: usize,
    pub mi_entropy_correlation: Option<f64>,
    pub matrix: CorrelationMatrix,
}

#[derive(Debug, Clone, Default)]
pub struct ReportOutcome {
    pub runs: Vec<RunCorrelations>,
    pub failures: Vec<String>,
}

fn run_label(dir: &Path, taken: &[String]) -> String {
    let base = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    let mut label = base.clone();
    let mut k = 2;
    while taken.contains(&label) {
        label = format!("{base}-{k}");
        k += 1;
    }
    label
}

/// Charts for every run directory plus comparison charts and correlation
/// tables. Unreadable runs are reported and skipped.
pub fn report(args: &ReportArgs) -> Result<ReportOutcome> {
    if args.runs.is_empty() {
        return Err(UsageError("report needs at least one run directory".into()).into());
    }
    create_dir(&args.out)?;
    let mut outcome = ReportOutcome::default();
    let mut loaded: Vec<(String, Vec<RunRow>)> = Vec::new();
    for dir in &args.runs {
        let rows = match runlog::read_csv(&dir.join("run.csv")) {
            Ok(rows) => rows,
            Err(e) => {
                outcome.failures.push(format!("{e:#}"));
                continue;
            }
        };
        let taken: Vec<String> = loaded.iter().map(|(l, _)| l.clone()).collect();
        let label = run_label(dir, &taken);
        let shading = if args.scaled {
            match estimate_scaling_constants(&rows) {
                Ok(c) => Some(BoundShading::Scaled(c)),
                Err(e) => {
                    outcome
                        .failures
                        .push(format!("{}: no scaled bounds: {e}", dir.display()));
                    None
                }
            }
        } else {
            match read_bound_params(dir) {
                Ok(p) => Some(BoundShading::Raw(p)),
                Err(e) => {
                    outcome.failures.push(format!("{e:#}"));
                    None
                }
            }
        };
        let run_dir = args.out.join(&label);
        create_dir(&run_dir)?;
        for (name, chart) in charts::single_run_charts(&rows, shading) {
            write_chart(&run_dir, name, &chart)?;
        }
        let matrix = CorrelationMatrix::from_rows(&rows);
        outcome.runs.push(RunCorrelations {
            label: label.clone(),
            batches: rows.len(),
            mi_entropy_correlation: matrix.get("mi_tet_proxy", "entropy"),
            matrix,
        });
        loaded.push((label, rows));
    }

    if !loaded.is_empty() {
        let curves = charts::comparison_chart("Learning curves", "10-batch moving average", &loaded, |r| {
            r.moving_avg_reward
        });
        write_chart(&args.out, "learning_curves.svg", &curves)?;
        let mi = charts::comparison_chart("MI-TET proxy by configuration", "I(A; Y) [nats]", &loaded, |r| {
            r.mi_tet_proxy
        });
        write_chart(&args.out, "architecture_mi.svg", &mi)?;
        write_json(&args.out.join("correlations.json"), &outcome.runs)?;
        write_correlation_csv(&args.out.join("correlations.csv"), &outcome.runs)?;
    }
    Ok(outcome)
}

fn read_bound_params(dir: &Path) -> Result<BoundParams> {
    let path = dir.join("summary.json");
    let text = fs::read_to_string(&path)
        .with_context(|| format!("{}: raw bounds need the summary", path.display()))?;
    let summary: RunSummary =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(summary.bound_params)
}

fn write_correlation_csv(path: &Path, runs: &[RunCorrelations]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["run".to_string(), "metric".to_string()];
    header.extend(runlog::METRIC_COLUMNS.iter().map(|c| c.to_string()));
    writer.write_record(&header)?;
    for run in runs {
        for (name, row) in run.matrix.columns.iter().zip(&run.matrix.values) {
            let mut record = vec![run.label.clone(), name.clone()];
            record.extend(
                row.iter()
                    .map(|v| v.map(|x| format!("{x:.6}")).unwrap_or_default()),
            );
            writer.write_record(&record)?;
        }
    }
    writer.flush()?;
    Ok(())
}
