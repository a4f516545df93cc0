//! Acceptance run: one PASS/FAIL line per criterion. Built without the
//! libtest harness so the lines are always printed.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::thread;
use std::time::{Duration, Instant};

use mitet::env::CartPole;
use mitet::infometrics::{
    bound_report, estimate_scaling_constants, jsd_expressivity, mutual_information, mutual_information_exact,
    pearson_correlation, BinSpec, BoundParams, DistributionWindow, JointHistogram, MetricSample,
};
use mitet::policy::{PolicyInit, SoftmaxPqcPolicy};
use mitet::quantum::{self, CircuitSpec, GradientMethod, Observable, PqcParams};
use mitet::theorem_lab::{self, ExpressivityConstruction, SuiteConfig};
use mitet::trainer::{self, EarlyStopping, TrainConfig, TrainOutcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;
type Criterion = (usize, &'static str, fn() -> Verdict);

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(budget: Duration, start: Instant) -> Result<(), String> {
    let spent = start.elapsed();
    if spent <= budget {
        Ok(())
    } else {
        Err(format!("took {spent:.2?}, budget {budget:?}"))
    }
}

// 1. plug-in MI against a direct double sum over the count table
fn mi_estimator_exactness() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let rows = rng.gen_range(1..=8);
        let cols = rng.gen_range(1..=8);
        let counts: Vec<u64> = (0..rows * cols)
            .map(|_| {
                if rng.gen_bool(0.3) {
                    0
                } else {
                    rng.gen_range(1..60)
                }
            })
            .collect();
        if counts.iter().all(|&c| c == 0) {
            continue;
        }
        let n: u64 = counts.iter().sum();
        let mut oracle = 0.0;
        for i in 0..rows {
            for j in 0..cols {
                let nij = counts[i * cols + j];
                if nij == 0 {
                    continue;
                }
                let ni: u64 = (0..cols).map(|k| counts[i * cols + k]).sum();
                let nj: u64 = (0..rows).map(|k| counts[k * cols + j]).sum();
                oracle += nij as f64 / n as f64 * ((nij as f64 * n as f64) / (ni as f64 * nj as f64)).ln();
            }
        }
        let hist = JointHistogram::from_counts(rows, cols, counts).map_err(|e| e.to_string())?;
        let mi = mutual_information(&hist).map_err(|e| e.to_string())?;
        worst = worst.max((mi - oracle.max(0.0)).abs());
    }
    within(Duration::from_secs(1), start)?;
    check(worst <= 1e-12, format!("max |error| {worst:.2e} over 100 tables"))
}

fn fd_relative_error(analytic: &[f64], fd: &[f64]) -> f64 {
    let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    analytic
        .iter()
        .zip(fd)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / scale
}

// 2. shift-rule gradients and scores against central differences
fn gradient_correctness() -> Verdict {
    let start = Instant::now();
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let spec = CircuitSpec::ring(4, 2).map_err(|e| e.to_string())?;
    let mut worst_obs = 0.0f64;
    let mut worst_score = 0.0f64;
    for _ in 0..20 {
        let params = PqcParams {
            phi: (0..spec.n_phi()).map(|_| rng.gen_range(-3.0..3.0)).collect(),
            lam: (0..spec.n_lam()).map(|_| rng.gen_range(-1.5..1.5)).collect(),
        };
        let input: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let obs = Observable::parity(4, rng.gen_range(-1.0..1.0));
        let energy = |p: &PqcParams| {
            quantum::run_pqc(&spec, p, &input)
                .and_then(|psi| psi.expectation(&obs))
                .unwrap()
        };
        let analytic = quantum::param_shift_gradient(&spec, &params, &input, &obs)
            .map_err(|e| e.to_string())?
            .flat();
        let mut fd = Vec::new();
        for k in 0..spec.n_phi() + spec.n_lam() {
            let mut plus = params.clone();
            let mut minus = params.clone();
            if k < spec.n_phi() {
                plus.phi[k] += h;
                minus.phi[k] -= h;
            } else {
                plus.lam[k - spec.n_phi()] += h;
                minus.lam[k - spec.n_phi()] -= h;
            }
            fd.push((energy(&plus) - energy(&minus)) / (2.0 * h));
        }
        worst_obs = worst_obs.max(fd_relative_error(&analytic, &fd));

        let mut policy = SoftmaxPqcPolicy::initialize(
            spec.clone(),
            2,
            rng.gen_range(0.5..2.0),
            PolicyInit::default(),
            &mut rng,
        )
        .map_err(|e| e.to_string())?;
        policy.weights = vec![rng.gen_range(0.5..1.5), rng.gen_range(0.5..1.5)];
        let action = rng.gen_range(0..2);
        let score = policy
            .log_policy_gradient(&input, action, GradientMethod::ParameterShift)
            .map_err(|e| e.to_string())?;
        let theta = policy.flat_params();
        let mut fd = Vec::new();
        for k in 0..theta.len() {
            let eval = |delta: f64| {
                let mut t = theta.clone();
                t[k] += delta;
                let mut p = policy.clone();
                p.set_flat_params(&t).unwrap();
                p.action_probs(&input).unwrap().probs[action].ln()
            };
            fd.push((eval(h) - eval(-h)) / (2.0 * h));
        }
        worst_score = worst_score.max(fd_relative_error(&score, &fd));
    }
    within(Duration::from_secs(30), start)?;
    check(
        worst_obs <= 1e-5 && worst_score <= 1e-5,
        format!("max relative error: <O> {worst_obs:.2e}, score {worst_score:.2e}"),
    )
}

// 3. one-shot and MDP bound audits plus gradient-lemma agreement
fn theorem_audits() -> Verdict {
    let start = Instant::now();
    let report = theorem_lab::run_suite(&SuiteConfig::scaled(1000, 303)).map_err(|e| e.to_string())?;
    let one_shot: usize = report.one_shot.iter().map(|r| r.violations()).sum();
    let mdp: usize = report.mdp.iter().map(|r| r.violations()).sum();
    within(Duration::from_secs(120), start)?;
    check(
        report.one_shot.len() == 1000
            && report.mdp.len() == 200
            && one_shot == 0
            && mdp == 0
            && report.max_gradient_disagreement <= 1e-9,
        format!(
            "{} games / {} MDPs, violations {one_shot} / {mdp}, max gradient disagreement {:.2e}",
            report.one_shot.len(),
            report.mdp.len(),
            report.max_gradient_disagreement
        ),
    )
}

// 4. expressivity chain on constructed joints, JSD identity on windows
fn expressivity_theorem() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut violations = 0;
    let mut worst_residual = 0.0f64;
    for _ in 0..500 {
        let c = ExpressivityConstruction::random(
            rng.gen_range(1..=3),
            rng.gen_range(2..=6),
            rng.gen_range(2..=5),
            rng.gen_range(2..=4),
            &mut rng,
        );
        let r = theorem_lab::expressivity_theorem_check(&c).map_err(|e| e.to_string())?;
        worst_residual = worst_residual.max(r.residual);
        violations += usize::from(r.index_vs_signal.violated())
            + usize::from(r.l2_bound.violated())
            + usize::from(r.tv_bound.violated());
    }
    let mut worst_gap = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(2..=10);
        let actions = rng.gen_range(2..=5);
        let mut window = DistributionWindow::new(n);
        let mut joint = Vec::new();
        for _ in 0..n {
            let p = theorem_lab::random_distribution(actions, rng.gen_bool(0.2), &mut rng);
            joint.push(p.iter().map(|v| v / n as f64).collect::<Vec<f64>>());
            window.push(p).map_err(|e| e.to_string())?;
        }
        let jsd = jsd_expressivity(&window).map_err(|e| e.to_string())?;
        worst_gap = worst_gap.max((jsd - mutual_information_exact(&joint)).abs());
    }
    within(Duration::from_secs(30), start)?;
    check(
        violations == 0 && worst_residual <= 1e-12 && worst_gap <= 1e-12,
        format!(
            "500 joints: {violations} violations (max residual {worst_residual:.1e}); JSD vs MI max gap {worst_gap:.2e}"
        ),
    )
}

// 5. proxy sandwich
fn proxy_sandwich() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut violations = 0;
    for _ in 0..1000 {
        let r = theorem_lab::proxy_gap_check(&theorem_lab::random_proxy_joint(&mut rng))
            .map_err(|e| e.to_string())?;
        violations += usize::from(r.lower.violated()) + usize::from(r.upper.violated());
    }
    within(Duration::from_secs(10), start)?;
    check(violations == 0, format!("1000 joints, {violations} violations"))
}

// 6. Pinsker, with KL and TV written out here
fn pinsker() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut violations = 0;
    let mut max_ratio = 0.0f64;
    for _ in 0..10_000 {
        let n = rng.gen_range(2..=8);
        let p = theorem_lab::random_distribution(n, rng.gen_bool(0.2), &mut rng);
        let q = theorem_lab::random_distribution(n, false, &mut rng);
        let kl: f64 = p
            .iter()
            .zip(&q)
            .filter(|(a, _)| **a > 0.0)
            .map(|(a, b)| a * (a / b).ln())
            .sum();
        let tv = 0.5 * p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>();
        let rhs = (kl.max(0.0) / 2.0).sqrt();
        if tv > rhs + 1e-12 {
            violations += 1;
        }
        if rhs > 0.0 {
            max_ratio = max_ratio.max(tv / rhs);
        }
    }
    check(
        violations == 0,
        format!("10^4 pairs, {violations} violations, max TV/sqrt(KL/2) {max_ratio:.4}"),
    )
}

fn run(config: TrainConfig) -> TrainOutcome {
    trainer::train(&config, &CartPole::default(), |_| {}).unwrap()
}

fn best_moving_average(series: &[MetricSample]) -> f64 {
    series.iter().map(|s| s.moving_avg_reward).fold(0.0, f64::max)
}

fn parallel_runs(configs: Vec<TrainConfig>) -> Vec<TrainOutcome> {
    thread::scope(|scope| {
        let handles: Vec<_> = configs.into_iter().map(|c| scope.spawn(move || run(c))).collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    })
}

fn with_layers(n_layers: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        n_layers,
        seed,
        ..TrainConfig::default()
    }
}

const SEEDS: [u64; 3] = [0, 1, 2];

// 7. default learns, shallow stops or stays low
fn training_reproduction() -> (Verdict, Vec<TrainOutcome>) {
    let start = Instant::now();
    let mut configs: Vec<TrainConfig> = SEEDS.iter().map(|&s| with_layers(5, s)).collect();
    configs.extend(SEEDS.iter().map(|&s| with_layers(1, s)));
    let outcomes = parallel_runs(configs);
    let (default, shallow) = outcomes.split_at(3);
    let default_best: Vec<f64> = default.iter().map(|o| best_moving_average(&o.series)).collect();
    let shallow_ok = shallow
        .iter()
        .all(|o| o.early_stopped || best_moving_average(&o.series) < 50.0);
    let describe = |o: &TrainOutcome| {
        format!(
            "{}{:.0}@{}",
            if o.early_stopped { "stop " } else { "" },
            best_moving_average(&o.series),
            o.series.len()
        )
    };
    let detail = format!(
        "default best MA [{}], shallow [{}] (best MA@batches)",
        default.iter().map(describe).collect::<Vec<_>>().join(", "),
        shallow.iter().map(describe).collect::<Vec<_>>().join(", ")
    );
    let verdict = match within(Duration::from_secs(30 * 60), start) {
        Err(e) => Err(format!("{detail}; {e}")),
        Ok(()) => check(default_best.iter().any(|&m| m >= 150.0) && shallow_ok, detail),
    };
    (verdict, outcomes)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

// 8. MI tracks entropy on completed default runs
fn dynamics_tracking(completed: &[TrainOutcome]) -> Verdict {
    if completed.is_empty() {
        return Err("no completed default run".into());
    }
    let mut lines = Vec::new();
    let mut ok = true;
    for o in completed {
        let mi: Vec<f64> = o.series.iter().map(|s| s.mi_tet_proxy).collect();
        let h: Vec<f64> = o.series.iter().map(|s| s.entropy).collect();
        let r = pearson_correlation(&mi, &h).unwrap_or(f64::NAN);
        let k = (mi.len() / 10).max(1);
        let (first, last) = (mean(&mi[..k]), mean(&mi[mi.len() - k..]));
        let h0 = h[0];
        ok &= r > 0.3 && (0.5..=2f64.ln() + 1e-6).contains(&h0) && last < first;
        lines.push(format!("r {r:.3}, H0 {h0:.3}, MI {first:.4}->{last:.4}"));
    }
    check(
        ok,
        format!("{} completed runs: {}", completed.len(), lines.join("; ")),
    )
}

// 9. fitted constants bound every retained batch
fn scaling_constants(runs: &[&TrainOutcome]) -> Verdict {
    let mut checked = 0;
    let mut failures = 0;
    let mut constants = Vec::new();
    for o in runs {
        let c = estimate_scaling_constants(&o.series).map_err(|e| e.to_string())?;
        let unused = BoundParams {
            g_max: 0.0,
            y_max: 0.0,
            r_max: 0.0,
            delta: 0.0,
        };
        for (s, b) in o.series.iter().zip(bound_report(&o.series, &unused, &c)) {
            if s.mi_tet_proxy > 0.0 {
                checked += 1;
                let direct = s.grad_norm <= c.c * s.mi_tet_proxy.sqrt() * (1.0 + 1e-12)
                    && s.expressivity_proxy <= c.k * s.mi_tet_proxy * (1.0 + 1e-12);
                if !direct || b.scaled_gradient.is_violation() || b.scaled_expressivity.is_violation() {
                    failures += 1;
                }
            }
        }
        constants.push(format!("C {:.3} K {:.3}", c.c, c.k));
    }
    check(
        checked > 0 && failures == 0,
        format!(
            "{checked} retained batches over {} runs, {failures} failures [{}]",
            runs.len(),
            constants.join(", ")
        ),
    )
}

// 10. nested binnings on one batch
fn bin_monotonicity() -> Verdict {
    let config = TrainConfig::default();
    let env = CartPole::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let policy = trainer::initial_policy(&config, &env, &mut rng).map_err(|e| e.to_string())?;
    let batch = trainer::collect_batch(&env, &policy, config.batch_size, config.gradient_method, &mut rng)
        .map_err(|e| e.to_string())?;
    let signals: Vec<f64> = trainer::batch_signals(&batch, config.gamma, true)
        .map_err(|e| e.to_string())?
        .into_iter()
        .flatten()
        .collect();
    let actions: Vec<usize> = batch.iter().flat_map(|t| t.actions.iter().copied()).collect();
    let mi = |bins| {
        trainer::signal_mutual_information(&actions, &signals, 2, bins)
            .map(|r| r.0)
            .unwrap()
    };
    // the three grids really are nested on this pool
    let grids: Vec<BinSpec> = [2, 10, 50]
        .iter()
        .map(|&b| BinSpec::from_samples(b, &signals).unwrap())
        .collect();
    let nested = signals.iter().all(|&y| {
        let k: Vec<usize> = grids.iter().map(|g| g.discretize(y).unwrap()).collect();
        k[2] / 5 == k[1] && k[1] / 5 == k[0]
    });
    let (m1, m2, m10, m50) = (mi(1), mi(2), mi(10), mi(50));
    check(
        nested && m1 == 0.0 && m2 <= m10 + 1e-12 && m10 <= m50 + 1e-12,
        format!(
            "{} steps: B=1 {m1}, B=2 {m2:.5}, B=10 {m10:.5}, B=50 {m50:.5}, nested {nested}",
            signals.len()
        ),
    )
}

fn collect_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&path).unwrap(),
                );
            }
        }
    }
    out
}

// 11. every command twice, byte for byte
fn determinism() -> Verdict {
    let tmp = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let config = tmp.path().join("config.json");
    fs::write(
        &config,
        r#"{"n_layers": 3, "batch_size": 5, "max_batches": 25, "seed": 11}"#,
    )
    .unwrap();
    let bin = env!("CARGO_BIN_EXE_mitet");
    let mut trees = Vec::new();
    for attempt in ["first", "second"] {
        let root = tmp.path().join(attempt);
        let p = |sub: &str| root.join(sub).to_str().unwrap().to_string();
        let cfg = config.to_str().unwrap();
        let commands: Vec<Vec<String>> = vec![
            vec![
                "train".into(),
                "--config".into(),
                cfg.into(),
                "--out".into(),
                p("train"),
            ],
            vec![
                "bin-sweep".into(),
                "--config".into(),
                cfg.into(),
                "--out".into(),
                p("sweep"),
            ],
            vec![
                "theorems".into(),
                "--instances".into(),
                "100".into(),
                "--seed".into(),
                "7".into(),
                "--out".into(),
                p("theorems"),
            ],
            vec!["report".into(), p("train"), "--out".into(), p("report")],
            vec![
                "report".into(),
                p("train"),
                "--scaled".into(),
                "--out".into(),
                p("report_scaled"),
            ],
        ];
        for args in commands {
            let status = Command::new(bin)
                .args(&args)
                .output()
                .map_err(|e| e.to_string())?
                .status;
            if !status.success() {
                return Err(format!("{} exited with {status}", args[0]));
            }
        }
        trees.push(collect_files(&root));
    }
    let differing: Vec<String> = trees[0]
        .iter()
        .filter(|(k, v)| trees[1].get(*k) != Some(*v))
        .map(|(k, _)| k.display().to_string())
        .collect();
    let json_csv = trees[0]
        .keys()
        .filter(|k| matches!(k.extension().and_then(|e| e.to_str()), Some("csv" | "json")))
        .count();
    check(
        differing.is_empty() && trees[0].len() == trees[1].len(),
        format!(
            "{} files ({json_csv} CSV/JSON) across 5 commands, differing: [{}]",
            trees[0].len(),
            differing.join(", ")
        ),
    )
}

fn guarded(f: impl FnOnce() -> Verdict) -> Verdict {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(v) => v,
        Err(e) => Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn main() {
    let start = Instant::now();
    let (results, training) = thread::scope(|scope| {
        let training = scope.spawn(|| {
            let completed_cfg: Vec<TrainConfig> = SEEDS
                .iter()
                .map(|&s| TrainConfig {
                    early_stopping: EarlyStopping {
                        enabled: false,
                        ..EarlyStopping::default()
                    },
                    ..with_layers(5, s)
                })
                .collect();
            let completed = scope.spawn(move || parallel_runs(completed_cfg));
            let (v7, reproduction) = training_reproduction();
            (v7, reproduction, completed.join().unwrap())
        });
        let quick: Vec<Criterion> = vec![
            (1, "MI estimator exactness", mi_estimator_exactness),
            (2, "gradient correctness", gradient_correctness),
            (3, "theorem audits", theorem_audits),
            (
                4,
                "expressivity theorem and divergence chains",
                expressivity_theorem,
            ),
            (5, "proxy sandwich", proxy_sandwich),
            (6, "Pinsker inequality", pinsker),
            (10, "bin monotonicity", bin_monotonicity),
            (11, "determinism", determinism),
        ];
        let handles: Vec<_> = quick
            .into_iter()
            .map(|(n, name, f)| (n, name, scope.spawn(move || guarded(f))))
            .collect();
        let results: Vec<(usize, &str, Verdict)> = handles
            .into_iter()
            .map(|(n, name, h)| (n, name, h.join().unwrap()))
            .collect();
        (results, training.join())
    });

    let mut all: Vec<(usize, &str, Verdict)> = results;
    match training {
        Ok((v7, reproduction, completed_default)) => {
            all.push((7, "training reproduction", v7));
            // completed default runs: those from criterion 7 that ran to the end,
            // plus the same configuration with stopping turned off
            let mut completed: Vec<TrainOutcome> = reproduction[..3]
                .iter()
                .filter(|o| !o.early_stopped)
                .cloned()
                .collect();
            completed.extend(completed_default);
            all.push((8, "dynamics tracking", guarded(|| dynamics_tracking(&completed))));
            let runs: Vec<&TrainOutcome> = reproduction.iter().chain(&completed).collect();
            all.push((9, "scaling constants", guarded(|| scaling_constants(&runs))));
        }
        Err(_) => {
            for (n, name) in [
                (7, "training reproduction"),
                (8, "dynamics tracking"),
                (9, "scaling constants"),
            ] {
                all.push((n, name, Err("training panicked".into())));
            }
        }
    }
    all.sort_by_key(|r| r.0);

    println!();
    let mut failed = 0;
    for (n, name, verdict) in &all {
        match verdict {
            Ok(detail) => println!("criterion {n:2} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:2} FAIL  {name}: {detail}");
            }
        }
    }
    println!(
        "{} of {} criteria passed in {:.1?}",
        all.len() - failed,
        all.len(),
        start.elapsed()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
