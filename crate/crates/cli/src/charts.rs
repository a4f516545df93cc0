//! Chart builders for single runs and run comparisons.

use mitet::infometrics::{BoundParams, ScalingConstants};

use crate::runlog::RunRow;
use crate::svg::{Band, LineChart, Series, PALETTE};

const GRAY: &str = "#7f7f7f";
const RED: &str = "#d62728";

/// Which constants shade the bound charts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundShading {
    /// `sqrt(2) G Y sqrt(MI) + G delta` for gradients, `MI` for expressivity.
    Raw(BoundParams),
    /// `C sqrt(MI)` and `K MI`.
    Scaled(ScalingConstants),
}

fn points(rows: &[RunRow], f: impl Fn(&RunRow) -> f64) -> Vec<(f64, f64)> {
    rows.iter().map(|r| (r.batch as f64, f(r))).collect()
}

pub fn reward_chart(rows: &[RunRow]) -> LineChart {
    let mut chart = LineChart::new("Reward per batch", "batch", "episode reward");
    chart.series.push(Series::new(
        "mean reward",
        points(rows, |r| r.mean_reward),
        PALETTE[0],
    ));
    chart.series.push(Series::new(
        "10-batch moving average",
        points(rows, |r| r.moving_avg_reward),
        PALETTE[1],
    ));
    chart
}

pub fn mi_entropy_chart(rows: &[RunRow]) -> LineChart {
    let mut chart = LineChart::new("MI-TET proxy and policy entropy", "batch", "I(A; Y) [nats]");
    chart.y2_label = Some("entropy [nats]".into());
    chart.series.push(Series::new(
        "MI-TET proxy",
        points(rows, |r| r.mi_tet_proxy),
        PALETTE[0],
    ));
    chart
        .series
        .push(Series::new("entropy", points(rows, |r| r.entropy), PALETTE[1]).on_right());
    chart
}

/// Gray below the bound, red between the bound and the top of the data.
fn bound_chart(
    title: &str,
    y_label: &str,
    rows: &[RunRow],
    value: fn(&RunRow) -> f64,
    bound: &dyn Fn(&RunRow) -> f64,
    bound_name: &str,
) -> LineChart {
    let xs: Vec<f64> = rows.iter().map(|r| r.batch as f64).collect();
    let upper: Vec<f64> = rows.iter().map(bound).collect();
    let top = rows
        .iter()
        .map(value)
        .chain(upper.iter().copied())
        .fold(0.0, f64::max)
        * 1.05;
    let mut chart = LineChart::new(title, "batch", y_label);
    chart.bands.push(Band {
        name: "bound satisfied".into(),
        xs: xs.clone(),
        lower: vec![0.0; xs.len()],
        upper: upper.clone(),
        color: GRAY.into(),
    });
    chart.bands.push(Band {
        name: "bound violated".into(),
        xs: xs.clone(),
        lower: upper.clone(),
        upper: vec![top; xs.len()],
        color: RED.into(),
    });
    chart
        .series
        .push(Series::new(y_label, points(rows, value), PALETTE[0]));
    chart
        .series
        .push(Series::new(bound_name, xs.iter().copied().zip(upper).collect(), "#000000").dashed());
    chart
}

pub fn gradient_bound_chart(rows: &[RunRow], shading: BoundShading) -> LineChart {
    match shading {
        BoundShading::Raw(params) => bound_chart(
            "Gradient norm against the MI bound",
            "gradient norm",
            rows,
            |r| r.grad_norm,
            &move |r| params.gradient_bound(r.mi_tet_proxy),
            "sqrt(2) G Y sqrt(MI) + G delta",
        ),
        BoundShading::Scaled(c) => bound_chart(
            "Gradient norm against the scaled MI bound",
            "gradient norm",
            rows,
            |r| r.grad_norm,
            &move |r| c.c * r.mi_tet_proxy.max(0.0).sqrt(),
            &format!("C sqrt(MI), C = {:.4}", c.c),
        ),
    }
}

pub fn expressivity_bound_chart(rows: &[RunRow], shading: BoundShading) -> LineChart {
    let k = match shading {
        BoundShading::Raw(_) => 1.0,
        BoundShading::Scaled(c) => c.k,
    };
    let (title, name) = match shading {
        BoundShading::Raw(_) => ("Expressivity against MI".to_string(), "MI".to_string()),
        BoundShading::Scaled(_) => (
            "Expressivity against the scaled MI bound".to_string(),
            format!("K MI, K = {k:.4}"),
        ),
    };
    bound_chart(
        &title,
        "expressivity",
        rows,
        |r| r.expressivity_proxy,
        &move |r| k * r.mi_tet_proxy,
        &name,
    )
}

/// All single-run charts as `(file name, chart)`.
pub fn single_run_charts(rows: &[RunRow], shading: Option<BoundShading>) -> Vec<(&'static str, LineChart)> {
    let mut charts = vec![
        ("rewards.svg", reward_chart(rows)),
        ("mi_entropy.svg", mi_entropy_chart(rows)),
    ];
    if let Some(shading) = shading {
        charts.push(("gradient_bound.svg", gradient_bound_chart(rows, shading)));
        charts.push(("expressivity_bound.svg", expressivity_bound_chart(rows, shading)));
    }
    charts
}

/// One series per run.
pub fn comparison_chart(
    title: &str,
    y_label: &str,
    runs: &[(String, Vec<RunRow>)],
    value: fn(&RunRow) -> f64,
) -> LineChart {
    let mut chart = LineChart::new(title, "batch", y_label);
    for (i, (label, rows)) in runs.iter().enumerate() {
        chart.series.push(Series::new(
            label.clone(),
            points(rows, value),
            PALETTE[i % PALETTE.len()],
        ));
    }
    chart
}
