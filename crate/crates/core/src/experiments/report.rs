//! CSV tables and the plot script. Every table is rendered to a string so
//! reruns can be compared byte for byte before anything touches the disk.

use super::{
    CompoundingReport, CorrelationStudy, GviLipschitzRecord, TightnessReport, TrialRecord,
};
use crate::error::Result;

/// Shortest round-trip formatting; `inf` for infinities.
pub fn num(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Builds a CSV document from a header and string rows.
pub fn table<I>(header: &[&str], rows: I) -> Result<String>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn trials_csv(trials: &[TrialRecord], horizon: usize) -> Result<String> {
    let mut header: Vec<String> = [
        "trial",
        "gamma",
        "model_error_w",
        "model_error_tv",
        "model_error_kl",
        "value_error",
        "value_error_max",
        "delta",
        "k_truth",
        "k_model",
        "k_r",
        "value_error_bound",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for n in 1..=horizon {
        header.push(format!("empirical_delta_{n}"));
    }
    for n in 1..=horizon {
        header.push(format!("compounding_bound_{n}"));
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    table(
        &header_refs,
        trials.iter().map(|t| {
            let mut row = vec![
                t.trial.to_string(),
                num(t.gamma),
                num(t.model_error_w),
                num(t.model_error_tv),
                num(t.model_error_kl),
                num(t.value_error),
                num(t.value_error_max),
                num(t.delta),
                num(t.k_truth),
                num(t.k_model),
                num(t.k_r),
                opt(t.value_error_bound),
            ];
            row.extend(t.empirical_delta.iter().copied().map(num));
            row.extend(t.compounding_bounds.iter().copied().map(num));
            row
        }),
    )
}

/// One row per (study, gamma, metric). Undefined correlations are written
/// as `undefined`.
pub fn correlations_csv(studies: &[&CorrelationStudy]) -> Result<String> {
    let mut rows = Vec::new();
    for study in studies {
        for s in &study.summaries {
            for m in s.metrics() {
                rows.push(vec![
                    s.reward_mode.name().to_string(),
                    num(s.gamma),
                    m.metric.to_string(),
                    m.correlation.map(num).unwrap_or_else(|| "undefined".into()),
                    m.used.to_string(),
                    m.excluded.to_string(),
                ]);
            }
        }
    }
    table(
        &[
            "reward_mode",
            "gamma",
            "metric",
            "correlation",
            "trials_used",
            "trials_excluded",
        ],
        rows,
    )
}

pub fn compounding_csv(reports: &[CompoundingReport]) -> Result<String> {
    let rows = reports.iter().enumerate().flat_map(|(i, r)| {
        r.steps.iter().map(move |s| {
            vec![
                i.to_string(),
                s.n.to_string(),
                num(s.delta_n),
                num(s.bound),
                num(s.recursion),
                num(r.delta),
                num(r.k_truth),
                num(r.k_model),
                num(r.k_bar),
            ]
        })
    });
    table(
        &[
            "instance",
            "n",
            "delta_n",
            "bound",
            "recursion",
            "delta",
            "k_truth",
            "k_model",
            "k_bar",
        ],
        rows,
    )
}

pub fn tightness_csv(reports: &[TightnessReport]) -> Result<String> {
    let rows = reports.iter().flat_map(|r| {
        (0..r.gaps.len()).map(move |i| {
            vec![
                num(r.k),
                num(r.delta),
                num(r.gamma),
                (i + 1).to_string(),
                num(r.gaps[i]),
                num(r.predicted_gaps[i]),
                num(r.snapped_gaps[i]),
                num(r.value_gap),
                num(r.predicted_value_gap),
            ]
        })
    });
    table(
        &[
            "k",
            "delta",
            "gamma",
            "n",
            "gap",
            "predicted_gap",
            "snapped_gap",
            "value_gap",
            "predicted_value_gap",
        ],
        rows,
    )
}

pub fn gvi_lipschitz_csv(records: &[GviLipschitzRecord]) -> Result<String> {
    table(
        &[
            "instance",
            "operator",
            "gamma",
            "k_w",
            "k_r",
            "empirical",
            "bound",
            "iterations",
        ],
        records.iter().map(|r| {
            vec![
                r.instance.to_string(),
                r.operator.to_string(),
                num(r.gamma),
                num(r.k_w),
                num(r.k_r),
                num(r.empirical),
                num(r.bound),
                r.iterations.to_string(),
            ]
        }),
    )
}

/// Gnuplot script drawing the correlation scatter and the per-discount
/// correlation curves from `trials.csv`, `trials_uniform.csv` and
/// `correlations.csv`.
pub const PLOT_SCRIPT: &str = r#"# gnuplot -c plot.gp   (run inside the output directory)
set datafile separator ","
set terminal pngcairo size 1200,400
set key autotitle columnhead

set output "scatter_index.png"
set multiplot layout 1,3 title "index rewards, gamma = 0.95"
set ylabel "value error"
set xlabel "Wasserstein"; plot "trials.csv" using ($2==0.95?$3:1/0):6 with points pt 7 ps 0.3 notitle
set xlabel "total variation"; plot "trials.csv" using ($2==0.95?$4:1/0):6 with points pt 7 ps 0.3 notitle
set xlabel "KL"; plot "trials.csv" using ($2==0.95?$5:1/0):6 with points pt 7 ps 0.3 notitle
unset multiplot

set output "scatter_uniform.png"
set multiplot layout 1,3 title "uniform rewards, gamma = 0.95"
set xlabel "Wasserstein"; plot "trials_uniform.csv" using ($2==0.95?$3:1/0):6 with points pt 7 ps 0.3 notitle
set xlabel "total variation"; plot "trials_uniform.csv" using ($2==0.95?$4:1/0):6 with points pt 7 ps 0.3 notitle
set xlabel "KL"; plot "trials_uniform.csv" using ($2==0.95?$5:1/0):6 with points pt 7 ps 0.3 notitle
unset multiplot

set terminal pngcairo size 600,400
set output "correlation_vs_gamma.png"
set xlabel "gamma"; set ylabel "Pearson correlation"
plot for [m in "wasserstein total_variation kl"] "correlations.csv" \
    using (strcol(1) eq "index" && strcol(3) eq m ? $2 : 1/0):4 with linespoints title m

set output "em_sweep.png"
set logscale x
set xlabel "cap k"; set ylabel "Wasserstein loss"
plot "em_sweep.csv" using 2:3 with points pt 7 notitle
"#;
