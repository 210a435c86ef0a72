//! The thirteen acceptance criteria. Both the `acceptance` test target and
//! `lipmbrl run-all` drive them through [`run_suite`].

use std::time::{Duration, Instant};

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report;
use super::{
    compounding_instance, gvi_lipschitz_study, linear_tightness_case, metric_correlation_study,
    random_metric, CompoundingReport, CorrelationConfig, CorrelationStudy, RewardMode,
    TightnessReport,
};
use crate::decomposition::{
    decompose_all, decompose_kernel, model_class_lipschitz, reconstruct_and_check,
    reconstruct_kernel_and_check, CumulativeTable,
};
use crate::em::{self, EmConfig, MStepConfig, WeightConstraint};
use crate::error::{Error, Result};
use crate::fixtures;
use crate::gvi::BackupOperator;
use crate::lipschitz::net::{LayerOp, LayeredNet, Matrix, Norm};
use crate::lipschitz::{operator_constant_check, sample_vector_pairs};
use crate::mdp::{Distribution, FiniteMetricMDP, GroundMetric};
use crate::metrics::{wasserstein_1d, wasserstein_dual, wasserstein_primal};
use crate::rng::{derived, flat_dirichlet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub duality: f64,
    pub one_d: f64,
    pub round_trip: f64,
    pub compounding: f64,
    pub tightness_gap: f64,
    pub tightness_value: f64,
    pub value_bound: f64,
    pub gvi_bound: f64,
    pub operator: f64,
    pub layer: f64,
    pub gradient: f64,
    pub elbo: f64,
    /// Largest gap the correlation ordering under uniform rewards may show.
    pub dominance: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            duality: 1e-8,
            one_d: 1e-10,
            round_trip: 1e-12,
            compounding: 1e-9,
            tightness_gap: 1e-12,
            tightness_value: 1e-9,
            value_bound: 1e-6,
            gvi_bound: 1e-6,
            operator: 1e-9,
            layer: 1e-9,
            gradient: 1e-4,
            elbo: 1e-6,
            dominance: 0.1,
        }
    }
}

impl Tolerances {
    pub fn named(&self) -> [(&'static str, f64); 13] {
        [
            ("duality", self.duality),
            ("one_d", self.one_d),
            ("round_trip", self.round_trip),
            ("compounding", self.compounding),
            ("tightness_gap", self.tightness_gap),
            ("tightness_value", self.tightness_value),
            ("value_bound", self.value_bound),
            ("gvi_bound", self.gvi_bound),
            ("operator", self.operator),
            ("layer", self.layer),
            ("gradient", self.gradient),
            ("elbo", self.elbo),
            ("dominance", self.dominance),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.named() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "tolerance {name} = {v} must be positive and finite"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub seed: u64,
    pub tolerances: Tolerances,
    pub correlation_trials: usize,
    pub correlation_gamma: f64,
    pub gammas: Vec<f64>,
    /// Seed of the five-function training set.
    pub em_data_seed: u64,
    /// Initialization seeds averaged over in the cap comparison.
    pub em_init_seeds: Vec<u64>,
    pub em_norm: Norm,
    pub em_k_small: f64,
    pub em_k_mid: f64,
    pub em_test_points: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            tolerances: Tolerances::default(),
            correlation_trials: 1000,
            correlation_gamma: 0.95,
            gammas: vec![0.5, 0.7, 0.9, 0.95, 0.99],
            em_data_seed: 7,
            em_init_seeds: (0..8).collect(),
            em_norm: Norm::LInf,
            em_k_small: 0.05,
            em_k_mid: 1.0,
            em_test_points: 101,
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        self.tolerances.validate()?;
        if self.correlation_trials < 30 {
            return Err(Error::InvalidArgument(
                "correlation_trials must be at least 30".into(),
            ));
        }
        if !self.gammas.contains(&self.correlation_gamma) {
            return Err(Error::InvalidArgument(format!(
                "correlation_gamma {} is not in the gamma list",
                self.correlation_gamma
            )));
        }
        if self.em_init_seeds.is_empty() || self.em_test_points == 0 {
            return Err(Error::InvalidArgument(
                "EM comparison needs seeds and test points".into(),
            ));
        }
        if !(self.em_k_small > 0.0 && self.em_k_mid > self.em_k_small) {
            return Err(Error::InvalidArgument(
                "need 0 < em_k_small < em_k_mid".into(),
            ));
        }
        Ok(())
    }

    fn sub_seed(&self, criterion: u64) -> u64 {
        derived(self.seed, criterion, 99).next_u64()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Criterion {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    /// Wall time; kept out of the CSV summary so reruns stay byte-identical.
    pub elapsed: Duration,
}

impl Criterion {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {:<28} {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

fn timed<F: FnOnce() -> Result<(bool, String)>>(
    id: usize,
    name: &'static str,
    f: F,
) -> Result<Criterion> {
    let start = Instant::now();
    let (passed, detail) = f()?;
    Ok(Criterion {
        id,
        name,
        passed,
        detail,
        elapsed: start.elapsed(),
    })
}

fn random_distribution<R: Rng + ?Sized>(rng: &mut R, n: usize, sparsity: f64) -> Distribution {
    let mut w = flat_dirichlet(rng, n);
    for v in &mut w {
        if rng.random_bool(sparsity) {
            *v = 0.0;
        }
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        w = vec![0.0; n];
        w[rng.random_range(0..n)] = 1.0;
    } else {
        w.iter_mut().for_each(|v| *v /= total);
    }
    Distribution::with_tolerance(w, 1e-12).expect("normalized")
}

/// Primal transport against the dual potential on random pairs and metrics.
pub fn duality(seed: u64, tol: f64) -> Result<Criterion> {
    timed(1, "strong duality", || {
        let gaps = (0..500u64)
            .into_par_iter()
            .map(|i| -> Result<f64> {
                let mut rng = derived(seed, i, 0);
                let n = rng.random_range(2..=50);
                let metric = if i % 3 == 0 {
                    let mut pts: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
                    pts.sort_by(f64::total_cmp);
                    pts.dedup();
                    if pts.len() < n {
                        random_metric(&mut rng, n)
                    } else {
                        GroundMetric::line(&pts)
                    }
                } else {
                    random_metric(&mut rng, n)
                };
                let sparsity = [0.0, 0.3, 0.7][(i % 3) as usize];
                let a = random_distribution(&mut rng, n, sparsity);
                let b = random_distribution(&mut rng, n, sparsity);
                let (p, _) = wasserstein_primal(&a, &b, &metric)?;
                let (d, _) = wasserstein_dual(&a, &b, &metric)?;
                Ok((p - d).abs())
            })
            .collect::<Result<Vec<_>>>()?;
        let worst = gaps.iter().copied().fold(0.0, f64::max);
        Ok((
            worst <= tol,
            format!("500 pairs, max |primal - dual| = {worst:.3e}"),
        ))
    })
}

/// Closed-form line distance against the transport LP.
pub fn one_d(seed: u64, tol: f64) -> Result<Criterion> {
    timed(2, "1-D closed form", || {
        let gaps = (0..500u64)
            .into_par_iter()
            .map(|i| -> Result<f64> {
                let mut rng = derived(seed, i, 0);
                let n = rng.random_range(2..=30);
                let mut pts: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
                pts.sort_by(f64::total_cmp);
                pts.dedup();
                let n = pts.len();
                let a = random_distribution(&mut rng, n, 0.3);
                let b = random_distribution(&mut rng, n, 0.3);
                let closed = wasserstein_1d(&pts, a.mass(), b.mass())?;
                let (lp, _) = wasserstein_primal(&a, &b, &GroundMetric::line(&pts))?;
                Ok((closed - lp).abs())
            })
            .collect::<Result<Vec<_>>>()?;
        let worst = gaps.iter().copied().fold(0.0, f64::max);
        Ok((
            worst <= tol,
            format!("500 instances, max gap = {worst:.3e}"),
        ))
    })
}

/// A random kernel whose rows mix Dirichlet draws, sparse rows and rows on a
/// coarse grid (so cumulative values collide across states).
fn random_mdp_for_decomposition(seed: u64, i: u64) -> Result<FiniteMetricMDP> {
    let mut rng = derived(seed, i, 0);
    let n = rng.random_range(1..=12);
    let n_actions = rng.random_range(1..=4);
    let tensor = (0..n_actions)
        .map(|_| {
            (0..n)
                .map(|_| match rng.random_range(0..3) {
                    0 => flat_dirichlet(&mut rng, n),
                    1 => random_distribution(&mut rng, n, 0.6).mass().to_vec(),
                    _ => {
                        let mut counts = vec![0u32; n];
                        for _ in 0..10 {
                            counts[rng.random_range(0..n)] += 1;
                        }
                        counts.iter().map(|&c| c as f64 / 10.0).collect()
                    }
                })
                .collect()
        })
        .collect();
    let kernel = crate::mdp::TransitionKernel::from_nested(tensor)?;
    FiniteMetricMDP::new(kernel, vec![0.0; n], 0.9, GroundMetric::index_line(n))
}

pub fn round_trip(seed: u64, tol: f64) -> Result<Criterion> {
    timed(3, "decomposition round trip", || {
        let mut worst: f64 = 0.0;
        let mut count_ok = true;
        for i in 0..200u64 {
            let mdp = random_mdp_for_decomposition(seed, i)?;
            let kernel = mdp.transitions();
            for a in 0..kernel.n_actions() {
                let class = decompose_kernel(kernel, a)?;
                let levels = CumulativeTable::new(kernel, a)?.breakpoints.len();
                count_ok &= class.maps().len() <= levels;
                worst = worst.max(reconstruct_kernel_and_check(&kernel.action(a)?, &class)?);
            }
            worst = worst.max(reconstruct_and_check(&mdp, &decompose_all(&mdp)?)?);
        }
        Ok((
            worst <= tol && count_ok,
            format!("200 MDPs, max deviation = {worst:.3e}, map counts within |L|: {count_ok}"),
        ))
    })
}

pub fn gridworld() -> Result<Criterion> {
    timed(4, "gridworld K_F", || {
        let k = model_class_lipschitz(
            &fixtures::gridworld_model_class(),
            &fixtures::gridworld_metric(),
        )?;
        Ok((k == 2.0, format!("K_F = {k}")))
    })
}

pub fn compounding_reports(seed: u64) -> Result<Vec<CompoundingReport>> {
    (0..200u64)
        .into_par_iter()
        .map(|i| compounding_instance(seed, i, 8, 6))
        .collect()
}

pub fn compounding(reports: &[CompoundingReport], tol: f64) -> Result<Criterion> {
    timed(5, "compounding-error bound", || {
        let (bound, rec) =
            reports
                .iter()
                .fold((f64::NEG_INFINITY, f64::NEG_INFINITY), |(b, r), rep| {
                    let (eb, er) = rep.worst_excess();
                    (b.max(eb), r.max(er))
                });
        Ok((
            bound <= tol && rec <= tol,
            format!(
                "{} instances x 6 steps, max excess over bound = {bound:.3e}, over recursion = {rec:.3e}",
                reports.len()
            ),
        ))
    })
}

pub fn tightness_reports() -> Result<Vec<TightnessReport>> {
    let mut out = Vec::new();
    for k in [0.5, 1.0] {
        for delta in [0.05, 0.2] {
            for gamma in [0.5, 0.9] {
                out.push(linear_tightness_case(k, delta, gamma, 1.0, 201, 10.0, 20)?);
            }
        }
    }
    Ok(out)
}

pub fn tightness(reports: &[TightnessReport], tols: &Tolerances) -> Result<Criterion> {
    timed(6, "linear tightness", || {
        let gap = reports.iter().map(|r| r.max_gap_error).fold(0.0, f64::max);
        let value = reports
            .iter()
            .map(|r| (r.value_gap - r.predicted_value_gap).abs())
            .fold(0.0, f64::max);
        let snap = reports
            .iter()
            .map(|r| r.max_snap_excess)
            .fold(f64::NEG_INFINITY, f64::max);
        Ok((
            gap <= tols.tightness_gap && value <= tols.tightness_value && snap <= tols.tightness_gap,
            format!(
                "{} cases, max gap error = {gap:.3e}, max value error = {value:.3e}, snapped within resolution: {}",
                reports.len(),
                snap <= tols.tightness_gap
            ),
        ))
    })
}

pub fn correlation_studies(config: &SuiteConfig) -> Result<(CorrelationStudy, CorrelationStudy)> {
    let base = CorrelationConfig {
        n_trials: config.correlation_trials,
        gammas: config.gammas.clone(),
        seed: config.sub_seed(11),
        ..CorrelationConfig::default()
    };
    let index = metric_correlation_study(&CorrelationConfig {
        reward_mode: RewardMode::Index,
        ..base.clone()
    })?;
    let uniform = metric_correlation_study(&CorrelationConfig {
        reward_mode: RewardMode::Uniform,
        ..base
    })?;
    Ok((index, uniform))
}

/// The value bound on every index-reward trial where it applies (`γK̄ < 1`).
pub fn value_bound(study: &CorrelationStudy, tol: f64) -> Result<Criterion> {
    timed(7, "value-error bound", || {
        let mut applicable = 0;
        let mut violations = 0;
        let mut worst = f64::NEG_INFINITY;
        for t in &study.trials {
            if let Some(b) = t.value_error_bound {
                applicable += 1;
                let excess = t.value_error_max - b;
                worst = worst.max(excess);
                if excess > tol {
                    violations += 1;
                }
            }
        }
        let per_gamma: Vec<String> = study
            .config
            .gammas
            .iter()
            .map(|&g| {
                let n = study
                    .trials
                    .iter()
                    .filter(|t| t.gamma == g && t.value_error_bound.is_some())
                    .count();
                format!("{g}:{n}")
            })
            .collect();
        Ok((
            violations == 0 && applicable > 0,
            format!(
                "{applicable}/{} trial-discount pairs with gamma*K_bar < 1 (by gamma {}), violations = {violations}, max excess = {worst:.3e}",
                study.trials.len(),
                per_gamma.join(" ")
            ),
        ))
    })
}

pub const GVI_OPERATORS: [BackupOperator; 4] = [
    BackupOperator::Max,
    BackupOperator::Mean,
    BackupOperator::EpsGreedy(0.1),
    BackupOperator::Mellowmax(5.0),
];

pub fn gvi_bound(records: &[super::GviLipschitzRecord], tol: f64) -> Result<Criterion> {
    timed(8, "GVI Lipschitz bound", || {
        let worst = records
            .iter()
            .map(|r| r.empirical - r.bound)
            .fold(f64::NEG_INFINITY, f64::max);
        let ratio = records
            .iter()
            .map(|r| {
                if r.bound > 0.0 {
                    r.empirical / r.bound
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max);
        Ok((
            worst <= tol,
            format!(
                "{} runs, max empirical - bound = {worst:.3e}, max empirical/bound = {ratio:.3}",
                records.len()
            ),
        ))
    })
}

pub fn operators(seed: u64, tol: f64) -> Result<(Criterion, String)> {
    let ops = [
        BackupOperator::Max,
        BackupOperator::Mean,
        BackupOperator::EpsGreedy(0.1),
        BackupOperator::Mellowmax(5.0),
        BackupOperator::Boltzmann(1.0),
    ];
    let mut rows = Vec::new();
    let c = timed(9, "operator constants", || {
        let mut ok = true;
        let mut parts = Vec::new();
        for (i, op) in ops.iter().enumerate() {
            let mut rng = derived(seed, i as u64, 0);
            let pairs = sample_vector_pairs(&mut rng, 4, 10_000, 10.0);
            let check = operator_constant_check(op, &pairs, Some(10.0))?;
            ok &= check.holds(tol);
            parts.push(format!("{op}:{:.4}/{:.4}", check.max_ratio, check.constant));
            rows.push(vec![
                op.to_string(),
                check.pairs.to_string(),
                report::num(check.max_ratio),
                report::num(check.constant),
            ]);
        }
        Ok((
            ok,
            format!("10^4 pairs each, ratio/constant {}", parts.join(" ")),
        ))
    })?;
    let csv = report::table(&["operator", "pairs", "max_ratio", "constant"], rows)?;
    Ok((c, csv))
}

fn random_matrix<R: Rng + ?Sized>(rng: &mut R) -> Matrix {
    let rows = rng.random_range(1..=8);
    let cols = rng.random_range(1..=8);
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-2.0..=2.0))
        .collect();
    Matrix::new(rows, cols, data).expect("sized")
}

/// Sampled difference quotients of each layer primitive against its table
/// constant, and the sign-vector pair attaining the `p = ∞` constant.
pub fn layer_table(seed: u64, tol: f64) -> Result<Criterion> {
    timed(10, "layer constants", || {
        let mut worst_excess = f64::NEG_INFINITY;
        let mut worst_tight: f64 = 0.0;
        for i in 0..100u64 {
            let mut rng = derived(seed, i, 0);
            let w = random_matrix(&mut rng);
            let bias: Vec<f64> = (0..w.rows).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let ops = [
                LayerOp::MatMul(w.clone()),
                LayerOp::AddBias(bias),
                LayerOp::Relu,
            ];
            for op in &ops {
                let dim = match op {
                    LayerOp::MatMul(m) => m.cols,
                    _ => w.rows,
                };
                for norm in [Norm::L1, Norm::L2, Norm::LInf] {
                    let bound = op.lipschitz(norm);
                    for _ in 0..50 {
                        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..=3.0)).collect();
                        let y: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..=3.0)).collect();
                        let dx: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
                        let fx = op.apply(&x);
                        let fy = op.apply(&y);
                        let df: Vec<f64> = fx.iter().zip(&fy).map(|(a, b)| a - b).collect();
                        let denom = norm.vector(&dx);
                        if denom > 0.0 {
                            worst_excess = worst_excess.max(norm.vector(&df) / denom - bound);
                        }
                    }
                }
            }
            // Row with the largest absolute sum and the sign vector of that row.
            let (j, _) = (0..w.rows)
                .map(|j| (j, w.row(j).iter().map(|v| v.abs()).sum::<f64>()))
                .fold((0, f64::NEG_INFINITY), |best, cur| {
                    if cur.1 > best.1 {
                        cur
                    } else {
                        best
                    }
                });
            let x: Vec<f64> = w
                .row(j)
                .iter()
                .map(|v| if *v >= 0.0 { 1.0 } else { -1.0 })
                .collect();
            let zero = vec![0.0; w.cols];
            let quotient = Norm::LInf.vector(
                &w.apply(&x)
                    .iter()
                    .zip(w.apply(&zero))
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
            ) / Norm::LInf.vector(&x);
            worst_tight = worst_tight.max((quotient - w.lipschitz(Norm::LInf)).abs());
        }
        Ok((
            worst_excess <= tol && worst_tight <= tol,
            format!("100 matrices, max quotient - bound = {worst_excess:.3e}, p=inf attainment gap = {worst_tight:.3e}"),
        ))
    })
}

/// Largest norm-wise relative error between backprop and central differences.
pub fn gradient_check(seed: u64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..20u64 {
        let mut rng = derived(seed, i, 0);
        let widths: Vec<usize> = match i % 3 {
            0 => vec![1, 16, 1],
            1 => vec![1, 8, 8, 1],
            _ => vec![1, 4, 1],
        };
        let mut net = LayeredNet::random(&widths, &mut rng)?;
        let params: Vec<f64> = net
            .params()
            .iter()
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect();
        net.set_params(&params);
        let data: Vec<(f64, f64)> = (0..25)
            .map(|_| (rng.random_range(-2.0..=2.0), rng.random_range(-3.0..=3.0)))
            .collect();
        let weights: Vec<f64> = (0..data.len())
            .map(|_| rng.random_range(0.0..=1.0))
            .collect();
        let analytic = em::weighted_loss_gradient(&net, &data, &weights).flat();
        let h = 1e-5;
        let mut numeric = vec![0.0; params.len()];
        for k in 0..params.len() {
            let mut p = params.clone();
            p[k] += h;
            net.set_params(&p);
            let up = em::weighted_loss(&net, &data, &weights);
            p[k] -= 2.0 * h;
            net.set_params(&p);
            let down = em::weighted_loss(&net, &data, &weights);
            numeric[k] = (up - down) / (2.0 * h);
        }
        net.set_params(&params);
        let diff: f64 = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = Norm::L2
            .vector(&analytic)
            .max(Norm::L2.vector(&numeric))
            .max(1e-12);
        worst = worst.max(diff / scale);
    }
    Ok(worst)
}

/// Final test-grid Wasserstein loss for each (cap, seed); `None` is unconstrained.
pub fn em_sweep(
    config: &SuiteConfig,
    caps: &[Option<f64>],
) -> Result<Vec<(Option<f64>, u64, f64)>> {
    let data = fixtures::supervised_data(
        fixtures::SUPERVISED_SAMPLES_PER_FUNCTION,
        config.em_data_seed,
    );
    let grid = fixtures::supervised_test_grid(config.em_test_points);
    let jobs: Vec<(Option<f64>, u64)> = caps
        .iter()
        .flat_map(|&c| config.em_init_seeds.iter().map(move |&s| (c, s)))
        .collect();
    jobs.into_par_iter()
        .map(|(cap, seed)| {
            let constraint = match cap {
                Some(cap) => WeightConstraint::Project {
                    norm: config.em_norm,
                    cap,
                },
                None => WeightConstraint::None,
            };
            let fit = em::em_fit(
                &data,
                &EmConfig {
                    seed,
                    m_step: MStepConfig {
                        constraint,
                        ..MStepConfig::default()
                    },
                    ..EmConfig::default()
                },
            )?;
            let loss =
                em::mixture_wasserstein_loss(&fit.model, &fixtures::SUPERVISED_FUNCTIONS, &grid)?;
            Ok((cap, seed, loss))
        })
        .collect()
}

pub struct EmOutcome {
    pub criterion: Criterion,
    pub trace_csv: String,
    pub sweep_csv: String,
}

pub fn em_suite(config: &SuiteConfig) -> Result<EmOutcome> {
    let tols = &config.tolerances;
    let mut trace_csv = String::new();
    let mut sweep_csv = String::new();
    let criterion = timed(12, "EM learner", || {
        let grad_err = gradient_check(config.sub_seed(12))?;

        let data = fixtures::supervised_data(
            fixtures::SUPERVISED_SAMPLES_PER_FUNCTION,
            config.em_data_seed,
        );
        let mut worst_drop: f64 = 0.0;
        let mut trace_rows = Vec::new();
        for (label, constraint) in [
            ("none", WeightConstraint::None),
            (
                "project",
                WeightConstraint::Project {
                    norm: config.em_norm,
                    cap: config.em_k_mid,
                },
            ),
        ] {
            let fit = em::em_fit(
                &data,
                &EmConfig {
                    seed: config.em_init_seeds[0],
                    m_step: MStepConfig {
                        constraint,
                        ..MStepConfig::default()
                    },
                    ..EmConfig::default()
                },
            )?;
            for w in fit.trace.windows(2) {
                worst_drop = worst_drop.max(w[0].elbo - w[1].elbo);
            }
            for t in &fit.trace {
                trace_rows.push(vec![
                    label.to_string(),
                    t.iteration.to_string(),
                    report::num(t.elbo),
                    report::num(t.weighted_mse),
                ]);
            }
        }
        trace_csv = report::table(
            &["constraint", "iteration", "elbo", "weighted_mse"],
            trace_rows,
        )?;

        let caps = [Some(config.em_k_small), Some(config.em_k_mid), None];
        let sweep = em_sweep(config, &caps)?;
        let mean = |cap: Option<f64>| {
            let v: Vec<f64> = sweep.iter().filter(|r| r.0 == cap).map(|r| r.2).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let (small, mid, free) = (mean(caps[0]), mean(caps[1]), mean(None));
        sweep_csv = report::table(
            &["seed", "cap", "loss"],
            sweep.iter().map(|(cap, seed, loss)| {
                vec![
                    seed.to_string(),
                    cap.map(report::num).unwrap_or_else(|| "inf".into()),
                    report::num(*loss),
                ]
            }),
        )?;

        let u_shape = mid <= small && mid <= free;
        Ok((
            grad_err <= tols.gradient && worst_drop <= tols.elbo && u_shape,
            format!(
                "gradient rel err = {grad_err:.2e}, max ELBO drop = {worst_drop:.2e}, mean loss k={}: {small:.4}, k={}: {mid:.4}, unconstrained: {free:.4}",
                config.em_k_small, config.em_k_mid
            ),
        ))
    })?;
    Ok(EmOutcome {
        criterion,
        trace_csv,
        sweep_csv,
    })
}

pub fn correlation_ordering(
    index: &CorrelationStudy,
    uniform: &CorrelationStudy,
    gamma: f64,
    tol: f64,
    elapsed: Duration,
) -> Result<Criterion> {
    let start = Instant::now();
    let pick = |s: &CorrelationStudy| {
        s.summaries
            .iter()
            .find(|c| c.gamma == gamma)
            .cloned()
            .ok_or_else(|| Error::InvalidArgument(format!("no summary at gamma {gamma}")))
    };
    let (si, su) = (pick(index)?, pick(uniform)?);
    let c = |m: &super::MetricCorrelation| m.correlation.unwrap_or(f64::NAN);
    let (w, tv, kl) = (c(&si.wasserstein), c(&si.total_variation), c(&si.kl));
    let ordered = w > tv && w > kl;
    let u: Vec<f64> = su.metrics().iter().map(|m| c(m)).collect();
    let spread = u.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - u.iter().copied().fold(f64::INFINITY, f64::min);
    let total = elapsed + start.elapsed();
    let in_time = total < Duration::from_secs(300);
    Ok(Criterion {
        id: 11,
        name: "metric correlation ordering",
        passed: ordered && spread <= tol && in_time,
        detail: format!(
            "gamma {gamma}, index rewards W {w:.3} TV {tv:.3} KL {kl:.3} (KL excluded {}); uniform rewards spread {spread:.3}",
            si.kl.excluded
        ),
        elapsed: total,
    })
}

pub struct SuiteOutput {
    pub criteria: Vec<Criterion>,
    /// `(file name, contents)` for every CSV and the plot script.
    pub files: Vec<(String, String)>,
}

impl SuiteOutput {
    pub fn all_passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    pub fn summary_csv(&self) -> Result<String> {
        report::table(
            &["criterion", "name", "passed", "detail"],
            self.criteria.iter().map(|c| {
                vec![
                    c.id.to_string(),
                    c.name.to_string(),
                    c.passed.to_string(),
                    c.detail.clone(),
                ]
            }),
        )
    }
}

/// Runs criteria 1 to 12 and renders every artifact. `on_result` sees each
/// criterion as soon as it finishes.
pub fn run_suite(
    config: &SuiteConfig,
    mut on_result: impl FnMut(&Criterion),
) -> Result<SuiteOutput> {
    config.validate()?;
    let tols = &config.tolerances;
    let mut criteria = Vec::new();
    let mut files = Vec::new();
    let mut push = |c: Criterion, criteria: &mut Vec<Criterion>| {
        on_result(&c);
        criteria.push(c);
    };

    push(duality(config.sub_seed(1), tols.duality)?, &mut criteria);
    push(one_d(config.sub_seed(2), tols.one_d)?, &mut criteria);
    push(
        round_trip(config.sub_seed(3), tols.round_trip)?,
        &mut criteria,
    );
    push(gridworld()?, &mut criteria);

    let comp = compounding_reports(config.sub_seed(5))?;
    push(compounding(&comp, tols.compounding)?, &mut criteria);
    files.push(("compounding.csv".into(), report::compounding_csv(&comp)?));

    let tight = tightness_reports()?;
    push(tightness(&tight, tols)?, &mut criteria);
    files.push(("tightness.csv".into(), report::tightness_csv(&tight)?));

    let start = Instant::now();
    let (index, uniform) = correlation_studies(config)?;
    let corr_elapsed = start.elapsed();
    push(value_bound(&index, tols.value_bound)?, &mut criteria);
    files.push((
        "trials.csv".into(),
        report::trials_csv(&index.trials, index.config.horizon)?,
    ));
    files.push((
        "trials_uniform.csv".into(),
        report::trials_csv(&uniform.trials, uniform.config.horizon)?,
    ));
    files.push((
        "correlations.csv".into(),
        report::correlations_csv(&[&index, &uniform])?,
    ));

    let gvi = gvi_lipschitz_study(100, 8, 3, &GVI_OPERATORS, config.sub_seed(8))?;
    push(gvi_bound(&gvi, tols.gvi_bound)?, &mut criteria);
    files.push(("gvi_lipschitz.csv".into(), report::gvi_lipschitz_csv(&gvi)?));

    let (ops, ops_csv) = operators(config.sub_seed(9), tols.operator)?;
    push(ops, &mut criteria);
    files.push(("operators.csv".into(), ops_csv));

    push(layer_table(config.sub_seed(10), tols.layer)?, &mut criteria);
    push(
        correlation_ordering(
            &index,
            &uniform,
            config.correlation_gamma,
            tols.dominance,
            corr_elapsed,
        )?,
        &mut criteria,
    );

    let em = em_suite(config)?;
    push(em.criterion, &mut criteria);
    files.push(("em_trace.csv".into(), em.trace_csv));
    files.push(("em_sweep.csv".into(), em.sweep_csv));
    files.push(("plot.gp".into(), report::PLOT_SCRIPT.to_string()));

    Ok(SuiteOutput { criteria, files })
}

/// Criterion 13: regenerate every artifact and compare with `first`.
pub fn determinism(config: &SuiteConfig, first: &SuiteOutput) -> Result<Criterion> {
    timed(13, "determinism", || {
        let second = run_suite(config, |_| {})?;
        let mut differing = Vec::new();
        for ((name, a), (_, b)) in first.files.iter().zip(&second.files) {
            if a != b {
                differing.push(name.clone());
            }
        }
        let same_summary = first.summary_csv()? == second.summary_csv()?;
        if !same_summary {
            differing.push("summary.csv".into());
        }
        let ok = differing.is_empty() && first.files.len() == second.files.len();
        Ok((
            ok,
            if ok {
                format!("{} files byte-identical on rerun", first.files.len() + 1)
            } else {
                format!("differing: {}", differing.join(", "))
            },
        ))
    })
}
