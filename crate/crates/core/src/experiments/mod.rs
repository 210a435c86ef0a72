//! Verification harnesses: random-MRP metric correlation, compounding
//! error, value error, GVI Lipschitz dominance, and the linear tightness case.
//!
//! Every harness is seed-deterministic. Trials run in parallel but each
//! owns a generator derived from `(master seed, trial index)` and results are
//! ordered by trial index.

pub mod acceptance;
pub mod report;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gvi::{self, BackupOperator, GviConfig};
use crate::lipschitz::{self, BoundInputs};
use crate::mdp::{push_forward_n, Distribution, FiniteMetricMDP, GroundMetric, TransitionKernel};
use crate::metrics::{kl_divergence, total_variation, wasserstein_primal};
use crate::rng::{derived, flat_dirichlet};

/// Stream ids used with [`derived`] so the truth and the model of one trial
/// come from independent generators.
pub const STREAM_TRUTH: u64 = 0;
pub const STREAM_MODEL: u64 = 1;
pub const STREAM_EXTRA: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardMode {
    /// Uniform on `[0, 10]`.
    Uniform,
    /// `R(s) = s`.
    Index,
}

impl RewardMode {
    pub fn name(&self) -> &'static str {
        match self {
            RewardMode::Uniform => "uniform_0_10",
            RewardMode::Index => "index",
        }
    }
}

impl std::str::FromStr for RewardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform_0_10" | "uniform" | "random" => Ok(RewardMode::Uniform),
            "index" => Ok(RewardMode::Index),
            other => Err(Error::InvalidArgument(format!(
                "unknown reward mode {other:?}"
            ))),
        }
    }
}

/// How per-state errors are reduced to one number per trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    Mean,
    Max,
}

impl Aggregation {
    pub fn reduce(&self, values: &[f64]) -> f64 {
        match self {
            Aggregation::Mean => values.iter().sum::<f64>() / values.len() as f64,
            Aggregation::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Single-action kernel with flat-Dirichlet rows.
pub fn random_kernel<R: Rng + ?Sized>(
    rng: &mut R,
    n_states: usize,
    n_actions: usize,
) -> TransitionKernel {
    let tensor = (0..n_actions)
        .map(|_| {
            (0..n_states)
                .map(|_| flat_dirichlet(rng, n_states))
                .collect()
        })
        .collect();
    TransitionKernel::from_nested(tensor).expect("dirichlet rows are stochastic")
}

fn random_rewards<R: Rng + ?Sized>(rng: &mut R, n_states: usize, mode: RewardMode) -> Vec<f64> {
    match mode {
        RewardMode::Uniform => (0..n_states)
            .map(|_| rng.random_range(0.0..=10.0))
            .collect(),
        RewardMode::Index => (0..n_states).map(|s| s as f64).collect(),
    }
}

/// Random MRP on `n_states` states with flat-Dirichlet transitions and the
/// line metric `|i - j|`.
pub fn random_mrp(
    n_states: usize,
    reward_mode: RewardMode,
    gamma: f64,
    seed: u64,
) -> Result<FiniteMetricMDP> {
    let mut rng = derived(seed, 0, STREAM_TRUTH);
    random_mrp_from(&mut rng, n_states, reward_mode, gamma)
}

pub fn random_mrp_from<R: Rng + ?Sized>(
    rng: &mut R,
    n_states: usize,
    reward_mode: RewardMode,
    gamma: f64,
) -> Result<FiniteMetricMDP> {
    if n_states < 2 {
        return Err(Error::InvalidArgument(
            "random_mrp needs at least 2 states".into(),
        ));
    }
    let kernel = random_kernel(rng, n_states, 1);
    let rewards = random_rewards(rng, n_states, reward_mode);
    FiniteMetricMDP::new(kernel, rewards, gamma, GroundMetric::index_line(n_states))
}

/// A random metric: shortest-path closure of uniform `[0.5, 2]` edge weights.
pub fn random_metric<R: Rng + ?Sized>(rng: &mut R, n_states: usize) -> GroundMetric {
    let mut w = vec![vec![0.0; n_states]; n_states];
    for i in 0..n_states {
        for j in (i + 1)..n_states {
            let v = rng.random_range(0.5..=2.0);
            w[i][j] = v;
            w[j][i] = v;
        }
    }
    GroundMetric::shortest_path_closure(&w).expect("positive weights")
}

/// Pearson correlation; `None` when either side has zero variance or fewer
/// than two points.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// `max_s W(T(·|s), T̂(·|s))` over all actions.
pub fn one_step_error(
    truth: &TransitionKernel,
    model: &TransitionKernel,
    metric: &GroundMetric,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for a in 0..truth.n_actions() {
        for s in 0..truth.n_states() {
            let (w, _) = wasserstein_primal(
                &truth.row_distribution(a, s),
                &model.row_distribution(a, s),
                metric,
            )?;
            worst = worst.max(w);
        }
    }
    Ok(worst)
}

/// One step of [`compounding_study`].
#[derive(Debug, Clone, PartialEq)]
pub struct CompoundingStep {
    pub n: usize,
    /// `W(T̂^n(·|μ0), T^n(·|μ0))`.
    pub delta_n: f64,
    /// `Δ Σ_{i<n} K̄^i`.
    pub bound: f64,
    /// `K̄ δ(n-1) + Δ`, with `δ(0) = 0`.
    pub recursion: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompoundingReport {
    pub delta: f64,
    pub k_truth: f64,
    pub k_model: f64,
    pub k_bar: f64,
    pub steps: Vec<CompoundingStep>,
}

impl CompoundingReport {
    /// Largest `δ(n) - bound(n)` and `δ(n) - (K̄δ(n-1) + Δ)` over all steps.
    pub fn worst_excess(&self) -> (f64, f64) {
        self.steps
            .iter()
            .fold((f64::NEG_INFINITY, f64::NEG_INFINITY), |(b, r), s| {
                (b.max(s.delta_n - s.bound), r.max(s.delta_n - s.recursion))
            })
    }
}

/// Multi-step prediction error against the compounding bound along a fixed
/// action sequence.
pub fn compounding_study(
    truth: &TransitionKernel,
    model: &TransitionKernel,
    metric: &GroundMetric,
    mu0: &Distribution,
    actions: &[usize],
) -> Result<CompoundingReport> {
    if actions.is_empty() {
        return Err(Error::Empty("action sequence"));
    }
    let delta = one_step_error(truth, model, metric)?;
    let k_truth = lipschitz::kernel_wasserstein_lipschitz(truth, metric)?.max;
    let k_model = lipschitz::kernel_wasserstein_lipschitz(model, metric)?.max;
    let k_bar = k_truth.min(k_model);
    let mut steps = Vec::with_capacity(actions.len());
    let mut prev = 0.0;
    for n in 1..=actions.len() {
        let p = push_forward_n(truth, mu0, &actions[..n])?;
        let q = push_forward_n(model, mu0, &actions[..n])?;
        let (delta_n, _) = wasserstein_primal(&q, &p, metric)?;
        let bound = lipschitz::compounding_bound(&BoundInputs {
            delta,
            k_bar,
            k_r: 0.0,
            gamma: 0.0,
            horizon: n,
        });
        steps.push(CompoundingStep {
            n,
            delta_n,
            bound,
            recursion: k_bar * prev + delta,
        });
        prev = delta_n;
    }
    Ok(CompoundingReport {
        delta,
        k_truth,
        k_model,
        k_bar,
        steps,
    })
}

/// One random instance for the compounding check: 8-state truth and model,
/// random start distribution, line metric on even instances and a random
/// metric on odd ones.
pub fn compounding_instance(
    seed: u64,
    index: u64,
    n_states: usize,
    horizon: usize,
) -> Result<CompoundingReport> {
    let mut truth_rng = derived(seed, index, STREAM_TRUTH);
    let mut model_rng = derived(seed, index, STREAM_MODEL);
    let mut extra = derived(seed, index, STREAM_EXTRA);
    let truth = random_kernel(&mut truth_rng, n_states, 1);
    let model = random_kernel(&mut model_rng, n_states, 1);
    let metric = if index.is_multiple_of(2) {
        GroundMetric::index_line(n_states)
    } else {
        random_metric(&mut extra, n_states)
    };
    let mu0 = Distribution::with_tolerance(flat_dirichlet(&mut extra, n_states), 1e-12)?;
    compounding_study(&truth, &model, &metric, &mu0, &vec![0; horizon])
}

/// One trial of the metric-correlation study at one discount.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub gamma: f64,
    pub model_error_w: f64,
    pub model_error_tv: f64,
    /// May be `+∞`.
    pub model_error_kl: f64,
    /// Aggregated `|V_T(s) - V_T̂(s)|`.
    pub value_error: f64,
    pub value_error_max: f64,
    /// `max_s W(T(·|s), T̂(·|s))`.
    pub delta: f64,
    pub k_truth: f64,
    pub k_model: f64,
    pub k_r: f64,
    /// `None` when `γ K̄ >= 1`.
    pub value_error_bound: Option<f64>,
    /// Worst-start `W(T^n(·|δ_s), T̂^n(·|δ_s))` for `n = 1..=horizon`.
    pub empirical_delta: Vec<f64>,
    pub compounding_bounds: Vec<f64>,
}

impl TrialRecord {
    pub fn k_bar(&self) -> f64 {
        self.k_truth.min(self.k_model)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationConfig {
    pub n_trials: usize,
    pub n_states: usize,
    pub gammas: Vec<f64>,
    pub reward_mode: RewardMode,
    pub seed: u64,
    pub aggregation: Aggregation,
    /// Horizon for the per-trial multi-step error columns; 0 skips them.
    pub horizon: usize,
    /// Use the truth as the model in every trial.
    pub identical_model: bool,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        Self {
            n_trials: 1000,
            n_states: 10,
            gammas: vec![0.5, 0.7, 0.9, 0.95, 0.99],
            reward_mode: RewardMode::Index,
            seed: 0,
            aggregation: Aggregation::Mean,
            horizon: 6,
            identical_model: false,
        }
    }
}

/// Pearson correlation of one metric's model error with value error.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricCorrelation {
    pub metric: &'static str,
    pub correlation: Option<f64>,
    pub used: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSummary {
    pub gamma: f64,
    pub reward_mode: RewardMode,
    pub trials: usize,
    pub wasserstein: MetricCorrelation,
    pub total_variation: MetricCorrelation,
    pub kl: MetricCorrelation,
}

impl CorrelationSummary {
    pub fn metrics(&self) -> [&MetricCorrelation; 3] {
        [&self.wasserstein, &self.total_variation, &self.kl]
    }
}

#[derive(Debug, Clone)]
pub struct CorrelationStudy {
    pub config: CorrelationConfig,
    pub trials: Vec<TrialRecord>,
    pub summaries: Vec<CorrelationSummary>,
}

struct TrialCore {
    truth: TransitionKernel,
    model: TransitionKernel,
    rewards: Vec<f64>,
    w: f64,
    tv: f64,
    kl: f64,
    delta: f64,
    k_truth: f64,
    k_model: f64,
    empirical_delta: Vec<f64>,
}

fn trial_core(config: &CorrelationConfig, trial: usize) -> Result<TrialCore> {
    let n = config.n_states;
    let mut truth_rng = derived(config.seed, trial as u64, STREAM_TRUTH);
    let mut model_rng = derived(config.seed, trial as u64, STREAM_MODEL);
    let truth = random_kernel(&mut truth_rng, n, 1);
    let rewards = random_rewards(&mut truth_rng, n, config.reward_mode);
    let model = if config.identical_model {
        truth.clone()
    } else {
        random_kernel(&mut model_rng, n, 1)
    };
    let metric = GroundMetric::index_line(n);

    let (mut ws, mut tvs, mut kls) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for s in 0..n {
        let p = truth.row_distribution(0, s);
        let q = model.row_distribution(0, s);
        ws.push(wasserstein_primal(&p, &q, &metric)?.0);
        tvs.push(total_variation(&p, &q)?);
        kls.push(kl_divergence(&p, &q)?);
    }
    let delta = ws.iter().copied().fold(0.0, f64::max);
    let k_truth = lipschitz::kernel_wasserstein_lipschitz(&truth, &metric)?.max;
    let k_model = lipschitz::kernel_wasserstein_lipschitz(&model, &metric)?.max;

    let mut empirical_delta = Vec::with_capacity(config.horizon);
    let mut p_rows: Vec<Distribution> = (0..n).map(|s| Distribution::dirac(n, s)).collect();
    let mut q_rows = p_rows.clone();
    for _ in 0..config.horizon {
        let mut worst: f64 = 0.0;
        for s in 0..n {
            p_rows[s] = crate::mdp::push_forward(&truth, &p_rows[s], 0)?;
            q_rows[s] = crate::mdp::push_forward(&model, &q_rows[s], 0)?;
            worst = worst.max(wasserstein_primal(&p_rows[s], &q_rows[s], &metric)?.0);
        }
        empirical_delta.push(worst);
    }

    Ok(TrialCore {
        w: config.aggregation.reduce(&ws),
        tv: config.aggregation.reduce(&tvs),
        kl: config.aggregation.reduce(&kls),
        truth,
        model,
        rewards,
        delta,
        k_truth,
        k_model,
        empirical_delta,
    })
}

fn trial_records(config: &CorrelationConfig, trial: usize) -> Result<Vec<TrialRecord>> {
    let core = trial_core(config, trial)?;
    let metric = GroundMetric::index_line(config.n_states);
    let k_r = gvi::reward_lipschitz(&core.rewards, 1, &metric)?;
    let k_bar = core.k_truth.min(core.k_model);
    let compounding_bounds: Vec<f64> = (1..=config.horizon)
        .map(|n| {
            lipschitz::compounding_bound(&BoundInputs {
                delta: core.delta,
                k_bar,
                k_r,
                gamma: 0.0,
                horizon: n,
            })
        })
        .collect();
    config
        .gammas
        .iter()
        .map(|&gamma| {
            let mdp = FiniteMetricMDP::new(
                core.truth.clone(),
                core.rewards.clone(),
                gamma,
                metric.clone(),
            )?;
            let v_true = gvi::mrp_value(&mdp, None)?;
            let v_model = gvi::mrp_value(&mdp, Some(&core.model))?;
            let gaps: Vec<f64> = v_true
                .iter()
                .zip(&v_model)
                .map(|(a, b)| (a - b).abs())
                .collect();
            let value_error_bound = match lipschitz::value_bound(&BoundInputs {
                delta: core.delta,
                k_bar,
                k_r,
                gamma,
                horizon: 1,
            }) {
                Ok(b) => Some(b),
                Err(Error::BoundInapplicable(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(TrialRecord {
                trial,
                gamma,
                model_error_w: core.w,
                model_error_tv: core.tv,
                model_error_kl: core.kl,
                value_error: config.aggregation.reduce(&gaps),
                value_error_max: Aggregation::Max.reduce(&gaps),
                delta: core.delta,
                k_truth: core.k_truth,
                k_model: core.k_model,
                k_r,
                value_error_bound,
                empirical_delta: core.empirical_delta.clone(),
                compounding_bounds: compounding_bounds.clone(),
            })
        })
        .collect()
}

/// Correlation summaries for one discount from the trial records at that discount.
pub fn summarize(
    gamma: f64,
    reward_mode: RewardMode,
    records: &[&TrialRecord],
) -> CorrelationSummary {
    let values: Vec<f64> = records.iter().map(|r| r.value_error).collect();
    let corr = |metric: &'static str, errors: Vec<f64>| MetricCorrelation {
        metric,
        correlation: pearson(&errors, &values),
        used: records.len(),
        excluded: 0,
    };
    let (kl_err, kl_val): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter(|r| r.model_error_kl.is_finite())
        .map(|r| (r.model_error_kl, r.value_error))
        .unzip();
    let kl = MetricCorrelation {
        metric: "kl",
        correlation: pearson(&kl_err, &kl_val),
        used: kl_err.len(),
        excluded: records.len() - kl_err.len(),
    };
    CorrelationSummary {
        gamma,
        reward_mode,
        trials: records.len(),
        wasserstein: corr(
            "wasserstein",
            records.iter().map(|r| r.model_error_w).collect(),
        ),
        total_variation: corr(
            "total_variation",
            records.iter().map(|r| r.model_error_tv).collect(),
        ),
        kl,
    }
}

/// Random-MRP study of how well each metric's model error predicts value error.
pub fn metric_correlation_study(config: &CorrelationConfig) -> Result<CorrelationStudy> {
    if config.n_trials < 30 {
        return Err(Error::InvalidArgument(format!(
            "n_trials = {} (need at least 30)",
            config.n_trials
        )));
    }
    if config.n_states < 2 {
        return Err(Error::InvalidArgument("n_states must be at least 2".into()));
    }
    if config.gammas.is_empty() || config.gammas.iter().any(|g| !(0.0..1.0).contains(g)) {
        return Err(Error::InvalidArgument(format!(
            "bad gamma list {:?}",
            config.gammas
        )));
    }
    let per_trial = (0..config.n_trials)
        .into_par_iter()
        .map(|t| trial_records(config, t))
        .collect::<Result<Vec<_>>>()?;
    let trials: Vec<TrialRecord> = per_trial.into_iter().flatten().collect();
    let summaries = config
        .gammas
        .iter()
        .map(|&gamma| {
            let at: Vec<&TrialRecord> = trials.iter().filter(|r| r.gamma == gamma).collect();
            summarize(gamma, config.reward_mode, &at)
        })
        .collect();
    Ok(CorrelationStudy {
        config: config.clone(),
        trials,
        summaries,
    })
}

/// Result of [`linear_tightness_case`].
#[derive(Debug, Clone, PartialEq)]
pub struct TightnessReport {
    pub k: f64,
    pub delta: f64,
    pub gamma: f64,
    pub k_r: f64,
    /// `|T^n(s) - T̂^n(s)|` on the real line for `n = 1..=horizon`.
    pub gaps: Vec<f64>,
    /// `Δ Σ_{i<n} K^i`.
    pub predicted_gaps: Vec<f64>,
    /// Largest `|gap - predicted|` over starts and horizons.
    pub max_gap_error: f64,
    /// Grid-snapped gaps from the middle start state.
    pub snapped_gaps: Vec<f64>,
    /// Largest `|snapped - predicted| - h Σ_{i<n} K^i` (nonpositive when the
    /// snapped dynamics stay within accumulated grid resolution).
    pub max_snap_excess: f64,
    /// `|v(0) - v̂(0)|` from the truncated series.
    pub value_gap: f64,
    /// `γ K_R Δ / ((1 - γ)(1 - γK))`.
    pub predicted_value_gap: f64,
}

/// Scalar linear dynamics `T(x) = Kx`, model `T̂(x) = Kx + Δ`, reward
/// `R(x) = K_R x`, checked against both error bounds. The grid has
/// `n_states` points spanning `[-span, span]`.
pub fn linear_tightness_case(
    k: f64,
    delta: f64,
    gamma: f64,
    k_r: f64,
    n_states: usize,
    span: f64,
    horizon: usize,
) -> Result<TightnessReport> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!(
            "gamma {gamma} is not in [0, 1)"
        )));
    }
    if gamma * k >= 1.0 {
        return Err(Error::BoundInapplicable(format!(
            "gamma * K = {} >= 1",
            gamma * k
        )));
    }
    if n_states < 2 || !(span > 0.0) {
        return Err(Error::InvalidArgument(
            "need at least 2 grid states and a positive span".into(),
        ));
    }
    let predicted = |n: usize| delta * (0..n).fold(0.0, |acc, _| acc * k + 1.0);
    let predicted_gaps: Vec<f64> = (1..=horizon).map(predicted).collect();

    let h = 2.0 * span / (n_states - 1) as f64;
    let grid: Vec<f64> = (0..n_states).map(|i| -span + h * i as f64).collect();
    let snap = |x: f64| {
        let i = ((x + span) / h).round().clamp(0.0, (n_states - 1) as f64) as usize;
        grid[i]
    };

    let mut gaps = vec![0.0; horizon];
    let mut max_gap_error: f64 = 0.0;
    for &s in &grid {
        let (mut x, mut y) = (s, s);
        for n in 1..=horizon {
            x *= k;
            y = k * y + delta;
            let gap = (x - y).abs();
            max_gap_error = max_gap_error.max((gap - predicted(n)).abs());
            if s == grid[n_states / 2] {
                gaps[n - 1] = gap;
            }
        }
    }

    let start = grid[n_states / 2];
    let (mut x, mut y) = (start, start);
    let mut snapped_gaps = Vec::with_capacity(horizon);
    let mut max_snap_excess = f64::NEG_INFINITY;
    for n in 1..=horizon {
        x = snap(k * x);
        y = snap(k * y + delta);
        let gap = (x - y).abs();
        let resolution = h * (0..n).fold(0.0, |acc, _| acc * k + 1.0);
        max_snap_excess = max_snap_excess.max((gap - predicted(n)).abs() - resolution);
        snapped_gaps.push(gap);
    }

    // v(0) = 0 since the true trajectory from 0 stays at 0; v̂(0) sums the
    // model trajectory's rewards until terms drop below machine precision.
    let mut value_true = 0.0;
    let mut value_model = 0.0;
    let (mut x, mut y) = (0.0_f64, 0.0_f64);
    let mut discount = 1.0;
    for n in 0.. {
        let term = discount * k_r * y;
        value_true += discount * k_r * x;
        value_model += term;
        x *= k;
        y = k * y + delta;
        discount *= gamma;
        if discount < 1e-300 || (n > 1 && term.abs() <= 1e-18 * value_model.abs()) {
            break;
        }
    }
    let predicted_value_gap = gamma * k_r * delta / ((1.0 - gamma) * (1.0 - gamma * k));

    Ok(TightnessReport {
        k,
        delta,
        gamma,
        k_r,
        gaps,
        predicted_gaps,
        max_gap_error,
        snapped_gaps,
        max_snap_excess,
        value_gap: (value_true - value_model).abs(),
        predicted_value_gap,
    })
}

/// One record of the GVI Lipschitz study.
#[derive(Debug, Clone, PartialEq)]
pub struct GviLipschitzRecord {
    pub instance: usize,
    pub operator: BackupOperator,
    pub gamma: f64,
    pub k_w: f64,
    pub k_r: f64,
    pub empirical: f64,
    pub bound: f64,
    pub iterations: usize,
}

/// Random metric MDPs with `γ K_W < 1`: GVI with each operator, then the
/// empirical Lipschitz constant of Q against `K_R / (1 - γ K_W)`.
pub fn gvi_lipschitz_study(
    n_instances: usize,
    n_states: usize,
    n_actions: usize,
    operators: &[BackupOperator],
    seed: u64,
) -> Result<Vec<GviLipschitzRecord>> {
    let per = (0..n_instances)
        .into_par_iter()
        .map(|i| -> Result<Vec<GviLipschitzRecord>> {
            let mut rng = derived(seed, i as u64, STREAM_TRUTH);
            let kernel = random_kernel(&mut rng, n_states, n_actions);
            let metric = if i % 2 == 0 {
                GroundMetric::index_line(n_states)
            } else {
                random_metric(&mut rng, n_states)
            };
            let rewards: Vec<f64> = (0..n_states * n_actions)
                .map(|_| rng.random_range(-1.0..=1.0))
                .collect();
            let k_w = lipschitz::kernel_wasserstein_lipschitz(&kernel, &metric)?.max;
            // Discount drawn so that γ K_W stays below 0.95.
            let gamma = rng.random_range(0.05..0.95) * (1.0 / k_w.max(1.0)).min(0.99);
            let k_r = gvi::reward_lipschitz(&rewards, n_actions, &metric)?;
            let bound = lipschitz::gvi_value_lipschitz_bound(k_r, gamma, k_w)?;
            let state_rewards = vec![0.0; n_states];
            let mdp = FiniteMetricMDP::new(kernel, state_rewards, gamma, metric.clone())?;
            operators
                .iter()
                .map(|&op| {
                    let out = gvi::gvi_run_with_rewards(&mdp, &rewards, op, GviConfig::default())?;
                    Ok(GviLipschitzRecord {
                        instance: i,
                        operator: op,
                        gamma,
                        k_w,
                        k_r,
                        empirical: gvi::empirical_q_lipschitz(&out.q, &metric)?,
                        bound,
                        iterations: out.iterations,
                    })
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per.into_iter().flatten().collect())
}
