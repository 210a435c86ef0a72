//! Expectation-maximization for a mixture of small regression networks with
//! a shared fixed Gaussian noise level and Lipschitz-capped weights.
//!
//! Each sample `(s, s')` is explained by one latent component `f` drawn
//! from the mixing distribution `g`, with `s' ~ N(f(s), σ²)`. The E-step
//! computes posteriors over components; the M-step sets `g` to the mean
//! posterior and runs projected gradient descent on each component's
//! posterior-weighted squared error.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lipschitz::{LayeredNet, NetGradient, Norm};
use crate::metrics::wasserstein_1d_points;
use crate::rng::seeded;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// A mixture of regressors `s ↦ f_k(s)` with weights `g_k` and noise `σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    components: Vec<LayeredNet>,
    mixing: Vec<f64>,
    sigma: f64,
}

impl MixtureModel {
    pub fn new(components: Vec<LayeredNet>, mixing: Vec<f64>, sigma: f64) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument(
                "mixture needs at least one component".into(),
            ));
        }
        if mixing.len() != components.len() {
            return Err(Error::DimensionMismatch {
                expected: components.len(),
                got: mixing.len(),
            });
        }
        if mixing.iter().any(|g| !(*g >= 0.0)) || (mixing.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!("mixing {mixing:?}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sigma {sigma} must be positive"
            )));
        }
        if components.iter().any(|c| c.n_in() != 1 || c.n_out() != 1) {
            return Err(Error::InvalidNetwork(
                "components must map scalars to scalars".into(),
            ));
        }
        Ok(Self {
            components,
            mixing,
            sigma,
        })
    }

    /// Random components of the given widths and uniform mixing.
    pub fn random<R: Rng + ?Sized>(
        n_components: usize,
        widths: &[usize],
        sigma: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let components = (0..n_components)
            .map(|_| LayeredNet::random(widths, rng))
            .collect::<Result<Vec<_>>>()?;
        let k = n_components.max(1) as f64;
        Self::new(components, vec![1.0 / k; n_components], sigma)
    }

    pub fn components(&self) -> &[LayeredNet] {
        &self.components
    }

    pub fn mixing(&self) -> &[f64] {
        &self.mixing
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    fn log_gaussian(&self, residual: f64) -> f64 {
        let z = residual / self.sigma;
        -0.5 * z * z - self.sigma.ln() - LN_SQRT_2PI
    }

    /// `log g_k + log N(s'; f_k(s), σ²)`.
    fn log_joint(&self, k: usize, s: f64, s_next: f64) -> f64 {
        let g = self.mixing[k];
        if g == 0.0 {
            return f64::NEG_INFINITY;
        }
        g.ln() + self.log_gaussian(s_next - self.components[k].eval_scalar(s))
    }

    /// Predicted next-state distribution at `s`: `{(f_k(s), g_k)}`.
    pub fn predict(&self, s: f64) -> Vec<(f64, f64)> {
        self.components
            .iter()
            .zip(&self.mixing)
            .map(|(f, &g)| (f.eval_scalar(s), g))
            .collect()
    }
}

/// Posterior `q(k | s_i, s'_i)`, row-major by sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    n_components: usize,
    q: Vec<f64>,
    /// Samples where every component had zero likelihood and the posterior
    /// fell back to uniform.
    pub degenerate: usize,
}

impl Responsibilities {
    pub fn uniform(n_samples: usize, n_components: usize) -> Self {
        Self {
            n_components,
            q: vec![1.0 / n_components as f64; n_samples * n_components],
            degenerate: 0,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if k == 0 || rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidArgument(
                "ragged or empty responsibilities".into(),
            ));
        }
        for r in rows {
            if r.iter().any(|v| !(0.0..=1.0).contains(v))
                || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9
            {
                return Err(Error::InvalidDistribution(format!(
                    "responsibility row {r:?}"
                )));
            }
        }
        Ok(Self {
            n_components: k,
            q: rows.concat(),
            degenerate: 0,
        })
    }

    #[inline]
    pub fn get(&self, sample: usize, component: usize) -> f64 {
        self.q[sample * self.n_components + component]
    }

    pub fn row(&self, sample: usize) -> &[f64] {
        &self.q[sample * self.n_components..(sample + 1) * self.n_components]
    }

    pub fn n_samples(&self) -> usize {
        self.q.len() / self.n_components
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    /// `Σ_i q(k | i)`.
    pub fn component_mass(&self, component: usize) -> f64 {
        (0..self.n_samples()).map(|i| self.get(i, component)).sum()
    }
}

/// Posterior over components for every sample, computed in log space.
pub fn e_step(model: &MixtureModel, data: &[(f64, f64)]) -> Result<Responsibilities> {
    if data.is_empty() {
        return Err(Error::Empty("training data"));
    }
    let k = model.n_components();
    let mut q = Vec::with_capacity(data.len() * k);
    let mut degenerate = 0;
    let mut logs = vec![0.0; k];
    for &(s, s_next) in data {
        for (c, l) in logs.iter_mut().enumerate() {
            *l = model.log_joint(c, s, s_next);
        }
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            degenerate += 1;
            q.extend(std::iter::repeat_n(1.0 / k as f64, k));
            continue;
        }
        let total: f64 = logs.iter().map(|l| (l - max).exp()).sum();
        q.extend(logs.iter().map(|l| (l - max).exp() / total));
    }
    Ok(Responsibilities {
        n_components: k,
        q,
        degenerate,
    })
}

/// `Σ_i Σ_k q_ik (log p(k, s_i, s'_i) - log q_ik)`. Equals the data
/// log-likelihood when `q` is the exact posterior.
pub fn elbo(model: &MixtureModel, data: &[(f64, f64)], q: &Responsibilities) -> f64 {
    let mut total = 0.0;
    for (i, &(s, s_next)) in data.iter().enumerate() {
        for c in 0..model.n_components() {
            let qi = q.get(i, c);
            if qi > 0.0 {
                total += qi * (model.log_joint(c, s, s_next) - qi.ln());
            }
        }
    }
    total
}

/// `Σ_i log Σ_k g_k N(s'_i; f_k(s_i), σ²)`.
pub fn log_likelihood(model: &MixtureModel, data: &[(f64, f64)]) -> f64 {
    data.iter()
        .map(|&(s, s_next)| {
            let logs: Vec<f64> = (0..model.n_components())
                .map(|c| model.log_joint(c, s, s_next))
                .collect();
            let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
        })
        .sum()
}

/// How component weights are kept small.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightConstraint {
    None,
    /// Scale each weight matrix so its layer constant under `norm` is `<= cap`.
    Project {
        norm: Norm,
        cap: f64,
    },
    /// Clip each weight into `[-cap, cap]`.
    Clip {
        cap: f64,
    },
}

impl WeightConstraint {
    fn apply(&self, net: &mut LayeredNet) {
        match *self {
            WeightConstraint::None => {}
            WeightConstraint::Project { norm, cap } => net.project(norm, cap),
            WeightConstraint::Clip { cap } => net.clip(cap),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            WeightConstraint::Project { cap, .. } | WeightConstraint::Clip { cap }
                if !(cap > 0.0) =>
            {
                Err(Error::InvalidArgument(format!(
                    "weight cap {cap} must be positive"
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MStepConfig {
    pub steps: usize,
    pub learn_rate: f64,
    pub constraint: WeightConstraint,
    /// Reject (by step halving) any gradient step that increases the
    /// component's weighted loss. Keeps the evidence bound monotone.
    pub monotone: bool,
}

impl Default for MStepConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            learn_rate: 0.01,
            constraint: WeightConstraint::None,
            monotone: true,
        }
    }
}

/// Posterior-weighted mean squared error of one component,
/// `Σ_i q_i (s'_i - f(s_i))² / (2 Σ_i q_i)`. Returns 0 when the component has
/// no mass.
pub fn weighted_loss(net: &LayeredNet, data: &[(f64, f64)], weights: &[f64]) -> f64 {
    let mass: f64 = weights.iter().sum();
    if mass <= 0.0 {
        return 0.0;
    }
    let sse: f64 = data
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(&(s, s_next), w)| {
            let r = net.eval_scalar(s) - s_next;
            w * r * r
        })
        .sum();
    0.5 * sse / mass
}

/// Gradient of [`weighted_loss`] by backpropagation.
pub fn weighted_loss_gradient(
    net: &LayeredNet,
    data: &[(f64, f64)],
    weights: &[f64],
) -> NetGradient {
    let mut grad = NetGradient::zeros_like(net);
    let mass: f64 = weights.iter().sum();
    if mass <= 0.0 {
        return grad;
    }
    for (&(s, s_next), &w) in data.iter().zip(weights) {
        if w > 0.0 {
            let r = net.eval_scalar(s) - s_next;
            net.accumulate_gradient(&[s], &[r], w / mass, &mut grad);
        }
    }
    grad
}

/// Projected gradient descent on one component.
fn fit_component(
    component: usize,
    net: &LayeredNet,
    data: &[(f64, f64)],
    weights: &[f64],
    config: &MStepConfig,
) -> Result<LayeredNet> {
    let mut net = net.clone();
    config.constraint.apply(&mut net);
    if weights.iter().sum::<f64>() <= 0.0 {
        return Ok(net);
    }
    let mut loss = weighted_loss(&net, data, weights);
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { component, step: 0 });
    }
    for step in 1..=config.steps {
        let grad = weighted_loss_gradient(&net, data, weights);
        let mut lr = config.learn_rate;
        let mut accepted = false;
        for _ in 0..30 {
            let mut candidate = net.clone();
            candidate.apply_gradient(&grad, lr);
            config.constraint.apply(&mut candidate);
            let cand_loss = weighted_loss(&candidate, data, weights);
            if !cand_loss.is_finite() {
                return Err(Error::NonFiniteLoss { component, step });
            }
            if !config.monotone || cand_loss <= loss {
                net = candidate;
                loss = cand_loss;
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(net)
}

/// One M-step: new mixing weights from the posterior mass, then projected
/// gradient descent on each component. Components are updated in parallel
/// and merged by index.
pub fn m_step(
    model: &MixtureModel,
    data: &[(f64, f64)],
    q: &Responsibilities,
    config: &MStepConfig,
) -> Result<MixtureModel> {
    config.constraint.validate()?;
    if q.n_samples() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            got: q.n_samples(),
        });
    }
    if q.n_components() != model.n_components() {
        return Err(Error::DimensionMismatch {
            expected: model.n_components(),
            got: q.n_components(),
        });
    }
    let n = data.len() as f64;
    let mut mixing: Vec<f64> = (0..model.n_components())
        .map(|c| q.component_mass(c) / n)
        .collect();
    let total: f64 = mixing.iter().sum();
    mixing.iter_mut().for_each(|g| *g /= total);

    let components = (0..model.n_components())
        .into_par_iter()
        .map(|c| {
            let weights: Vec<f64> = (0..data.len()).map(|i| q.get(i, c)).collect();
            fit_component(c, &model.components[c], data, &weights, config)
        })
        .collect::<Result<Vec<_>>>()?;
    MixtureModel::new(components, mixing, model.sigma)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    pub n_components: usize,
    pub widths: Vec<usize>,
    pub sigma: f64,
    pub em_iters: usize,
    pub m_step: MStepConfig,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            n_components: 5,
            widths: vec![1, 16, 1],
            sigma: 0.1,
            em_iters: 50,
            m_step: MStepConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmTraceEntry {
    pub iteration: usize,
    pub elbo: f64,
    /// Posterior-weighted squared error averaged over components and samples.
    pub weighted_mse: f64,
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: MixtureModel,
    pub trace: Vec<EmTraceEntry>,
    pub degenerate_samples: usize,
}

fn mean_weighted_mse(model: &MixtureModel, data: &[(f64, f64)], q: &Responsibilities) -> f64 {
    let mut total = 0.0;
    for (i, &(s, s_next)) in data.iter().enumerate() {
        for (c, f) in model.components.iter().enumerate() {
            let r = f.eval_scalar(s) - s_next;
            total += q.get(i, c) * r * r;
        }
    }
    total / data.len() as f64
}

/// Fits a mixture by alternating E- and M-steps. The trace holds the
/// evidence bound after each E-step, including the initial one.
pub fn em_fit(data: &[(f64, f64)], config: &EmConfig) -> Result<EmFit> {
    if config.n_components == 0 {
        return Err(Error::InvalidArgument(
            "n_components must be at least 1".into(),
        ));
    }
    if data.is_empty() {
        return Err(Error::Empty("training data"));
    }
    let mut rng = seeded(config.seed);
    let mut model =
        MixtureModel::random(config.n_components, &config.widths, config.sigma, &mut rng)?;
    for net in &mut model.components {
        config.m_step.constraint.apply(net);
    }
    em_fit_from(model, data, config)
}

/// [`em_fit`] starting from a given model.
pub fn em_fit_from(
    mut model: MixtureModel,
    data: &[(f64, f64)],
    config: &EmConfig,
) -> Result<EmFit> {
    let mut trace = Vec::with_capacity(config.em_iters + 1);
    let mut degenerate = 0;
    for iteration in 0..=config.em_iters {
        let q = e_step(&model, data)?;
        degenerate += q.degenerate;
        trace.push(EmTraceEntry {
            iteration,
            elbo: elbo(&model, data, &q),
            weighted_mse: mean_weighted_mse(&model, data, &q),
        });
        if iteration == config.em_iters {
            break;
        }
        model = m_step(&model, data, &q, &config.m_step)?;
    }
    Ok(EmFit {
        model,
        trace,
        degenerate_samples: degenerate,
    })
}

/// Mean over `test_inputs` of the 1-D Wasserstein distance between the
/// mixture's predicted distribution and the uniform distribution over the
/// true generator outputs.
pub fn mixture_wasserstein_loss(
    model: &MixtureModel,
    truth: &[fn(f64) -> f64],
    test_inputs: &[f64],
) -> Result<f64> {
    if test_inputs.is_empty() {
        return Err(Error::Empty("test inputs"));
    }
    if truth.is_empty() {
        return Err(Error::Empty("generator functions"));
    }
    let w = 1.0 / truth.len() as f64;
    let mut total = 0.0;
    for &x in test_inputs {
        let target: Vec<(f64, f64)> = truth.iter().map(|f| (f(x), w)).collect();
        total += wasserstein_1d_points(&model.predict(x), &target)?;
    }
    Ok(total / test_inputs.len() as f64)
}
