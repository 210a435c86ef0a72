//! Generalized value iteration with pluggable backup operators, exact MRP
//! evaluation, and empirical Lipschitz measurement of value functions.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mdp::{check_dims, FiniteMetricMDP, GroundMetric, TransitionKernel};

/// Backup operator applied to a row `Q(s', ·)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BackupOperator {
    Max,
    Mean,
    /// `(1 - ε) max + ε mean`.
    EpsGreedy(f64),
    /// `log(mean e^{βx}) / β`.
    Mellowmax(f64),
    /// `Σ x e^{βx} / Σ e^{βx}`.
    Boltzmann(f64),
}

impl BackupOperator {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BackupOperator::EpsGreedy(eps) if !(0.0..=1.0).contains(&eps) => Err(
                Error::InvalidArgument(format!("epsilon {eps} is not in [0, 1]")),
            ),
            BackupOperator::Mellowmax(beta) | BackupOperator::Boltzmann(beta)
                if !(beta > 0.0 && beta.is_finite()) =>
            {
                Err(Error::InvalidArgument(format!(
                    "beta {beta} must be positive"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Whether the operator is a non-expansion in the sup norm.
    pub fn is_non_expansion(&self) -> bool {
        !matches!(self, BackupOperator::Boltzmann(_))
    }

    /// Builds an operator from a kind name and an optional ε/β parameter.
    pub fn from_parts(kind: &str, param: Option<f64>) -> Result<Self> {
        let need = |name: &str| {
            param
                .ok_or_else(|| Error::InvalidArgument(format!("operator {name} needs a parameter")))
        };
        let op = match kind.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "max" => BackupOperator::Max,
            "mean" => BackupOperator::Mean,
            "eps_greedy" | "epsilon_greedy" => BackupOperator::EpsGreedy(need("eps_greedy")?),
            "mellowmax" | "mm" => BackupOperator::Mellowmax(need("mellowmax")?),
            "boltzmann" | "boltz" => BackupOperator::Boltzmann(need("boltzmann")?),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown operator {other:?}"
                )));
            }
        };
        op.validate()?;
        Ok(op)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            BackupOperator::Max => "max",
            BackupOperator::Mean => "mean",
            BackupOperator::EpsGreedy(_) => "eps_greedy",
            BackupOperator::Mellowmax(_) => "mellowmax",
            BackupOperator::Boltzmann(_) => "boltzmann",
        }
    }

    pub fn param(&self) -> Option<f64> {
        match *self {
            BackupOperator::Max | BackupOperator::Mean => None,
            BackupOperator::EpsGreedy(p)
            | BackupOperator::Mellowmax(p)
            | BackupOperator::Boltzmann(p) => Some(p),
        }
    }

    /// Applies the operator to a nonempty row. Exponentials are shifted by
    /// the row maximum.
    pub fn apply(&self, row: &[f64]) -> Result<f64> {
        if row.is_empty() {
            return Err(Error::Empty("backup row"));
        }
        Ok(self.apply_unchecked(row))
    }

    pub(crate) fn apply_unchecked(&self, row: &[f64]) -> f64 {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = || row.iter().sum::<f64>() / row.len() as f64;
        match *self {
            BackupOperator::Max => max,
            BackupOperator::Mean => mean(),
            BackupOperator::EpsGreedy(eps) => (1.0 - eps) * max + eps * mean(),
            BackupOperator::Mellowmax(beta) => {
                let s: f64 = row.iter().map(|x| (beta * (x - max)).exp()).sum();
                max + (s / row.len() as f64).ln() / beta
            }
            BackupOperator::Boltzmann(beta) => {
                let (mut num, mut den) = (0.0, 0.0);
                for &x in row {
                    let w = (beta * (x - max)).exp();
                    num += x * w;
                    den += w;
                }
                num / den
            }
        }
    }
}

impl fmt::Display for BackupOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.param() {
            Some(p) => write!(f, "{}({p})", self.kind()),
            None => f.write_str(self.kind()),
        }
    }
}

impl FromStr for BackupOperator {
    type Err = Error;

    /// Accepts `max`, `mean`, `eps_greedy:0.1`, `mellowmax:5`, `boltzmann:2`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some((kind, p)) => {
                let p: f64 = p.trim().parse().map_err(|_| {
                    Error::InvalidArgument(format!("bad operator parameter in {s:?}"))
                })?;
                Self::from_parts(kind, Some(p))
            }
            None => Self::from_parts(s, None),
        }
    }
}

/// Applies `op` to `row`.
pub fn backup_apply(op: &BackupOperator, row: &[f64]) -> Result<f64> {
    op.apply(row)
}

/// Action values `Q(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QFunction {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QFunction {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
        }
    }

    pub fn from_values(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(n_states * n_actions, values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "Q contains non-finite values".into(),
            ));
        }
        Ok(Self {
            n_states,
            n_actions,
            values,
        })
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    /// Every update in a sweep reads the previous iterate.
    Synchronous,
    /// Updates are written back immediately (Gauss-Seidel).
    InPlace,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GviConfig {
    pub tolerance: f64,
    pub max_iters: usize,
    pub sweep: SweepMode,
}

impl Default for GviConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iters: 100_000,
            sweep: SweepMode::Synchronous,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GviOutcome {
    pub q: QFunction,
    pub iterations: usize,
    pub residual: f64,
    /// Max-abs change per sweep.
    pub residuals: Vec<f64>,
}

/// Broadcasts state rewards to an `(s, a)` matrix.
pub fn broadcast_rewards(rewards: &[f64], n_actions: usize) -> Vec<f64> {
    rewards
        .iter()
        .flat_map(|&r| std::iter::repeat_n(r, n_actions))
        .collect()
}

/// Runs GVI with the MDP's state rewards broadcast over actions.
pub fn gvi_run(mdp: &FiniteMetricMDP, op: BackupOperator, config: GviConfig) -> Result<GviOutcome> {
    let rewards = broadcast_rewards(mdp.rewards(), mdp.n_actions());
    gvi_run_with_rewards(mdp, &rewards, op, config)
}

/// Runs GVI with an explicit reward matrix `rewards[s * n_actions + a]`.
pub fn gvi_run_with_rewards(
    mdp: &FiniteMetricMDP,
    rewards: &[f64],
    op: BackupOperator,
    config: GviConfig,
) -> Result<GviOutcome> {
    op.validate()?;
    if !(config.tolerance > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let n = mdp.n_states();
    let na = mdp.n_actions();
    check_dims(n * na, rewards.len())?;
    let kernel = mdp.transitions();
    let gamma = mdp.discount();

    let mut q = QFunction::zeros(n, na);
    let mut backed = vec![0.0; n];
    let mut residuals = Vec::new();
    for iter in 1..=config.max_iters {
        let mut residual: f64 = 0.0;
        match config.sweep {
            SweepMode::Synchronous => {
                for (s, b) in backed.iter_mut().enumerate() {
                    *b = op.apply_unchecked(q.row(s));
                }
                let mut next = vec![0.0; n * na];
                for s in 0..n {
                    for a in 0..na {
                        let exp: f64 = kernel
                            .row(a, s)
                            .iter()
                            .zip(&backed)
                            .map(|(p, v)| p * v)
                            .sum();
                        let v = rewards[s * na + a] + gamma * exp;
                        residual = residual.max((v - q.get(s, a)).abs());
                        next[s * na + a] = v;
                    }
                }
                q.values = next;
            }
            SweepMode::InPlace => {
                for s in 0..n {
                    for a in 0..na {
                        let exp: f64 = kernel
                            .row(a, s)
                            .iter()
                            .enumerate()
                            .filter(|(_, p)| **p != 0.0)
                            .map(|(t, p)| p * op.apply_unchecked(q.row(t)))
                            .sum();
                        let v = rewards[s * na + a] + gamma * exp;
                        residual = residual.max((v - q.get(s, a)).abs());
                        q.values[s * na + a] = v;
                    }
                }
            }
        }
        residuals.push(residual);
        if !residual.is_finite() {
            break;
        }
        if residual < config.tolerance {
            return Ok(GviOutcome {
                q,
                iterations: iter,
                residual,
                residuals,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: residuals.len(),
        residual: residuals.last().copied().unwrap_or(f64::NAN),
    })
}

/// Exact MRP values `V = (I - γT)⁻¹ R`. Uses `kernel` in place of the MDP's
/// own transitions when given; either way it must have a single action.
pub fn mrp_value(mdp: &FiniteMetricMDP, kernel: Option<&TransitionKernel>) -> Result<Vec<f64>> {
    let kernel = kernel.unwrap_or(mdp.transitions());
    check_dims(mdp.n_states(), kernel.n_states())?;
    if kernel.n_actions() != 1 {
        return Err(Error::InvalidArgument(format!(
            "mrp_value needs a single-action kernel, got {} actions",
            kernel.n_actions()
        )));
    }
    let n = mdp.n_states();
    let gamma = mdp.discount();
    let a = DMatrix::from_fn(n, n, |s, t| {
        let id = if s == t { 1.0 } else { 0.0 };
        id - gamma * kernel.get(0, s, t)
    });
    let r = DVector::from_column_slice(mdp.rewards());
    let v = a.clone().lu().solve(&r).ok_or(Error::Singular)?;
    let residual = (&a * &v - &r).amax();
    let scale = 1.0 + r.amax() / (1.0 - gamma);
    if !(residual < 1e-10 * scale) {
        return Err(Error::Singular);
    }
    Ok(v.iter().copied().collect())
}

/// `max_a max_{s1≠s2} |Q(s1,a) - Q(s2,a)| / d(s1,s2)`.
pub fn empirical_q_lipschitz(q: &QFunction, metric: &GroundMetric) -> Result<f64> {
    check_dims(metric.n_states(), q.n_states())?;
    let mut worst: f64 = 0.0;
    for a in 0..q.n_actions() {
        for s1 in 0..q.n_states() {
            for s2 in (s1 + 1)..q.n_states() {
                worst = worst.max((q.get(s1, a) - q.get(s2, a)).abs() / metric.get(s1, s2));
            }
        }
    }
    Ok(worst)
}

/// Uniform-over-actions reward constant of a `(s, a)` reward matrix.
pub fn reward_lipschitz(rewards: &[f64], n_actions: usize, metric: &GroundMetric) -> Result<f64> {
    let q = QFunction::from_values(metric.n_states(), n_actions, rewards.to_vec())?;
    empirical_q_lipschitz(&q, metric)
}
