//! Probability metrics on finite metric spaces.
//!
//! | Function | Quantity |
//! |----------|----------|
//! | [`wasserstein_primal`] | `min_j Σ j(i,k) d(i,k)` over couplings, transportation simplex |
//! | [`wasserstein_dual`] | `max_f Σ f (μ1 - μ2)` over 1-Lipschitz `f`, min-cost flow potentials |
//! | [`wasserstein_1d`] | closed form `Σ |F1 - F2| Δx` on a sorted line support |
//! | [`total_variation`] | `½ Σ |μ1 - μ2|` |
//! | [`kl_divergence`] | `Σ μ1 ln(μ1 / μ2)`, `+∞` off the support of `μ2` |
//!
//! The two Wasserstein routes share no code beyond the cost lookup, so
//! comparing them is a genuine strong-duality check.

mod flow;
mod transport;

use crate::error::{Error, Result};
use crate::mdp::{check_dims, Distribution, GroundMetric};

/// Optimal coupling of two distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    n: usize,
    joint: Vec<f64>,
    pub cost: f64,
}

impl Coupling {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.joint[i * self.n + j]
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn row_marginal(&self) -> Vec<f64> {
        self.joint.chunks(self.n).map(|r| r.iter().sum()).collect()
    }

    pub fn col_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for row in self.joint.chunks(self.n) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }
}

/// A Kantorovich potential and its dual objective.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPotential {
    pub values: Vec<f64>,
    pub objective: f64,
}

impl DualPotential {
    /// Largest violation of `|f(i) - f(j)| <= d(i, j)`; nonpositive when feasible.
    pub fn max_lipschitz_violation(&self, metric: &GroundMetric) -> f64 {
        let n = self.values.len();
        let mut worst = f64::NEG_INFINITY;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let v = (self.values[i] - self.values[j]).abs() - metric.get(i, j);
                    worst = worst.max(v);
                }
            }
        }
        worst
    }
}

fn check_pair(mu1: &Distribution, mu2: &Distribution, metric: &GroundMetric) -> Result<()> {
    check_dims(metric.n_states(), mu1.len())?;
    check_dims(metric.n_states(), mu2.len())?;
    for mu in [mu1, mu2] {
        let total: f64 = mu.mass().iter().sum();
        if (total - 1.0).abs() > crate::mdp::ARITH_TOL {
            return Err(Error::InvalidDistribution(format!(
                "mass sums to {total}, not 1"
            )));
        }
    }
    Ok(())
}

/// Wasserstein distance by the primal transportation LP. Zero-mass states are
/// dropped before solving and reinserted as empty rows/columns.
pub fn wasserstein_primal(
    mu1: &Distribution,
    mu2: &Distribution,
    metric: &GroundMetric,
) -> Result<(f64, Coupling)> {
    check_pair(mu1, mu2, metric)?;
    let plan = transport::solve(mu1.mass(), mu2.mass(), |i, j| metric.get(i, j));
    let n = metric.n_states();
    let mut joint = vec![0.0; n * n];
    let width = plan.cols.len();
    for (r, &i) in plan.rows.iter().enumerate() {
        for (c, &j) in plan.cols.iter().enumerate() {
            joint[i * n + j] = plan.flow[r * width + c];
        }
    }
    let cost = plan.cost.max(0.0);
    Ok((cost, Coupling { n, joint, cost }))
}

/// Number of simplex pivots used by the primal solver; exposed for
/// diagnostics.
pub fn wasserstein_primal_pivots(
    mu1: &Distribution,
    mu2: &Distribution,
    metric: &GroundMetric,
) -> Result<usize> {
    check_pair(mu1, mu2, metric)?;
    Ok(transport::solve(mu1.mass(), mu2.mass(), |i, j| metric.get(i, j)).pivots)
}

/// Wasserstein distance by the Kantorovich-Rubinstein dual.
pub fn wasserstein_dual(
    mu1: &Distribution,
    mu2: &Distribution,
    metric: &GroundMetric,
) -> Result<(f64, DualPotential)> {
    check_pair(mu1, mu2, metric)?;
    let balance: Vec<f64> = mu1
        .mass()
        .iter()
        .zip(mu2.mass())
        .map(|(a, b)| a - b)
        .collect();
    let sol = flow::solve(&balance, |i, j| metric.get(i, j));
    // Anchor the potential so its minimum is zero; the objective is
    // shift-invariant because the balance sums to zero.
    let shift = sol
        .potential
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let values: Vec<f64> = sol.potential.iter().map(|p| shift - p).collect();
    let objective: f64 = values.iter().zip(&balance).map(|(f, b)| f * b).sum();
    debug_assert!((objective - sol.cost).abs() < 1e-6 * (1.0 + sol.cost));
    Ok((objective, DualPotential { values, objective }))
}

/// Closed-form Wasserstein distance on a sorted line support.
pub fn wasserstein_1d(support: &[f64], mu1: &[f64], mu2: &[f64]) -> Result<f64> {
    check_dims(support.len(), mu1.len())?;
    check_dims(support.len(), mu2.len())?;
    if support.is_empty() {
        return Err(Error::Empty("support"));
    }
    if let Some(k) = support.windows(2).position(|w| !(w[0] <= w[1])) {
        return Err(Error::UnsortedSupport(k + 1));
    }
    let (mut c1, mut c2, mut total) = (0.0, 0.0, 0.0);
    for k in 0..support.len() - 1 {
        c1 += mu1[k];
        c2 += mu2[k];
        total += (c1 - c2).abs() * (support[k + 1] - support[k]);
    }
    Ok(total)
}

/// Wasserstein distance between two weighted point sets on the real line,
/// given as `(location, mass)` pairs with arbitrary supports.
pub fn wasserstein_1d_points(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("point set"));
    }
    let mut events: Vec<(f64, f64, f64)> = a
        .iter()
        .map(|&(x, w)| (x, w, 0.0))
        .chain(b.iter().map(|&(x, w)| (x, 0.0, w)))
        .collect();
    if events.iter().any(|e| !e.0.is_finite()) {
        return Err(Error::InvalidArgument("non-finite support point".into()));
    }
    events.sort_by(|p, q| p.0.total_cmp(&q.0));
    let support: Vec<f64> = events.iter().map(|e| e.0).collect();
    let m1: Vec<f64> = events.iter().map(|e| e.1).collect();
    let m2: Vec<f64> = events.iter().map(|e| e.2).collect();
    wasserstein_1d(&support, &m1, &m2)
}

/// `½ Σ |μ1 - μ2|`.
pub fn total_variation(mu1: &Distribution, mu2: &Distribution) -> Result<f64> {
    check_dims(mu1.len(), mu2.len())?;
    let tv = 0.5
        * mu1
            .mass()
            .iter()
            .zip(mu2.mass())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    Ok(tv.min(1.0))
}

/// `KL(μ1 ‖ μ2)`, returning `+∞` when `μ1` puts mass where `μ2` has none.
pub fn kl_divergence(mu1: &Distribution, mu2: &Distribution) -> Result<f64> {
    check_dims(mu1.len(), mu2.len())?;
    let mut total = 0.0;
    for (&p, &q) in mu1.mass().iter().zip(mu2.mass()) {
        if p == 0.0 {
            continue;
        }
        if q == 0.0 {
            return Ok(f64::INFINITY);
        }
        total += p * (p / q).ln();
    }
    Ok(total.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(v: Vec<f64>) -> Distribution {
        Distribution::new(v).unwrap()
    }

    #[test]
    fn primal_identical_is_zero() {
        let m = GroundMetric::index_line(4);
        let mu = d(vec![0.1, 0.2, 0.3, 0.4]);
        let (w, coupling) = wasserstein_primal(&mu, &mu, &m).unwrap();
        assert!(w.abs() < 1e-15);
        for i in 0..4 {
            assert!((coupling.get(i, i) - mu.mass()[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn primal_dirac_pair_is_ground_distance() {
        let m = GroundMetric::index_line(5);
        let (w, _) =
            wasserstein_primal(&Distribution::dirac(5, 1), &Distribution::dirac(5, 4), &m).unwrap();
        assert_eq!(w, 3.0);
    }

    #[test]
    fn shifted_constants_example() {
        // Support points -2, -0.5, 0.5, 2.
        let m = GroundMetric::line(&[-2.0, -0.5, 0.5, 2.0]);
        let mu1 = d(vec![0.5, 0.0, 0.0, 0.5]);
        let mu2 = d(vec![0.0, 0.5, 0.5, 0.0]);
        let (w, _) = wasserstein_primal(&mu1, &mu2, &m).unwrap();
        assert!((w - 1.5).abs() < 1e-12);
        let (wd, _) = wasserstein_dual(&mu1, &mu2, &m).unwrap();
        assert!((wd - 1.5).abs() < 1e-12);
        assert_eq!(total_variation(&mu1, &mu2).unwrap(), 1.0);
        assert_eq!(kl_divergence(&mu1, &mu2).unwrap(), f64::INFINITY);
    }

    #[test]
    fn dual_examples() {
        let m = GroundMetric::index_line(4);
        let mu = d(vec![0.25; 4]);
        let (w, pot) = wasserstein_dual(&mu, &mu, &m).unwrap();
        assert!(w.abs() < 1e-15);
        assert!(pot.values.iter().all(|v| (v - pot.values[0]).abs() < 1e-15));

        let (w, pot) =
            wasserstein_dual(&Distribution::dirac(4, 0), &Distribution::dirac(4, 3), &m).unwrap();
        assert!((w - 3.0).abs() < 1e-15);
        assert!(pot.max_lipschitz_violation(&m) <= 1e-12);
        // f(s) = s (up to sign and shift) is the optimal potential.
        let slope = pot.values[0] - pot.values[3];
        assert!((slope - 3.0).abs() < 1e-12);
    }

    #[test]
    fn one_d_examples() {
        let x = [0.0, 1.0, 2.0, 4.0];
        let p = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(wasserstein_1d(&x, &p, &p).unwrap(), 0.0);
        let a = [0.0, 1.0, 0.0, 0.0];
        let b = [0.0, 0.0, 0.0, 1.0];
        assert_eq!(wasserstein_1d(&x, &a, &b).unwrap(), 3.0);
        assert!(matches!(
            wasserstein_1d(&[0.0, 2.0, 1.0], &[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]),
            Err(Error::UnsortedSupport(2))
        ));
        let w = wasserstein_1d_points(&[(1.0, 1.0)], &[(4.0, 1.0)]).unwrap();
        assert_eq!(w, 3.0);
    }

    #[test]
    fn tv_examples() {
        assert_eq!(
            total_variation(&Distribution::dirac(3, 0), &Distribution::dirac(3, 2)).unwrap(),
            1.0
        );
        let mu = d(vec![0.3, 0.7]);
        assert_eq!(total_variation(&mu, &mu).unwrap(), 0.0);
        let tv = total_variation(&mu, &d(vec![0.6, 0.4])).unwrap();
        assert!((tv - 0.3).abs() < 1e-15);
        assert!(total_variation(&mu, &Distribution::uniform(3)).is_err());
    }

    #[test]
    fn kl_examples() {
        assert_eq!(
            kl_divergence(&Distribution::dirac(2, 0), &Distribution::dirac(2, 1)).unwrap(),
            f64::INFINITY
        );
        let mu = d(vec![0.5, 0.5]);
        assert_eq!(kl_divergence(&mu, &mu).unwrap(), 0.0);
        let kl = kl_divergence(&mu, &d(vec![0.25, 0.75])).unwrap();
        // 0.5 ln 2 + 0.5 ln(2/3) = 0.5 ln(4/3)
        assert!((kl - 0.143_841_036_225_890_2).abs() < 1e-12);
        assert!(kl_divergence(&mu, &Distribution::uniform(3)).is_err());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let m = GroundMetric::index_line(3);
        let err = wasserstein_primal(&Distribution::uniform(2), &Distribution::uniform(2), &m);
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }
}
