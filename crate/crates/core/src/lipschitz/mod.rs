//! Lipschitz constants and the error bounds built from them.
//!
//! Kernel constants are measured in Wasserstein distance over Dirac input
//! pairs, which on a finite space equals the supremum over all input
//! distributions: gluing an optimal coupling of `(μ1, μ2)` with optimal
//! couplings of the output rows gives
//! `W(μ1 T, μ2 T) <= Σ j(s1,s2) W(T(s1), T(s2)) <= K W(μ1, μ2)`.

pub mod net;

use rand::Rng;

use crate::error::{Error, Result};
use crate::gvi::BackupOperator;
use crate::mdp::{check_dims, GroundMetric, TransitionKernel};
use crate::metrics::wasserstein_primal;

pub use net::{Activation, Layer, LayerOp, LayeredNet, Matrix, NetGradient, Norm};

/// Wasserstein Lipschitz constant of a kernel, per action and overall.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelConstant {
    pub per_action: Vec<f64>,
    pub max: f64,
}

/// `max_a max_{s1≠s2} W(T(·|s1,a), T(·|s2,a)) / d(s1,s2)`.
pub fn kernel_wasserstein_lipschitz(
    kernel: &TransitionKernel,
    metric: &GroundMetric,
) -> Result<KernelConstant> {
    check_dims(metric.n_states(), kernel.n_states())?;
    let n = kernel.n_states();
    let mut per_action = Vec::with_capacity(kernel.n_actions());
    for a in 0..kernel.n_actions() {
        let mut worst: f64 = 0.0;
        for s1 in 0..n {
            for s2 in (s1 + 1)..n {
                let (w, _) = wasserstein_primal(
                    &kernel.row_distribution(a, s1),
                    &kernel.row_distribution(a, s2),
                    metric,
                )?;
                worst = worst.max(w / metric.get(s1, s2));
            }
        }
        per_action.push(worst);
    }
    let max = per_action.iter().copied().fold(0.0, f64::max);
    Ok(KernelConstant { per_action, max })
}

/// Upper bound on the constant of a composition: the product of the parts.
/// The empty composition is the identity.
pub fn compose_constants(constants: &[f64]) -> f64 {
    constants.iter().product()
}

pub fn layer_lipschitz(layer: &Layer, norm: Norm) -> f64 {
    let parts: Vec<f64> = layer.ops().iter().map(|op| op.lipschitz(norm)).collect();
    compose_constants(&parts)
}

pub fn network_lipschitz(net: &LayeredNet, norm: Norm) -> f64 {
    let parts: Vec<f64> = net
        .layers()
        .iter()
        .map(|l| layer_lipschitz(l, norm))
        .collect();
    compose_constants(&parts)
}

/// Constant the sampled ratios of `op` are checked against: 1 for the
/// non-expansions, `sqrt|A| + β V_max |A|` for Boltzmann softmax.
pub fn operator_constant(op: &BackupOperator, n_actions: usize, v_max: f64) -> f64 {
    match *op {
        BackupOperator::Boltzmann(beta) => {
            let a = n_actions as f64;
            a.sqrt() + beta * v_max * a
        }
        _ => 1.0,
    }
}

/// Result of [`operator_constant_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorCheck {
    pub max_ratio: f64,
    pub constant: f64,
    pub v_max: f64,
    pub pairs: usize,
}

impl OperatorCheck {
    pub fn holds(&self, slack: f64) -> bool {
        self.max_ratio <= self.constant + slack
    }
}

/// `max |op(x1) - op(x2)| / ‖x1 - x2‖_∞` over the sampled pairs. `v_max`
/// defaults to the largest absolute entry among the samples.
pub fn operator_constant_check(
    op: &BackupOperator,
    samples: &[(Vec<f64>, Vec<f64>)],
    v_max: Option<f64>,
) -> Result<OperatorCheck> {
    op.validate()?;
    let dim = samples
        .first()
        .ok_or(Error::Empty("operator samples"))?
        .0
        .len();
    if dim == 0 {
        return Err(Error::Empty("operator sample vector"));
    }
    let mut max_ratio: f64 = 0.0;
    let mut observed_vmax: f64 = 0.0;
    for (x1, x2) in samples {
        check_dims(dim, x1.len())?;
        check_dims(dim, x2.len())?;
        let gap = x1
            .iter()
            .zip(x2)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        observed_vmax = x1
            .iter()
            .chain(x2)
            .fold(observed_vmax, |m, v| m.max(v.abs()));
        if gap == 0.0 {
            continue;
        }
        let diff = (op.apply(x1)? - op.apply(x2)?).abs();
        max_ratio = max_ratio.max(diff / gap);
    }
    let v_max = v_max.unwrap_or(observed_vmax);
    Ok(OperatorCheck {
        max_ratio,
        constant: operator_constant(op, dim, v_max),
        v_max,
        pairs: samples.len(),
    })
}

/// Random vector pairs with entries in `[-v_max, v_max]`. Every other pair
/// is a small perturbation of its first vector so local slopes are probed.
pub fn sample_vector_pairs<R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    count: usize,
    v_max: f64,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..count)
        .map(|k| {
            let x1: Vec<f64> = (0..dim).map(|_| rng.random_range(-v_max..=v_max)).collect();
            let x2 = if k % 2 == 0 {
                (0..dim).map(|_| rng.random_range(-v_max..=v_max)).collect()
            } else {
                let eps = 1e-3 * v_max;
                x1.iter()
                    .map(|v| (v + rng.random_range(-eps..=eps)).clamp(-v_max, v_max))
                    .collect()
            };
            (x1, x2)
        })
        .collect()
}

/// Inputs to the compounding-error and value-error bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    /// One-step Wasserstein model error.
    pub delta: f64,
    /// `min{K_F, K_T}`.
    pub k_bar: f64,
    /// Reward Lipschitz constant.
    pub k_r: f64,
    pub gamma: f64,
    pub horizon: usize,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0 && self.k_bar >= 0.0 && self.k_r >= 0.0) {
            return Err(Error::InvalidArgument(
                "delta, k_bar and k_r must be nonnegative".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidArgument(format!(
                "gamma {} is not in [0, 1)",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// `Δ Σ_{i<n} K̄^i`, the bound on the n-step Wasserstein prediction error.
pub fn compounding_bound(inputs: &BoundInputs) -> f64 {
    let n = inputs.horizon;
    let k = inputs.k_bar;
    if inputs.delta == 0.0 {
        return 0.0;
    }
    let sum = if k == 1.0 {
        n as f64
    } else {
        // Horner form of the partial geometric sum keeps small-n cases exact.
        (0..n).fold(0.0, |acc, _| acc * k + 1.0)
    };
    inputs.delta * sum
}

/// `γ K_R Δ / ((1 - γ)(1 - γ K̄))`; errors when `γ K̄ >= 1`.
pub fn value_bound(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let g = inputs.gamma;
    if g * inputs.k_bar >= 1.0 {
        return Err(Error::BoundInapplicable(format!(
            "gamma * k_bar = {} >= 1",
            g * inputs.k_bar
        )));
    }
    Ok(g * inputs.k_r * inputs.delta / ((1.0 - g) * (1.0 - g * inputs.k_bar)))
}

/// `K_R / (1 - γ K_W)`, the Lipschitz bound on values computed by GVI with a
/// non-expansion operator; errors when `γ K_W >= 1`.
pub fn gvi_value_lipschitz_bound(k_r: f64, gamma: f64, k_w: f64) -> Result<f64> {
    if gamma * k_w >= 1.0 {
        return Err(Error::BoundInapplicable(format!(
            "gamma * k_w = {} >= 1",
            gamma * k_w
        )));
    }
    Ok(k_r / (1.0 - gamma * k_w))
}

/// Largest difference quotient `|g(x_i) - g(x_j)| / |x_i - x_j|` of a
/// function sampled on a 1-D grid.
pub fn empirical_lipschitz_1d(xs: &[f64], ys: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..xs.len() {
        for j in (i + 1)..xs.len() {
            let dx = (xs[i] - xs[j]).abs();
            if dx > 0.0 {
                worst = worst.max((ys[i] - ys[j]).abs() / dx);
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::TransitionKernel;
    use crate::rng::seeded;

    #[test]
    fn kernel_constant_examples() {
        let metric = GroundMetric::index_line(4);
        let id = TransitionKernel::identity(2, 4);
        let k = kernel_wasserstein_lipschitz(&id, &metric).unwrap();
        assert_eq!(k.per_action, vec![1.0, 1.0]);
        let row = vec![0.1, 0.2, 0.3, 0.4];
        let constant = TransitionKernel::from_matrix(vec![row; 4]).unwrap();
        assert!(
            kernel_wasserstein_lipschitz(&constant, &metric)
                .unwrap()
                .max
                < 1e-15
        );
    }

    #[test]
    fn compose_examples() {
        assert_eq!(compose_constants(&[1.0, 1.0, 1.0]), 1.0);
        assert_eq!(compose_constants(&[2.0, 3.0]), 6.0);
        assert_eq!(compose_constants(&[]), 1.0);
    }

    #[test]
    fn layer_table_examples() {
        let w = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(w.lipschitz(Norm::LInf), 7.0);
        assert_eq!(w.lipschitz(Norm::L1), 6.0);
        assert!((w.lipschitz(Norm::L2) - 30f64.sqrt()).abs() < 1e-15);
        assert_eq!(Matrix::identity(3).lipschitz(Norm::LInf), 1.0);
        for norm in [Norm::L1, Norm::L2, Norm::LInf] {
            assert_eq!(LayerOp::AddBias(vec![5.0, -3.0]).lipschitz(norm), 1.0);
            assert_eq!(LayerOp::Relu.lipschitz(norm), 1.0);
        }
        assert!(matches!(
            "3".parse::<Norm>(),
            Err(Error::UnsupportedNorm(_))
        ));
    }

    #[test]
    fn network_constant_is_product() {
        let l1 = Layer::new(
            Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap(),
            vec![0.0, 1.0],
            Activation::Relu,
        )
        .unwrap();
        let l2 = Layer::new(
            Matrix::from_rows(&[vec![1.0, -1.0]]).unwrap(),
            vec![0.5],
            Activation::Identity,
        )
        .unwrap();
        let net = LayeredNet::new(vec![l1, l2]).unwrap();
        assert_eq!(network_lipschitz(&net, Norm::LInf), 14.0);

        let id = Layer::new(Matrix::identity(2), vec![0.0; 2], Activation::Identity).unwrap();
        let net = LayeredNet::new(vec![id.clone(), id.clone(), id]).unwrap();
        assert_eq!(network_lipschitz(&net, Norm::LInf), 1.0);
        // The Frobenius form charges an identity sqrt(n).
        assert!((network_lipschitz(&net, Norm::L2) - 2f64.powf(1.5)).abs() < 1e-12);
    }

    #[test]
    fn operator_check_examples() {
        let pair = vec![(vec![1.0, 2.0], vec![1.0, 3.0])];
        let check = operator_constant_check(&BackupOperator::Max, &pair, None).unwrap();
        assert_eq!(check.max_ratio, 1.0);
        assert!(check.holds(1e-9));

        let mut rng = seeded(11);
        let pairs = sample_vector_pairs(&mut rng, 3, 2000, 1.0);
        let check =
            operator_constant_check(&BackupOperator::Boltzmann(2.0), &pairs, Some(1.0)).unwrap();
        assert!((check.constant - (3f64.sqrt() + 6.0)).abs() < 1e-15);
        assert!(check.holds(1e-9));

        assert!(operator_constant_check(&BackupOperator::Max, &[], None).is_err());
        let ragged = vec![(vec![1.0, 2.0], vec![1.0])];
        assert!(operator_constant_check(&BackupOperator::Max, &ragged, None).is_err());
    }

    #[test]
    fn bound_examples() {
        let b = |delta, k_bar, horizon| BoundInputs {
            delta,
            k_bar,
            k_r: 1.0,
            gamma: 0.5,
            horizon,
        };
        assert_eq!(compounding_bound(&b(0.0, 3.0, 7)), 0.0);
        assert!((compounding_bound(&b(0.1, 1.0, 5)) - 0.5).abs() < 1e-15);
        assert!((compounding_bound(&b(0.1, 2.0, 3)) - 0.7).abs() < 1e-15);

        assert_eq!(value_bound(&b(0.0, 1.0, 1)).unwrap(), 0.0);
        let v = value_bound(&BoundInputs {
            delta: 0.2,
            k_bar: 1.0,
            k_r: 1.0,
            gamma: 0.5,
            horizon: 1,
        })
        .unwrap();
        assert!((v - 0.4).abs() < 1e-15);
        let err = value_bound(&BoundInputs {
            delta: 0.2,
            k_bar: 2.0,
            k_r: 1.0,
            gamma: 0.9,
            horizon: 1,
        });
        assert!(matches!(err, Err(Error::BoundInapplicable(_))));

        assert_eq!(gvi_value_lipschitz_bound(1.0, 0.0, 123.0).unwrap(), 1.0);
        assert!((gvi_value_lipschitz_bound(1.0, 0.9, 1.0).unwrap() - 10.0).abs() < 1e-12);
        assert!(gvi_value_lipschitz_bound(1.0, 0.5, 2.0).is_err());
    }
}
