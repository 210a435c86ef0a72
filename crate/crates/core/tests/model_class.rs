#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

use lipmbrl::decomposition::{
    decompose_all, decompose_kernel, model_class_lipschitz, reconstruct_kernel_and_check,
};
use lipmbrl::lipschitz::kernel_wasserstein_lipschitz;
use lipmbrl::metrics::wasserstein_primal;
use lipmbrl::rng::{flat_dirichlet, seeded};
use lipmbrl::{
    model_class_to_kernel, push_forward, push_forward_n, Distribution, FiniteMetricMDP,
    GroundMetric, TransitionKernel,
};
use proptest::prelude::*;
use rand::Rng;

fn kernel(seed: u64, n: usize, actions: usize, grid: bool) -> TransitionKernel {
    let mut rng = seeded(seed);
    let tensor = (0..actions)
        .map(|_| {
            (0..n)
                .map(|_| {
                    if grid {
                        // Quarter masses make cumulative values collide.
                        let mut row = vec![0.0; n];
                        for _ in 0..4 {
                            row[rng.random_range(0..n)] += 0.25;
                        }
                        row
                    } else {
                        flat_dirichlet(&mut rng, n)
                    }
                })
                .collect()
        })
        .collect();
    TransitionKernel::from_nested(tensor).unwrap()
}

fn dist(seed: u64, n: usize) -> Distribution {
    Distribution::with_tolerance(flat_dirichlet(&mut seeded(seed), n), 1e-12).unwrap()
}

/// Distribution of `f_k ∘ … ∘ f_1 (s)` with `s ~ μ0` and each `f_i` drawn
/// independently from `g`, by summing over every map sequence.
fn map_sequence_distribution(
    maps: &[Vec<usize>],
    g: &[f64],
    mu0: &[f64],
    steps: usize,
) -> Vec<f64> {
    let n = mu0.len();
    let mut out = vec![0.0; n];
    let m = maps.len();
    let total = m.pow(steps as u32);
    for code in 0..total {
        let mut seq = Vec::with_capacity(steps);
        let mut c = code;
        let mut weight = 1.0;
        for _ in 0..steps {
            seq.push(c % m);
            weight *= g[c % m];
            c /= m;
        }
        if weight == 0.0 {
            continue;
        }
        for (s, &p) in mu0.iter().enumerate() {
            let end = seq.iter().fold(s, |x, &f| maps[f][x]);
            out[end] += p * weight;
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decomposition_reconstructs_the_kernel(seed in any::<u64>(), n in 1usize..10, actions in 1usize..4, grid in any::<bool>()) {
        let k = kernel(seed, n, actions, grid);
        for a in 0..actions {
            let class = decompose_kernel(&k, a).unwrap();
            prop_assert!(reconstruct_kernel_and_check(&k.action(a).unwrap(), &class).unwrap() <= 1e-12);
            // At most one map per cumulative level.
            prop_assert!(class.maps().len() <= n * n + 1);
        }
        let mdp = FiniteMetricMDP::new(k.clone(), vec![0.0; n], 0.5, GroundMetric::index_line(n)).unwrap();
        let all = decompose_all(&mdp).unwrap();
        let rebuilt = model_class_to_kernel(&all);
        for a in 0..actions {
            for s in 0..n {
                for t in 0..n {
                    prop_assert!((rebuilt.get(a, s, t) - k.get(a, s, t)).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn push_forward_preserves_mass_and_is_linear(seed in any::<u64>(), n in 2usize..10, alpha in 0.0f64..=1.0) {
        let k = kernel(seed, n, 2, false);
        let (mu, nu) = (dist(seed ^ 1, n), dist(seed ^ 2, n));
        let out = push_forward(&k, &mu, 1).unwrap();
        prop_assert!((out.mass().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(out.mass().iter().all(|&p| p >= 0.0));
        let mixed = push_forward(&k, &mu.mix(&nu, alpha).unwrap(), 1).unwrap();
        let separate = push_forward(&k, &nu, 1).unwrap();
        for i in 0..n {
            let expect = alpha * out.mass()[i] + (1.0 - alpha) * separate.mass()[i];
            prop_assert!((mixed.mass()[i] - expect).abs() <= 1e-12);
        }
    }

    #[test]
    fn map_sequences_match_iterated_push_forward(seed in any::<u64>(), n in 2usize..5, steps in 1usize..4) {
        let k = kernel(seed, n, 1, seed % 2 == 0);
        let class = decompose_kernel(&k, 0).unwrap();
        let mu0 = dist(seed ^ 3, n);
        let brute = map_sequence_distribution(class.maps(), &class.weights()[0], mu0.mass(), steps);
        let iterated = push_forward_n(&k, &mu0, &vec![0; steps]).unwrap();
        for i in 0..n {
            prop_assert!((brute[i] - iterated.mass()[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn class_constant_is_invariant_to_metric_scaling(seed in any::<u64>(), n in 2usize..8, factor in 0.1f64..10.0) {
        let k = kernel(seed, n, 1, false);
        let class = decompose_kernel(&k, 0).unwrap();
        let metric = GroundMetric::index_line(n);
        let base = model_class_lipschitz(&class, &metric).unwrap();
        let scaled = model_class_lipschitz(&class, &metric.scaled(factor)).unwrap();
        prop_assert!((base - scaled).abs() <= 1e-9 * base.max(1.0));
    }

    #[test]
    fn distribution_ratios_never_exceed_the_dirac_constant(seed in any::<u64>(), n in 2usize..9) {
        let k = kernel(seed, n, 1, false);
        let mut rng = seeded(seed ^ 7);
        let mut w = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = rng.random_range(0.2..2.0);
                w[i][j] = v;
                w[j][i] = v;
            }
        }
        let metric = GroundMetric::shortest_path_closure(&w).unwrap();
        let constant = kernel_wasserstein_lipschitz(&k, &metric).unwrap().max;
        let (mu, nu) = (dist(seed ^ 4, n), dist(seed ^ 5, n));
        let before = wasserstein_primal(&mu, &nu, &metric).unwrap().0;
        let after = wasserstein_primal(&push_forward(&k, &mu, 0).unwrap(), &push_forward(&k, &nu, 0).unwrap(), &metric).unwrap().0;
        prop_assert!(after <= constant * before + 1e-10);
    }

    #[test]
    fn class_kernel_constant_never_exceeds_the_class_constant(seed in any::<u64>(), n in 2usize..8) {
        let k = kernel(seed, n, 1, seed % 3 == 0);
        let class = decompose_kernel(&k, 0).unwrap();
        let metric = GroundMetric::index_line(n);
        let k_f = model_class_lipschitz(&class, &metric).unwrap();
        let k_t = kernel_wasserstein_lipschitz(&model_class_to_kernel(&class), &metric).unwrap().max;
        prop_assert!(k_t <= k_f + 1e-10);
    }
}
