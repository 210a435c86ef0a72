#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

use lipmbrl::experiments::{compounding_study, linear_tightness_case, random_mrp, RewardMode};
use lipmbrl::gvi::{self, BackupOperator, GviConfig};
use lipmbrl::lipschitz::{compounding_bound, value_bound, BoundInputs};
use lipmbrl::rng::{flat_dirichlet, seeded};
use lipmbrl::{Distribution, Error, FiniteMetricMDP, GroundMetric, TransitionKernel};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn tightness_examples() {
    let r = linear_tightness_case(1.0, 0.1, 0.5, 1.0, 101, 5.0, 3).unwrap();
    assert!((r.gaps[2] - 0.3).abs() < 1e-12);

    let r = linear_tightness_case(0.7, 0.0, 0.9, 1.0, 101, 5.0, 5).unwrap();
    assert!(r.gaps.iter().all(|&g| g == 0.0));
    assert_eq!(r.value_gap, 0.0);

    let r = linear_tightness_case(0.5, 0.1, 0.9, 1.0, 101, 5.0, 10).unwrap();
    let formula = 0.9 * 0.1 / (0.1 * 0.55);
    assert!((r.predicted_value_gap - formula).abs() < 1e-15);
    assert!(
        (r.value_gap - formula).abs() < 1e-9,
        "{} vs {formula}",
        r.value_gap
    );

    assert!(matches!(
        linear_tightness_case(2.0, 0.1, 0.6, 1.0, 11, 1.0, 3),
        Err(Error::BoundInapplicable(_))
    ));
}

#[test]
fn value_gap_matches_an_independent_series() {
    // Σ_n γ^n K_R y_n with y_n = Δ Σ_{i<n} K^i, summed far past convergence.
    for (k, delta, gamma) in [(0.5, 0.2, 0.9), (1.0, 0.05, 0.5), (1.5, 0.1, 0.6)] {
        let mut y: f64 = 0.0;
        let mut series = 0.0;
        let mut disc = 1.0;
        for _ in 0..600 {
            series += disc * y;
            y = k * y + delta;
            disc *= gamma;
        }
        let r = linear_tightness_case(k, delta, gamma, 1.0, 11, 1.0, 2).unwrap();
        assert!((r.value_gap - series).abs() < 1e-9 * series.max(1.0));
    }
}

#[test]
fn identical_model_has_zero_compounding_error() {
    let mdp = random_mrp(6, RewardMode::Index, 0.9, 3).unwrap();
    let t = mdp.transitions();
    let mu0 = Distribution::uniform(6);
    let report = compounding_study(t, t, mdp.metric(), &mu0, &[0; 5]).unwrap();
    assert_eq!(report.delta, 0.0);
    assert!(report.steps.iter().all(|s| s.delta_n <= 1e-15));
}

#[test]
fn first_step_error_is_at_most_delta() {
    for seed in 0..20 {
        let a = random_mrp(7, RewardMode::Index, 0.9, seed).unwrap();
        let b = random_mrp(7, RewardMode::Index, 0.9, seed + 100).unwrap();
        let mu0 =
            Distribution::with_tolerance(flat_dirichlet(&mut seeded(seed), 7), 1e-12).unwrap();
        let r =
            compounding_study(a.transitions(), b.transitions(), a.metric(), &mu0, &[0; 4]).unwrap();
        assert!(r.steps[0].delta_n <= r.delta + 1e-12);
        let (b_excess, r_excess) = r.worst_excess();
        assert!(b_excess <= 1e-9 && r_excess <= 1e-9);
    }
}

#[test]
fn index_rewards_have_unit_lipschitz_constant() {
    let mdp = random_mrp(10, RewardMode::Index, 0.9, 0).unwrap();
    assert_eq!(
        mdp.rewards(),
        (0..10).map(|s| s as f64).collect::<Vec<_>>().as_slice()
    );
    assert_eq!(
        gvi::reward_lipschitz(mdp.rewards(), 1, mdp.metric()).unwrap(),
        1.0
    );
}

#[test]
fn bounds_handle_the_unit_constant_and_inapplicable_cases() {
    let base = BoundInputs {
        delta: 0.1,
        k_bar: 1.0,
        k_r: 1.0,
        gamma: 0.9,
        horizon: 7,
    };
    assert!((compounding_bound(&base) - 0.7).abs() < 1e-15);
    let v = value_bound(&base).unwrap();
    assert!((v - 0.9 * 0.1 / (0.1 * 0.1)).abs() < 1e-9);
    assert!(matches!(
        value_bound(&BoundInputs { k_bar: 1.2, ..base }),
        Err(Error::BoundInapplicable(_))
    ));
}

fn random_mdp(seed: u64, n: usize, actions: usize, gamma: f64) -> (FiniteMetricMDP, Vec<f64>) {
    let mut rng = seeded(seed);
    let tensor = (0..actions)
        .map(|_| (0..n).map(|_| flat_dirichlet(&mut rng, n)).collect())
        .collect();
    let kernel = TransitionKernel::from_nested(tensor).unwrap();
    let rewards: Vec<f64> = (0..n * actions)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let mdp =
        FiniteMetricMDP::new(kernel, vec![0.0; n], gamma, GroundMetric::index_line(n)).unwrap();
    (mdp, rewards)
}

/// One synchronous backup computed directly from the definition.
fn backup(mdp: &FiniteMetricMDP, rewards: &[f64], op: &BackupOperator, q: &[f64]) -> Vec<f64> {
    let (n, m) = (mdp.n_states(), mdp.n_actions());
    let v: Vec<f64> = (0..n)
        .map(|s| op.apply(&q[s * m..(s + 1) * m]).unwrap())
        .collect();
    let mut out = vec![0.0; n * m];
    for s in 0..n {
        for a in 0..m {
            let ev: f64 = (0..n).map(|t| mdp.transitions().get(a, s, t) * v[t]).sum();
            out[s * m + a] = rewards[s * m + a] + mdp.discount() * ev;
        }
    }
    out
}

#[test]
fn gvi_output_is_a_fixed_point_and_backups_contract() {
    for (seed, op) in [
        (1, BackupOperator::Max),
        (2, BackupOperator::Mean),
        (3, BackupOperator::EpsGreedy(0.1)),
        (4, BackupOperator::Mellowmax(5.0)),
    ] {
        let (mdp, rewards) = random_mdp(seed, 6, 3, 0.8);
        let out = gvi::gvi_run_with_rewards(&mdp, &rewards, op, GviConfig::default()).unwrap();
        let q = out.q.values().to_vec();
        let again = backup(&mdp, &rewards, &op, &q);
        let gap = q
            .iter()
            .zip(&again)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(gap < 1e-9, "{op}: fixed-point residual {gap}");

        let mut rng = seeded(seed + 50);
        for _ in 0..20 {
            let q1: Vec<f64> = (0..18).map(|_| rng.random_range(-5.0..5.0)).collect();
            let q2: Vec<f64> = (0..18).map(|_| rng.random_range(-5.0..5.0)).collect();
            let before = q1
                .iter()
                .zip(&q2)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let b1 = backup(&mdp, &rewards, &op, &q1);
            let b2 = backup(&mdp, &rewards, &op, &q2);
            let after = b1
                .iter()
                .zip(&b2)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(after <= 0.8 * before + 1e-12);
        }
    }
}

#[test]
fn mrp_value_matches_the_discounted_series() {
    for seed in 0..5 {
        let mdp = random_mrp(8, RewardMode::Uniform, 0.9, seed).unwrap();
        let exact = gvi::mrp_value(&mdp, None).unwrap();
        let t = mdp.transitions();
        let mut dist: Vec<Vec<f64>> = (0..8)
            .map(|s| (0..8).map(|j| if j == s { 1.0 } else { 0.0 }).collect())
            .collect();
        let mut series = [0.0; 8];
        let mut disc = 1.0;
        for _ in 0..600 {
            for s in 0..8 {
                series[s] += disc
                    * dist[s]
                        .iter()
                        .zip(mdp.rewards())
                        .map(|(p, r)| p * r)
                        .sum::<f64>();
                let next: Vec<f64> = (0..8)
                    .map(|j| (0..8).map(|i| dist[s][i] * t.get(0, i, j)).sum())
                    .collect();
                dist[s] = next;
            }
            disc *= 0.9;
        }
        for s in 0..8 {
            assert!(
                (exact[s] - series[s]).abs() < 1e-9,
                "state {s}: {} vs {}",
                exact[s],
                series[s]
            );
        }
    }
}

proptest! {
    #[test]
    fn mean_mellowmax_max_ordering(row in proptest::collection::vec(-20.0f64..20.0, 1..8), beta in 0.01f64..20.0) {
        let mean = BackupOperator::Mean.apply(&row).unwrap();
        let mm = BackupOperator::Mellowmax(beta).apply(&row).unwrap();
        let max = BackupOperator::Max.apply(&row).unwrap();
        prop_assert!(mean <= mm + 1e-9);
        prop_assert!(mm <= max + 1e-9);
    }

    #[test]
    fn boltzmann_stays_within_the_row_range(row in proptest::collection::vec(-20.0f64..20.0, 1..8), beta in 0.0f64..20.0) {
        let b = BackupOperator::Boltzmann(beta).apply(&row).unwrap();
        let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(b >= lo - 1e-9 && b <= hi + 1e-9);
    }
}
