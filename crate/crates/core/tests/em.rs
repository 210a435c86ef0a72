use lipmbrl::em::{self, EmConfig, MStepConfig, WeightConstraint};
use lipmbrl::fixtures::{supervised_data, SUPERVISED_FUNCTIONS};
use lipmbrl::lipschitz::net::{LayeredNet, Norm};
use lipmbrl::lipschitz::network_lipschitz;
use lipmbrl::rng::seeded;
use rand::Rng;

/// Central differences of the weighted loss, step `h`.
fn numeric_gradient(net: &LayeredNet, data: &[(f64, f64)], weights: &[f64], h: f64) -> Vec<f64> {
    let mut net = net.clone();
    let params = net.params();
    (0..params.len())
        .map(|k| {
            let mut p = params.clone();
            p[k] = params[k] + h;
            net.set_params(&p);
            let up = em::weighted_loss(&net, data, weights);
            p[k] = params[k] - h;
            net.set_params(&p);
            let down = em::weighted_loss(&net, data, weights);
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[test]
fn backprop_matches_finite_differences() {
    for (seed, widths) in [
        (0, vec![1, 16, 1]),
        (1, vec![1, 6, 5, 1]),
        (2, vec![1, 3, 1]),
    ] {
        let mut rng = seeded(seed);
        let mut net = LayeredNet::random(&widths, &mut rng).unwrap();
        let params: Vec<f64> = (0..net.n_params())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        net.set_params(&params);
        let data: Vec<(f64, f64)> = (0..30)
            .map(|_| (rng.random_range(-2.0..2.0), rng.random_range(-3.0..3.0)))
            .collect();
        let weights: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..1.0)).collect();
        let analytic = em::weighted_loss_gradient(&net, &data, &weights).flat();
        let numeric = numeric_gradient(&net, &data, &weights, 1e-5);
        let diff: f64 = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale: f64 = numeric.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(
            diff / scale <= 1e-4,
            "widths {widths:?}: relative error {}",
            diff / scale
        );
    }
}

fn short_config(seed: u64, constraint: WeightConstraint) -> EmConfig {
    EmConfig {
        seed,
        em_iters: 12,
        m_step: MStepConfig {
            steps: 20,
            constraint,
            ..MStepConfig::default()
        },
        ..EmConfig::default()
    }
}

#[test]
fn elbo_is_nondecreasing_on_the_five_function_domain() {
    let data = supervised_data(30, 7);
    for constraint in [
        WeightConstraint::None,
        WeightConstraint::Project {
            norm: Norm::LInf,
            cap: 1.0,
        },
        WeightConstraint::Project {
            norm: Norm::L2,
            cap: 2.0,
        },
        WeightConstraint::Clip { cap: 0.5 },
    ] {
        let fit = em::em_fit(&data, &short_config(3, constraint)).unwrap();
        for w in fit.trace.windows(2) {
            assert!(
                w[1].elbo >= w[0].elbo - 1e-6,
                "{constraint:?}: {} -> {}",
                w[0].elbo,
                w[1].elbo
            );
        }
    }
}

#[test]
fn projected_components_respect_the_cap() {
    let data = supervised_data(30, 1);
    for norm in [Norm::L1, Norm::L2, Norm::LInf] {
        let cap = 0.7;
        let fit = em::em_fit(
            &data,
            &short_config(5, WeightConstraint::Project { norm, cap }),
        )
        .unwrap();
        for net in fit.model.components() {
            let layers = net.layers().len() as i32;
            assert!(network_lipschitz(net, norm) <= cap.powi(layers) + 1e-12);
        }
    }
}

#[test]
fn seeded_traces_are_bitwise_identical() {
    let data = supervised_data(30, 2);
    let config = short_config(
        9,
        WeightConstraint::Project {
            norm: Norm::LInf,
            cap: 1.0,
        },
    );
    let a = em::em_fit(&data, &config).unwrap();
    let b = em::em_fit(&data, &config).unwrap();
    assert_eq!(a.trace, b.trace);
}

#[test]
fn single_linear_function_fits_well() {
    let data: Vec<(f64, f64)> = (0..60)
        .map(|i| {
            let x = -2.0 + 4.0 * i as f64 / 59.0;
            (x, 0.5 * x + 1.0)
        })
        .collect();
    let fit = em::em_fit(
        &data,
        &EmConfig {
            n_components: 1,
            em_iters: 20,
            ..EmConfig::default()
        },
    )
    .unwrap();
    let first = fit.trace.first().unwrap().weighted_mse;
    let last = fit.trace.last().unwrap().weighted_mse;
    assert!(last * 10.0 <= first, "{first} -> {last}");
    assert_eq!(fit.model.mixing(), &[1.0]);
}

#[test]
fn exact_truth_has_zero_loss_and_constant_zero_matches_mean_abs() {
    let grid = [0.0];
    // A one-component zero predictor against the five generators at x = 0.
    let zero = LayeredNet::random(&[1, 2, 1], &mut seeded(0))
        .map(|mut n| {
            n.set_params(&vec![0.0; n.n_params()]);
            n
        })
        .unwrap();
    let model = em::MixtureModel::new(vec![zero], vec![1.0], 0.1).unwrap();
    let loss = em::mixture_wasserstein_loss(&model, &SUPERVISED_FUNCTIONS, &grid).unwrap();
    assert!((loss - 2.2).abs() < 1e-12);
}
