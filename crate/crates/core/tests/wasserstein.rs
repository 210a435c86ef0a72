#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

use lipmbrl::metrics::{total_variation, wasserstein_1d, wasserstein_dual, wasserstein_primal};
use lipmbrl::rng::{flat_dirichlet, seeded};
use lipmbrl::{Distribution, GroundMetric};
use proptest::prelude::*;
use rand::Rng;

/// Solves the square system `a x = b` by Gaussian elimination with partial
/// pivoting; `None` when singular.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if n < k {
        return vec![];
    }
    let mut out = subsets(n - 1, k);
    for mut s in subsets(n - 1, k - 1) {
        s.push(n - 1);
        out.push(s);
    }
    out
}

/// Minimum transport cost over every basic solution of the transportation
/// polytope: choose `2n - 1` cells, solve the marginal equations (dropping
/// one redundant column equation) and keep the feasible ones.
fn vertex_enumeration(a: &[f64], b: &[f64], d: &GroundMetric) -> f64 {
    let n = a.len();
    let m = 2 * n - 1;
    let mut best = f64::INFINITY;
    for cells in subsets(n * n, m) {
        let mut rows = Vec::with_capacity(m);
        let mut rhs = Vec::with_capacity(m);
        for i in 0..n {
            rows.push(
                cells
                    .iter()
                    .map(|&c| if c / n == i { 1.0 } else { 0.0 })
                    .collect(),
            );
            rhs.push(a[i]);
        }
        for j in 0..n - 1 {
            rows.push(
                cells
                    .iter()
                    .map(|&c| if c % n == j { 1.0 } else { 0.0 })
                    .collect(),
            );
            rhs.push(b[j]);
        }
        if let Some(x) = solve(rows, rhs) {
            if x.iter().all(|&v| v >= -1e-12) {
                let cost: f64 = cells
                    .iter()
                    .zip(&x)
                    .map(|(&c, &v)| v * d.get(c / n, c % n))
                    .sum();
                best = best.min(cost);
            }
        }
    }
    best
}

fn random_metric(rng: &mut impl Rng, n: usize) -> GroundMetric {
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = rng.random_range(0.1..3.0);
            w[i][j] = v;
            w[j][i] = v;
        }
    }
    GroundMetric::shortest_path_closure(&w).unwrap()
}

fn dist(rng: &mut impl Rng, n: usize) -> Distribution {
    Distribution::with_tolerance(flat_dirichlet(rng, n), 1e-12).unwrap()
}

#[test]
fn primal_and_dual_match_vertex_enumeration_on_small_supports() {
    let mut rng = seeded(11);
    for case in 0..60 {
        let n = if case % 2 == 0 { 3 } else { 4 };
        let metric = random_metric(&mut rng, n);
        let (a, b) = (dist(&mut rng, n), dist(&mut rng, n));
        let oracle = vertex_enumeration(a.mass(), b.mass(), &metric);
        let (p, coupling) = wasserstein_primal(&a, &b, &metric).unwrap();
        let (d, potential) = wasserstein_dual(&a, &b, &metric).unwrap();
        assert!(
            (p - oracle).abs() < 1e-10,
            "case {case}: primal {p} vs oracle {oracle}"
        );
        assert!(
            (d - oracle).abs() < 1e-10,
            "case {case}: dual {d} vs oracle {oracle}"
        );
        for (x, y) in coupling.row_marginal().iter().zip(a.mass()) {
            assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in coupling.col_marginal().iter().zip(b.mass()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(potential.max_lipschitz_violation(&metric) <= 1e-12);
    }
}

#[test]
fn shifted_constants_follow_the_closed_form() {
    // W between ±c1 and ±c2 halves is |c1 - c2|.
    for (c1, c2) in [(2.0, 0.5), (1.0, 3.0), (0.25, 0.75)] {
        let (support, a, b, metric) = lipmbrl::fixtures::shifted_constants(c1, c2);
        let (w, _) = wasserstein_primal(&a, &b, &metric).unwrap();
        assert!((w - f64::abs(c1 - c2)).abs() < 1e-12);
        let w1 = wasserstein_1d(&support, a.mass(), b.mass()).unwrap();
        assert!((w1 - f64::abs(c1 - c2)).abs() < 1e-12);
    }
}

fn arb_case() -> impl Strategy<Value = (u64, usize)> {
    (any::<u64>(), 2usize..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wasserstein_is_a_metric_on_distributions((seed, n) in arb_case()) {
        let mut rng = seeded(seed);
        let metric = random_metric(&mut rng, n);
        let (a, b, c) = (dist(&mut rng, n), dist(&mut rng, n), dist(&mut rng, n));
        let w = |x: &Distribution, y: &Distribution| wasserstein_primal(x, y, &metric).unwrap().0;
        prop_assert!(w(&a, &a) <= 1e-12);
        prop_assert!((w(&a, &b) - w(&b, &a)).abs() <= 1e-10);
        prop_assert!(w(&a, &c) <= w(&a, &b) + w(&b, &c) + 1e-10);
    }

    #[test]
    fn wasserstein_is_sandwiched_by_total_variation((seed, n) in arb_case()) {
        let mut rng = seeded(seed);
        let metric = random_metric(&mut rng, n);
        let (a, b) = (dist(&mut rng, n), dist(&mut rng, n));
        let w = wasserstein_primal(&a, &b, &metric).unwrap().0;
        let tv = total_variation(&a, &b).unwrap();
        let min_d = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| metric.get(i, j))
            .fold(f64::INFINITY, f64::min);
        prop_assert!(w <= metric.diameter() * tv + 1e-10);
        prop_assert!(w >= min_d * tv - 1e-10);
    }

    #[test]
    fn primal_equals_dual((seed, n) in (any::<u64>(), 2usize..30)) {
        let mut rng = seeded(seed);
        let metric = random_metric(&mut rng, n);
        let (a, b) = (dist(&mut rng, n), dist(&mut rng, n));
        let p = wasserstein_primal(&a, &b, &metric).unwrap().0;
        let d = wasserstein_dual(&a, &b, &metric).unwrap().0;
        prop_assert!((p - d).abs() <= 1e-9);
    }

    #[test]
    fn metric_scaling_scales_the_distance((seed, n) in arb_case(), factor in 0.1f64..10.0) {
        let mut rng = seeded(seed);
        let metric = random_metric(&mut rng, n);
        let (a, b) = (dist(&mut rng, n), dist(&mut rng, n));
        let w = wasserstein_primal(&a, &b, &metric).unwrap().0;
        let ws = wasserstein_primal(&a, &b, &metric.scaled(factor)).unwrap().0;
        prop_assert!((ws - factor * w).abs() <= 1e-9 * (1.0 + ws));
    }
}
