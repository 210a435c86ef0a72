//! Built-in fixtures: the obstacle gridworld with its four-direction model
//! class, the shifted-constants pair, and the five-function regression domain.

use rand::Rng;

use crate::mdp::{
    model_class_to_kernel, DeterministicModelClass, Distribution, FiniteMetricMDP, GroundMetric,
};
use crate::rng::seeded;

pub const GRID_WIDTH: i64 = 4;
pub const GRID_HEIGHT: i64 = 3;
pub const GRID_OBSTACLE: (i64, i64) = (1, 1);

/// Direction order used for both maps and actions.
pub const DIRECTIONS: [&str; 4] = ["up", "right", "down", "left"];
const STEPS: [(i64, i64); 4] = [(0, 1), (1, 0), (0, -1), (-1, 0)];

/// Open cells of the 4x3 grid in row-major order, `(x, y)` with `y` up.
pub fn grid_cells() -> Vec<(i64, i64)> {
    let mut cells = Vec::new();
    for y in 0..GRID_HEIGHT {
        for x in 0..GRID_WIDTH {
            if (x, y) != GRID_OBSTACLE {
                cells.push((x, y));
            }
        }
    }
    cells
}

/// The four deterministic "move in direction, stay put if blocked" maps and
/// action-conditioned weights: 0.8 for the intended direction, 0.1 for each
/// perpendicular one, 0 for the opposite.
pub fn gridworld_model_class() -> DeterministicModelClass {
    let cells = grid_cells();
    let index = |c: (i64, i64)| cells.iter().position(|&d| d == c);
    let maps: Vec<Vec<usize>> = STEPS
        .iter()
        .map(|&(dx, dy)| {
            cells
                .iter()
                .enumerate()
                .map(|(s, &(x, y))| index((x + dx, y + dy)).unwrap_or(s))
                .collect()
        })
        .collect();
    let weights = (0..4)
        .map(|a| {
            (0..4)
                .map(|f| match (f + 4 - a) % 4 {
                    0 => 0.8,
                    1 | 3 => 0.1,
                    _ => 0.0,
                })
                .collect()
        })
        .collect();
    DeterministicModelClass::new(cells.len(), maps, weights).expect("gridworld class is valid")
}

pub fn gridworld_metric() -> GroundMetric {
    GroundMetric::manhattan(&grid_cells())
}

/// Gridworld MDP: +1 in the top-right cell, -1 just below it, -0.04 elsewhere.
pub fn gridworld(discount: f64) -> FiniteMetricMDP {
    let cells = grid_cells();
    let rewards = cells
        .iter()
        .map(|&c| match c {
            (3, 2) => 1.0,
            (3, 1) => -1.0,
            _ => -0.04,
        })
        .collect();
    FiniteMetricMDP::new(
        model_class_to_kernel(&gridworld_model_class()),
        rewards,
        discount,
        gridworld_metric(),
    )
    .expect("gridworld is valid")
}

/// Two-point distributions `½δ(-c1) + ½δ(c1)` and `½δ(-c2) + ½δ(c2)` on the
/// shared sorted support, with its line metric.
pub fn shifted_constants(c1: f64, c2: f64) -> (Vec<f64>, Distribution, Distribution, GroundMetric) {
    let mut support = vec![-c1, c1, -c2, c2];
    support.sort_by(f64::total_cmp);
    support.dedup();
    let mass = |c: f64| {
        let v = support
            .iter()
            .map(|&x| {
                if x == -c || x == c {
                    if c == 0.0 {
                        1.0
                    } else {
                        0.5
                    }
                } else {
                    0.0
                }
            })
            .collect();
        Distribution::new(v).expect("two-point distribution")
    };
    let (a, b) = (mass(c1), mass(c2));
    let metric = GroundMetric::line(&support);
    (support, a, b, metric)
}

fn f0(x: f64) -> f64 {
    x.tanh() + 3.0
}
fn f1(x: f64) -> f64 {
    x * x
}
fn f2(x: f64) -> f64 {
    x.sin() - 5.0
}
fn f3(x: f64) -> f64 {
    x.sin() - 3.0
}
fn f4(x: f64) -> f64 {
    x.sin() * x.sin()
}

/// Generators of the five-function regression domain.
pub const SUPERVISED_FUNCTIONS: [fn(f64) -> f64; 5] = [f0, f1, f2, f3, f4];
pub const SUPERVISED_SAMPLES_PER_FUNCTION: usize = 30;
pub const SUPERVISED_RANGE: (f64, f64) = (-2.0, 2.0);

/// `samples_per_function` noise-free pairs `(x, f(x))` per generator, with
/// `x` uniform on `[-2, 2]`.
pub fn supervised_data(samples_per_function: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = seeded(seed);
    let (lo, hi) = SUPERVISED_RANGE;
    let mut data = Vec::with_capacity(samples_per_function * SUPERVISED_FUNCTIONS.len());
    for f in SUPERVISED_FUNCTIONS {
        for _ in 0..samples_per_function {
            let x = rng.random_range(lo..=hi);
            data.push((x, f(x)));
        }
    }
    data
}

/// Evenly spaced test inputs over `[-2, 2]`.
pub fn supervised_test_grid(points: usize) -> Vec<f64> {
    let (lo, hi) = SUPERVISED_RANGE;
    if points == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}
