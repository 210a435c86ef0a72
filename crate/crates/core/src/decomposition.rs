//! Decomposition of a finite stochastic kernel into a state-independent
//! distribution over deterministic maps.
//!
//! For a fixed action, let `C(s, j)` be the cumulative transition mass of
//! source `s` up to destination `j` (with `C(s, -1) = 0`), and let
//! `0 = c_0 < c_1 < ... < c_L = 1` be the distinct cumulative values across
//! all sources. Map `f_i` sends `s` to the destination `j` whose cumulative
//! interval `(C(s, j-1), C(s, j)]` contains `c_i`, and carries weight
//! `c_i - c_{i-1}`.

use crate::error::{Error, Result};
use crate::mdp::{
    check_dims, model_class_to_kernel, DeterministicModelClass, FiniteMetricMDP, GroundMetric,
    TransitionKernel,
};

/// Cumulative entries closer than this are merged into one breakpoint.
pub const BREAKPOINT_TOL: f64 = 1e-12;

/// Cumulative transition table for one action.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeTable {
    n_states: usize,
    /// `values[s * (n + 1) + k]` = mass of destinations `< k`, so column 0 is
    /// the unreachable leading state and column `n` is 1.
    values: Vec<f64>,
    pub breakpoints: Vec<f64>,
}

impl CumulativeTable {
    pub fn new(kernel: &TransitionKernel, action: usize) -> Result<Self> {
        if action >= kernel.n_actions() {
            return Err(Error::ActionOutOfRange {
                action,
                n_actions: kernel.n_actions(),
            });
        }
        let n = kernel.n_states();
        let mut values = Vec::with_capacity(n * (n + 1));
        for s in 0..n {
            let mut acc = 0.0;
            values.push(0.0);
            for (j, &p) in kernel.row(action, s).iter().enumerate() {
                acc += p;
                // The row total is 1 up to rounding; pin it.
                values.push(if j + 1 == n { 1.0 } else { acc.min(1.0) });
            }
        }
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let mut breakpoints: Vec<f64> = Vec::new();
        for v in sorted {
            match breakpoints.last() {
                Some(&last) if v - last <= BREAKPOINT_TOL => {}
                _ => breakpoints.push(v),
            }
        }
        // Merged clusters keep their first member; make the top exactly 1.
        if let Some(last) = breakpoints.last_mut() {
            *last = 1.0;
        }
        Ok(Self {
            n_states: n,
            values,
            breakpoints,
        })
    }

    #[inline]
    pub fn get(&self, source: usize, k: usize) -> f64 {
        self.values[source * (self.n_states + 1) + k]
    }

    /// Index of the breakpoint a cumulative value was merged into.
    fn snap(&self, v: f64) -> usize {
        let idx = self
            .breakpoints
            .partition_point(|&c| c < v - BREAKPOINT_TOL);
        idx.min(self.breakpoints.len() - 1)
    }
}

fn decompose_table(table: &CumulativeTable) -> (Vec<Vec<usize>>, Vec<f64>) {
    let n = table.n_states;
    let levels = table.breakpoints.len() - 1;
    let mut maps = vec![vec![0usize; n]; levels];
    for s in 0..n {
        // Snap each cumulative entry to its breakpoint index, then assign
        // every level in (idx(C(s, j-1)), idx(C(s, j))] to destination j.
        let mut prev = table.snap(table.get(s, 0));
        for j in 0..n {
            let cur = table.snap(table.get(s, j + 1));
            for level in (prev + 1)..=cur {
                maps[level - 1][s] = j;
            }
            prev = prev.max(cur);
        }
    }
    let weights = table.breakpoints.windows(2).map(|w| w[1] - w[0]).collect();
    (maps, weights)
}

/// Decomposes one action of `mdp` into a single-action model class.
pub fn decompose(mdp: &FiniteMetricMDP, action: usize) -> Result<DeterministicModelClass> {
    decompose_kernel(mdp.transitions(), action)
}

pub fn decompose_kernel(
    kernel: &TransitionKernel,
    action: usize,
) -> Result<DeterministicModelClass> {
    let table = CumulativeTable::new(kernel, action)?;
    let (maps, weights) = decompose_table(&table);
    DeterministicModelClass::new(kernel.n_states(), maps, vec![normalize(weights)])
}

/// Decomposes every action and returns the union of the per-action map sets,
/// with zero weight for maps an action does not use.
pub fn decompose_all(mdp: &FiniteMetricMDP) -> Result<DeterministicModelClass> {
    let kernel = mdp.transitions();
    let mut maps: Vec<Vec<usize>> = Vec::new();
    let mut per_action: Vec<Vec<(usize, f64)>> = Vec::new();
    for a in 0..kernel.n_actions() {
        let table = CumulativeTable::new(kernel, a)?;
        let (action_maps, weights) = decompose_table(&table);
        let weights = normalize(weights);
        let mut entries = Vec::with_capacity(action_maps.len());
        for (f, g) in action_maps.into_iter().zip(weights) {
            let idx = match maps.iter().position(|m| *m == f) {
                Some(i) => i,
                None => {
                    maps.push(f);
                    maps.len() - 1
                }
            };
            entries.push((idx, g));
        }
        per_action.push(entries);
    }
    let weights = per_action
        .into_iter()
        .map(|entries| {
            let mut w = vec![0.0; maps.len()];
            for (i, g) in entries {
                w[i] += g;
            }
            w
        })
        .collect();
    DeterministicModelClass::new(kernel.n_states(), maps, weights)
}

fn normalize(mut w: Vec<f64>) -> Vec<f64> {
    // Breakpoint gaps telescope to exactly c_L - c_0 = 1 in real arithmetic.
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        for g in &mut w {
            *g /= total;
        }
    }
    w
}

/// `max_{a,s,s'} |T(s'|s,a) - Σ_f 1(f(s)=s') g(f|a)|`.
pub fn reconstruct_and_check(
    mdp: &FiniteMetricMDP,
    model: &DeterministicModelClass,
) -> Result<f64> {
    reconstruct_kernel_and_check(mdp.transitions(), model)
}

pub fn reconstruct_kernel_and_check(
    kernel: &TransitionKernel,
    model: &DeterministicModelClass,
) -> Result<f64> {
    check_dims(kernel.n_states(), model.n_states())?;
    check_dims(kernel.n_actions(), model.n_actions())?;
    let rebuilt = model_class_to_kernel(model);
    let n = kernel.n_states();
    let mut worst: f64 = 0.0;
    for a in 0..kernel.n_actions() {
        for s in 0..n {
            for (p, q) in kernel.row(a, s).iter().zip(rebuilt.row(a, s)) {
                worst = worst.max((p - q).abs());
            }
        }
    }
    Ok(worst)
}

/// Worst Lipschitz constant over the maps of a model class.
pub fn model_class_lipschitz(
    model: &DeterministicModelClass,
    metric: &GroundMetric,
) -> Result<f64> {
    check_dims(metric.n_states(), model.n_states())?;
    let n = model.n_states();
    let mut worst: f64 = 0.0;
    for f in model.maps() {
        for s1 in 0..n {
            for s2 in (s1 + 1)..n {
                let ratio = metric.get(f[s1], f[s2]) / metric.get(s1, s2);
                worst = worst.max(ratio);
            }
        }
    }
    Ok(worst)
}
