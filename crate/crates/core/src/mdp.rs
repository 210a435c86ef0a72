//! Finite metric MDPs, state distributions and deterministic model classes.
//!
//! States and actions are plain indices. The transition tensor is stored
//! flat in `(action, source, destination)` order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for probability invariants checked on construction.
pub const PROB_TOL: f64 = 1e-12;
/// Absolute tolerance for probability invariants after arithmetic chains.
pub const ARITH_TOL: f64 = 1e-9;

/// A probability vector over states.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    mass: Vec<f64>,
}

impl Distribution {
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(mass, PROB_TOL)
    }

    /// Like [`Distribution::new`] but with a caller-chosen normalization
    /// tolerance, for vectors that come out of arithmetic.
    pub fn with_tolerance(mass: Vec<f64>, tol: f64) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::Empty("distribution"));
        }
        if let Some(i) = mass.iter().position(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "entry {i} is negative or non-finite ({})",
                mass[i]
            )));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > tol {
            return Err(Error::InvalidDistribution(format!(
                "mass sums to {total}, not 1"
            )));
        }
        Ok(Self { mass })
    }

    pub(crate) fn from_vec_unchecked(mass: Vec<f64>) -> Self {
        Self { mass }
    }

    pub fn dirac(n: usize, state: usize) -> Self {
        let mut mass = vec![0.0; n];
        mass[state] = 1.0;
        Self { mass }
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            mass: vec![1.0 / n as f64; n],
        }
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    /// Convex combination `alpha * self + (1 - alpha) * other`.
    pub fn mix(&self, other: &Self, alpha: f64) -> Result<Self> {
        check_dims(self.len(), other.len())?;
        let mass = self
            .mass
            .iter()
            .zip(&other.mass)
            .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
            .collect();
        Ok(Self { mass })
    }
}

pub(crate) fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Ground metric on a finite state space, stored as a dense symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundMetric {
    n: usize,
    d: Vec<f64>,
}

impl GroundMetric {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let violations = metric_violations(&rows);
        if !violations.is_empty() {
            return Err(Error::InvalidMetric(violations.join("; ")));
        }
        let n = rows.len();
        Ok(Self {
            n,
            d: rows.into_iter().flatten().collect(),
        })
    }

    /// `d(i, j) = |x_i - x_j|` for the given points.
    pub fn line(points: &[f64]) -> Self {
        let n = points.len();
        let mut d = Vec::with_capacity(n * n);
        for &a in points {
            for &b in points {
                d.push((a - b).abs());
            }
        }
        Self { n, d }
    }

    /// `d(i, j) = |i - j|`.
    pub fn index_line(n: usize) -> Self {
        let points: Vec<f64> = (0..n).map(|i| i as f64).collect();
        Self::line(&points)
    }

    /// Manhattan distance between integer grid cells.
    pub fn manhattan(cells: &[(i64, i64)]) -> Self {
        let n = cells.len();
        let mut d = Vec::with_capacity(n * n);
        for &(x1, y1) in cells {
            for &(x2, y2) in cells {
                d.push(((x1 - x2).abs() + (y1 - y2).abs()) as f64);
            }
        }
        Self { n, d }
    }

    /// Shortest-path metric of a complete graph with symmetric positive edge
    /// weights. `weights[i][j]` for `i != j` must be positive.
    pub fn shortest_path_closure(weights: &[Vec<f64>]) -> Result<Self> {
        let n = weights.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            if weights[i].len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: weights[i].len(),
                });
            }
            for j in 0..n {
                if i != j {
                    let w = weights[i][j].min(weights[j][i]);
                    if !(w > 0.0) {
                        return Err(Error::InvalidMetric(format!(
                            "edge weight ({i},{j}) must be positive"
                        )));
                    }
                    d[i * n + j] = w;
                }
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = d[i * n + k] + d[k * n + j];
                    if via < d[i * n + j] {
                        d[i * n + j] = via;
                    }
                }
            }
        }
        // Symmetrize exactly so rounding in the relaxation order cannot
        // leave d(i,j) and d(j,i) a few ulps apart.
        for i in 0..n {
            for j in (i + 1)..n {
                let v = d[i * n + j].min(d[j * n + i]);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        Ok(Self { n, d })
    }

    /// Multiplies every distance by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n: self.n,
            d: self.d.iter().map(|v| v * factor).collect(),
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn diameter(&self) -> f64 {
        self.d.iter().copied().fold(0.0, f64::max)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.d.chunks(self.n).map(<[f64]>::to_vec).collect()
    }
}

/// Lists every violated metric axiom in `rows`.
pub fn metric_violations(rows: &[Vec<f64>]) -> Vec<String> {
    let n = rows.len();
    let mut out = Vec::new();
    if n == 0 {
        out.push("metric is empty".to_string());
        return out;
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            out.push(format!(
                "metric row {i} has length {} (expected {n})",
                row.len()
            ));
        }
    }
    if !out.is_empty() {
        return out;
    }
    let scale = rows
        .iter()
        .flatten()
        .copied()
        .filter(|v| v.is_finite())
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let tol = PROB_TOL * (1.0 + scale);
    for i in 0..n {
        if rows[i][i] != 0.0 {
            out.push(format!("metric d({i},{i}) = {} is not zero", rows[i][i]));
        }
        for j in 0..n {
            let v = rows[i][j];
            if !v.is_finite() || v < 0.0 {
                out.push(format!("metric d({i},{j}) = {v} is negative or non-finite"));
            }
            if i != j && v == 0.0 {
                out.push(format!("metric d({i},{j}) = 0 for distinct states"));
            }
            if j > i && (v - rows[j][i]).abs() > tol {
                out.push(format!(
                    "metric not symmetric: d({i},{j}) = {v} but d({j},{i}) = {}",
                    rows[j][i]
                ));
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if rows[i][k] > rows[i][j] + rows[j][k] + tol {
                    out.push(format!(
                        "triangle inequality violated: d({i},{k}) = {} > d({i},{j}) + d({j},{k}) = {}",
                        rows[i][k],
                        rows[i][j] + rows[j][k]
                    ));
                }
            }
        }
    }
    out
}

/// Row-stochastic transition tensor `T(s' | s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    n_actions: usize,
    n_states: usize,
    p: Vec<f64>,
}

impl TransitionKernel {
    /// Builds a kernel from `tensor[action][source][destination]`.
    pub fn from_nested(tensor: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let violations = kernel_violations(&tensor);
        if !violations.is_empty() {
            return Err(Error::InvalidMdp(violations));
        }
        let n_actions = tensor.len();
        let n_states = tensor[0].len();
        Ok(Self {
            n_actions,
            n_states,
            p: tensor.into_iter().flatten().flatten().collect(),
        })
    }

    /// Single-action kernel from a row-stochastic matrix.
    pub fn from_matrix(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_nested(vec![rows])
    }

    pub(crate) fn from_flat_unchecked(n_actions: usize, n_states: usize, p: Vec<f64>) -> Self {
        debug_assert_eq!(p.len(), n_actions * n_states * n_states);
        Self {
            n_actions,
            n_states,
            p,
        }
    }

    pub fn identity(n_actions: usize, n_states: usize) -> Self {
        let mut p = vec![0.0; n_actions * n_states * n_states];
        for a in 0..n_actions {
            for s in 0..n_states {
                p[(a * n_states + s) * n_states + s] = 1.0;
            }
        }
        Self::from_flat_unchecked(n_actions, n_states, p)
    }

    #[inline]
    pub fn get(&self, action: usize, source: usize, dest: usize) -> f64 {
        self.p[(action * self.n_states + source) * self.n_states + dest]
    }

    #[inline]
    pub fn row(&self, action: usize, source: usize) -> &[f64] {
        let start = (action * self.n_states + source) * self.n_states;
        &self.p[start..start + self.n_states]
    }

    pub fn row_distribution(&self, action: usize, source: usize) -> Distribution {
        Distribution::from_vec_unchecked(self.row(action, source).to_vec())
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.n_actions)
            .map(|a| {
                (0..self.n_states)
                    .map(|s| self.row(a, s).to_vec())
                    .collect()
            })
            .collect()
    }

    /// Kernel restricted to a single action.
    pub fn action(&self, action: usize) -> Result<Self> {
        if action >= self.n_actions {
            return Err(Error::ActionOutOfRange {
                action,
                n_actions: self.n_actions,
            });
        }
        let n2 = self.n_states * self.n_states;
        let p = self.p[action * n2..(action + 1) * n2].to_vec();
        Ok(Self::from_flat_unchecked(1, self.n_states, p))
    }

    /// `(self ∘ other)` for single-action kernels: `(T1 T2)(s'|s) = Σ_m T1(m|s) T2(s'|m)`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        check_dims(self.n_states, other.n_states)?;
        check_dims(1, self.n_actions)?;
        check_dims(1, other.n_actions)?;
        let n = self.n_states;
        let mut p = vec![0.0; n * n];
        for s in 0..n {
            for m in 0..n {
                let w = self.get(0, s, m);
                if w == 0.0 {
                    continue;
                }
                for t in 0..n {
                    p[s * n + t] += w * other.get(0, m, t);
                }
            }
        }
        Ok(Self::from_flat_unchecked(1, n, p))
    }
}

fn kernel_violations(tensor: &[Vec<Vec<f64>>]) -> Vec<String> {
    let mut out = Vec::new();
    if tensor.is_empty() {
        out.push("transition tensor has no actions".to_string());
        return out;
    }
    let n = tensor[0].len();
    if n == 0 {
        out.push("transition tensor has no states".to_string());
        return out;
    }
    for (a, rows) in tensor.iter().enumerate() {
        if rows.len() != n {
            out.push(format!(
                "action {a} has {} source rows (expected {n})",
                rows.len()
            ));
            continue;
        }
        for (s, row) in rows.iter().enumerate() {
            if row.len() != n {
                out.push(format!(
                    "row (action {a}, state {s}) has length {} (expected {n})",
                    row.len()
                ));
                continue;
            }
            if let Some(t) = row.iter().position(|p| !p.is_finite() || *p < 0.0) {
                out.push(format!(
                    "row (action {a}, state {s}) has negative or non-finite entry at {t}"
                ));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > PROB_TOL {
                out.push(format!(
                    "row (action {a}, state {s}) sums to {total}, not 1"
                ));
            }
        }
    }
    out
}

/// On-disk MDP description. Loading goes through [`validate`] before a
/// [`FiniteMetricMDP`] is built.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MdpFile {
    pub n_states: usize,
    pub n_actions: usize,
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub rewards: Vec<f64>,
    pub discount: f64,
    pub metric: Vec<Vec<f64>>,
}

/// Returns every violated invariant of `desc`; empty when valid.
pub fn validate(desc: &MdpFile) -> Vec<String> {
    let mut out = Vec::new();
    if desc.n_states == 0 {
        out.push("n_states must be positive".to_string());
    }
    if desc.n_actions == 0 {
        out.push("n_actions must be positive".to_string());
    }
    if desc.transitions.len() != desc.n_actions {
        out.push(format!(
            "transitions has {} actions but n_actions = {}",
            desc.transitions.len(),
            desc.n_actions
        ));
    }
    if desc.transitions.first().map(Vec::len) != Some(desc.n_states) {
        out.push(format!(
            "transitions rows do not match n_states = {}",
            desc.n_states
        ));
    }
    out.extend(kernel_violations(&desc.transitions));
    if desc.rewards.len() != desc.n_states {
        out.push(format!(
            "rewards has length {} but n_states = {}",
            desc.rewards.len(),
            desc.n_states
        ));
    }
    if desc.rewards.iter().any(|r| !r.is_finite()) {
        out.push("rewards contain non-finite values".to_string());
    }
    if !(0.0..1.0).contains(&desc.discount) {
        out.push(format!("discount {} is not in [0, 1)", desc.discount));
    }
    if desc.metric.len() != desc.n_states {
        out.push(format!(
            "metric has {} rows but n_states = {}",
            desc.metric.len(),
            desc.n_states
        ));
    }
    out.extend(metric_violations(&desc.metric));
    out
}

/// A finite MDP with state-only rewards and a ground metric on states.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMetricMDP {
    transitions: TransitionKernel,
    rewards: Vec<f64>,
    discount: f64,
    metric: GroundMetric,
}

impl FiniteMetricMDP {
    pub fn new(
        transitions: TransitionKernel,
        rewards: Vec<f64>,
        discount: f64,
        metric: GroundMetric,
    ) -> Result<Self> {
        let mut violations = Vec::new();
        let n = transitions.n_states();
        if rewards.len() != n {
            violations.push(format!(
                "rewards has length {} but n_states = {n}",
                rewards.len()
            ));
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            violations.push("rewards contain non-finite values".to_string());
        }
        if !(0.0..1.0).contains(&discount) {
            violations.push(format!("discount {discount} is not in [0, 1)"));
        }
        if metric.n_states() != n {
            violations.push(format!(
                "metric has {} states but kernel has {n}",
                metric.n_states()
            ));
        }
        if !violations.is_empty() {
            return Err(Error::InvalidMdp(violations));
        }
        Ok(Self {
            transitions,
            rewards,
            discount,
            metric,
        })
    }

    pub fn from_file_desc(desc: MdpFile) -> Result<Self> {
        let violations = validate(&desc);
        if !violations.is_empty() {
            return Err(Error::InvalidMdp(violations));
        }
        Self::new(
            TransitionKernel::from_nested(desc.transitions)?,
            desc.rewards,
            desc.discount,
            GroundMetric::from_rows(desc.metric)?,
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file_desc(serde_json::from_str(text)?)
    }

    pub fn to_file_desc(&self) -> MdpFile {
        MdpFile {
            n_states: self.n_states(),
            n_actions: self.n_actions(),
            transitions: self.transitions.to_nested(),
            rewards: self.rewards.clone(),
            discount: self.discount,
            metric: self.metric.rows(),
        }
    }

    /// Same MDP with the transition kernel replaced.
    pub fn with_kernel(&self, kernel: TransitionKernel) -> Result<Self> {
        check_dims(self.n_states(), kernel.n_states())?;
        Self::new(
            kernel,
            self.rewards.clone(),
            self.discount,
            self.metric.clone(),
        )
    }

    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        Self::new(
            self.transitions.clone(),
            self.rewards.clone(),
            discount,
            self.metric.clone(),
        )
    }

    pub fn transitions(&self) -> &TransitionKernel {
        &self.transitions
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn metric(&self) -> &GroundMetric {
        &self.metric
    }

    pub fn n_states(&self) -> usize {
        self.transitions.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.transitions.n_actions()
    }
}

/// One step of the generalized transition: `ν(s') = Σ_s T(s'|s,a) μ(s)`.
pub fn push_forward(
    kernel: &TransitionKernel,
    mu: &Distribution,
    action: usize,
) -> Result<Distribution> {
    if action >= kernel.n_actions() {
        return Err(Error::ActionOutOfRange {
            action,
            n_actions: kernel.n_actions(),
        });
    }
    check_dims(kernel.n_states(), mu.len())?;
    let n = kernel.n_states();
    let mut out = vec![0.0; n];
    for (s, &m) in mu.mass().iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        for (o, &p) in out.iter_mut().zip(kernel.row(action, s)) {
            *o += m * p;
        }
    }
    Ok(Distribution::from_vec_unchecked(out))
}

/// Applies [`push_forward`] for each action in order.
pub fn push_forward_n(
    kernel: &TransitionKernel,
    mu: &Distribution,
    actions: &[usize],
) -> Result<Distribution> {
    let (first, rest) = actions
        .split_first()
        .ok_or(Error::Empty("action sequence"))?;
    let mut cur = push_forward(kernel, mu, *first)?;
    for &a in rest {
        cur = push_forward(kernel, &cur, a)?;
    }
    Ok(cur)
}

/// A finite set of deterministic state maps with an action-conditioned
/// distribution over them.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicModelClass {
    n_states: usize,
    maps: Vec<Vec<usize>>,
    /// `weights[action][map]`.
    weights: Vec<Vec<f64>>,
}

impl DeterministicModelClass {
    pub fn new(n_states: usize, maps: Vec<Vec<usize>>, weights: Vec<Vec<f64>>) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::InvalidModelClass("no maps".into()));
        }
        if weights.is_empty() {
            return Err(Error::InvalidModelClass("no actions".into()));
        }
        for (k, f) in maps.iter().enumerate() {
            if f.len() != n_states {
                return Err(Error::InvalidModelClass(format!(
                    "map {k} has length {} (expected {n_states})",
                    f.len()
                )));
            }
            if let Some(s) = f.iter().position(|&t| t >= n_states) {
                return Err(Error::InvalidModelClass(format!(
                    "map {k} sends state {s} to invalid index {}",
                    f[s]
                )));
            }
        }
        for (a, w) in weights.iter().enumerate() {
            if w.len() != maps.len() {
                return Err(Error::InvalidModelClass(format!(
                    "weights for action {a} have length {} (expected {})",
                    w.len(),
                    maps.len()
                )));
            }
            if w.iter().any(|g| !g.is_finite() || *g < 0.0) {
                return Err(Error::InvalidModelClass(format!(
                    "weights for action {a} contain negative or non-finite values"
                )));
            }
            let total: f64 = w.iter().sum();
            if (total - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidModelClass(format!(
                    "weights for action {a} sum to {total}, not 1"
                )));
            }
        }
        Ok(Self {
            n_states,
            maps,
            weights,
        })
    }

    /// Builds a class without checking weight normalization. Used to probe
    /// [`crate::decomposition::reconstruct_and_check`] with perturbed weights.
    pub fn new_unnormalized(
        n_states: usize,
        maps: Vec<Vec<usize>>,
        weights: Vec<Vec<f64>>,
    ) -> Self {
        Self {
            n_states,
            maps,
            weights,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.weights.len()
    }

    pub fn maps(&self) -> &[Vec<usize>] {
        &self.maps
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }
}

/// `T̂(s'|s,a) = Σ_f 1(f(s) = s') g(f|a)`.
pub fn model_class_to_kernel(model: &DeterministicModelClass) -> TransitionKernel {
    let n = model.n_states;
    let n_actions = model.n_actions();
    let mut p = vec![0.0; n_actions * n * n];
    for (a, w) in model.weights.iter().enumerate() {
        for (f, &g) in model.maps.iter().zip(w) {
            if g == 0.0 {
                continue;
            }
            for (s, &t) in f.iter().enumerate() {
                p[(a * n + s) * n + t] += g;
            }
        }
    }
    TransitionKernel::from_flat_unchecked(n_actions, n, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state_mrp() -> FiniteMetricMDP {
        FiniteMetricMDP::new(
            TransitionKernel::from_matrix(vec![vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap(),
            vec![0.0, 1.0],
            0.9,
            GroundMetric::index_line(2),
        )
        .unwrap()
    }

    fn desc() -> MdpFile {
        two_state_mrp().to_file_desc()
    }

    #[test]
    fn valid_mrp_has_empty_report() {
        assert!(validate(&desc()).is_empty());
    }

    #[test]
    fn short_row_is_reported() {
        let mut d = desc();
        d.transitions[0][1] = vec![0.5, 0.4];
        let report = validate(&d);
        assert_eq!(report.len(), 1, "{report:?}");
        assert!(report[0].contains("action 0, state 1"), "{report:?}");
    }

    #[test]
    fn triangle_violation_is_reported() {
        let metric = vec![
            vec![0.0, 5.0, 10.0],
            vec![5.0, 0.0, 1.0],
            vec![10.0, 1.0, 0.0],
        ];
        let report = metric_violations(&metric);
        assert!(report.iter().any(|r| r.contains("triangle")), "{report:?}");
        assert!(GroundMetric::from_rows(metric).is_err());
    }

    #[test]
    fn discount_one_is_rejected() {
        let mut d = desc();
        d.discount = 1.0;
        assert!(validate(&d).iter().any(|r| r.contains("discount")));
    }

    #[test]
    fn json_round_trip() {
        let text = serde_json::to_string(&desc()).unwrap();
        assert_eq!(FiniteMetricMDP::from_json(&text).unwrap(), two_state_mrp());
    }

    #[test]
    fn push_forward_examples() {
        let id = TransitionKernel::identity(1, 3);
        let mu = Distribution::new(vec![0.2, 0.5, 0.3]).unwrap();
        assert_eq!(push_forward(&id, &mu, 0).unwrap(), mu);

        let mdp = two_state_mrp();
        let k = mdp.transitions();
        let nu = push_forward(k, &Distribution::dirac(2, 0), 0).unwrap();
        assert_eq!(nu.mass(), &[0.3, 0.7]);

        let nu = push_forward(k, &Distribution::uniform(2), 0).unwrap();
        assert!((nu.mass()[0] - 0.45).abs() < 1e-15);
        assert!((nu.mass()[1] - 0.55).abs() < 1e-15);

        assert!(matches!(
            push_forward(k, &mu, 3),
            Err(Error::DimensionMismatch { .. }) | Err(Error::ActionOutOfRange { .. })
        ));
        assert!(matches!(
            push_forward(k, &Distribution::uniform(2), 1),
            Err(Error::ActionOutOfRange { action: 1, .. })
        ));
    }

    #[test]
    fn push_forward_n_examples() {
        let mdp = two_state_mrp();
        let k = mdp.transitions();
        let mu = Distribution::new(vec![0.1, 0.9]).unwrap();
        assert_eq!(
            push_forward_n(k, &mu, &[0]).unwrap(),
            push_forward(k, &mu, 0).unwrap()
        );
        assert!(matches!(push_forward_n(k, &mu, &[]), Err(Error::Empty(_))));

        let id = TransitionKernel::identity(2, 2);
        assert_eq!(push_forward_n(&id, &mu, &[0, 1, 1, 0]).unwrap(), mu);

        // Two steps through T equal one step through T².
        let squared = k.matmul(k).unwrap();
        let two = push_forward_n(k, &mu, &[0, 0]).unwrap();
        let one = push_forward(&squared, &mu, 0).unwrap();
        for (a, b) in two.mass().iter().zip(one.mass()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn single_map_class_is_deterministic_kernel() {
        let class = DeterministicModelClass::new(3, vec![vec![1, 2, 2]], vec![vec![1.0]]).unwrap();
        let k = model_class_to_kernel(&class);
        assert_eq!(k.row(0, 0), &[0.0, 1.0, 0.0]);
        assert_eq!(k.row(0, 1), &[0.0, 0.0, 1.0]);
        assert_eq!(k.row(0, 2), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn model_class_rejects_bad_input() {
        assert!(DeterministicModelClass::new(2, vec![vec![0, 2]], vec![vec![1.0]]).is_err());
        assert!(DeterministicModelClass::new(2, vec![vec![0, 1]], vec![vec![0.9]]).is_err());
        assert!(DeterministicModelClass::new(2, vec![vec![0, 1]], vec![vec![0.5, 0.5]]).is_err());
    }

    #[test]
    fn distribution_rejects_bad_mass() {
        assert!(Distribution::new(vec![0.5, 0.4]).is_err());
        assert!(Distribution::new(vec![1.5, -0.5]).is_err());
        assert!(Distribution::new(vec![]).is_err());
    }
}
