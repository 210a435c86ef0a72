//! Transportation simplex (MODI / u-v method) for the primal optimal
//! transport problem on a finite space.
//!
//! The basis is kept as a spanning tree over `m` supply nodes and `n` demand
//! nodes with exactly `m + n - 1` basic cells, degenerate zeros included.

use std::collections::VecDeque;

/// Optimal plan and the duals of the final basis, in reduced (positive-mass)
/// coordinates.
pub(crate) struct TransportPlan {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    /// Dense `rows.len() x cols.len()` flow.
    pub flow: Vec<f64>,
    pub cost: f64,
    pub pivots: usize,
}

/// Consecutive degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_STREAK: usize = 64;

pub(crate) fn solve(
    supply: &[f64],
    demand: &[f64],
    cost: impl Fn(usize, usize) -> f64,
) -> TransportPlan {
    let rows: Vec<usize> = (0..supply.len()).filter(|&i| supply[i] > 0.0).collect();
    let cols: Vec<usize> = (0..demand.len()).filter(|&j| demand[j] > 0.0).collect();
    let m = rows.len();
    let n = cols.len();
    let a: Vec<f64> = rows.iter().map(|&i| supply[i]).collect();
    let mut b: Vec<f64> = cols.iter().map(|&j| demand[j]).collect();

    // Absorb the rounding gap between the two totals into the largest demand.
    let gap = a.iter().sum::<f64>() - b.iter().sum::<f64>();
    let jmax = (0..n)
        .max_by(|&x, &y| b[x].total_cmp(&b[y]))
        .expect("nonempty demand");
    b[jmax] += gap;

    let c: Vec<f64> = rows
        .iter()
        .flat_map(|&i| cols.iter().map(move |&j| (i, j)))
        .map(|(i, j)| cost(i, j))
        .collect();
    let cmax = c.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let rc_tol = 1e-13 * (1.0 + cmax);

    let mut tree = Basis::northwest(&a, &b);

    let mut u = vec![0.0; m];
    let mut v = vec![0.0; n];
    let mut pivots = 0;
    let mut degenerate_streak = 0;
    let max_pivots = 200 * (m + n) * (m + n) + 1000;

    loop {
        tree.potentials(&c, &mut u, &mut v);
        let bland = degenerate_streak >= DEGENERATE_STREAK;
        let mut entering = None;
        let mut best = -rc_tol;
        'search: for i in 0..m {
            for j in 0..n {
                if tree.is_basic[i * n + j] {
                    continue;
                }
                let r = c[i * n + j] - u[i] - v[j];
                if r < best {
                    entering = Some((i, j));
                    if bland {
                        break 'search;
                    }
                    best = r;
                }
            }
        }
        let Some((ei, ej)) = entering else { break };
        if pivots >= max_pivots {
            break;
        }
        pivots += 1;

        let cycle = tree.cycle(ei, ej);
        // cycle[k] for odd k loses flow.
        let mut theta = f64::INFINITY;
        let mut leave = usize::MAX;
        for &cell in cycle.iter().skip(1).step_by(2) {
            let x = tree.x[cell];
            if x < theta || (bland && x == theta && cell < leave) {
                theta = x;
                leave = cell;
            }
        }
        if theta <= 0.0 {
            degenerate_streak += 1;
        } else {
            degenerate_streak = 0;
        }
        for (k, &cell) in cycle.iter().enumerate() {
            if k % 2 == 0 {
                tree.x[cell] += theta;
            } else {
                tree.x[cell] -= theta;
            }
        }
        tree.x[leave] = 0.0;
        tree.swap(leave, ei * n + ej);
    }

    let flow: Vec<f64> = tree.x.iter().map(|v| v.max(0.0)).collect();
    let total = flow.iter().zip(&c).map(|(x, c)| x * c).sum();
    TransportPlan {
        rows,
        cols,
        flow,
        cost: total,
        pivots,
    }
}

struct Basis {
    m: usize,
    n: usize,
    x: Vec<f64>,
    is_basic: Vec<bool>,
    /// Basic columns per row.
    row_adj: Vec<Vec<usize>>,
    /// Basic rows per column.
    col_adj: Vec<Vec<usize>>,
}

impl Basis {
    fn northwest(a: &[f64], b: &[f64]) -> Self {
        let m = a.len();
        let n = b.len();
        let mut basis = Self {
            m,
            n,
            x: vec![0.0; m * n],
            is_basic: vec![false; m * n],
            row_adj: vec![Vec::new(); m],
            col_adj: vec![Vec::new(); n],
        };
        let mut ra = a[0];
        let mut rb = b[0];
        let (mut i, mut j) = (0, 0);
        loop {
            let last_row = i + 1 == m;
            let last_col = j + 1 == n;
            if last_row && last_col {
                basis.insert(i, j, ra.max(0.0));
                break;
            }
            if (ra <= rb && !last_row) || last_col {
                basis.insert(i, j, ra.max(0.0));
                rb -= ra;
                i += 1;
                ra = a[i];
            } else {
                basis.insert(i, j, rb.max(0.0));
                ra -= rb;
                j += 1;
                rb = b[j];
            }
        }
        debug_assert_eq!(basis.row_adj.iter().map(Vec::len).sum::<usize>(), m + n - 1);
        basis
    }

    fn insert(&mut self, i: usize, j: usize, x: f64) {
        let cell = i * self.n + j;
        self.x[cell] = x;
        self.is_basic[cell] = true;
        self.row_adj[i].push(j);
        self.col_adj[j].push(i);
    }

    fn swap(&mut self, leave: usize, enter: usize) {
        let (li, lj) = (leave / self.n, leave % self.n);
        self.is_basic[leave] = false;
        self.row_adj[li].retain(|&j| j != lj);
        self.col_adj[lj].retain(|&i| i != li);
        let (ei, ej) = (enter / self.n, enter % self.n);
        self.is_basic[enter] = true;
        self.row_adj[ei].push(ej);
        self.col_adj[ej].push(ei);
    }

    /// Solves `u_i + v_j = c_ij` on basic cells with `u_0 = 0`.
    fn potentials(&self, c: &[f64], u: &mut [f64], v: &mut [f64]) {
        let (m, n) = (self.m, self.n);
        let mut seen_row = vec![false; m];
        let mut seen_col = vec![false; n];
        let mut queue = VecDeque::new();
        u[0] = 0.0;
        seen_row[0] = true;
        queue.push_back(Node::Row(0));
        while let Some(node) = queue.pop_front() {
            match node {
                Node::Row(i) => {
                    for &j in &self.row_adj[i] {
                        if !seen_col[j] {
                            seen_col[j] = true;
                            v[j] = c[i * n + j] - u[i];
                            queue.push_back(Node::Col(j));
                        }
                    }
                }
                Node::Col(j) => {
                    for &i in &self.col_adj[j] {
                        if !seen_row[i] {
                            seen_row[i] = true;
                            u[i] = c[i * n + j] - v[j];
                            queue.push_back(Node::Row(i));
                        }
                    }
                }
            }
        }
        debug_assert!(seen_row.iter().all(|&s| s) && seen_col.iter().all(|&s| s));
    }

    /// Cells of the pivot cycle closed by entering `(ei, ej)`. Even
    /// positions gain flow, odd positions lose it; position 0 is the
    /// entering cell.
    fn cycle(&self, ei: usize, ej: usize) -> Vec<usize> {
        let (m, n) = (self.m, self.n);
        // BFS over the tree from row `ei` to column `ej`.
        let mut parent: Vec<Option<usize>> = vec![None; m + n];
        let mut seen = vec![false; m + n];
        let mut queue = VecDeque::new();
        seen[ei] = true;
        queue.push_back(ei);
        let target = m + ej;
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            let neighbors: Box<dyn Iterator<Item = usize>> = if node < m {
                Box::new(self.row_adj[node].iter().map(|&j| m + j))
            } else {
                Box::new(self.col_adj[node - m].iter().copied())
            };
            for next in neighbors {
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = Some(node);
                    queue.push_back(next);
                }
            }
        }
        let mut path = vec![target];
        let mut cur = target;
        while let Some(p) = parent[cur] {
            path.push(p);
            cur = p;
        }
        debug_assert_eq!(cur, ei);
        path.reverse();
        let mut cells = Vec::with_capacity(path.len());
        cells.push(ei * n + ej);
        for w in path.windows(2) {
            let (p, q) = (w[0], w[1]);
            let cell = if p < m {
                p * n + (q - m)
            } else {
                q * n + (p - m)
            };
            cells.push(cell);
        }
        cells
    }
}

#[derive(Clone, Copy)]
enum Node {
    Row(usize),
    Col(usize),
}
