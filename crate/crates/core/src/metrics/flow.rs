//! Uncapacitated min-cost flow on the complete graph with ground-metric arc
//! costs, solved by successive shortest paths with Dijkstra on reduced costs.
//!
//! With supplies `b = μ1 - μ2`, the node potentials `π` at termination
//! satisfy `π_j - π_i <= d(i, j)` on every arc, so `f = -π` is a 1-Lipschitz
//! test function attaining the Kantorovich-Rubinstein supremum.

pub(crate) struct FlowSolution {
    pub potential: Vec<f64>,
    pub cost: f64,
}

/// Excess below this is treated as shipped.
const EXCESS_TOL: f64 = 1e-15;

pub(crate) fn solve(balance: &[f64], cost: impl Fn(usize, usize) -> f64) -> FlowSolution {
    let n = balance.len();
    let d: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| cost(i, j))
        .collect();
    let mut excess = balance.to_vec();
    // flow[i * n + j] >= 0 on arc i -> j; the reverse residual arc j -> i
    // exists with cost -d(i, j) while flow is positive.
    let mut flow = vec![0.0; n * n];
    let mut pi = vec![0.0; n];
    let mut dist = vec![0.0; n];
    let mut pred = vec![usize::MAX; n];
    let mut done = vec![false; n];

    // Each augmentation empties a source, a sink, or a reverse arc; the cap
    // only guards against pathological float behaviour.
    let max_augment = 4 * n * n + 16;
    for _ in 0..max_augment {
        let Some(s) = argmax(&excess).filter(|&s| excess[s] > EXCESS_TOL) else {
            break;
        };
        if !excess.iter().any(|&e| e < -EXCESS_TOL) {
            break;
        }

        // Dense Dijkstra from s on reduced costs.
        dist.fill(f64::INFINITY);
        pred.fill(usize::MAX);
        done.fill(false);
        dist[s] = 0.0;
        for _ in 0..n {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for k in 0..n {
                if !done[k] && dist[k] < best {
                    best = dist[k];
                    u = k;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            for w in 0..n {
                if w == u || done[w] {
                    continue;
                }
                // Forward arc u -> w, or the cheaper reverse arc if flow w -> u exists.
                let mut arc = d[u * n + w];
                if flow[w * n + u] > 0.0 {
                    arc = arc.min(-d[w * n + u]);
                }
                let reduced = (arc + pi[u] - pi[w]).max(0.0);
                let cand = dist[u] + reduced;
                if cand < dist[w] {
                    dist[w] = cand;
                    pred[w] = u;
                }
            }
        }

        let t = (0..n)
            .filter(|&k| excess[k] < -EXCESS_TOL)
            .min_by(|&x, &y| dist[x].total_cmp(&dist[y]))
            .expect("a deficit node exists");

        let dt = dist[t];
        for k in 0..n {
            pi[k] += dist[k].min(dt);
        }

        // Bottleneck along the path.
        let mut amount = excess[s].min(-excess[t]);
        let mut w = t;
        while w != s {
            let u = pred[w];
            if flow[w * n + u] > 0.0 && -d[w * n + u] <= d[u * n + w] {
                amount = amount.min(flow[w * n + u]);
            }
            w = u;
        }
        let mut w = t;
        while w != s {
            let u = pred[w];
            if flow[w * n + u] > 0.0 && -d[w * n + u] <= d[u * n + w] {
                flow[w * n + u] -= amount;
                if flow[w * n + u] < EXCESS_TOL {
                    flow[w * n + u] = 0.0;
                }
            } else {
                flow[u * n + w] += amount;
            }
            w = u;
        }
        excess[s] -= amount;
        excess[t] += amount;
    }

    let total = flow.iter().zip(&d).map(|(x, c)| x * c).sum();
    FlowSolution {
        potential: pi,
        cost: total,
    }
}

fn argmax(v: &[f64]) -> Option<usize> {
    (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b]))
}
