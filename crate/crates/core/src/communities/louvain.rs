//! Greedy modularity maximization: seeded local-moving passes over an
//! indexed weighted graph, alternated with graph aggregation until the
//! modularity gain drops below tolerance.
//!
//! Conventions: the graph is undirected; a self-loop of weight w contributes
//! w to its node's degree and w (once) to the total weight 2m. Modularity is
//! Q = sum_ij [A_ij/2m - k_i*k_j/(2m)^2] * delta(c_i, c_j) over ordered
//! pairs, self-loops included in both A and k.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Moves below this gain are treated as noise; prevents oscillation on
/// float-level ties.
const MIN_MOVE_GAIN: f64 = 1e-12;

/// Local-moving sweeps per level are capped as a safety net; in practice a
/// level settles in a handful of sweeps.
const MAX_SWEEPS_PER_LEVEL: usize = 1_000;

/// Slack allowed when asserting that modularity never decreases; covers
/// accumulation-order rounding, nothing more.
pub(crate) const Q_MONOTONE_SLACK: f64 = 1e-12;

/// An indexed undirected weighted graph. `adj[i]` holds `(j, w)` for every
/// neighbor and at most one `(i, w)` self-loop entry.
#[derive(Debug, Clone)]
pub(crate) struct LevelGraph {
    pub n: usize,
    pub adj: Vec<Vec<(usize, f64)>>,
    pub k: Vec<f64>,
    pub two_m: f64,
}

impl LevelGraph {
    /// Builds from an edge list; parallel edges sum their weights.
    pub fn build(n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut maps: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        for &(u, v, w) in edges {
            if u == v {
                *maps[u].entry(u).or_insert(0.0) += w;
            } else {
                *maps[u].entry(v).or_insert(0.0) += w;
                *maps[v].entry(u).or_insert(0.0) += w;
            }
        }
        let adj: Vec<Vec<(usize, f64)>> = maps.into_iter().map(|m| m.into_iter().collect()).collect();
        let k: Vec<f64> = adj.iter().map(|nb| nb.iter().map(|(_, w)| *w).sum()).collect();
        let two_m = k.iter().sum();
        Self { n, adj, k, two_m }
    }

    /// Q for an arbitrary labeling (labels need not be dense).
    pub fn modularity(&self, comm: &[usize]) -> f64 {
        let s = self.two_m;
        let mut internal = 0.0;
        let mut k_c: BTreeMap<usize, f64> = BTreeMap::new();
        for i in 0..self.n {
            *k_c.entry(comm[i]).or_insert(0.0) += self.k[i];
            for &(j, w) in &self.adj[i] {
                if comm[i] == comm[j] {
                    internal += w;
                }
            }
        }
        internal / s - k_c.values().map(|kc| (kc / s) * (kc / s)).sum::<f64>()
    }

    /// Collapses communities into single nodes. `comm` labels are made dense
    /// in ascending order, which keeps the whole pipeline deterministic.
    fn aggregate(&self, comm: &[usize]) -> (Self, Vec<usize>) {
        let mut labels: Vec<usize> = comm.to_vec();
        labels.sort_unstable();
        labels.dedup();
        let dense: BTreeMap<usize, usize> = labels.iter().enumerate().map(|(i, l)| (*l, i)).collect();

        let mut maps: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); labels.len()];
        for i in 0..self.n {
            let ci = dense[&comm[i]];
            for &(j, w) in &self.adj[i] {
                *maps[ci].entry(dense[&comm[j]]).or_insert(0.0) += w;
            }
        }
        let adj: Vec<Vec<(usize, f64)>> = maps.into_iter().map(|m| m.into_iter().collect()).collect();
        let k: Vec<f64> = adj.iter().map(|nb| nb.iter().map(|(_, w)| *w).sum()).collect();
        let graph = Self { n: labels.len(), adj, k, two_m: self.two_m };
        let mapping = comm.iter().map(|c| dense[c]).collect();
        (graph, mapping)
    }
}

/// One level of local moving. Returns whether any node changed community.
/// After every sweep the current Q is appended to `trace`.
fn local_moving(graph: &LevelGraph, comm: &mut [usize], rng: &mut ChaCha8Rng, trace: &mut Vec<f64>) -> bool {
    let s = graph.two_m;
    let mut order: Vec<usize> = (0..graph.n).collect();
    order.shuffle(rng);

    // community degree sums, indexed by label (labels start as node indices)
    let mut k_c = vec![0.0f64; graph.n];
    for i in 0..graph.n {
        k_c[comm[i]] += graph.k[i];
    }

    let mut moved_any = false;
    for _ in 0..MAX_SWEEPS_PER_LEVEL {
        let mut moves = 0usize;
        for &i in &order {
            let current = comm[i];
            let ki = graph.k[i];
            k_c[current] -= ki;

            // edge weight from i into each neighboring community; sorted map
            // so candidate iteration order is stable
            let mut w_com: BTreeMap<usize, f64> = BTreeMap::new();
            for &(j, w) in &graph.adj[i] {
                if j != i {
                    *w_com.entry(comm[j]).or_insert(0.0) += w;
                }
            }

            let phi = |c: usize, w_ic: f64| w_ic / s - ki * k_c[c] / (s * s);
            let stay_phi = phi(current, w_com.get(&current).copied().unwrap_or(0.0));
            let mut best = (stay_phi, current);
            for (&c, &w_ic) in &w_com {
                if c == current {
                    continue;
                }
                let p = phi(c, w_ic);
                if p > best.0 {
                    best = (p, c);
                }
            }

            let target = if best.1 != current && best.0 - stay_phi > MIN_MOVE_GAIN {
                best.1
            } else {
                current
            };
            if target != current {
                comm[i] = target;
                moves += 1;
                moved_any = true;
            }
            k_c[comm[i]] += ki;
        }

        let q = graph.modularity(comm);
        if let Some(prev) = trace.last() {
            debug_assert!(q >= prev - Q_MONOTONE_SLACK, "Q decreased across a sweep: {prev} -> {q}");
        }
        trace.push(q);
        if moves == 0 {
            break;
        }
    }
    moved_any
}

pub(crate) struct LouvainOutcome {
    /// Final community label per original node (dense, ascending).
    pub membership: Vec<usize>,
    /// Q after every local-moving sweep, starting with the singleton
    /// partition of the input graph.
    pub trace: Vec<f64>,
}

/// Runs the full multi-level maximization; deterministic for a given seed.
pub(crate) fn run(base: LevelGraph, seed: u64, tolerance: f64) -> LouvainOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Vec::new();

    // original node -> node of the current level
    let mut membership: Vec<usize> = (0..base.n).collect();
    let mut level = base;

    let singleton: Vec<usize> = (0..level.n).collect();
    let mut level_q = level.modularity(&singleton);
    trace.push(level_q);

    loop {
        let mut comm: Vec<usize> = (0..level.n).collect();
        let moved = local_moving(&level, &mut comm, &mut rng, &mut trace);
        if !moved {
            break;
        }
        let q_now = *trace.last().expect("trace has at least the initial Q");

        // node_map[i] is the aggregated node that level-node i collapsed into
        let (next, node_map) = level.aggregate(&comm);
        for m in membership.iter_mut() {
            *m = node_map[*m];
        }
        level = next;

        if q_now - level_q <= tolerance {
            break;
        }
        level_q = q_now;
    }

    LouvainOutcome { membership, trace }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_triangles() -> LevelGraph {
        // nodes 0..3 and 3..6, bridged by a weak edge
        let edges = vec![
            (0, 1, 1.0),
            (1, 2, 1.0),
            (2, 0, 1.0),
            (3, 4, 1.0),
            (4, 5, 1.0),
            (5, 3, 1.0),
            (2, 3, 0.05),
        ];
        LevelGraph::build(6, &edges)
    }

    #[test]
    fn recovers_two_triangles() {
        let out = run(two_triangles(), 1, 1e-7);
        assert_eq!(out.membership[0], out.membership[1]);
        assert_eq!(out.membership[1], out.membership[2]);
        assert_eq!(out.membership[3], out.membership[4]);
        assert_eq!(out.membership[4], out.membership[5]);
        assert_ne!(out.membership[0], out.membership[3]);
    }

    #[test]
    fn trace_is_monotone() {
        let out = run(two_triangles(), 7, 1e-7);
        for pair in out.trace.windows(2) {
            assert!(pair[1] >= pair[0] - Q_MONOTONE_SLACK);
        }
    }

    #[test]
    fn same_seed_same_result() {
        let a = run(two_triangles(), 42, 1e-7);
        let b = run(two_triangles(), 42, 1e-7);
        assert_eq!(a.membership, b.membership);
    }

    #[test]
    fn self_loop_counts_once_in_two_m() {
        let g = LevelGraph::build(2, &[(0, 1, 2.0), (1, 1, 3.0)]);
        // k0 = 2, k1 = 2 + 3; 2m = 7
        assert_eq!(g.two_m, 7.0);
        assert_eq!(g.k[1], 5.0);
    }
}
