#![allow(dead_code)]

use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use sitgraph::{Graph, NodeId};

/// Random simple digraph on `n` nodes, each ordered pair present with probability `p`.
pub fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for s in 0..n as u32 {
        for t in 0..n as u32 {
            if s != t && rng.gen_bool(p) {
                edges.push((s, t, 1.0 - rng.gen::<f64>()));
            }
        }
    }
    Graph::from_edges(n, edges).unwrap()
}

prop_compose! {
    pub fn small_graph(max_n: usize)(n in 1..=max_n, p in 0.0..0.7f64, seed in any::<u64>()) -> Graph {
        random_graph(n, p, seed)
    }
}

/// Dense personalized (or uniform-start) PageRank: solves
/// `x (I - (1 - alpha) P) = alpha s` by Gaussian elimination.
pub fn dense_pagerank(g: &Graph, start: &[f64], alpha: f64) -> Vec<f64> {
    let n = g.n();
    // a[i][j] holds (I - (1 - alpha) P)^T
    let mut a = vec![vec![0.0; n + 1]; n];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
        row[n] = alpha * start[i];
    }
    for u in 0..n {
        let (nbrs, _) = g.out_neighbors(NodeId(u as u32));
        for v in nbrs {
            a[v.index()][u] -= (1.0 - alpha) / nbrs.len() as f64;
        }
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..=n {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    (0..n).map(|i| a[i][n] / a[i][i]).collect()
}

/// Weakly connected components by breadth-first search over an undirected
/// view of `edges` restricted to `nodes`; each sorted, list ordered by first member.
pub fn bfs_components(nodes: &[NodeId], edges: &[(NodeId, NodeId)]) -> Vec<Vec<NodeId>> {
    use std::collections::{BTreeMap, BTreeSet, VecDeque};
    let mut adj: BTreeMap<NodeId, BTreeSet<NodeId>> = nodes.iter().map(|&v| (v, BTreeSet::new())).collect();
    for &(a, b) in edges {
        adj.get_mut(&a).unwrap().insert(b);
        adj.get_mut(&b).unwrap().insert(a);
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &v in nodes {
        if !seen.insert(v) {
            continue;
        }
        let mut comp = vec![v];
        let mut queue = VecDeque::from([v]);
        while let Some(u) = queue.pop_front() {
            for &w in &adj[&u] {
                if seen.insert(w) {
                    comp.push(w);
                    queue.push_back(w);
                }
            }
        }
        comp.sort();
        out.push(comp);
    }
    out.sort_by_key(|c| c[0]);
    out
}
