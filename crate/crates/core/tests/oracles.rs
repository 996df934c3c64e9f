mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{bfs_components, dense_pagerank, random_graph};
use sitgraph::categorize::{categorize_target, ego_network, weakly_connected_components};
use sitgraph::centrality::{pagerank, personalized_pagerank, PushScratch};
use sitgraph::{Graph, NodeId};

#[test]
fn series_matches_dense_solve_on_small_graphs() {
    let alpha = 0.15;
    for seed in 0..150u64 {
        let n = 1 + (seed as usize % 8);
        let g = random_graph(n, 0.1 + 0.05 * (seed % 10) as f64, seed);
        let uniform = vec![1.0 / n as f64; n];
        let pr = pagerank(&g, alpha, 1e-12).unwrap();
        for (a, b) in pr.values.iter().zip(dense_pagerank(&g, &uniform, alpha)) {
            assert!((a - b).abs() < 1e-9, "seed {seed}: {a} vs {b}");
        }
        for s in 0..n {
            let mut start = vec![0.0; n];
            start[s] = 1.0;
            let ppr = personalized_pagerank(&g, NodeId(s as u32), alpha, 1e-12).unwrap();
            for (a, b) in ppr.values.iter().zip(dense_pagerank(&g, &start, alpha)) {
                assert!((a - b).abs() < 1e-9, "seed {seed} source {s}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn directed_three_cycle_matches_dense_solve() {
    let g = Graph::from_edges(3, vec![(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]).unwrap();
    let pr = pagerank(&g, 0.15, 1e-12).unwrap();
    let dense = dense_pagerank(&g, &[1.0 / 3.0; 3], 0.15);
    for (a, b) in pr.values.iter().zip(dense) {
        assert!((a - b).abs() < 1e-9);
    }
}

/// Stop node of one random walk with restart probability `alpha`.
fn rwr_stop(g: &Graph, source: NodeId, alpha: f64, rng: &mut ChaCha8Rng) -> Option<NodeId> {
    let mut v = source;
    loop {
        if rng.gen::<f64>() < alpha {
            return Some(v);
        }
        let (nbrs, _) = g.out_neighbors(v);
        if nbrs.is_empty() {
            // the walk falls off a dangling node and never stops anywhere
            return None;
        }
        v = nbrs[rng.gen_range(0..nbrs.len())];
    }
}

#[test]
fn monte_carlo_walks_agree_with_series() {
    let g = random_graph(7, 0.35, 42);
    let alpha = 0.2;
    let source = NodeId(0);
    let walks = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut hits = vec![0usize; g.n()];
    for _ in 0..walks {
        if let Some(v) = rwr_stop(&g, source, alpha, &mut rng) {
            hits[v.index()] += 1;
        }
    }
    let ppr = personalized_pagerank(&g, source, alpha, 1e-12).unwrap();
    for (v, &h) in hits.iter().enumerate() {
        let p = ppr.values[v];
        let est = h as f64 / walks as f64;
        let se = (p * (1.0 - p) / walks as f64).sqrt().max(1e-9);
        assert!((est - p).abs() <= 3.0 * se, "node {v}: {est} vs {p} (se {se})");
    }
}

#[test]
fn forward_push_tracks_series_within_its_threshold() {
    let g = random_graph(40, 0.08, 3);
    let mut push = PushScratch::new(g.n());
    for s in 0..g.n() as u32 {
        let exact = personalized_pagerank(&g, NodeId(s), 0.15, 1e-12).unwrap();
        push.run(&g, NodeId(s), 0.15, 1e-6);
        for v in g.nodes() {
            let err = exact.values[v.index()] - push.estimate(v);
            assert!(err >= -1e-12, "push overshoots");
            assert!(err < 1e-4, "{err}");
        }
    }
}

#[test]
fn components_match_breadth_first_search() {
    for seed in 0..1200u64 {
        let n = 1 + (seed as usize % 10);
        let g = random_graph(n, 0.05 + 0.04 * (seed % 12) as f64, seed);
        for t in g.nodes() {
            let ego = ego_network(&g, t).unwrap();
            let edges: Vec<_> = ego.edges.iter().map(|&(a, b, _)| (a, b)).collect();
            let expect = bfs_components(&ego.nodes, &edges);
            assert_eq!(weakly_connected_components(&ego), expect, "seed {seed} target {t}");
            let asg = categorize_target(&g, t).unwrap();
            let groups: Vec<_> = asg.groups.iter().map(|grp| grp.sources.clone()).collect();
            assert_eq!(groups, expect);
        }
    }
}
