mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{random_graph, small_graph};
use sitgraph::analyze::discretize;
use sitgraph::categorize::categorize_target;
use sitgraph::centrality::{group_pagerank, pagerank, Aggregation};
use sitgraph::embed::{
    generate_walks, transition_probabilities, EmbeddingTable, Provenance, SimilarityKind,
    SimilarityProvider, WalkConfig,
};
use sitgraph::graph::{NodeSet, WeightPolicy};
use sitgraph::learn::{auc, group_inclination, predict, train, Behavior, BoostConfig, Dataset, LabeledPair};
use sitgraph::measures::{compute_all, Measure, MeasureConfig};
use sitgraph::recommend::{recommend_topk, PairScores};
use sitgraph::{Graph, NodeId};

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 64,
        ..ProptestConfig::default()
    }
}

fn random_embedding(n: usize, dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    EmbeddingTable::from_rows(dim, data, Provenance::Imported { path: "mem".into() }).unwrap()
}

fn all_pairs(g: &Graph) -> Vec<(NodeId, NodeId)> {
    g.edges().map(|(s, t, _)| (s, t)).collect()
}

/// Adds the cycle 0 -> 1 -> ... -> 0 so that no node is dangling.
fn without_dangling(g: &Graph) -> Graph {
    let n = g.n() as u32;
    let mut edges: Vec<(u32, u32, f64)> = g.edges().map(|(s, t, w)| (s.0, t.0, w)).collect();
    for v in 0..n {
        let next = (v + 1) % n;
        if next != v && !g.has_edge(NodeId(v), NodeId(next)) {
            edges.push((v, next, 1.0));
        }
    }
    Graph::from_edges(n as usize, edges).unwrap()
}

fn brute_force_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut total) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                total += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / total
}

fn random_dataset(rows: usize, dim: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let examples = (0..rows)
        .map(|i| {
            let features: Vec<f64> = (0..dim).map(|_| (rng.gen_range(0..8) as f64) / 4.0).collect();
            let label = features[0] + rng.gen_range(-0.5..0.5) > 0.9;
            LabeledPair {
                source: NodeId(i as u32),
                target: NodeId(0),
                features,
                label,
            }
        })
        .collect();
    Dataset {
        feature_names: (0..dim).map(|i| format!("x{i}")).collect(),
        behavior: Behavior::Adoption,
        examples,
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn reverse_adjacency_mirrors_forward(g in small_graph(12)) {
        for (s, t, w) in g.edges() {
            let (srcs, ws) = g.in_neighbors(t);
            let pos = srcs.binary_search(&s).expect("edge missing from reverse view");
            prop_assert_eq!(ws[pos], w);
        }
        let fwd: usize = g.nodes().map(|v| g.out_degree(v)).sum();
        let rev: usize = g.nodes().map(|v| g.in_degree(v)).sum();
        prop_assert_eq!(fwd, rev);
    }

    #[test]
    fn snapshot_and_edge_list_round_trip(g in small_graph(12)) {
        let back = Graph::from_snapshot_bytes(&g.to_snapshot_bytes()).unwrap();
        prop_assert_eq!(&back, &g);
        prop_assert_eq!(back.content_hash(), g.content_hash());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("edges.txt");
        g.write_edge_list(&path).unwrap();
        let loaded = Graph::load_edge_list(&path, WeightPolicy::RejectOutOfRange).unwrap();
        let named = |h: &Graph| -> BTreeSet<(String, String, u64)> {
            h.edges().map(|(s, t, w)| (h.name(s).to_owned(), h.name(t).to_owned(), w.to_bits())).collect()
        };
        prop_assert_eq!(named(&loaded), named(&g));
    }

    #[test]
    fn groups_partition_the_sources(g in small_graph(12)) {
        for t in g.nodes() {
            let asg = categorize_target(&g, t).unwrap();
            let mut members: Vec<NodeId> = asg.groups.iter().flat_map(|grp| grp.sources.clone()).collect();
            members.sort();
            let (srcs, _) = g.in_neighbors(t);
            prop_assert_eq!(&members[..], srcs);
            for (i, grp) in asg.groups.iter().enumerate() {
                prop_assert_eq!(grp.group_index, i);
                prop_assert!(!grp.sources.is_empty());
                for &s in &grp.sources {
                    prop_assert_eq!(asg.group_index_of(s), Some(i));
                }
            }
        }
    }

    #[test]
    fn pagerank_without_dangling_nodes_sums_to_one(g in small_graph(12)) {
        prop_assume!(g.n() >= 2);
        let h = without_dangling(&g);
        let pr = pagerank(&h, 0.15, 1e-12).unwrap();
        prop_assert!((pr.total_mass() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn group_pagerank_mean_and_sum_agree(g in small_graph(12)) {
        let pr = pagerank(&g, 0.15, 1e-9).unwrap();
        for t in g.nodes() {
            for grp in categorize_target(&g, t).unwrap().groups {
                let mean = group_pagerank(&pr, &grp, Aggregation::Mean).unwrap();
                let sum = group_pagerank(&pr, &grp, Aggregation::Sum).unwrap();
                prop_assert!((mean * (grp.size() - 1) as f64 - sum).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn walks_follow_edges(g in small_graph(10), p in 0.25..4.0f64, q in 0.25..4.0f64, seed in any::<u64>()) {
        let cfg = WalkConfig { length: 8, walks_per_node: 2, p, q, seed };
        let corpus = generate_walks(&g, &cfg).unwrap();
        prop_assert_eq!(corpus.len(), g.n() * 2);
        for walk in corpus.walks() {
            prop_assert!(!walk.is_empty() && walk.len() <= cfg.length);
            for pair in walk.windows(2) {
                prop_assert!(g.has_edge(pair[0], pair[1]));
            }
            if walk.len() < cfg.length {
                prop_assert_eq!(g.out_degree(*walk.last().unwrap()), 0);
            }
        }
    }

    #[test]
    fn transition_probabilities_normalize(g in small_graph(10), p in 0.1..10.0f64, q in 0.1..10.0f64) {
        for cur in g.nodes() {
            let mut prevs: Vec<Option<NodeId>> = vec![None];
            prevs.extend(g.in_neighbors(cur).0.iter().copied().map(Some));
            for prev in prevs {
                let probs = transition_probabilities(&g, prev, cur, p, q);
                if g.out_degree(cur) == 0 {
                    prop_assert!(probs.is_empty());
                } else {
                    let total: f64 = probs.iter().map(|(_, x)| x).sum();
                    prop_assert!((total - 1.0).abs() < 1e-12);
                    prop_assert!(probs.iter().all(|(_, x)| *x > 0.0));
                }
            }
        }
    }

    #[test]
    fn similarity_is_symmetric_and_bounded(n in 2usize..12, seed in any::<u64>()) {
        let emb = random_embedding(n, 4, seed);
        let pairs: Vec<(NodeId, NodeId)> = (0..n as u32)
            .flat_map(|a| (0..n as u32).map(move |b| (NodeId(a), NodeId(b))))
            .filter(|(a, b)| a < b)
            .collect();
        for kind in [SimilarityKind::Cosine, SimilarityKind::Euclidean] {
            let mut sim = SimilarityProvider::new(kind);
            sim.fit(&emb, pairs.iter().copied()).unwrap();
            for &(a, b) in &pairs {
                let ab = sim.similarity(&emb, a, b).unwrap();
                let ba = sim.similarity(&emb, b, a).unwrap();
                prop_assert_eq!(ab, ba);
                prop_assert!((0.0..=1.0).contains(&ab));
            }
        }
    }

    #[test]
    fn trust_scores_are_bounded_and_shared_by_group(g in small_graph(9), seed in any::<u64>()) {
        let pairs = all_pairs(&g);
        prop_assume!(!pairs.is_empty());
        let emb = random_embedding(g.n(), 4, seed);
        let records = compute_all(&g, &pairs, &emb, &MeasureConfig::default()).unwrap();
        prop_assert_eq!(records.len(), pairs.len());
        let group_level = [
            Measure::CcCount, Measure::Gs, Measure::Gd, Measure::Gpr, Measure::Gppr,
            Measure::Ugt, Measure::UgtEuc, Measure::Igt, Measure::IgtEuc, Measure::IgtSum,
        ];
        for r in &records {
            for m in [Measure::Ugt, Measure::UgtEuc, Measure::Igt, Measure::IgtEuc, Measure::N2vCos, Measure::N2vEuc] {
                prop_assert!((0.0..=1.0).contains(&r.get(m)), "{} = {}", m, r.get(m));
            }
            prop_assert!(r.values.iter().all(|x| x.is_finite()));
        }
        for a in &records {
            for b in &records {
                if a.target == b.target && a.group_index == b.group_index {
                    for m in group_level {
                        prop_assert_eq!(a.get(m), b.get(m));
                    }
                }
            }
        }
    }

    #[test]
    fn prediction_is_the_sum_of_tree_outputs(seed in any::<u64>(), rows in 20usize..80) {
        let data = random_dataset(rows, 3, seed);
        let cfg = BoostConfig { rounds: 8, max_depth: 3, ..BoostConfig::default() };
        let model = train(&data, &cfg).unwrap();
        for ex in &data.examples {
            let total: f64 = model.trees.iter().map(|t| t.output(&ex.features)).sum();
            prop_assert!((predict(&model, &ex.features).unwrap() - total).abs() < 1e-12);
        }
    }

    #[test]
    fn auc_matches_pairwise_count(
        rows in prop::collection::vec((0u8..6, any::<bool>()), 2..200)
    ) {
        let scores: Vec<f64> = rows.iter().map(|r| r.0 as f64).collect();
        let labels: Vec<bool> = rows.iter().map(|r| r.1).collect();
        let pos = labels.iter().filter(|&&l| l).count();
        prop_assume!(pos > 0 && pos < labels.len());
        let fast = auc(&scores, &labels).unwrap();
        prop_assert!((fast - brute_force_auc(&scores, &labels)).abs() < 1e-12);
    }

    #[test]
    fn inclination_lies_between_member_scores(seed in any::<u64>()) {
        let data = random_dataset(60, 2, seed);
        let model = train(&data, &BoostConfig { rounds: 5, max_depth: 2, ..BoostConfig::default() }).unwrap();
        let g = random_graph(8, 0.4, seed);
        for t in g.nodes() {
            for grp in categorize_target(&g, t).unwrap().groups {
                let feats: Vec<(NodeId, Vec<f64>)> = grp
                    .sources
                    .iter()
                    .map(|&j| (j, data.examples[j.index()].features.clone()))
                    .collect();
                let scores: Vec<f64> = feats.iter().map(|(_, x)| predict(&model, x).unwrap()).collect();
                let v = group_inclination(&model, &grp, &feats).unwrap();
                let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(lo - 1e-12 <= v && v <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn discretization_is_monotone(scores in prop::collection::vec(0u16..50, 5..300)) {
        let scores: Vec<f64> = scores.into_iter().map(|x| x as f64 / 7.0).collect();
        let bins = discretize(&scores).unwrap();
        prop_assert_eq!(bins.counts.iter().sum::<usize>(), scores.len());
        prop_assert!(bins.cuts.windows(2).all(|w| w[0] <= w[1]));
        let mut by_score: Vec<(f64, u8)> = scores.iter().copied().zip(bins.levels.iter().copied()).collect();
        by_score.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in by_score.windows(2) {
            prop_assert!(w[0].1 <= w[1].1);
            if w[0].0 == w[1].0 {
                prop_assert_eq!(w[0].1, w[1].1);
            }
        }
        // concatenating the levels in order gives back the sorted multiset
        let mut regrouped = Vec::new();
        for level in 0..5u8 {
            let mut part: Vec<f64> = scores.iter().zip(&bins.levels).filter(|(_, &l)| l == level).map(|(x, _)| *x).collect();
            part.sort_by(f64::total_cmp);
            regrouped.extend(part);
        }
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assert_eq!(regrouped, sorted);
    }

    #[test]
    fn windows_nest_and_stay_inside_candidates(g in small_graph(10), seed in any::<u64>(), k in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut scores = PairScores::default();
        for (s, t, _) in g.edges() {
            scores.insert(s, t, (rng.gen_range(0..4) as f64) / 2.0);
        }
        let targets = NodeSet::new(g.n(), g.nodes().filter(|v| v.0 % 2 == 0));
        for s in g.nodes() {
            let small = recommend_topk(&g, &scores, s, &targets, k).unwrap();
            let large = recommend_topk(&g, &scores, s, &targets, k + 1).unwrap();
            prop_assert_eq!(&large.targets[..small.targets.len()], &small.targets[..]);
            prop_assert!(small.targets.len() <= k);
            for (t, _) in &large.targets {
                prop_assert!(g.has_edge(s, *t) && targets.contains(*t));
            }
        }
    }
}
