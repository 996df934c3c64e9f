//! Synthetic graphs and simulated friendship-enhancing events.
//!
//! Behavior is driven by logistic models over the true measure values of
//! each exposed pair: a source invites an exposed target with one
//! probability and the target adopts an invitation with another.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::categorize::{EgoScratch, UnionFind};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, NodeSet, NodeSetRole};
use crate::learn::{sigmoid, Behavior};
use crate::measures::{Measure, MeasureRecord};
use crate::recommend::FeedWindow;
use crate::seed::{rng_for, substream};

/// Blocks of one target plus fresh sources split into planted components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedGroups {
    pub targets: usize,
    /// Inclusive range of components per target.
    pub groups_per_target: (usize, usize),
    /// Inclusive range of sources per component.
    pub group_size: (usize, usize),
    /// Inclusive range of the per-component probability of each extra
    /// directed edge beyond the spanning tree.
    pub density: (f64, f64),
    /// Probability that the target links back to a source.
    pub reciprocal: f64,
    /// Mean number of edges from each source to sources of other blocks.
    pub noise_per_source: f64,
}

impl Default for PlantedGroups {
    fn default() -> Self {
        PlantedGroups {
            targets: 100,
            groups_per_target: (1, 4),
            group_size: (1, 6),
            density: (0.0, 0.6),
            reciprocal: 0.3,
            noise_per_source: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GraphFamily {
    /// Two complete digraphs of `size` nodes joined by one reciprocal edge.
    TwoClique { size: usize },
    PlantedGroups(PlantedGroups),
    /// Heavy-tailed degrees: endpoints drawn with probability proportional
    /// to `(i + 1)^(-1 / (exponent - 1))`, degrees capped at `max_degree`.
    PowerLaw {
        nodes: usize,
        edges: usize,
        exponent: f64,
        max_degree: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub family: GraphFamily,
    pub seed: u64,
}

/// A planted target and its components, each sorted by id.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantedTarget {
    pub target: NodeId,
    pub groups: Vec<Vec<NodeId>>,
}

#[derive(Clone, Debug)]
pub struct GeneratedGraph {
    pub graph: Graph,
    pub planted: Vec<PlantedTarget>,
}

fn weight(rng: &mut impl Rng) -> f64 {
    1.0 - rng.gen::<f64>()
}

fn check_range<T: PartialOrd + std::fmt::Debug>(name: &str, r: (T, T)) -> Result<()> {
    if r.0 > r.1 {
        return Err(Error::param("eventsim", format!("{name} range {r:?} is empty")));
    }
    Ok(())
}

fn planted(p: &PlantedGroups, seed: u64) -> Result<GeneratedGraph> {
    check_range("groups_per_target", p.groups_per_target)?;
    check_range("group_size", p.group_size)?;
    check_range("density", p.density)?;
    if p.targets == 0 || p.groups_per_target.0 == 0 || p.group_size.0 == 0 {
        return Err(Error::param("eventsim", "targets, groups and group sizes must be positive"));
    }
    if !(0.0..=1.0).contains(&p.density.0)
        || !(0.0..=1.0).contains(&p.density.1)
        || !(0.0..=1.0).contains(&p.reciprocal)
        || !(p.noise_per_source >= 0.0)
    {
        return Err(Error::param("eventsim", "probabilities must lie in [0, 1]"));
    }
    let mut rng = rng_for(substream(seed, "planted", 0));
    let mut edges: Vec<(u32, u32, f64)> = Vec::new();
    let mut planted = Vec::with_capacity(p.targets);
    // block index of every source node; targets are marked usize::MAX
    let mut block_of: Vec<usize> = Vec::new();
    let mut block_sources: Vec<Vec<u32>> = Vec::new();
    for b in 0..p.targets {
        let t = block_of.len() as u32;
        block_of.push(usize::MAX);
        let k = rng.gen_range(p.groups_per_target.0..=p.groups_per_target.1);
        let mut groups = Vec::with_capacity(k);
        let mut all = Vec::new();
        for _ in 0..k {
            let size = rng.gen_range(p.group_size.0..=p.group_size.1);
            let first = block_of.len() as u32;
            let members: Vec<u32> = (first..first + size as u32).collect();
            block_of.extend(std::iter::repeat_n(b, size));
            let density = rng.gen_range(p.density.0..=p.density.1);
            let mut inside = HashSet::new();
            for i in 1..members.len() {
                let j = members[rng.gen_range(0..i)];
                let (a, c) = if rng.gen_bool(0.5) { (members[i], j) } else { (j, members[i]) };
                inside.insert((a, c));
                edges.push((a, c, weight(&mut rng)));
            }
            for &a in &members {
                for &c in &members {
                    if a != c && !inside.contains(&(a, c)) && rng.gen_bool(density) {
                        edges.push((a, c, weight(&mut rng)));
                    }
                }
            }
            for &j in &members {
                edges.push((j, t, weight(&mut rng)));
                if rng.gen_bool(p.reciprocal) {
                    edges.push((t, j, weight(&mut rng)));
                }
            }
            all.extend_from_slice(&members);
            groups.push(members.into_iter().map(NodeId).collect());
        }
        block_sources.push(all);
        planted.push(PlantedTarget {
            target: NodeId(t),
            groups,
        });
    }
    if p.targets > 1 && p.noise_per_source > 0.0 {
        let mut noise = HashSet::new();
        let whole = p.noise_per_source.floor() as usize;
        let frac = p.noise_per_source - whole as f64;
        for s in 0..block_of.len() as u32 {
            let own = block_of[s as usize];
            if own == usize::MAX {
                continue;
            }
            let count = whole + usize::from(rng.gen_bool(frac));
            for _ in 0..count {
                let mut other = rng.gen_range(0..p.targets - 1);
                if other >= own {
                    other += 1;
                }
                let pool = &block_sources[other];
                let x = pool[rng.gen_range(0..pool.len())];
                if noise.insert((s, x)) {
                    edges.push((s, x, weight(&mut rng)));
                }
            }
        }
    }
    Ok(GeneratedGraph {
        graph: Graph::from_edges(block_of.len(), edges)?,
        planted,
    })
}

fn two_clique(size: usize) -> Result<GeneratedGraph> {
    if size < 2 {
        return Err(Error::param("eventsim", "clique size must be at least 2"));
    }
    let mut edges = Vec::with_capacity(2 * size * (size - 1) + 2);
    for base in [0, size as u32] {
        for i in 0..size as u32 {
            for j in 0..size as u32 {
                if i != j {
                    edges.push((base + i, base + j, 1.0));
                }
            }
        }
    }
    let (a, b) = (size as u32 - 1, size as u32);
    edges.push((a, b, 1.0));
    edges.push((b, a, 1.0));
    Ok(GeneratedGraph {
        graph: Graph::from_edges(2 * size, edges)?,
        planted: Vec::new(),
    })
}

fn power_law(nodes: usize, edges: usize, exponent: f64, max_degree: usize, seed: u64) -> Result<GeneratedGraph> {
    if nodes < 2 {
        return Err(Error::param("eventsim", "power-law graph needs at least 2 nodes"));
    }
    if edges as u128 > nodes as u128 * (nodes as u128 - 1) {
        return Err(Error::param(
            "eventsim",
            format!("{edges} edges exceed the {} possible on {nodes} nodes", nodes * (nodes - 1)),
        ));
    }
    if max_degree == 0 || edges > nodes.saturating_mul(max_degree.min(nodes - 1)) {
        return Err(Error::param("eventsim", "degree cap leaves too few edge slots"));
    }
    if !(exponent > 1.0) {
        return Err(Error::param("eventsim", "exponent must exceed 1"));
    }
    let mut rng = rng_for(substream(seed, "power_law", 0));
    let mut cumulative = Vec::with_capacity(nodes);
    let mut acc = 0.0;
    for i in 0..nodes {
        acc += ((i + 1) as f64).powf(-1.0 / (exponent - 1.0));
        cumulative.push(acc);
    }
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
        let u = rng.gen::<f64>() * acc;
        cumulative.partition_point(|&c| c <= u).min(nodes - 1) as u32
    };
    let mut out_deg = vec![0usize; nodes];
    let mut in_deg = vec![0usize; nodes];
    let mut seen = HashSet::with_capacity(edges);
    let mut list = Vec::with_capacity(edges);
    let mut attempts = 0usize;
    let budget = 200usize.saturating_mul(edges).max(10_000);
    while list.len() < edges {
        attempts += 1;
        if attempts > budget {
            return Err(Error::param(
                "eventsim",
                format!("could not place {edges} edges under the degree cap"),
            ));
        }
        // late in the process the heavy nodes saturate; fall back to uniform endpoints
        let uniform = attempts > 20 * edges;
        let s = if uniform { rng.gen_range(0..nodes as u32) } else { draw(&mut rng) };
        let t = if uniform { rng.gen_range(0..nodes as u32) } else { draw(&mut rng) };
        if s == t || out_deg[s as usize] >= max_degree || in_deg[t as usize] >= max_degree {
            continue;
        }
        if seen.insert(((s as u64) << 32) | t as u64) {
            out_deg[s as usize] += 1;
            in_deg[t as usize] += 1;
            list.push((s, t, weight(&mut rng)));
        }
    }
    Ok(GeneratedGraph {
        graph: Graph::from_edges(nodes, list)?,
        planted: Vec::new(),
    })
}

pub fn generate(cfg: &GeneratorConfig) -> Result<GeneratedGraph> {
    match &cfg.family {
        GraphFamily::TwoClique { size } => two_clique(*size),
        GraphFamily::PlantedGroups(p) => planted(p, cfg.seed),
        GraphFamily::PowerLaw {
            nodes,
            edges,
            exponent,
            max_degree,
        } => power_law(*nodes, *edges, *exponent, *max_degree, cfg.seed),
    }
}

pub fn generate_graph(cfg: &GeneratorConfig) -> Result<Graph> {
    generate(cfg).map(|g| g.graph)
}

/// `sigmoid(intercept + sum_m weight_m * x_m)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Logit {
    pub intercept: f64,
    pub weights: Vec<(Measure, f64)>,
}

impl Logit {
    pub fn probability(&self, rec: &MeasureRecord) -> f64 {
        let z = self.intercept + self.weights.iter().map(|(m, b)| b * rec.get(*m)).sum::<f64>();
        sigmoid(z)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BehaviorModel {
    pub invitation: Logit,
    pub adoption: Logit,
}

impl BehaviorModel {
    /// Both behaviors driven by one measure with the same slope and intercept.
    pub fn single(measure: Measure, slope: f64, intercept: f64) -> Self {
        let logit = Logit {
            intercept,
            weights: vec![(measure, slope)],
        };
        BehaviorModel {
            invitation: logit.clone(),
            adoption: logit,
        }
    }
}

/// Which candidate pairs a source sees.
#[derive(Clone, Debug)]
pub enum Exposure<'a> {
    /// `k` eligible targets per source, uniformly without replacement.
    RandomK(usize),
    /// Targets chosen by a recommender, one window per source.
    Windows(&'a [FeedWindow]),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct PairOutcome {
    pub source: NodeId,
    pub target: NodeId,
    pub exposed: bool,
    pub invited: bool,
    pub adopted: bool,
}

impl PairOutcome {
    pub fn label(&self, behavior: Behavior) -> bool {
        match behavior {
            Behavior::Invitation => self.invited,
            Behavior::Adoption => self.adopted,
        }
    }
}

/// Every candidate pair of the event, sorted by (source, target).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventOutcome {
    pub pairs: Vec<PairOutcome>,
}

impl EventOutcome {
    pub fn exposed(&self) -> impl Iterator<Item = &PairOutcome> + '_ {
        self.pairs.iter().filter(|p| p.exposed)
    }

    /// Writes `source target exposed invited adopted` rows.
    pub fn write<W: Write>(&self, g: &Graph, mut out: W) -> io::Result<()> {
        for p in &self.pairs {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                g.name(p.source),
                g.name(p.target),
                u8::from(p.exposed),
                u8::from(p.invited),
                u8::from(p.adopted)
            )?;
        }
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>, g: &Graph) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg,
            };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 5 {
                return Err(parse_err(format!("expected 5 columns, found {}", f.len())));
            }
            let node = |name: &str| g.id(name).ok_or_else(|| parse_err(format!("unknown node `{name}`")));
            let flag = |s: &str| match s {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(parse_err(format!("expected 0 or 1, found `{other}`"))),
            };
            let p = PairOutcome {
                source: node(f[0])?,
                target: node(f[1])?,
                exposed: flag(f[2])?,
                invited: flag(f[3])?,
                adopted: flag(f[4])?,
            };
            if (p.adopted && !p.invited) || (p.invited && !p.exposed) {
                return Err(parse_err("adoption requires invitation requires exposure".into()));
            }
            pairs.push(p);
        }
        Ok(EventOutcome { pairs })
    }
}

#[inline]
fn pair_key(s: NodeId, t: NodeId) -> u64 {
    ((s.0 as u64) << 32) | t.0 as u64
}

/// Runs one event. Candidates of a source are its target neighbors in the
/// target set. Each pair's behavior draws come from its own stream, so a
/// pair that is exposed under two policies behaves the same under both.
pub fn simulate_event(
    g: &Graph,
    truth: &[MeasureRecord],
    roles: &NodeSetRole,
    behavior: &BehaviorModel,
    exposure: &Exposure<'_>,
    seed: u64,
) -> Result<EventOutcome> {
    let lookup: HashMap<(NodeId, NodeId), &MeasureRecord> =
        truth.iter().map(|r| ((r.source, r.target), r)).collect();
    let windows: Option<BTreeMap<NodeId, &FeedWindow>> = match exposure {
        Exposure::Windows(ws) => Some(ws.iter().map(|w| (w.source, w)).collect()),
        Exposure::RandomK(0) => return Err(Error::param("eventsim", "k must be at least 1")),
        Exposure::RandomK(_) => None,
    };
    let mut pairs = Vec::new();
    for s in roles.sources.iter() {
        let candidates: Vec<NodeId> = g
            .out_neighbors(s)
            .0
            .iter()
            .copied()
            .filter(|&t| roles.targets.contains(t))
            .collect();
        let mut exposed = vec![false; candidates.len()];
        match (exposure, &windows) {
            (Exposure::RandomK(k), _) => {
                let mut rng = rng_for(substream(seed, "exposure", s.0 as u64));
                let mut order: Vec<usize> = (0..candidates.len()).collect();
                order.shuffle(&mut rng);
                for &i in order.iter().take(*k) {
                    exposed[i] = true;
                }
            }
            (Exposure::Windows(_), Some(map)) => {
                if let Some(w) = map.get(&s) {
                    for (t, _) in &w.targets {
                        let i = candidates.binary_search(t).map_err(|_| {
                            Error::validation(
                                "eventsim",
                                format!("window of {s} lists {t}, which is not a candidate"),
                            )
                        })?;
                        exposed[i] = true;
                    }
                }
            }
            (Exposure::Windows(_), None) => unreachable!(),
        }
        for (&t, &is_exposed) in candidates.iter().zip(&exposed) {
            let mut outcome = PairOutcome {
                source: s,
                target: t,
                exposed: is_exposed,
                invited: false,
                adopted: false,
            };
            if is_exposed {
                let rec = lookup.get(&(s, t)).ok_or_else(|| {
                    Error::validation("eventsim", format!("no measures for exposed pair ({s}, {t})"))
                })?;
                let mut rng = rng_for(substream(seed, "behavior", pair_key(s, t)));
                let (u_invite, u_adopt): (f64, f64) = (rng.gen(), rng.gen());
                outcome.invited = u_invite < behavior.invitation.probability(rec);
                outcome.adopted = outcome.invited && u_adopt < behavior.adoption.probability(rec);
            }
            pairs.push(outcome);
        }
    }
    Ok(EventOutcome { pairs })
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CcSizeMode {
    AllSources,
    InvitingSources,
}

/// Averaged component size per target and a histogram with unit-width bins:
/// bin `b` counts targets whose value lies in `[b, b + 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CcSizeHistogram {
    pub per_target: Vec<(NodeId, f64)>,
    pub bins: Vec<(usize, usize)>,
}

impl CcSizeHistogram {
    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "bin_low\tbin_high\tcount")?;
        for (b, c) in &self.bins {
            writeln!(out, "{}\t{}\t{}", b, b + 1, c)?;
        }
        Ok(())
    }
}

/// Number of sources over number of components, for all sources of each
/// target or only for those that invited it (components then taken in the
/// ego network restricted to the inviting sources). Targets with no
/// qualifying sources are left out.
pub fn averaged_cc_size_distribution(
    g: &Graph,
    targets: &NodeSet,
    mode: CcSizeMode,
    outcome: Option<&EventOutcome>,
) -> Result<CcSizeHistogram> {
    let inviting: Option<HashMap<NodeId, Vec<NodeId>>> = match (mode, outcome) {
        (CcSizeMode::AllSources, _) => None,
        (CcSizeMode::InvitingSources, None) => {
            return Err(Error::validation("eventsim", "inviting-source mode needs an event outcome"))
        }
        (CcSizeMode::InvitingSources, Some(o)) => {
            let mut map: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
            for p in o.pairs.iter().filter(|p| p.invited) {
                map.entry(p.target).or_default().push(p.source);
            }
            for v in map.values_mut() {
                v.sort_unstable();
                v.dedup();
            }
            Some(map)
        }
    };
    let mut scratch = EgoScratch::new(g.n());
    let mut per_target = Vec::new();
    for t in targets.iter() {
        match &inviting {
            None => {
                let asg = scratch.categorize(g, t);
                if !asg.groups.is_empty() {
                    per_target.push((t, asg.ego.nodes.len() as f64 / asg.groups.len() as f64));
                }
            }
            Some(map) => {
                let Some(inv) = map.get(&t) else { continue };
                let ego = scratch.ego_network(g, t);
                let mut uf = UnionFind::new(inv.len());
                let mut components = inv.len();
                for (a, b, _) in &ego.edges {
                    if let (Ok(i), Ok(j)) = (inv.binary_search(a), inv.binary_search(b)) {
                        if uf.union(i, j) {
                            components -= 1;
                        }
                    }
                }
                per_target.push((t, inv.len() as f64 / components as f64));
            }
        }
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for (_, v) in &per_target {
        *counts.entry(v.floor() as usize).or_insert(0) += 1;
    }
    Ok(CcSizeHistogram {
        per_target,
        bins: counts.into_iter().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::categorize::categorize_target;

    fn n(v: u32) -> NodeId {
        NodeId(v)
    }

    fn planted_cfg(seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            family: GraphFamily::PlantedGroups(PlantedGroups {
                targets: 10,
                groups_per_target: (3, 3),
                group_size: (4, 4),
                ..PlantedGroups::default()
            }),
            seed,
        }
    }

    #[test]
    fn planted_targets_have_planted_components() {
        let gen = generate(&planted_cfg(4)).unwrap();
        assert_eq!(gen.planted.len(), 10);
        for p in &gen.planted {
            let asg = categorize_target(&gen.graph, p.target).unwrap();
            assert_eq!(asg.groups.len(), 3);
            let groups: Vec<Vec<NodeId>> = asg.groups.iter().map(|grp| grp.sources.clone()).collect();
            assert_eq!(groups, p.groups);
        }
    }

    #[test]
    fn generation_is_seeded() {
        let a = generate_graph(&planted_cfg(4)).unwrap();
        let b = generate_graph(&planted_cfg(4)).unwrap();
        assert_eq!(a.to_snapshot_bytes(), b.to_snapshot_bytes());
        let c = generate_graph(&planted_cfg(5)).unwrap();
        assert_ne!(a.to_snapshot_bytes(), c.to_snapshot_bytes());
    }

    #[test]
    fn infeasible_power_law_is_rejected() {
        let cfg = |edges| GeneratorConfig {
            family: GraphFamily::PowerLaw {
                nodes: 4,
                edges,
                exponent: 2.5,
                max_degree: 10,
            },
            seed: 0,
        };
        assert!(matches!(generate_graph(&cfg(13)), Err(Error::Parameter { .. })));
        let g = generate_graph(&cfg(12)).unwrap();
        assert_eq!(g.m(), 12);
    }

    #[test]
    fn power_law_respects_cap() {
        let g = generate_graph(&GeneratorConfig {
            family: GraphFamily::PowerLaw {
                nodes: 2000,
                edges: 10_000,
                exponent: 2.2,
                max_degree: 60,
            },
            seed: 1,
        })
        .unwrap();
        assert_eq!(g.m(), 10_000);
        assert!(g.nodes().all(|v| g.out_degree(v) <= 60 && g.in_degree(v) <= 60));
    }

    #[test]
    fn two_clique_shape() {
        let g = generate_graph(&GeneratorConfig {
            family: GraphFamily::TwoClique { size: 6 },
            seed: 0,
        })
        .unwrap();
        assert_eq!(g.n(), 12);
        assert_eq!(g.m(), 2 * 30 + 2);
    }

    fn flat_truth(g: &Graph) -> Vec<MeasureRecord> {
        g.edges()
            .map(|(s, t, _)| MeasureRecord {
                source: s,
                target: t,
                group_index: 0,
                flags: 0,
                values: [0.0; crate::measures::MEASURE_COUNT],
            })
            .collect()
    }

    #[test]
    fn zero_coefficients_invite_half_the_time() {
        let gen = generate(&GeneratorConfig {
            family: GraphFamily::PowerLaw {
                nodes: 3000,
                edges: 24_000,
                exponent: 2.5,
                max_degree: 200,
            },
            seed: 2,
        })
        .unwrap();
        let g = gen.graph;
        let truth = flat_truth(&g);
        let roles = NodeSetRole::all(&g);
        let out = simulate_event(&g, &truth, &roles, &BehaviorModel::default(), &Exposure::RandomK(usize::MAX), 8)
            .unwrap();
        let exposed: Vec<_> = out.exposed().collect();
        assert!(exposed.len() >= 10_000);
        let invited = exposed.iter().filter(|p| p.invited).count() as f64;
        let nf = exposed.len() as f64;
        let sigma = (0.25 / nf).sqrt();
        assert!((invited / nf - 0.5).abs() < 3.0 * sigma, "{}", invited / nf);
        for p in &out.pairs {
            assert!(!p.adopted || p.invited);
            assert!(!p.invited || p.exposed);
        }
        let again = simulate_event(&g, &truth, &roles, &BehaviorModel::default(), &Exposure::RandomK(usize::MAX), 8)
            .unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn random_k_and_windows() {
        let g = Graph::from_edges(6, (1..6).map(|t| (0, t, 1.0)).collect()).unwrap();
        let truth = flat_truth(&g);
        let roles = NodeSetRole::all(&g);
        let model = BehaviorModel::default();
        let out = simulate_event(&g, &truth, &roles, &model, &Exposure::RandomK(2), 1).unwrap();
        assert_eq!(out.pairs.len(), 5);
        assert_eq!(out.exposed().count(), 2);

        let windows = vec![FeedWindow {
            source: n(0),
            targets: vec![(n(4), 0.9), (n(2), 0.1)],
        }];
        let out = simulate_event(&g, &truth, &roles, &model, &Exposure::Windows(&windows), 1).unwrap();
        let exposed: Vec<_> = out.exposed().map(|p| p.target).collect();
        assert_eq!(exposed, vec![n(2), n(4)]);

        let empty = NodeSetRole {
            sources: NodeSet::new(6, []),
            targets: NodeSet::all(6),
        };
        assert!(simulate_event(&g, &truth, &empty, &model, &Exposure::RandomK(2), 1)
            .unwrap()
            .pairs
            .is_empty());
    }

    #[test]
    fn outcome_file_roundtrip() {
        let g = Graph::from_edges(6, (1..6).map(|t| (0, t, 1.0)).collect()).unwrap();
        let out = simulate_event(
            &g,
            &flat_truth(&g),
            &NodeSetRole::all(&g),
            &BehaviorModel::default(),
            &Exposure::RandomK(3),
            5,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("o.tsv");
        let mut buf = Vec::new();
        out.write(&g, &mut buf).unwrap();
        fs::write(&path, &buf).unwrap();
        assert_eq!(EventOutcome::read(&path, &g).unwrap(), out);
        fs::write(&path, "0\t1\t0\t1\t0\n").unwrap();
        assert!(EventOutcome::read(&path, &g).is_err());
    }

    #[test]
    fn cc_size_cases() {
        // target 0 with sources 1..6 in two components {1,2,3} and {4,5,6}
        let g = Graph::from_edges(
            7,
            vec![
                (1, 0, 1.0),
                (2, 0, 1.0),
                (3, 0, 1.0),
                (4, 0, 1.0),
                (5, 0, 1.0),
                (6, 0, 1.0),
                (1, 2, 1.0),
                (2, 3, 1.0),
                (4, 5, 1.0),
                (6, 5, 1.0),
            ],
        )
        .unwrap();
        let only0 = NodeSet::new(7, [n(0)]);
        let h = averaged_cc_size_distribution(&g, &only0, CcSizeMode::AllSources, None).unwrap();
        assert_eq!(h.per_target, vec![(n(0), 3.0)]);
        assert_eq!(h.bins, vec![(3, 1)]);

        let invite = |sources: &[u32]| EventOutcome {
            pairs: sources
                .iter()
                .map(|&s| PairOutcome {
                    source: n(s),
                    target: n(0),
                    exposed: true,
                    invited: true,
                    adopted: false,
                })
                .collect(),
        };
        let o = invite(&[1, 2, 3]);
        let h = averaged_cc_size_distribution(&g, &only0, CcSizeMode::InvitingSources, Some(&o)).unwrap();
        assert_eq!(h.per_target, vec![(n(0), 3.0)]);
        // 1 and 3 are not linked once 2 is left out
        let o = invite(&[1, 3, 4]);
        let h = averaged_cc_size_distribution(&g, &only0, CcSizeMode::InvitingSources, Some(&o)).unwrap();
        assert_eq!(h.per_target, vec![(n(0), 1.0)]);
        let h = averaged_cc_size_distribution(&g, &only0, CcSizeMode::InvitingSources, Some(&invite(&[])))
            .unwrap();
        assert!(h.per_target.is_empty());
        assert!(averaged_cc_size_distribution(&g, &only0, CcSizeMode::InvitingSources, None).is_err());
    }
}
