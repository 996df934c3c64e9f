//! Per-pair closeness measures: the individual-level baselines, the
//! group-level baselines, and the social-identity dimensions with their
//! sum, euclidean and component variants.
//!
//! Tie strength `w(t, j)` between a target and a member follows one
//! convention throughout: the weight of `t -> j` if that edge exists, else
//! the weight of `j -> t`, else 0.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::categorize::{CandidateGroup, EgoScratch, GroupAssignment};
use crate::centrality::{self, Aggregation, PageRankVector, PushScratch};
use crate::embed::{EmbeddingTable, RangeAccumulator, SimilarityProvider};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};

macro_rules! measures {
    ($($variant:ident => $name:literal,)*) => {
        /// Column of a [`MeasureRecord`].
        #[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum Measure {
            $($variant,)*
        }

        impl Measure {
            pub const ALL: [Measure; MEASURE_COUNT] = [$(Measure::$variant,)*];

            pub fn name(self) -> &'static str {
                match self {
                    $(Measure::$variant => $name,)*
                }
            }
        }

        impl FromStr for Measure {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok(Measure::$variant),)*
                    other => Err(Error::param("measures", format!("unknown measure `{other}`"))),
                }
            }
        }
    };
}

pub const MEASURE_COUNT: usize = 23;

measures! {
    Tie => "tie",
    Com => "com",
    Ppr => "ppr",
    N2vCos => "n2v_cos",
    N2vEuc => "n2v_euc",
    Gt => "gt",
    Gd => "gd",
    CcCount => "cc_count",
    Gs => "gs",
    Gpr => "gpr",
    GprSum => "gpr_sum",
    Gppr => "gppr",
    GpprSum => "gppr_sum",
    Ugt => "ugt",
    UgtEuc => "ugt_euc",
    UgtSum => "ugt_sum",
    UgtW => "ugt_w",
    UgtDelta => "ugt_delta",
    Igt => "igt",
    IgtEuc => "igt_euc",
    IgtSum => "igt_sum",
    IgtW => "igt_w",
    IgtDelta => "igt_delta",
}

impl Measure {
    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::fmt::Display for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Set on [`MeasureRecord::flags`] when `ugt` fell back to 0 for lack of weight.
pub const FLAG_UGT_ZERO_WEIGHT: u8 = 1;
/// The group has a single source, so `igt` carries no intra-group signal.
pub const FLAG_IGT_SINGLETON: u8 = 2;
/// Some member of the group had no weighted tie inside it.
pub const FLAG_IGT_ZERO_WEIGHT: u8 = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct MeasureRecord {
    pub source: NodeId,
    pub target: NodeId,
    pub group_index: usize,
    pub flags: u8,
    pub values: [f64; MEASURE_COUNT],
}

impl MeasureRecord {
    #[inline]
    pub fn get(&self, m: Measure) -> f64 {
        self.values[m.index()]
    }

    #[inline]
    fn set(&mut self, m: Measure, v: f64) {
        self.values[m.index()] = v;
    }

    pub fn select(&self, columns: &[Measure]) -> Vec<f64> {
        columns.iter().map(|&m| self.get(m)).collect()
    }
}

/// `w(t, j)` under the direction convention described in the module docs.
#[inline]
pub fn pair_weight(g: &Graph, t: NodeId, j: NodeId) -> f64 {
    g.weight(t, j).or_else(|| g.weight(j, t)).unwrap_or(0.0)
}

pub fn tie_strength(g: &Graph, s: NodeId, t: NodeId) -> Result<f64> {
    g.check(s)?;
    g.check(t)?;
    g.weight(s, t).ok_or(Error::MissingEdge {
        module: "measures",
        source_node: s.0,
        target: t.0,
    })
}

fn merged_neighbors(g: &Graph, v: NodeId) -> impl Iterator<Item = NodeId> + '_ {
    let (a, _) = g.out_neighbors(v);
    let (b, _) = g.in_neighbors(v);
    let (mut i, mut j) = (0, 0);
    std::iter::from_fn(move || {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) if x == y => {
                i += 1;
                j += 1;
                x
            }
            (Some(&x), Some(&y)) if x < y => {
                i += 1;
                x
            }
            (_, Some(&y)) => {
                j += 1;
                y
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, None) => return None,
        };
        Some(next)
    })
}

/// `|N(s) ∩ N(t)|` where `N(v)` is the union of in- and out-neighbors.
pub fn common_neighbors(g: &Graph, s: NodeId, t: NodeId) -> Result<usize> {
    g.check(s)?;
    g.check(t)?;
    let mut a = merged_neighbors(g, s).peekable();
    let mut count = 0;
    for y in merged_neighbors(g, t) {
        while a.next_if(|&x| x < y).is_some() {}
        if a.next_if_eq(&y).is_some() {
            count += 1;
        }
    }
    Ok(count)
}

/// Sum of `w(t, j)` over the group's sources.
pub fn user_group_tie(g: &Graph, grp: &CandidateGroup) -> f64 {
    grp.sources.iter().map(|&j| pair_weight(g, grp.target, j)).sum()
}

/// Total weight of directed edges inside the group over `|C| (|C| - 1)`.
pub fn group_density(g: &Graph, grp: &CandidateGroup) -> f64 {
    let members = grp.members();
    let mut total = 0.0;
    for &a in &members {
        let (nbrs, ws) = g.out_neighbors(a);
        for (b, w) in nbrs.iter().zip(ws) {
            if members.binary_search(b).is_ok() {
                total += w;
            }
        }
    }
    let c = members.len() as f64;
    total / (c * (c - 1.0))
}

/// Number of candidate groups of the target.
pub fn multi_membership(assignment: &GroupAssignment) -> usize {
    assignment.groups.len()
}

/// `|C|`, target included.
pub fn inclusiveness(grp: &CandidateGroup) -> usize {
    grp.size()
}

/// Trust of one pivot towards a member set: weighted mean of similarity by
/// tie strength, with its ingredients.
#[derive(Copy, Clone, Debug, Default, PartialEq)]
pub struct TrustParts {
    /// Weighted mean of similarity; 0 when the total weight is 0.
    pub score: f64,
    /// Weighted sum of similarity.
    pub sum: f64,
    pub mean_weight: f64,
    pub mean_similarity: f64,
    pub flags: u8,
}

/// User-group trust of the group's target towards its sources.
pub fn ugt_parts(
    g: &Graph,
    grp: &CandidateGroup,
    emb: &EmbeddingTable,
    sim: &SimilarityProvider,
) -> Result<TrustParts> {
    let t = grp.target;
    let (mut num, mut den, mut dsum) = (0.0, 0.0, 0.0);
    for &j in &grp.sources {
        let w = pair_weight(g, t, j);
        let d = sim.similarity(emb, t, j)?;
        num += w * d;
        den += w;
        dsum += d;
    }
    let k = grp.sources.len() as f64;
    let (score, flags) = if den > 0.0 {
        (num / den, 0)
    } else {
        (0.0, FLAG_UGT_ZERO_WEIGHT)
    };
    Ok(TrustParts {
        score,
        sum: num,
        mean_weight: den / k,
        mean_similarity: dsum / k,
        flags,
    })
}

pub fn ugt(
    g: &Graph,
    grp: &CandidateGroup,
    emb: &EmbeddingTable,
    sim: &SimilarityProvider,
    agg: Aggregation,
) -> Result<f64> {
    let parts = ugt_parts(g, grp, emb, sim)?;
    Ok(match agg {
        Aggregation::Mean => parts.score,
        Aggregation::Sum => parts.sum,
    })
}

/// Intra-group trust for several similarity providers at once. Each source
/// `j` acts as pivot towards the other sources; the group score is the mean
/// of the pivots' scores. The sum form adds the pivots' weighted sums.
pub fn igt_parts_multi(
    g: &Graph,
    grp: &CandidateGroup,
    emb: &EmbeddingTable,
    sims: &[&SimilarityProvider],
) -> Result<Vec<TrustParts>> {
    let src = &grp.sources;
    let k = src.len();
    if k < 2 {
        return Ok(vec![
            TrustParts {
                flags: FLAG_IGT_SINGLETON,
                ..TrustParts::default()
            };
            sims.len()
        ]);
    }
    let p = sims.len();
    let mut num = vec![0.0; k * p];
    let mut dsum = vec![0.0; k * p];
    let mut den = vec![0.0; k];
    for a in 0..k {
        for b in (a + 1)..k {
            let (ja, jb) = (src[a], src[b]);
            let w_ab = g.weight(ja, jb);
            let w_ba = g.weight(jb, ja);
            let wa = w_ab.or(w_ba).unwrap_or(0.0);
            let wb = w_ba.or(w_ab).unwrap_or(0.0);
            den[a] += wa;
            den[b] += wb;
            for (q, sim) in sims.iter().enumerate() {
                let d = sim.similarity(emb, ja, jb)?;
                num[a * p + q] += wa * d;
                num[b * p + q] += wb * d;
                dsum[a * p + q] += d;
                dsum[b * p + q] += d;
            }
        }
    }
    let kf = k as f64;
    let others = (k - 1) as f64;
    let zero_weight = den.contains(&0.0);
    let mean_weight = den.iter().map(|d| d / others).sum::<f64>() / kf;
    Ok((0..p)
        .map(|q| {
            let mut parts = TrustParts {
                mean_weight,
                flags: if zero_weight { FLAG_IGT_ZERO_WEIGHT } else { 0 },
                ..TrustParts::default()
            };
            for a in 0..k {
                let n = num[a * p + q];
                if den[a] > 0.0 {
                    parts.score += n / den[a];
                }
                parts.sum += n;
                parts.mean_similarity += dsum[a * p + q] / others;
            }
            parts.score /= kf;
            parts.mean_similarity /= kf;
            parts
        })
        .collect())
}

pub fn igt_parts(
    g: &Graph,
    grp: &CandidateGroup,
    emb: &EmbeddingTable,
    sim: &SimilarityProvider,
) -> Result<TrustParts> {
    Ok(igt_parts_multi(g, grp, emb, &[sim])?[0])
}

pub fn igt(
    g: &Graph,
    grp: &CandidateGroup,
    emb: &EmbeddingTable,
    sim: &SimilarityProvider,
    agg: Aggregation,
) -> Result<f64> {
    let parts = igt_parts(g, grp, emb, sim)?;
    Ok(match agg {
        Aggregation::Mean => parts.score,
        Aggregation::Sum => parts.sum,
    })
}

/// How personalized PageRank entries are obtained.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PprMethod {
    /// The truncated series, exact up to `eps`. Costs `O(T m)` per start node.
    Series,
    /// Local forward push with residual threshold `r_max`.
    Push { r_max: f64 },
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureConfig {
    pub alpha: f64,
    pub eps: f64,
    pub ppr: PprMethod,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig {
            alpha: 0.15,
            eps: 1e-6,
            ppr: PprMethod::Series,
        }
    }
}

/// Fitted cosine and euclidean providers.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityPair {
    pub cosine: SimilarityProvider,
    pub euclidean: SimilarityProvider,
}

/// Per-target work list: the requested sources, sorted by id.
fn group_pairs(g: &Graph, pairs: &[(NodeId, NodeId)]) -> Result<Vec<(NodeId, Vec<NodeId>)>> {
    let mut sorted = Vec::with_capacity(pairs.len());
    for &(s, t) in pairs {
        g.check(s)?;
        g.check(t)?;
        if !g.has_edge(s, t) {
            return Err(Error::MissingEdge {
                module: "measures",
                source_node: s.0,
                target: t.0,
            });
        }
        sorted.push((t, s));
    }
    sorted.sort_unstable();
    let mut out: Vec<(NodeId, Vec<NodeId>)> = Vec::new();
    for (t, s) in sorted {
        match out.last_mut() {
            Some((last, v)) if *last == t => v.push(s),
            _ => out.push((t, vec![s])),
        }
    }
    Ok(out)
}

/// Indices of groups that contain at least one requested source.
fn touched_groups(asg: &GroupAssignment, sources: &[NodeId]) -> Vec<usize> {
    let mut idx: Vec<usize> = sources.iter().filter_map(|&s| asg.group_index_of(s)).collect();
    idx.sort_unstable();
    idx.dedup();
    idx
}

/// Fits both similarity providers over the pairs themselves, each
/// touched group's (target, source) pairs and all unordered source pairs
/// inside those groups.
pub fn fit_similarity(
    g: &Graph,
    pairs: &[(NodeId, NodeId)],
    emb: &EmbeddingTable,
) -> Result<SimilarityPair> {
    check_embedding(g, emb)?;
    let work = group_pairs(g, pairs)?;
    let acc = work
        .par_iter()
        .map_init(
            || EgoScratch::new(g.n()),
            |scratch, (t, sources)| {
                let mut acc = RangeAccumulator::default();
                for &s in sources {
                    acc.add(emb, s, *t);
                }
                let asg = scratch.categorize(g, *t);
                for gi in touched_groups(&asg, sources) {
                    let src = &asg.groups[gi].sources;
                    for (a, &ja) in src.iter().enumerate() {
                        acc.add(emb, *t, ja);
                        for &jb in &src[a + 1..] {
                            acc.add(emb, ja, jb);
                        }
                    }
                }
                acc
            },
        )
        .reduce(RangeAccumulator::default, RangeAccumulator::merge);
    let (cosine, euclidean) = acc.providers()?;
    Ok(SimilarityPair { cosine, euclidean })
}

fn check_embedding(g: &Graph, emb: &EmbeddingTable) -> Result<()> {
    if emb.len() != g.n() {
        return Err(Error::validation(
            "measures",
            format!("embedding has {} rows for {} nodes", emb.len(), g.n()),
        ));
    }
    Ok(())
}

/// Personalized PageRank rows restricted to what the measures read:
/// `to_sources[t]` follows `g.in_neighbors(t)`, `to_targets[s]` follows
/// `g.out_neighbors(s)`.
struct PprTable {
    to_sources: Vec<Vec<f64>>,
    to_targets: Vec<Vec<f64>>,
}

impl PprTable {
    fn build(g: &Graph, work: &[(NodeId, Vec<NodeId>)], cfg: &MeasureConfig) -> Result<Self> {
        centrality::check_params(cfg.alpha, cfg.eps)?;
        let n = g.n();
        let mut need_in = vec![false; n];
        let mut need_out = vec![false; n];
        for (t, sources) in work {
            need_in[t.index()] = true;
            for s in sources {
                need_out[s.index()] = true;
            }
        }
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n as u32)
            .into_par_iter()
            .map_init(
                || None::<PushScratch>,
                |scratch, v| {
                    let (i, o) = (need_in[v as usize], need_out[v as usize]);
                    if !i && !o {
                        return Ok((Vec::new(), Vec::new()));
                    }
                    let v = NodeId(v);
                    let read = |f: &dyn Fn(NodeId) -> f64| {
                        let ins = if i {
                            g.in_neighbors(v).0.iter().map(|&j| f(j)).collect()
                        } else {
                            Vec::new()
                        };
                        let outs = if o {
                            g.out_neighbors(v).0.iter().map(|&j| f(j)).collect()
                        } else {
                            Vec::new()
                        };
                        (ins, outs)
                    };
                    Ok(match cfg.ppr {
                        PprMethod::Series => {
                            let ppr = centrality::personalized_pagerank(g, v, cfg.alpha, cfg.eps)?;
                            read(&|j| ppr.values[j.index()])
                        }
                        PprMethod::Push { r_max } => {
                            let push = scratch.get_or_insert_with(|| PushScratch::new(n));
                            push.run(g, v, cfg.alpha, r_max);
                            read(&|j| push.estimate(j))
                        }
                    })
                },
            )
            .collect::<Result<_>>()?;
        let (to_sources, to_targets) = rows.into_iter().unzip();
        Ok(PprTable {
            to_sources,
            to_targets,
        })
    }
}

fn validate_ppr(cfg: &MeasureConfig) -> Result<()> {
    if let PprMethod::Push { r_max } = cfg.ppr {
        if !(r_max > 0.0 && r_max < 1.0) {
            return Err(Error::param("measures", format!("push threshold {r_max} not in (0, 1)")));
        }
    }
    Ok(())
}

/// Group-level values shared by every pair of one (target, group).
fn group_values(
    g: &Graph,
    asg: &GroupAssignment,
    grp: &CandidateGroup,
    emb: &EmbeddingTable,
    sims: &SimilarityPair,
    pr: &PageRankVector,
    ppr_from_target: &[f64],
) -> Result<(MeasureRecord, u8)> {
    let mut rec = MeasureRecord {
        source: NodeId(0),
        target: grp.target,
        group_index: grp.group_index,
        flags: 0,
        values: [0.0; MEASURE_COUNT],
    };
    let k = grp.sources.len() as f64;
    rec.set(Measure::Gt, user_group_tie(g, grp));
    rec.set(Measure::Gd, group_density(g, grp));
    rec.set(Measure::CcCount, multi_membership(asg) as f64);
    rec.set(Measure::Gs, inclusiveness(grp) as f64);
    let gpr_sum = centrality::group_pagerank(pr, grp, Aggregation::Sum)?;
    rec.set(Measure::GprSum, gpr_sum);
    rec.set(Measure::Gpr, gpr_sum / k);
    let (in_nbrs, _) = g.in_neighbors(grp.target);
    let gppr_sum: f64 = grp
        .sources
        .iter()
        .map(|j| ppr_from_target[in_nbrs.binary_search(j).expect("group source is an in-neighbor")])
        .sum();
    rec.set(Measure::GpprSum, gppr_sum);
    rec.set(Measure::Gppr, gppr_sum / k);

    let u = ugt_parts(g, grp, emb, &sims.cosine)?;
    let ue = ugt_parts(g, grp, emb, &sims.euclidean)?;
    rec.set(Measure::Ugt, u.score);
    rec.set(Measure::UgtEuc, ue.score);
    rec.set(Measure::UgtSum, u.sum);
    rec.set(Measure::UgtW, u.mean_weight);
    rec.set(Measure::UgtDelta, u.mean_similarity);

    let ig = igt_parts_multi(g, grp, emb, &[&sims.cosine, &sims.euclidean])?;
    rec.set(Measure::Igt, ig[0].score);
    rec.set(Measure::IgtEuc, ig[1].score);
    rec.set(Measure::IgtSum, ig[0].sum);
    rec.set(Measure::IgtW, ig[0].mean_weight);
    rec.set(Measure::IgtDelta, ig[0].mean_similarity);
    Ok((rec, u.flags | ig[0].flags))
}

/// Every measure for every pair, sorted by (target, source). Similarity
/// providers are fitted over the population described in [`fit_similarity`].
pub fn compute_all(
    g: &Graph,
    pairs: &[(NodeId, NodeId)],
    emb: &EmbeddingTable,
    cfg: &MeasureConfig,
) -> Result<Vec<MeasureRecord>> {
    if pairs.is_empty() {
        return Ok(Vec::new());
    }
    let sims = fit_similarity(g, pairs, emb)?;
    compute_with(g, pairs, emb, &sims, cfg)
}

/// [`compute_all`] with already fitted providers.
pub fn compute_with(
    g: &Graph,
    pairs: &[(NodeId, NodeId)],
    emb: &EmbeddingTable,
    sims: &SimilarityPair,
    cfg: &MeasureConfig,
) -> Result<Vec<MeasureRecord>> {
    check_embedding(g, emb)?;
    validate_ppr(cfg)?;
    let work = group_pairs(g, pairs)?;
    let pr = centrality::pagerank(g, cfg.alpha, cfg.eps)?;
    let ppr = PprTable::build(g, &work, cfg)?;
    let per_target: Vec<Vec<MeasureRecord>> = work
        .par_iter()
        .map_init(
            || EgoScratch::new(g.n()),
            |scratch, (t, sources)| -> Result<Vec<MeasureRecord>> {
                let t = *t;
                let asg = scratch.categorize(g, t);
                let mut shared: Vec<Option<(MeasureRecord, u8)>> = vec![None; asg.groups.len()];
                for gi in touched_groups(&asg, sources) {
                    shared[gi] = Some(group_values(
                        g,
                        &asg,
                        &asg.groups[gi],
                        emb,
                        sims,
                        &pr,
                        &ppr.to_sources[t.index()],
                    )?);
                }
                sources
                    .iter()
                    .map(|&s| {
                        let gi = asg.group_index_of(s).expect("pair source is a source of its target");
                        let (base, flags) = shared[gi].as_ref().expect("group computed above");
                        let mut rec = base.clone();
                        rec.source = s;
                        rec.flags = *flags;
                        let (out, ws) = g.out_neighbors(s);
                        let pos = out.binary_search(&t).expect("pair is an edge");
                        rec.set(Measure::Tie, ws[pos]);
                        rec.set(Measure::Com, common_neighbors(g, s, t)? as f64);
                        rec.set(Measure::Ppr, ppr.to_targets[s.index()][pos]);
                        rec.set(Measure::N2vCos, sims.cosine.similarity(emb, s, t)?);
                        rec.set(Measure::N2vEuc, sims.euclidean.similarity(emb, s, t)?);
                        Ok(rec)
                    })
                    .collect()
            },
        )
        .collect::<Result<_>>()?;
    Ok(per_target.into_iter().flatten().collect())
}

/// Header of the feature file.
pub fn feature_header() -> String {
    let mut cols = vec!["source", "target", "group", "flags"];
    cols.extend(Measure::ALL.iter().map(|m| m.name()));
    cols.join("\t")
}

/// Tab-separated feature file: a header row, then one row per record with
/// external node names. Values use the shortest round-trip representation.
pub fn write_features<W: Write>(g: &Graph, records: &[MeasureRecord], out: W) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "{}", feature_header())?;
    for r in records {
        write!(
            out,
            "{}\t{}\t{}\t{}",
            g.name(r.source),
            g.name(r.target),
            r.group_index,
            r.flags
        )?;
        for v in &r.values {
            write!(out, "\t{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()
}

/// Reads a file produced by [`write_features`]. Lines starting with `#` are
/// skipped.
pub fn read_features(path: impl AsRef<Path>, g: &Graph) -> Result<Vec<MeasureRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let header = feature_header();
    let mut seen_header = false;
    let mut records = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !seen_header {
            if line != header {
                return Err(parse_err("unexpected feature header".into()));
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 + MEASURE_COUNT {
            return Err(parse_err(format!(
                "expected {} columns, found {}",
                4 + MEASURE_COUNT,
                fields.len()
            )));
        }
        let node = |name: &str| g.id(name).ok_or_else(|| parse_err(format!("unknown node `{name}`")));
        let mut values = [0.0; MEASURE_COUNT];
        for (slot, f) in values.iter_mut().zip(&fields[4..]) {
            *slot = f.parse().map_err(|_| parse_err(format!("invalid value `{f}`")))?;
        }
        records.push(MeasureRecord {
            source: node(fields[0])?,
            target: node(fields[1])?,
            group_index: fields[2]
                .parse()
                .map_err(|_| parse_err(format!("invalid group index `{}`", fields[2])))?,
            flags: fields[3]
                .parse()
                .map_err(|_| parse_err(format!("invalid flags `{}`", fields[3])))?,
            values,
        });
    }
    if !seen_header {
        return Err(Error::format("measures", format!("{}: missing header", path.display())));
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::categorize::categorize_target;
    use crate::embed::{Provenance, SimilarityKind};

    fn n(v: u32) -> NodeId {
        NodeId(v)
    }

    fn group(t: u32, sources: &[u32]) -> CandidateGroup {
        CandidateGroup {
            target: n(t),
            sources: sources.iter().map(|&s| n(s)).collect(),
            group_index: 0,
        }
    }

    fn table(rows: &[&[f64]]) -> EmbeddingTable {
        let dim = rows[0].len();
        EmbeddingTable::from_rows(
            dim,
            rows.iter().flat_map(|r| r.iter().copied()).collect(),
            Provenance::Imported { path: String::new() },
        )
        .unwrap()
    }

    #[test]
    fn names_roundtrip_and_order() {
        assert_eq!(Measure::ALL.len(), MEASURE_COUNT);
        for (i, m) in Measure::ALL.iter().enumerate() {
            assert_eq!(m.index(), i);
            assert_eq!(m.name().parse::<Measure>().unwrap(), *m);
        }
        assert_eq!(Measure::ALL[0].name(), "tie");
        assert_eq!(Measure::ALL[22].name(), "igt_delta");
        assert!("nope".parse::<Measure>().is_err());
    }

    #[test]
    fn tie_strength_cases() {
        let g = Graph::from_edges(3, vec![(0, 1, 0.7), (1, 2, 1.0)]).unwrap();
        assert_eq!(tie_strength(&g, n(0), n(1)).unwrap(), 0.7);
        assert_eq!(tie_strength(&g, n(1), n(2)).unwrap(), 1.0);
        assert!(matches!(tie_strength(&g, n(1), n(0)), Err(Error::MissingEdge { .. })));
    }

    #[test]
    fn common_neighbor_cases() {
        let g = Graph::from_edges(4, vec![(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert_eq!(common_neighbors(&g, n(0), n(2)).unwrap(), 0);
        // s <-> x, t <-> x
        let g = Graph::from_edges(
            3,
            vec![(0, 2, 1.0), (2, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0), (0, 1, 1.0)],
        )
        .unwrap();
        assert_eq!(common_neighbors(&g, n(0), n(1)).unwrap(), 1);
        let mut edges = vec![];
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    edges.push((i, j, 1.0));
                }
            }
        }
        let g = Graph::from_edges(4, edges).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(common_neighbors(&g, n(i), n(j)).unwrap(), 2);
                }
            }
        }
    }

    #[test]
    fn user_group_tie_cases() {
        let g = Graph::from_edges(3, vec![(1, 0, 0.5), (2, 0, 0.9), (0, 2, 1.0)]).unwrap();
        // outgoing weight wins over the incoming one
        assert_eq!(user_group_tie(&g, &group(0, &[1, 2])), 1.5);
        assert_eq!(user_group_tie(&g, &group(0, &[1])), 0.5);
        let g = Graph::from_edges(3, vec![(1, 2, 0.5)]).unwrap();
        assert_eq!(user_group_tie(&g, &group(0, &[1, 2])), 0.0);
    }

    #[test]
    fn group_density_by_hand() {
        // t=0, a=1, b=2
        let g = Graph::from_edges(3, vec![(0, 1, 0.5), (1, 0, 0.5), (1, 2, 0.5)]).unwrap();
        assert_eq!(group_density(&g, &group(0, &[1, 2])), 0.25);
        let mut edges = vec![];
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    edges.push((i, j, 1.0));
                }
            }
        }
        let g = Graph::from_edges(4, edges).unwrap();
        assert_eq!(group_density(&g, &group(0, &[1, 2, 3])), 1.0);
    }

    #[test]
    fn group_size_and_membership() {
        let g = crate::categorize::tests::example_graph();
        let asg = categorize_target(&g, n(1)).unwrap();
        assert_eq!(multi_membership(&asg), 2);
        assert_eq!(inclusiveness(&asg.groups[0]), 4);
        assert_eq!(inclusiveness(&group(0, &[1])), 2);
        let star = Graph::from_edges(4, vec![(1, 0, 1.0), (2, 0, 1.0), (3, 0, 1.0)]).unwrap();
        assert_eq!(multi_membership(&categorize_target(&star, n(0)).unwrap()), 3);
        assert_eq!(multi_membership(&categorize_target(&star, n(1)).unwrap()), 0);
    }

    /// Provider whose normalized similarity equals the raw cosine on [0, 1].
    fn unit_cosine() -> SimilarityProvider {
        SimilarityProvider::with_range(SimilarityKind::Cosine, 0.0, 1.0).unwrap()
    }

    /// Vectors for t=0, a=1, b=2 with cos(t,a)=0.4 and cos(t,b)=0.8.
    fn ugt_fixture() -> (Graph, EmbeddingTable) {
        let g = Graph::from_edges(3, vec![(1, 0, 0.5), (2, 0, 1.0)]).unwrap();
        let a = [0.4, (1.0f64 - 0.16).sqrt()];
        let b = [0.8, 0.6];
        (g, table(&[&[1.0, 0.0], &a, &b]))
    }

    #[test]
    fn ugt_by_hand() {
        let (g, emb) = ugt_fixture();
        let sim = unit_cosine();
        let grp = group(0, &[1, 2]);
        let mean = ugt(&g, &grp, &emb, &sim, Aggregation::Mean).unwrap();
        assert!((mean - 1.0 / 1.5).abs() < 1e-12);
        assert!((mean - 0.6667).abs() < 5e-5);
        let sum = ugt(&g, &grp, &emb, &sim, Aggregation::Sum).unwrap();
        assert!((sum - 1.0).abs() < 1e-12);
        let parts = ugt_parts(&g, &grp, &emb, &sim).unwrap();
        assert!((parts.mean_weight - 0.75).abs() < 1e-12);
        assert!((parts.mean_similarity - 0.6).abs() < 1e-12);
    }

    #[test]
    fn ugt_constant_similarity_and_zero_weight() {
        let g = Graph::from_edges(4, vec![(1, 0, 0.2), (2, 0, 0.9), (3, 0, 0.4)]).unwrap();
        let emb = table(&[&[1.0, 1.0], &[2.0, 2.0], &[3.0, 3.0], &[0.5, 0.5]]);
        let sim = SimilarityProvider::with_range(SimilarityKind::Cosine, 0.0, 2.0).unwrap();
        let v = ugt(&g, &group(0, &[1, 2, 3]), &emb, &sim, Aggregation::Mean).unwrap();
        assert!((v - 0.5).abs() < 1e-12);

        let g = Graph::from_edges(4, vec![(1, 2, 0.2)]).unwrap();
        let parts = ugt_parts(&g, &group(0, &[1, 2]), &emb, &sim).unwrap();
        assert_eq!(parts.score, 0.0);
        assert_eq!(parts.flags, FLAG_UGT_ZERO_WEIGHT);
    }

    #[test]
    fn igt_cases() {
        let emb = table(&[&[1.0, 0.0], &[0.6, 0.8], &[0.0, 1.0]]);
        let sim = unit_cosine();
        let g = Graph::from_edges(3, vec![(1, 0, 1.0), (2, 0, 1.0), (1, 2, 0.3), (2, 1, 0.9)]).unwrap();
        let parts = igt_parts(&g, &group(0, &[1]), &emb, &sim).unwrap();
        assert_eq!(parts.score, 0.0);
        assert_eq!(parts.flags, FLAG_IGT_SINGLETON);

        let psi = igt(&g, &group(0, &[1, 2]), &emb, &sim, Aggregation::Mean).unwrap();
        let delta_ab = sim.similarity(&emb, n(1), n(2)).unwrap();
        assert!((psi - delta_ab).abs() < 1e-12);
        assert!((psi - 0.8).abs() < 1e-12);
        let sum = igt(&g, &group(0, &[1, 2]), &emb, &sim, Aggregation::Sum).unwrap();
        assert!((sum - (0.3 + 0.9) * 0.8).abs() < 1e-12);

        let g = Graph::from_edges(3, vec![(1, 0, 1.0), (2, 0, 1.0)]).unwrap();
        let parts = igt_parts(&g, &group(0, &[1, 2]), &emb, &sim).unwrap();
        assert_eq!(parts.score, 0.0);
        assert_eq!(parts.flags, FLAG_IGT_ZERO_WEIGHT);
        assert!((parts.mean_similarity - 0.8).abs() < 1e-12);
    }

    fn example_embedding(n: usize) -> EmbeddingTable {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![1.0 + i as f64, (i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()])
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        table(&refs)
    }

    #[test]
    fn compute_all_on_example_graph() {
        let g = crate::categorize::tests::example_graph();
        let emb = example_embedding(g.n());
        let pairs = vec![(n(3), n(1)), (n(2), n(1)), (n(5), n(1))];
        let recs = compute_all(&g, &pairs, &emb, &MeasureConfig::default()).unwrap();
        assert_eq!(recs.len(), 3);
        let order: Vec<_> = recs.iter().map(|r| r.source).collect();
        assert_eq!(order, vec![n(2), n(3), n(5)]);
        assert_eq!(recs[0].get(Measure::CcCount), 2.0);
        assert_eq!(recs[0].get(Measure::Gs), 4.0);
        assert_eq!(recs[2].get(Measure::Gs), 3.0);
        for m in [Measure::Gs, Measure::Gpr, Measure::Gppr, Measure::Igt, Measure::Gd, Measure::Gt, Measure::CcCount] {
            assert_eq!(recs[0].get(m), recs[1].get(m), "{m}");
        }
        for r in &recs {
            assert!(r.values.iter().all(|v| v.is_finite()));
            for m in [Measure::Ugt, Measure::UgtEuc, Measure::Igt, Measure::IgtEuc] {
                assert!((0.0..=1.0).contains(&r.get(m)));
            }
            let k = r.get(Measure::Gs) - 1.0;
            assert!((r.get(Measure::Gpr) * k - r.get(Measure::GprSum)).abs() < 1e-15);
        }
        assert!(compute_all(&g, &[], &emb, &MeasureConfig::default()).unwrap().is_empty());
        assert!(matches!(
            compute_all(&g, &[(n(1), n(3))], &emb, &MeasureConfig::default()),
            Err(Error::MissingEdge { .. })
        ));
    }

    #[test]
    fn compute_all_matches_per_pair_calls() {
        let g = crate::categorize::tests::example_graph();
        let emb = example_embedding(g.n());
        let pairs: Vec<_> = g.edges().map(|(s, t, _)| (s, t)).collect();
        let cfg = MeasureConfig::default();
        let sims = fit_similarity(&g, &pairs, &emb).unwrap();
        let recs = compute_with(&g, &pairs, &emb, &sims, &cfg).unwrap();
        assert_eq!(recs.len(), pairs.len());
        let pr = centrality::pagerank(&g, cfg.alpha, cfg.eps).unwrap();
        for r in &recs {
            let (s, t) = (r.source, r.target);
            let asg = categorize_target(&g, t).unwrap();
            let grp = asg.group_of(s).unwrap();
            let ppr = centrality::personalized_pagerank(&g, s, cfg.alpha, cfg.eps).unwrap();
            let expect = [
                (Measure::Tie, tie_strength(&g, s, t).unwrap()),
                (Measure::Com, common_neighbors(&g, s, t).unwrap() as f64),
                (Measure::Ppr, ppr.values[t.index()]),
                (Measure::N2vCos, sims.cosine.similarity(&emb, s, t).unwrap()),
                (Measure::Gt, user_group_tie(&g, grp)),
                (Measure::Gd, group_density(&g, grp)),
                (Measure::Gs, inclusiveness(grp) as f64),
                (Measure::Gpr, centrality::group_pagerank(&pr, grp, Aggregation::Mean).unwrap()),
                (
                    Measure::GpprSum,
                    centrality::group_personalized_pagerank(&g, grp, cfg.alpha, cfg.eps, Aggregation::Sum)
                        .unwrap(),
                ),
                (Measure::Ugt, ugt(&g, grp, &emb, &sims.cosine, Aggregation::Mean).unwrap()),
                (Measure::UgtEuc, ugt(&g, grp, &emb, &sims.euclidean, Aggregation::Mean).unwrap()),
                (Measure::IgtSum, igt(&g, grp, &emb, &sims.cosine, Aggregation::Sum).unwrap()),
            ];
            for (m, v) in expect {
                assert!((r.get(m) - v).abs() < 1e-12, "{m}: {} vs {v}", r.get(m));
            }
        }
    }

    #[test]
    fn push_method_is_close_to_series() {
        let g = crate::categorize::tests::example_graph();
        let emb = example_embedding(g.n());
        let pairs: Vec<_> = g.edges().map(|(s, t, _)| (s, t)).collect();
        let exact = compute_all(&g, &pairs, &emb, &MeasureConfig::default()).unwrap();
        let cfg = MeasureConfig {
            ppr: PprMethod::Push { r_max: 1e-10 },
            ..MeasureConfig::default()
        };
        let pushed = compute_all(&g, &pairs, &emb, &cfg).unwrap();
        for (a, b) in exact.iter().zip(&pushed) {
            for m in [Measure::Ppr, Measure::Gppr] {
                assert!((a.get(m) - b.get(m)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn feature_file_roundtrip() {
        let g = crate::categorize::tests::example_graph();
        let emb = example_embedding(g.n());
        let pairs: Vec<_> = g.edges().map(|(s, t, _)| (s, t)).collect();
        let recs = compute_all(&g, &pairs, &emb, &MeasureConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.tsv");
        let mut buf = b"# manifest abc\n".to_vec();
        write_features(&g, &recs, &mut buf).unwrap();
        fs::write(&path, &buf).unwrap();
        let back = read_features(&path, &g).unwrap();
        assert_eq!(back, recs);
    }
}
