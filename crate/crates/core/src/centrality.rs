//! Global and personalized PageRank as the truncated series
//! `sum_t alpha (1 - alpha)^t s P^t` with the unweighted, degree-uniform
//! transition matrix `P[i, j] = 1 / d_i`. Dangling rows are zero, so walk
//! mass reaching a node without out-edges is absorbed rather than
//! redistributed.
//!
//! [`PushScratch`] provides local forward push for computing many
//! personalized vectors at graph scale.

use std::collections::VecDeque;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::categorize::CandidateGroup;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Mean,
    Sum,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum PageRankKind {
    Global,
    Personalized(NodeId),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PageRankVector {
    pub values: Vec<f64>,
    pub alpha: f64,
    pub kind: PageRankKind,
}

impl PageRankVector {
    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum()
    }
}

pub(crate) fn check_params(alpha: f64, eps: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param("centrality", format!("alpha {alpha} not in (0, 1)")));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::param("centrality", format!("eps {eps} must be positive")));
    }
    Ok(())
}

/// Number of series terms kept: the smallest `T` with `(1 - alpha)^T < eps`.
fn series_len(alpha: f64, eps: f64) -> usize {
    let mut residual = 1.0;
    let mut t = 0;
    while residual >= eps {
        residual *= 1.0 - alpha;
        t += 1;
    }
    t
}

fn truncated_series(g: &Graph, start: Vec<f64>, alpha: f64, eps: f64) -> Vec<f64> {
    let n = g.n();
    let terms = series_len(alpha, eps);
    let mut acc = vec![0.0; n];
    let mut cur = start;
    let mut next = vec![0.0; n];
    for t in 0..terms {
        for (a, c) in acc.iter_mut().zip(&cur) {
            *a += alpha * c;
        }
        if t + 1 == terms {
            break;
        }
        next.iter_mut().for_each(|x| *x = 0.0);
        for u in 0..n {
            let mass = cur[u];
            if mass == 0.0 {
                continue;
            }
            let (nbrs, _) = g.out_neighbors(NodeId(u as u32));
            if nbrs.is_empty() {
                continue;
            }
            let share = (1.0 - alpha) * mass / nbrs.len() as f64;
            for v in nbrs {
                next[v.index()] += share;
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    acc
}

/// Global PageRank with uniform start vector.
pub fn pagerank(g: &Graph, alpha: f64, eps: f64) -> Result<PageRankVector> {
    check_params(alpha, eps)?;
    let n = g.n();
    let start = vec![if n == 0 { 0.0 } else { 1.0 / n as f64 }; n];
    Ok(PageRankVector {
        values: truncated_series(g, start, alpha, eps),
        alpha,
        kind: PageRankKind::Global,
    })
}

/// PageRank with a one-hot start at `source`: the stop distribution of a
/// random walk with restart probability `alpha` launched from `source`.
pub fn personalized_pagerank(
    g: &Graph,
    source: NodeId,
    alpha: f64,
    eps: f64,
) -> Result<PageRankVector> {
    check_params(alpha, eps)?;
    g.check(source)?;
    let mut start = vec![0.0; g.n()];
    start[source.index()] = 1.0;
    Ok(PageRankVector {
        values: truncated_series(g, start, alpha, eps),
        alpha,
        kind: PageRankKind::Personalized(source),
    })
}

fn aggregate(values: impl Iterator<Item = f64>, count: usize, agg: Aggregation) -> f64 {
    let sum: f64 = values.sum();
    match agg {
        Aggregation::Sum => sum,
        Aggregation::Mean => sum / count as f64,
    }
}

/// Group PageRank: mean (or sum) of the global PageRank of the group's
/// non-target members.
pub fn group_pagerank(pr: &PageRankVector, grp: &CandidateGroup, agg: Aggregation) -> Result<f64> {
    if pr.kind != PageRankKind::Global {
        return Err(Error::param("centrality", "group PageRank needs a global vector"));
    }
    if grp.sources.is_empty() {
        return Err(Error::validation("centrality", "group contains only its target"));
    }
    Ok(aggregate(
        grp.sources.iter().map(|j| pr.values[j.index()]),
        grp.sources.len(),
        agg,
    ))
}

/// Group personalized PageRank: mean (or sum) of `pi(target, j)` over the
/// group's non-target members.
pub fn group_personalized_pagerank(
    g: &Graph,
    grp: &CandidateGroup,
    alpha: f64,
    eps: f64,
    agg: Aggregation,
) -> Result<f64> {
    if grp.sources.is_empty() {
        return Err(Error::validation("centrality", "group contains only its target"));
    }
    let ppr = personalized_pagerank(g, grp.target, alpha, eps)?;
    Ok(aggregate(
        grp.sources.iter().map(|j| ppr.values[j.index()]),
        grp.sources.len(),
        agg,
    ))
}

/// Reusable state for forward push from one source at a time.
///
/// A push at `u` moves `alpha * r[u]` into the estimate and spreads
/// `(1 - alpha) * r[u]` evenly over the out-neighbors of `u` (nothing for a
/// dangling node). Pushing stops once every residual satisfies
/// `r[u] <= r_max * max(d_u, 1)`. Nodes are processed in FIFO order so the
/// result is deterministic.
#[derive(Clone, Debug)]
pub struct PushScratch {
    estimate: Vec<f64>,
    residual: Vec<f64>,
    queued: Vec<bool>,
    touched: Vec<u32>,
    queue: VecDeque<u32>,
}

impl PushScratch {
    pub fn new(n: usize) -> Self {
        PushScratch {
            estimate: vec![0.0; n],
            residual: vec![0.0; n],
            queued: vec![false; n],
            touched: Vec::new(),
            queue: VecDeque::new(),
        }
    }

    fn reset(&mut self) {
        for &v in &self.touched {
            self.estimate[v as usize] = 0.0;
            self.residual[v as usize] = 0.0;
        }
        self.touched.clear();
    }

    /// Runs forward push from `source`. Read results with [`Self::estimate`].
    pub fn run(&mut self, g: &Graph, source: NodeId, alpha: f64, r_max: f64) {
        self.reset();
        let s = source.index();
        self.residual[s] = 1.0;
        self.touched.push(s as u32);
        self.queue.push_back(s as u32);
        self.queued[s] = true;
        while let Some(u) = self.queue.pop_front() {
            let u = u as usize;
            self.queued[u] = false;
            let ru = self.residual[u];
            self.residual[u] = 0.0;
            self.estimate[u] += alpha * ru;
            let (nbrs, _) = g.out_neighbors(NodeId(u as u32));
            if nbrs.is_empty() {
                continue;
            }
            let share = (1.0 - alpha) * ru / nbrs.len() as f64;
            for v in nbrs {
                let vi = v.index();
                if self.residual[vi] == 0.0 && self.estimate[vi] == 0.0 {
                    self.touched.push(vi as u32);
                }
                self.residual[vi] += share;
                let threshold = r_max * g.out_degree(*v).max(1) as f64;
                if !self.queued[vi] && self.residual[vi] > threshold {
                    self.queued[vi] = true;
                    self.queue.push_back(vi as u32);
                }
            }
        }
    }

    #[inline]
    pub fn estimate(&self, v: NodeId) -> f64 {
        self.estimate[v.index()]
    }

    /// Residual mass not yet converted into estimates.
    pub fn residual_mass(&self) -> f64 {
        self.touched.iter().map(|&v| self.residual[v as usize]).sum()
    }
}

/// Writes `node value` lines using external names.
pub fn write_scores<W: Write>(g: &Graph, pr: &PageRankVector, mut out: W) -> io::Result<()> {
    for v in g.nodes() {
        writeln!(out, "{} {}", g.name(v), pr.values[v.index()])?;
    }
    Ok(())
}

const CACHE_MAGIC: &[u8; 8] = b"SITPRANK";

/// Saves a global PageRank vector keyed by (graph hash, alpha, eps).
pub fn save_pagerank_cache(
    path: impl AsRef<Path>,
    graph_hash: &str,
    eps: f64,
    pr: &PageRankVector,
) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(64 + 8 * pr.values.len());
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&(graph_hash.len() as u32).to_le_bytes());
    buf.extend_from_slice(graph_hash.as_bytes());
    buf.extend_from_slice(&pr.alpha.to_bits().to_le_bytes());
    buf.extend_from_slice(&eps.to_bits().to_le_bytes());
    buf.extend_from_slice(&(pr.values.len() as u64).to_le_bytes());
    for v in &pr.values {
        buf.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Loads a cached vector if the file exists and its key matches exactly.
pub fn load_pagerank_cache(
    path: impl AsRef<Path>,
    graph_hash: &str,
    alpha: f64,
    eps: f64,
) -> Option<PageRankVector> {
    let bytes = fs::read(path).ok()?;
    let mut pos = 0usize;
    let mut take = |len: usize| -> Option<&[u8]> {
        let out = bytes.get(pos..pos + len)?;
        pos += len;
        Some(out)
    };
    if take(8)? != CACHE_MAGIC {
        return None;
    }
    let hlen = u32::from_le_bytes(take(4)?.try_into().ok()?) as usize;
    if take(hlen)? != graph_hash.as_bytes() {
        return None;
    }
    let a = f64::from_bits(u64::from_le_bytes(take(8)?.try_into().ok()?));
    let e = f64::from_bits(u64::from_le_bytes(take(8)?.try_into().ok()?));
    if a.to_bits() != alpha.to_bits() || e.to_bits() != eps.to_bits() {
        return None;
    }
    let n = u64::from_le_bytes(take(8)?.try_into().ok()?) as usize;
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        values.push(f64::from_bits(u64::from_le_bytes(take(8)?.try_into().ok()?)));
    }
    Some(PageRankVector {
        values,
        alpha,
        kind: PageRankKind::Global,
    })
}
