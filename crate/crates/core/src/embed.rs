//! Node embeddings and the pairwise similarity `delta` in `[0, 1]`.
//!
//! Embeddings come either from biased second-order random walks fed to a
//! skip-gram trainer with negative sampling, or from an external file.
//! Raw cosine similarity or euclidean distance is min-max rescaled over a
//! declared population of pairs.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::seed::{rng_for, substream};

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    /// Nodes per walk, start included.
    pub length: usize,
    pub walks_per_node: usize,
    /// Return parameter: the previous node gets weight `w / p`.
    pub p: f64,
    /// In-out parameter: nodes not adjacent to the previous node get `w / q`.
    pub q: f64,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            length: 20,
            walks_per_node: 4,
            p: 1.0,
            q: 1.0,
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length < 2 {
            return Err(Error::param("embed", "walk length must be at least 2"));
        }
        if self.walks_per_node < 1 {
            return Err(Error::param("embed", "walks per node must be at least 1"));
        }
        if !(self.p > 0.0 && self.q > 0.0) {
            return Err(Error::param("embed", "p and q must be positive"));
        }
        Ok(())
    }
}

/// Walks stored back to back.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WalkCorpus {
    pub n_nodes: usize,
    offsets: Vec<usize>,
    tokens: Vec<NodeId>,
}

impl WalkCorpus {
    pub fn new(n_nodes: usize) -> Self {
        WalkCorpus {
            n_nodes,
            offsets: vec![0],
            tokens: Vec::new(),
        }
    }

    pub fn push(&mut self, walk: &[NodeId]) {
        self.tokens.extend_from_slice(walk);
        self.offsets.push(self.tokens.len());
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }

    pub fn walk(&self, i: usize) -> &[NodeId] {
        &self.tokens[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn walks(&self) -> impl Iterator<Item = &[NodeId]> + '_ {
        (0..self.len()).map(move |i| self.walk(i))
    }

    /// One walk per line, dense ids separated by spaces.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for walk in self.walks() {
            let line: Vec<String> = walk.iter().map(|v| v.0.to_string()).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// Unnormalized next-step weights from `cur`, given the previous node.
pub fn transition_weights(g: &Graph, prev: Option<NodeId>, cur: NodeId, p: f64, q: f64) -> Vec<(NodeId, f64)> {
    let (nbrs, ws) = g.out_neighbors(cur);
    nbrs.iter()
        .zip(ws)
        .map(|(&x, &w)| {
            let bias = match prev {
                None => 1.0,
                Some(v) if v == x => 1.0 / p,
                Some(v) if g.has_edge(v, x) => 1.0,
                Some(_) => 1.0 / q,
            };
            (x, w * bias)
        })
        .collect()
}

/// Normalized next-step distribution from `cur`. Empty for dangling nodes.
pub fn transition_probabilities(
    g: &Graph,
    prev: Option<NodeId>,
    cur: NodeId,
    p: f64,
    q: f64,
) -> Vec<(NodeId, f64)> {
    let weights = transition_weights(g, prev, cur, p, q);
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    weights.into_iter().map(|(x, w)| (x, w / total)).collect()
}

fn sample_next(g: &Graph, prev: Option<NodeId>, cur: NodeId, cfg: &WalkConfig, rng: &mut ChaCha8Rng, buf: &mut Vec<f64>) -> Option<NodeId> {
    let (nbrs, ws) = g.out_neighbors(cur);
    if nbrs.is_empty() {
        return None;
    }
    buf.clear();
    let mut total = 0.0;
    for (&x, &w) in nbrs.iter().zip(ws) {
        let bias = match prev {
            None => 1.0,
            Some(v) if v == x => 1.0 / cfg.p,
            Some(v) if g.has_edge(v, x) => 1.0,
            Some(_) => 1.0 / cfg.q,
        };
        total += w * bias;
        buf.push(total);
    }
    let u = rng.gen::<f64>() * total;
    let i = buf.partition_point(|&c| c <= u).min(nbrs.len() - 1);
    Some(nbrs[i])
}

fn walk_from(g: &Graph, start: NodeId, cfg: &WalkConfig, rng: &mut ChaCha8Rng, buf: &mut Vec<f64>) -> Vec<NodeId> {
    let mut walk = Vec::with_capacity(cfg.length);
    walk.push(start);
    let mut prev = None;
    let mut cur = start;
    while walk.len() < cfg.length {
        match sample_next(g, prev, cur, cfg, rng, buf) {
            Some(next) => {
                walk.push(next);
                prev = Some(cur);
                cur = next;
            }
            None => break,
        }
    }
    walk
}

/// `walks_per_node` passes over all nodes; pass `r` visits nodes in id order.
/// Each walk draws from its own stream derived from (seed, node, r).
pub fn generate_walks(g: &Graph, cfg: &WalkConfig) -> Result<WalkCorpus> {
    cfg.validate()?;
    let mut corpus = WalkCorpus::new(g.n());
    for r in 0..cfg.walks_per_node {
        let walks: Vec<Vec<NodeId>> = (0..g.n() as u32)
            .into_par_iter()
            .map_init(Vec::new, |buf, v| {
                let mut rng = rng_for(substream(cfg.seed, "walk", ((v as u64) << 32) | r as u64));
                walk_from(g, NodeId(v), cfg, &mut rng, buf)
            })
            .collect();
        for w in &walks {
            corpus.push(w);
        }
    }
    Ok(corpus)
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 32,
            window: 4,
            negatives: 4,
            epochs: 1,
            learning_rate: 0.025,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Trained {
        seed: u64,
        epochs: usize,
        walk: Option<WalkConfig>,
    },
    Imported {
        path: String,
    },
}

/// One `dim`-dimensional vector per node.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    data: Vec<f64>,
    norms: Vec<f64>,
    pub provenance: Provenance,
}

impl EmbeddingTable {
    pub fn from_rows(dim: usize, data: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if dim < 2 {
            return Err(Error::param("embed", "embedding dimension must be at least 2"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::validation("embed", "data length is not a multiple of dim"));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation("embed", "non-finite embedding value"));
        }
        let norms = data
            .chunks_exact(dim)
            .map(|row| row.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        Ok(EmbeddingTable {
            dim,
            data,
            norms,
            provenance,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    #[inline]
    pub fn vector(&self, v: NodeId) -> &[f64] {
        &self.data[v.index() * self.dim..(v.index() + 1) * self.dim]
    }

    /// Cosine similarity; 0 when either vector is zero.
    #[inline]
    pub fn cosine(&self, i: NodeId, j: NodeId) -> f64 {
        let denom = self.norms[i.index()] * self.norms[j.index()];
        if denom == 0.0 {
            return 0.0;
        }
        let dot: f64 = self.vector(i).iter().zip(self.vector(j)).map(|(a, b)| a * b).sum();
        dot / denom
    }

    #[inline]
    pub fn euclidean(&self, i: NodeId, j: NodeId) -> f64 {
        self.vector(i)
            .iter()
            .zip(self.vector(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Writes `name v1 ... vdim` rows.
    pub fn write<W: Write>(&self, g: &Graph, out: W) -> std::io::Result<()> {
        let mut out = BufWriter::new(out);
        for v in g.nodes() {
            write!(out, "{}", g.name(v))?;
            for x in self.vector(v) {
                write!(out, " {x}")?;
            }
            writeln!(out)?;
        }
        out.flush()
    }
}

/// Reads `name v1 ... vdim` rows; every node of `g` must appear exactly once.
pub fn import_embeddings(path: impl AsRef<Path>, g: &Graph) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; g.n()];
    let mut dim = None;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        let mut fields = line.split_whitespace();
        let Some(name) = fields.next() else { continue };
        if name.starts_with('#') {
            continue;
        }
        let values = fields
            .map(|f| f.parse::<f64>().map_err(|_| parse_err(format!("invalid value `{f}`"))))
            .collect::<Result<Vec<f64>>>()?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(parse_err(format!("ragged row: {} values, expected {d}", values.len())))
            }
            _ => {}
        }
        let v = g
            .id(name)
            .ok_or_else(|| parse_err(format!("node `{name}` not in graph")))?;
        if rows[v.index()].replace(values).is_some() {
            return Err(parse_err(format!("duplicate row for node `{name}`")));
        }
    }
    if let Some(missing) = rows.iter().position(Option::is_none) {
        return Err(Error::validation(
            "embed",
            format!("no embedding for node `{}`", g.name(NodeId(missing as u32))),
        ));
    }
    let dim = dim.unwrap_or(0);
    let data = rows.into_iter().flatten().flatten().collect();
    EmbeddingTable::from_rows(
        dim,
        data,
        Provenance::Imported {
            path: path.display().to_string(),
        },
    )
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Skip-gram with negative sampling, trained sequentially so the result is a
/// pure function of (corpus, config). Negatives are drawn from the unigram
/// distribution raised to 3/4.
pub fn train_embeddings(corpus: &WalkCorpus, cfg: &TrainConfig) -> Result<EmbeddingTable> {
    if corpus.is_empty() || corpus.token_count() == 0 {
        return Err(Error::validation("embed", "empty walk corpus"));
    }
    if cfg.dim < 2 {
        return Err(Error::param("embed", "embedding dimension must be at least 2"));
    }
    if cfg.window == 0 || cfg.epochs == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::param("embed", "window, epochs and learning rate must be positive"));
    }
    let n = corpus.n_nodes;
    let dim = cfg.dim;
    let mut rng = rng_for(substream(cfg.seed, "skipgram", 0));

    let mut input: Vec<f64> = (0..n * dim)
        .map(|_| (rng.gen::<f64>() - 0.5) / dim as f64)
        .collect();
    let mut output = vec![0.0f64; n * dim];

    let mut counts = vec![0u64; n];
    for v in &corpus.tokens {
        counts[v.index()] += 1;
    }
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0;
    for c in &counts {
        acc += (*c as f64).powf(0.75);
        cumulative.push(acc);
    }

    let total_steps = (corpus.token_count() * cfg.epochs) as f64;
    let mut step = 0usize;
    let mut grad = vec![0.0f64; dim];
    for _ in 0..cfg.epochs {
        for walk in corpus.walks() {
            for (i, &center) in walk.iter().enumerate() {
                let lr = (cfg.learning_rate * (1.0 - step as f64 / total_steps))
                    .max(cfg.learning_rate * 1e-4);
                step += 1;
                let lo = i.saturating_sub(cfg.window);
                let hi = (i + cfg.window + 1).min(walk.len());
                for (j, &context) in walk.iter().enumerate().take(hi).skip(lo) {
                    if j == i {
                        continue;
                    }
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let h = center.index() * dim;
                    for k in 0..=cfg.negatives {
                        let (target, label) = if k == 0 {
                            (context.index(), 1.0)
                        } else {
                            let u = rng.gen::<f64>() * acc;
                            let t = cumulative.partition_point(|&c| c <= u).min(n - 1);
                            if t == context.index() {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let o = target * dim;
                        let dot: f64 = input[h..h + dim]
                            .iter()
                            .zip(&output[o..o + dim])
                            .map(|(a, b)| a * b)
                            .sum();
                        let g = (label - sigmoid(dot)) * lr;
                        for d in 0..dim {
                            grad[d] += g * output[o + d];
                            output[o + d] += g * input[h + d];
                        }
                    }
                    for d in 0..dim {
                        input[h + d] += grad[d];
                    }
                }
            }
        }
    }
    EmbeddingTable::from_rows(
        dim,
        input,
        Provenance::Trained {
            seed: cfg.seed,
            epochs: cfg.epochs,
            walk: None,
        },
    )
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    Cosine,
    Euclidean,
}

/// Min-max normalized similarity. Cosine maps the fitted range onto `[0, 1]`;
/// euclidean emits one minus the normalized distance.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityProvider {
    pub kind: SimilarityKind,
    range: Option<(f64, f64)>,
}

impl SimilarityProvider {
    pub fn new(kind: SimilarityKind) -> Self {
        SimilarityProvider { kind, range: None }
    }

    pub fn with_range(kind: SimilarityKind, min: f64, max: f64) -> Result<Self> {
        if !(min <= max) {
            return Err(Error::param("embed", format!("fit range min {min} > max {max}")));
        }
        Ok(SimilarityProvider {
            kind,
            range: Some((min, max)),
        })
    }

    pub fn range(&self) -> Option<(f64, f64)> {
        self.range
    }

    #[inline]
    pub fn raw(&self, emb: &EmbeddingTable, i: NodeId, j: NodeId) -> f64 {
        match self.kind {
            SimilarityKind::Cosine => emb.cosine(i, j),
            SimilarityKind::Euclidean => emb.euclidean(i, j),
        }
    }

    /// Fits min/max of the raw score over `pairs`.
    pub fn fit(
        &mut self,
        emb: &EmbeddingTable,
        pairs: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<()> {
        let (lo, hi) = pairs
            .into_iter()
            .map(|(i, j)| self.raw(emb, i, j))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        if lo > hi {
            return Err(Error::state("embed", "cannot fit similarity over an empty population"));
        }
        self.range = Some((lo, hi));
        Ok(())
    }

    /// Maps a raw score into `[0, 1]`. A degenerate fit (min = max) maps
    /// everything to 0.5; scores outside the fitted range are clamped.
    #[inline]
    pub fn normalize(&self, raw: f64) -> Result<f64> {
        let (lo, hi) = self
            .range
            .ok_or_else(|| Error::state("embed", "similarity provider used before fit"))?;
        if hi == lo {
            return Ok(0.5);
        }
        let scaled = ((raw - lo) / (hi - lo)).clamp(0.0, 1.0);
        Ok(match self.kind {
            SimilarityKind::Cosine => scaled,
            SimilarityKind::Euclidean => 1.0 - scaled,
        })
    }

    #[inline]
    pub fn similarity(&self, emb: &EmbeddingTable, i: NodeId, j: NodeId) -> Result<f64> {
        self.normalize(self.raw(emb, i, j))
    }
}

/// Raw similarity ranges of both kinds over one population.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct RangeAccumulator {
    pub cos: (f64, f64),
    pub euc: (f64, f64),
}

impl Default for RangeAccumulator {
    fn default() -> Self {
        RangeAccumulator {
            cos: (f64::INFINITY, f64::NEG_INFINITY),
            euc: (f64::INFINITY, f64::NEG_INFINITY),
        }
    }
}

impl RangeAccumulator {
    #[inline]
    pub fn add(&mut self, emb: &EmbeddingTable, i: NodeId, j: NodeId) {
        let c = emb.cosine(i, j);
        let e = emb.euclidean(i, j);
        self.cos = (self.cos.0.min(c), self.cos.1.max(c));
        self.euc = (self.euc.0.min(e), self.euc.1.max(e));
    }

    pub fn merge(self, other: Self) -> Self {
        RangeAccumulator {
            cos: (self.cos.0.min(other.cos.0), self.cos.1.max(other.cos.1)),
            euc: (self.euc.0.min(other.euc.0), self.euc.1.max(other.euc.1)),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.cos.0 > self.cos.1
    }

    pub fn providers(&self) -> Result<(SimilarityProvider, SimilarityProvider)> {
        if self.is_empty() {
            return Err(Error::state("embed", "cannot fit similarity over an empty population"));
        }
        Ok((
            SimilarityProvider::with_range(SimilarityKind::Cosine, self.cos.0, self.cos.1)?,
            SimilarityProvider::with_range(SimilarityKind::Euclidean, self.euc.0, self.euc.1)?,
        ))
    }
}

/// Walk generation followed by training; provenance records both configs.
pub fn node2vec(g: &Graph, walk: &WalkConfig, train: &TrainConfig) -> Result<EmbeddingTable> {
    let corpus = generate_walks(g, walk)?;
    let mut table = train_embeddings(&corpus, train)?;
    table.provenance = Provenance::Trained {
        seed: train.seed,
        epochs: train.epochs,
        walk: Some(*walk),
    };
    Ok(table)
}
