//! Immutable directed weighted graph with forward (target) and reverse
//! (source) adjacency in compressed sparse row form.
//!
//! External string identifiers are re-indexed densely in order of first
//! appearance. Every edge weight lies in `(0, 1]`; the loader can rescale raw
//! intimacy counts into that range (see [`WeightPolicy`]).

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Dense node index in `[0, n)`.
#[derive(
    Copy, Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(v: usize) -> Self {
        NodeId(v as u32)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// How raw edge weights outside `(0, 1]` are treated at load time.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightPolicy {
    #[default]
    RejectOutOfRange,
    /// Values above 1 become 1, non-positive values become [`RESCALE_EPS`].
    Clamp,
    /// `(w - min + eps) / (max - min + eps)` over all raw weights of the file.
    MinmaxRescale,
}

impl std::str::FromStr for WeightPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reject" | "reject_out_of_range" => Ok(WeightPolicy::RejectOutOfRange),
            "clamp" => Ok(WeightPolicy::Clamp),
            "minmax" | "minmax_rescale" => Ok(WeightPolicy::MinmaxRescale),
            other => Err(Error::param("graph", format!("unknown weight policy `{other}`"))),
        }
    }
}

pub const RESCALE_EPS: f64 = 1e-6;

const SNAPSHOT_MAGIC: &[u8; 8] = b"SITGRAPH";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
struct Csr {
    offsets: Vec<usize>,
    nodes: Vec<NodeId>,
    weights: Vec<f64>,
}

impl Csr {
    /// `edges` must be sorted by (row, col).
    fn from_sorted(n: usize, edges: &[(u32, u32, f64)]) -> Self {
        let mut offsets = vec![0usize; n + 1];
        for &(r, _, _) in edges {
            offsets[r as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        Csr {
            offsets,
            nodes: edges.iter().map(|&(_, c, _)| NodeId(c)).collect(),
            weights: edges.iter().map(|&(_, _, w)| w).collect(),
        }
    }

    #[inline]
    fn row(&self, v: usize) -> (&[NodeId], &[f64]) {
        let (a, b) = (self.offsets[v], self.offsets[v + 1]);
        (&self.nodes[a..b], &self.weights[a..b])
    }

    fn transpose(&self, n: usize) -> Self {
        let mut offsets = vec![0usize; n + 1];
        for c in &self.nodes {
            offsets[c.index() + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets.clone();
        let m = self.nodes.len();
        let mut nodes = vec![NodeId(0); m];
        let mut weights = vec![0.0; m];
        // Rows are visited in increasing order, so every transposed row ends up sorted.
        for r in 0..n {
            let (cols, ws) = self.row(r);
            for (c, w) in cols.iter().zip(ws) {
                let slot = &mut cursor[c.index()];
                nodes[*slot] = NodeId(r as u32);
                weights[*slot] = *w;
                *slot += 1;
            }
        }
        Csr {
            offsets,
            nodes,
            weights,
        }
    }
}

/// Directed weighted social graph. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    forward: Csr,
    reverse: Csr,
    names: Vec<String>,
    index: HashMap<String, NodeId>,
}

impl Graph {
    /// Builds a graph over nodes named `0..n` from dense-id edges.
    pub fn from_edges(n: usize, edges: Vec<(u32, u32, f64)>) -> Result<Self> {
        let names = (0..n).map(|i| i.to_string()).collect();
        Self::from_named_edges(names, edges)
    }

    /// Builds a graph from node names (index = dense id) and dense-id edges.
    /// Rejects self-loops, duplicates, out-of-range endpoints and weights
    /// outside `(0, 1]`.
    pub fn from_named_edges(names: Vec<String>, mut edges: Vec<(u32, u32, f64)>) -> Result<Self> {
        let n = names.len();
        if n > u32::MAX as usize {
            return Err(Error::validation("graph", "too many nodes"));
        }
        let mut index = HashMap::with_capacity(n);
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.clone(), NodeId(i as u32)).is_some() {
                return Err(Error::validation("graph", format!("duplicate node name `{name}`")));
            }
        }
        for &(s, t, w) in &edges {
            if s as usize >= n || t as usize >= n {
                return Err(Error::IndexOutOfRange {
                    module: "graph",
                    index: s.max(t) as usize,
                    n,
                });
            }
            if s == t {
                return Err(Error::validation(
                    "graph",
                    format!("self-loop on node `{}`", names[s as usize]),
                ));
            }
            if !(w > 0.0 && w <= 1.0) {
                return Err(Error::validation(
                    "graph",
                    format!(
                        "weight {w} of edge ({}, {}) outside (0, 1]",
                        names[s as usize], names[t as usize]
                    ),
                ));
            }
        }
        edges.sort_unstable_by_key(|&(s, t, _)| (s, t));
        if let Some(pair) = edges.windows(2).find(|p| (p[0].0, p[0].1) == (p[1].0, p[1].1)) {
            return Err(Error::validation(
                "graph",
                format!(
                    "duplicate edge ({}, {})",
                    names[pair[0].0 as usize], names[pair[0].1 as usize]
                ),
            ));
        }
        let forward = Csr::from_sorted(n, &edges);
        let reverse = forward.transpose(n);
        Ok(Graph {
            forward,
            reverse,
            names,
            index,
        })
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn m(&self) -> usize {
        self.forward.nodes.len()
    }

    pub fn check(&self, v: NodeId) -> Result<()> {
        if v.index() < self.n() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                module: "graph",
                index: v.index(),
                n: self.n(),
            })
        }
    }

    /// Targets of `v` (out-edges), sorted by id, with weights.
    #[inline]
    pub fn out_neighbors(&self, v: NodeId) -> (&[NodeId], &[f64]) {
        self.forward.row(v.index())
    }

    /// Sources of `v` (in-edges), sorted by id, with weights.
    #[inline]
    pub fn in_neighbors(&self, v: NodeId) -> (&[NodeId], &[f64]) {
        self.reverse.row(v.index())
    }

    #[inline]
    pub fn out_degree(&self, v: NodeId) -> usize {
        let i = v.index();
        self.forward.offsets[i + 1] - self.forward.offsets[i]
    }

    #[inline]
    pub fn in_degree(&self, v: NodeId) -> usize {
        let i = v.index();
        self.reverse.offsets[i + 1] - self.reverse.offsets[i]
    }

    /// `w(s -> t)` if the edge exists.
    #[inline]
    pub fn weight(&self, s: NodeId, t: NodeId) -> Option<f64> {
        let (nbrs, ws) = self.out_neighbors(s);
        nbrs.binary_search(&t).ok().map(|i| ws[i])
    }

    #[inline]
    pub fn has_edge(&self, s: NodeId, t: NodeId) -> bool {
        self.weight(s, t).is_some()
    }

    /// Sources `s` with `(s, t)` in the edge set, sorted by id.
    pub fn source_neighbors(&self, t: NodeId) -> Result<Vec<(NodeId, f64)>> {
        self.check(t)?;
        let (nbrs, ws) = self.in_neighbors(t);
        Ok(nbrs.iter().copied().zip(ws.iter().copied()).collect())
    }

    /// Targets `t` with `(s, t)` in the edge set, sorted by id.
    pub fn target_neighbors(&self, s: NodeId) -> Result<Vec<(NodeId, f64)>> {
        self.check(s)?;
        let (nbrs, ws) = self.out_neighbors(s);
        Ok(nbrs.iter().copied().zip(ws.iter().copied()).collect())
    }

    /// All edges in (source, target) order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        (0..self.n()).flat_map(move |s| {
            let (nbrs, ws) = self.forward.row(s);
            nbrs.iter()
                .zip(ws)
                .map(move |(t, w)| (NodeId(s as u32), *t, *w))
        })
    }

    pub fn name(&self, v: NodeId) -> &str {
        &self.names[v.index()]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id(&self, name: &str) -> Option<NodeId> {
        self.index.get(name).copied()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.n() as u32).map(NodeId)
    }

    /// Loads a whitespace-separated `src dst weight` edge list.
    pub fn load_edge_list(path: impl AsRef<Path>, policy: WeightPolicy) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);

        let mut names: Vec<String> = Vec::new();
        let mut index: HashMap<String, u32> = HashMap::new();
        let mut raw: Vec<(u32, u32, f64, usize)> = Vec::new();
        let mut intern = |name: &str, names: &mut Vec<String>| -> u32 {
            if let Some(&id) = index.get(name) {
                return id;
            }
            let id = names.len() as u32;
            index.insert(name.to_owned(), id);
            names.push(name.to_owned());
            id
        };

        for (lineno, line) in reader.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            let body = line.split('#').next().unwrap_or("");
            let fields: Vec<&str> = body.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: lineno,
                msg,
            };
            if fields.len() != 3 {
                return Err(parse_err(format!(
                    "expected `src dst weight`, found {} fields",
                    fields.len()
                )));
            }
            let w: f64 = fields[2]
                .parse()
                .map_err(|_| parse_err(format!("invalid weight `{}`", fields[2])))?;
            if !w.is_finite() {
                return Err(parse_err(format!("non-finite weight `{}`", fields[2])));
            }
            if fields[0] == fields[1] {
                return Err(Error::validation(
                    "graph",
                    format!("line {lineno}: self-loop on node `{}`", fields[0]),
                ));
            }
            let s = intern(fields[0], &mut names);
            let t = intern(fields[1], &mut names);
            raw.push((s, t, w, lineno));
        }

        let weights = rescale_weights(raw.iter().map(|e| e.2), policy).map_err(|bad| {
            let (_, _, w, line) = raw[bad];
            Error::validation("graph", format!("line {line}: weight {w} outside (0, 1]"))
        })?;
        let edges = raw
            .iter()
            .zip(weights)
            .map(|(&(s, t, _, _), w)| (s, t, w))
            .collect();
        Self::from_named_edges(names, edges)
    }

    /// Writes the graph as a text edge list using external names.
    pub fn write_edge_list(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let write = |out: &mut BufWriter<fs::File>| -> std::io::Result<()> {
            for (s, t, w) in self.edges() {
                writeln!(out, "{} {} {}", self.name(s), self.name(t), w)?;
            }
            out.flush()
        };
        write(&mut out).map_err(|e| Error::io(path, e))
    }

    /// Binary snapshot: magic, version, n, m, forward CSR, dictionary.
    /// All integers and floats are little-endian.
    pub fn to_snapshot_bytes(&self) -> Vec<u8> {
        let n = self.n();
        let m = self.m();
        let mut buf = Vec::with_capacity(24 + 8 * (n + 1) + 12 * m + 16 * n);
        buf.extend_from_slice(SNAPSHOT_MAGIC);
        buf.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(n as u64).to_le_bytes());
        buf.extend_from_slice(&(m as u64).to_le_bytes());
        for &o in &self.forward.offsets {
            buf.extend_from_slice(&(o as u64).to_le_bytes());
        }
        for v in &self.forward.nodes {
            buf.extend_from_slice(&v.0.to_le_bytes());
        }
        for w in &self.forward.weights {
            buf.extend_from_slice(&w.to_bits().to_le_bytes());
        }
        for name in &self.names {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
        }
        buf
    }

    pub fn from_snapshot_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(8)? != SNAPSHOT_MAGIC {
            return Err(Error::format("graph", "bad snapshot magic"));
        }
        let version = r.u32()?;
        if version != SNAPSHOT_VERSION {
            return Err(Error::format(
                "graph",
                format!("unsupported snapshot version {version}"),
            ));
        }
        let n = r.u64()? as usize;
        let m = r.u64()? as usize;
        let mut offsets = Vec::with_capacity(n + 1);
        for _ in 0..=n {
            offsets.push(r.u64()? as usize);
        }
        if offsets[0] != 0 || offsets[n] != m || offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::format("graph", "corrupt snapshot offsets"));
        }
        let mut targets = Vec::with_capacity(m);
        for _ in 0..m {
            targets.push(r.u32()?);
        }
        let mut weights = Vec::with_capacity(m);
        for _ in 0..m {
            weights.push(f64::from_bits(r.u64()?));
        }
        let mut names = Vec::with_capacity(n);
        for _ in 0..n {
            let len = r.u32()? as usize;
            let s = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::format("graph", "node name is not UTF-8"))?;
            names.push(s.to_owned());
        }
        if r.pos != bytes.len() {
            return Err(Error::format("graph", "trailing bytes in snapshot"));
        }
        let mut edges = Vec::with_capacity(m);
        for s in 0..n {
            for i in offsets[s]..offsets[s + 1] {
                edges.push((s as u32, targets[i], weights[i]));
            }
        }
        Self::from_named_edges(names, edges)
    }

    pub fn save_snapshot(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_snapshot_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load_snapshot(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_snapshot_bytes(&bytes)
    }

    /// SHA-256 of the snapshot encoding, hex-encoded.
    pub fn content_hash(&self) -> String {
        hex_digest(&self.to_snapshot_bytes())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Applies `policy` to raw weights. On rejection returns the index of the
/// first offending weight.
pub fn rescale_weights(
    raw: impl Iterator<Item = f64> + Clone,
    policy: WeightPolicy,
) -> std::result::Result<Vec<f64>, usize> {
    match policy {
        WeightPolicy::RejectOutOfRange => {
            let mut out = Vec::new();
            for (i, w) in raw.enumerate() {
                if !(w > 0.0 && w <= 1.0) {
                    return Err(i);
                }
                out.push(w);
            }
            Ok(out)
        }
        WeightPolicy::Clamp => Ok(raw
            .map(|w| if w > 1.0 { 1.0 } else if w <= 0.0 { RESCALE_EPS } else { w })
            .collect()),
        WeightPolicy::MinmaxRescale => {
            let (lo, hi) = raw
                .clone()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), w| (lo.min(w), hi.max(w)));
            let span = hi - lo + RESCALE_EPS;
            Ok(raw.map(|w| (w - lo + RESCALE_EPS) / span).collect())
        }
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format("graph", "truncated snapshot"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// A subset of nodes with O(1) membership.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeSet {
    members: Vec<NodeId>,
    mask: Vec<bool>,
}

impl NodeSet {
    pub fn new(n: usize, nodes: impl IntoIterator<Item = NodeId>) -> Self {
        let mut mask = vec![false; n];
        for v in nodes {
            mask[v.index()] = true;
        }
        let members = (0..n as u32).map(NodeId).filter(|v| mask[v.index()]).collect();
        NodeSet { members, mask }
    }

    pub fn all(n: usize) -> Self {
        NodeSet {
            members: (0..n as u32).map(NodeId).collect(),
            mask: vec![true; n],
        }
    }

    #[inline]
    pub fn contains(&self, v: NodeId) -> bool {
        self.mask.get(v.index()).copied().unwrap_or(false)
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.members.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Source set `S` and target set `T` of an event.
#[derive(Clone, Debug)]
pub struct NodeSetRole {
    pub sources: NodeSet,
    pub targets: NodeSet,
}

impl NodeSetRole {
    /// Every node with at least one out-edge is a source; every node is a target.
    pub fn all(g: &Graph) -> Self {
        NodeSetRole {
            sources: NodeSet::new(g.n(), g.nodes().filter(|&v| g.out_degree(v) > 0)),
            targets: NodeSet::all(g.n()),
        }
    }
}
