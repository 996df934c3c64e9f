//! Candidate-group categorization: each target's source neighborhood is
//! split into the weakly connected components of its ego network, and each
//! component plus the target forms one candidate group.

use std::io::{self, Write};

use crate::error::Result;
use crate::graph::{Graph, NodeId};

/// Ego network `G_t = (N_t, R_t)` of a target: its sources and the edges
/// among them. The target itself is never a node of its ego network.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EgoNetwork {
    pub target: NodeId,
    /// Sorted by id.
    pub nodes: Vec<NodeId>,
    /// Directed edges with both endpoints in `nodes`, sorted by (source, target).
    pub edges: Vec<(NodeId, NodeId, f64)>,
}

/// One weakly connected component of an ego network together with its target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateGroup {
    pub target: NodeId,
    /// The component's source nodes, sorted by id. Never empty.
    pub sources: Vec<NodeId>,
    pub group_index: usize,
}

impl CandidateGroup {
    /// `|C|`, target included.
    pub fn size(&self) -> usize {
        self.sources.len() + 1
    }

    /// `{target} ∪ sources`, sorted by id.
    pub fn members(&self) -> Vec<NodeId> {
        let mut m = self.sources.clone();
        let pos = m.binary_search(&self.target).unwrap_err();
        m.insert(pos, self.target);
        m
    }

    pub fn contains_source(&self, v: NodeId) -> bool {
        self.sources.binary_search(&v).is_ok()
    }
}

/// Partition of one target's sources into candidate groups.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupAssignment {
    pub target: NodeId,
    pub groups: Vec<CandidateGroup>,
    pub ego: EgoNetwork,
    /// Group index of `ego.nodes[i]`.
    source_group: Vec<usize>,
}

impl GroupAssignment {
    /// Group index of source `s`, if `s` is a source of the target.
    pub fn group_index_of(&self, s: NodeId) -> Option<usize> {
        self.ego
            .nodes
            .binary_search(&s)
            .ok()
            .map(|i| self.source_group[i])
    }

    pub fn group_of(&self, s: NodeId) -> Option<&CandidateGroup> {
        self.group_index_of(s).map(|i| &self.groups[i])
    }

    /// `(source, group_index)` for every source of the target.
    pub fn pair_to_group(&self) -> impl Iterator<Item = (NodeId, usize)> + '_ {
        self.ego.nodes.iter().copied().zip(self.source_group.iter().copied())
    }

    /// Directed ego edges whose endpoints lie in group `gi`.
    pub fn group_edges(&self, gi: usize) -> impl Iterator<Item = &(NodeId, NodeId, f64)> + '_ {
        self.ego
            .edges
            .iter()
            .filter(move |(a, _, _)| self.group_index_of(*a) == Some(gi))
    }
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let grand = self.parent[self.parent[x] as usize];
            self.parent[x] = grand;
            x = grand as usize;
        }
        x
    }

    /// Returns false when `a` and `b` were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra as u32;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Reusable O(n) marker arrays for building ego networks without
/// per-target allocation of node-indexed state.
#[derive(Clone, Debug)]
pub struct EgoScratch {
    stamp: Vec<u32>,
    local: Vec<u32>,
    epoch: u32,
}

impl EgoScratch {
    pub fn new(n: usize) -> Self {
        EgoScratch {
            stamp: vec![0; n],
            local: vec![0; n],
            epoch: 0,
        }
    }

    fn next_epoch(&mut self) -> u32 {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
        self.epoch
    }

    /// Builds `G_t`. Caller guarantees `t < n`.
    pub fn ego_network(&mut self, g: &Graph, t: NodeId) -> EgoNetwork {
        let epoch = self.next_epoch();
        let (sources, _) = g.in_neighbors(t);
        for (i, s) in sources.iter().enumerate() {
            self.stamp[s.index()] = epoch;
            self.local[s.index()] = i as u32;
        }
        let mut edges = Vec::new();
        for &s in sources {
            let (nbrs, ws) = g.out_neighbors(s);
            for (k, w) in nbrs.iter().zip(ws) {
                if self.stamp[k.index()] == epoch {
                    edges.push((s, *k, *w));
                }
            }
        }
        EgoNetwork {
            target: t,
            nodes: sources.to_vec(),
            edges,
        }
    }

    /// Categorizes `t` reusing this scratch space.
    pub fn categorize(&mut self, g: &Graph, t: NodeId) -> GroupAssignment {
        let ego = self.ego_network(g, t);
        // stamp/local still describe ego.nodes from the call above
        let mut uf = UnionFind::new(ego.nodes.len());
        for (a, b, _) in &ego.edges {
            uf.union(self.local[a.index()] as usize, self.local[b.index()] as usize);
        }
        assemble(ego, uf)
    }
}

fn assemble(ego: EgoNetwork, mut uf: UnionFind) -> GroupAssignment {
    let k = ego.nodes.len();
    // Nodes are sorted, so the first time a root is seen is at the component's
    // smallest member: numbering roots in that order orders groups by min id.
    let mut root_group = vec![usize::MAX; k];
    let mut source_group = vec![0usize; k];
    let mut groups: Vec<CandidateGroup> = Vec::new();
    for i in 0..k {
        let r = uf.find(i);
        if root_group[r] == usize::MAX {
            root_group[r] = groups.len();
            groups.push(CandidateGroup {
                target: ego.target,
                sources: Vec::new(),
                group_index: groups.len(),
            });
        }
        let gi = root_group[r];
        source_group[i] = gi;
        groups[gi].sources.push(ego.nodes[i]);
    }
    GroupAssignment {
        target: ego.target,
        groups,
        ego,
        source_group,
    }
}

/// Weakly connected components of an ego network, each sorted by id and
/// the list ordered by smallest member.
pub fn weakly_connected_components(eg: &EgoNetwork) -> Vec<Vec<NodeId>> {
    let mut uf = UnionFind::new(eg.nodes.len());
    let local = |v: &NodeId| {
        eg.nodes
            .binary_search(v)
            .expect("ego edge endpoint outside ego network")
    };
    for (a, b, _) in &eg.edges {
        uf.union(local(a), local(b));
    }
    assemble(eg.clone(), uf)
        .groups
        .into_iter()
        .map(|grp| grp.sources)
        .collect()
}

/// Builds the ego network of `t`.
pub fn ego_network(g: &Graph, t: NodeId) -> Result<EgoNetwork> {
    g.check(t)?;
    Ok(EgoScratch::new(g.n()).ego_network(g, t))
}

/// One candidate group per weakly connected component of `t`'s ego network.
pub fn categorize_target(g: &Graph, t: NodeId) -> Result<GroupAssignment> {
    g.check(t)?;
    Ok(EgoScratch::new(g.n()).categorize(g, t))
}

/// Writes `target group_index member...` lines using external names.
pub fn write_group_dump<W: Write>(
    g: &Graph,
    assignments: &[GroupAssignment],
    mut out: W,
) -> io::Result<()> {
    for a in assignments {
        for grp in &a.groups {
            write!(out, "{} {}", g.name(a.target), grp.group_index)?;
            for s in &grp.sources {
                write!(out, " {}", g.name(*s))?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}
