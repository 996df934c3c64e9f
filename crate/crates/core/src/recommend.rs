//! Feed-window selection: each source sees at most `k` of its target
//! neighbors, ranked by model score.

use std::collections::HashMap;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventsim::EventOutcome;
use crate::graph::{Graph, NodeId, NodeSet};
use crate::learn::{predict, TreeEnsemble};
use crate::measures::{Measure, MeasureRecord};

/// Model scores keyed by `(source, target)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairScores {
    scores: HashMap<(NodeId, NodeId), f64>,
}

impl PairScores {
    pub fn get(&self, s: NodeId, t: NodeId) -> Option<f64> {
        self.scores.get(&(s, t)).copied()
    }

    pub fn insert(&mut self, s: NodeId, t: NodeId, score: f64) {
        self.scores.insert((s, t), score);
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Measure columns named by the model, in model order.
pub fn model_columns(model: &TreeEnsemble) -> Result<Vec<Measure>> {
    model.feature_names.iter().map(|n| n.parse()).collect()
}

/// Scores every record with `model`.
pub fn score_records(model: &TreeEnsemble, records: &[MeasureRecord]) -> Result<PairScores> {
    let columns = model_columns(model)?;
    let scored = records
        .par_iter()
        .map(|r| Ok(((r.source, r.target), predict(model, &r.select(&columns))?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PairScores {
        scores: scored.into_iter().collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedWindow {
    pub source: NodeId,
    /// Highest score first; equal scores by ascending node id.
    pub targets: Vec<(NodeId, f64)>,
}

/// The `k` best-scored target neighbors of `source` that belong to `targets`.
pub fn recommend_topk(
    g: &Graph,
    scores: &PairScores,
    source: NodeId,
    targets: &NodeSet,
    k: usize,
) -> Result<FeedWindow> {
    g.check(source)?;
    if k == 0 {
        return Err(Error::param("recommend", "k must be at least 1"));
    }
    let (nbrs, _) = g.out_neighbors(source);
    let mut ranked = nbrs
        .iter()
        .filter(|&&t| targets.contains(t))
        .map(|&t| {
            scores
                .get(source, t)
                .map(|s| (t, s))
                .ok_or_else(|| Error::validation("recommend", format!("no score for pair ({source}, {t})")))
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(FeedWindow {
        source,
        targets: ranked,
    })
}

/// One window per member of `sources`, in id order.
pub fn recommend_all(
    g: &Graph,
    scores: &PairScores,
    sources: &NodeSet,
    targets: &NodeSet,
    k: usize,
) -> Result<Vec<FeedWindow>> {
    let sources: Vec<NodeId> = sources.iter().collect();
    sources
        .par_iter()
        .map(|&s| recommend_topk(g, scores, s, targets, k))
        .collect()
}

/// Writes `source target rank score` rows, rank starting at 1.
pub fn write_windows<W: Write>(g: &Graph, windows: &[FeedWindow], mut out: W) -> io::Result<()> {
    for w in windows {
        for (rank, (t, score)) in w.targets.iter().enumerate() {
            writeln!(out, "{}\t{}\t{}\t{}", g.name(w.source), g.name(*t), rank + 1, score)?;
        }
    }
    Ok(())
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct E2EReport {
    pub exposed_sources: usize,
    pub adoptions: usize,
    pub rate: f64,
}

/// Adoptions per exposed source. A source adopting through several
/// targets counts once per adoption, so the rate may exceed 1.
pub fn e2e_rate(outcome: &EventOutcome) -> Result<E2EReport> {
    let mut exposed: Vec<NodeId> = outcome
        .pairs
        .iter()
        .filter(|p| p.exposed)
        .map(|p| p.source)
        .collect();
    exposed.sort_unstable();
    exposed.dedup();
    let adoptions = outcome.pairs.iter().filter(|p| p.adopted).count();
    e2e_from_counts(exposed.len(), adoptions)
}

pub fn e2e_from_counts(exposed_sources: usize, adoptions: usize) -> Result<E2EReport> {
    if exposed_sources == 0 {
        return Err(Error::validation("recommend", "E2E rate undefined without exposed sources"));
    }
    Ok(E2EReport {
        exposed_sources,
        adoptions,
        rate: adoptions as f64 / exposed_sources as f64,
    })
}
