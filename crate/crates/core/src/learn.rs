//! Gradient-boosted decision trees under the logistic loss.
//!
//! Trees are grown level by level with exact greedy split search over
//! presorted feature values. Each leaf takes the second-order optimum
//! `-G / (H + lambda)` scaled by the learning rate, and a split must beat
//! `gamma` in gain. A round that would raise the regularized training
//! objective has its leaves halved, and is dropped (ending training) if
//! that does not help.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::categorize::CandidateGroup;
use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::seed::{rng_for, substream};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    Adoption,
    Invitation,
}

impl Behavior {
    pub const ALL: [Behavior; 2] = [Behavior::Invitation, Behavior::Adoption];

    pub fn name(self) -> &'static str {
        match self {
            Behavior::Adoption => "adoption",
            Behavior::Invitation => "invitation",
        }
    }
}

impl FromStr for Behavior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adoption" => Ok(Behavior::Adoption),
            "invitation" => Ok(Behavior::Invitation),
            other => Err(Error::param("learn", format!("unknown behavior `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPair {
    pub source: NodeId,
    pub target: NodeId,
    pub features: Vec<f64>,
    pub label: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub behavior: Behavior,
    pub examples: Vec<LabeledPair>,
}

impl Dataset {
    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            behavior: self.behavior,
            examples: idx.iter().map(|&i| self.examples[i].clone()).collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim();
        for (i, ex) in self.examples.iter().enumerate() {
            if ex.features.len() != d {
                return Err(Error::validation(
                    "learn",
                    format!("example {i} has {} features, expected {d}", ex.features.len()),
                ));
            }
            if ex.features.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation("learn", format!("example {i} has a non-finite feature")));
            }
        }
        Ok(())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostConfig {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf values.
    pub lambda: f64,
    /// Penalty per leaf.
    pub gamma: f64,
    /// Minimum hessian sum on each side of a split.
    pub min_child_weight: f64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            rounds: 100,
            max_depth: 6,
            learning_rate: 0.1,
            lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
        }
    }
}

impl BoostConfig {
    fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::param("learn", "max depth must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::param("learn", "learning rate must lie in (0, 1]"));
        }
        if !(self.lambda >= 0.0 && self.gamma >= 0.0 && self.min_child_weight >= 0.0) {
            return Err(Error::param("learn", "lambda, gamma and min child weight must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    /// Rows with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Nodes in breadth-first order; the root is node 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] < threshold { left } else { right },
                TreeNode::Leaf { .. } => return i,
            }
        }
    }

    pub fn output(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            TreeNode::Leaf { value } => value,
            TreeNode::Split { .. } => unreachable!(),
        }
    }

    fn leaves(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            TreeNode::Leaf { value } => Some(*value),
            TreeNode::Split { .. } => None,
        })
    }

    fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                TreeNode::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        go(self, 0)
    }
}

pub const MODEL_FORMAT: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub format: u32,
    pub feature_names: Vec<String>,
    pub behavior: Behavior,
    pub config: BoostConfig,
    pub trees: Vec<Tree>,
    /// Regularized training objective before the first round and after each kept round.
    pub objective_history: Vec<f64>,
    /// Id of the run that produced the model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

impl TreeEnsemble {
    pub fn empty(feature_names: Vec<String>, behavior: Behavior, config: BoostConfig) -> Self {
        TreeEnsemble {
            format: MODEL_FORMAT,
            feature_names,
            behavior,
            config,
            trees: Vec::new(),
            objective_history: Vec::new(),
            manifest: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: TreeEnsemble =
            serde_json::from_str(s).map_err(|e| Error::format("learn", format!("model: {e}")))?;
        if model.format != MODEL_FORMAT {
            return Err(Error::format(
                "learn",
                format!("model format {} not supported", model.format),
            ));
        }
        let d = model.dim();
        for tree in &model.trees {
            for node in &tree.nodes {
                match *node {
                    TreeNode::Split {
                        feature, left, right, ..
                    } if feature >= d || left >= tree.nodes.len() || right >= tree.nodes.len() => {
                        return Err(Error::format("learn", "model: tree references out of range"))
                    }
                    TreeNode::Leaf { value } if !value.is_finite() => {
                        return Err(Error::format("learn", "model: non-finite leaf value"))
                    }
                    _ => {}
                }
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `y ln(1 + e^{-yhat}) + (1 - y) ln(1 + e^{yhat})`.
#[inline]
pub fn logistic_loss(y: bool, yhat: f64) -> f64 {
    if y {
        softplus(-yhat)
    } else {
        softplus(yhat)
    }
}

fn penalty(tree: &Tree, cfg: &BoostConfig) -> f64 {
    tree.leaves()
        .map(|w| cfg.gamma + 0.5 * cfg.lambda * w * w)
        .sum()
}

/// Sum over the ensemble of the per-leaf penalties.
pub fn regularization(model: &TreeEnsemble) -> f64 {
    model.trees.iter().map(|t| penalty(t, &model.config)).sum()
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    sorted: &'a [Vec<u32>],
    cfg: &'a BoostConfig,
}

#[derive(Copy, Clone)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Grower<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.cfg.lambda)
    }

    /// Grows one tree. `grad`/`hess` are per-row first and second derivatives.
    fn grow(&self, grad: &[f64], hess: &[f64]) -> Tree {
        let n = grad.len();
        let d = self.sorted.len();
        let mut nodes: Vec<TreeNode> = vec![TreeNode::Leaf { value: 0.0 }];
        // node index of each row; only nodes on the current frontier receive splits
        let mut at = vec![0usize; n];
        let mut frontier = vec![0usize];
        let mut sums = vec![(grad.iter().sum::<f64>(), hess.iter().sum::<f64>())];

        for _depth in 0..self.cfg.max_depth {
            // slot of each frontier node, usize::MAX elsewhere
            let mut slot = vec![usize::MAX; nodes.len()];
            for (k, &v) in frontier.iter().enumerate() {
                slot[v] = k;
            }
            let f = frontier.len();
            let mut best: Vec<Option<Candidate>> = vec![None; f];
            let mut gl = vec![0.0; f];
            let mut hl = vec![0.0; f];
            let mut last = vec![f64::NAN; f];
            for feature in 0..d {
                gl.iter_mut().for_each(|v| *v = 0.0);
                hl.iter_mut().for_each(|v| *v = 0.0);
                last.iter_mut().for_each(|v| *v = f64::NAN);
                for &row in &self.sorted[feature] {
                    let row = row as usize;
                    let k = slot[at[row]];
                    if k == usize::MAX {
                        continue;
                    }
                    let v = self.x[row][feature];
                    if !last[k].is_nan() && v > last[k] {
                        let (gt, ht) = sums[k];
                        let (gr, hr) = (gt - gl[k], ht - hl[k]);
                        if hl[k] >= self.cfg.min_child_weight && hr >= self.cfg.min_child_weight {
                            let gain = 0.5
                                * (self.score(gl[k], hl[k]) + self.score(gr, hr) - self.score(gt, ht))
                                - self.cfg.gamma;
                            if gain > 1e-12 && best[k].is_none_or(|b| gain > b.gain) {
                                let mut threshold = 0.5 * (last[k] + v);
                                if !(threshold > last[k] && threshold <= v) {
                                    threshold = v;
                                }
                                best[k] = Some(Candidate {
                                    gain,
                                    feature,
                                    threshold,
                                });
                            }
                        }
                    }
                    gl[k] += grad[row];
                    hl[k] += hess[row];
                    last[k] = v;
                }
            }

            let mut next_frontier = Vec::new();
            let mut next_sums = Vec::new();
            for (k, &v) in frontier.iter().enumerate() {
                if let Some(c) = best[k] {
                    let left = nodes.len();
                    nodes.push(TreeNode::Leaf { value: 0.0 });
                    nodes.push(TreeNode::Leaf { value: 0.0 });
                    nodes[v] = TreeNode::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left,
                        right: left + 1,
                    };
                    next_frontier.push(left);
                    next_frontier.push(left + 1);
                    next_sums.push((0.0, 0.0));
                    next_sums.push((0.0, 0.0));
                }
            }
            if next_frontier.is_empty() {
                break;
            }
            let mut next_slot = vec![usize::MAX; nodes.len()];
            for (k, &v) in next_frontier.iter().enumerate() {
                next_slot[v] = k;
            }
            for row in 0..n {
                if let TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } = nodes[at[row]]
                {
                    at[row] = if self.x[row][feature] < threshold { left } else { right };
                    let k = next_slot[at[row]];
                    next_sums[k].0 += grad[row];
                    next_sums[k].1 += hess[row];
                }
            }
            frontier = next_frontier;
            sums = next_sums;
        }

        // leaf values from the rows that landed in each leaf
        let mut g_leaf = vec![0.0; nodes.len()];
        let mut h_leaf = vec![0.0; nodes.len()];
        for row in 0..n {
            g_leaf[at[row]] += grad[row];
            h_leaf[at[row]] += hess[row];
        }
        for (i, node) in nodes.iter_mut().enumerate() {
            if let TreeNode::Leaf { value } = node {
                let denom = h_leaf[i] + self.cfg.lambda;
                *value = if denom > 0.0 {
                    -g_leaf[i] / denom * self.cfg.learning_rate
                } else {
                    0.0
                };
            }
        }
        Tree { nodes }
    }
}

fn objective(labels: &[bool], yhat: &[f64]) -> f64 {
    labels.iter().zip(yhat).map(|(&y, &s)| logistic_loss(y, s)).sum()
}

/// Fits an ensemble to `data`. Rows are used in the given order and no
/// randomness is involved, so the result is a function of (data, config).
pub fn train(data: &Dataset, cfg: &BoostConfig) -> Result<TreeEnsemble> {
    cfg.validate()?;
    data.validate()?;
    let n = data.examples.len();
    let positives = data.examples.iter().filter(|e| e.label).count();
    if n < 2 || positives == 0 || positives == n {
        return Err(Error::validation(
            "learn",
            "training needs at least two examples covering both classes",
        ));
    }
    let d = data.dim();
    let x: Vec<Vec<f64>> = data.examples.iter().map(|e| e.features.clone()).collect();
    let labels: Vec<bool> = data.examples.iter().map(|e| e.label).collect();
    let sorted: Vec<Vec<u32>> = (0..d)
        .map(|f| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| x[a as usize][f].total_cmp(&x[b as usize][f]).then(a.cmp(&b)));
            idx
        })
        .collect();
    let grower = Grower {
        x: &x,
        sorted: &sorted,
        cfg,
    };

    let mut model = TreeEnsemble::empty(data.feature_names.clone(), data.behavior, *cfg);
    let mut yhat = vec![0.0; n];
    let mut reg = 0.0;
    let mut current = objective(&labels, &yhat);
    model.objective_history.push(current);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trial = vec![0.0; n];
    'rounds: for _ in 0..cfg.rounds {
        for i in 0..n {
            let p = sigmoid(yhat[i]);
            grad[i] = p - if labels[i] { 1.0 } else { 0.0 };
            hess[i] = p * (1.0 - p);
        }
        let mut tree = grower.grow(&grad, &hess);
        for _attempt in 0..8 {
            for i in 0..n {
                trial[i] = yhat[i] + tree.output(&x[i]);
            }
            let cost = penalty(&tree, cfg);
            let candidate = objective(&labels, &trial) + reg + cost;
            if candidate <= current {
                yhat.copy_from_slice(&trial);
                reg += cost;
                current = candidate;
                model.objective_history.push(current);
                model.trees.push(tree);
                continue 'rounds;
            }
            for node in tree.nodes.iter_mut() {
                if let TreeNode::Leaf { value } = node {
                    *value *= 0.5;
                }
            }
        }
        break;
    }
    Ok(model)
}

/// Raw score: the sum of the leaf values reached in every tree.
pub fn predict(model: &TreeEnsemble, features: &[f64]) -> Result<f64> {
    if features.len() != model.dim() {
        return Err(Error::validation(
            "learn",
            format!("feature vector has {} values, model expects {}", features.len(), model.dim()),
        ));
    }
    Ok(model.trees.iter().map(|t| t.output(features)).sum())
}

pub fn predict_proba(model: &TreeEnsemble, features: &[f64]) -> Result<f64> {
    predict(model, features).map(sigmoid)
}

/// Mean model score over the group's member pairs `(j, target)`.
pub fn group_inclination(
    model: &TreeEnsemble,
    grp: &CandidateGroup,
    member_features: &[(NodeId, Vec<f64>)],
) -> Result<f64> {
    if grp.sources.is_empty() {
        return Err(Error::validation("learn", "group has no sources"));
    }
    let mut total = 0.0;
    for &j in &grp.sources {
        let (_, x) = member_features
            .iter()
            .find(|(v, _)| *v == j)
            .ok_or_else(|| Error::validation("learn", format!("no features for member {j}")))?;
        total += predict(model, x)?;
    }
    Ok(total / grp.sources.len() as f64)
}

/// Area under the ROC curve via the rank statistic, ties counted half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::validation("learn", "AUC undefined for a single-class set"));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their average
        let avg = (i + j + 2) as f64 / 2.0;
        for &k in &idx[i..=j] {
            if labels[k] {
                rank_sum += avg;
            }
        }
        i = j + 1;
    }
    let p = pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub scores: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// `None` when the set holds a single class.
    pub auc: Option<f64>,
    pub accuracy: f64,
    pub f1: f64,
}

/// Scores `test` and reports AUC, plus accuracy and F1 at probability 0.5
/// (ties count as positive).
pub fn evaluate(model: &TreeEnsemble, test: &Dataset) -> Result<PredictionReport> {
    if test.examples.is_empty() {
        return Err(Error::validation("learn", "empty evaluation set"));
    }
    let scores = test
        .examples
        .iter()
        .map(|e| predict(model, &e.features))
        .collect::<Result<Vec<f64>>>()?;
    let labels: Vec<bool> = test.examples.iter().map(|e| e.label).collect();
    let probabilities: Vec<f64> = scores.iter().map(|&s| sigmoid(s)).collect();
    let (mut tp, mut fp, mut fneg, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &y) in probabilities.iter().zip(&labels) {
        let predicted = p >= 0.5;
        match (predicted, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
        if predicted == y {
            correct += 1;
        }
    }
    let f1 = if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
    };
    Ok(PredictionReport {
        auc: auc(&scores, &labels).ok(),
        accuracy: correct as f64 / labels.len() as f64,
        f1,
        scores,
        probabilities,
    })
}

/// Split counts per feature, normalized to sum to 1. All zeros (and `false`)
/// when the model never splits.
pub fn feature_importance(model: &TreeEnsemble) -> (Vec<(String, f64)>, bool) {
    let mut counts = vec![0usize; model.dim()];
    for tree in &model.trees {
        for node in &tree.nodes {
            if let TreeNode::Split { feature, .. } = node {
                counts[*feature] += 1;
            }
        }
    }
    let total: usize = counts.iter().sum();
    let values = model
        .feature_names
        .iter()
        .zip(&counts)
        .map(|(name, &c)| {
            let v = if total == 0 { 0.0 } else { c as f64 / total as f64 };
            (name.clone(), v)
        })
        .collect();
    (values, total > 0)
}

/// Indices of all positives plus an equal number of negatives drawn
/// without replacement (or the reverse when negatives are scarcer),
/// returned in ascending order.
pub fn balanced_sample(labels: &[bool], seed: u64) -> Vec<usize> {
    let mut rng = rng_for(substream(seed, "balance", 0));
    let (mut pos, mut neg): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| labels[i]);
    let k = pos.len().min(neg.len());
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut out: Vec<usize> = pos[..k].iter().chain(&neg[..k]).copied().collect();
    out.sort_unstable();
    out
}

/// Stratified split of `idx`: each class contributes `test_fraction` of its
/// members to the test side. Both sides are returned in ascending order.
pub fn train_test_split(
    idx: &[usize],
    labels: &[bool],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::param("learn", "test fraction must lie in (0, 1)"));
    }
    let mut rng = rng_for(substream(seed, "split", 0));
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in [true, false] {
        let mut members: Vec<usize> = idx.iter().copied().filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        let cut = (members.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&members[..cut]);
        train.extend_from_slice(&members[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Depth of the deepest tree.
pub fn max_tree_depth(model: &TreeEnsemble) -> usize {
    model.trees.iter().map(Tree::depth).max().unwrap_or(0)
}
