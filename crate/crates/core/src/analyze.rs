//! Equal-frequency discretization, conversion curves and the analysis
//! bundle written after an event.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventsim::{averaged_cc_size_distribution, CcSizeHistogram, CcSizeMode, EventOutcome};
use crate::graph::{Graph, NodeId, NodeSet};
use crate::learn::{
    balanced_sample, evaluate, feature_importance, train, train_test_split, Behavior, BoostConfig,
    Dataset, LabeledPair,
};
use crate::measures::{Measure, MeasureRecord};
use crate::seed::substream;

pub const LEVELS: usize = 5;

/// Level assignment of a list of scores.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelBinning {
    /// Non-decreasing; a score above `cuts[i]` is at level `i + 1` or higher.
    pub cuts: [f64; LEVELS - 1],
    /// Level of each input score, aligned with the input.
    pub levels: Vec<u8>,
    pub counts: [usize; LEVELS],
}

impl LevelBinning {
    pub fn level_of(&self, x: f64) -> u8 {
        self.cuts.iter().filter(|&&c| x > c).count() as u8
    }
}

/// Equal-frequency binning into five levels. The `i`-th cut is the score at
/// sorted position `i * N / 5`, and a run of equal scores always lands
/// wholly in the lower level.
pub fn discretize(scores: &[f64]) -> Result<LevelBinning> {
    let n = scores.len();
    if n < LEVELS {
        return Err(Error::validation(
            "analyze",
            format!("need at least {LEVELS} scores to discretize, got {n}"),
        ));
    }
    if scores.iter().any(|x| !x.is_finite()) {
        return Err(Error::validation("analyze", "non-finite score"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut cuts = [0.0; LEVELS - 1];
    for (i, c) in cuts.iter_mut().enumerate() {
        *c = sorted[(i + 1) * n / LEVELS - 1];
    }
    let mut binning = LevelBinning {
        cuts,
        levels: Vec::with_capacity(n),
        counts: [0; LEVELS],
    };
    for &x in scores {
        let l = binning.level_of(x);
        binning.levels.push(l);
        binning.counts[l as usize] += 1;
    }
    Ok(binning)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConversionCurve {
    pub measure: String,
    pub behavior: Behavior,
    pub counts: [usize; LEVELS],
    pub positives: [usize; LEVELS],
}

impl ConversionCurve {
    /// Positive fraction per level; `None` for empty levels.
    pub fn rates(&self) -> [Option<f64>; LEVELS] {
        let mut out = [None; LEVELS];
        for (i, r) in out.iter_mut().enumerate() {
            if self.counts[i] > 0 {
                *r = Some(self.positives[i] as f64 / self.counts[i] as f64);
            }
        }
        out
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "level\tpairs\tpositives\trate")?;
        for (i, r) in self.rates().iter().enumerate() {
            let rate = r.map_or_else(|| "absent".to_string(), |v| format!("{v:.6}"));
            writeln!(out, "{}\t{}\t{}\t{}", i + 1, self.counts[i], self.positives[i], rate)?;
        }
        Ok(())
    }
}

pub fn conversion_curve(
    measure: &str,
    behavior: Behavior,
    binning: &LevelBinning,
    labels: &[bool],
) -> Result<ConversionCurve> {
    if labels.len() != binning.levels.len() {
        return Err(Error::validation(
            "analyze",
            format!("{} labels for {} scores", labels.len(), binning.levels.len()),
        ));
    }
    let mut positives = [0; LEVELS];
    for (&l, &y) in binning.levels.iter().zip(labels) {
        if y {
            positives[l as usize] += 1;
        }
    }
    Ok(ConversionCurve {
        measure: measure.to_string(),
        behavior,
        counts: binning.counts,
        positives,
    })
}

/// Measures whose conversion curves go into the bundle.
pub const CURVE_MEASURES: [Measure; 10] = [
    Measure::CcCount,
    Measure::Gs,
    Measure::Gpr,
    Measure::Gppr,
    Measure::Ugt,
    Measure::Igt,
    Measure::UgtW,
    Measure::UgtDelta,
    Measure::IgtW,
    Measure::IgtDelta,
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub name: String,
    pub columns: Vec<Measure>,
}

impl FeatureSet {
    fn new(name: &str, columns: &[Measure]) -> Self {
        FeatureSet {
            name: name.to_string(),
            columns: columns.to_vec(),
        }
    }
}

/// The six-dimension set, its sum and euclidean variants, every baseline
/// alone, every dimension alone, and all measures together.
pub fn default_feature_sets() -> Vec<FeatureSet> {
    use Measure::*;
    let mut sets = vec![
        FeatureSet::new("sit", &[CcCount, Gs, Gpr, Gppr, Ugt, Igt]),
        FeatureSet::new("sit_sum", &[CcCount, Gs, GprSum, GpprSum, UgtSum, IgtSum]),
        FeatureSet::new("sit_euc", &[CcCount, Gs, Gpr, Gppr, UgtEuc, IgtEuc]),
    ];
    for m in [Tie, Com, Ppr, N2vCos, N2vEuc, Gt, Gd, CcCount, Gs, Gpr, Gppr, Ugt, Igt] {
        sets.push(FeatureSet::new(m.name(), &[m]));
    }
    sets.push(FeatureSet::new("all", &Measure::ALL));
    sets
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub boost: BoostConfig,
    pub repetitions: usize,
    pub test_fraction: f64,
    pub seed: u64,
    pub feature_sets: Vec<FeatureSet>,
    /// Feature set whose split counts fill the importance table.
    pub importance_set: String,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            boost: BoostConfig::default(),
            repetitions: 3,
            test_fraction: 0.2,
            seed: 0,
            feature_sets: default_feature_sets(),
            importance_set: "sit".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub behavior: Behavior,
    pub feature_set: String,
    pub auc: f64,
    pub accuracy: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisReport {
    pub metrics: Vec<MetricsRow>,
    /// Per behavior, `(feature, mean importance)` in feature-set order.
    pub importance: Vec<(Behavior, Vec<(String, f64)>)>,
    pub curves: Vec<ConversionCurve>,
    pub cc_all: CcSizeHistogram,
    pub cc_inviting: CcSizeHistogram,
}

/// Exposed pairs joined with their measure records, in outcome order.
pub fn exposed_examples<'a>(
    records: &'a [MeasureRecord],
    outcome: &EventOutcome,
) -> Result<Vec<(&'a MeasureRecord, bool, bool)>> {
    let lookup: HashMap<(NodeId, NodeId), &MeasureRecord> =
        records.iter().map(|r| ((r.source, r.target), r)).collect();
    outcome
        .exposed()
        .map(|p| {
            lookup
                .get(&(p.source, p.target))
                .map(|r| (*r, p.invited, p.adopted))
                .ok_or_else(|| {
                    Error::validation(
                        "analyze",
                        format!("no measures for exposed pair ({}, {})", p.source, p.target),
                    )
                })
        })
        .collect()
}

/// Labeled dataset over `columns` from the exposed pairs.
pub fn labeled_dataset(
    joined: &[(&MeasureRecord, bool, bool)],
    columns: &[Measure],
    behavior: Behavior,
) -> Dataset {
    Dataset {
        feature_names: columns.iter().map(|m| m.name().to_string()).collect(),
        behavior,
        examples: joined
            .iter()
            .map(|(r, invited, adopted)| LabeledPair {
                source: r.source,
                target: r.target,
                features: r.select(columns),
                label: match behavior {
                    Behavior::Invitation => *invited,
                    Behavior::Adoption => *adopted,
                },
            })
            .collect(),
    }
}

/// Runs the full analysis over one simulated (or logged) event.
pub fn report(
    g: &Graph,
    records: &[MeasureRecord],
    outcome: &EventOutcome,
    targets: &NodeSet,
    cfg: &ReportConfig,
) -> Result<AnalysisReport> {
    if records.is_empty() {
        return Err(Error::validation("analyze", "no measure records"));
    }
    if cfg.repetitions == 0 {
        return Err(Error::param("analyze", "repetitions must be at least 1"));
    }
    let joined = exposed_examples(records, outcome)?;
    if joined.is_empty() {
        return Err(Error::validation("analyze", "outcome has no exposed pairs"));
    }
    let mut metrics = Vec::new();
    let mut importance = Vec::new();
    let mut curves = Vec::new();
    for behavior in Behavior::ALL {
        let labels: Vec<bool> = joined
            .iter()
            .map(|(_, i, a)| match behavior {
                Behavior::Invitation => *i,
                Behavior::Adoption => *a,
            })
            .collect();
        let mut imp_sum: Vec<(String, f64)> = Vec::new();
        for set in &cfg.feature_sets {
            let data = labeled_dataset(&joined, &set.columns, behavior);
            let (mut auc, mut acc, mut f1) = (0.0, 0.0, 0.0);
            for rep in 0..cfg.repetitions {
                let rep_seed = substream(cfg.seed, "repetition", rep as u64);
                let idx = balanced_sample(&labels, rep_seed);
                let (tr, te) = train_test_split(&idx, &labels, cfg.test_fraction, rep_seed)?;
                let model = train(&data.subset(&tr), &cfg.boost).map_err(|e| {
                    Error::validation("analyze", format!("{} / {}: {e}", behavior.name(), set.name))
                })?;
                let r = evaluate(&model, &data.subset(&te))?;
                auc += r.auc.ok_or_else(|| {
                    Error::validation("analyze", format!("{}: single-class test split", behavior.name()))
                })?;
                acc += r.accuracy;
                f1 += r.f1;
                if set.name == cfg.importance_set {
                    let (imp, _) = feature_importance(&model);
                    if imp_sum.is_empty() {
                        imp_sum = imp.iter().map(|(n, _)| (n.clone(), 0.0)).collect();
                    }
                    for (slot, (_, v)) in imp_sum.iter_mut().zip(&imp) {
                        slot.1 += v;
                    }
                }
            }
            let k = cfg.repetitions as f64;
            metrics.push(MetricsRow {
                behavior,
                feature_set: set.name.clone(),
                auc: auc / k,
                accuracy: acc / k,
                f1: f1 / k,
            });
        }
        for slot in imp_sum.iter_mut() {
            slot.1 /= cfg.repetitions as f64;
        }
        importance.push((behavior, imp_sum));
        for m in CURVE_MEASURES {
            let scores: Vec<f64> = joined.iter().map(|(r, _, _)| r.get(m)).collect();
            let binning = discretize(&scores)?;
            curves.push(conversion_curve(m.name(), behavior, &binning, &labels)?);
        }
    }
    Ok(AnalysisReport {
        metrics,
        importance,
        curves,
        cc_all: averaged_cc_size_distribution(g, targets, CcSizeMode::AllSources, None)?,
        cc_inviting: averaged_cc_size_distribution(g, targets, CcSizeMode::InvitingSources, Some(outcome))?,
    })
}

impl AnalysisReport {
    /// Writes `metrics.tsv`, `importance.tsv`, one
    /// `conversion_<measure>_<behavior>.tsv` per curve and `ccsize_hist.tsv`
    /// into `dir`. Each file starts with `header` lines, if any.
    pub fn write_bundle(&self, dir: impl AsRef<Path>, header: &str) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let emit = |name: &str, body: Vec<u8>| -> Result<()> {
            let path = dir.join(name);
            let mut bytes = header.as_bytes().to_vec();
            bytes.extend(body);
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
        };

        let mut buf = Vec::new();
        writeln!(buf, "behavior\tfeature_set\tauc\taccuracy\tf1").unwrap();
        for r in &self.metrics {
            writeln!(
                buf,
                "{}\t{}\t{:.4}\t{:.4}\t{:.4}",
                r.behavior.name(),
                r.feature_set,
                r.auc,
                r.accuracy,
                r.f1
            )
            .unwrap();
        }
        emit("metrics.tsv", buf)?;

        let mut buf = Vec::new();
        writeln!(buf, "behavior\tfeature\timportance").unwrap();
        for (b, rows) in &self.importance {
            for (f, v) in rows {
                writeln!(buf, "{}\t{}\t{:.6}", b.name(), f, v).unwrap();
            }
        }
        emit("importance.tsv", buf)?;

        for c in &self.curves {
            let mut buf = Vec::new();
            c.write(&mut buf).unwrap();
            emit(&format!("conversion_{}_{}.tsv", c.measure, c.behavior.name()), buf)?;
        }

        let mut buf = Vec::new();
        writeln!(buf, "mode\tbin_low\tbin_high\tcount").unwrap();
        for (mode, h) in [("all_sources", &self.cc_all), ("inviting_sources", &self.cc_inviting)] {
            for (b, c) in &h.bins {
                writeln!(buf, "{mode}\t{}\t{}\t{c}", b, b + 1).unwrap();
            }
        }
        emit("ccsize_hist.tsv", buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_to_ten_splits_evenly() {
        let scores: Vec<f64> = (1..=10).map(f64::from).collect();
        let b = discretize(&scores).unwrap();
        assert_eq!(b.cuts, [2.0, 4.0, 6.0, 8.0]);
        assert_eq!(b.counts, [2; 5]);
        assert_eq!(b.levels, vec![0, 0, 1, 1, 2, 2, 3, 3, 4, 4]);
    }

    #[test]
    fn equal_scores_share_the_lowest_level() {
        let b = discretize(&[3.0; 7]).unwrap();
        assert_eq!(b.counts, [7, 0, 0, 0, 0]);
        let curve = conversion_curve("x", Behavior::Adoption, &b, &[true; 7]).unwrap();
        assert_eq!(curve.rates(), [Some(1.0), None, None, None, None]);
    }

    #[test]
    fn tied_run_stays_together() {
        let scores = [1.0, 1.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let b = discretize(&scores).unwrap();
        assert_eq!(&b.levels[..3], &[0, 0, 0]);
        assert_eq!(b.counts, [3, 1, 2, 2, 2]);
    }

    #[test]
    fn too_few_scores() {
        assert!(discretize(&[1.0, 2.0, 3.0, 4.0]).is_err());
    }

    #[test]
    fn curve_fractions() {
        let scores: Vec<f64> = (0..20).map(f64::from).collect();
        let b = discretize(&scores).unwrap();
        let mut labels = vec![false; 20];
        labels[0] = true;
        let c = conversion_curve("m", Behavior::Invitation, &b, &labels).unwrap();
        let r = c.rates();
        assert_eq!(r[0], Some(0.25));
        assert_eq!(r[1], Some(0.0));
        assert!(conversion_curve("m", Behavior::Invitation, &b, &labels[..3]).is_err());
    }

    #[test]
    fn feature_sets_cover_curves() {
        let sets = default_feature_sets();
        assert_eq!(sets[0].columns.len(), 6);
        assert!(sets.iter().any(|s| s.name == "all" && s.columns.len() == 23));
        assert_eq!(CURVE_MEASURES.len(), 10);
    }
}
