use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde_json::json;
use sitgraph::analyze::{exposed_examples, labeled_dataset, report, ReportConfig};
use sitgraph::embed::{import_embeddings, node2vec, EmbeddingTable};
use sitgraph::eventsim::{generate, simulate_event, EventOutcome, Exposure, GeneratorConfig};
use sitgraph::graph::NodeSetRole;
use sitgraph::learn::{
    balanced_sample, evaluate, feature_importance, predict, sigmoid, train, train_test_split, TreeEnsemble,
};
use sitgraph::measures::{compute_all, read_features, write_features, MeasureRecord};
use sitgraph::recommend::{e2e_rate, model_columns, recommend_all, score_records, write_windows, FeedWindow};
use sitgraph::{Graph, NodeId};

use crate::config::RunConfig;
use crate::error::{require, CliError, Result};
use crate::manifest::{file_sha256, Manifest};
use crate::Command;

pub fn dispatch(command: &Command, cfg: &RunConfig) -> Result<(Manifest, String)> {
    let out = cfg.out_dir();
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    match command {
        Command::Ingest => ingest(cfg),
        Command::Features(_) => features(cfg),
        Command::Train(_) => train_model(cfg),
        Command::Predict => predict_pairs(cfg),
        Command::Recommend(_) => recommend(cfg),
        Command::Simulate(_) => simulate(cfg),
        Command::Analyze(_) => analyze(cfg),
    }
}

pub fn load_graph(cfg: &RunConfig) -> Result<Graph> {
    let path = cfg.graph_path();
    require(&path, "graph", "pass --graph or run `ingest` first")?;
    let g = if path.extension().is_some_and(|e| e == "snap") {
        Graph::load_snapshot(&path)?
    } else {
        Graph::load_edge_list(&path, cfg.weight_policy)?
    };
    Ok(g)
}

fn load_features(cfg: &RunConfig, g: &Graph) -> Result<Vec<MeasureRecord>> {
    let path = cfg.features_path();
    require(&path, "feature file", "pass --features or run `features` first")?;
    Ok(read_features(&path, g)?)
}

fn load_labels(cfg: &RunConfig, g: &Graph) -> Result<EventOutcome> {
    let path = cfg.labels_path();
    require(&path, "event outcome", "pass --labels or run `simulate` first")?;
    Ok(EventOutcome::read(&path, g)?)
}

fn load_model(cfg: &RunConfig) -> Result<TreeEnsemble> {
    let path = cfg.model_path();
    require(&path, "trained model", "pass --model or run `train` first")?;
    Ok(TreeEnsemble::load(&path)?)
}

fn input_digest(inputs: &mut BTreeMap<String, String>, role: &str, path: &Path) -> Result<()> {
    inputs.insert(role.to_string(), file_sha256(path)?);
    Ok(())
}

/// Writes `name` under the output directory, header first, and records it.
fn emit(
    cfg: &RunConfig,
    manifest: &mut Manifest,
    name: &str,
    body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
) -> Result<()> {
    let path = cfg.out_dir().join(name);
    let file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(manifest.header().as_bytes())
        .and_then(|_| body(&mut w))
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(&path, e))?;
    manifest.record(cfg.out_dir(), name)
}

fn emit_json(cfg: &RunConfig, manifest: &mut Manifest, name: &str, mut value: serde_json::Value) -> Result<()> {
    value["manifest"] = json!(manifest.id);
    let path = cfg.out_dir().join(name);
    let mut text = serde_json::to_string_pretty(&value).expect("json serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    manifest.record(cfg.out_dir(), name)
}

fn finish(cfg: &RunConfig, manifest: Manifest, summary: String) -> Result<(Manifest, String)> {
    manifest.write(cfg.out_dir())?;
    Ok((manifest, summary))
}

fn ingest(cfg: &RunConfig) -> Result<(Manifest, String)> {
    if cfg.paths.graph.is_none() {
        return Err(CliError::Invalid("ingest needs --graph".into()));
    }
    let g = load_graph(cfg)?;
    let mut manifest = Manifest::new("ingest", cfg, g.content_hash(), BTreeMap::new());
    let snap = cfg.out_dir().join("graph.snap");
    g.save_snapshot(&snap)?;
    manifest.record(cfg.out_dir(), "graph.snap")?;
    let dangling = g.nodes().filter(|&v| g.out_degree(v) == 0).count();
    emit_json(
        cfg,
        &mut manifest,
        "graph_stats.json",
        json!({
            "nodes": g.n(),
            "edges": g.m(),
            "dangling": dangling,
            "graph_hash": g.content_hash(),
        }),
    )?;
    let summary = format!("ingested {} nodes and {} edges", g.n(), g.m());
    finish(cfg, manifest, summary)
}

/// Imports the configured embeddings or trains node2vec, writing the
/// trained table as an artifact.
fn embeddings(cfg: &RunConfig, g: &Graph, manifest: &mut Manifest) -> Result<EmbeddingTable> {
    match &cfg.paths.embeddings {
        Some(path) => Ok(import_embeddings(path, g)?),
        None => {
            let emb = node2vec(g, &cfg.walk_config(), &cfg.train_config())?;
            emit(cfg, manifest, "embeddings.txt", |w| emb.write(g, w))?;
            Ok(emb)
        }
    }
}

fn all_pairs(g: &Graph) -> Vec<(NodeId, NodeId)> {
    let roles = NodeSetRole::all(g);
    g.edges()
        .filter(|&(s, t, _)| roles.sources.contains(s) && roles.targets.contains(t))
        .map(|(s, t, _)| (s, t))
        .collect()
}

fn compute_features(cfg: &RunConfig, g: &Graph, manifest: &mut Manifest) -> Result<Vec<MeasureRecord>> {
    let emb = embeddings(cfg, g, manifest)?;
    let records = compute_all(g, &all_pairs(g), &emb, &cfg.measures.measure_config())?;
    emit(cfg, manifest, "features.tsv", |w| write_features(g, &records, w))?;
    Ok(records)
}

fn features(cfg: &RunConfig) -> Result<(Manifest, String)> {
    let g = load_graph(cfg)?;
    let mut inputs = BTreeMap::new();
    if let Some(path) = &cfg.paths.embeddings {
        input_digest(&mut inputs, "embeddings", path)?;
    }
    let mut manifest = Manifest::new("features", cfg, g.content_hash(), inputs);
    let records = compute_features(cfg, &g, &mut manifest)?;
    let summary = format!("computed measures for {} pairs", records.len());
    finish(cfg, manifest, summary)
}

fn train_model(cfg: &RunConfig) -> Result<(Manifest, String)> {
    let g = load_graph(cfg)?;
    let records = load_features(cfg, &g)?;
    let outcome = load_labels(cfg, &g)?;
    let mut inputs = BTreeMap::new();
    input_digest(&mut inputs, "features", &cfg.features_path())?;
    input_digest(&mut inputs, "labels", &cfg.labels_path())?;
    let mut manifest = Manifest::new("train", cfg, g.content_hash(), inputs);

    let joined = exposed_examples(&records, &outcome)?;
    let data = labeled_dataset(&joined, &cfg.measures.columns, cfg.behavior);
    let labels: Vec<bool> = data.examples.iter().map(|e| e.label).collect();
    let idx: Vec<usize> = if cfg.evaluation.balanced {
        balanced_sample(&labels, cfg.stream("balance"))
    } else {
        (0..labels.len()).collect()
    };
    let (tr, te) = train_test_split(&idx, &labels, cfg.evaluation.test_fraction, cfg.stream("split"))?;
    let mut model = train(&data.subset(&tr), &cfg.learner)?;
    model.manifest = Some(manifest.id.clone());
    let path = cfg.out_dir().join("model.json");
    model.save(&path)?;
    manifest.record(cfg.out_dir(), "model.json")?;

    let test = data.subset(&te);
    let rep = evaluate(&model, &test)?;
    let auc = rep.auc.map_or("n/a".to_string(), |a| format!("{a:.4}"));
    emit(cfg, &mut manifest, "metrics.txt", |w| {
        writeln!(w, "behavior\t{}", cfg.behavior.name())?;
        writeln!(w, "train_pairs\t{}", tr.len())?;
        writeln!(w, "test_pairs\t{}", te.len())?;
        writeln!(w, "auc\t{auc}")?;
        writeln!(w, "accuracy\t{:.4}", rep.accuracy)?;
        writeln!(w, "f1\t{:.4}", rep.f1)
    })?;
    let (importance, _) = feature_importance(&model);
    emit(cfg, &mut manifest, "importance.tsv", |w| {
        writeln!(w, "feature\timportance")?;
        for (name, v) in &importance {
            writeln!(w, "{name}\t{v:.4}")?;
        }
        Ok(())
    })?;
    let summary = format!(
        "trained {} trees on {} pairs; test auc {auc}",
        model.trees.len(),
        tr.len()
    );
    finish(cfg, manifest, summary)
}

fn predict_pairs(cfg: &RunConfig) -> Result<(Manifest, String)> {
    let g = load_graph(cfg)?;
    let model = load_model(cfg)?;
    let records = load_features(cfg, &g)?;
    let mut inputs = BTreeMap::new();
    input_digest(&mut inputs, "features", &cfg.features_path())?;
    input_digest(&mut inputs, "model", &cfg.model_path())?;
    let mut manifest = Manifest::new("predict", cfg, g.content_hash(), inputs);
    let columns = model_columns(&model)?;
    let scores = records
        .iter()
        .map(|r| predict(&model, &r.select(&columns)))
        .collect::<sitgraph::Result<Vec<f64>>>()?;
    emit(cfg, &mut manifest, "predictions.tsv", |w| {
        writeln!(w, "source\ttarget\tscore\tprobability")?;
        for (r, s) in records.iter().zip(&scores) {
            writeln!(w, "{}\t{}\t{s}\t{}", g.name(r.source), g.name(r.target), sigmoid(*s))?;
        }
        Ok(())
    })?;
    let summary = format!("scored {} pairs", records.len());
    finish(cfg, manifest, summary)
}

fn recommend(cfg: &RunConfig) -> Result<(Manifest, String)> {
    let model = load_model(cfg)?;
    let g = load_graph(cfg)?;
    let records = load_features(cfg, &g)?;
    let mut inputs = BTreeMap::new();
    input_digest(&mut inputs, "features", &cfg.features_path())?;
    input_digest(&mut inputs, "model", &cfg.model_path())?;
    let mut manifest = Manifest::new("recommend", cfg, g.content_hash(), inputs);
    let scores = score_records(&model, &records)?;
    let roles = NodeSetRole::all(&g);
    let windows = recommend_all(&g, &scores, &roles.sources, &roles.targets, cfg.k)?;
    emit(cfg, &mut manifest, "recommendations.tsv", |w| write_windows(&g, &windows, w))?;
    let shown: usize = windows.iter().map(|w| w.targets.len()).sum();
    let summary = format!("{} windows, {shown} recommendations", windows.len());
    finish(cfg, manifest, summary)
}

/// Reads `source target rank score` rows back into windows.
pub fn read_windows(path: &Path, g: &Graph) -> Result<Vec<FeedWindow>> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut windows: BTreeMap<NodeId, Vec<(usize, NodeId, f64)>> = BTreeMap::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| sitgraph::Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(bad(format!("expected 4 columns, found {}", f.len())).into());
        }
        let node = |name: &str| g.id(name).ok_or_else(|| bad(format!("unknown node `{name}`")));
        let rank: usize = f[2].parse().map_err(|_| bad(format!("invalid rank `{}`", f[2])))?;
        let score: f64 = f[3].parse().map_err(|_| bad(format!("invalid score `{}`", f[3])))?;
        windows.entry(node(f[0])?).or_default().push((rank, node(f[1])?, score));
    }
    Ok(windows
        .into_iter()
        .map(|(source, mut rows)| {
            rows.sort_by_key(|r| r.0);
            FeedWindow {
                source,
                targets: rows.into_iter().map(|(_, t, s)| (t, s)).collect(),
            }
        })
        .collect())
}

fn simulate(cfg: &RunConfig) -> Result<(Manifest, String)> {
    let (g, generated) = match &cfg.paths.graph {
        Some(_) => (load_graph(cfg)?, false),
        None => {
            let gen = generate(&GeneratorConfig {
                family: cfg.simulate.generator.clone(),
                seed: cfg.stream("generator"),
            })?;
            (gen.graph, true)
        }
    };
    let mut inputs = BTreeMap::new();
    if let Some(path) = &cfg.paths.features {
        input_digest(&mut inputs, "features", path)?;
    } else if let Some(path) = &cfg.paths.embeddings {
        input_digest(&mut inputs, "embeddings", path)?;
    }
    if let Some(path) = &cfg.paths.windows {
        input_digest(&mut inputs, "windows", path)?;
    }
    let mut manifest = Manifest::new("simulate", cfg, g.content_hash(), inputs);
    if generated {
        g.save_snapshot(cfg.out_dir().join("graph.snap"))?;
        manifest.record(cfg.out_dir(), "graph.snap")?;
        emit(cfg, &mut manifest, "graph.txt", |w| {
            for (s, t, wt) in g.edges() {
                writeln!(w, "{} {} {wt}", g.name(s), g.name(t))?;
            }
            Ok(())
        })?;
    }
    let records = match &cfg.paths.features {
        Some(_) => load_features(cfg, &g)?,
        None => compute_features(cfg, &g, &mut manifest)?,
    };
    let windows = match &cfg.paths.windows {
        Some(path) => Some(read_windows(path, &g)?),
        None => None,
    };
    let exposure = match &windows {
        Some(w) => Exposure::Windows(w),
        None => Exposure::RandomK(cfg.simulate.exposure_k.unwrap_or(usize::MAX)),
    };
    let roles = NodeSetRole::all(&g);
    let outcome = simulate_event(&g, &records, &roles, &cfg.simulate.behavior, &exposure, cfg.stream("event"))?;
    emit(cfg, &mut manifest, "outcome.tsv", |w| outcome.write(&g, w))?;
    let exposed = outcome.exposed().count();
    let invited = outcome.pairs.iter().filter(|p| p.invited).count();
    let e2e = e2e_rate(&outcome).ok();
    emit_json(
        cfg,
        &mut manifest,
        "simulation.json",
        json!({
            "pairs": outcome.pairs.len(),
            "exposed_pairs": exposed,
            "invitations": invited,
            "adoptions": outcome.pairs.iter().filter(|p| p.adopted).count(),
            "e2e": e2e,
        }),
    )?;
    let summary = match e2e {
        Some(r) => format!(
            "{exposed} exposed pairs, {invited} invitations, E2E rate {:.4}",
            r.rate
        ),
        None => "no exposed sources".to_string(),
    };
    finish(cfg, manifest, summary)
}

fn analyze(cfg: &RunConfig) -> Result<(Manifest, String)> {
    let g = load_graph(cfg)?;
    let records = load_features(cfg, &g)?;
    let outcome = load_labels(cfg, &g)?;
    let mut inputs = BTreeMap::new();
    input_digest(&mut inputs, "features", &cfg.features_path())?;
    input_digest(&mut inputs, "labels", &cfg.labels_path())?;
    let mut manifest = Manifest::new("analyze", cfg, g.content_hash(), inputs);
    let rcfg = ReportConfig {
        boost: cfg.learner,
        repetitions: cfg.evaluation.repetitions,
        test_fraction: cfg.evaluation.test_fraction,
        seed: cfg.stream("analyze"),
        ..ReportConfig::default()
    };
    let roles = NodeSetRole::all(&g);
    let rep = report(&g, &records, &outcome, &roles.targets, &rcfg)?;
    let dir = cfg.out_dir().join("report");
    rep.write_bundle(&dir, &manifest.header())?;
    let mut names: Vec<String> = fs::read_dir(&dir)
        .map_err(|e| CliError::io(&dir, e))?
        .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect::<std::io::Result<_>>()
        .map_err(|e| CliError::io(&dir, e))?;
    names.sort();
    for name in names {
        manifest.record(cfg.out_dir(), &format!("report/{name}"))?;
    }
    let summary = format!(
        "{} metric rows, {} conversion curves",
        rep.metrics.len(),
        rep.curves.len()
    );
    finish(cfg, manifest, summary)
}
