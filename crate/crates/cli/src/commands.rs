//! Subcommand implementations.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use callsight::eval::{
    aggregate_weighted, evaluate, histogram_svg, predictions_text, rank_callsite, Categorizer,
    TransferProject,
};
use callsight::features::Tree;
use callsight::graph::{sha256_hex, DEFAULT_EXCLUDE, DEFAULT_INCLUDE};
use callsight::instrument::{instrument_project, parse_traces, SiteMap};
use callsight::model::{train, Checkpoint, Hyperparams};
use callsight::truth::{
    edge_file_text_with_meta, heuristic_static_resolve, ingest_static_edges, SpanRef,
};
use callsight::{
    build_graph, compute_features, default_prune_kinds, CallEdgeSet, FileFilter, FileMeta, NodeId,
    NodeKind, ProgramGraph, Provenance, TOOL_VERSION,
};
use serde_json::{json, Value};

use crate::config::{Manifest, PipelineConfig};
use crate::{Cli, CliError, Command, HyperparamArgs};

type Result<T> = std::result::Result<T, CliError>;

/// File name of the provenance record `instrument` writes into its output.
pub const INSTRUMENT_META_FILE: &str = "__callsight_meta.json";

struct Ctx {
    json: bool,
    cfg: PipelineConfig,
    seed: Option<u64>,
}

impl Ctx {
    /// The seed recorded in outputs: flag, then config, then `fallback`.
    fn seed(&self, fallback: u64) -> u64 {
        self.seed.or(self.cfg.seed).unwrap_or(fallback)
    }

    fn warn(&self, message: &str) {
        if self.json {
            eprintln!("{}", json!({"level": "warning", "message": message}));
        } else {
            eprintln!("warning: {message}");
        }
    }

    fn summary(&self, value: Value, human: impl FnOnce() -> String) {
        if self.json {
            println!("{value}");
        } else {
            println!("{}", human());
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // Read by the worker pool on first use, which has not happened yet.
        std::env::set_var("RAYON_NUM_THREADS", n.to_string());
    }
    let cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let ctx = Ctx {
        json: cli.json,
        cfg,
        seed: cli.seed,
    };
    match &cli.command {
        Command::BuildGraph(a) => build_graph_cmd(&ctx, a),
        Command::StaticEdges(a) => static_edges(&ctx, a),
        Command::Instrument(a) => instrument(&ctx, a),
        Command::TraceParse(a) => trace_parse(&ctx, a),
        Command::Train(a) => train_cmd(&ctx, a),
        Command::Rank(a) => rank(&ctx, a),
        Command::Evaluate(a) => evaluate_cmd(&ctx, a),
        Command::Transfer(a) => transfer(&ctx, a),
        Command::Categorize(a) => categorize(&ctx, a),
        Command::Serve(a) => serve(&ctx, a),
    }
}

// ---------------------------------------------------------------------------
// Helpers

fn pick(flag: &Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.clone().or_else(|| configured.clone()).ok_or_else(|| {
        CliError::Usage(format!(
            "missing {what}: pass it as a flag or set it in the config"
        ))
    })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&read_bytes(path)?))
}

fn file_meta(seed: u64, inputs: &[(String, &Path)]) -> Result<FileMeta> {
    let mut input_digests = BTreeMap::new();
    for (role, path) in inputs {
        input_digests.insert(role.clone(), digest(path)?);
    }
    Ok(FileMeta {
        tool_version: TOOL_VERSION.to_string(),
        seed,
        input_digests,
    })
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("values serialize");
    s.push('\n');
    s
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("values serialize")
}

fn load_graph(path: &Path) -> Result<ProgramGraph> {
    Ok(ProgramGraph::load(path)?)
}

/// Merges edge files, reporting per-record diagnostics as warnings.
fn load_edges(ctx: &Ctx, graph: &ProgramGraph, files: &[PathBuf]) -> Result<CallEdgeSet> {
    let mut out = CallEdgeSet::new();
    for f in files {
        let report = ingest_static_edges(f, graph)?;
        for d in &report.diagnostics {
            ctx.warn(&format!("{}:{}: {}", f.display(), d.line, d.message));
        }
        for e in report.edges.iter() {
            out.insert(e);
        }
    }
    Ok(out)
}

fn edge_inputs(files: &[PathBuf]) -> Vec<(String, &Path)> {
    files
        .iter()
        .enumerate()
        .map(|(i, f)| {
            (
                if files.len() == 1 {
                    "edges".to_string()
                } else {
                    format!("edges.{i}")
                },
                f.as_path(),
            )
        })
        .collect()
}

fn filter(ctx: &Ctx, include: &[String], exclude: &[String]) -> Result<FileFilter> {
    let or_default = |flag: &[String], cfg: &[String], default: &[&str]| -> Vec<String> {
        if !flag.is_empty() {
            flag.to_vec()
        } else if !cfg.is_empty() {
            cfg.to_vec()
        } else {
            default.iter().map(|s| s.to_string()).collect()
        }
    };
    let include = or_default(include, &ctx.cfg.include_globs, DEFAULT_INCLUDE);
    let exclude = or_default(exclude, &ctx.cfg.exclude_globs, DEFAULT_EXCLUDE);
    FileFilter::new(&include, &exclude).map_err(|e| CliError::Usage(e.to_string()))
}

fn hyperparams(
    ctx: &Ctx,
    base: Option<&Hyperparams>,
    args: &HyperparamArgs,
) -> Result<Hyperparams> {
    let mut hp = match &args.hp {
        Some(path) => serde_json::from_slice(&read_bytes(path)?)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
        None => base
            .or(ctx.cfg.hyperparams.as_ref())
            .cloned()
            .unwrap_or_default(),
    };
    if let Some(v) = args.epochs {
        hp.max_epochs = v;
    }
    if let Some(v) = args.lr {
        hp.lr_init = v;
    }
    if let Some(v) = args.patience {
        hp.plateau_patience = v;
    }
    if let Some(v) = args.layers {
        hp.layers = v;
    }
    if let Some(v) = args.hidden {
        hp.hidden_dim = v;
    }
    if args.labels_only {
        hp.train_edges_in_graph = false;
    }
    hp.seed = ctx.seed(hp.seed);
    hp.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(hp)
}

/// Resolves `FILE:START`, `FILE:START:END` or a node id to a call site. When
/// several calls start at the same offset (`f()()`), the innermost wins.
pub fn resolve_callsite(graph: &ProgramGraph, spec: &str) -> Result<NodeId> {
    let is_site = |id: NodeId| graph.node(id).is_some_and(|n| n.kind.is_call_site());
    if let Ok(id) = spec.parse::<NodeId>() {
        return if is_site(id) {
            Ok(id)
        } else {
            Err(CliError::Data(format!("node {id} is not a call site")))
        };
    }
    let parts: Vec<&str> = spec.rsplitn(3, ':').collect();
    let (file, start, end): (String, usize, Option<usize>) = match parts.as_slice() {
        [end, start, file] if end.parse::<usize>().is_ok() && start.parse::<usize>().is_ok() => {
            (file.to_string(), start.parse().unwrap(), end.parse().ok())
        }
        [start, rest @ ..] if start.parse::<usize>().is_ok() && !rest.is_empty() => {
            let file = spec[..spec.len() - start.len() - 1].to_string();
            (file, start.parse().unwrap(), None)
        }
        _ => {
            return Err(CliError::Usage(format!(
                "call site `{spec}` is not FILE:START[:END] or a node id"
            )))
        }
    };
    graph
        .nodes
        .iter()
        .filter(|n| {
            n.kind.is_call_site() && graph.file_name(n) == Some(file.as_str()) && n.start == start
        })
        .filter(|n| end.is_none_or(|e| n.end == e))
        .min_by_key(|n| n.end)
        .map(|n| n.id)
        .ok_or_else(|| CliError::Data(format!("no call site starts at {spec}")))
}

fn span_value(graph: &ProgramGraph, id: NodeId) -> Value {
    match SpanRef::of(graph, id) {
        Some(s) => json!({"file": s.file, "start": s.start, "end": s.end}),
        None => Value::Null,
    }
}

// ---------------------------------------------------------------------------
// Subcommands

fn build_graph_cmd(ctx: &Ctx, a: &crate::BuildGraphArgs) -> Result<()> {
    let project = pick(&a.project, &ctx.cfg.project_dir, "--project")?;
    let out = pick(&a.out, &ctx.cfg.paths.graph, "--out")?;
    let filter = filter(ctx, &a.include, &a.exclude)?;
    let kinds: BTreeSet<NodeKind> = if a.no_prune {
        BTreeSet::new()
    } else {
        match a.prune_kinds.as_ref().or(ctx.cfg.prune_kinds.as_ref()) {
            Some(names) => names
                .iter()
                .map(|k| NodeKind::from_str(k.trim()).map_err(|e| CliError::Usage(e.to_string())))
                .collect::<Result<_>>()?,
            None => default_prune_kinds(),
        }
    };
    if let Some(k) = kinds.iter().find(|&&k| callsight::prune::is_protected(k)) {
        return Err(CliError::Usage(format!(
            "node kind {k} is protected and cannot be pruned"
        )));
    }
    let (mut graph, diagnostics) = build_graph(&project, &filter, &kinds)?;
    graph.meta.seed = ctx.seed(0);
    for d in &diagnostics {
        ctx.warn(&d.to_string());
    }
    graph.save(&out)?;
    let semantic = graph.nodes.iter().filter(|n| n.semantic).count();
    ctx.summary(
        json!({
            "out": out, "files": graph.files.len(), "nodes": graph.nodes.len(),
            "edges": graph.edges.len(), "semantic_nodes": semantic, "diagnostics": diagnostics,
        }),
        || {
            format!(
                "{}: {} files, {} nodes ({} semantic), {} edges, {} skipped",
                out.display(),
                graph.files.len(),
                graph.nodes.len(),
                semantic,
                graph.edges.len(),
                diagnostics.len()
            )
        },
    );
    Ok(())
}

fn static_edges(ctx: &Ctx, a: &crate::StaticEdgesArgs) -> Result<()> {
    let graph_path = pick(&a.graph, &ctx.cfg.paths.graph, "--graph")?;
    let out = pick(&a.out, &ctx.cfg.paths.edges, "--out")?;
    let graph = load_graph(&graph_path)?;
    let mut inputs = vec![("graph".to_string(), graph_path.as_path())];
    let (edges, unresolved) = match &a.ingest {
        Some(export) => {
            inputs.push(("export".to_string(), export.as_path()));
            let report = ingest_static_edges(export, &graph)?;
            for d in &report.diagnostics {
                ctx.warn(&format!("{}:{}: {}", export.display(), d.line, d.message));
            }
            (report.edges, report.unresolved)
        }
        None => (heuristic_static_resolve(&graph), 0),
    };
    let meta = file_meta(ctx.seed(graph.meta.seed), &inputs)?;
    write(&out, edge_file_text_with_meta(&graph, &edges, &meta)?)?;
    let sites = edges.callsites().len();
    ctx.summary(
        json!({"out": out, "edges": edges.len(), "call_sites": sites, "unresolved_records": unresolved}),
        || format!("{}: {} edges over {} call sites ({} records unresolved)", out.display(), edges.len(), sites, unresolved),
    );
    Ok(())
}

fn instrument(ctx: &Ctx, a: &crate::InstrumentArgs) -> Result<()> {
    let project = pick(&a.project, &ctx.cfg.project_dir, "--project")?;
    let filter = filter(ctx, &a.include, &a.exclude)?;
    let report = instrument_project(&project, &a.out, &filter)?;
    for d in &report.diagnostics {
        ctx.warn(&d.to_string());
    }
    let sources: Vec<(String, PathBuf)> = report
        .instrumented
        .iter()
        .map(|f| (format!("source:{f}"), project.join(f)))
        .collect();
    let inputs: Vec<(String, &Path)> = sources
        .iter()
        .map(|(r, p)| (r.clone(), p.as_path()))
        .collect();
    let meta = file_meta(ctx.seed(0), &inputs)?;
    write(&a.out.join(INSTRUMENT_META_FILE), pretty(&to_value(&meta)))?;
    ctx.summary(
        json!({
            "out": a.out, "instrumented": report.instrumented.len(), "copied": report.copied.len(),
            "sites": report.site_map.entries.len(), "diagnostics": report.diagnostics,
        }),
        || {
            format!(
                "{}: {} files instrumented, {} copied; run with `node --require ./{} <entry>` and {} set",
                a.out.display(),
                report.instrumented.len(),
                report.copied.len(),
                callsight::instrument::SHIM_FILE,
                callsight::instrument::TRACE_ENV
            )
        },
    );
    Ok(())
}

fn trace_parse(ctx: &Ctx, a: &crate::TraceParseArgs) -> Result<()> {
    let graph_path = pick(&a.graph, &ctx.cfg.paths.graph, "--graph")?;
    let out = pick(&a.out, &None, "--out")?;
    let graph = load_graph(&graph_path)?;
    let project = a
        .project
        .clone()
        .or_else(|| graph.project_dir())
        .ok_or_else(|| {
            CliError::Usage("the graph records no project directory; pass --project".into())
        })?;
    let site_map = SiteMap::load(&a.site_map)?;
    let report = parse_traces(&a.trace, &site_map, &graph, &project)?;
    for d in &report.diagnostics {
        ctx.warn(&format!("{}:{}: {}", a.trace.display(), d.line, d.message));
    }
    let inputs = [
        ("graph".to_string(), graph_path.as_path()),
        ("trace".to_string(), a.trace.as_path()),
        ("site_map".to_string(), a.site_map.as_path()),
    ];
    let meta = file_meta(ctx.seed(graph.meta.seed), &inputs)?;
    write(
        &out,
        edge_file_text_with_meta(&graph, &report.edges, &meta)?,
    )?;
    ctx.summary(
        json!({
            "out": out, "events": report.events, "edges": report.edges.len(),
            "dropped_native": report.dropped_native, "dropped_outside": report.dropped_outside,
            "diagnostics": report.diagnostics.len(),
        }),
        || {
            format!(
                "{}: {} events -> {} edges ({} native and {} outside-project callers dropped)",
                out.display(),
                report.events,
                report.edges.len(),
                report.dropped_native,
                report.dropped_outside
            )
        },
    );
    Ok(())
}

fn train_cmd(ctx: &Ctx, a: &crate::TrainArgs) -> Result<()> {
    let graph_path = pick(&a.graph, &ctx.cfg.paths.graph, "--graph")?;
    let out = pick(&a.out, &ctx.cfg.paths.checkpoint, "--out")?;
    let edge_files = if a.edges.is_empty() {
        vec![pick(&None, &ctx.cfg.paths.edges, "--edges")?]
    } else {
        a.edges.clone()
    };
    let hp = hyperparams(ctx, None, &a.hp)?;
    let graph = load_graph(&graph_path)?;
    let positives = load_edges(ctx, &graph, &edge_files)?;
    let features = compute_features(&graph);
    let outcome = train(&graph, &features, &positives, &hp)?;
    let report = &outcome.report;

    let mut inputs = vec![("graph".to_string(), graph_path.as_path())];
    inputs.extend(edge_inputs(&edge_files));
    let meta = file_meta(hp.seed, &inputs)?;
    let mut ckpt = Checkpoint::new(outcome.params.clone());
    ckpt.meta.graph_digest = meta.input_digests.get("graph").cloned();
    ckpt.meta.input_digests = meta.input_digests.clone();
    ckpt.meta.train_edges = outcome.splits.train.pairs().collect();
    ckpt.meta.val_edges = outcome.splits.val.pairs().collect();
    ckpt.meta.test_edges = outcome.splits.test.pairs().collect();
    if let Some(best) = report.best() {
        ckpt.meta
            .metrics
            .insert("val_hit_at_1".into(), best.val_hit_at_1);
        ckpt.meta
            .metrics
            .insert("val_hit_at_5".into(), best.val_hit_at_5);
        ckpt.meta
            .metrics
            .insert("val_mean_rank".into(), best.val_mean_rank);
        ckpt.meta.metrics.insert("val_loss".into(), best.val_loss);
    }
    ckpt.meta
        .metrics
        .insert("epochs".into(), report.epochs.len() as f64);
    ckpt.meta
        .metrics
        .insert("best_epoch".into(), report.best_epoch as f64);
    ckpt.save(&out)?;

    if let Some(path) = &a.report {
        let mut body = to_value(report);
        if !a.record_times {
            body.as_object_mut()
                .expect("report is an object")
                .remove("wall_time_secs");
        }
        write(
            path,
            pretty(&json!({"meta": meta, "hyperparams": hp, "report": body})),
        )?;
    }
    let best = report.best();
    ctx.summary(
        json!({
            "out": out, "epochs": report.epochs.len(), "best_epoch": report.best_epoch,
            "stop_reason": report.stop_reason, "final_lr": report.final_lr,
            "val_hit_at_1": best.map(|b| b.val_hit_at_1), "val_hit_at_5": best.map(|b| b.val_hit_at_5),
            "train_edges": outcome.splits.train.len(), "val_edges": outcome.splits.val.len(),
            "test_edges": outcome.splits.test.len(), "wall_time_secs": report.wall_time_secs,
        }),
        || {
            format!(
                "{}: {} epochs ({:?}), best epoch {} with val hit@1 {:.3} hit@5 {:.3}; {:.1}s",
                out.display(),
                report.epochs.len(),
                report.stop_reason,
                report.best_epoch,
                best.map_or(0.0, |b| b.val_hit_at_1),
                best.map_or(0.0, |b| b.val_hit_at_5),
                report.wall_time_secs
            )
        },
    );
    Ok(())
}

fn rank(ctx: &Ctx, a: &crate::RankArgs) -> Result<()> {
    let graph_path = pick(&a.graph, &ctx.cfg.paths.graph, "--graph")?;
    let model_path = pick(&a.model, &ctx.cfg.paths.checkpoint, "--model")?;
    let graph = load_graph(&graph_path)?;
    let ckpt = Checkpoint::load(&model_path)?;
    let callsite = resolve_callsite(&graph, &a.callsite)?;
    let predictor = ckpt.predictor(&graph, &compute_features(&graph))?;
    let ranking = rank_callsite(&predictor, &graph, callsite, None)?;
    let tree = Tree::new(&graph);
    let candidates: Vec<Value> = ranking
        .top(a.k)
        .iter()
        .enumerate()
        .map(|(rank, c)| {
            let node = graph.node(c.callee).expect("candidate exists");
            json!({
                "rank": rank, "callee": c.callee, "score": c.score, "kind": node.kind.as_str(),
                "name": tree.function_name(graph.index_of(c.callee).unwrap()),
                "span": span_value(&graph, c.callee),
            })
        })
        .collect();
    let inputs = [
        ("graph".to_string(), graph_path.as_path()),
        ("model".to_string(), model_path.as_path()),
    ];
    let body = json!({
        "meta": file_meta(ckpt.meta.seed, &inputs)?,
        "callsite": callsite, "span": span_value(&graph, callsite),
        "n": ranking.n, "k": a.k, "candidates": candidates,
    });
    if let Some(out) = &a.out {
        write(out, pretty(&body))?;
    }
    if ctx.json {
        println!("{body}");
    } else {
        println!("call site {callsite} ({} candidates)", ranking.n);
        for c in &candidates {
            println!(
                "{:>3}  {:.6}  {:>6}  {}:{}  {}",
                c["rank"],
                c["score"].as_f64().unwrap_or(0.0),
                c["callee"],
                c["span"]["file"].as_str().unwrap_or("?"),
                c["span"]["start"],
                c["name"].as_str().unwrap_or("<anonymous>")
            );
        }
    }
    Ok(())
}

fn evaluate_cmd(ctx: &Ctx, a: &crate::EvaluateArgs) -> Result<()> {
    let graph_path = pick(&a.graph, &ctx.cfg.paths.graph, "--graph")?;
    let model_path = pick(&a.model, &ctx.cfg.paths.checkpoint, "--model")?;
    let out = pick(&a.out, &ctx.cfg.paths.report, "--out")?;
    let graph = load_graph(&graph_path)?;
    let ckpt = Checkpoint::load(&model_path)?;
    let test = if a.edges.is_empty() {
        let mut set = CallEdgeSet::new();
        for &(c, f) in &ckpt.meta.test_edges {
            set.add(c, f, Provenance::Static);
        }
        set
    } else {
        load_edges(ctx, &graph, &a.edges)?
    };
    if ckpt.meta.train_edges_in_graph {
        let messages: BTreeSet<(NodeId, NodeId)> = ckpt.meta.train_edges.iter().copied().collect();
        let leaked = test.pairs().filter(|p| messages.contains(p)).count();
        if leaked > 0 {
            return Err(CliError::Data(format!(
                "{leaked} evaluation edges are training message edges of this checkpoint"
            )));
        }
    }
    let predictor = ckpt.predictor(&graph, &compute_features(&graph))?;
    let evaluation = evaluate(&predictor, &graph, &test)?;
    let mut inputs = vec![
        ("graph".to_string(), graph_path.as_path()),
        ("model".to_string(), model_path.as_path()),
    ];
    inputs.extend(edge_inputs(&a.edges));
    let meta = file_meta(ckpt.meta.seed, &inputs)?;
    let mut summary = to_value(&evaluation.summary);
    if !a.record_times {
        summary
            .as_object_mut()
            .expect("summary is an object")
            .remove("runtime_secs");
    }
    let s = &evaluation.summary;
    let random_hit_at_1 = if s.candidates == 0 {
        0.0
    } else {
        1.0 / s.candidates as f64
    };
    write(
        &out,
        pretty(&json!({
            "meta": meta, "summary": summary, "random_hit_at_1": random_hit_at_1,
            "checkpoint_metrics": ckpt.meta.metrics,
        })),
    )?;
    if let Some(p) = &a.predictions {
        write(p, meta.header_line() + &predictions_text(&evaluation, a.k))?;
    }
    if let Some(dir) = &a.plots {
        let svg = histogram_svg("Rank of the true callee", &s.histogram);
        let stamp = format!(
            "<!-- callsight {} seed {} model {} -->\n",
            TOOL_VERSION,
            meta.seed,
            meta.input_digests.get("model").map_or("", String::as_str)
        );
        write(&dir.join("rank_histogram.svg"), stamp + &svg)?;
    }
    let (h1, h5) = if s.test_edges == 0 {
        (0.0, 0.0)
    } else {
        (s.hit(1), s.hit(5))
    };
    ctx.summary(
        json!({
            "out": out, "test_edges": s.test_edges, "call_sites": s.call_sites, "candidates": s.candidates,
            "hit_at_1": h1, "hit_at_5": h5, "mean_rank": s.mean_rank, "random_hit_at_1": random_hit_at_1,
        }),
        || {
            format!(
                "{} test edges over {} candidates: hit@1 {:.3}, hit@5 {:.3}, mean rank {:.2} (random hit@1 {:.4})",
                s.test_edges, s.candidates, h1, h5, s.mean_rank, random_hit_at_1
            )
        },
    );
    Ok(())
}

fn transfer(ctx: &Ctx, a: &crate::TransferArgs) -> Result<()> {
    let out = pick(&a.out, &ctx.cfg.paths.report, "--out")?;
    let (manifest, resolved) = Manifest::load(&a.manifest)?;
    let hp = hyperparams(ctx, manifest.hyperparams.as_ref(), &a.hp)?;
    let mut projects = Vec::with_capacity(resolved.len());
    let mut inputs: Vec<(String, PathBuf)> = vec![("manifest".into(), a.manifest.clone())];
    for p in &resolved {
        let graph = load_graph(&p.graph)?;
        let edges = load_edges(ctx, &graph, &p.edges)?;
        inputs.push((format!("{}.graph", p.name), p.graph.clone()));
        for (i, e) in p.edges.iter().enumerate() {
            inputs.push((format!("{}.edges.{i}", p.name), e.clone()));
        }
        projects.push(TransferProject {
            name: p.name.clone(),
            graph,
            edges,
        });
    }
    let folds = callsight::eval::transfer_eval(&projects, &hp)?;
    let aggregate =
        aggregate_weighted(&folds.iter().map(|f| f.summary.clone()).collect::<Vec<_>>())?;
    let strip = |v: &mut Value| {
        if !a.record_times {
            v.as_object_mut()
                .expect("summary is an object")
                .remove("runtime_secs");
        }
    };
    let fold_values: Vec<Value> = folds
        .iter()
        .map(|f| {
            let mut summary = to_value(&f.summary);
            strip(&mut summary);
            json!({
                "held_out": f.held_out, "summary": summary,
                "train_id_range": f.train_id_range, "held_out_id_range": f.held_out_id_range,
                "best_epoch": f.train_report.best_epoch, "stop_reason": f.train_report.stop_reason,
            })
        })
        .collect();
    let mut agg = to_value(&aggregate);
    strip(&mut agg);
    let input_refs: Vec<(String, &Path)> = inputs
        .iter()
        .map(|(r, p)| (r.clone(), p.as_path()))
        .collect();
    write(
        &out,
        pretty(&json!({
            "meta": file_meta(hp.seed, &input_refs)?, "hyperparams": hp,
            "folds": fold_values, "aggregate": agg,
        })),
    )?;
    ctx.summary(
        json!({
            "out": out,
            "folds": folds.iter().map(|f| json!({"held_out": f.held_out, "hit_at_1": f.summary.hit(1), "hit_at_5": f.summary.hit(5)})).collect::<Vec<_>>(),
            "hit_at_1": aggregate.hit(1), "hit_at_5": aggregate.hit(5),
        }),
        || {
            let mut s = String::new();
            for f in &folds {
                s.push_str(&format!(
                    "held out {}: hit@1 {:.3}, hit@5 {:.3}\n",
                    f.held_out,
                    f.summary.hit(1),
                    f.summary.hit(5)
                ));
            }
            s + &format!("weighted: hit@1 {:.3}, hit@5 {:.3}", aggregate.hit(1), aggregate.hit(5))
        },
    );
    Ok(())
}

fn categorize(ctx: &Ctx, a: &crate::CategorizeArgs) -> Result<()> {
    let graph_path = pick(&a.graph, &ctx.cfg.paths.graph, "--graph")?;
    let out = pick(&a.out, &None, "--out")?;
    let edge_files = if a.edges.is_empty() {
        vec![pick(&None, &ctx.cfg.paths.edges, "--edges")?]
    } else {
        a.edges.clone()
    };
    let graph = load_graph(&graph_path)?;
    let edges = load_edges(ctx, &graph, &edge_files)?;
    let categorizer = Categorizer::new(&graph);
    let mut counts: BTreeMap<&'static str, usize> = BTreeMap::new();
    let mut inputs = vec![("graph".to_string(), graph_path.as_path())];
    inputs.extend(edge_inputs(&edge_files));
    let mut text = file_meta(ctx.seed(graph.meta.seed), &inputs)?.header_line();
    for e in edges.iter() {
        let category = categorizer.categorize(e.callsite, e.callee)?;
        *counts.entry(category.as_str()).or_default() += 1;
        let line = json!({
            "callsite": e.callsite, "callee": e.callee, "category": category,
            "caller": span_value(&graph, e.callsite), "callee_span": span_value(&graph, e.callee),
        });
        text.push_str(&line.to_string());
        text.push('\n');
    }
    write(&out, text)?;
    ctx.summary(
        json!({"out": out, "edges": edges.len(), "categories": counts}),
        || {
            counts
                .iter()
                .map(|(k, v)| format!("{k:<22} {v}"))
                .collect::<Vec<_>>()
                .join("\n")
        },
    );
    Ok(())
}

fn serve(ctx: &Ctx, a: &crate::ServeArgs) -> Result<()> {
    let graph = pick(&a.graph, &ctx.cfg.paths.graph, "--graph")?;
    let model = pick(&a.model, &ctx.cfg.paths.checkpoint, "--model")?;
    let edges = pick(&a.edges, &ctx.cfg.paths.edges, "--edges")?;
    let addr: std::net::SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| CliError::Usage(format!("bad address {}:{}: {e}", a.host, a.port)))?;
    let triage = Arc::new(callsight_triage::Triage::open(
        &graph, &model, &edges, &a.log,
    )?);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Data(e.to_string()))?;
    if ctx.json {
        eprintln!(
            "{}",
            json!({"level": "info", "message": "listening", "addr": addr.to_string()})
        );
    } else {
        eprintln!("listening on http://{addr}/v1/");
    }
    runtime
        .block_on(callsight_triage::serve(addr, triage))
        .map_err(|e| CliError::Data(format!("cannot serve on {addr}: {e}")))
}
