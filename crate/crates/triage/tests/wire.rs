use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use callsight::model::{init_model, Checkpoint, Hyperparams};
use callsight::truth::{heuristic_static_resolve, ingest_edge_text, write_edge_file};
use callsight::{
    build_graph, default_prune_kinds, enumerate_endpoints, CallEdgeSet, FileFilter, NodeId,
    ProgramGraph, Provenance,
};
use callsight_triage::wire::{
    CandidateList, DecisionAck, DecisionRequest, ErrorBody, ExportBody, UnresolvedList,
};
use callsight_triage::{router, DecisionLog, Triage, Verdict};
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use tempfile::TempDir;
use tower::ServiceExt;

const PARSER_JS: &str = r#"var lexer = Object.create(this.lexer);
if (lexer.showPosition) {
    errStr = 'Parse error on line ' + (yylineno+1)
        + ":\n" + lexer.showPosition() + "\nExpecting "
        + expected.join(', ') + ", got '"
        + (this.terminals_[symbol] || symbol) + "'";
}
"#;

const LEXER_JS: &str = r#"var lexer = (function (){
  var lexer = ({
    showPosition: function () {
      var pre = this.pastInput();
      var c = new Array(pre.length + 1).join("-");
      return pre + this.upcomingInput() + "\n" + c + "^";
    }
  });
  return lexer;
})();
parser.lexer = lexer;
"#;

const UTIL_JS: &str = r#"function add(a, b) { return a + b; }
var twice = function (x) { return add(x, x); };
add(1, 2);
twice(3);
"#;

struct Fixture {
    dir: TempDir,
    graph: ProgramGraph,
    static_edges: CallEdgeSet,
}

impl Fixture {
    fn new(files: &[(&str, &str)]) -> Self {
        let dir = TempDir::new().unwrap();
        let project = dir.path().join("project");
        for (name, src) in files {
            std::fs::create_dir_all(&project).unwrap();
            std::fs::write(project.join(name), src).unwrap();
        }
        let filter = FileFilter::new(&["**/*.js"], &[] as &[&str]).unwrap();
        let (graph, diags) = build_graph(&project, &filter, &default_prune_kinds()).unwrap();
        assert!(diags.is_empty(), "{diags:?}");
        let static_edges = heuristic_static_resolve(&graph);
        let hp = Hyperparams {
            layers: 2,
            hidden_dim: 8,
            name_buckets: 32,
            seed: 3,
            ..Hyperparams::default()
        };
        let ckpt = Checkpoint::new(init_model(&hp).unwrap());
        graph.save(&dir.path().join("g.json")).unwrap();
        ckpt.save(&dir.path().join("m.ckpt")).unwrap();
        write_edge_file(&dir.path().join("edges.jsonl"), &graph, &static_edges).unwrap();
        Fixture {
            dir,
            graph,
            static_edges,
        }
    }

    fn figs() -> Self {
        Fixture::new(&[
            ("parser.js", PARSER_JS),
            ("lexer.js", LEXER_JS),
            ("util.js", UTIL_JS),
        ])
    }

    fn path(&self, name: &str) -> std::path::PathBuf {
        self.dir.path().join(name)
    }

    fn triage(&self) -> Triage {
        Triage::open(
            &self.path("g.json"),
            &self.path("m.ckpt"),
            &self.path("edges.jsonl"),
            &self.path("log.jsonl"),
        )
        .unwrap()
    }

    fn app(&self) -> Router {
        router(Arc::new(self.triage()))
    }

    fn defs(&self) -> Vec<NodeId> {
        enumerate_endpoints(&self.graph).1
    }

    fn sites(&self) -> Vec<NodeId> {
        enumerate_endpoints(&self.graph).0
    }

    /// The call site whose source text starts with `text`.
    fn site(&self, file: &str, text: &str) -> NodeId {
        let src = match file {
            "parser.js" => PARSER_JS,
            "lexer.js" => LEXER_JS,
            _ => UTIL_JS,
        };
        let start = src.find(text).unwrap();
        self.sites()
            .into_iter()
            .find(|&s| {
                let n = self.graph.node(s).unwrap();
                self.graph.file_name(n) == Some(file) && n.start == start
            })
            .unwrap_or_else(|| panic!("no call site at {text}"))
    }
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    (
        status,
        res.into_body().collect().await.unwrap().to_bytes().to_vec(),
    )
}

async fn get<T: DeserializeOwned>(app: &Router, uri: &str) -> T {
    let (status, body) = call(app, Request::get(uri).body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    serde_json::from_slice(&body).unwrap()
}

async fn post(app: &Router, req: &DecisionRequest) -> (StatusCode, Vec<u8>) {
    let body = serde_json::to_vec(req).unwrap();
    call(
        app,
        Request::post("/v1/decisions")
            .header("content-type", "application/json")
            .body(Body::from(body))
            .unwrap(),
    )
    .await
}

fn accept(callsite: NodeId, callee: NodeId, timestamp: u64) -> DecisionRequest {
    DecisionRequest {
        callsite,
        callee: Some(callee),
        verdict: Verdict::Accepted,
        analyst: "tester".into(),
        timestamp: Some(timestamp),
    }
}

fn digest(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[tokio::test]
async fn unresolved_lists_the_cross_file_show_position_call() {
    let fx = Fixture::figs();
    let list: UnresolvedList = get(&fx.app(), "/v1/unresolved").await;
    let show = fx.site("parser.js", "lexer.showPosition()");
    let entry = list
        .sites
        .iter()
        .find(|s| s.callsite == show)
        .expect("showPosition site listed");
    assert_eq!(entry.callee_name.as_deref(), Some("showPosition"));
    let excerpt = entry.excerpt.as_ref().unwrap();
    let local = entry.start - excerpt.offset;
    assert!(excerpt.text[local..].starts_with("lexer.showPosition()"));
    assert_eq!(excerpt.line, 4);
    // Resolved calls in util.js are not listed.
    assert!(!list
        .sites
        .iter()
        .any(|s| s.callsite == fx.site("util.js", "add(1, 2)")));
}

#[tokio::test]
async fn unresolved_count_is_the_set_difference() {
    let fx = Fixture::figs();
    let list: UnresolvedList = get(&fx.app(), "/v1/unresolved").await;
    let resolved: BTreeSet<NodeId> = fx.static_edges.pairs().map(|(c, _)| c).collect();
    assert!(!resolved.is_empty());
    assert_eq!(list.sites.len(), fx.sites().len() - resolved.len());
    assert_eq!(list.total_call_sites, fx.sites().len());
    let keys: Vec<_> = list
        .sites
        .iter()
        .map(|s| (s.file.clone(), s.start, s.end))
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted, "ordered by file then span");
}

#[tokio::test]
async fn fully_resolved_project_has_nothing_to_triage() {
    let fx = Fixture::new(&[(
        "a.js",
        "function f(){}\nf();\nfunction g(x){ return x; }\ng(1);\n",
    )]);
    assert_eq!(fx.static_edges.len(), 2);
    let list: UnresolvedList = get(&fx.app(), "/v1/unresolved").await;
    assert!(list.sites.is_empty());
}

#[tokio::test]
async fn candidates_are_top_k_of_the_full_ranking() {
    let fx = Fixture::figs();
    let app = fx.app();
    let show = fx.site("parser.js", "lexer.showPosition()");
    let n = fx.defs().len();

    let all: CandidateList = get(&app, &format!("/v1/candidates/{show}?k=1000")).await;
    assert_eq!((all.n, all.candidates.len()), (n, n));
    assert!(all.candidates.windows(2).all(|w| w[0].score >= w[1].score));
    assert!(all.candidates.iter().enumerate().all(|(i, c)| c.rank == i));
    let ids: BTreeSet<NodeId> = all.candidates.iter().map(|c| c.callee).collect();
    assert_eq!(ids, fx.defs().into_iter().collect());

    let top: CandidateList = get(&app, &format!("/v1/candidates/{show}?k=1")).await;
    let best = all
        .candidates
        .iter()
        .map(|c| c.score)
        .fold(f64::MIN, f64::max);
    assert_eq!(top.candidates.len(), 1);
    assert_eq!(top.candidates[0].score, best);
    assert_eq!(top.candidates[0], all.candidates[0]);

    let default: CandidateList = get(&app, &format!("/v1/candidates/{show}")).await;
    assert_eq!(default.k, 20);
    assert_eq!(default.candidates, all.candidates[..n.min(20)]);

    let again: CandidateList = get(&fx.app(), &format!("/v1/candidates/{show}?k=1000")).await;
    assert_eq!(
        again, all,
        "stable across restarts with the same checkpoint"
    );
}

#[tokio::test]
async fn candidate_scores_match_the_library_ranking() {
    let fx = Fixture::figs();
    let show = fx.site("parser.js", "lexer.showPosition()");
    let ckpt = Checkpoint::load(&fx.path("m.ckpt")).unwrap();
    let predictor = ckpt
        .predictor(&fx.graph, &callsight::compute_features(&fx.graph))
        .unwrap();
    let ranking = callsight::eval::rank_callsite(&predictor, &fx.graph, show, None).unwrap();
    let served: CandidateList = get(&fx.app(), &format!("/v1/candidates/{show}?k=1000")).await;
    let pairs: Vec<(NodeId, f64)> = served
        .candidates
        .iter()
        .map(|c| (c.callee, c.score))
        .collect();
    let expected: Vec<(NodeId, f64)> = ranking
        .candidates
        .iter()
        .map(|c| (c.callee, c.score))
        .collect();
    assert_eq!(pairs, expected);
}

#[tokio::test]
async fn candidate_excerpt_shows_the_definition() {
    let fx = Fixture::figs();
    let add = fx.site("util.js", "add(1, 2)");
    let list: CandidateList = get(&fx.app(), &format!("/v1/candidates/{add}?k=100")).await;
    let show = list
        .candidates
        .iter()
        .find(|c| c.name.as_deref() == Some("showPosition"))
        .unwrap();
    assert_eq!(show.kind, "FunctionExpression");
    assert_eq!(show.file, "lexer.js");
    let ex = show.excerpt.as_ref().unwrap();
    assert!(ex.text[show.start - ex.offset..].starts_with("function ()"));
}

#[tokio::test]
async fn unknown_callsite_is_not_found() {
    let fx = Fixture::figs();
    let app = fx.app();
    let def = fx.defs()[0];
    for uri in [
        format!("/v1/candidates/{def}"),
        "/v1/candidates/999999".to_string(),
    ] {
        let (status, body) = call(&app, Request::get(&uri).body(Body::empty()).unwrap()).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
        let err: ErrorBody = serde_json::from_slice(&body).unwrap();
        assert_eq!(err.code, "not_found");
    }
}

#[tokio::test]
async fn accepted_edge_appears_in_export_with_analyst_provenance() {
    let fx = Fixture::figs();
    let app = fx.app();
    let before: ExportBody = get(&app, "/v1/export").await;
    assert_eq!(
        before.edges.len(),
        fx.static_edges.len(),
        "no decisions: export is the static set"
    );
    assert!(before.analyst_edges.is_empty());

    let show_call = fx.site("parser.js", "lexer.showPosition()");
    let show_fn = fx
        .defs()
        .into_iter()
        .find(|&d| fx.graph.node(d).unwrap().start == LEXER_JS.find("function () {").unwrap())
        .unwrap();
    let (status, body) = post(&app, &accept(show_call, show_fn, 1)).await;
    assert_eq!(status, StatusCode::OK);
    let ack: DecisionAck = serde_json::from_slice(&body).unwrap();
    assert_eq!(ack.id, 0);

    let after: ExportBody = get(&app, "/v1/export").await;
    assert_eq!(after.edges.len(), fx.static_edges.len() + 1);
    assert_eq!(after.analyst_edges.len(), 1);
    let rec = &after.analyst_edges[0];
    assert_eq!(rec.provenance, Provenance::Analyst);
    assert_eq!(
        (rec.caller.file.as_str(), rec.callee.file.as_str()),
        ("parser.js", "lexer.js")
    );
    assert!(after.edges.contains(rec));
}

#[tokio::test]
async fn later_acceptance_supersedes_earlier_one() {
    let fx = Fixture::figs();
    let app = fx.app();
    let site = fx.site("parser.js", "lexer.showPosition()");
    let (a, b) = (fx.defs()[0], fx.defs()[1]);
    assert_eq!(post(&app, &accept(site, a, 10)).await.0, StatusCode::OK);
    assert_eq!(post(&app, &accept(site, b, 20)).await.0, StatusCode::OK);
    let text = fx.triage().export_text().unwrap();
    let edges = ingest_edge_text(&text, &fx.graph).unwrap().edges;
    assert!(edges.contains(site, b));
    assert!(!edges.contains(site, a));
    let list: UnresolvedList = get(&app, "/v1/unresolved").await;
    let entry = list.sites.iter().find(|s| s.callsite == site).unwrap();
    assert_eq!(entry.decision, Some(Verdict::Accepted));
    assert_eq!(list.decided, 1);
}

#[tokio::test]
async fn invalid_decisions_are_rejected_and_not_logged() {
    let fx = Fixture::figs();
    let app = fx.app();
    let site = fx.sites()[0];
    let not_a_def = fx.sites()[1];
    let cases = [
        accept(site, not_a_def, 1),
        accept(fx.defs()[0], fx.defs()[1], 1),
        DecisionRequest {
            callsite: site,
            callee: None,
            verdict: Verdict::Accepted,
            analyst: String::new(),
            timestamp: None,
        },
    ];
    for req in &cases {
        let (status, body) = post(&app, req).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{req:?}");
        let err: ErrorBody = serde_json::from_slice(&body).unwrap();
        assert_eq!(err.code, "invalid");
    }
    let log = std::fs::read_to_string(fx.path("log.jsonl")).unwrap();
    assert!(log.is_empty());
    // A request that does not decode is a client error too.
    let (status, _) = call(
        &app,
        Request::post("/v1/decisions")
            .header("content-type", "application/json")
            .body(Body::from("{\"callsite\":1}"))
            .unwrap(),
    )
    .await;
    assert!(status.is_client_error());
}

#[tokio::test]
async fn export_equals_replaying_the_log_through_a_reference_fold() {
    let fx = Fixture::figs();
    let app = fx.app();
    let sites = fx.sites();
    let defs = fx.defs();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut sent = Vec::new();
    for _ in 0..100 {
        let verdict = [Verdict::Accepted, Verdict::Rejected, Verdict::Skipped][rng.gen_range(0..3)];
        let callee = match verdict {
            Verdict::Accepted => Some(defs[rng.gen_range(0..defs.len())]),
            _ if rng.gen_bool(0.5) => Some(defs[rng.gen_range(0..defs.len())]),
            _ => None,
        };
        let req = DecisionRequest {
            callsite: sites[rng.gen_range(0..sites.len())],
            callee,
            verdict,
            analyst: format!("a{}", rng.gen_range(0..3)),
            // Few distinct timestamps, so ties and out-of-order writes occur.
            timestamp: Some(rng.gen_range(0..30)),
        };
        assert_eq!(post(&app, &req).await.0, StatusCode::OK);
        sent.push(req);
    }
    // Reference: a stable sort by timestamp, then the last entry per site.
    let mut order: Vec<usize> = (0..sent.len()).collect();
    order.sort_by_key(|&i| sent[i].timestamp);
    let mut last: HashMap<NodeId, &DecisionRequest> = HashMap::new();
    for i in order {
        last.insert(sent[i].callsite, &sent[i]);
    }
    let mut expected = fx.static_edges.clone();
    for d in last.values().filter(|d| d.verdict == Verdict::Accepted) {
        expected.add(d.callsite, d.callee.unwrap(), Provenance::Analyst);
    }

    let body: ExportBody = get(&app, "/v1/export").await;
    let text: String = body
        .edges
        .iter()
        .map(|r| serde_json::to_string(r).unwrap() + "\n")
        .collect();
    let got = ingest_edge_text(&text, &fx.graph).unwrap().edges;
    assert_eq!(got, expected);

    // A fresh service replaying the same log reaches the same export.
    let replayed: ExportBody = get(&fx.app(), "/v1/export").await;
    assert_eq!(replayed, body);
}

#[tokio::test]
async fn ndjson_export_round_trips_through_ingest() {
    let fx = Fixture::figs();
    let app = fx.app();
    let site = fx.site("parser.js", "lexer.showPosition()");
    post(&app, &accept(site, fx.defs()[0], 5)).await;
    let (status, body) = call(
        &app,
        Request::get("/v1/export?format=ndjson")
            .body(Body::empty())
            .unwrap(),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let text = String::from_utf8(body).unwrap();
    let ingested = ingest_edge_text(&text, &fx.graph).unwrap();
    assert!(ingested.diagnostics.is_empty());
    let (all, _) =
        callsight_triage::export_augmented(&fx.graph, &fx.static_edges, fx_log(&fx).entries())
            .unwrap();
    assert_eq!(ingested.edges, all);
    let (status, _) = call(
        &app,
        Request::get("/v1/export?format=xml")
            .body(Body::empty())
            .unwrap(),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

fn fx_log(fx: &Fixture) -> DecisionLog {
    DecisionLog::open(&fx.path("log.jsonl")).unwrap()
}

#[tokio::test]
async fn concurrent_decisions_are_serialized() {
    let fx = Fixture::figs();
    let app = fx.app();
    let sites = fx.sites();
    let defs = fx.defs();
    let tasks: Vec<_> = (0..32)
        .map(|i| {
            let app = app.clone();
            let req = accept(sites[i % sites.len()], defs[i % defs.len()], i as u64);
            tokio::spawn(async move { post(&app, &req).await })
        })
        .collect();
    let mut ids = BTreeSet::new();
    for t in tasks {
        let (status, body) = t.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        ids.insert(serde_json::from_slice::<DecisionAck>(&body).unwrap().id);
    }
    assert_eq!(ids, (0..32).collect());
    assert_eq!(fx_log(&fx).entries().len(), 32);
}

#[tokio::test]
async fn service_never_writes_its_inputs() {
    let fx = Fixture::figs();
    let inputs = ["g.json", "m.ckpt", "m.ckpt.json", "edges.jsonl"];
    let before: Vec<_> = inputs.iter().map(|f| digest(&fx.path(f))).collect();
    let app = fx.app();
    let site = fx.site("parser.js", "lexer.showPosition()");
    let _: UnresolvedList = get(&app, "/v1/unresolved").await;
    let _: CandidateList = get(&app, &format!("/v1/candidates/{site}")).await;
    post(&app, &accept(site, fx.defs()[0], 1)).await;
    let _: ExportBody = get(&app, "/v1/export").await;
    let after: Vec<_> = inputs.iter().map(|f| digest(&fx.path(f))).collect();
    assert_eq!(before, after);
}

#[tokio::test]
async fn torn_log_tail_is_recovered_on_restart() {
    let fx = Fixture::figs();
    let site = fx.site("parser.js", "lexer.showPosition()");
    post(&fx.app(), &accept(site, fx.defs()[0], 1)).await;
    let log = fx.path("log.jsonl");
    let mut text = std::fs::read_to_string(&log).unwrap();
    text.push_str("{\"id\":1,\"callsite\":");
    std::fs::write(&log, text).unwrap();
    let app = fx.app();
    let (status, body) = post(&app, &accept(site, fx.defs()[1], 2)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(serde_json::from_slice::<DecisionAck>(&body).unwrap().id, 1);
    let entries = fx_log(&fx).entries().to_vec();
    assert_eq!(entries.len(), 2);
    assert_eq!(entries[1].callee, Some(fx.defs()[1]));
}

#[test]
fn decision_log_fuzz_seeds_parse() {
    let dir =
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus/decision_log");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
        let (decisions, _) = callsight_triage::parse_log(&text).unwrap();
        assert!(!decisions.is_empty());
        n += 1;
    }
    assert!(n > 0);
}
