//! Source-to-source instrumentation that logs function entries with their
//! calling position, and conversion of the resulting traces into call edges.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::path::Path;

use callsight_js::NodeKind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, write_file, Error, Result};
use crate::features::Tree;
use crate::graph::{
    graph_from_sources, relative_path, Diagnostic, FileFilter, NodeId, ProgramGraph,
};
use crate::truth::{CallEdgeSet, Provenance, RecordDiagnostic, SpanIndex, SpanRef};

pub const SHIM_FILE: &str = "__callsight_shim.cjs";
pub const SITE_MAP_FILE: &str = "__callsight_sitemap.json";
pub const TRACE_ENV: &str = "CG_TRACE_OUT";

/// `"file:start:end"` → node id for every call site and function definition.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SiteMap {
    pub entries: BTreeMap<String, NodeId>,
}

impl SiteMap {
    pub fn from_graph(graph: &ProgramGraph) -> Self {
        let entries = graph
            .nodes
            .iter()
            .filter(|n| n.kind.is_call_site() || n.kind.is_function())
            .filter_map(|n| Some((SpanRef::of(graph, n.id)?.key(), n.id)))
            .collect();
        SiteMap { entries }
    }

    pub fn get(&self, file: &str, start: usize, end: usize) -> Option<NodeId> {
        self.entries.get(&format!("{file}:{start}:{end}")).copied()
    }

    /// Splits a key into `(file, start, end)`; file names may contain `:`.
    pub fn parse_key(key: &str) -> Option<(&str, usize, usize)> {
        let (rest, end) = key.rsplit_once(':')?;
        let (file, start) = rest.rsplit_once(':')?;
        Some((file, start.parse().ok()?, end.parse().ok()?))
    }

    /// Entries keyed by `(file, start)`, the key the logger reports.
    pub fn by_start(&self) -> HashMap<(String, usize), NodeId> {
        self.entries
            .iter()
            .filter_map(|(k, &id)| {
                let (file, start, _) = SiteMap::parse_key(k)?;
                Some(((file.to_string(), start), id))
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("site map serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json("site map", e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        SiteMap::from_json(&read_to_string(path)?)
    }
}

/// Text inserted before the original byte at `offset`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Insertion {
    pub offset: usize,
    pub text: String,
    /// Orders insertions sharing an offset (smaller first).
    order: (u8, std::cmp::Reverse<usize>),
}

#[derive(Debug, Clone)]
pub struct InstrumentedFile {
    pub text: String,
    pub insertions: Vec<Insertion>,
}

fn logger_call(file: &str, start: usize) -> String {
    let file = serde_json::to_string(file).expect("string serializes");
    format!("typeof __cg_enter===\"function\"&&__cg_enter({file},{start});")
}

/// Instruments every function in one parsed file. `tree` must be the
/// unpruned graph containing the file; `file` is its index.
fn file_insertions(tree: &Tree<'_>, file: u32, src: &str) -> Vec<Insertion> {
    let graph = tree.graph;
    let name = &graph.files[file as usize];
    let mut out = Vec::new();
    for (i, f) in graph.nodes.iter().enumerate() {
        if f.file != Some(file) || !f.kind.is_function() {
            continue;
        }
        let Some(body) = tree.child(i, "body") else {
            continue;
        };
        let body_node = tree.node(body);
        let call = logger_call(name, f.start);
        if body_node.kind == NodeKind::BlockStatement {
            let directives = tree.children[body]
                .iter()
                .take_while(|&&s| {
                    let stmt = tree.node(s);
                    stmt.kind == NodeKind::ExpressionStatement
                        && tree.children[s].len() == 1
                        && tree.node(tree.children[s][0]).kind == NodeKind::Literal
                        && matches!(
                            src.as_bytes()[tree.node(tree.children[s][0]).start],
                            b'"' | b'\''
                        )
                })
                .last();
            let (offset, text) = match directives {
                Some(&last) => (tree.node(last).end, format!(";{call}")),
                None => (body_node.start + 1, call),
            };
            out.push(Insertion {
                offset,
                text,
                order: (1, std::cmp::Reverse(0)),
            });
        } else {
            out.push(Insertion {
                offset: body_node.start,
                text: format!("{{{call}return "),
                order: (1, std::cmp::Reverse(0)),
            });
            // Closers sharing an offset close the innermost function first.
            out.push(Insertion {
                offset: body_node.end,
                text: "}".to_string(),
                order: (0, std::cmp::Reverse(f.start)),
            });
        }
    }
    out.sort_by_key(|a| (a.offset, a.order));
    out
}

fn apply(src: &str, insertions: &[Insertion]) -> String {
    let mut text =
        String::with_capacity(src.len() + insertions.iter().map(|i| i.text.len()).sum::<usize>());
    let mut at = 0;
    for ins in insertions {
        text.push_str(&src[at..ins.offset]);
        text.push_str(&ins.text);
        at = ins.offset;
    }
    text.push_str(&src[at..]);
    text
}

/// Per line (1-based), `[column, length]` of each insertion in UTF-16 units
/// of the original line, in application order. The shim uses it to map
/// instrumented stack positions back to original ones.
fn shift_table(src: &str, insertions: &[Insertion]) -> BTreeMap<u32, Vec<[u32; 2]>> {
    let mut table: BTreeMap<u32, Vec<[u32; 2]>> = BTreeMap::new();
    for ins in insertions {
        let (line, col) = callsight_js::line_col(src, ins.offset);
        let len = ins.text.encode_utf16().count() as u32;
        table.entry(line).or_default().push([col - 1, len]);
    }
    table
}

pub fn instrument_source(
    name: &str,
    src: &str,
) -> std::result::Result<InstrumentedFile, callsight_js::ParseError> {
    let (graph, diags) = graph_from_sources(&[(name.to_string(), src.to_string())]);
    if let Some(d) = diags.into_iter().next() {
        let offset =
            callsight_js::offset_of(src, d.line.unwrap_or(1), d.col.unwrap_or(1)).unwrap_or(0);
        return Err(callsight_js::ParseError {
            offset,
            message: d.message,
        });
    }
    let tree = Tree::new(&graph);
    let insertions = file_insertions(&tree, 0, src);
    Ok(InstrumentedFile {
        text: apply(src, &insertions),
        insertions,
    })
}

#[derive(Debug, Clone)]
pub struct InstrumentReport {
    pub site_map: SiteMap,
    pub diagnostics: Vec<Diagnostic>,
    pub instrumented: Vec<String>,
    pub copied: Vec<String>,
}

/// Writes an instrumented copy of `project_dir` to `out_dir`.
///
/// Every function body starts by calling the global `__cg_enter` logger
/// defined in the emitted shim, which must be preloaded
/// (`node --require ./__callsight_shim.cjs main.js`) and appends one JSON
/// line per entry to the file named by `CG_TRACE_OUT`. Directive prologues
/// stay first; expression-bodied arrows become block bodies. Files outside
/// the filter, and files that fail to parse, are copied verbatim. The site
/// map is written into `out_dir` as well.
pub fn instrument_project(
    project_dir: &Path,
    out_dir: &Path,
    filter: &FileFilter,
) -> Result<InstrumentReport> {
    let out_abs = out_dir.canonicalize().ok();
    let mut all_files = Vec::new();
    for entry in walkdir::WalkDir::new(project_dir)
        .into_iter()
        .filter_entry(|e| {
            out_abs
                .as_ref()
                .is_none_or(|o| e.path().canonicalize().ok().as_ref() != Some(o))
        })
    {
        let entry = entry
            .map_err(|e| Error::io(e.path().unwrap_or(project_dir).to_path_buf(), e.into()))?;
        if entry.file_type().is_file() {
            all_files.push(relative_path(project_dir, entry.path()));
        }
    }
    all_files.sort();
    let matched: Vec<String> = all_files
        .iter()
        .filter(|f| filter.accepts(f))
        .cloned()
        .collect();
    if matched.is_empty() {
        return Err(Error::NoFiles(project_dir.to_path_buf()));
    }
    let sources = matched
        .iter()
        .map(|rel| read_to_string(&project_dir.join(rel)).map(|s| (rel.clone(), s)))
        .collect::<Result<Vec<_>>>()?;
    let (graph, diagnostics) = graph_from_sources(&sources);
    let tree = Tree::new(&graph);
    let source_of: HashMap<&str, &str> = sources
        .iter()
        .map(|(f, s)| (f.as_str(), s.as_str()))
        .collect();
    let outputs: Vec<(String, String, BTreeMap<u32, Vec<[u32; 2]>>)> = graph
        .files
        .par_iter()
        .enumerate()
        .map(|(i, name)| {
            let src = source_of[name.as_str()];
            let insertions = file_insertions(&tree, i as u32, src);
            (
                name.clone(),
                apply(src, &insertions),
                shift_table(src, &insertions),
            )
        })
        .collect();
    let mut shifts = BTreeMap::new();
    let mut instrumented = Vec::new();
    for (name, text, table) in outputs {
        write_file(&out_dir.join(&name), text)?;
        shifts.insert(name.clone(), table);
        instrumented.push(name);
    }
    let mut copied = Vec::new();
    for rel in &all_files {
        if instrumented.binary_search(rel).is_ok() {
            continue;
        }
        let from = project_dir.join(rel);
        let bytes = std::fs::read(&from).map_err(|e| Error::io(&from, e))?;
        write_file(&out_dir.join(rel), bytes)?;
        copied.push(rel.clone());
    }
    let site_map = SiteMap::from_graph(&graph);
    write_file(&out_dir.join(SHIM_FILE), shim_source(&shifts))?;
    write_file(&out_dir.join(SITE_MAP_FILE), site_map.to_json())?;
    Ok(InstrumentReport {
        site_map,
        diagnostics,
        instrumented,
        copied,
    })
}

/// The logger shim, with the position-shift table embedded.
pub fn shim_source(shifts: &BTreeMap<String, BTreeMap<u32, Vec<[u32; 2]>>>) -> String {
    let table = serde_json::to_string(shifts).expect("table serializes");
    SHIM_TEMPLATE.replace("__SHIFTS__", &table)
}

const SHIM_TEMPLATE: &str = r#"'use strict';
// Function-entry call logger. Preload with `node --require` and set
// CG_TRACE_OUT to the trace file path.
(function () {
  const fs = require('fs');
  const path = require('path');
  const url = require('url');
  const ROOT = __dirname;
  const SHIFTS = __SHIFTS__;
  const out = process.env.CG_TRACE_OUT;
  let fd = null;
  let busy = false;

  function relative(file) {
    if (file.startsWith('file://')) file = url.fileURLToPath(file);
    if (!path.isAbsolute(file)) return null;
    const rel = path.relative(ROOT, file);
    if (rel.startsWith('..') || path.isAbsolute(rel)) return null;
    return rel.split(path.sep).join('/');
  }

  // Maps an instrumented 1-based column back to the original source.
  function originalCol(rel, line, col) {
    const rows = SHIFTS[rel] && SHIFTS[rel][line];
    if (!rows) return col;
    let p = col - 1;
    let shift = 0;
    for (const [at, len] of rows) {
      const begin = at + shift;
      if (p < begin) break;
      if (p < begin + len) return null;
      shift += len;
    }
    return p - shift + 1;
  }

  function enter(calleeFile, calleeStart) {
    if (busy || !out) return;
    busy = true;
    const savedPrepare = Error.prepareStackTrace;
    const savedLimit = Error.stackTraceLimit;
    try {
      Error.prepareStackTrace = (_, frames) => frames;
      Error.stackTraceLimit = 2;
      const holder = {};
      Error.captureStackTrace(holder, enter);
      const frames = holder.stack;
      Error.prepareStackTrace = savedPrepare;
      Error.stackTraceLimit = savedLimit;
      // frames[0] is the entered function itself; frames[1] its caller.
      const caller = Array.isArray(frames) ? frames[1] : undefined;
      const event = {
        callee_file: calleeFile,
        callee_start: calleeStart,
        caller_file: null,
        caller_line: null,
        caller_col: null,
      };
      const name = caller && caller.getFileName();
      if (caller && name && !caller.isNative()) {
        const rel = relative(name);
        const line = caller.getLineNumber();
        const col = caller.getColumnNumber();
        if (rel === null) {
          event.caller_file = name;
          event.caller_line = line;
          event.caller_col = col;
        } else {
          event.caller_file = rel;
          event.caller_line = line;
          event.caller_col = originalCol(rel, line, col);
        }
      }
      if (fd === null) fd = fs.openSync(out, 'a');
      fs.writeSync(fd, JSON.stringify(event) + '\n');
    } finally {
      Error.prepareStackTrace = savedPrepare;
      Error.stackTraceLimit = savedLimit;
      busy = false;
    }
  }

  Object.defineProperty(globalThis, '__cg_enter', { value: enter, enumerable: false });
})();
"#;

// ---------------------------------------------------------------------------
// Traces

/// One function entry as logged by the shim. Caller fields are null when the
/// caller frame is native (e.g. an array iteration builtin).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub callee_file: String,
    pub callee_start: usize,
    pub caller_file: Option<String>,
    pub caller_line: Option<u32>,
    pub caller_col: Option<u32>,
}

#[derive(Debug, Clone, Default)]
pub struct TraceReport {
    pub edges: CallEdgeSet,
    pub events: usize,
    /// Events whose caller frame was a native builtin.
    pub dropped_native: usize,
    /// Events whose caller lies outside the project (harness, runtime).
    pub dropped_outside: usize,
    pub diagnostics: Vec<RecordDiagnostic>,
}

/// Converts a trace into dynamic edges. Callers are attributed to the
/// innermost call site containing the reported position of the original
/// source, which is read from `project_dir`.
pub fn parse_traces(
    trace_file: &Path,
    site_map: &SiteMap,
    graph: &ProgramGraph,
    project_dir: &Path,
) -> Result<TraceReport> {
    let file = std::fs::File::open(trace_file).map_err(|e| Error::io(trace_file, e))?;
    let reader = std::io::BufReader::new(file);
    let mut sources: HashMap<String, Option<String>> = HashMap::new();
    trace_lines(
        reader
            .lines()
            .map(|l| l.map_err(|e| Error::io(trace_file, e))),
        site_map,
        graph,
        |rel| {
            sources
                .entry(rel.to_string())
                .or_insert_with(|| std::fs::read_to_string(project_dir.join(rel)).ok())
                .clone()
        },
    )
}

/// Streaming core of [`parse_traces`] over already-split lines.
pub fn trace_lines<I, F>(
    lines: I,
    site_map: &SiteMap,
    graph: &ProgramGraph,
    mut source: F,
) -> Result<TraceReport>
where
    I: IntoIterator<Item = Result<String>>,
    F: FnMut(&str) -> Option<String>,
{
    let callees = site_map.by_start();
    let index = SpanIndex::new(graph);
    let mut report = TraceReport::default();
    for (i, line) in lines.into_iter().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut diag = |message: String| {
            report.diagnostics.push(RecordDiagnostic {
                line: i + 1,
                message,
            });
        };
        let event: TraceEvent = match serde_json::from_str(&line) {
            Ok(e) => e,
            Err(e) => {
                diag(format!("malformed event: {e}"));
                continue;
            }
        };
        report.events += 1;
        let Some(&callee) = callees.get(&(event.callee_file.clone(), event.callee_start)) else {
            diag(format!(
                "no function at {}:{}",
                event.callee_file, event.callee_start
            ));
            continue;
        };
        if graph.node(callee).is_none_or(|n| !n.kind.is_function()) {
            diag(format!(
                "site map entry {callee} is not a function of this graph"
            ));
            continue;
        }
        let Some(caller_file) = event.caller_file.as_deref() else {
            report.dropped_native += 1;
            continue;
        };
        if graph.file_index(caller_file).is_none() {
            report.dropped_outside += 1;
            continue;
        }
        let (Some(line_no), Some(col)) = (event.caller_line, event.caller_col) else {
            diag(format!(
                "caller position in {caller_file} falls inside instrumentation"
            ));
            continue;
        };
        let offset =
            source(caller_file).and_then(|src| callsight_js::offset_of(&src, line_no, col));
        let Some(offset) = offset else {
            diag(format!(
                "{caller_file}:{line_no}:{col} is not a position of the source"
            ));
            continue;
        };
        match index.call_site_at(caller_file, offset) {
            Some(cs) => report.edges.add(cs, callee, Provenance::Dynamic),
            None => diag(format!(
                "{caller_file}:{line_no}:{col} is inside no call site"
            )),
        }
    }
    Ok(report)
}
