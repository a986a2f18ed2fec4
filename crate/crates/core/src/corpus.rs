//! Seeded synthetic projects with known call edges.
//!
//! Every function `fn_k` is a uniquely named declaration; each call names its
//! target directly (or, for a configurable share of calls, through an alias
//! variable `alias_k = fn_k`) and passes as many arguments as the target
//! declares parameters. The true edges are emitted as an edge file.
//!
//! Two configurations that share `signature_seed` but differ in `seed` give
//! twin projects: the same functions and signatures, different calls.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{write_file, Result};
use crate::truth::{EdgeRecord, Provenance, SpanRef};

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub functions: usize,
    pub files: usize,
    /// Each function makes between 1 and this many calls.
    pub max_calls: usize,
    /// Share of calls that go through an alias variable instead of the
    /// function's own name.
    pub alias_fraction: f64,
    /// Prefix of every function name.
    pub prefix: String,
    /// Seed of the function signatures (parameter counts). Twin projects
    /// share it and differ only in `seed`, which drives the calls.
    pub signature_seed: u64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            functions: 60,
            files: 6,
            max_calls: 5,
            alias_fraction: 0.0,
            prefix: "fn".to_string(),
            signature_seed: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticProject {
    /// `(relative path, source)`, sorted by path.
    pub files: Vec<(String, String)>,
    /// True call edges, one record per call.
    pub edges: Vec<EdgeRecord>,
}

impl SyntheticProject {
    /// The true edges in the edge-file format.
    pub fn edge_text(&self) -> String {
        let mut out = String::new();
        for r in &self.edges {
            out.push_str(&serde_json::to_string(r).expect("edge records serialize"));
            out.push('\n');
        }
        out
    }

    /// Writes the sources under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        for (name, src) in &self.files {
            write_file(&dir.join(name), src)?;
        }
        Ok(())
    }
}

struct Function {
    file: usize,
    params: usize,
    /// Byte span of the function's name within its file.
    name_span: (usize, usize),
}

pub fn synthetic_project(cfg: &CorpusConfig) -> SyntheticProject {
    let mut sig_rng = ChaCha8Rng::seed_from_u64(cfg.signature_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let files = cfg.files.max(1);
    let per_file = cfg.functions.div_ceil(files).max(1);
    let mut funcs: Vec<Function> = (0..cfg.functions)
        .map(|k| Function {
            file: k / per_file,
            params: sig_rng.gen_range(0..=3),
            name_span: (0, 0),
        })
        .collect();
    // Calls are planned up front so alias declarations can be emitted with
    // their targets.
    let mut calls: Vec<Vec<(usize, bool)>> = Vec::with_capacity(cfg.functions);
    let mut aliased = vec![false; cfg.functions];
    for k in 0..cfg.functions {
        let n = if cfg.functions > 1 {
            rng.gen_range(1..=cfg.max_calls.max(1))
        } else {
            0
        };
        let mut targets: Vec<usize> = (0..cfg.functions).filter(|&j| j != k).collect();
        targets.shuffle(&mut rng);
        let planned: Vec<(usize, bool)> = targets
            .into_iter()
            .take(n)
            .map(|j| {
                let alias = rng.gen_bool(cfg.alias_fraction.clamp(0.0, 1.0));
                aliased[j] |= alias;
                (j, alias)
            })
            .collect();
        calls.push(planned);
    }

    let name = |k: usize| format!("{}_{k}", cfg.prefix);
    let alias = |k: usize| format!("alias_{}_{k}", cfg.prefix);
    let file_name = |f: usize| format!("mod_{f}.js");
    let mut sources = vec![String::new(); files];
    let mut call_spans: Vec<Vec<(usize, usize, usize)>> = vec![Vec::new(); cfg.functions];
    for k in 0..cfg.functions {
        let src = &mut sources[funcs[k].file];
        let params: Vec<String> = (0..funcs[k].params).map(|i| format!("p{i}")).collect();
        src.push_str("function ");
        let start = src.len();
        src.push_str(&name(k));
        funcs[k].name_span = (start, src.len());
        src.push_str(&format!("({}) {{\n  return {k}", params.join(", ")));
        for &(j, via_alias) in &calls[k] {
            let args: Vec<String> = (0..funcs[j].params).map(|i| i.to_string()).collect();
            src.push_str(" + ");
            let s = src.len();
            src.push_str(&if via_alias { alias(j) } else { name(j) });
            call_spans[k].push((j, s, src.len()));
            src.push_str(&format!("({})", args.join(", ")));
        }
        src.push_str(";\n}\n");
        if aliased[k] {
            src.push_str(&format!("var {} = {};\n", alias(k), name(k)));
        }
        src.push('\n');
    }

    let mut edges = Vec::new();
    for (k, spans) in call_spans.iter().enumerate() {
        for &(j, s, e) in spans {
            let (fs, fe) = funcs[j].name_span;
            edges.push(EdgeRecord {
                caller: SpanRef {
                    file: file_name(funcs[k].file),
                    start: s,
                    end: e,
                },
                callee: SpanRef {
                    file: file_name(funcs[j].file),
                    start: fs,
                    end: fe,
                },
                provenance: Provenance::Static,
                count: 1,
            });
        }
    }
    SyntheticProject {
        files: sources
            .into_iter()
            .enumerate()
            .map(|(f, s)| (file_name(f), s))
            .collect(),
        edges,
    }
}
