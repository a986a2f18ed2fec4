//! Project configuration and transfer manifests.

use std::path::{Path, PathBuf};

use callsight::model::Hyperparams;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Where a project's artifacts live.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub graph: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

/// One project's pipeline settings. Command-line flags override it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub project_dir: Option<PathBuf>,
    pub include_globs: Vec<String>,
    pub exclude_globs: Vec<String>,
    /// Node kinds to prune; the default set when absent.
    pub prune_kinds: Option<Vec<String>>,
    pub hyperparams: Option<Hyperparams>,
    pub seed: Option<u64>,
    pub paths: Paths,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl PipelineConfig {
    /// Reads a config file; relative paths in it are taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.project_dir);
        resolve(base, &mut cfg.paths.graph);
        resolve(base, &mut cfg.paths.edges);
        resolve(base, &mut cfg.paths.checkpoint);
        resolve(base, &mut cfg.paths.report);
        Ok(cfg)
    }
}

/// One project of a transfer study: either explicit files or a config
/// whose `paths.graph` and `paths.edges` are used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestProject {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub config: Option<PathBuf>,
    #[serde(default)]
    pub graph: Option<PathBuf>,
    #[serde(default)]
    pub edges: Vec<PathBuf>,
}

/// Projects for `transfer`, with the hyperparameters every fold uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default)]
    pub hyperparams: Option<Hyperparams>,
    pub projects: Vec<ManifestProject>,
}

/// A manifest project resolved to concrete files.
#[derive(Debug, Clone)]
pub struct ResolvedProject {
    pub name: String,
    pub graph: PathBuf,
    pub edges: Vec<PathBuf>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<(Self, Vec<ResolvedProject>), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut out = Vec::with_capacity(manifest.projects.len());
        for (i, p) in manifest.projects.iter().enumerate() {
            let cfg = match &p.config {
                Some(c) => PipelineConfig::load(&base.join(c))?,
                None => PipelineConfig::default(),
            };
            let graph = p
                .graph
                .as_ref()
                .map(|g| base.join(g))
                .or(cfg.paths.graph.clone())
                .ok_or_else(|| CliError::Data(format!("manifest project {i} names no graph")))?;
            let mut edges: Vec<PathBuf> = p.edges.iter().map(|e| base.join(e)).collect();
            if edges.is_empty() {
                edges.extend(cfg.paths.edges.clone());
            }
            if edges.is_empty() {
                return Err(CliError::Data(format!(
                    "manifest project {i} names no edge file"
                )));
            }
            out.push(ResolvedProject {
                name: p.name.clone().unwrap_or_else(|| format!("p{i}")),
                graph,
                edges,
            });
        }
        Ok((manifest, out))
    }
}
