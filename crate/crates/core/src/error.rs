use std::path::PathBuf;

use callsight_js::NodeKind;

use crate::graph::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid glob `{0}`")]
    BadGlob(String),
    #[error("no files under {0} match the include globs")]
    NoFiles(PathBuf),
    #[error("{0} is protected and cannot be pruned")]
    ProtectedKind(NodeKind),
    #[error("node {0} is not in the graph")]
    UnknownNode(NodeId),
    #[error("node {id} is not a {expected}")]
    WrongEndpoint { id: NodeId, expected: &'static str },
    #[error("{unresolved} of {total} edge records could not be resolved (graph built from different sources?)")]
    MostlyUnresolved { unresolved: usize, total: usize },
    #[error("cannot sample {requested} negatives: only {available} non-edge pairs exist")]
    InfeasibleNegatives { requested: usize, available: usize },
    #[error("{0} labelled edges is too few to train (need at least 20)")]
    TooFewLabels(usize),
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid hyperparameters: {0}")]
    Hyperparams(String),
    #[error("split produced an empty {0} part")]
    EmptySplit(&'static str),
    #[error("callee {callee} is not a candidate for call site {callsite}")]
    NotACandidate { callsite: NodeId, callee: NodeId },
    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}

pub(crate) fn read_to_string(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &std::path::Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
