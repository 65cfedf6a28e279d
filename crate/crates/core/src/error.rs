use crate::mesh::BodyPart;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("label count {found} does not match vertex count {expected}")]
    LabelMismatch { expected: usize, found: usize },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("vertex count mismatch: {left} vs {right}")]
    ShapeMismatch { left: usize, right: usize },

    #[error("scale factor {0} is not positive")]
    NonPositiveScale(f64),

    #[error("matrix is singular or orientation-reversing (det = {0})")]
    SingularMatrix(f64),

    #[error("key node set is empty")]
    EmptyNodeSet,

    #[error("no valid key nodes for body part {0:?}")]
    NoValidNodes(Option<BodyPart>),

    #[error("length mismatch: {0}")]
    Alignment(String),

    #[error("solver diverged (non-finite loss)")]
    Divergence,

    #[error("requested {requested} nodes from a mesh with {available} vertices")]
    TooFewVertices { requested: usize, available: usize },

    #[error("cannot fit a model to an empty stream")]
    EmptyStream,

    #[error("bitstream truncated while reading {0}")]
    TruncatedStream(String),

    #[error("malformed escape sequence")]
    BadEscape,

    #[error("key nodes are only partially labeled")]
    UnlabeledNodes,

    #[error("spatio-temporal prediction needs the previous frame's translation model")]
    MissingPreviousModel,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("bad magic bytes")]
    BadMagic,

    #[error("unsupported bitstream version {0}")]
    VersionUnsupported(u16),

    #[error("corrupt block: {0}")]
    CorruptBlock(String),

    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),

    #[error("GoF {gof}: {source}")]
    InGof {
        gof: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Strips GoF context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::InGof { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn in_gof(self, gof: usize) -> Error {
        Error::InGof {
            gof,
            source: Box::new(self),
        }
    }
}
