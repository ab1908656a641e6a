//! Error type shared by every module in the crate.

use std::fmt;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
///
/// Messages are module-qualified so CLI consumers can print them verbatim.
#[derive(Debug)]
pub enum Error {
    /// A residue outside the 20-letter amino-acid alphabet.
    Validation { id: String, ch: char },
    /// Two records share an identifier.
    DuplicateId(String),
    /// A sequence (or tensor extent) violates a length bound.
    Length(String),
    /// A class is too small to split.
    Stratify(String),
    /// Label table problems: unknown ids, missing labels, bad integers.
    Label(String),
    /// Invalid or unknown configuration value.
    Config(String),
    /// Tensor shape mismatch.
    Shape(String),
    /// Malformed binary or text payload.
    Format(String),
    /// A file's declared format version is not supported by this reader.
    Version { found: u32, supported: u32 },
    /// A checkpoint and a configuration disagree structurally.
    Mismatch(String),
    /// Checksum failure or byte-level damage.
    Corruption(String),
    /// Cosine similarity of a zero vector is undefined.
    ZeroVector,
    /// Hard-negative sampling from an empty queue.
    EmptyQueue,
    /// A numeric argument outside its mathematical domain.
    Domain(String),
    /// A metric was asked for on zero observations.
    Empty(String),
    /// A ranking metric needs both classes present.
    SingleClass(String),
    /// A statistical test needs at least two observations per group.
    Variance(String),
    /// No embedding available for a sequence id.
    MissingEmbedding(String),
    Io(std::io::Error),
}

impl Error {
    /// Process exit code for CLI use: 1 for input/validation problems,
    /// 2 for IO and format problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Format(_) | Error::Version { .. } | Error::Corruption(_) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Validation { id, ch } => {
                write!(f, "seqio: record `{id}` contains non-alphabet character '{ch}'")
            }
            Error::DuplicateId(id) => write!(f, "seqio: duplicate id `{id}`"),
            Error::Length(msg) => write!(f, "length: {msg}"),
            Error::Stratify(msg) => write!(f, "seqio: cannot stratify: {msg}"),
            Error::Label(msg) => write!(f, "seqio: label table: {msg}"),
            Error::Config(msg) => write!(f, "config: {msg}"),
            Error::Shape(msg) => write!(f, "diffcore: shape: {msg}"),
            Error::Format(msg) => write!(f, "format: {msg}"),
            Error::Version { found, supported } => {
                write!(f, "format: file version {found} not supported (reader supports {supported})")
            }
            Error::Mismatch(msg) => write!(f, "version: {msg}"),
            Error::Corruption(msg) => write!(f, "format: corrupted payload: {msg}"),
            Error::ZeroVector => write!(f, "objective: cosine similarity of a zero vector"),
            Error::EmptyQueue => write!(f, "objective: negative queue is empty"),
            Error::Domain(msg) => write!(f, "objective: {msg}"),
            Error::Empty(msg) => write!(f, "metrics: {msg}"),
            Error::SingleClass(msg) => write!(f, "metrics: {msg}"),
            Error::Variance(msg) => write!(f, "metrics: {msg}"),
            Error::MissingEmbedding(id) => write!(f, "embed: no embedding for id `{id}`"),
            Error::Io(e) => write!(f, "io: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}
