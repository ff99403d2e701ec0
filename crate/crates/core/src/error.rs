use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit reports.
///
/// Each variant has a stable machine-readable [`Error::code`], which the
/// command-line front end prints as `ERROR <code>: <detail>`.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line counts differ: {left} vs {right}")]
    LineCountMismatch { left: usize, right: usize },
    #[error("line {line} has no tokens")]
    EmptyLine { line: usize },
    #[error("reserved marker {token:?} found in {context}")]
    ReservedToken { token: String, context: String },
    #[error("line {line}: malformed alignment item {item:?}")]
    MalformedLink { line: usize, item: String },
    #[error("line {line}: link {i}-{j} outside a {src_len}x{tgt_len} sentence pair")]
    IndexOutOfRange {
        line: usize,
        i: usize,
        j: usize,
        src_len: usize,
        tgt_len: usize,
    },
    #[error("corpus has no word alignments")]
    MissingAlignments,
    #[error("empty span")]
    EmptySpan,
    #[error("span [{begin}, {end}) out of range for {len} tokens")]
    SpanOutOfRange { begin: usize, end: usize, len: usize },
    #[error("bad magic bytes, expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("file is truncated")]
    TruncatedFile,
    #[error("sentence {sentence}: expected {expected} token vectors, found {found}")]
    TokenCountMismatch {
        sentence: usize,
        expected: usize,
        found: usize,
    },
    #[error("bad shape: {0}")]
    BadShape(String),
    #[error("no input vectors")]
    EmptyInput,
    #[error("re-ranking requested but the index keeps no original vectors")]
    NoOriginals,
    #[error("duplicate id {0}")]
    DuplicateId(u64),
    #[error("non-finite vector component")]
    NonFinite,
    #[error("phrase database is empty")]
    EmptyDatabase,
    #[error("unsupported format version {found}")]
    VersionMismatch { found: u32 },
    #[error("dangling prompt marker: {0}")]
    DanglingMarker(String),
    #[error("empty phrase")]
    EmptyPhrase,
    #[error("hypothesis/reference counts differ: {hyps} vs {refs}")]
    LengthMismatch { hyps: usize, refs: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("no constraint cases")]
    EmptyCaseSet,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::LineCountMismatch { .. } => "LineCountMismatch",
            Error::EmptyLine { .. } => "EmptyLine",
            Error::ReservedToken { .. } => "ReservedToken",
            Error::MalformedLink { .. } => "MalformedLink",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::MissingAlignments => "MissingAlignments",
            Error::EmptySpan => "EmptySpan",
            Error::SpanOutOfRange { .. } => "SpanOutOfRange",
            Error::BadMagic { .. } => "BadMagic",
            Error::DimMismatch { .. } => "DimMismatch",
            Error::TruncatedFile => "TruncatedFile",
            Error::TokenCountMismatch { .. } => "TokenCountMismatch",
            Error::BadShape(_) => "BadShape",
            Error::EmptyInput => "EmptyInput",
            Error::NoOriginals => "NoOriginals",
            Error::DuplicateId(_) => "DuplicateId",
            Error::NonFinite => "NonFinite",
            Error::EmptyDatabase => "EmptyDatabase",
            Error::VersionMismatch { .. } => "VersionMismatch",
            Error::DanglingMarker(_) => "DanglingMarker",
            Error::EmptyPhrase => "EmptyPhrase",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::EmptyCorpus => "EmptyCorpus",
            Error::EmptyCaseSet => "EmptyCaseSet",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::Format(_) => "Format",
            Error::Io(_) => "IoError",
        }
    }

    /// Maps an unexpected EOF to [`Error::TruncatedFile`].
    pub(crate) fn from_read(err: io::Error) -> Self {
        if err.kind() == io::ErrorKind::UnexpectedEof {
            Error::TruncatedFile
        } else {
            Error::Io(err)
        }
    }
}
