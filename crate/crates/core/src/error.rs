use thiserror::Error;

use crate::term::TypeTag;

/// Errors raised while reading or validating corpus files.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("line {line}, column {column}: malformed token `{token}`")]
    MalformedToken {
        line: usize,
        column: usize,
        token: String,
    },
    #[error("line {line}: pitch {value} out of range 0-11")]
    PitchOutOfRange { line: usize, value: u32 },
    #[error("line {line}: missing `<id>:` prefix")]
    MissingId { line: usize },
    #[error("line {line}: duplicate melody id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("corpus is empty")]
    Empty,
    #[error("requested {requested} melodies but corpus holds {available}")]
    InsufficientSize { requested: usize, available: usize },
    #[error("invalid corpus JSON: {0}")]
    Json(String),
}

/// Type errors reported by the term checker.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TypeError {
    #[error("type mismatch: expected {expected}, found {found}")]
    Mismatch { expected: TypeTag, found: TypeTag },
    #[error("cannot apply a term of non-function type {0}")]
    NotAFunction(TypeTag),
    #[error("router {router} cannot route arguments here: {reason}")]
    Unroutable { router: String, reason: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error("program contains an unfilled hole of type {0}")]
    Hole(TypeTag),
    #[error("arity mismatch: {0}")]
    Arity(String),
    #[error("evaluation exceeded {0} reduction steps")]
    StepLimit(usize),
    #[error("output exceeded {0} notes")]
    OutputLimit(usize),
    #[error("program did not evaluate to a note sequence")]
    NotNotes,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("unexpected end of input")]
    Eof,
    #[error("at byte {pos}: {msg}")]
    At { pos: usize, msg: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrammarError {
    #[error("type {0} cannot be generated by the grammar")]
    Unreachable(TypeTag),
    #[error("invalid grammar parameter: {0}")]
    Invalid(String),
    #[error("enumeration depth {0} exceeds the guard of 4")]
    DepthGuard(u32),
    #[error("config: {0}")]
    Config(String),
    #[error("program {0} has probability zero under the grammar")]
    Ungenerable(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LibraryError {
    #[error("invalid Pitman-Yor parameters: {0}")]
    Params(String),
    #[error("need at least two melodies, got {0}")]
    TooFewMelodies(usize),
    #[error("library schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("corrupt library: {0}")]
    Corrupt(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("zero variance; statistic is undefined")]
    ZeroVariance,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PidError {
    #[error("joint table is not normalized (sum = {0})")]
    Unnormalized(f64),
    #[error("joint table has a negative entry")]
    Negative,
    #[error("exact decomposition supports exactly two sources, got {0}")]
    Sources(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("ordering is not a permutation of the training ids: {0}")]
    InvalidPermutation(String),
    #[error("{0}")]
    Precondition(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Library(#[from] LibraryError),
}
