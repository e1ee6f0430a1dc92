use thiserror::Error;

/// Malformed input files or numbers.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("malformed number `{0}`")]
    BadNumber(String),
    #[error("unknown element `{0}`")]
    UnknownElement(String),
    #[error("duplicate element `{0}` in universe")]
    DuplicateElement(String),
    #[error("symbol `{name}` has arity {expected} but a tuple of length {found} was given")]
    TupleArity { name: String, expected: usize, found: usize },
    #[error("symbol `{0}` is declared twice")]
    DuplicateSymbol(String),
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{line}:{col}: expected {}, found {found}", expected.join(" or "))]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub expected: Vec<String>,
    pub found: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ValidationError {
    #[error("symbol `{name}` has arity {expected}, used with {found} arguments")]
    ArityMismatch { name: String, expected: usize, found: usize },
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("`{0}` is a relation symbol, used as a weight function")]
    NotAFunction(String),
    #[error("`{0}` is a weight function symbol, used as a relation")]
    NotARelation(String),
    #[error("duplicate rule for `{0}`")]
    DuplicateRule(String),
    #[error("no rule for intensional symbol `{0}`")]
    MissingRule(String),
    #[error("free variable `{var}` of the body of `{head}` does not occur in the head")]
    EscapingVariable { head: String, var: String },
    #[error("head variables of `{0}` are not pairwise distinct")]
    RepeatedHeadVariable(String),
    #[error("symbol `{0}` is both intensional and extensional")]
    IntensionalExtensionalClash(String),
    #[error("symbol `{0}` is bound by more than one ifp operator")]
    DoubleBinding(String),
    #[error("ifp term inside a stratum rule for `{0}`")]
    IfpInStratum(String),
    #[error("rule body kind does not match the kind of `{0}`")]
    BodyKindMismatch(String),
    #[error("answer symbol `{0}` is not defined by any stratum")]
    BadAnswerSymbol(String),
    #[error("program has no strata")]
    EmptyProgram,
    #[error("symbol `{0}` is declared twice")]
    DuplicateSymbol(String),
    #[error("unknown builtin `{0}`")]
    UnknownBuiltin(String),
    #[error("missing parameter `{0}`")]
    MissingParameter(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("fixpoint iteration exceeded its bound of {0} rounds")]
    IterationBoundExceeded(usize),
    #[error("structure does not match the program: {0}")]
    StructureMismatch(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransformError {
    #[error("timestamped arity {arity} exceeds the cap of {cap}")]
    ArityCapExceeded { arity: usize, cap: usize },
    #[error("precondition unsatisfiable: {0}")]
    PreconditionUnsatisfiable(String),
    #[error("answer symbol `{0}` is not intensional in the stratum")]
    UnknownAnswer(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FnnError {
    #[error("expected {expected} input values, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("edge {from} -> {to} has weight {weight}; only positive natural weights can be split")]
    UnsupportedWeight { from: String, to: String, weight: String },
    #[error("malformed CNF: {0}")]
    BadCnf(String),
}

/// Failure to turn program or expression text into a validated AST.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SyntaxError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

/// Umbrella error for callers that mix stages, such as the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Fnn(#[from] FnnError),
}
