use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("tokenization unavailable: {0}")]
    TokenizationUnavailable(String),
    #[error("layout has no task-input tokens to mask")]
    EmptyMaskableSet,
    #[error("oracle unreachable: {0}")]
    OracleUnreachable(String),
    #[error("context too long: {len} tokens exceeds limit of {max}")]
    ContextTooLong { len: usize, max: usize },
    #[error("protocol error: {0}")]
    ProtocolError(String),
    #[error("index {0} is not a maskable position")]
    IndexOutOfRange(usize),
    #[error("{p} maskable tokens exceeds exact enumeration limit of {limit}")]
    TooManyTokens { p: usize, limit: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("every output token had degenerate (near-zero) input contributions")]
    AllTokensDegenerate,
    #[error("contribution profile has zero norm")]
    ZeroProfile,
    #[error("prediction and explanation layouts have different task-input spans")]
    MisalignedLayouts,
    #[error("unsupported task for this test: {0}")]
    UnsupportedTask(String),
    #[error("chain of thought too short: {0} tokens")]
    CoTTooShort(usize),
    #[error("no corruption rule applies to the chain of thought")]
    NoCorruptionApplicable,
    #[error("no paraphrase rule applies to the chain of thought")]
    NoParaphraseApplicable,
    #[error("line {line}: parse error: {message}")]
    ParseError { line: usize, message: String },
    #[error("schema error: missing or invalid field `{0}`")]
    SchemaError(String),
    #[error("template error: {0}")]
    TemplateError(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("value {0} out of range")]
    OutOfRange(f64),
    #[error("empty selection")]
    EmptySelection,
    #[error("record has no CC-SHAP result")]
    MissingCCShap,
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
