use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("corpus {0:?} contains no documents")]
    EmptyCorpus(String),
    #[error("base string must not be empty")]
    EmptyBaseString,
    #[error("document {0:?} has no tokens")]
    EmptyDocument(String),
    #[error("corpus {corpus:?} has documents without tokens: {ids:?}")]
    EmptyDocuments { corpus: String, ids: Vec<String> },
    #[error("no discriminative features: every top positive term is also a top negative term")]
    NoFeatures,
    #[error("none of the {0} features is in the embedding vocabulary")]
    AllFeaturesDropped(usize),
    #[error("word {0:?} is not in the embedding vocabulary")]
    UnknownWord(String),
    #[error("cosine similarity of a zero-norm vector")]
    ZeroNorm,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("vocabulary is empty after applying min_count {0}")]
    EmptyVocabulary(usize),
    #[error("unbalanced training input: {positive} positive vs {negative} negative vectors")]
    Unbalanced { positive: usize, negative: usize },
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(usize),
    #[error("non-finite loss at epoch {0}")]
    NonFiniteLoss(usize),
    #[error("labels contain a single class; AUC is undefined")]
    SingleClass,
    #[error("non-finite score at index {0}")]
    NonFiniteScore(usize),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid synthetic corpus config: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Errors caused by numerical breakdown rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteGradient(_) | Error::NonFiniteLoss(_) | Error::NonFiniteScore(_) | Error::ZeroNorm
        )
    }
}
