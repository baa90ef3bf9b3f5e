use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no ground state bracket for initial heights in [{lo}, {hi}]")]
    NoGroundStateBracket { lo: f64, hi: f64 },

    #[error("iteration limit reached in {0}")]
    IterationLimit(&'static str),

    #[error("normalization inconsistency: relative residual {0:.3e}")]
    NormalizationInconsistency(f64),

    #[error("corrupt profile: {0}")]
    CorruptProfile(String),

    #[error("inequality violation: {value:.3e} below noise floor {floor:.3e}")]
    InequalityViolation { value: f64, floor: f64 },

    #[error("singular operator: {0}")]
    SingularOperator(String),

    #[error("time step failed at tau = {tau}: {reason}")]
    StepFailure { tau: f64, reason: String },

    #[error("positivity lost at tau = {0}")]
    PositivityLoss(f64),

    #[error("no extinction within {0} steps")]
    StepBudget(usize),

    #[error("dictionary inconsistency: routes differ by {0:.3e} relative")]
    DictionaryInconsistency(f64),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable code, used by the command-line front end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) => "invalid_params",
            Error::Input(_) => "input",
            Error::Domain(_) => "domain",
            Error::NoGroundStateBracket { .. } => "no_ground_state_bracket",
            Error::IterationLimit(_) => "iteration_limit",
            Error::NormalizationInconsistency(_) => "normalization_inconsistency",
            Error::CorruptProfile(_) => "corrupt_profile",
            Error::InequalityViolation { .. } => "inequality_violation",
            Error::SingularOperator(_) => "singular_operator",
            Error::StepFailure { .. } => "step_failure",
            Error::PositivityLoss(_) => "positivity_loss",
            Error::StepBudget(_) => "step_budget",
            Error::DictionaryInconsistency(_) => "dictionary_inconsistency",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
