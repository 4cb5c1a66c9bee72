use thiserror::Error;

/// Every failure an analysis can report.
///
/// [`CapeError::class`] gives a stable machine-readable name used by the CLI
/// exit codes and the HTTP API error bodies.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CapeError {
    #[error("duplicate model {family}/{name}")]
    DuplicateModel { family: String, name: String },
    #[error("score out of range at row {row}, column {column}: {value}")]
    ScoreOutOfRange { row: usize, column: String, value: f64 },
    #[error("TruthfulQA variants are mixed; only MC1 is supported ({detail})")]
    MixedTqaVariant { detail: String },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("unknown family {0:?}")]
    UnknownFamily(String),
    #[error("family {0:?} has a single model; coupling needs at least two")]
    SingletonFamily(String),
    #[error("family {family:?} has two models at {params_b}B; zero-width intervals are rejected")]
    ZeroWidthInterval { family: String, params_b: f64 },
    #[error("benchmark {benchmark:?} missing for model {model:?}")]
    MissingBenchmark { model: String, benchmark: String },
    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),
    #[error("too few points: need {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("no forward zero crossing (slope {slope}, N_c {n_c}B)")]
    NoZeroCrossing { slope: f64, n_c: f64 },
    #[error("only {fitted} of {required} required bootstrap resamples produced a fit")]
    InsufficientResamples { fitted: usize, required: usize },
    #[error("insufficient population for phase {phase}: {detail}")]
    InsufficientPhasePopulation { phase: String, detail: String },
    #[error("all eigenvalues are zero")]
    AllZeroSpectrum,
    #[error("non-positive value {value} where a logarithm is required")]
    NonPositiveValue { value: f64 },
    #[error("inconsistent benchmark order between bases")]
    InconsistentBasisOrder,
    #[error("fixed-point quadratic has no real root (real part {real_part})")]
    NoRealRoot { real_part: f64 },
    #[error("determinant does not decrease with scale (slope {slope})")]
    NonDecreasingDeterminant { slope: f64 },
    #[error("search did not converge: {0}")]
    NonConvergence(String),
    #[error("degenerate spacing: {0}")]
    DegenerateSpacing(String),
    #[error("model {model:?} has no d_model")]
    MissingWidth { model: String },
    #[error("degenerate regressor: {0}")]
    DegenerateRegressor(String),
    #[error("rank-deficient least squares: {0}")]
    RankDeficient(String),
    #[error("integration produced a non-finite state at log10 N = {at}")]
    NonFiniteState { at: f64 },
    #[error("zero score on {benchmark:?} for boundary model {model:?}")]
    ZeroScore { model: String, benchmark: String },
    #[error("no lab has at least {min_models} models")]
    NoQualifyingLab { min_models: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CapeError {
    pub fn class(&self) -> &'static str {
        match self {
            Self::DuplicateModel { .. } => "DuplicateModel",
            Self::ScoreOutOfRange { .. } => "ScoreOutOfRange",
            Self::MixedTqaVariant { .. } => "MixedTqaVariant",
            Self::MalformedRow { .. } => "MalformedRow",
            Self::UnknownFamily(_) => "UnknownFamily",
            Self::SingletonFamily(_) => "SingletonFamily",
            Self::ZeroWidthInterval { .. } => "ZeroWidthInterval",
            Self::MissingBenchmark { .. } => "MissingBenchmark",
            Self::DegenerateVariance(_) => "DegenerateVariance",
            Self::TooFewPoints { .. } => "TooFewPoints",
            Self::NoZeroCrossing { .. } => "NoZeroCrossing",
            Self::InsufficientResamples { .. } => "InsufficientResamples",
            Self::InsufficientPhasePopulation { .. } => "InsufficientPhasePopulation",
            Self::AllZeroSpectrum => "AllZeroSpectrum",
            Self::NonPositiveValue { .. } => "NonPositiveValue",
            Self::InconsistentBasisOrder => "InconsistentBasisOrder",
            Self::NoRealRoot { .. } => "NoRealRoot",
            Self::NonDecreasingDeterminant { .. } => "NonDecreasingDeterminant",
            Self::NonConvergence(_) => "NonConvergence",
            Self::DegenerateSpacing(_) => "DegenerateSpacing",
            Self::MissingWidth { .. } => "MissingWidth",
            Self::DegenerateRegressor(_) => "DegenerateRegressor",
            Self::RankDeficient(_) => "RankDeficient",
            Self::NonFiniteState { .. } => "NonFiniteState",
            Self::ZeroScore { .. } => "ZeroScore",
            Self::NoQualifyingLab { .. } => "NoQualifyingLab",
            Self::InvalidArgument(_) => "InvalidArgument",
            Self::Io(_) => "Io",
        }
    }

    /// True for errors caused by the input table itself rather than by an
    /// analysis that could not run on valid data.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Self::DuplicateModel { .. }
                | Self::ScoreOutOfRange { .. }
                | Self::MixedTqaVariant { .. }
                | Self::MalformedRow { .. }
                | Self::Io(_)
        )
    }
}

pub type Result<T, E = CapeError> = std::result::Result<T, E>;
