use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("point ({a}, {r}) lies outside the action/decision rectangle")]
    OutsideDomain { a: f64, r: f64 },

    #[error("non-finite evaluation at x = {at}")]
    NonFinite { at: f64 },

    #[error("no sign change on [{lo}, {hi}] (g(lo) = {g_lo}, g(hi) = {g_hi})")]
    NoSignChange { lo: f64, hi: f64, g_lo: f64, g_hi: f64 },

    #[error("invalid contract: {0}")]
    InvalidContract(String),

    #[error("invalid target outcome: {0}")]
    InvalidTarget(String),

    #[error("target is not fully implementable: {0}")]
    NotImplementable(String),

    #[error("model assumptions failed: {0}")]
    AssumptionsFailed(String),

    #[error("full-access construction requires pure externalities")]
    NotPureExternalities,

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("unknown figure panel `{0}` (expected a, b or c)")]
    UnknownPanel(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    /// Process exit code: 2 validation, 3 implementability, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotImplementable(_) | Error::NotPureExternalities => 3,
            Error::NonFinite { .. } | Error::NoSignChange { .. } => 4,
            _ => 2,
        }
    }

    /// Stable machine-readable tag used in CLI error documents and FFI status mapping.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::OutsideDomain { .. } => "outside_domain",
            Error::NonFinite { .. } => "non_finite",
            Error::NoSignChange { .. } => "no_sign_change",
            Error::InvalidContract(_) => "invalid_contract",
            Error::InvalidTarget(_) => "invalid_target",
            Error::NotImplementable(_) => "not_implementable",
            Error::AssumptionsFailed(_) => "assumptions_failed",
            Error::NotPureExternalities => "not_pure_externalities",
            Error::UnknownScenario(_) => "unknown_scenario",
            Error::UnknownPanel(_) => "unknown_panel",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
