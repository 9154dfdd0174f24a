use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A control vanished on a reaction that can still fire.
    #[error("inadmissible control for reaction {reaction}: propensity {propensity} > 0 but control is {control}")]
    InadmissibleControl {
        reaction: usize,
        propensity: f64,
        control: f64,
    },

    #[error("exact simulation exceeded the cap of {cap} events before t = {time}")]
    StepCapExceeded { cap: u64, time: f64 },

    #[error("numeric integrity failure: {0}")]
    Integrity(String),

    #[error("ODE step size collapsed to {step:e} at t = {time}; try a larger u_floor or looser tolerances")]
    StepSizeCollapse { step: f64, time: f64 },

    #[error("cannot merge reports built for different configurations ({left:#x} vs {right:#x})")]
    ConfigMismatch { left: u64, right: u64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error in {what}: {msg}")]
    Parse { what: String, msg: String },

    #[error("pipeline stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(what: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Parse {
            what: what.into(),
            msg: msg.into(),
        }
    }

    /// Coarse failure class, used by the CLI to pick an exit code.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Stage { source, .. } => source.class(),
            Error::Config(_)
            | Error::Parse { .. }
            | Error::InvalidNetwork(_)
            | Error::InvalidState(_)
            | Error::InvalidGrid(_)
            | Error::InvalidArgument(_)
            | Error::Unsupported(_)
            | Error::ConfigMismatch { .. } => ErrorClass::Config,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => ErrorClass::Io,
            Error::InadmissibleControl { .. }
            | Error::StepCapExceeded { .. }
            | Error::Integrity(_)
            | Error::StepSizeCollapse { .. } => ErrorClass::Numeric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Numeric,
    Io,
}
