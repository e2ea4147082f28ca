use std::fmt;

use crate::params::Party;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("intensity ordering violated for {party}: {detail}")]
    IntensityOrder { party: Party, detail: String },

    #[error("degenerate intensities for {party}: {detail}")]
    DegenerateIntensities { party: Party, detail: String },

    #[error("no coincidences: all gains are zero")]
    NoCoincidences,

    #[error("single-photon yield lower bound is zero; the phase error rate is unbounded")]
    UnboundedErrorRate,

    #[error("empty feasible set: {0}")]
    EmptyFeasibleSet(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("config {location}: {message}")]
    Config { location: ConfigLocation, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub(crate) fn config(location: ConfigLocation, message: impl Into<String>) -> Self {
        Error::Config { location, message: message.into() }
    }

    /// True for errors caused by user input rather than numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::IntensityOrder { .. }
                | Error::DegenerateIntensities { .. }
                | Error::Config { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConfigLocation {
    Line(usize),
    Key(String),
}

impl fmt::Display for ConfigLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigLocation::Line(n) => write!(f, "line {n}"),
            ConfigLocation::Key(k) => write!(f, "key `{k}`"),
        }
    }
}
