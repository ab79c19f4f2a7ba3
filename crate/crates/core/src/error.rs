use thiserror::Error;

use crate::motion::Param;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("gradient with respect to {0:?} is not defined for a square-wave trajectory")]
    UnsupportedGradient(Param),

    #[error("argument {value} outside the domain {domain}")]
    Domain { value: f64, domain: &'static str },

    #[error("carrier {axis} = {k} rad/length aliases on a grid of pitch {pitch} (|k| pitch must be < pi)")]
    CarrierAliasing { axis: &'static str, k: f64, pitch: f64 },

    #[error("diffraction spots too close: separation {separation:.2} bins < required {required:.2} bins")]
    SpotSeparation { separation: f64, required: f64 },

    #[error("rejected input: {0}")]
    RejectedInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
