use thiserror::Error;

pub type Result<T> = std::result::Result<T, ChannelError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    /// An argument fell outside the domain of a function.
    #[error("{name} = {value} is outside the valid domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("input vectors have mismatched lengths ({0})")]
    LengthMismatch(String),

    #[error("no accepted paths in any scattering order")]
    NoAcceptedPaths,

    #[error("phase function normalization is off by {deviation:e} (limit {limit:e})")]
    Normalization { deviation: f64, limit: f64 },

    #[error("fading density mass {mass:e} lies beyond eta_max = {eta_max}; widen the eta grid")]
    GridOverflow { mass: f64, eta_max: f64 },
}

pub(crate) fn check_domain(
    name: &'static str,
    value: f64,
    domain: &'static str,
    ok: bool,
) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(ChannelError::Domain {
            name,
            value,
            domain,
        })
    }
}
