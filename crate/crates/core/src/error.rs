use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QsbError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{what} = {got} exceeds the cap {cap}")]
    CapExceeded { what: &'static str, cap: usize, got: usize },
    #[error("point {point} lies outside the admissible domain: {detail}")]
    OutOfDomain { point: String, detail: String },
    #[error("cannot parse {input:?} as {expected}")]
    Parse { input: String, expected: String },
}

impl QsbError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        QsbError::InvalidParameter(msg.into())
    }

    pub fn parse(input: &str, expected: &str) -> Self {
        QsbError::Parse { input: input.to_string(), expected: expected.to_string() }
    }

    pub fn cap(what: &'static str, cap: usize, got: usize) -> Self {
        QsbError::CapExceeded { what, cap, got }
    }
}

pub type Result<T> = std::result::Result<T, QsbError>;

pub(crate) fn ensure_cap(what: &'static str, cap: usize, got: usize) -> Result<()> {
    if got > cap {
        Err(QsbError::cap(what, cap, got))
    } else {
        Ok(())
    }
}
