use alloc::string::String;

/// Errors raised by the surrogate toolkit.
///
/// The variants mirror the failure classes the command line maps to exit
/// codes: configuration, data, numerical and shape problems.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: usize,
        actual: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    Data(String),
    /// The variant needs a data block (low-fidelity samples or gradients) that is absent,
    /// or an operation was called on a variant that does not support it.
    #[error("variant {variant}: {reason}")]
    Variant {
        variant: &'static str,
        reason: String,
    },
    #[error("non-finite value in {term}")]
    Numerical { term: String },
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::Shape {
            context: context.into(),
            expected,
            actual,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn numerical(term: impl Into<String>) -> Self {
        Error::Numerical { term: term.into() }
    }
}
