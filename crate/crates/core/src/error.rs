use alloc::string::String;

/// Errors raised anywhere in the training and inference pipeline.
///
/// The variants are grouped by the operator-facing category they map to
/// (see [`Error::category`]), which the CLI turns into exit codes.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(
        "instances too many for key length: packed g/h needs {required_bits} plaintext bits, \
         key admits {available_bits}; use a key of at least {minimal_key_bits} bits"
    )]
    KeyTooShort {
        required_bits: u64,
        available_bits: u64,
        minimal_key_bits: u64,
    },

    #[error("plaintext overflow: value has {bits} bits, bound is {bound} bits")]
    PlaintextOverflow { bits: u64, bound: u64 },

    #[error("key mismatch: ciphertext fingerprint does not match the key")]
    KeyMismatch,

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("corrupted data: {0}")]
    Corruption(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("decode error: {0}")]
    Decode(String),
}

/// Coarse error classes used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Protocol,
    Crypto,
    Data,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::KeyTooShort { .. } => ErrorCategory::Config,
            Error::Protocol(_) | Error::Transport(_) | Error::Decode(_) => ErrorCategory::Protocol,
            Error::PlaintextOverflow { .. } | Error::KeyMismatch | Error::Corruption(_) => {
                ErrorCategory::Crypto
            }
            Error::Contract(_) | Error::Dataset(_) => ErrorCategory::Data,
        }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! bail {
    ($variant:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$variant(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
