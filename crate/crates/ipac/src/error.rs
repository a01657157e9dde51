//! Process-level error categories mapped to exit codes: usage errors exit 1,
//! data and validation errors exit 2, numerical failures exit 3.

use std::fmt;

use ipac_core::contrastive::ContrastiveError;
use ipac_core::data::DataError;
use ipac_core::encoder::EncoderError;
use ipac_core::eval::EvalError;
use ipac_core::lora::LoraError;
use ipac_core::numerics::NumericsError;
use ipac_core::phoneme::{G2pError, VocabError};
use ipac_core::trainer::TrainError;

#[derive(Debug)]
pub enum Error {
    Usage(String),
    Data(String),
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Data(_) => 2,
            Error::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Usage(msg) => write!(f, "usage error: {msg}"),
            Error::Data(msg) => write!(f, "{msg}"),
            Error::Numeric(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Data(format!("io error: {e}"))
    }
}

impl From<DataError> for Error {
    fn from(e: DataError) -> Self {
        Error::Data(e.to_string())
    }
}

impl From<VocabError> for Error {
    fn from(e: VocabError) -> Self {
        Error::Data(e.to_string())
    }
}

impl From<G2pError> for Error {
    fn from(e: G2pError) -> Self {
        Error::Data(e.to_string())
    }
}

impl From<EncoderError> for Error {
    fn from(e: EncoderError) -> Self {
        match e {
            EncoderError::Numerics(NumericsError::NonFinite(op)) => {
                Error::Numeric(format!("non-finite value in `{op}`"))
            }
            other => Error::Data(other.to_string()),
        }
    }
}

impl From<LoraError> for Error {
    fn from(e: LoraError) -> Self {
        Error::Data(e.to_string())
    }
}

impl From<ContrastiveError> for Error {
    fn from(e: ContrastiveError) -> Self {
        Error::Data(e.to_string())
    }
}

impl From<EvalError> for Error {
    fn from(e: EvalError) -> Self {
        Error::Data(e.to_string())
    }
}

impl From<NumericsError> for Error {
    fn from(e: NumericsError) -> Self {
        match e {
            NumericsError::NonFinite(op) => Error::Numeric(format!("non-finite value in `{op}`")),
            other => Error::Data(other.to_string()),
        }
    }
}

impl From<TrainError> for Error {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite { step } => {
                Error::Numeric(format!("training diverged at step {step}"))
            }
            other => Error::Data(other.to_string()),
        }
    }
}
