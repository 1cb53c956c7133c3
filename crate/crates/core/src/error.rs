use alloc::string::String;

use crate::anfis::EmotionQuadrant;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("no trained model or dictionary for quadrant {0}")]
    MissingModel(EmotionQuadrant),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::Error::InvalidInput(alloc::format!($($arg)*))
    };
}
pub(crate) use invalid;
