use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MpError {
    #[error("value {0} is not representable as binary64")]
    NotRepresentable(String),
    #[error("cannot parse {input:?}: {reason}")]
    Parse { input: String, reason: String },
}
