//! Error types shared across the crate.

use crate::agent::AgentId;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MathError {
    #[error("modulus must be at least 2")]
    InvalidModulus,
    #[error("element has no multiplicative inverse")]
    NotInvertible,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("message does not fit the plaintext space")]
    MessageTooLarge,
    #[error("ciphertext was formed under a different key")]
    WrongKey,
    #[error(transparent)]
    Math(#[from] MathError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("value exceeds the symmetric range of the field")]
    EncodingOverflow,
    #[error("operands carry different scale exponents ({0} vs {1})")]
    ScaleMismatch(u32, u32),
    #[error("target scale exponent {target} below current {current}")]
    ScaleBelowCurrent { current: u32, target: u32 },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolyError {
    #[error("monomial touches agent {0} outside the owner's closed neighborhood")]
    InvalidSupport(AgentId),
    #[error("no value supplied for agent {0}")]
    MissingAgent(AgentId),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShareError {
    #[error("share group must have at least two members")]
    GroupTooSmall,
    #[error("missing contribution from agent {0}")]
    MissingContribution(AgentId),
    #[error("the query owner cannot drop out")]
    ProtocolAbort,
    #[error(transparent)]
    Math(#[from] MathError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetError {
    #[error("no edge between {0} and {1} and no relay path")]
    TopologyViolation(AgentId, AgentId),
    #[error("delivery to dropped agent {0}")]
    DeliveryToDropped(AgentId),
    #[error("invalid configuration: {0}")]
    ConfigError(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("the owner needs at least two neighbors")]
    InsufficientNeighbors,
    #[error("agent {0} cannot act as distinguished neighbor and ordinary neighbor at once")]
    RoleConflict(AgentId),
    #[error("the distinguished neighbor dropped; re-selection required")]
    NewDistinguishedRequired,
    #[error(transparent)]
    Shares(#[from] ShareError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("query violates the one-noncorrupt-variable-per-product rule: {0}")]
    StructureViolation(String),
    #[error("grid too coarse: no solution found near the observed outputs")]
    OracleInconclusive,
}
