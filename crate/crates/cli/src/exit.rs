//! Error families and their process exit codes.

use std::io;

use thiserror::Error;

use lsnode::chain::ChainFault;
use lsnode::codec::CodecError;
use lsnode::node::NodeError;
use lsnode::simnet::SimError;
use lsnode::Digest;

pub const OTHER: u8 = 1;
pub const USAGE: u8 = 2;
pub const RANK: u8 = 3;
pub const CORRUPT: u8 = 4;
pub const INTEGRITY: u8 = 5;
pub const FORMAT: u8 = 6;
pub const TOO_LARGE: u8 = 7;
pub const IO: u8 = 8;

#[derive(Debug, Error)]
#[error("{0}")]
pub struct Usage(pub String);

#[derive(Debug, Error)]
#[error("payload hash {} does not match expected {}", hex::encode(.got), hex::encode(.expected))]
pub struct HashMismatch {
    pub expected: Digest,
    pub got: Digest,
}

fn codec(e: &CodecError) -> u8 {
    match e {
        CodecError::InvalidParams(_) => USAGE,
        CodecError::BlockTooLarge { .. } => TOO_LARGE,
        CodecError::InsufficientRank { .. } => RANK,
        CodecError::CorruptDecode(_) => CORRUPT,
        CodecError::DuplicateFragment { .. } | CodecError::Inconsistent(_) | CodecError::Format(_) => FORMAT,
        CodecError::Field(_) => OTHER,
    }
}

fn node(e: &NodeError) -> u8 {
    match e {
        NodeError::BootstrapRejected { .. } | NodeError::TamperDetected(_) => INTEGRITY,
        NodeError::Unrecoverable { .. } | NodeError::UnknownBlock(_) => RANK,
        NodeError::MinimumOneFragment | NodeError::CannotGrow { .. } | NodeError::InvalidConfig(_) => USAGE,
        NodeError::Codec(c) => codec(c),
        NodeError::Io(e) => io_code(e),
        NodeError::Source(_) => IO,
    }
}

fn io_code(e: &io::Error) -> u8 {
    match e.kind() {
        io::ErrorKind::InvalidData | io::ErrorKind::UnexpectedEof => FORMAT,
        _ => IO,
    }
}

pub fn code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CodecError>() {
            return codec(e);
        }
        if let Some(e) = cause.downcast_ref::<NodeError>() {
            return node(e);
        }
        if let Some(e) = cause.downcast_ref::<SimError>() {
            return match e {
                SimError::Config(_) | SimError::Toml(_) => USAGE,
                SimError::Codec(c) => codec(c),
                SimError::Node(n) => node(n),
            };
        }
        if cause.is::<Usage>() {
            return USAGE;
        }
        if cause.is::<HashMismatch>() || cause.is::<ChainFault>() {
            return INTEGRITY;
        }
        if let Some(e) = cause.downcast_ref::<io::Error>() {
            return io_code(e);
        }
    }
    OTHER
}
