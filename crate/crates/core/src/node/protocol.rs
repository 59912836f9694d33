//! Peer request/response framing.
//!
//! ```text
//! GET_FRAGMENTS  0x01 | height u64 | max u16
//! GET_HEADER     0x02 | height u64
//! FRAGMENTS      0x81 | count u16 | count x LSBF record
//! HEADER         0x82 | 72-byte header record
//! ERROR          0xFF | code u8
//! ```

use super::store::FragmentStore;
use super::{serve_fragments, NodeError};
use crate::chain::BlockHeader;
use crate::codec::{CodecParams, CodedFragment};

const GET_FRAGMENTS: u8 = 0x01;
const GET_HEADER: u8 = 0x02;
const FRAGMENTS: u8 = 0x81;
const HEADER: u8 = 0x82;
const ERROR: u8 = 0xFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Request {
    GetFragments { height: u64, max: u16 },
    GetHeader { height: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ErrorCode {
    UnknownBlock = 1,
    BadRequest = 2,
    Unavailable = 3,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Response {
    Fragments { params: CodecParams, fragments: Vec<CodedFragment> },
    Header(BlockHeader),
    Error(ErrorCode),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed message: {0}")]
pub struct FrameError(pub String);

fn err<T>(msg: &str) -> Result<T, FrameError> {
    Err(FrameError(msg.to_string()))
}

impl Request {
    pub fn encode(&self) -> Vec<u8> {
        match *self {
            Request::GetFragments { height, max } => {
                let mut out = vec![GET_FRAGMENTS];
                out.extend_from_slice(&height.to_be_bytes());
                out.extend_from_slice(&max.to_be_bytes());
                out
            }
            Request::GetHeader { height } => {
                let mut out = vec![GET_HEADER];
                out.extend_from_slice(&height.to_be_bytes());
                out
            }
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FrameError> {
        match bytes.first() {
            Some(&GET_FRAGMENTS) if bytes.len() == 11 => Ok(Request::GetFragments {
                height: u64::from_be_bytes(bytes[1..9].try_into().unwrap()),
                max: u16::from_be_bytes([bytes[9], bytes[10]]),
            }),
            Some(&GET_HEADER) if bytes.len() == 9 => Ok(Request::GetHeader {
                height: u64::from_be_bytes(bytes[1..9].try_into().unwrap()),
            }),
            _ => err("unknown or truncated request"),
        }
    }
}

impl Response {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            Response::Fragments { params, fragments } => {
                let mut out = Vec::with_capacity(3 + fragments.len() * params.record_len());
                out.push(FRAGMENTS);
                out.extend_from_slice(&(fragments.len() as u16).to_be_bytes());
                for f in fragments {
                    f.write_lsbf(params, &mut out).expect("writing to a Vec cannot fail");
                }
                out
            }
            Response::Header(h) => {
                let mut out = vec![HEADER];
                out.extend_from_slice(&h.to_bytes());
                out
            }
            Response::Error(code) => vec![ERROR, *code as u8],
        }
    }

    /// Decodes a response. A FRAGMENTS message with zero records carries no parameters,
    /// so `params` supplies them.
    pub fn decode(bytes: &[u8], params: &CodecParams) -> Result<Self, FrameError> {
        match bytes.first() {
            Some(&FRAGMENTS) => {
                if bytes.len() < 3 {
                    return err("truncated FRAGMENTS");
                }
                let count = u16::from_be_bytes([bytes[1], bytes[2]]) as usize;
                let mut pos = 3;
                let mut fragments = Vec::with_capacity(count);
                for _ in 0..count {
                    let (p, f, used) = CodedFragment::from_lsbf(&bytes[pos..])
                        .map_err(|e| FrameError(e.to_string()))?;
                    if p != *params {
                        return err("fragment parameters differ from the network's");
                    }
                    fragments.push(f);
                    pos += used;
                }
                if pos != bytes.len() {
                    return err("trailing bytes after FRAGMENTS");
                }
                Ok(Response::Fragments { params: *params, fragments })
            }
            Some(&HEADER) => BlockHeader::from_bytes(&bytes[1..])
                .map(Response::Header)
                .ok_or_else(|| FrameError("bad HEADER".into())),
            Some(&ERROR) if bytes.len() == 2 => match bytes[1] {
                1 => Ok(Response::Error(ErrorCode::UnknownBlock)),
                2 => Ok(Response::Error(ErrorCode::BadRequest)),
                3 => Ok(Response::Error(ErrorCode::Unavailable)),
                c => err(&format!("unknown error code {c}")),
            },
            _ => err("unknown or truncated response"),
        }
    }
}

/// Answers one request from a node's store.
pub fn handle_request(store: &FragmentStore, request: &Request) -> Response {
    match *request {
        Request::GetFragments { height, max } => match serve_fragments(store, height, max as usize) {
            Ok(fragments) => Response::Fragments { params: *store.params(), fragments },
            Err(NodeError::UnknownBlock(_)) => Response::Error(ErrorCode::UnknownBlock),
            Err(_) => Response::Error(ErrorCode::Unavailable),
        },
        Request::GetHeader { height } => match store.get(height) {
            Some(rec) => Response::Header(rec.header),
            None => Response::Error(ErrorCode::UnknownBlock),
        },
    }
}

/// Decodes a raw request, answers it, and encodes the reply.
pub fn handle_frame(store: &FragmentStore, frame: &[u8]) -> Vec<u8> {
    match Request::decode(frame) {
        Ok(req) => handle_request(store, &req).encode(),
        Err(_) => Response::Error(ErrorCode::BadRequest).encode(),
    }
}
