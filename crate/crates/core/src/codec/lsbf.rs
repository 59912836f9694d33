//! LSBF: the binary record for one fragment, used on disk and on the wire.
//!
//! ```text
//! "LSBF" | 0x01 | node_id u64 | block_height u64 | row_index u16 | flags u8
//!        | plain_index u16 | k u16 | s_B u32 | data (s_B / k bytes)
//! ```
//! All integers are big-endian. Flag bit 0 marks a plain fragment; coded fragments
//! carry `plain_index = 0xFFFF` and plain ones `row_index = 0`.

use std::io::{Read, Write};

use super::{CodecError, CodecParams, CodedFragment, FragmentKind};

pub const LSBF_MAGIC: &[u8; 4] = b"LSBF";
pub const LSBF_VERSION: u8 = 0x01;
pub const LSBF_HEADER_LEN: usize = 32;

const FLAG_PLAIN: u8 = 0x01;
const NO_PLAIN_INDEX: u16 = 0xFFFF;

impl CodedFragment {
    pub fn write_lsbf<W: Write>(&self, params: &CodecParams, out: &mut W) -> std::io::Result<()> {
        assert_eq!(self.data.len(), params.fragment_size(), "fragment does not match parameters");
        let (row, flags, plain) = match self.kind {
            FragmentKind::Coded { row } => (row, 0, NO_PLAIN_INDEX),
            FragmentKind::Plain { index } => (0, FLAG_PLAIN, index),
        };
        let mut header = [0u8; LSBF_HEADER_LEN];
        header[0..4].copy_from_slice(LSBF_MAGIC);
        header[4] = LSBF_VERSION;
        header[5..13].copy_from_slice(&self.node_id.to_be_bytes());
        header[13..21].copy_from_slice(&self.block_height.to_be_bytes());
        header[21..23].copy_from_slice(&row.to_be_bytes());
        header[23] = flags;
        header[24..26].copy_from_slice(&plain.to_be_bytes());
        header[26..28].copy_from_slice(&(params.k() as u16).to_be_bytes());
        header[28..32].copy_from_slice(&(params.block_size() as u32).to_be_bytes());
        out.write_all(&header)?;
        out.write_all(&self.data)
    }

    pub fn to_lsbf(&self, params: &CodecParams) -> Vec<u8> {
        let mut out = Vec::with_capacity(params.record_len());
        self.write_lsbf(params, &mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Reads one record. `Ok(None)` on a clean end of stream.
    pub fn read_lsbf<R: Read>(input: &mut R) -> Result<Option<(CodecParams, CodedFragment)>, CodecError> {
        let mut header = [0u8; LSBF_HEADER_LEN];
        let mut filled = 0;
        while filled < LSBF_HEADER_LEN {
            match input.read(&mut header[filled..]) {
                Ok(0) if filled == 0 => return Ok(None),
                Ok(0) => return Err(CodecError::Format("truncated header".into())),
                Ok(n) => filled += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(CodecError::Format(e.to_string())),
            }
        }
        let (params, mut fragment) = parse_header(&header)?;
        fragment.data = vec![0; params.fragment_size()];
        input
            .read_exact(&mut fragment.data)
            .map_err(|_| CodecError::Format("truncated fragment data".into()))?;
        Ok(Some((params, fragment)))
    }

    /// Parses one record from the front of `bytes`, returning it with the bytes consumed.
    pub fn from_lsbf(bytes: &[u8]) -> Result<(CodecParams, CodedFragment, usize), CodecError> {
        let header: &[u8; LSBF_HEADER_LEN] = bytes
            .get(..LSBF_HEADER_LEN)
            .and_then(|h| h.try_into().ok())
            .ok_or_else(|| CodecError::Format("truncated header".into()))?;
        let (params, mut fragment) = parse_header(header)?;
        let end = LSBF_HEADER_LEN + params.fragment_size();
        let data = bytes
            .get(LSBF_HEADER_LEN..end)
            .ok_or_else(|| CodecError::Format("truncated fragment data".into()))?;
        fragment.data = data.to_vec();
        Ok((params, fragment, end))
    }
}

fn be_u16(b: &[u8]) -> u16 {
    u16::from_be_bytes([b[0], b[1]])
}

fn parse_header(h: &[u8; LSBF_HEADER_LEN]) -> Result<(CodecParams, CodedFragment), CodecError> {
    if &h[0..4] != LSBF_MAGIC {
        return Err(CodecError::Format("bad magic".into()));
    }
    if h[4] != LSBF_VERSION {
        return Err(CodecError::Format(format!("unsupported version {}", h[4])));
    }
    let node_id = u64::from_be_bytes(h[5..13].try_into().unwrap());
    let block_height = u64::from_be_bytes(h[13..21].try_into().unwrap());
    let row = be_u16(&h[21..23]);
    let flags = h[23];
    let plain = be_u16(&h[24..26]);
    let k = be_u16(&h[26..28]) as usize;
    let block_size = u32::from_be_bytes(h[28..32].try_into().unwrap()) as usize;
    let params = CodecParams::new(k, block_size).map_err(|e| CodecError::Format(e.to_string()))?;
    if flags & !FLAG_PLAIN != 0 {
        return Err(CodecError::Format(format!("unknown flag bits {flags:#04x}")));
    }
    let kind = if flags & FLAG_PLAIN != 0 {
        if row != 0 || plain as usize >= k {
            return Err(CodecError::Format(format!("bad plain fragment index {plain}")));
        }
        FragmentKind::Plain { index: plain }
    } else {
        if plain != NO_PLAIN_INDEX {
            return Err(CodecError::Format("coded fragment with a plain index".into()));
        }
        FragmentKind::Coded { row }
    };
    Ok((params, CodedFragment { node_id, block_height, kind, data: Vec::new() }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode_fragments, plain_fragments};
    use crate::coeffgen::CoefficientSeed;

    #[test]
    fn header_layout_is_exact() {
        let p = CodecParams::new(2, 20).unwrap();
        let f = CodedFragment {
            node_id: 0x0102030405060708,
            block_height: 9,
            kind: FragmentKind::Coded { row: 0x0A0B },
            data: vec![0xEE; 10],
        };
        let bytes = f.to_lsbf(&p);
        assert_eq!(bytes.len(), 42);
        assert_eq!(
            &bytes[..32],
            &[
                b'L', b'S', b'B', b'F', 1, 1, 2, 3, 4, 5, 6, 7, 8, 0, 0, 0, 0, 0, 0, 0, 9, 0x0A,
                0x0B, 0, 0xFF, 0xFF, 0, 2, 0, 0, 0, 20
            ]
        );
        let plain = plain_fragments(&p, 4, 9, b"x").unwrap().remove(1).to_lsbf(&p);
        assert_eq!(&plain[21..26], &[0, 0, 1, 0, 1]);
    }

    #[test]
    fn stream_of_records_round_trips() {
        let p = CodecParams::new(4, 40).unwrap();
        let mut frags = encode_fragments(&p, CoefficientSeed::new(3, 1), b"payload", 3).unwrap();
        frags.extend(plain_fragments(&p, 3, 1, b"payload").unwrap());
        let mut buf = Vec::new();
        for f in &frags {
            f.write_lsbf(&p, &mut buf).unwrap();
        }
        let mut cursor = std::io::Cursor::new(&buf);
        let mut back = Vec::new();
        while let Some((params, f)) = CodedFragment::read_lsbf(&mut cursor).unwrap() {
            assert_eq!(params, p);
            back.push(f);
        }
        assert_eq!(back, frags);
        let (_, first, used) = CodedFragment::from_lsbf(&buf).unwrap();
        assert_eq!(first, frags[0]);
        assert_eq!(used, p.record_len());
    }

    #[test]
    fn malformed_records_rejected() {
        let p = CodecParams::new(2, 20).unwrap();
        let good = encode_fragments(&p, CoefficientSeed::new(1, 1), b"a", 1).unwrap()[0].to_lsbf(&p);
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(CodedFragment::from_lsbf(&bad_magic).is_err());
        let mut bad_version = good.clone();
        bad_version[4] = 2;
        assert!(CodedFragment::from_lsbf(&bad_version).is_err());
        assert!(CodedFragment::from_lsbf(&good[..good.len() - 1]).is_err());
        let mut bad_k = good.clone();
        bad_k[27] = 3; // 20 is not a multiple of 3
        assert!(CodedFragment::from_lsbf(&bad_k).is_err());
        let mut bad_flags = good.clone();
        bad_flags[23] = 0x80;
        assert!(CodedFragment::from_lsbf(&bad_flags).is_err());
        let mut coded_with_index = good;
        coded_with_index[25] = 0;
        assert!(CodedFragment::from_lsbf(&coded_with_index).is_err());
        let mut cursor = std::io::Cursor::new(&bad_magic[..10]);
        assert!(CodedFragment::read_lsbf(&mut cursor).is_err());
    }
}
