//! Per-node fragment storage, optionally mirrored to a directory.
//!
//! On-disk layout:
//! ```text
//! <root>/STORE                  "LSST" | 0x01 | node_id u64 | k u16 | s_B u32
//! <root>/<height:020>/HEADER    72-byte block header record
//! <root>/<height:020>/<row:05>.lsbf
//! ```
//! A height directory is written under a temporary name and renamed into place.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::chain::BlockHeader;
use crate::codec::{CodecParams, CodedFragment};
use crate::Digest;

const STORE_MAGIC: &[u8; 4] = b"LSST";
const STORE_VERSION: u8 = 1;
const META_FILE: &str = "STORE";
const HEADER_FILE: &str = "HEADER";

/// What a node keeps for one block: its header and its own coded fragments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeightRecord {
    pub header: BlockHeader,
    pub header_hash: Digest,
    pub fragments: Vec<CodedFragment>,
}

impl HeightRecord {
    pub fn r(&self) -> usize {
        self.fragments.len()
    }
}

#[derive(Debug)]
pub struct FragmentStore {
    node_id: u64,
    params: CodecParams,
    records: BTreeMap<u64, HeightRecord>,
    root: Option<PathBuf>,
}

impl FragmentStore {
    pub fn in_memory(node_id: u64, params: CodecParams) -> Self {
        FragmentStore { node_id, params, records: BTreeMap::new(), root: None }
    }

    /// Creates an empty store rooted at `dir`, which must not already hold a store.
    pub fn create(dir: impl AsRef<Path>, node_id: u64, params: CodecParams) -> io::Result<Self> {
        let root = dir.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        let meta = root.join(META_FILE);
        if meta.exists() {
            return Err(io::Error::new(io::ErrorKind::AlreadyExists, "store already exists"));
        }
        let mut bytes = Vec::with_capacity(19);
        bytes.extend_from_slice(STORE_MAGIC);
        bytes.push(STORE_VERSION);
        bytes.extend_from_slice(&node_id.to_be_bytes());
        bytes.extend_from_slice(&(params.k() as u16).to_be_bytes());
        bytes.extend_from_slice(&(params.block_size() as u32).to_be_bytes());
        fs::write(meta, bytes)?;
        Ok(FragmentStore { node_id, params, records: BTreeMap::new(), root: Some(root) })
    }

    pub fn open(dir: impl AsRef<Path>) -> io::Result<Self> {
        let root = dir.as_ref().to_path_buf();
        let meta = fs::read(root.join(META_FILE))?;
        if meta.len() != 19 || &meta[..4] != STORE_MAGIC || meta[4] != STORE_VERSION {
            return Err(invalid("bad store metadata"));
        }
        let node_id = u64::from_be_bytes(meta[5..13].try_into().unwrap());
        let k = u16::from_be_bytes([meta[13], meta[14]]) as usize;
        let block_size = u32::from_be_bytes(meta[15..19].try_into().unwrap()) as usize;
        let params = CodecParams::new(k, block_size).map_err(|e| invalid(&e.to_string()))?;

        let mut records = BTreeMap::new();
        for entry in fs::read_dir(&root)? {
            let entry = entry?;
            let name = entry.file_name();
            let Some(height) = name.to_str().and_then(|n| n.parse::<u64>().ok()) else {
                continue;
            };
            let dir = entry.path();
            let header = BlockHeader::from_bytes(&fs::read(dir.join(HEADER_FILE))?)
                .ok_or_else(|| invalid("bad header record"))?;
            if header.height != height {
                return Err(invalid("header height does not match directory"));
            }
            let mut files: Vec<PathBuf> = fs::read_dir(&dir)?
                .map(|e| e.map(|e| e.path()))
                .collect::<io::Result<_>>()?;
            files.retain(|p| p.extension().is_some_and(|e| e == "lsbf"));
            files.sort();
            let mut fragments = Vec::with_capacity(files.len());
            for f in files {
                let bytes = fs::read(&f)?;
                let (fp, frag, used) =
                    CodedFragment::from_lsbf(&bytes).map_err(|e| invalid(&e.to_string()))?;
                if fp != params || used != bytes.len() || frag.block_height != height || frag.node_id != node_id {
                    return Err(invalid(&format!("inconsistent fragment file {}", f.display())));
                }
                fragments.push(frag);
            }
            records.insert(height, HeightRecord { header_hash: header.hash(), header, fragments });
        }
        Ok(FragmentStore { node_id, params, records, root: Some(root) })
    }

    pub fn node_id(&self) -> u64 {
        self.node_id
    }

    pub fn params(&self) -> &CodecParams {
        &self.params
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn tip(&self) -> Option<&HeightRecord> {
        self.records.values().next_back()
    }

    pub fn get(&self, height: u64) -> Option<&HeightRecord> {
        self.records.get(&height)
    }

    pub fn heights(&self) -> impl Iterator<Item = u64> + '_ {
        self.records.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn fragment_count(&self) -> usize {
        self.records.values().map(HeightRecord::r).sum()
    }

    /// Bytes of fragment data held, excluding headers and record framing.
    pub fn fragment_bytes(&self) -> usize {
        self.fragment_count() * self.params.fragment_size()
    }

    pub(crate) fn insert(&mut self, record: HeightRecord) -> io::Result<()> {
        if let Some(root) = &self.root {
            let final_dir = root.join(height_dir(record.header.height));
            let tmp = root.join(format!(".tmp-{}", height_dir(record.header.height)));
            if tmp.exists() {
                fs::remove_dir_all(&tmp)?;
            }
            fs::create_dir(&tmp)?;
            fs::write(tmp.join(HEADER_FILE), record.header.to_bytes())?;
            for f in &record.fragments {
                fs::write(tmp.join(fragment_file(f)), f.to_lsbf(&self.params))?;
            }
            if final_dir.exists() {
                fs::remove_dir_all(&final_dir)?;
            }
            fs::rename(tmp, final_dir)?;
        }
        self.records.insert(record.header.height, record);
        Ok(())
    }

    /// Keeps only the first `keep` fragments of `height`.
    pub(crate) fn truncate(&mut self, height: u64, keep: usize) -> io::Result<()> {
        let Some(record) = self.records.get_mut(&height) else {
            return Ok(());
        };
        if let Some(root) = &self.root {
            let dir = root.join(height_dir(height));
            for f in &record.fragments[keep.min(record.fragments.len())..] {
                fs::remove_file(dir.join(fragment_file(f)))?;
            }
        }
        record.fragments.truncate(keep);
        Ok(())
    }

    /// Forgets a height entirely.
    pub fn remove(&mut self, height: u64) -> io::Result<Option<HeightRecord>> {
        if let Some(root) = &self.root {
            let dir = root.join(height_dir(height));
            if dir.exists() {
                fs::remove_dir_all(dir)?;
            }
        }
        Ok(self.records.remove(&height))
    }
}

fn height_dir(height: u64) -> String {
    format!("{height:020}")
}

fn fragment_file(f: &CodedFragment) -> String {
    match f.kind {
        crate::codec::FragmentKind::Coded { row } => format!("{row:05}.lsbf"),
        crate::codec::FragmentKind::Plain { index } => format!("p{index:05}.lsbf"),
    }
}

fn invalid(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
}
