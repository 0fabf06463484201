//! Embedding matrices and their on-disk `.tldr` format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    b"TLDR"
//! version  u16 (= 1)
//! reserved u16 (= 0)
//! n        u32   documents
//! k        u32   embedding width
//! lang     u16 byte length + UTF-8
//! model    u16 byte length + UTF-8
//! ids      n × (u16 byte length + UTF-8)
//! values   n·k f32, row-major
//! ```

mod synthetic;

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::linalg::DenseMatrix;

pub use synthetic::{generate_synthetic_pair, Mixing, SynthError, SyntheticPair, SyntheticSpec};

pub const MAGIC: &[u8; 4] = b"TLDR";
pub const FORMAT_VERSION: u16 = 1;
pub const FILE_EXTENSION: &str = "tldr";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad magic {0:?}, expected \"TLDR\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated file while reading {section}: need {needed} bytes, {available} left")]
    Truncated {
        section: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("{field} is not valid UTF-8")]
    InvalidUtf8 { field: &'static str },
    #[error("{field} is {len} bytes, longer than the u16 length prefix allows")]
    StringTooLong { field: &'static str, len: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("embedding width must be positive")]
    ZeroDimension,
    #[error("{ids} document ids for {rows} rows")]
    IdCount { ids: usize, rows: usize },
    #[error("value buffer of {len} does not hold {rows}x{dim}")]
    ValueCount { len: usize, rows: usize, dim: usize },
    #[error("document id must be non-empty (row {0})")]
    EmptyId(usize),
}

pub type Result<T> = std::result::Result<T, StoreError>;

/// Document vectors for one language and one embedding model.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    values: Vec<f32>,
    dim: usize,
    doc_ids: Vec<String>,
    language: String,
    model_tag: String,
}

impl EmbeddingMatrix {
    pub fn new(
        values: Vec<f32>,
        dim: usize,
        doc_ids: Vec<String>,
        language: impl Into<String>,
        model_tag: impl Into<String>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(StoreError::ZeroDimension);
        }
        if !values.len().is_multiple_of(dim) {
            return Err(StoreError::ValueCount {
                len: values.len(),
                rows: values.len() / dim,
                dim,
            });
        }
        let rows = values.len() / dim;
        if doc_ids.len() != rows {
            return Err(StoreError::IdCount {
                ids: doc_ids.len(),
                rows,
            });
        }
        if let Some(pos) = values.iter().position(|x| !x.is_finite()) {
            return Err(StoreError::NonFinite {
                row: pos / dim,
                col: pos % dim,
            });
        }
        let mut seen = HashSet::with_capacity(rows);
        for (i, id) in doc_ids.iter().enumerate() {
            if id.is_empty() {
                return Err(StoreError::EmptyId(i));
            }
            if !seen.insert(id.as_str()) {
                return Err(StoreError::DuplicateId(id.clone()));
            }
        }
        Ok(Self {
            values,
            dim,
            doc_ids,
            language: language.into(),
            model_tag: model_tag.into(),
        })
    }

    /// Rounds a dense `f64` matrix to the 32-bit storage precision.
    pub fn from_dense(
        m: &DenseMatrix,
        doc_ids: Vec<String>,
        language: impl Into<String>,
        model_tag: impl Into<String>,
    ) -> Result<Self> {
        let values = m.as_slice().iter().map(|&x| x as f32).collect();
        Self::new(values, m.cols(), doc_ids, language, model_tag)
    }

    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn model_tag(&self) -> &str {
        &self.model_tag
    }

    pub fn id_index(&self) -> HashMap<&str, usize> {
        self.doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }

    /// All rows widened to `f64`.
    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n_docs(), self.dim, |i, j| {
            f64::from(self.values[i * self.dim + j])
        })
    }

    /// Rows for the given ids, in that order. Returns the first missing id
    /// on failure.
    pub fn rows_for_ids<S: AsRef<str>>(&self, ids: &[S]) -> std::result::Result<DenseMatrix, String> {
        let index = self.id_index();
        let mut rows = Vec::with_capacity(ids.len());
        for id in ids {
            let id = id.as_ref();
            rows.push(*index.get(id).ok_or_else(|| id.to_string())?);
        }
        Ok(DenseMatrix::from_fn(ids.len(), self.dim, |i, j| {
            f64::from(self.values[rows[i] * self.dim + j])
        }))
    }
}

fn push_str(buf: &mut Vec<u8>, s: &str, field: &'static str) -> Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| StoreError::StringTooLong {
        field,
        len: s.len(),
    })?;
    buf.extend_from_slice(&len.to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
    Ok(())
}

/// Serializes to the `.tldr` byte layout.
pub fn encode_embeddings(m: &EmbeddingMatrix) -> Result<Vec<u8>> {
    let n = u32::try_from(m.n_docs()).expect("document count fits in u32");
    let k = u32::try_from(m.dim).expect("dimension fits in u32");
    let mut buf = Vec::with_capacity(32 + m.values.len() * 4 + m.doc_ids.len() * 16);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&0u16.to_le_bytes());
    buf.extend_from_slice(&n.to_le_bytes());
    buf.extend_from_slice(&k.to_le_bytes());
    push_str(&mut buf, &m.language, "language")?;
    push_str(&mut buf, &m.model_tag, "model_tag")?;
    for id in &m.doc_ids {
        push_str(&mut buf, id, "doc_id")?;
    }
    for v in &m.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, needed: usize, section: &'static str) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if needed > available {
            return Err(StoreError::Truncated {
                section,
                needed,
                available,
            });
        }
        let out = &self.bytes[self.pos..self.pos + needed];
        self.pos += needed;
        Ok(out)
    }

    fn u16(&mut self, section: &'static str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, section)?.try_into().unwrap()))
    }

    fn u32(&mut self, section: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, section)?.try_into().unwrap()))
    }

    fn string(&mut self, field: &'static str) -> Result<String> {
        let len = self.u16(field)? as usize;
        let raw = self.take(len, field)?;
        String::from_utf8(raw.to_vec()).map_err(|_| StoreError::InvalidUtf8 { field })
    }
}

/// Parses the `.tldr` byte layout.
pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic: [u8; 4] = cur.take(4, "magic")?.try_into().unwrap();
    if &magic != MAGIC {
        return Err(StoreError::BadMagic(magic));
    }
    let version = cur.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(StoreError::UnsupportedVersion(version));
    }
    let _reserved = cur.u16("reserved")?;
    let n = cur.u32("n")? as usize;
    let k = cur.u32("k")? as usize;
    if k == 0 {
        return Err(StoreError::ZeroDimension);
    }
    let language = cur.string("language")?;
    let model_tag = cur.string("model_tag")?;
    let mut doc_ids = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        doc_ids.push(cur.string("doc_id")?);
    }
    let payload_len = n
        .checked_mul(k)
        .and_then(|c| c.checked_mul(4))
        .ok_or(StoreError::Truncated {
            section: "values",
            needed: usize::MAX,
            available: bytes.len() - cur.pos,
        })?;
    let payload = cur.take(payload_len, "values")?;
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let trailing = bytes.len() - cur.pos;
    if trailing != 0 {
        return Err(StoreError::TrailingBytes(trailing));
    }
    EmbeddingMatrix::new(values, k, doc_ids, language, model_tag)
}

pub fn write_embeddings(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_embeddings(m)?;
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    file.sync_all()?;
    Ok(())
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    decode_embeddings(&fs::read(path)?)
}
