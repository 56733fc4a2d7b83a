//! Little-endian binary index file.
//!
//! ```text
//! header   magic "DRAG" | version u32 | kind u8 (0 dense, 1 multi) | width u32 | count u64
//! vectors  dense: count × width × f32
//!          multi: per entry, rows u32 then rows × width × f32
//! metadata per entry: id (u32 length + UTF-8) then payload (u32 length + UTF-8)
//! ```
//! Nothing may follow the metadata block.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use super::{DenseIndex, IndexError, MultiVectorIndex};
use crate::encode::{Embedding, MultiVector};

pub const MAGIC: [u8; 4] = *b"DRAG";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 1 + 4 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexKind {
    Dense = 0,
    Multi = 1,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StoredIndex {
    Dense(DenseIndex<f32>),
    Multi(MultiVectorIndex<f32>),
}

impl StoredIndex {
    pub fn kind(&self) -> IndexKind {
        match self {
            StoredIndex::Dense(_) => IndexKind::Dense,
            StoredIndex::Multi(_) => IndexKind::Multi,
        }
    }
}

/// Borrowed view of an index for writing without a copy.
#[derive(Debug, Clone, Copy)]
pub enum IndexRef<'a> {
    Dense(&'a DenseIndex<f32>),
    Multi(&'a MultiVectorIndex<f32>),
}

impl<'a> From<&'a StoredIndex> for IndexRef<'a> {
    fn from(s: &'a StoredIndex) -> Self {
        match s {
            StoredIndex::Dense(d) => IndexRef::Dense(d),
            StoredIndex::Multi(m) => IndexRef::Multi(m),
        }
    }
}

impl<'a> From<&'a DenseIndex<f32>> for IndexRef<'a> {
    fn from(d: &'a DenseIndex<f32>) -> Self {
        IndexRef::Dense(d)
    }
}

impl<'a> From<&'a MultiVectorIndex<f32>> for IndexRef<'a> {
    fn from(m: &'a MultiVectorIndex<f32>) -> Self {
        IndexRef::Multi(m)
    }
}

fn put_str(w: &mut impl Write, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn put_f32s(w: &mut impl Write, values: &[f32]) -> io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Streams the encoded index into `w`.
pub fn write_index<'a>(index: impl Into<IndexRef<'a>>, mut w: impl Write) -> io::Result<()> {
    let index = index.into();
    let (kind, width, count) = match index {
        IndexRef::Dense(d) => (IndexKind::Dense, d.dim(), d.len()),
        IndexRef::Multi(m) => (IndexKind::Multi, m.cols(), m.len()),
    };
    w.write_all(&MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&[kind as u8])?;
    w.write_all(&(width as u32).to_le_bytes())?;
    w.write_all(&(count as u64).to_le_bytes())?;
    match index {
        IndexRef::Dense(d) => {
            for i in 0..d.len() {
                put_f32s(&mut w, d.vector(i))?;
            }
            for i in 0..d.len() {
                put_str(&mut w, d.id(i))?;
                put_str(&mut w, d.payload(i))?;
            }
        }
        IndexRef::Multi(m) => {
            for i in 0..m.len() {
                let e = m.entry(i);
                w.write_all(&(e.rows() as u32).to_le_bytes())?;
                put_f32s(&mut w, e.as_slice())?;
            }
            for i in 0..m.len() {
                put_str(&mut w, m.id(i))?;
                put_str(&mut w, m.payload(i))?;
            }
        }
    }
    w.flush()
}

pub fn encode_index<'a>(index: impl Into<IndexRef<'a>>) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN);
    write_index(index, &mut buf).expect("writing to memory");
    buf
}

/// Writes via a sibling temporary file and a rename.
pub fn save_index<'a>(index: impl Into<IndexRef<'a>>, path: &Path) -> Result<(), IndexError> {
    let io = |source| IndexError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let file = fs::File::create(&tmp).map_err(io)?;
    write_index(index, BufWriter::new(file)).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], IndexError> {
        if self.bytes.len() - self.pos < n {
            return Err(IndexError::Corrupt {
                offset: self.pos as u64,
                what: format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>, IndexError> {
        let bytes_needed = n.checked_mul(4).ok_or_else(|| IndexError::Corrupt {
            offset: self.pos as u64,
            what: format!("{what}: size overflow"),
        })?;
        let raw = self.take(bytes_needed, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    fn string(&mut self, what: &str) -> Result<String, IndexError> {
        let len = self.u32(what)? as usize;
        let at = self.pos as u64;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| IndexError::Corrupt {
            offset: at,
            what: format!("{what} is not UTF-8"),
        })
    }
}

fn corrupt(offset: usize, what: impl Into<String>) -> IndexError {
    IndexError::Corrupt {
        offset: offset as u64,
        what: what.into(),
    }
}

pub fn decode_index(bytes: &[u8]) -> Result<StoredIndex, IndexError> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(IndexError::Format("bad magic bytes".into()));
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32("header")?;
    if version != FORMAT_VERSION {
        return Err(IndexError::Format(format!("unsupported version {version}")));
    }
    let kind = r.take(1, "header")?[0];
    let width = r.u32("header")? as usize;
    let count = r.u64("header")?;
    if width == 0 {
        return Err(IndexError::Format("zero vector width".into()));
    }
    let count = usize::try_from(count).map_err(|_| corrupt(HEADER_LEN - 8, "entry count too large"))?;
    // Cap pre-allocation by what the file could possibly hold.
    let cap = count.min(bytes.len() / 4);

    let index = match kind {
        0 => {
            let mut vectors = Vec::with_capacity(cap);
            for i in 0..count {
                vectors.push(r.f32s(width, &format!("vector {i}"))?);
            }
            let mut idx = DenseIndex::new(width);
            for (i, v) in vectors.into_iter().enumerate() {
                let at = r.pos;
                let id = r.string(&format!("id {i}"))?;
                let payload = r.string(&format!("payload {i}"))?;
                let e = Embedding::new(v).map_err(|e| corrupt(at, format!("vector {i}: {e}")))?;
                idx.add(&id, &e, payload)
                    .map_err(|e| corrupt(at, format!("entry {i}: {e}")))?;
            }
            StoredIndex::Dense(idx)
        }
        1 => {
            let mut mats = Vec::with_capacity(cap);
            for i in 0..count {
                let at = r.pos;
                let rows = r.u32(&format!("row count {i}"))? as usize;
                let data = r.f32s(rows.saturating_mul(width), &format!("matrix {i}"))?;
                mats.push(MultiVector::new(rows, width, data).map_err(|e| corrupt(at, format!("matrix {i}: {e}")))?);
            }
            let mut idx = MultiVectorIndex::new(width);
            for (i, m) in mats.into_iter().enumerate() {
                let at = r.pos;
                let id = r.string(&format!("id {i}"))?;
                let payload = r.string(&format!("payload {i}"))?;
                idx.add(&id, m, payload)
                    .map_err(|e| corrupt(at, format!("entry {i}: {e}")))?;
            }
            StoredIndex::Multi(idx)
        }
        other => return Err(IndexError::Format(format!("unknown index kind {other}"))),
    };
    if r.pos != bytes.len() {
        return Err(corrupt(r.pos, format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(index)
}

pub fn load_index(path: &Path) -> Result<StoredIndex, IndexError> {
    let bytes = fs::read(path).map_err(|source| IndexError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_index(&bytes)
}
