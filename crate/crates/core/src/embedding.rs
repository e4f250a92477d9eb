//! Dense document embeddings: the EMB1 file format, cosine distance, and a
//! deterministic feature-hashing provider used in place of a sentence encoder.
//!
//! EMB1 layout (all little-endian):
//!
//! | offset | size      | content                     |
//! |--------|-----------|-----------------------------|
//! | 0      | 4         | ASCII `EMB1`                |
//! | 4      | 4         | `u32` row count `n`         |
//! | 8      | 4         | `u32` dimension `d`         |
//! | 12     | 4·n·d     | `f32` values, row-major     |

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"EMB1";
const HEADER_LEN: usize = 12;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic bytes {0:?}, expected \"EMB1\"")]
    BadMagic([u8; 4]),
    #[error("truncated embedding file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("trailing data: expected {expected} bytes, found {found}")]
    TrailingData { expected: usize, found: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("{values} values cannot form a {n}x{d} matrix")]
    Shape { n: usize, d: usize, values: usize },
    #[error("embedding dimension must be at least 2, got {0}")]
    Dimension(usize),
}

/// Row-major `n × d` matrix of `f32`; row `i` belongs to corpus document `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    values: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(n: usize, d: usize, values: Vec<f32>) -> Result<Self, EmbeddingError> {
        if values.len() != n * d {
            return Err(EmbeddingError::Shape {
                n,
                d,
                values: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite {
                row: pos / d.max(1),
                col: pos % d.max(1),
            });
        }
        Ok(EmbeddingMatrix { n, d, values })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self, EmbeddingError> {
        let d = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * d);
        for row in rows {
            if row.len() != d {
                return Err(EmbeddingError::DimensionMismatch(d, row.len()));
            }
            values.extend_from_slice(row);
        }
        EmbeddingMatrix::new(rows.len(), d, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        (0..self.n).map(move |i| self.row(i))
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> EmbeddingMatrix {
        let mut values = Vec::with_capacity(rows.len() * self.d);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        EmbeddingMatrix {
            n: rows.len(),
            d: self.d,
            values,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EmbeddingError + '_ {
    move |source| EmbeddingError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn encode_embeddings(m: &EmbeddingMatrix) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * m.values.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(m.n as u32).to_le_bytes());
    buf.extend_from_slice(&(m.d as u32).to_le_bytes());
    for v in &m.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingMatrix, EmbeddingError> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            return Err(EmbeddingError::BadMagic(bytes[..4].try_into().unwrap()));
        }
        return Err(EmbeddingError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(EmbeddingError::BadMagic(magic));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = HEADER_LEN + 4 * n * d;
    if bytes.len() < expected {
        return Err(EmbeddingError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(EmbeddingError::TrailingData {
            expected,
            found: bytes.len(),
        });
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EmbeddingMatrix::new(n, d, values)
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingMatrix, EmbeddingError> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    decode_embeddings(&bytes)
}

pub fn write_embeddings(m: &EmbeddingMatrix, path: &Path) -> Result<(), EmbeddingError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    out.write_all(&encode_embeddings(m)).map_err(io_err(path))?;
    out.flush().map_err(io_err(path))
}

/// `1 − cos(u, v)`. Two zero vectors are at distance 0; a zero vector against
/// a nonzero one is at distance 1.
pub fn cosine_distance(u: &[f32], v: &[f32]) -> Result<f64, EmbeddingError> {
    if u.len() != v.len() {
        return Err(EmbeddingError::DimensionMismatch(u.len(), v.len()));
    }
    Ok(cosine_distance_unchecked(u, v))
}

pub(crate) fn cosine_distance_unchecked(u: &[f32], v: &[f32]) -> f64 {
    let (mut dot, mut nu, mut nv) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (a as f64, b as f64);
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    match (nu == 0.0, nv == 0.0) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        _ => (1.0 - dot / (nu * nv).sqrt()).clamp(0.0, 2.0),
    }
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn token_hash(token: &str, seed: u64) -> u64 {
    // FNV-1a over the bytes, seeded and finalized.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ mix64(seed);
    for b in token.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix64(h)
}

/// Feature-hashes each text's lowercase alphanumeric tokens into `d` signed
/// buckets and scales the result to unit length. Texts without tokens map to `e_0`.
pub fn hash_embedding_provider<S: AsRef<str>>(
    texts: &[S],
    d: usize,
    seed: u64,
) -> Result<EmbeddingMatrix, EmbeddingError> {
    if d < 2 {
        return Err(EmbeddingError::Dimension(d));
    }
    let mut values = Vec::with_capacity(texts.len() * d);
    for text in texts {
        let mut row = vec![0.0f64; d];
        let lower = text.as_ref().to_lowercase();
        for token in lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            let h = token_hash(token, seed);
            let bucket = (h % d as u64) as usize;
            row[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        }
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            row.iter_mut().for_each(|x| *x = 0.0);
            row[0] = 1.0;
        } else {
            row.iter_mut().for_each(|x| *x /= norm);
        }
        values.extend(row.into_iter().map(|x| x as f32));
    }
    EmbeddingMatrix::new(texts.len(), d, values)
}
