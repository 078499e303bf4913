//! MMFE binary container for per-modality feature blocks, a TSV debugging
//! format, and column/row normalization.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "MMFE"
//!      4     2  version (u16) = 1
//!      6     1  modality code (u8)
//!      7     1  dtype code (u8), 0 = f32
//!      8     8  row_count (u64)
//!     16     4  dim (u32)
//!     20     8  id_table_bytes (u64)
//!     28     .  id table: row_count x (u16 byte length, UTF-8 bytes)
//!      .     .  payload: row_count x dim f32, row-major
//! ```
//!
//! Standard deviations used by z-score normalization are sample estimates
//! (n - 1 denominator). Constant columns normalize to zero.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, Modality};
use crate::error::{Error, Result};
use crate::split::write_atomic;

pub const MAGIC: [u8; 4] = *b"MMFE";
pub const VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 0;
pub const HEADER_LEN: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureFileHeader {
    pub modality: Modality,
    pub dtype_code: u8,
    pub row_count: u64,
    pub dim: u32,
    pub id_table_bytes: u64,
}

impl FeatureFileHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..6].copy_from_slice(&VERSION.to_le_bytes());
        b[6] = self.modality.code();
        b[7] = self.dtype_code;
        b[8..16].copy_from_slice(&self.row_count.to_le_bytes());
        b[16..20].copy_from_slice(&self.dim.to_le_bytes());
        b[20..28].copy_from_slice(&self.id_table_bytes.to_le_bytes());
        b
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::TruncatedFile {
                expected: HEADER_LEN as u64,
                actual: bytes.len() as u64,
            });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::BadVersion(version));
        }
        if bytes[7] != DTYPE_F32 {
            return Err(Error::BadDtype(bytes[7]));
        }
        Ok(Self {
            modality: Modality::from_code(bytes[6])?,
            dtype_code: bytes[7],
            row_count: u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")),
            dim: u32::from_le_bytes(bytes[16..20].try_into().expect("4 bytes")),
            id_table_bytes: u64::from_le_bytes(bytes[20..28].try_into().expect("8 bytes")),
        })
    }

    /// Total file length implied by the header.
    pub fn expected_len(&self) -> Option<u64> {
        let payload = self.row_count.checked_mul(u64::from(self.dim))?.checked_mul(4)?;
        (HEADER_LEN as u64)
            .checked_add(self.id_table_bytes)?
            .checked_add(payload)
    }
}

pub fn encode_features(m: &FeatureMatrix) -> Result<Vec<u8>> {
    let mut ids = Vec::new();
    for id in m.row_ids() {
        let len = u16::try_from(id.len())
            .map_err(|_| Error::InvalidFeatures(format!("row id longer than 65535 bytes: {id:.32}...")))?;
        ids.extend_from_slice(&len.to_le_bytes());
        ids.extend_from_slice(id.as_bytes());
    }
    let header = FeatureFileHeader {
        modality: m.modality(),
        dtype_code: DTYPE_F32,
        row_count: m.len() as u64,
        dim: u32::try_from(m.dim()).map_err(|_| Error::InvalidFeatures("dim exceeds u32".into()))?,
        id_table_bytes: ids.len() as u64,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + ids.len() + m.values().len() * 4);
    out.extend_from_slice(&header.to_bytes());
    out.extend_from_slice(&ids);
    for v in m.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureMatrix> {
    let header = FeatureFileHeader::parse(bytes)?;
    let expected = header
        .expected_len()
        .ok_or_else(|| Error::InvalidFeatures("declared sizes overflow".into()))?;
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(Error::TruncatedFile { expected, actual });
    }
    if actual > expected {
        return Err(Error::SizeMismatch { expected, actual });
    }
    let rows = header.row_count as usize;
    let dim = header.dim as usize;
    let table_end = HEADER_LEN + header.id_table_bytes as usize;
    let table = &bytes[HEADER_LEN..table_end];
    let mut ids = Vec::with_capacity(rows);
    let mut pos = 0usize;
    for _ in 0..rows {
        let bad = || Error::InvalidFeatures("id table does not match row_count".into());
        let len_bytes = table.get(pos..pos + 2).ok_or_else(bad)?;
        let len = u16::from_le_bytes([len_bytes[0], len_bytes[1]]) as usize;
        let raw = table.get(pos + 2..pos + 2 + len).ok_or_else(bad)?;
        let id = std::str::from_utf8(raw)
            .map_err(|_| Error::InvalidFeatures("row id is not UTF-8".into()))?;
        ids.push(id.to_owned());
        pos += 2 + len;
    }
    if pos != table.len() {
        return Err(Error::InvalidFeatures("id table has trailing bytes".into()));
    }
    let values = bytes[table_end..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    FeatureMatrix::new(header.modality, dim, ids, values)
}

pub fn write_features(m: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_features(m)?)
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes)
}

/// One line per row: `id<TAB>v1<TAB>...<TAB>vd`. Floats use the shortest
/// representation that reads back to the same `f32`.
pub fn write_features_tsv(m: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    for (k, id) in m.row_ids().iter().enumerate() {
        write!(buf, "{id}").expect("vec write");
        for v in m.row(k) {
            write!(buf, "\t{v}").expect("vec write");
        }
        buf.push(b'\n');
    }
    write_atomic(path.as_ref(), &buf)
}

pub fn read_features_tsv(path: impl AsRef<Path>, modality: Modality) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut dim = None;
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default().to_owned();
        let row: Vec<f32> = fields
            .map(|f| f.trim().parse::<f32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Malformed {
                line: n + 1,
                reason: e.to_string(),
            })?;
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(Error::Malformed {
                    line: n + 1,
                    reason: format!("expected {d} values, found {}", row.len()),
                })
            }
            _ => {}
        }
        ids.push(id);
        values.extend(row);
    }
    FeatureMatrix::new(modality, dim.unwrap_or(1), ids, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preprocess {
    #[default]
    None,
    Zscore,
    Minmax,
    L2row,
}

impl std::str::FromStr for Preprocess {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Preprocess::None),
            "zscore" => Ok(Preprocess::Zscore),
            "minmax" => Ok(Preprocess::Minmax),
            "l2row" => Ok(Preprocess::L2row),
            other => Err(Error::Config(format!("unknown preprocessing method {other:?}"))),
        }
    }
}

pub fn preprocess(m: &FeatureMatrix, method: Preprocess) -> FeatureMatrix {
    let (rows, dim) = (m.len(), m.dim());
    let src = m.values();
    let mut out: Vec<f32> = src.to_vec();
    match method {
        Preprocess::None => return m.clone(),
        Preprocess::Zscore => {
            for c in 0..dim {
                let col = || (0..rows).map(|r| f64::from(src[r * dim + c]));
                let mean = col().sum::<f64>() / rows.max(1) as f64;
                let var = if rows > 1 {
                    col().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (rows - 1) as f64
                } else {
                    0.0
                };
                let std = var.sqrt();
                for r in 0..rows {
                    out[r * dim + c] = if std > 0.0 {
                        ((f64::from(src[r * dim + c]) - mean) / std) as f32
                    } else {
                        0.0
                    };
                }
            }
        }
        Preprocess::Minmax => {
            for c in 0..dim {
                let col = (0..rows).map(|r| src[r * dim + c]);
                let lo = col.clone().fold(f32::INFINITY, f32::min);
                let hi = col.fold(f32::NEG_INFINITY, f32::max);
                let span = f64::from(hi) - f64::from(lo);
                for r in 0..rows {
                    out[r * dim + c] = if span > 0.0 {
                        ((f64::from(src[r * dim + c]) - f64::from(lo)) / span) as f32
                    } else {
                        0.0
                    };
                }
            }
        }
        Preprocess::L2row => {
            for r in 0..rows {
                let row = &src[r * dim..(r + 1) * dim];
                let norm = row.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for (o, &x) in out[r * dim..(r + 1) * dim].iter_mut().zip(row) {
                        *o = (f64::from(x) / norm) as f32;
                    }
                }
            }
        }
    }
    FeatureMatrix::new(m.modality(), dim, m.row_ids().to_vec(), out)
        .expect("normalization of finite values stays finite")
}
