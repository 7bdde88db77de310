//! Readers and writers for the common vector file formats.
//!
//! * `fvecs` / `bvecs` / `ivecs`: every vector is prefixed by its
//!   dimension as a little-endian `u32`.
//! * `fbin` / `u8bin` / `i8bin` / `ibin`: an 8-byte header (`u32` count,
//!   `u32` dim) followed by the row-major payload.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use pageann::{Dataset, ElemKind, Element};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("unknown vector file extension: {0}")]
    UnknownFormat(String),
    #[error("{0}: file is empty")]
    Empty(String),
    #[error("{path}: truncated at byte {offset}")]
    Truncated { path: String, offset: usize },
    #[error("{path}: vector {index} has dimension {got}, expected {expected}")]
    DimMismatch { path: String, index: usize, expected: usize, got: usize },
    #[error("{path}: holds {found} values, expected {wanted}")]
    KindMismatch { path: String, found: String, wanted: String },
    #[error(transparent)]
    Core(#[from] pageann::Error),
}

pub type Result<T, E = IngestError> = std::result::Result<T, E>;

/// On-disk vector file layout, chosen by extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorFormat {
    Fvecs,
    Bvecs,
    Ivecs,
    FBin,
    U8Bin,
    I8Bin,
    IBin,
}

/// Component type of a vector file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Elem(ElemKind),
    /// 32-bit signed integers, used for ground-truth ids.
    I32,
}

impl VectorFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
        Ok(match ext.as_str() {
            "fvecs" => Self::Fvecs,
            "bvecs" => Self::Bvecs,
            "ivecs" => Self::Ivecs,
            "fbin" => Self::FBin,
            "u8bin" => Self::U8Bin,
            "i8bin" => Self::I8Bin,
            "ibin" => Self::IBin,
            _ => return Err(IngestError::UnknownFormat(path.display().to_string())),
        })
    }

    pub fn component(self) -> Component {
        match self {
            Self::Fvecs | Self::FBin => Component::Elem(ElemKind::F32),
            Self::Bvecs | Self::U8Bin => Component::Elem(ElemKind::U8),
            Self::I8Bin => Component::Elem(ElemKind::I8),
            Self::Ivecs | Self::IBin => Component::I32,
        }
    }

    fn component_size(self) -> usize {
        match self.component() {
            Component::Elem(k) => k.size(),
            Component::I32 => 4,
        }
    }

    fn prefixed(self) -> bool {
        matches!(self, Self::Fvecs | Self::Bvecs | Self::Ivecs)
    }
}

/// A dataset of whichever element kind the file holds.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyDataset {
    U8(Dataset<u8>),
    I8(Dataset<i8>),
    F32(Dataset<f32>),
}

impl AnyDataset {
    pub fn kind(&self) -> ElemKind {
        match self {
            Self::U8(_) => ElemKind::U8,
            Self::I8(_) => ElemKind::I8,
            Self::F32(_) => ElemKind::F32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::U8(d) => d.len(),
            Self::I8(d) => d.len(),
            Self::F32(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::U8(d) => d.dim(),
            Self::I8(d) => d.dim(),
            Self::F32(d) => d.dim(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io { path: path.display().to_string(), source }
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

/// Splits a file into `(dim, raw rows)`, reading at most `limit` rows.
fn read_raw(path: &Path, limit: Option<usize>) -> Result<(VectorFormat, usize, usize, Vec<u8>)> {
    let format = VectorFormat::from_path(path)?;
    let bytes = fs::read(path).map_err(io_err(path))?;
    let name = || path.display().to_string();
    if bytes.is_empty() {
        return Err(IngestError::Empty(name()));
    }
    let cs = format.component_size();
    let limit = limit.unwrap_or(usize::MAX);
    if format.prefixed() {
        if bytes.len() < 4 {
            return Err(IngestError::Truncated { path: name(), offset: 0 });
        }
        let dim = u32_at(&bytes, 0) as usize;
        if dim == 0 {
            return Err(IngestError::DimMismatch { path: name(), index: 0, expected: 1, got: 0 });
        }
        let stride = 4 + dim * cs;
        let mut payload = Vec::new();
        let mut offset = 0;
        let mut index = 0;
        while offset < bytes.len() && index < limit {
            if offset + 4 > bytes.len() || offset + stride > bytes.len() {
                return Err(IngestError::Truncated { path: name(), offset });
            }
            let d = u32_at(&bytes, offset) as usize;
            if d != dim {
                return Err(IngestError::DimMismatch { path: name(), index, expected: dim, got: d });
            }
            payload.extend_from_slice(&bytes[offset + 4..offset + stride]);
            offset += stride;
            index += 1;
        }
        Ok((format, index, dim, payload))
    } else {
        if bytes.len() < 8 {
            return Err(IngestError::Truncated { path: name(), offset: bytes.len() });
        }
        let count = u32_at(&bytes, 0) as usize;
        let dim = u32_at(&bytes, 4) as usize;
        if count == 0 || dim == 0 {
            return Err(IngestError::Empty(name()));
        }
        let want = count.checked_mul(dim * cs).and_then(|p| p.checked_add(8));
        if want != Some(bytes.len()) {
            return Err(IngestError::Truncated { path: name(), offset: bytes.len() });
        }
        let rows = count.min(limit);
        Ok((format, rows, dim, bytes[8..8 + rows * dim * cs].to_vec()))
    }
}

fn decode<T: Element>(dim: usize, payload: &[u8]) -> Result<Dataset<T>> {
    let mut values = vec![T::default(); payload.len() / T::KIND.size()];
    T::read_le(payload, &mut values);
    Ok(Dataset::new(dim, values)?)
}

/// Reads a vector file, keeping at most `limit` vectors.
pub fn read_dataset(path: &Path, limit: Option<usize>) -> Result<AnyDataset> {
    let (format, _, dim, payload) = read_raw(path, limit)?;
    match format.component() {
        Component::Elem(ElemKind::U8) => Ok(AnyDataset::U8(decode(dim, &payload)?)),
        Component::Elem(ElemKind::I8) => Ok(AnyDataset::I8(decode(dim, &payload)?)),
        Component::Elem(ElemKind::F32) => Ok(AnyDataset::F32(decode(dim, &payload)?)),
        Component::I32 => Err(IngestError::KindMismatch {
            path: path.display().to_string(),
            found: "i32".into(),
            wanted: "u8, i8 or f32".into(),
        }),
    }
}

/// Reads a vector file whose element kind must be `T`.
pub fn read_dataset_as<T: Element>(path: &Path, limit: Option<usize>) -> Result<Dataset<T>> {
    let (format, _, dim, payload) = read_raw(path, limit)?;
    if format.component() != Component::Elem(T::KIND) {
        return Err(IngestError::KindMismatch {
            path: path.display().to_string(),
            found: format!("{:?}", format.component()),
            wanted: T::KIND.name().into(),
        });
    }
    decode(dim, &payload)
}

/// Reads an `ivecs` / `ibin` file of ids, one row per query.
pub fn read_ids(path: &Path) -> Result<Vec<Vec<u32>>> {
    let (format, rows, dim, payload) = read_raw(path, None)?;
    if format.component() != Component::I32 {
        return Err(IngestError::KindMismatch {
            path: path.display().to_string(),
            found: format!("{:?}", format.component()),
            wanted: "i32".into(),
        });
    }
    let flat: Vec<u32> = payload.chunks_exact(4).map(|c| u32_at(c, 0)).collect();
    debug_assert_eq!(flat.len(), rows * dim);
    Ok(flat.chunks_exact(dim).map(<[u32]>::to_vec).collect())
}

fn write_raw(path: &Path, format: VectorFormat, dim: usize, rows: usize, payload: &[u8]) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let row_bytes = dim * format.component_size();
    let res = (|| -> std::io::Result<()> {
        if format.prefixed() {
            for row in payload.chunks_exact(row_bytes) {
                w.write_all(&(dim as u32).to_le_bytes())?;
                w.write_all(row)?;
            }
        } else {
            w.write_all(&(rows as u32).to_le_bytes())?;
            w.write_all(&(dim as u32).to_le_bytes())?;
            w.write_all(payload)?;
        }
        w.flush()
    })();
    res.map_err(io_err(path))
}

/// Writes `ds` in the format implied by the extension of `path`.
pub fn write_dataset<T: Element>(path: &Path, ds: &Dataset<T>) -> Result<()> {
    let format = VectorFormat::from_path(path)?;
    if format.component() != Component::Elem(T::KIND) {
        return Err(IngestError::KindMismatch {
            path: path.display().to_string(),
            found: T::KIND.name().into(),
            wanted: format!("{:?}", format.component()),
        });
    }
    let mut payload = Vec::with_capacity(ds.byte_len());
    T::write_le(ds.as_slice(), &mut payload);
    write_raw(path, format, ds.dim(), ds.len(), &payload)
}

/// Writes equal-length id rows as `ivecs` or `ibin`.
pub fn write_ids(path: &Path, rows: &[Vec<u32>]) -> Result<()> {
    let format = VectorFormat::from_path(path)?;
    if format.component() != Component::I32 {
        return Err(IngestError::UnknownFormat(path.display().to_string()));
    }
    let dim = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || dim == 0 || rows.iter().any(|r| r.len() != dim) {
        return Err(IngestError::Empty(path.display().to_string()));
    }
    let payload: Vec<u8> = rows.iter().flatten().flat_map(|v| v.to_le_bytes()).collect();
    write_raw(path, format, dim, rows.len(), &payload)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bvecs_layout_arithmetic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.bvecs");
        let ds = Dataset::new(4, vec![1u8, 2, 3, 4, 5, 6, 7, 8]).unwrap();
        write_dataset(&path, &ds).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 2 * (4 + 4));
        assert_eq!(read_dataset(&path, None).unwrap(), AnyDataset::U8(ds));
    }

    #[test]
    fn fbin_header_and_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.fbin");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        for v in [1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&path, &bytes).unwrap();
        let ds = read_dataset_as::<f32>(&path, None).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.row(2), &[5.0, 6.0]);
    }

    #[test]
    fn empty_truncated_and_mismatched_files_fail() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.fvecs");
        fs::write(&p, []).unwrap();
        assert!(matches!(read_dataset(&p, None), Err(IngestError::Empty(_))));
        let p = dir.path().join("t.u8bin");
        fs::write(&p, [2, 0, 0, 0, 2, 0, 0, 0, 1, 2, 3]).unwrap();
        assert!(matches!(read_dataset(&p, None), Err(IngestError::Truncated { .. })));
        let p = dir.path().join("d.bvecs");
        fs::write(&p, [2, 0, 0, 0, 1, 2, 3, 0, 0, 0, 1, 2, 3]).unwrap();
        assert!(matches!(read_dataset(&p, None), Err(IngestError::DimMismatch { .. })));
        assert!(matches!(read_dataset(Path::new("x.txt"), None), Err(IngestError::UnknownFormat(_))));
    }

    #[test]
    fn limit_takes_a_prefix() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset::new(2, (0..20i8).collect()).unwrap();
        {
            let name = "a.i8bin";
            let p = dir.path().join(name);
            write_dataset(&p, &ds).unwrap();
            let sub = read_dataset_as::<i8>(&p, Some(3)).unwrap();
            assert_eq!(sub.as_slice(), &ds.as_slice()[..6]);
        }
        let p = dir.path().join("b.fvecs");
        let f = Dataset::new(1, vec![1.0f32, 2.0, 3.0]).unwrap();
        write_dataset(&p, &f).unwrap();
        assert_eq!(read_dataset_as::<f32>(&p, Some(2)).unwrap().len(), 2);
    }

    #[test]
    fn ids_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![vec![1, 2, 3], vec![7, 8, 9]];
        for name in ["g.ivecs", "g.ibin"] {
            let p = dir.path().join(name);
            write_ids(&p, &rows).unwrap();
            assert_eq!(read_ids(&p).unwrap(), rows);
        }
    }
}
