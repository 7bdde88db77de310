//! The in-memory compressed-vector table consulted for neighbors whose
//! code is not stored on their referencing page.

use std::fs;
use std::path::Path;

use crate::codec::{ByteReader, ByteWriter};
use crate::dataset::VectorId;
use crate::error::{Error, Result};
use crate::layout::SPARSE_ENTRY_OVERHEAD;
use crate::pq::CodeArray;

const MEMCODES_MAGIC: &[u8; 4] = b"PGMC";

/// Codes held in memory, indexed by page-derived id.
#[derive(Debug, Clone, PartialEq)]
pub enum MemoryCodes {
    None,
    /// One code per vector, indexed directly by id.
    Dense(CodeArray),
    /// Codes for a subset of ids, sorted ascending.
    Sparse { ids: Vec<VectorId>, codes: CodeArray },
}

impl MemoryCodes {
    pub fn sparse(ids: Vec<VectorId>, codes: CodeArray) -> Result<Self> {
        if ids.len() != codes.len() || ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("sparse code ids must be ascending and match the codes".into()));
        }
        Ok(Self::Sparse { ids, codes })
    }

    #[inline]
    pub fn get(&self, id: VectorId) -> Option<&[u8]> {
        match self {
            Self::None => None,
            Self::Dense(codes) => ((id as usize) < codes.len()).then(|| codes.get(id as usize)),
            Self::Sparse { ids, codes } => ids.binary_search(&id).ok().map(|i| codes.get(i)),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::None => 0,
            Self::Dense(codes) => codes.len(),
            Self::Sparse { ids, .. } => ids.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Resident bytes: codes, plus one id per entry for the sparse form.
    pub fn memory_bytes(&self) -> u64 {
        match self {
            Self::None => 0,
            Self::Dense(codes) => (codes.len() * codes.chunks()) as u64,
            Self::Sparse { ids, codes } => (ids.len() * (codes.chunks() + SPARSE_ENTRY_OVERHEAD)) as u64,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_header(MEMCODES_MAGIC);
        match self {
            Self::None => {
                w.u32(0);
            }
            Self::Dense(codes) => {
                w.u32(1).bytes(&codes.to_bytes());
            }
            Self::Sparse { ids, codes } => {
                w.u32(2).u32(ids.len() as u32).u32s(ids).bytes(&codes.to_bytes());
            }
        }
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "memory code file");
        r.expect_header(MEMCODES_MAGIC)?;
        let out = match r.u32()? {
            0 => Self::None,
            1 => {
                let rest = r.take(bytes.len() - 12)?;
                Self::Dense(CodeArray::from_bytes(rest)?)
            }
            2 => {
                let n = r.u32()? as usize;
                let ids = r.u32s(n)?;
                let rest = r.take(bytes.len() - 16 - 4 * n)?;
                Self::sparse(ids, CodeArray::from_bytes(rest)?)
                    .map_err(|e| Error::Corrupt(format!("memory code file: {e}")))?
            }
            k => return Err(Error::Corrupt(format!("memory code file: unknown kind {k}"))),
        };
        r.finish()?;
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookups_and_round_trips() {
        let codes = CodeArray::from_raw(2, vec![1, 2, 3, 4, 5, 6]).unwrap();
        let dense = MemoryCodes::Dense(codes.clone());
        assert_eq!(dense.get(1), Some(&[3, 4][..]));
        assert_eq!(dense.get(3), None);
        let sparse = MemoryCodes::sparse(vec![2, 9, 40], codes).unwrap();
        assert_eq!(sparse.get(9), Some(&[3, 4][..]));
        assert_eq!(sparse.get(3), None);
        assert_eq!(sparse.memory_bytes(), 3 * 6);
        for m in [MemoryCodes::None, dense, sparse] {
            assert_eq!(MemoryCodes::from_bytes(&m.to_bytes()).unwrap(), m);
        }
    }
}
