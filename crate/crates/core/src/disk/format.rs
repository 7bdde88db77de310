//! Index file layout.
//!
//! The file is a sequence of `page_size` slots. Slot 0 holds the header;
//! data page `p` lives in slot `p + 1`. Each data record is
//!
//! ```text
//! u16 vec_count | u16 nbr_count | vec_count vectors | nbr_count u32 ids |
//! min(nbr_count, disk_codes) codes | zero padding
//! ```
//!
//! All integers are little-endian.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::codec::{ByteReader, ByteWriter, FORMAT_VERSION};
use crate::dataset::{PageId, VectorId};
use crate::element::{ElemKind, Element};
use crate::error::{Error, Result};
use crate::layout::{PagePlan, COUNT_FIELD_BYTES, NEIGHBOR_ID_BYTES};

pub const INDEX_MAGIC: &[u8; 8] = b"PAGEANN\0";
const REMAP_MAGIC: &[u8; 4] = b"PGRM";

/// Metadata stored in the first page slot of the index file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexHeader {
    pub count: u32,
    pub dim: u32,
    pub elem: ElemKind,
    pub page_size: u32,
    pub vectors_per_page: u32,
    pub max_nbrs: u32,
    pub disk_codes: u32,
    pub disk_code_bytes: u32,
    pub page_count: u32,
    /// Page holding the dataset medoid.
    pub entry_page: PageId,
    /// Medoid id in the reassigned id space.
    pub medoid: VectorId,
    /// File names of the codebooks the page codes were produced with.
    pub codebook_files: Vec<String>,
}

impl IndexHeader {
    pub fn from_plan(plan: &PagePlan, count: usize, elem: ElemKind, entry_page: PageId, medoid: VectorId) -> Self {
        Self {
            count: count as u32,
            dim: plan.dim as u32,
            elem,
            page_size: plan.page_size as u32,
            vectors_per_page: plan.vectors_per_page as u32,
            max_nbrs: plan.max_nbrs as u32,
            disk_codes: plan.disk_codes as u32,
            disk_code_bytes: plan.disk_code_bytes as u32,
            page_count: plan.page_count(count) as u32,
            entry_page,
            medoid,
            codebook_files: Vec::new(),
        }
    }

    pub fn format(&self) -> PageFormat {
        PageFormat {
            page_size: self.page_size as usize,
            vector_bytes: self.dim as usize * self.elem.size(),
            max_vectors: self.vectors_per_page as usize,
            max_nbrs: self.max_nbrs as usize,
            disk_codes: self.disk_codes as usize,
            code_bytes: self.disk_code_bytes as usize,
        }
    }

    /// Encodes the header into one full page slot.
    pub fn to_page(&self) -> Result<Vec<u8>> {
        let mut w = ByteWriter::default();
        w.bytes(INDEX_MAGIC).u32(FORMAT_VERSION);
        w.u32(self.count)
            .u32(self.dim)
            .u32(self.elem.tag())
            .u32(self.page_size)
            .u32(self.vectors_per_page)
            .u32(self.max_nbrs)
            .u32(self.disk_codes)
            .u32(self.disk_code_bytes)
            .u32(self.page_count)
            .u32(self.entry_page)
            .u32(self.medoid)
            .u32(self.codebook_files.len() as u32);
        for name in &self.codebook_files {
            w.u32(name.len() as u32).bytes(name.as_bytes());
        }
        let mut page = w.into_inner();
        let size = self.page_size as usize;
        if page.len() > size {
            return Err(Error::PageOverflow { page: u32::MAX, len: page.len(), page_size: size });
        }
        page.resize(size, 0);
        Ok(page)
    }

    /// Decodes and validates a header slot.
    pub fn from_page(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "index header");
        if r.take(8)? != INDEX_MAGIC {
            return Err(Error::Corrupt("index header: bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Corrupt(format!("index header: unsupported version {version}")));
        }
        let count = r.u32()?;
        let dim = r.u32()?;
        let tag = r.u32()?;
        let elem = ElemKind::from_tag(tag)
            .ok_or_else(|| Error::Corrupt(format!("index header: unknown element tag {tag}")))?;
        let mut h = Self {
            count,
            dim,
            elem,
            page_size: r.u32()?,
            vectors_per_page: r.u32()?,
            max_nbrs: r.u32()?,
            disk_codes: r.u32()?,
            disk_code_bytes: r.u32()?,
            page_count: r.u32()?,
            entry_page: r.u32()?,
            medoid: r.u32()?,
            codebook_files: Vec::new(),
        };
        let files = r.u32()?;
        for _ in 0..files {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Corrupt("index header: codebook name is not UTF-8".into()))?;
            h.codebook_files.push(name.to_owned());
        }
        if bytes.len() != h.page_size as usize {
            return Err(Error::Corrupt("index header: slot size differs from page size".into()));
        }
        h.validate()?;
        Ok(h)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Corrupt(format!("index header: {m}")));
        if self.count == 0 || self.dim == 0 || self.vectors_per_page == 0 {
            return bad("zero count, dimension or page capacity");
        }
        if self.disk_codes > self.max_nbrs || self.max_nbrs > u16::MAX as u32 {
            return bad("inconsistent neighbor budget");
        }
        if self.page_count as usize != (self.count as usize).div_ceil(self.vectors_per_page as usize) {
            return bad("page count does not match vector count");
        }
        if self.entry_page >= self.page_count || self.medoid / self.vectors_per_page != self.entry_page {
            return bad("entry page out of range");
        }
        let f = self.format();
        if f.record_len(f.max_vectors, f.max_nbrs) > f.page_size {
            return bad("a full page does not fit the page size");
        }
        Ok(())
    }

    /// Expected index file size in bytes.
    pub fn file_len(&self) -> u64 {
        (1 + self.page_count as u64) * self.page_size as u64
    }

    /// Page that holds `id` under the reassigned numbering.
    #[inline]
    pub fn page_of(&self, id: VectorId) -> PageId {
        id / self.vectors_per_page
    }

    /// Ids stored on `page`; only the last page may be short.
    pub fn page_members(&self, page: PageId) -> std::ops::Range<VectorId> {
        let start = page * self.vectors_per_page;
        let end = (start + self.vectors_per_page).min(self.count);
        start..end
    }
}

/// Sizes needed to encode and decode page records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PageFormat {
    pub page_size: usize,
    pub vector_bytes: usize,
    pub max_vectors: usize,
    pub max_nbrs: usize,
    pub disk_codes: usize,
    pub code_bytes: usize,
}

impl PageFormat {
    pub fn record_len(&self, vec_count: usize, nbr_count: usize) -> usize {
        2 * COUNT_FIELD_BYTES
            + vec_count * self.vector_bytes
            + nbr_count * NEIGHBOR_ID_BYTES
            + nbr_count.min(self.disk_codes) * self.code_bytes
    }
}

/// An owned page record, mainly for building and tests.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PageRecord {
    /// Member vectors, little-endian, `vec_count * vector_bytes` bytes.
    pub vectors: Vec<u8>,
    pub neighbors: Vec<VectorId>,
    /// Codes for the first `min(neighbors.len(), disk_codes)` neighbors.
    pub codes: Vec<u8>,
}

impl PageRecord {
    pub fn vec_count(&self, f: &PageFormat) -> usize {
        self.vectors.len() / f.vector_bytes
    }

    /// Serializes into exactly `page_size` bytes.
    pub fn encode(&self, f: &PageFormat, page: PageId) -> Result<Vec<u8>> {
        let vec_count = self.vec_count(f);
        let nbr_count = self.neighbors.len();
        if !self.vectors.len().is_multiple_of(f.vector_bytes) || vec_count > f.max_vectors {
            return Err(Error::InvalidParameter(format!("page {page}: bad member block")));
        }
        if nbr_count > f.max_nbrs {
            return Err(Error::InvalidParameter(format!(
                "page {page}: {nbr_count} neighbors exceed the budget {}",
                f.max_nbrs
            )));
        }
        if self.codes.len() != nbr_count.min(f.disk_codes) * f.code_bytes {
            return Err(Error::InvalidParameter(format!("page {page}: code block has wrong size")));
        }
        let len = f.record_len(vec_count, nbr_count);
        if len > f.page_size {
            return Err(Error::PageOverflow { page, len, page_size: f.page_size });
        }
        let mut out = Vec::with_capacity(f.page_size);
        out.extend_from_slice(&(vec_count as u16).to_le_bytes());
        out.extend_from_slice(&(nbr_count as u16).to_le_bytes());
        out.extend_from_slice(&self.vectors);
        for id in &self.neighbors {
            out.extend_from_slice(&id.to_le_bytes());
        }
        out.extend_from_slice(&self.codes);
        out.resize(f.page_size, 0);
        Ok(out)
    }

    pub fn decode(f: &PageFormat, bytes: &[u8]) -> Result<Self> {
        let v = PageView::parse(f, bytes)?;
        Ok(Self {
            vectors: v.vector_block().to_vec(),
            neighbors: v.neighbors().collect(),
            codes: v.code_block().to_vec(),
        })
    }
}

/// Borrowed, validated view of one page record.
#[derive(Debug, Clone, Copy)]
pub struct PageView<'a> {
    format: &'a PageFormat,
    bytes: &'a [u8],
    vec_count: usize,
    nbr_count: usize,
}

impl<'a> PageView<'a> {
    pub fn parse(format: &'a PageFormat, bytes: &'a [u8]) -> Result<Self> {
        if bytes.len() != format.page_size {
            return Err(Error::Corrupt(format!(
                "page buffer is {} bytes, expected {}",
                bytes.len(),
                format.page_size
            )));
        }
        let vec_count = u16::from_le_bytes([bytes[0], bytes[1]]) as usize;
        let nbr_count = u16::from_le_bytes([bytes[2], bytes[3]]) as usize;
        if vec_count > format.max_vectors || nbr_count > format.max_nbrs {
            return Err(Error::Corrupt("page counts exceed the layout".into()));
        }
        if format.record_len(vec_count, nbr_count) > format.page_size {
            return Err(Error::Corrupt("page record overruns the page".into()));
        }
        Ok(Self { format, bytes, vec_count, nbr_count })
    }

    pub fn vec_count(&self) -> usize {
        self.vec_count
    }

    pub fn nbr_count(&self) -> usize {
        self.nbr_count
    }

    fn vectors_start(&self) -> usize {
        2 * COUNT_FIELD_BYTES
    }

    fn ids_start(&self) -> usize {
        self.vectors_start() + self.vec_count * self.format.vector_bytes
    }

    fn codes_start(&self) -> usize {
        self.ids_start() + self.nbr_count * NEIGHBOR_ID_BYTES
    }

    pub fn vector_block(&self) -> &'a [u8] {
        &self.bytes[self.vectors_start()..self.ids_start()]
    }

    /// Raw bytes of member `slot`.
    pub fn vector_bytes(&self, slot: usize) -> &'a [u8] {
        let vb = self.format.vector_bytes;
        let start = self.vectors_start() + slot * vb;
        &self.bytes[start..start + vb]
    }

    /// Decodes member `slot` into `out`.
    pub fn read_vector<T: Element>(&self, slot: usize, out: &mut [T]) {
        T::read_le(self.vector_bytes(slot), out);
    }

    #[inline]
    pub fn neighbor(&self, j: usize) -> VectorId {
        let s = self.ids_start() + j * NEIGHBOR_ID_BYTES;
        u32::from_le_bytes([self.bytes[s], self.bytes[s + 1], self.bytes[s + 2], self.bytes[s + 3]])
    }

    pub fn neighbors(&self) -> impl Iterator<Item = VectorId> + '_ {
        (0..self.nbr_count).map(|j| self.neighbor(j))
    }

    /// Number of neighbor slots carrying an on-page code.
    pub fn code_count(&self) -> usize {
        self.nbr_count.min(self.format.disk_codes)
    }

    /// On-page code of neighbor slot `j`, if that slot carries one.
    #[inline]
    pub fn code(&self, j: usize) -> Option<&'a [u8]> {
        if j < self.code_count() {
            let cb = self.format.code_bytes;
            let s = self.codes_start() + j * cb;
            Some(&self.bytes[s..s + cb])
        } else {
            None
        }
    }

    pub fn code_block(&self) -> &'a [u8] {
        let s = self.codes_start();
        &self.bytes[s..s + self.code_count() * self.format.code_bytes]
    }
}

/// Writes the header slot followed by one slot per record, then checks the
/// file size.
pub fn write_index(path: &Path, header: &IndexHeader, records: &[PageRecord]) -> Result<()> {
    if records.len() != header.page_count as usize {
        return Err(Error::InvalidParameter(format!(
            "{} records for a header declaring {} pages",
            records.len(),
            header.page_count
        )));
    }
    let total: usize = records.iter().map(|r| r.vec_count(&header.format())).sum();
    if total != header.count as usize {
        return Err(Error::InvalidParameter("records do not hold every vector".into()));
    }
    let format = header.format();
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(&header.to_page()?)?;
    for (p, rec) in records.iter().enumerate() {
        w.write_all(&rec.encode(&format, p as PageId)?)?;
    }
    let file = w.into_inner().map_err(|e| e.into_error())?;
    file.sync_all()?;
    let len = file.metadata()?.len();
    if len != header.file_len() {
        return Err(Error::Corrupt(format!(
            "index file is {len} bytes after writing, expected {}",
            header.file_len()
        )));
    }
    Ok(())
}

/// Bijection between original ids and page-derived ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdRemap {
    new_of_old: Vec<VectorId>,
    old_of_new: Vec<VectorId>,
}

/// Assigns `page * vectors_per_page + slot` to every member.
pub fn reassign_ids(pages: &[Vec<VectorId>], vectors_per_page: usize) -> Result<IdRemap> {
    let count: usize = pages.iter().map(Vec::len).sum();
    let mut pairs = Vec::with_capacity(count);
    for (p, members) in pages.iter().enumerate() {
        if members.len() > vectors_per_page {
            return Err(Error::InvalidParameter(format!("page {p} exceeds its capacity")));
        }
        for (slot, &old) in members.iter().enumerate() {
            pairs.push((old, (p * vectors_per_page + slot) as VectorId));
        }
    }
    IdRemap::from_pairs(count, &pairs)
}

impl IdRemap {
    /// Builds a remap from `(old, new)` pairs covering ids `0..count`.
    pub fn from_pairs(count: usize, pairs: &[(VectorId, VectorId)]) -> Result<Self> {
        let max_new = pairs.iter().map(|p| p.1 as usize + 1).max().unwrap_or(0);
        let mut new_of_old = vec![u32::MAX; count];
        let mut old_of_new = vec![u32::MAX; max_new];
        if pairs.len() != count {
            return Err(Error::InvalidParameter("remap does not cover every id".into()));
        }
        for &(old, new) in pairs {
            let slot = new_of_old
                .get_mut(old as usize)
                .ok_or_else(|| Error::InvalidParameter(format!("original id {old} out of range")))?;
            if *slot != u32::MAX || old_of_new[new as usize] != u32::MAX {
                return Err(Error::InvalidParameter("remap is not a bijection".into()));
            }
            *slot = new;
            old_of_new[new as usize] = old;
        }
        Ok(Self { new_of_old, old_of_new })
    }

    pub fn len(&self) -> usize {
        self.new_of_old.len()
    }

    pub fn is_empty(&self) -> bool {
        self.new_of_old.is_empty()
    }

    #[inline]
    pub fn new_id(&self, old: VectorId) -> VectorId {
        self.new_of_old[old as usize]
    }

    /// Original id of `new`, or `None` for an unused slot.
    #[inline]
    pub fn old_id(&self, new: VectorId) -> Option<VectorId> {
        self.old_of_new.get(new as usize).copied().filter(|&o| o != u32::MAX)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_header(REMAP_MAGIC);
        w.u32(self.len() as u32);
        for (old, &new) in self.new_of_old.iter().enumerate() {
            w.u32(old as u32).u32(new);
        }
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "remap file");
        r.expect_header(REMAP_MAGIC)?;
        let count = r.u32()? as usize;
        let flat = r.u32s(count.checked_mul(2).ok_or_else(|| Error::Corrupt("remap file: count overflow".into()))?)?;
        r.finish()?;
        let pairs: Vec<_> = flat.chunks_exact(2).map(|c| (c[0], c[1])).collect();
        Self::from_pairs(count, &pairs).map_err(|e| Error::Corrupt(format!("remap file: {e}")))
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

    fn header() -> IndexHeader {
        IndexHeader {
            count: 5,
            dim: 4,
            elem: ElemKind::U8,
            page_size: 128,
            vectors_per_page: 2,
            max_nbrs: 4,
            disk_codes: 2,
            disk_code_bytes: 2,
            page_count: 3,
            entry_page: 1,
            medoid: 3,
            codebook_files: vec!["disk.codebook".into()],
        }
    }

    #[test]
    fn reassignment_examples() {
        let remap = reassign_ids(&[vec![7, 2], vec![0, 5], vec![1, 3], vec![4, 6]], 2).unwrap();
        assert_eq!(remap.new_id(7), 0);
        assert_eq!(remap.new_id(3), 5);
        assert_eq!(remap.old_id(5), Some(3));
        let pages: Vec<Vec<u32>> = (0..4).map(|p| (0..18).map(|s| p * 18 + s).collect()).collect();
        let remap = reassign_ids(&pages, 18).unwrap();
        assert_eq!(remap.new_id(3 * 18 + 5), 59);
        for old in 0..72 {
            assert_eq!(remap.new_id(old) / 18, old / 18);
        }
    }

    #[test]
    fn remap_round_trip() {
        let remap = reassign_ids(&[vec![2, 0], vec![1]], 2).unwrap();
        assert_eq!(IdRemap::from_bytes(&remap.to_bytes()).unwrap(), remap);
        assert!(IdRemap::from_pairs(2, &[(0, 1), (1, 1)]).is_err());
    }

    #[test]
    fn header_round_trip_and_rejection() {
        let h = header();
        let page = h.to_page().unwrap();
        assert_eq!(page.len(), 128);
        assert_eq!(IndexHeader::from_page(&page).unwrap(), h);

        let mut bad = page.clone();
        bad[0] = b'X';
        assert!(IndexHeader::from_page(&bad).is_err());
        let mut bad = h.clone();
        bad.page_count = 4;
        assert!(IndexHeader::from_page(&bad.to_page().unwrap()).is_err());
    }

    #[test]
    fn page_record_round_trip_and_layout() {
        let f = header().format();
        let rec = PageRecord {
            vectors: vec![1, 2, 3, 4, 5, 6, 7, 8],
            neighbors: vec![10, 11, 12],
            codes: vec![0xA, 0xB, 0xC, 0xD],
        };
        let bytes = rec.encode(&f, 0).unwrap();
        assert_eq!(bytes.len(), 128);
        assert_eq!(&bytes[..4], &[2, 0, 3, 0]);
        assert_eq!(&bytes[4..12], &[1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(&bytes[12..16], &10u32.to_le_bytes());
        assert_eq!(&bytes[24..28], &[0xA, 0xB, 0xC, 0xD]);
        assert!(bytes[28..].iter().all(|&b| b == 0));
        assert_eq!(PageRecord::decode(&f, &bytes).unwrap(), rec);

        let v = PageView::parse(&f, &bytes).unwrap();
        assert_eq!(v.code(1), Some(&[0xC, 0xD][..]));
        assert_eq!(v.code(2), None);
    }

    #[test]
    fn overflowing_record_is_rejected() {
        let mut f = header().format();
        f.page_size = 16;
        let rec = PageRecord { vectors: vec![0; 8], neighbors: vec![1, 2], codes: vec![0; 4] };
        assert!(matches!(rec.encode(&f, 3), Err(Error::PageOverflow { page: 3, .. })));
    }
}
