//! Product quantization: per-chunk k-means codebooks with 256 centroids,
//! one-byte codes and asymmetric (uncompressed query) distance tables.

use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{ByteReader, ByteWriter};
use crate::dataset::{Dataset, Distance};
use crate::element::Element;
use crate::error::{Error, Result};

pub const CENTROIDS: usize = 256;
const MAX_ITERS: usize = 25;
const CODEBOOK_MAGIC: &[u8; 4] = b"PGCB";
const CODES_MAGIC: &[u8; 4] = b"PGCA";

#[derive(Debug, Clone, PartialEq)]
pub struct Quantizer {
    dim: usize,
    chunks: usize,
    sub_dim: usize,
    /// `chunks x 256 x sub_dim`, chunk-major.
    codebooks: Vec<f32>,
}

impl Quantizer {
    /// Trains one codebook per chunk with k-means++ seeding and at most 25
    /// Lloyd iterations over a seeded sample of `sample` vectors.
    ///
    /// Dimensions are zero-padded up to a multiple of `chunks`. A sample
    /// with fewer than 256 distinct sub-vectors yields duplicate centroids
    /// and a warning.
    pub fn train<T: Element>(ds: &Dataset<T>, chunks: usize, sample: usize, seed: u64) -> Result<Self> {
        if chunks == 0 || chunks > ds.dim() {
            return Err(Error::InvalidParameter(format!(
                "chunk count {chunks} must be in 1..={}",
                ds.dim()
            )));
        }
        if sample < CENTROIDS && ds.len() >= CENTROIDS {
            return Err(Error::InvalidParameter(format!(
                "training sample {sample} is smaller than {CENTROIDS}"
            )));
        }
        let sub_dim = ds.dim().div_ceil(chunks);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<usize> = if sample >= ds.len() {
            (0..ds.len()).collect()
        } else {
            let mut ids = index::sample(&mut rng, ds.len(), sample).into_vec();
            ids.sort_unstable();
            ids
        };

        let mut codebooks = Vec::with_capacity(chunks * CENTROIDS * sub_dim);
        let mut points = vec![0f32; ids.len() * sub_dim];
        for chunk in 0..chunks {
            for (p, &id) in points.chunks_exact_mut(sub_dim).zip(&ids) {
                let row = ds.row(id as u32);
                for (d, slot) in p.iter_mut().enumerate() {
                    let src = chunk * sub_dim + d;
                    *slot = if src < row.len() { row[src].as_f32() } else { 0.0 };
                }
            }
            let (centroids, short) = kmeans(&points, sub_dim, &mut rng);
            if short {
                log::warn!(
                    "chunk {chunk}: fewer than {CENTROIDS} distinct training points, duplicate centroids"
                );
            }
            codebooks.extend_from_slice(&centroids);
        }
        Ok(Self {
            dim: ds.dim(),
            chunks,
            sub_dim,
            codebooks,
        })
    }

    /// Builds a quantizer from explicit centroids laid out chunk-major.
    pub fn from_codebooks(dim: usize, chunks: usize, codebooks: Vec<f32>) -> Result<Self> {
        if chunks == 0 || chunks > dim {
            return Err(Error::InvalidParameter("bad chunk count".into()));
        }
        let sub_dim = dim.div_ceil(chunks);
        if codebooks.len() != chunks * CENTROIDS * sub_dim {
            return Err(Error::InvalidParameter(format!(
                "expected {} centroid values, got {}",
                chunks * CENTROIDS * sub_dim,
                codebooks.len()
            )));
        }
        Ok(Self {
            dim,
            chunks,
            sub_dim,
            codebooks,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of chunks M, which is also the code size in bytes.
    pub fn chunks(&self) -> usize {
        self.chunks
    }

    pub fn code_size(&self) -> usize {
        self.chunks
    }

    pub fn sub_dim(&self) -> usize {
        self.sub_dim
    }

    pub fn codebooks(&self) -> &[f32] {
        &self.codebooks
    }

    fn centroid(&self, chunk: usize, j: usize) -> &[f32] {
        let start = (chunk * CENTROIDS + j) * self.sub_dim;
        &self.codebooks[start..start + self.sub_dim]
    }

    fn padded<T: Element>(&self, v: &[T]) -> Vec<f32> {
        assert_eq!(v.len(), self.dim, "dimension mismatch in quantizer");
        let mut out = vec![0f32; self.chunks * self.sub_dim];
        for (o, x) in out.iter_mut().zip(v) {
            *o = x.as_f32();
        }
        out
    }

    /// Nearest centroid per chunk; ties go to the lowest index.
    pub fn encode_into<T: Element>(&self, v: &[T], out: &mut [u8]) {
        let padded = self.padded(v);
        for (chunk, slot) in out.iter_mut().enumerate().take(self.chunks) {
            let sub = &padded[chunk * self.sub_dim..(chunk + 1) * self.sub_dim];
            *slot = nearest(sub, &self.codebooks[chunk * CENTROIDS * self.sub_dim..], self.sub_dim) as u8;
        }
    }

    pub fn encode<T: Element>(&self, v: &[T]) -> Vec<u8> {
        let mut out = vec![0u8; self.chunks];
        self.encode_into(v, &mut out);
        out
    }

    /// Reconstruction of a code (first `dim` components).
    pub fn decode(&self, code: &[u8]) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.chunks * self.sub_dim);
        for (chunk, &j) in code.iter().enumerate() {
            out.extend_from_slice(self.centroid(chunk, j as usize));
        }
        out.truncate(self.dim);
        out
    }

    /// Per-chunk squared distances from the query slices to every centroid.
    pub fn build_lut<T: Element>(&self, q: &[T]) -> DistanceTable {
        let padded = self.padded(q);
        let mut table = Vec::with_capacity(self.chunks * CENTROIDS);
        for chunk in 0..self.chunks {
            let sub = &padded[chunk * self.sub_dim..(chunk + 1) * self.sub_dim];
            for j in 0..CENTROIDS {
                table.push(sq_l2(sub, self.centroid(chunk, j)));
            }
        }
        DistanceTable {
            chunks: self.chunks,
            table,
        }
    }

    /// Mean squared reconstruction error over a dataset.
    pub fn mse<T: Element>(&self, ds: &Dataset<T>) -> f64 {
        let mut total = 0f64;
        for row in ds.rows() {
            let rec = self.decode(&self.encode(row));
            total += row
                .iter()
                .zip(&rec)
                .map(|(x, r)| {
                    let d = (x.as_f32() - r) as f64;
                    d * d
                })
                .sum::<f64>();
        }
        total / ds.len() as f64
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_header(CODEBOOK_MAGIC);
        w.u32(self.chunks as u32)
            .u32(self.dim as u32)
            .u32(CENTROIDS as u32)
            .f32s(&self.codebooks);
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "codebook file");
        r.expect_header(CODEBOOK_MAGIC)?;
        let chunks = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let k = r.u32()? as usize;
        if k != CENTROIDS || chunks == 0 || chunks > dim {
            return Err(Error::Corrupt("codebook file: bad shape".into()));
        }
        let sub_dim = dim.div_ceil(chunks);
        let codebooks = r.f32s(chunks * CENTROIDS * sub_dim)?;
        r.finish()?;
        Self::from_codebooks(dim, chunks, codebooks)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Query-specific lookup table: `chunks x 256` squared distances.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    chunks: usize,
    table: Vec<f32>,
}

impl DistanceTable {
    #[inline]
    pub fn distance(&self, code: &[u8]) -> Distance {
        debug_assert_eq!(code.len(), self.chunks);
        code.iter()
            .enumerate()
            .map(|(chunk, &c)| self.table[chunk * CENTROIDS + c as usize])
            .sum()
    }
}

/// Asymmetric distance between the query behind `lut` and a stored code.
#[inline]
pub fn estimated_distance(lut: &DistanceTable, code: &[u8]) -> Distance {
    lut.distance(code)
}

#[inline]
fn sq_l2(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f32], centroids: &[f32], sub_dim: usize) -> usize {
    let mut best = 0;
    let mut best_d = f32::INFINITY;
    for j in 0..CENTROIDS {
        let d = sq_l2(point, &centroids[j * sub_dim..(j + 1) * sub_dim]);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// k-means with k = 256. Returns the centroids and whether seeding ran out
/// of distinct points.
fn kmeans(points: &[f32], sub_dim: usize, rng: &mut ChaCha8Rng) -> (Vec<f32>, bool) {
    let n = points.len() / sub_dim;
    let point = |i: usize| &points[i * sub_dim..(i + 1) * sub_dim];
    let mut centroids = Vec::with_capacity(CENTROIDS * sub_dim);
    let mut short = false;

    // k-means++ seeding
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(point(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_l2(point(i), point(first)) as f64).collect();
    for _ in 1..CENTROIDS {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                chosen = Some(i);
                if acc > target {
                    break;
                }
            }
            chosen.expect("positive total weight")
        } else {
            short = true;
            rng.random_range(0..n)
        };
        centroids.extend_from_slice(point(pick));
        let c = point(pick);
        for (i, w) in d2.iter_mut().enumerate() {
            let d = sq_l2(point(i), c) as f64;
            if d < *w {
                *w = d;
            }
        }
    }

    let mut assign = vec![usize::MAX; n];
    for _ in 0..MAX_ITERS {
        let mut changed = false;
        for (i, a) in assign.iter_mut().enumerate() {
            let j = nearest(point(i), &centroids, sub_dim);
            if *a != j {
                *a = j;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![0f64; CENTROIDS * sub_dim];
        let mut counts = vec![0usize; CENTROIDS];
        for (i, &a) in assign.iter().enumerate() {
            counts[a] += 1;
            for (s, &x) in sums[a * sub_dim..(a + 1) * sub_dim].iter_mut().zip(point(i)) {
                *s += x as f64;
            }
        }
        for j in 0..CENTROIDS {
            // empty clusters keep their previous centroid
            if counts[j] == 0 {
                continue;
            }
            for d in 0..sub_dim {
                centroids[j * sub_dim + d] = (sums[j * sub_dim + d] / counts[j] as f64) as f32;
            }
        }
    }
    (centroids, short)
}

/// Codes for a whole dataset, `count x chunks` bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeArray {
    chunks: usize,
    codes: Vec<u8>,
}

impl CodeArray {
    pub fn encode_dataset<T: Element>(qz: &Quantizer, ds: &Dataset<T>) -> Self {
        let mut codes = vec![0u8; ds.len() * qz.chunks];
        for (row, out) in ds.rows().zip(codes.chunks_exact_mut(qz.chunks)) {
            qz.encode_into(row, out);
        }
        Self {
            chunks: qz.chunks,
            codes,
        }
    }

    pub fn from_raw(chunks: usize, codes: Vec<u8>) -> Result<Self> {
        if chunks == 0 || !codes.len().is_multiple_of(chunks) {
            return Err(Error::InvalidParameter("code buffer is not a whole number of codes".into()));
        }
        Ok(Self { chunks, codes })
    }

    pub fn len(&self) -> usize {
        self.codes.len() / self.chunks
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn chunks(&self) -> usize {
        self.chunks
    }

    #[inline]
    pub fn get(&self, i: usize) -> &[u8] {
        &self.codes[i * self.chunks..(i + 1) * self.chunks]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_header(CODES_MAGIC);
        w.u32(self.len() as u32).u32(self.chunks as u32).bytes(&self.codes);
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "code file");
        r.expect_header(CODES_MAGIC)?;
        let count = r.u32()? as usize;
        let chunks = r.u32()? as usize;
        if chunks == 0 {
            return Err(Error::Corrupt("code file: zero chunks".into()));
        }
        let codes = r.take(count * chunks)?.to_vec();
        r.finish()?;
        Ok(Self { chunks, codes })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
