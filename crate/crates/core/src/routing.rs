//! Random-hyperplane hashing over a sample of vectors, used to pick search
//! entry points close to the query.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::codec::{ByteReader, ByteWriter};
use crate::dataset::{Dataset, VectorId};
use crate::element::Element;
use crate::error::{Error, Result};

const ROUTING_MAGIC: &[u8; 4] = b"PGRT";

/// Construction and lookup settings for the routing table.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingParams {
    /// Hash bits m.
    pub bits: usize,
    /// Hamming radius r used at query time.
    pub radius: usize,
    /// Fraction of vectors sampled into buckets.
    pub sample_rate: f64,
    pub seed: u64,
}

impl Default for RoutingParams {
    fn default() -> Self {
        Self { bits: 16, radius: 2, sample_rate: 0.01, seed: 0 }
    }
}

/// Hash buckets keyed by the sign pattern of `bits` random projections.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingTable {
    bits: usize,
    dim: usize,
    seed: u64,
    /// `bits x dim`, row-major.
    projection: Vec<f32>,
    /// Subtracted from a vector before projecting.
    center: Vec<f32>,
    buckets: BTreeMap<u32, Vec<VectorId>>,
    sample_count: usize,
}

/// Builds a routing table over a seeded sample of `ds`.
///
/// Byte datasets are centered on their mean before projection; float
/// datasets are projected as is.
pub fn build_routing<T: Element>(ds: &Dataset<T>, sample_rate: f64, bits: usize, seed: u64) -> Result<RoutingTable> {
    if !(1..=32).contains(&bits) {
        return Err(Error::InvalidParameter(format!("hash bits must be in 1..=32, got {bits}")));
    }
    if !(sample_rate > 0.0 && sample_rate <= 1.0) {
        return Err(Error::InvalidParameter(format!("sample rate must be in (0, 1], got {sample_rate}")));
    }
    let n = ds.len();
    let take = ((n as f64) * sample_rate).floor() as usize;
    if take == 0 {
        return Err(Error::EmptySample);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = ds.dim();
    let projection: Vec<f32> = (0..bits * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let center = if T::KIND.is_byte() {
        ds.mean().into_iter().map(|m| m as f32).collect()
    } else {
        vec![0.0; dim]
    };
    let mut sample: Vec<usize> = rand::seq::index::sample(&mut rng, n, take).into_vec();
    sample.sort_unstable();

    let mut table = RoutingTable {
        bits,
        dim,
        seed,
        projection,
        center,
        buckets: BTreeMap::new(),
        sample_count: take,
    };
    for id in sample {
        let code = table.code(ds.row(id as VectorId));
        table.buckets.entry(code).or_default().push(id as VectorId);
    }
    Ok(table)
}

/// Ascending masks with exactly `k` of the low `bits` bits set.
fn masks_with_popcount(bits: usize, k: usize) -> impl Iterator<Item = u32> {
    let limit = 1u64 << bits;
    let first = if k == 0 { 0 } else { (1u64 << k) - 1 };
    let mut next = Some(first).filter(|&m| m < limit);
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == 0 {
            None
        } else {
            // Next larger integer with the same popcount.
            let low = cur & cur.wrapping_neg();
            let ripple = cur + low;
            let n = (((ripple ^ cur) >> 2) / low) | ripple;
            Some(n).filter(|&m| m < limit)
        };
        Some(cur as u32)
    })
}

fn binomial(n: usize, k: usize) -> u64 {
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

impl RoutingTable {
    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn buckets(&self) -> &BTreeMap<u32, Vec<VectorId>> {
        &self.buckets
    }

    pub fn center(&self) -> &[f32] {
        &self.center
    }

    /// Hash code of `v`: bit i is set when the i-th projection of the
    /// centered vector is non-negative.
    pub fn code<T: Element>(&self, v: &[T]) -> u32 {
        assert_eq!(v.len(), self.dim, "routing code: dimension mismatch");
        let centered: Vec<f32> = v.iter().zip(&self.center).map(|(x, c)| x.as_f32() - c).collect();
        let mut code = 0u32;
        for (i, row) in self.projection.chunks_exact(self.dim).enumerate() {
            let dot: f32 = row.iter().zip(&centered).map(|(a, b)| a * b).sum();
            if dot >= 0.0 {
                code |= 1 << i;
            }
        }
        code
    }

    /// Sampled ids whose bucket code lies within Hamming distance `radius`
    /// of the query's code, by increasing distance and then by code.
    pub fn route<T: Element>(&self, q: &[T], radius: usize) -> Vec<VectorId> {
        self.route_code(self.code(q), radius)
    }

    pub fn route_code(&self, code: u32, radius: usize) -> Vec<VectorId> {
        let mut out = Vec::new();
        let mut codes = Vec::new();
        for k in 0..=radius.min(self.bits) {
            codes.clear();
            if binomial(self.bits, k) > self.buckets.len() as u64 {
                codes.extend(self.buckets.keys().copied().filter(|c| (c ^ code).count_ones() as usize == k));
            } else {
                codes.extend(masks_with_popcount(self.bits, k).map(|m| m ^ code));
                codes.sort_unstable();
            }
            for c in &codes {
                if let Some(ids) = self.buckets.get(c) {
                    out.extend_from_slice(ids);
                }
            }
        }
        out
    }

    /// Rewrites the sampled ids, e.g. into the page-derived numbering.
    pub fn remap_ids(&mut self, f: impl Fn(VectorId) -> VectorId) {
        for ids in self.buckets.values_mut() {
            for id in ids.iter_mut() {
                *id = f(*id);
            }
        }
    }

    /// Bytes of memory the table occupies: projection and center floats,
    /// one id per sample and a code plus length per bucket.
    pub fn memory_bytes(&self) -> u64 {
        ((self.projection.len() + self.center.len() + self.sample_count + 2 * self.buckets.len()) * 4) as u64
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_header(ROUTING_MAGIC);
        w.u32(self.bits as u32)
            .u32(self.dim as u32)
            .u32(self.sample_count as u32)
            .u64(self.seed)
            .f32s(&self.projection)
            .f32s(&self.center)
            .u32(self.buckets.len() as u32);
        for (&code, ids) in &self.buckets {
            w.u32(code).u32(ids.len() as u32).u32s(ids);
        }
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "routing file");
        r.expect_header(ROUTING_MAGIC)?;
        let bits = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let sample_count = r.u32()? as usize;
        let seed = r.u64()?;
        if !(1..=32).contains(&bits) || dim == 0 {
            return Err(Error::Corrupt("routing file: bad bit count or dimension".into()));
        }
        let projection = r.f32s(bits.checked_mul(dim).ok_or_else(|| Error::Corrupt("routing file: size overflow".into()))?)?;
        let center = r.f32s(dim)?;
        let bucket_count = r.u32()? as usize;
        let mut buckets = BTreeMap::new();
        let mut total = 0;
        for _ in 0..bucket_count {
            let code = r.u32()?;
            let len = r.u32()? as usize;
            let ids = r.u32s(len)?;
            total += len;
            if bits < 32 && code >> bits != 0 || buckets.insert(code, ids).is_some() {
                return Err(Error::Corrupt("routing file: invalid bucket code".into()));
            }
        }
        r.finish()?;
        if total != sample_count {
            return Err(Error::Corrupt("routing file: bucket sizes do not sum to the sample".into()));
        }
        Ok(Self { bits, dim, seed, projection, center, buckets, sample_count })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
