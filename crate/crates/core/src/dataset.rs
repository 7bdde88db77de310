//! Dataset container, vector identity and exact distance kernels.

use std::cmp::Ordering;

use crate::element::{ElemKind, Element};
use crate::error::{Error, Result};

/// Ordinal of a vector. After page layout the ordinal encodes the page and
/// slot: `id = page * vectors_per_page + slot`.
pub type VectorId = u32;

/// Ordinal of a data page in the index file.
pub type PageId = u32;

/// Squared Euclidean distance, used as the comparison key everywhere.
pub type Distance = f32;

/// An id paired with its distance to some query. Ordering is by distance,
/// then by id, so sorted lists are reproducible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: VectorId,
    pub dist: Distance,
}

impl Neighbor {
    pub fn new(id: VectorId, dist: Distance) -> Self {
        Self { id, dist }
    }
}

impl Eq for Neighbor {}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then_with(|| self.id.cmp(&other.id))
    }
}

/// Dense row-major vectors of a fixed dimension. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Element> Dataset<T> {
    pub fn new(dim: usize, data: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        if data.is_empty() {
            return Err(Error::DatasetTooSmall("dataset has no vectors".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::Corrupt(format!(
                "{} values is not a whole number of {dim}-dimensional vectors",
                data.len()
            )));
        }
        if data.len() / dim > u32::MAX as usize {
            return Err(Error::InvalidParameter("more than 2^32 vectors".into()));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> ElemKind {
        T::KIND
    }

    /// Size of the raw payload in bytes.
    pub fn byte_len(&self) -> usize {
        self.data.len() * T::KIND.size()
    }

    #[inline]
    pub fn row(&self, id: VectorId) -> &[T] {
        let start = id as usize * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Exact distance between two stored vectors.
    #[inline]
    pub fn distance(&self, a: VectorId, b: VectorId) -> Distance {
        T::squared_l2(self.row(a), self.row(b))
    }

    /// Per-dimension mean, accumulated in `f64`.
    pub fn mean(&self) -> Vec<f64> {
        let mut acc = vec![0f64; self.dim];
        for row in self.rows() {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v.as_f32() as f64;
            }
        }
        let n = self.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    /// The stored vector closest to the dataset mean (ties to the lower id).
    pub fn medoid(&self) -> VectorId {
        let mean: Vec<f32> = self.mean().into_iter().map(|m| m as f32).collect();
        let mut best = Neighbor::new(0, f32::INFINITY);
        for (id, row) in self.rows().enumerate() {
            let d: f32 = row
                .iter()
                .zip(&mean)
                .map(|(v, m)| {
                    let d = v.as_f32() - m;
                    d * d
                })
                .sum();
            let cand = Neighbor::new(id as VectorId, d);
            if cand < best {
                best = cand;
            }
        }
        best.id
    }
}

/// Squared Euclidean distance between two vectors of equal dimension.
///
/// Panics when the dimensions differ.
pub fn exact_distance<T: Element>(a: &[T], b: &[T]) -> Distance {
    assert_eq!(a.len(), b.len(), "dimension mismatch in exact_distance");
    T::squared_l2(a, b)
}

/// Exact k nearest neighbors by linear scan, ascending by (distance, id).
pub fn brute_force_knn<T: Element>(ds: &Dataset<T>, query: &[T], k: usize) -> Vec<Neighbor> {
    if k == 0 {
        return Vec::new();
    }
    let k = k.min(ds.len());
    let mut all: Vec<Neighbor> = ds
        .rows()
        .enumerate()
        .map(|(id, row)| Neighbor::new(id as VectorId, exact_distance(row, query)))
        .collect();
    all.select_nth_unstable(k - 1);
    all.truncate(k);
    all.sort_unstable();
    all
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_distance_examples() {
        assert_eq!(exact_distance(&[3u8, 4], &[3, 4]), 0.0);
        assert_eq!(exact_distance(&[0u8, 0], &[3, 4]), 25.0);
        assert_eq!(exact_distance(&[1f32, 2., 3.], &[4., 6., 3.]), 25.0);
        assert_eq!(exact_distance(&[-1i8, 2], &[2, -2]), 25.0);
    }

    #[test]
    #[should_panic(expected = "dimension mismatch")]
    fn exact_distance_rejects_mismatched_dims() {
        exact_distance(&[1u8, 2], &[1u8]);
    }

    #[test]
    fn knn_scans_all_points() {
        let ds = Dataset::new(1, vec![0u8, 5, 9]).unwrap();
        let got = brute_force_knn(&ds, &[4], 2);
        assert_eq!(got, vec![Neighbor::new(1, 1.0), Neighbor::new(0, 16.0)]);

        let all = brute_force_knn(&ds, &[4], 3);
        assert_eq!(all.iter().map(|n| n.id).collect::<Vec<_>>(), vec![1, 0, 2]);
        assert!(brute_force_knn(&ds, &[4], 0).is_empty());
    }

    #[test]
    fn knn_breaks_ties_by_id() {
        let mut data = vec![50u8; 10 * 2];
        for (i, v) in data.iter_mut().enumerate() {
            *v = (i * 7 % 200) as u8;
        }
        data[2 * 2..2 * 2 + 2].copy_from_slice(&[9, 9]);
        data[7 * 2..7 * 2 + 2].copy_from_slice(&[9, 9]);
        let ds = Dataset::new(2, data).unwrap();
        let got = brute_force_knn(&ds, &[9, 9], 2);
        assert_eq!(got, vec![Neighbor::new(2, 0.0), Neighbor::new(7, 0.0)]);
    }

    #[test]
    fn dataset_invariants() {
        assert!(Dataset::<u8>::new(0, vec![1]).is_err());
        assert!(Dataset::<u8>::new(2, vec![]).is_err());
        assert!(Dataset::<u8>::new(2, vec![1, 2, 3]).is_err());
        let ds = Dataset::new(3, vec![1f32; 12]).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.byte_len(), 48);
    }

    #[test]
    fn medoid_is_closest_to_mean() {
        let ds = Dataset::new(1, vec![0u8, 4, 5, 100]).unwrap();
        // mean = 27.25
        assert_eq!(ds.medoid(), 2);
    }
}
