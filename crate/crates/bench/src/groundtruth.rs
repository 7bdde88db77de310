//! Exact k-nearest-neighbor ground truth.

use std::path::{Path, PathBuf};

use pageann::{brute_force_knn, Dataset, Element, Neighbor};

use crate::ingest::{self, Result};

/// Brute-force top-k for every query.
pub fn ground_truth<T: Element>(base: &Dataset<T>, queries: &Dataset<T>, k: usize) -> Vec<Vec<Neighbor>> {
    queries.rows().map(|q| brute_force_knn(base, q, k)).collect()
}

/// Path of the distance file written next to an id file: `gt.ivecs`
/// pairs with `gt.dist.fvecs`, `gt.ibin` with `gt.dist.fbin`.
pub fn distance_path(ids: &Path) -> PathBuf {
    let ext = match ids.extension().and_then(|e| e.to_str()) {
        Some("ibin") => "dist.fbin",
        _ => "dist.fvecs",
    };
    ids.with_extension(ext)
}

/// Writes ids to `path` and distances alongside it.
pub fn write_ground_truth(path: &Path, truth: &[Vec<Neighbor>]) -> Result<()> {
    let ids: Vec<Vec<u32>> = truth.iter().map(|r| r.iter().map(|n| n.id).collect()).collect();
    ingest::write_ids(path, &ids)?;
    let k = ids.first().map_or(0, Vec::len);
    let dists: Vec<f32> = truth.iter().flat_map(|r| r.iter().map(|n| n.dist)).collect();
    ingest::write_dataset(&distance_path(path), &Dataset::new(k, dists)?)
}

/// Reads ids and, if present, distances back into neighbor lists.
pub fn read_ground_truth(path: &Path) -> Result<Vec<Vec<Neighbor>>> {
    let ids = ingest::read_ids(path)?;
    let dist_path = distance_path(path);
    let dists = if dist_path.exists() { Some(ingest::read_dataset_as::<f32>(&dist_path, None)?) } else { None };
    Ok(ids
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &id)| Neighbor::new(id, dists.as_ref().map_or(0.0, |d| d.row(i as u32)[j])))
                .collect()
        })
        .collect())
}
