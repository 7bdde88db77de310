#![allow(dead_code)]

use pageann::{brute_force_knn, recall_at_k, Dataset, Index, SearchParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Byte vectors with low intrinsic dimension: a Gaussian mixture in an
/// 8-dimensional latent space, mapped linearly to `dim` components with a
/// little isotropic noise.
pub fn clustered_u8(n: usize, dim: usize, clusters: usize, seed: u64) -> Dataset<u8> {
    clustered_with_queries(n, 0, dim, clusters, seed).0
}

/// Base and query sets drawn from the same distribution.
pub fn clustered_with_queries(n: usize, nq: usize, dim: usize, clusters: usize, seed: u64) -> (Dataset<u8>, Dataset<u8>) {
    const LATENT: usize = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0f32, 1.0).unwrap();
    let centers: Vec<Vec<f32>> = (0..clusters)
        .map(|_| (0..LATENT).map(|_| 3.0 * unit.sample(&mut rng)).collect())
        .collect();
    let map: Vec<f32> = (0..dim * LATENT).map(|_| 4.0 * unit.sample(&mut rng)).collect();
    let mut data = Vec::with_capacity((n + nq) * dim);
    let mut z = [0f32; LATENT];
    for _ in 0..n + nq {
        let c = &centers[rng.random_range(0..clusters)];
        for (zi, ci) in z.iter_mut().zip(c) {
            *zi = ci + unit.sample(&mut rng);
        }
        for row in map.chunks_exact(LATENT) {
            let x: f32 = 128.0 + row.iter().zip(&z).map(|(a, b)| a * b).sum::<f32>() + 2.0 * unit.sample(&mut rng);
            data.push(x.round().clamp(0.0, 255.0) as u8);
        }
    }
    let queries = data.split_off(n * dim);
    let queries = if nq == 0 { Dataset::new(dim, vec![0; dim]).unwrap() } else { Dataset::new(dim, queries).unwrap() };
    (Dataset::new(dim, data).unwrap(), queries)
}

/// Mean recall@k of `index` over `queries`, measured in original ids.
pub fn mean_recall(index: &Index<u8>, base: &Dataset<u8>, queries: &Dataset<u8>, p: &SearchParams) -> f64 {
    let mut total = 0.0;
    for q in queries.rows() {
        let out = pageann::search(index, q, p).unwrap();
        let got: Vec<u32> = out.neighbors.iter().map(|n| index.original_id(n.id)).collect();
        let truth: Vec<u32> = brute_force_knn(base, q, p.k).iter().map(|n| n.id).collect();
        total += recall_at_k(&got, &truth, p.k);
    }
    total / queries.len() as f64
}
