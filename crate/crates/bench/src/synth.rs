//! Seeded synthetic corpora with low intrinsic dimension.
//!
//! Points are drawn from a Gaussian mixture in a small latent space and
//! mapped linearly into the full dimension, then offset, perturbed with
//! isotropic noise and rounded into bytes. Queries come from the same
//! distribution.

use pageann::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub count: usize,
    pub queries: usize,
    pub dim: usize,
    pub latent_dim: usize,
    pub clusters: usize,
    /// Spread of cluster centers relative to the within-cluster spread.
    pub center_spread: f32,
    /// Scale of the latent-to-output map.
    pub map_scale: f32,
    /// Standard deviation of the per-component noise.
    pub noise: f32,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            count: 10_000,
            queries: 1_000,
            dim: 128,
            latent_dim: 12,
            clusters: 32,
            center_spread: 2.5,
            map_scale: 3.0,
            noise: 2.0,
            seed: 0,
        }
    }
}

/// Generates `(base, queries)` byte datasets.
pub fn synthesize(spec: &SynthSpec) -> (Dataset<u8>, Dataset<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit = Normal::new(0.0f32, 1.0).expect("unit normal");
    let k = spec.latent_dim;
    let centers: Vec<Vec<f32>> = (0..spec.clusters.max(1))
        .map(|_| (0..k).map(|_| spec.center_spread * unit.sample(&mut rng)).collect())
        .collect();
    let map: Vec<f32> = (0..spec.dim * k).map(|_| spec.map_scale * unit.sample(&mut rng)).collect();
    let mut z = vec![0f32; k];
    let mut draw = |n: usize, rng: &mut ChaCha8Rng| {
        let mut data = Vec::with_capacity(n * spec.dim);
        for _ in 0..n {
            let c = &centers[rng.random_range(0..centers.len())];
            for (zi, ci) in z.iter_mut().zip(c) {
                *zi = ci + unit.sample(rng);
            }
            for row in map.chunks_exact(k) {
                let x = 128.0 + row.iter().zip(&z).map(|(a, b)| a * b).sum::<f32>() + spec.noise * unit.sample(rng);
                data.push(x.round().clamp(0.0, 255.0) as u8);
            }
        }
        Dataset::new(spec.dim, data).expect("non-empty synthetic set")
    };
    let base = draw(spec.count, &mut rng);
    let queries = draw(spec.queries.max(1), &mut rng);
    (base, queries)
}
