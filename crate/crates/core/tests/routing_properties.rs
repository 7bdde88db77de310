use pageann::{build_routing, Dataset, RoutingTable};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Linear scan over every bucket: codes by Hamming distance, then code.
fn scan(rt: &RoutingTable, code: u32, radius: usize) -> Vec<u32> {
    let mut hits: Vec<(u32, u32)> = rt
        .buckets()
        .keys()
        .map(|&c| ((c ^ code).count_ones(), c))
        .filter(|&(d, _)| d as usize <= radius)
        .collect();
    hits.sort_unstable();
    hits.iter().flat_map(|(_, c)| rt.buckets()[c].iter().copied()).collect()
}

fn table(n: usize, dim: usize, bits: usize, seed: u64) -> (Dataset<u8>, RoutingTable) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ds = Dataset::new(dim, (0..n * dim).map(|_| rng.random()).collect()).unwrap();
    let rt = build_routing(&ds, 1.0, bits, seed).unwrap();
    (ds, rt)
}

#[test]
fn route_matches_bucket_scan_on_ten_thousand_samples() {
    let (_, rt) = table(10_000, 16, 16, 1);
    assert_eq!(rt.sample_count(), 10_000);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let q: Vec<u8> = (0..16).map(|_| rng.random()).collect();
        for r in 0..=2 {
            assert_eq!(rt.route(&q, r), scan(&rt, rt.code(&q), r));
        }
    }
}

#[test]
fn hamming_distance_tracks_angle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dim = 32;
    let ds = Dataset::new(dim, (0..2000 * dim).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap();
    let rt = build_routing(&ds, 1.0, 32, 4).unwrap();
    // Pairs at controlled angles: b = cos(t) a + sin(t) a_perp.
    let mut buckets = [(0.0f64, 0usize); 6];
    for i in 0..1200 {
        let a: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut p: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dot: f32 = a.iter().zip(&p).map(|(x, y)| x * y).sum::<f32>() / a.iter().map(|x| x * x).sum::<f32>();
        p.iter_mut().zip(&a).for_each(|(y, x)| *y -= dot * x);
        let scale = (a.iter().map(|x| x * x).sum::<f32>() / p.iter().map(|x| x * x).sum::<f32>()).sqrt();
        let slot = i % 6;
        let t = (slot as f32 + 0.5) * std::f32::consts::PI / 6.0;
        let b: Vec<f32> = a.iter().zip(&p).map(|(x, y)| t.cos() * x + t.sin() * scale * y).collect();
        buckets[slot].0 += (rt.code(&a) ^ rt.code(&b)).count_ones() as f64;
        buckets[slot].1 += 1;
    }
    let means: Vec<f64> = buckets.iter().map(|(s, n)| s / *n as f64).collect();
    assert!(means.windows(2).all(|w| w[0] < w[1]), "{means:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn radii_are_nested(q in proptest::collection::vec(any::<u8>(), 8)) {
        let rt = shared_table();
        let mut prev: Vec<u32> = Vec::new();
        for r in 0..=4 {
            let cur = rt.route(&q, r);
            prop_assert!(cur.starts_with(&prev));
            prev = cur;
        }
    }
}

fn shared_table() -> &'static RoutingTable {
    static TABLE: std::sync::OnceLock<RoutingTable> = std::sync::OnceLock::new();
    TABLE.get_or_init(|| table(3000, 8, 12, 5).1)
}
