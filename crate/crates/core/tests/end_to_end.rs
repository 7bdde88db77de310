mod common;

use common::{clustered_u8, mean_recall};
use pageann::{
    brute_force_knn, search, warm_cache, BuildConfig, GraphParams, Index, IndexBuilder, IoOptions, LayoutMode,
    Regime, SearchParams,
};

fn config(budget: u64) -> BuildConfig {
    BuildConfig {
        graph: GraphParams { max_degree: 16, build_list: 32, ..Default::default() },
        disk_chunks: 8,
        mem_chunks: 8,
        pq_sample: 1000,
        memory_budget: budget,
        routing: pageann::RoutingParams { sample_rate: 0.05, ..Default::default() },
        ..Default::default()
    }
}

fn io() -> IoOptions {
    IoOptions { io_threads: 4, ..Default::default() }
}

#[test]
fn every_regime_reaches_high_recall() {
    let base = clustered_u8(2000, 32, 20, 1);
    let queries = clustered_u8(50, 32, 20, 1);
    let want = [Regime::CodesOnDisk, Regime::Hybrid, Regime::CodesInMemory];
    for (budget, regime) in [0u64, 15_000, 1_000_000].into_iter().zip(want) {
        let dir = tempfile::tempdir().unwrap();
        let report = IndexBuilder::new(&base, config(budget)).build(dir.path()).unwrap();
        assert_eq!(report.plan.regime, regime);
        let index = Index::<u8>::open(dir.path(), &io()).unwrap();
        assert_eq!(index.header().page_count as usize, 2000usize.div_ceil(report.plan.vectors_per_page));
        let p = SearchParams { list_size: 60, ..Default::default() };
        let recall = mean_recall(&index, &base, &queries, &p);
        assert!(recall >= 0.9, "{regime:?}: recall {recall}");
    }
}

#[test]
fn single_page_index_is_exact() {
    let base = clustered_u8(40, 8, 3, 2);
    let queries = clustered_u8(10, 8, 3, 3);
    let dir = tempfile::tempdir().unwrap();
    let cfg = BuildConfig {
        graph: GraphParams { max_degree: 4, build_list: 8, ..Default::default() },
        disk_chunks: 2,
        mem_chunks: 2,
        pq_sample: 40,
        ..Default::default()
    };
    let report = IndexBuilder::new(&base, cfg).build(dir.path()).unwrap();
    assert_eq!(report.page_count, 1);
    let index = Index::<u8>::open(dir.path(), &io()).unwrap();
    for q in queries.rows() {
        let out = search(&index, q, &SearchParams::default()).unwrap();
        assert!(out.stats.ios <= 1);
        let got: Vec<_> = out.neighbors.iter().map(|n| (index.original_id(n.id), n.dist)).collect();
        let want: Vec<_> = brute_force_knn(&base, q, 10).iter().map(|n| (n.id, n.dist)).collect();
        assert_eq!(got, want);
    }
}

#[test]
fn full_cache_removes_all_reads() {
    let base = clustered_u8(1000, 16, 10, 4);
    let queries = clustered_u8(20, 16, 10, 5);
    let dir = tempfile::tempdir().unwrap();
    IndexBuilder::new(&base, config(0)).build(dir.path()).unwrap();
    let mut index = Index::<u8>::open(dir.path(), &io()).unwrap();
    let p = SearchParams::default();
    assert!(warm_cache(&index, &queries, 0, &p).unwrap().is_empty());
    let pages = index.header().page_count as usize;
    let cache = warm_cache(&index, &queries, pages, &p).unwrap();
    assert_eq!(cache.len(), pages);
    index.set_cache(cache);
    for q in queries.rows() {
        let out = search(&index, q, &p).unwrap();
        assert_eq!(out.stats.ios, 0);
        assert_eq!(out.stats.pages_from_cache, out.stats.visited_pages);
    }
}

#[test]
fn rebuild_is_byte_identical() {
    let base = clustered_u8(800, 16, 8, 6);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        IndexBuilder::new(&base, config(4000)).build(d.path()).unwrap();
    }
    for f in ["index.pages", "remap.bin", "disk.codebook", "memcodes.bin", "routing.bin", "graph.bin"] {
        let (x, y) = (std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
        assert!(x == y, "{f} differs");
    }
}

#[test]
fn vector_baseline_places_one_vector_per_page() {
    let base = clustered_u8(500, 16, 5, 7);
    let dir = tempfile::tempdir().unwrap();
    let cfg = BuildConfig { mode: LayoutMode::VectorBaseline, ..config(0) };
    let report = IndexBuilder::new(&base, cfg).build(dir.path()).unwrap();
    assert_eq!(report.plan.vectors_per_page, 1);
    assert_eq!(report.plan.disk_codes, 16);
    assert_eq!(report.page_count, 500);
}
