use pageann::{
    build_routing, disk::reassign_ids, disk::write_index, CodeArray, Dataset, ElemKind, IdRemap, IndexHeader,
    PageFormat, PageRecord, Quantizer, RoutingTable,
};
use proptest::prelude::*;

fn format_strategy() -> impl Strategy<Value = PageFormat> {
    (1usize..16, 1usize..4, 0usize..12, 1usize..8).prop_flat_map(|(dim, elem, nbrs, code_bytes)| {
        (0..=nbrs, 1usize..6).prop_map(move |(disk_codes, vecs)| {
            let vector_bytes = dim * [1, 1, 4][elem - 1];
            let need = 4 + vecs * vector_bytes + nbrs * 4 + disk_codes * code_bytes;
            PageFormat {
                page_size: need.next_multiple_of(64),
                vector_bytes,
                max_vectors: vecs,
                max_nbrs: nbrs,
                disk_codes,
                code_bytes,
            }
        })
    })
}

fn record_strategy() -> impl Strategy<Value = (PageFormat, PageRecord)> {
    format_strategy().prop_flat_map(|f| {
        (1..=f.max_vectors, 0..=f.max_nbrs).prop_flat_map(move |(v, n)| {
            (
                proptest::collection::vec(any::<u8>(), v * f.vector_bytes),
                proptest::collection::vec(any::<u32>(), n),
                proptest::collection::vec(any::<u8>(), n.min(f.disk_codes) * f.code_bytes),
            )
                .prop_map(move |(vectors, neighbors, codes)| (f, PageRecord { vectors, neighbors, codes }))
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn page_records_round_trip((f, rec) in record_strategy()) {
        let bytes = rec.encode(&f, 0).unwrap();
        prop_assert_eq!(bytes.len(), f.page_size);
        prop_assert_eq!(PageRecord::decode(&f, &bytes).unwrap(), rec);
    }

    #[test]
    fn index_files_round_trip(seed in any::<u64>(), count in 1usize..40, per_page in 1usize..6) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let dim = rng.random_range(1..8);
        let pages = count.div_ceil(per_page);
        let mut header = IndexHeader {
            count: count as u32, dim: dim as u32, elem: ElemKind::F32, page_size: 0,
            vectors_per_page: per_page as u32, max_nbrs: 6, disk_codes: rng.random_range(0..=6),
            disk_code_bytes: 3, page_count: pages as u32, entry_page: 0, medoid: 0,
            codebook_files: vec!["disk.codebook".into()],
        };
        header.page_size = (4 + per_page * dim * 4 + 6 * 4 + 6 * 3 + 120).next_multiple_of(64) as u32;
        let f = header.format();
        let records: Vec<PageRecord> = (0..pages).map(|p| {
            let v = per_page.min(count - p * per_page);
            let n = rng.random_range(0..=6);
            PageRecord {
                vectors: (0..v * f.vector_bytes).map(|_| rng.random()).collect(),
                neighbors: (0..n).map(|_| rng.random()).collect(),
                codes: (0..n.min(f.disk_codes) * 3).map(|_| rng.random()).collect(),
            }
        }).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.pages");
        write_index(&path, &header, &records).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        prop_assert_eq!(bytes.len() as u64, header.file_len());
        let ps = header.page_size as usize;
        prop_assert_eq!(&IndexHeader::from_page(&bytes[..ps]).unwrap(), &header);
        for (p, rec) in records.iter().enumerate() {
            let slot = &bytes[(p + 1) * ps..(p + 2) * ps];
            prop_assert_eq!(&PageRecord::decode(&f, slot).unwrap(), rec);
        }
    }

    #[test]
    fn codebooks_and_codes_round_trip(seed in any::<u64>(), chunks in 1usize..5, sub in 1usize..4) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let dim = chunks * sub;
        let books: Vec<f32> = (0..chunks * 256 * sub).map(|_| rng.random_range(-1e3..1e3)).collect();
        let qz = Quantizer::from_codebooks(dim, chunks, books).unwrap();
        prop_assert_eq!(&Quantizer::from_bytes(&qz.to_bytes()).unwrap(), &qz);
        let codes = CodeArray::from_raw(chunks, (0..chunks * 17).map(|_| rng.random()).collect()).unwrap();
        prop_assert_eq!(&CodeArray::from_bytes(&codes.to_bytes()).unwrap(), &codes);
    }

    #[test]
    fn routing_tables_round_trip(seed in any::<u64>(), bits in 1usize..=32, n in 5usize..80) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let ds = Dataset::new(6, (0..n * 6).map(|_| rng.random::<u8>()).collect()).unwrap();
        let rt = build_routing(&ds, 0.5, bits, seed).unwrap();
        prop_assert_eq!(&RoutingTable::from_bytes(&rt.to_bytes()).unwrap(), &rt);
    }

    #[test]
    fn remaps_round_trip(seed in any::<u64>(), n in 1usize..100, per_page in 1usize..9) {
        use rand::{seq::SliceRandom, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut ids: Vec<u32> = (0..n as u32).collect();
        ids.shuffle(&mut rng);
        let pages: Vec<Vec<u32>> = ids.chunks(per_page).map(<[u32]>::to_vec).collect();
        let remap = reassign_ids(&pages, per_page).unwrap();
        for old in 0..n as u32 {
            prop_assert_eq!(remap.old_id(remap.new_id(old)), Some(old));
        }
        prop_assert_eq!(&IdRemap::from_bytes(&remap.to_bytes()).unwrap(), &remap);
    }
}

#[test]
fn truncated_or_resized_index_is_rejected() {
    use pageann::{BuildConfig, GraphParams, Index, IndexBuilder, IoOptions};
    let ds = Dataset::new(4, (0..400u32).map(|i| (i * 37 % 251) as u8).collect()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = BuildConfig {
        page_size: 512,
        graph: GraphParams { max_degree: 4, build_list: 8, ..Default::default() },
        disk_chunks: 2,
        mem_chunks: 2,
        ..Default::default()
    };
    IndexBuilder::new(&ds, cfg).build(dir.path()).unwrap();
    let path = dir.path().join("index.pages");
    let io = IoOptions { direct: false, io_threads: 0, latency: None };
    assert!(Index::<u8>::open(dir.path(), &io).is_ok());
    assert!(Index::<i8>::open(dir.path(), &io).is_err());
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 512]).unwrap();
    assert!(Index::<u8>::open(dir.path(), &io).is_err());
    let mut extended = bytes.clone();
    extended.extend_from_slice(&[0; 512]);
    std::fs::write(&path, &extended).unwrap();
    assert!(Index::<u8>::open(dir.path(), &io).is_err());
}
