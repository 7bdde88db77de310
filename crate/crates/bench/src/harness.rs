//! Multi-threaded query runner and result summaries.
//!
//! Worker threads pull query indices from a shared atomic counter, so the
//! per-query results do not depend on the thread count.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use pageann::{recall_at_k, search, Dataset, Element, Index, Neighbor, QueryStats, Result, SearchParams};
use serde::Serialize;

/// Outcome of one query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    /// Result ids in the caller's original numbering, best first.
    pub ids: Vec<u32>,
    pub dists: Vec<f32>,
    pub stats: QueryStats,
    pub latency: Duration,
}

/// Records in query order plus the wall time of the whole run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub records: Vec<QueryRecord>,
    pub wall: Duration,
    pub threads: usize,
}

/// Runs every query in `queries` on `threads` workers.
pub fn run_queries<T: Element>(
    index: &Index<T>,
    queries: &Dataset<T>,
    params: &SearchParams,
    threads: usize,
) -> Result<RunResult> {
    let threads = threads.max(1);
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<QueryRecord>>>> = (0..queries.len()).map(|_| Mutex::new(None)).collect();
    let start = Instant::now();
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= queries.len() {
                    break;
                }
                let t0 = Instant::now();
                let out = search(index, queries.row(i as u32), params).map(|out| QueryRecord {
                    ids: out.neighbors.iter().map(|n| index.original_id(n.id)).collect(),
                    dists: out.neighbors.iter().map(|n| n.dist).collect(),
                    stats: out.stats,
                    latency: t0.elapsed(),
                });
                *slots[i].lock().expect("result slot") = Some(out);
            });
        }
    });
    let wall = start.elapsed();
    let records = slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot").expect("every query ran"))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunResult { records, wall, threads })
}

/// One summary row, as written to CSV and JSON.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BenchRow {
    pub label: String,
    pub mode: String,
    pub memory_budget: u64,
    pub cache_pages: usize,
    pub list_size: usize,
    pub beam_width: usize,
    pub k: usize,
    pub threads: usize,
    pub queries: usize,
    pub recall: f64,
    pub mean_latency_ms: f64,
    pub median_latency_ms: f64,
    pub p99_latency_ms: f64,
    pub qps: f64,
    pub mean_ios: f64,
    pub mean_hops: f64,
    pub mean_exact: f64,
    /// Bytes read from storage over the bytes of the distinct uncached
    /// pages each query needed.
    pub read_amplification: f64,
    pub cache_hit_rate: f64,
}

/// Run metadata that the records alone do not carry.
#[derive(Debug, Clone, Default)]
pub struct RowMeta {
    pub label: String,
    pub mode: String,
    pub memory_budget: u64,
    pub cache_pages: usize,
    pub page_size: usize,
}

/// Mean recall@k of the records against ground-truth ids.
pub fn mean_recall(records: &[QueryRecord], truth: &[Vec<u32>], k: usize) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let total: f64 = records.iter().zip(truth).map(|(r, t)| recall_at_k(&r.ids, t, k)).sum();
    total / records.len() as f64
}

/// Value at quantile `q` of already-sorted samples (nearest rank).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn summarize(run: &RunResult, truth: &[Vec<u32>], params: &SearchParams, meta: &RowMeta) -> BenchRow {
    let n = run.records.len().max(1) as f64;
    let mut lat: Vec<f64> = run.records.iter().map(|r| r.latency.as_secs_f64() * 1e3).collect();
    lat.sort_by(f64::total_cmp);
    let sum = |f: fn(&QueryStats) -> f64| run.records.iter().map(|r| f(&r.stats)).sum::<f64>();
    let bytes = sum(|s| s.bytes_read as f64);
    let needed = sum(|s| (s.visited_pages - s.pages_from_cache) as f64) * meta.page_size as f64;
    let visited = sum(|s| s.visited_pages as f64);
    BenchRow {
        label: meta.label.clone(),
        mode: meta.mode.clone(),
        memory_budget: meta.memory_budget,
        cache_pages: meta.cache_pages,
        list_size: params.list_size,
        beam_width: params.beam_width,
        k: params.k,
        threads: run.threads,
        queries: run.records.len(),
        recall: mean_recall(&run.records, truth, params.k),
        mean_latency_ms: lat.iter().sum::<f64>() / n,
        median_latency_ms: quantile(&lat, 0.5),
        p99_latency_ms: quantile(&lat, 0.99),
        qps: run.records.len() as f64 / run.wall.as_secs_f64().max(1e-9),
        mean_ios: sum(|s| s.ios as f64) / n,
        mean_hops: sum(|s| s.hops as f64) / n,
        mean_exact: sum(|s| s.exact_distances as f64) / n,
        read_amplification: if needed > 0.0 { bytes / needed } else { 1.0 },
        cache_hit_rate: if visited > 0.0 { sum(|s| s.pages_from_cache as f64) / visited } else { 0.0 },
    }
}

const CSV_HEADER: &str = "label,mode,memory_budget,cache_pages,list_size,beam_width,k,threads,queries,recall,\
mean_latency_ms,median_latency_ms,p99_latency_ms,qps,mean_ios,mean_hops,mean_exact,read_amplification,cache_hit_rate";

/// Writes rows as CSV with a header line.
pub fn write_csv<W: Write>(mut w: W, rows: &[BenchRow]) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{:.4},{:.4},{:.4},{:.4},{:.2},{:.3},{:.3},{:.2},{:.4},{:.4}",
            r.label,
            r.mode,
            r.memory_budget,
            r.cache_pages,
            r.list_size,
            r.beam_width,
            r.k,
            r.threads,
            r.queries,
            r.recall,
            r.mean_latency_ms,
            r.median_latency_ms,
            r.p99_latency_ms,
            r.qps,
            r.mean_ios,
            r.mean_hops,
            r.mean_exact,
            r.read_amplification,
            r.cache_hit_rate
        )?;
    }
    Ok(())
}

/// Writes rows as one JSON array.
pub fn write_json<W: Write>(w: W, rows: &[BenchRow]) -> std::io::Result<()> {
    serde_json::to_writer_pretty(w, rows).map_err(std::io::Error::other)
}

/// Truth rows as plain ids, truncated to `k`.
pub fn truth_ids(truth: &[Vec<Neighbor>], k: usize) -> Vec<Vec<u32>> {
    truth.iter().map(|r| r.iter().take(k).map(|n| n.id).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_quantiles() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(quantile(&v, 0.5), 50.0);
        assert_eq!(quantile(&v, 0.99), 99.0);
        assert_eq!(quantile(&v, 1.0), 100.0);
        assert_eq!(quantile(&[7.0], 0.99), 7.0);
    }

    #[test]
    fn csv_has_one_line_per_row() {
        let row = BenchRow {
            label: "x".into(),
            mode: "page".into(),
            memory_budget: 0,
            cache_pages: 0,
            list_size: 10,
            beam_width: 5,
            k: 10,
            threads: 1,
            queries: 1,
            recall: 1.0,
            mean_latency_ms: 1.0,
            median_latency_ms: 1.0,
            p99_latency_ms: 1.0,
            qps: 1.0,
            mean_ios: 1.0,
            mean_hops: 1.0,
            mean_exact: 1.0,
            read_amplification: 1.0,
            cache_hit_rate: 0.0,
        };
        let mut out = Vec::new();
        write_csv(&mut out, &[row.clone(), row]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(text.lines().nth(1).unwrap().split(',').count(), CSV_HEADER.split(',').count());
    }
}
