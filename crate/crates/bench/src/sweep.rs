//! Memory-budget sweeps that share one graph and one set of quantizers.

use std::path::Path;

use pageann::{
    build_base_graph, warm_cache, BuildReport, Dataset, Element, Index, IndexBuilder, Quantizer, Result,
};

use crate::config::RunConfig;
use crate::harness::{run_queries, summarize, BenchRow, RowMeta};

/// Default memory ratios: budget as a fraction of the raw dataset size.
pub const DEFAULT_RATIOS: [f64; 6] = [0.0, 0.01, 0.02, 0.05, 0.1, 0.25];

/// Budget in bytes for a ratio of the dataset's raw size.
pub fn budget_for_ratio<T: Element>(ds: &Dataset<T>, ratio: f64) -> u64 {
    (ds.byte_len() as f64 * ratio).floor() as u64
}

/// Graph and quantizers trained once and reused for every sweep point.
pub struct SharedArtifacts {
    pub graph: pageann::VectorGraph,
    pub disk: Quantizer,
    pub mem: Option<Quantizer>,
}

impl SharedArtifacts {
    pub fn train<T: Element>(ds: &Dataset<T>, cfg: &RunConfig) -> Result<Self> {
        let b = cfg.build_config();
        let graph = build_base_graph(ds, &b.graph)?;
        let sample = b.pq_sample.min(ds.len());
        let disk = Quantizer::train(ds, b.disk_chunks, sample, b.seed)?;
        let mem = (b.mem_chunks != b.disk_chunks)
            .then(|| Quantizer::train(ds, b.mem_chunks, sample, b.seed.wrapping_add(1)))
            .transpose()?;
        Ok(Self { graph, disk, mem })
    }

    /// Builds an index into `dir` with the shared graph and quantizers.
    pub fn build<T: Element>(&self, ds: &Dataset<T>, cfg: &RunConfig, dir: &Path) -> Result<BuildReport> {
        IndexBuilder::new(ds, cfg.build_config())
            .with_graph(self.graph.clone())
            .with_quantizers(self.disk.clone(), self.mem.clone())
            .build(dir)
    }
}

/// Builds one index per ratio under `root` and benchmarks each at every
/// list size.
#[allow(clippy::too_many_arguments)]
pub fn memory_sweep<T: Element>(
    base: &Dataset<T>,
    queries: &Dataset<T>,
    truth: &[Vec<u32>],
    cfg: &RunConfig,
    ratios: &[f64],
    list_sizes: &[usize],
    root: &Path,
) -> Result<Vec<BenchRow>> {
    let shared = SharedArtifacts::train(base, cfg)?;
    let mut rows = Vec::new();
    for &ratio in ratios {
        let mut point = cfg.clone();
        point.memory_budget = budget_for_ratio(base, ratio);
        let dir = root.join(format!("ratio-{ratio}"));
        let report = shared.build(base, &point, &dir)?;
        log::info!(
            "ratio {ratio}: regime {}, {} vectors per page, routing {}",
            report.plan.regime.name(),
            report.plan.vectors_per_page,
            report.routing_enabled
        );
        let mut index = Index::<T>::open(&dir, &point.io_options())?;
        for &l in list_sizes {
            point.list_size = l;
            let params = point.search_params();
            if point.cache_pages > 0 {
                let cache = warm_cache(&index, queries, point.cache_pages, &params)?;
                index.set_cache(cache);
            }
            let run = run_queries(&index, queries, &params, point.threads)?;
            let meta = RowMeta {
                label: format!("ratio={ratio}"),
                mode: point.mode.name().into(),
                memory_budget: point.memory_budget,
                cache_pages: point.cache_pages,
                page_size: point.page_size,
            };
            rows.push(summarize(&run, truth, &params, &meta));
        }
    }
    Ok(rows)
}
