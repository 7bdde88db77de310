//! Command-line front end: ingest, build, ground truth, benchmark, sweep
//! and page inspection.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pageann::index::read_manifest;
use pageann::{warm_cache, Dataset, ElemKind, Element, Index, IndexBuilder, PageView};
use pageann_bench::harness::{run_queries, summarize, truth_ids, write_csv, write_json, BenchRow, RowMeta};
use pageann_bench::sweep::{memory_sweep, DEFAULT_RATIOS};
use pageann_bench::{ground_truth, ingest, read_ground_truth, synthesize, write_ground_truth, AnyDataset, RunConfig, SynthSpec};

#[derive(Parser)]
#[command(name = "pageann", version, about = "Page-based disk ANN index tool")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the shape of a vector file.
    IngestInfo {
        path: PathBuf,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Generate a synthetic byte corpus and query set.
    Synth {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        count: usize,
        #[arg(long, default_value_t = 1_000)]
        nq: usize,
        #[arg(long, default_value_t = 128)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compute exact top-k ground truth.
    Gt {
        #[command(flatten)]
        run: RunArgs,
        /// Output id file (`.ivecs` or `.ibin`); distances go alongside.
        #[arg(long)]
        out: PathBuf,
    },
    /// Build an index directory.
    Build {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run queries against an index and report recall and I/O.
    Bench {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated list sizes; defaults to the configured one.
        #[arg(long, value_delimiter = ',')]
        list_sizes: Vec<usize>,
        #[command(flatten)]
        out: OutputArgs,
        /// Write per-query result ids as CSV.
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Build and benchmark one index per memory ratio.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',')]
        ratios: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        list_sizes: Vec<usize>,
        /// Directory that receives one index per ratio.
        #[arg(long)]
        root: PathBuf,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Decode one page of an index.
    InspectPage {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        page: u32,
        /// Also print the raw bytes.
        #[arg(long)]
        hex: bool,
    },
}

/// Settings that mirror [`RunConfig`] fields. Later sources win:
/// defaults, then `--config`, then `--set`, then the named flags.
#[derive(Args, Default)]
struct RunArgs {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set list_size=80`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    base: Option<PathBuf>,
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    memory_budget: Option<u64>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    list_size: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    beam_width: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    latency_us: Option<u64>,
    #[arg(long)]
    cache_pages: Option<usize>,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        for s in &self.sets {
            let (k, v) = s.split_once('=').with_context(|| format!("--set {s}: expected KEY=VALUE"))?;
            cfg.set(k.trim(), v.trim())?;
        }
        let named: [(&str, Option<String>); 14] = [
            ("base", self.base.as_ref().map(|p| p.display().to_string())),
            ("queries", self.queries.as_ref().map(|p| p.display().to_string())),
            ("truth", self.truth.as_ref().map(|p| p.display().to_string())),
            ("index", self.index.as_ref().map(|p| p.display().to_string())),
            ("limit", self.limit.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("memory_budget", self.memory_budget.map(|v| v.to_string())),
            ("mode", self.mode.clone()),
            ("list_size", self.list_size.map(|v| v.to_string())),
            ("k", self.k.map(|v| v.to_string())),
            ("beam_width", self.beam_width.map(|v| v.to_string())),
            ("threads", self.threads.map(|v| v.to_string())),
            ("latency_us", self.latency_us.map(|v| v.to_string())),
            ("cache_pages", self.cache_pages.map(|v| v.to_string())),
        ];
        for (k, v) in named {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        Ok(cfg)
    }
}

fn need<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref().with_context(|| format!("missing --{what}"))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().cmd {
        Cmd::IngestInfo { path, limit } => ingest_info(&path, limit),
        Cmd::Synth { base, queries, count, nq, dim, seed } => {
            let (b, q) = synthesize(&SynthSpec { count, queries: nq, dim, seed, ..Default::default() });
            ingest::write_dataset(&base, &b)?;
            ingest::write_dataset(&queries, &q)?;
            println!("wrote {} base and {} query vectors of dimension {dim}", b.len(), q.len());
            Ok(())
        }
        Cmd::Gt { run, out } => {
            let cfg = run.resolve()?;
            let base = ingest::read_dataset(need(&cfg.base, "base")?, cfg.limit)?;
            let queries = ingest::read_dataset(need(&cfg.queries, "queries")?, None)?;
            let truth = match (&base, &queries) {
                (AnyDataset::U8(b), AnyDataset::U8(q)) => ground_truth(b, q, cfg.k),
                (AnyDataset::I8(b), AnyDataset::I8(q)) => ground_truth(b, q, cfg.k),
                (AnyDataset::F32(b), AnyDataset::F32(q)) => ground_truth(b, q, cfg.k),
                _ => bail!("base and query element kinds differ"),
            };
            write_ground_truth(&out, &truth)?;
            println!("wrote top-{} for {} queries to {}", cfg.k, truth.len(), out.display());
            Ok(())
        }
        Cmd::Build { run } => {
            let cfg = run.resolve()?;
            match ingest::read_dataset(need(&cfg.base, "base")?, cfg.limit)? {
                AnyDataset::U8(ds) => build(&ds, &cfg),
                AnyDataset::I8(ds) => build(&ds, &cfg),
                AnyDataset::F32(ds) => build(&ds, &cfg),
            }
        }
        Cmd::Bench { run, list_sizes, out, results } => {
            let cfg = run.resolve()?;
            let dir = need(&cfg.index, "index")?;
            let rows = match index_kind(dir)? {
                ElemKind::U8 => bench::<u8>(&cfg, &list_sizes, results.as_deref())?,
                ElemKind::I8 => bench::<i8>(&cfg, &list_sizes, results.as_deref())?,
                ElemKind::F32 => bench::<f32>(&cfg, &list_sizes, results.as_deref())?,
            };
            emit(&rows, &out)
        }
        Cmd::Sweep { run, ratios, list_sizes, root, out } => {
            let cfg = run.resolve()?;
            let ratios = if ratios.is_empty() { DEFAULT_RATIOS.to_vec() } else { ratios };
            let lists = if list_sizes.is_empty() { vec![cfg.list_size] } else { list_sizes };
            let truth = truth_ids(&read_ground_truth(need(&cfg.truth, "truth")?)?, cfg.k);
            let base = ingest::read_dataset(need(&cfg.base, "base")?, cfg.limit)?;
            let queries = ingest::read_dataset(need(&cfg.queries, "queries")?, None)?;
            let rows = match (&base, &queries) {
                (AnyDataset::U8(b), AnyDataset::U8(q)) => memory_sweep(b, q, &truth, &cfg, &ratios, &lists, &root)?,
                (AnyDataset::I8(b), AnyDataset::I8(q)) => memory_sweep(b, q, &truth, &cfg, &ratios, &lists, &root)?,
                (AnyDataset::F32(b), AnyDataset::F32(q)) => memory_sweep(b, q, &truth, &cfg, &ratios, &lists, &root)?,
                _ => bail!("base and query element kinds differ"),
            };
            emit(&rows, &out)
        }
        Cmd::InspectPage { index, page, hex } => inspect_page(&index, page, hex),
    }
}

fn ingest_info(path: &Path, limit: Option<usize>) -> Result<()> {
    let format = ingest::VectorFormat::from_path(path)?;
    if format.component() == ingest::Component::I32 {
        let rows = ingest::read_ids(path)?;
        println!("format {format:?}: {} rows of {} ids", rows.len(), rows.first().map_or(0, Vec::len));
        return Ok(());
    }
    let ds = ingest::read_dataset(path, limit)?;
    println!("format {format:?}: {} vectors, dimension {}, element {}", ds.len(), ds.dim(), ds.kind());
    let (lo, hi) = match &ds {
        AnyDataset::U8(d) => range(d),
        AnyDataset::I8(d) => range(d),
        AnyDataset::F32(d) => range(d),
    };
    println!("component range [{lo}, {hi}]");
    Ok(())
}

fn range<T: Element>(ds: &Dataset<T>) -> (f32, f32) {
    ds.as_slice()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), v| (lo.min(v.as_f32()), hi.max(v.as_f32())))
}

fn build<T: Element>(ds: &Dataset<T>, cfg: &RunConfig) -> Result<()> {
    let dir = need(&cfg.index, "index")?;
    let report = IndexBuilder::new(ds, cfg.build_config()).build(dir)?;
    println!(
        "built {} pages of {} vectors ({}), routing {}, {} bytes in memory",
        report.page_count,
        report.plan.vectors_per_page,
        report.plan.regime.name(),
        if report.routing_enabled { "on" } else { "off" },
        report.routing_bytes + report.memory_code_bytes
    );
    for (stage, t) in &report.stage_times {
        println!("  {stage:<12} {:>10.2?}", t);
    }
    Ok(())
}

fn index_kind(dir: &Path) -> Result<ElemKind> {
    let m = read_manifest(dir).with_context(|| format!("reading manifest in {}", dir.display()))?;
    let name = m.get("elem").context("manifest has no elem entry")?;
    [ElemKind::U8, ElemKind::I8, ElemKind::F32]
        .into_iter()
        .find(|k| k.name() == name)
        .with_context(|| format!("unknown element kind {name}"))
}

fn bench<T: Element>(cfg: &RunConfig, list_sizes: &[usize], results: Option<&Path>) -> Result<Vec<BenchRow>> {
    let dir = need(&cfg.index, "index")?;
    let mut index = Index::<T>::open(dir, &cfg.io_options())?;
    let queries = ingest::read_dataset_as::<T>(need(&cfg.queries, "queries")?, None)?;
    let truth = truth_ids(&read_ground_truth(need(&cfg.truth, "truth")?)?, cfg.k);
    if truth.len() < queries.len() {
        bail!("{} truth rows for {} queries", truth.len(), queries.len());
    }
    let lists = if list_sizes.is_empty() { vec![cfg.list_size] } else { list_sizes.to_vec() };
    let manifest = read_manifest(dir)?;
    let mut rows = Vec::new();
    for l in lists {
        let params = pageann::SearchParams { list_size: l, ..cfg.search_params() };
        if cfg.cache_pages > 0 {
            index.set_cache(warm_cache(&index, &queries, cfg.cache_pages, &params)?);
        }
        let run = run_queries(&index, &queries, &params, cfg.threads)?;
        let meta = RowMeta {
            label: format!("L={l}"),
            mode: manifest.get("mode").cloned().unwrap_or_default(),
            memory_budget: manifest.get("memory_budget").and_then(|v| v.parse().ok()).unwrap_or(0),
            cache_pages: cfg.cache_pages,
            page_size: index.header().page_size as usize,
        };
        let row = summarize(&run, &truth, &params, &meta);
        println!(
            "L={l:<4} recall@{} {:.4}  ios {:.2}  hops {:.2}  mean {:.3} ms  p99 {:.3} ms  qps {:.1}",
            params.k, row.recall, row.mean_ios, row.mean_hops, row.mean_latency_ms, row.p99_latency_ms, row.qps
        );
        if let Some(path) = results {
            let mut text = String::new();
            for (i, r) in run.records.iter().enumerate() {
                let ids: Vec<String> = r.ids.iter().map(u32::to_string).collect();
                text.push_str(&format!("{l},{i},{}\n", ids.join(" ")));
            }
            std::fs::write(path, text)?;
        }
        rows.push(row);
    }
    Ok(rows)
}

fn emit(rows: &[BenchRow], out: &OutputArgs) -> Result<()> {
    if let Some(p) = &out.csv {
        write_csv(BufWriter::new(File::create(p)?), rows)?;
    }
    if let Some(p) = &out.json {
        write_json(BufWriter::new(File::create(p)?), rows)?;
    }
    Ok(())
}

fn inspect_page(dir: &Path, page: u32, hex: bool) -> Result<()> {
    let kind = index_kind(dir)?;
    let io = pageann::IoOptions { direct: false, io_threads: 0, latency: None };
    // The page layout does not depend on the element type beyond its size,
    // so a byte view is enough for everything except the vector values.
    let (header, format, buf) = match kind {
        ElemKind::U8 => read_page::<u8>(dir, page, &io)?,
        ElemKind::I8 => read_page::<i8>(dir, page, &io)?,
        ElemKind::F32 => read_page::<f32>(dir, page, &io)?,
    };
    let view = PageView::parse(&format, &buf)?;
    println!("page {page} of {} ({} bytes)", header.page_count, header.page_size);
    let members: Vec<u32> = header.page_members(page).collect();
    println!("vectors {}: ids {:?}", view.vec_count(), members);
    println!("neighbors {}: {:?}", view.nbr_count(), view.neighbors().collect::<Vec<_>>());
    println!("on-page codes {} of {} bytes each", view.code_count(), format.code_bytes);
    if hex {
        for (i, line) in buf.chunks(32).enumerate() {
            let hexed: Vec<String> = line.iter().map(|b| format!("{b:02x}")).collect();
            println!("{:06x}  {}", i * 32, hexed.join(" "));
        }
    }
    Ok(())
}

fn read_page<T: Element>(
    dir: &Path,
    page: u32,
    io: &pageann::IoOptions,
) -> Result<(pageann::IndexHeader, pageann::PageFormat, Vec<u8>)> {
    let index = Index::<T>::open(dir, io)?;
    if page >= index.header().page_count {
        bail!("page {page} out of range (index has {})", index.header().page_count);
    }
    let buf = index.reader().read_uncounted(page)?;
    Ok((index.header().clone(), *index.format(), buf.to_vec()))
}
