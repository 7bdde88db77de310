//! End-to-end index construction and the opened, queryable index.
//!
//! An index directory holds the page file plus sidecars:
//!
//! | file             | contents                                   |
//! |------------------|--------------------------------------------|
//! | `index.pages`    | header slot and one slot per page node     |
//! | `remap.bin`      | original id to page-derived id pairs       |
//! | `disk.codebook`  | quantizer for on-page codes                |
//! | `mem.codebook`   | quantizer for in-memory codes, if separate |
//! | `memcodes.bin`   | in-memory code table                       |
//! | `routing.bin`    | routing table, if it fits the budget       |
//! | `graph.bin`      | the vector-level graph                     |
//! | `manifest.txt`   | `key=value` build summary                  |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::marker::PhantomData;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::dataset::{Dataset, PageId, VectorId};
use crate::disk::{
    reassign_ids, write_index, DelayedDevice, FileDevice, IdRemap, IndexHeader, PageCache, PageDevice, PageFormat,
    PageReader, PageRecord,
};
use crate::element::Element;
use crate::error::{Error, Result};
use crate::graph::{build_base_graph, GraphParams, VectorGraph};
use crate::layout::{plan_pages, PagePlan, PlanInput, Regime};
use crate::memcodes::MemoryCodes;
use crate::page_graph::{aggregate_neighbors, arrange_neighbors, attach_disk_codes, group_vectors, select_resident};
use crate::pq::{CodeArray, Quantizer};
use crate::routing::{build_routing, RoutingParams, RoutingTable};

pub const INDEX_FILE: &str = "index.pages";
pub const REMAP_FILE: &str = "remap.bin";
pub const DISK_CODEBOOK_FILE: &str = "disk.codebook";
pub const MEM_CODEBOOK_FILE: &str = "mem.codebook";
pub const MEMCODES_FILE: &str = "memcodes.bin";
pub const ROUTING_FILE: &str = "routing.bin";
pub const GRAPH_FILE: &str = "graph.bin";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// How vectors are laid out on pages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayoutMode {
    /// Many vectors per page with aggregated neighbor lists.
    Page,
    /// One vector per page with its own neighbor list and all neighbor
    /// codes on the page.
    VectorBaseline,
}

impl LayoutMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Page => "page",
            Self::VectorBaseline => "vector-baseline",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "page" => Some(Self::Page),
            "vector-baseline" | "vector" => Some(Self::VectorBaseline),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BuildConfig {
    pub page_size: usize,
    pub graph: GraphParams,
    /// Chunks of the quantizer whose codes are stored on pages.
    pub disk_chunks: usize,
    /// Chunks of the quantizer whose codes are kept in memory. Equal to
    /// `disk_chunks` means one shared quantizer.
    pub mem_chunks: usize,
    /// Vectors sampled for quantizer training.
    pub pq_sample: usize,
    /// Hop limit when gathering page candidates.
    pub hops: usize,
    /// Neighbor budget per page; `None` means twice the graph degree.
    pub max_nbrs: Option<usize>,
    /// Memory for the routing table and in-memory codes, in bytes.
    pub memory_budget: u64,
    pub routing: RoutingParams,
    pub use_routing: bool,
    pub mode: LayoutMode,
    pub seed: u64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            page_size: 4096,
            graph: GraphParams::default(),
            disk_chunks: 32,
            mem_chunks: 32,
            pq_sample: 2048,
            hops: 2,
            max_nbrs: None,
            memory_budget: 0,
            routing: RoutingParams::default(),
            use_routing: true,
            mode: LayoutMode::Page,
            seed: 0,
        }
    }
}

impl BuildConfig {
    pub fn neighbor_budget(&self) -> usize {
        match self.mode {
            LayoutMode::Page => self.max_nbrs.unwrap_or(2 * self.graph.max_degree),
            LayoutMode::VectorBaseline => self.graph.max_degree,
        }
    }
}

/// Summary of a finished build.
#[derive(Debug, Clone)]
pub struct BuildReport {
    pub plan: PagePlan,
    pub page_count: usize,
    pub routing_enabled: bool,
    pub routing_bytes: u64,
    pub memory_code_bytes: u64,
    /// Neighbor references dropped to keep each code in a single place.
    pub dropped_refs: usize,
    /// Wall time per stage, in build order.
    pub stage_times: Vec<(&'static str, Duration)>,
}

/// Builds an index directory from a dataset.
pub struct IndexBuilder<'a, T: Element> {
    ds: &'a Dataset<T>,
    cfg: BuildConfig,
    graph: Option<VectorGraph>,
    disk_qz: Option<Quantizer>,
    mem_qz: Option<Quantizer>,
}

fn stage<R>(name: &'static str, times: &mut Vec<(&'static str, Duration)>, f: impl FnOnce() -> Result<R>) -> Result<R> {
    let t = Instant::now();
    let out = f().map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{name}: {io}"))),
        Error::InvalidParameter(m) => Error::InvalidParameter(format!("{name}: {m}")),
        other => other,
    })?;
    log::info!("{name} finished in {:.2?}", t.elapsed());
    times.push((name, t.elapsed()));
    Ok(out)
}

impl<'a, T: Element> IndexBuilder<'a, T> {
    pub fn new(ds: &'a Dataset<T>, cfg: BuildConfig) -> Self {
        Self { ds, cfg, graph: None, disk_qz: None, mem_qz: None }
    }

    /// Reuses an already built vector graph.
    pub fn with_graph(mut self, g: VectorGraph) -> Self {
        self.graph = Some(g);
        self
    }

    /// Reuses already trained quantizers.
    pub fn with_quantizers(mut self, disk: Quantizer, mem: Option<Quantizer>) -> Self {
        self.disk_qz = Some(disk);
        self.mem_qz = mem;
        self
    }

    pub fn build(self, dir: &Path) -> Result<BuildReport> {
        let Self { ds, cfg, graph, disk_qz, mem_qz } = self;
        let mut times = Vec::new();
        fs::create_dir_all(dir)?;
        let count = ds.len();
        let elem = T::KIND;

        let g0 = match graph {
            Some(g) if g.len() == count => g,
            Some(_) => return Err(Error::InvalidParameter("prebuilt graph size differs from dataset".into())),
            None => stage("graph", &mut times, || build_base_graph(ds, &cfg.graph))?,
        };

        let (disk_qz, mem_qz) = stage("compression", &mut times, || {
            let sample = cfg.pq_sample.min(count);
            let disk = match disk_qz {
                Some(q) => q,
                None => Quantizer::train(ds, cfg.disk_chunks, sample, cfg.seed)?,
            };
            let mem = match mem_qz {
                Some(q) => q,
                None if cfg.mem_chunks == disk.chunks() => disk.clone(),
                None => Quantizer::train(ds, cfg.mem_chunks, sample, cfg.seed.wrapping_add(1))?,
            };
            Ok((disk, mem))
        })?;
        let shared_qz = mem_qz == disk_qz;
        let disk_codes = CodeArray::encode_dataset(&disk_qz, ds);
        let mem_codes = if shared_qz { disk_codes.clone() } else { CodeArray::encode_dataset(&mem_qz, ds) };

        let mut routing = if cfg.use_routing {
            stage("routing", &mut times, || match build_routing(ds, cfg.routing.sample_rate, cfg.routing.bits, cfg.routing.seed) {
                Ok(rt) => Ok(Some(rt)),
                Err(Error::EmptySample) => Ok(None),
                Err(e) => Err(e),
            })?
        } else {
            None
        };
        let routing_bytes = routing.as_ref().map_or(0, RoutingTable::memory_bytes);
        if routing_bytes > cfg.memory_budget {
            log::info!("routing table needs {routing_bytes} bytes, budget is {}; routing disabled", cfg.memory_budget);
            routing = None;
        }
        let routing_bytes = routing.as_ref().map_or(0, RoutingTable::memory_bytes);
        let code_budget = cfg.memory_budget - routing_bytes;

        let max_nbrs = cfg.neighbor_budget();
        let plan = match cfg.mode {
            LayoutMode::Page => plan_pages(
                code_budget,
                &PlanInput {
                    count,
                    dim: ds.dim(),
                    elem_size: elem.size(),
                    page_size: cfg.page_size,
                    max_nbrs,
                    disk_code_bytes: disk_qz.code_size(),
                    mem_code_bytes: mem_qz.code_size(),
                },
            )?,
            LayoutMode::VectorBaseline => {
                PagePlan::new(cfg.page_size, max_nbrs, disk_qz.code_size(), max_nbrs, ds.dim(), elem.size())?
                    .with_vectors_per_page(1)?
            }
        };
        let n = plan.vectors_per_page;
        log::info!(
            "layout: {n} vectors per page, {} on-page codes, regime {}",
            plan.disk_codes,
            plan.regime.name()
        );

        let (pages, drafts, resident, dropped) = stage("grouping", &mut times, || {
            let pages = group_vectors(&g0, ds, n, cfg.hops)?;
            let mut drafts = aggregate_neighbors(&pages, &g0, ds, max_nbrs);
            let resident = select_resident(&drafts, &plan, count);
            let dropped = if plan.regime == Regime::Hybrid { arrange_neighbors(&mut drafts, &plan, &resident) } else { 0 };
            Ok((pages, drafts, resident, dropped))
        })?;
        if dropped > 0 {
            log::info!("{dropped} neighbor references dropped to keep single-copy codes");
        }
        if pages[..pages.len() - 1].iter().any(|p| p.len() != n) {
            return Err(Error::InvalidParameter("grouping produced a short page before the last".into()));
        }

        let report = stage("write", &mut times, || {
            let page_codes = attach_disk_codes(&drafts, &disk_codes, &plan, &resident)?;
            let remap = reassign_ids(&pages, n)?;
            let mut records = Vec::with_capacity(drafts.len());
            for (d, codes) in drafts.iter().zip(page_codes) {
                let mut vectors = Vec::with_capacity(d.members.len() * ds.dim() * elem.size());
                for &m in &d.members {
                    T::write_le(ds.row(m), &mut vectors);
                }
                records.push(PageRecord {
                    vectors,
                    neighbors: d.external.iter().map(|&u| remap.new_id(u)).collect(),
                    codes,
                });
            }
            let medoid = remap.new_id(g0.entry_point());
            let mut header = IndexHeader::from_plan(&plan, count, elem, medoid / n as u32, medoid);
            header.codebook_files.push(DISK_CODEBOOK_FILE.into());
            if !shared_qz {
                header.codebook_files.push(MEM_CODEBOOK_FILE.into());
            }
            write_index(&dir.join(INDEX_FILE), &header, &records)?;

            let memory = match plan.regime {
                Regime::CodesOnDisk => MemoryCodes::None,
                Regime::CodesInMemory => {
                    let chunks = mem_codes.chunks();
                    let mut raw = vec![0u8; count * chunks];
                    for old in 0..count {
                        let new = remap.new_id(old as VectorId) as usize;
                        raw[new * chunks..(new + 1) * chunks].copy_from_slice(mem_codes.get(old));
                    }
                    MemoryCodes::Dense(CodeArray::from_raw(chunks, raw)?)
                }
                Regime::Hybrid => {
                    let mut pairs: Vec<(VectorId, usize)> = (0..count)
                        .filter(|&old| resident[old])
                        .map(|old| (remap.new_id(old as VectorId), old))
                        .collect();
                    pairs.sort_unstable();
                    let mut raw = Vec::with_capacity(pairs.len() * mem_codes.chunks());
                    for &(_, old) in &pairs {
                        raw.extend_from_slice(mem_codes.get(old));
                    }
                    MemoryCodes::sparse(
                        pairs.iter().map(|p| p.0).collect(),
                        CodeArray::from_raw(mem_codes.chunks(), raw)?,
                    )?
                }
            };
            memory.write(&dir.join(MEMCODES_FILE))?;
            remap.write(&dir.join(REMAP_FILE))?;
            disk_qz.write(&dir.join(DISK_CODEBOOK_FILE))?;
            if !shared_qz {
                mem_qz.write(&dir.join(MEM_CODEBOOK_FILE))?;
            }
            let routing_path = dir.join(ROUTING_FILE);
            match routing.as_mut() {
                Some(rt) => {
                    rt.remap_ids(|old| remap.new_id(old));
                    rt.write(&routing_path)?;
                }
                None if routing_path.exists() => fs::remove_file(&routing_path)?,
                None => {}
            }
            g0.write(&dir.join(GRAPH_FILE))?;
            Ok(BuildReport {
                plan: plan.clone(),
                page_count: records.len(),
                routing_enabled: routing.is_some(),
                routing_bytes,
                memory_code_bytes: memory.memory_bytes(),
                dropped_refs: dropped,
                stage_times: Vec::new(),
            })
        })?;
        let mut report = report;
        report.stage_times = times;
        write_manifest(&dir.join(MANIFEST_FILE), &cfg, count, ds.dim(), elem.name(), &report)?;
        Ok(report)
    }
}

fn write_manifest(
    path: &Path,
    cfg: &BuildConfig,
    count: usize,
    dim: usize,
    elem: &str,
    r: &BuildReport,
) -> Result<()> {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k}={v}");
    };
    kv("count", count.to_string());
    kv("dim", dim.to_string());
    kv("elem", elem.to_string());
    kv("mode", cfg.mode.name().to_string());
    kv("seed", cfg.seed.to_string());
    kv("page_size", r.plan.page_size.to_string());
    kv("max_degree", cfg.graph.max_degree.to_string());
    kv("build_list", cfg.graph.build_list.to_string());
    kv("alpha", cfg.graph.alpha.to_string());
    kv("hops", cfg.hops.to_string());
    kv("vectors_per_page", r.plan.vectors_per_page.to_string());
    kv("page_count", r.page_count.to_string());
    kv("max_nbrs", r.plan.max_nbrs.to_string());
    kv("disk_codes", r.plan.disk_codes.to_string());
    kv("disk_code_bytes", r.plan.disk_code_bytes.to_string());
    kv("mem_code_bytes", r.plan.mem_code_bytes.to_string());
    kv("regime", r.plan.regime.name().to_string());
    kv("resident_codes", r.plan.resident_codes.to_string());
    kv("memory_budget", cfg.memory_budget.to_string());
    kv("memory_code_bytes", r.memory_code_bytes.to_string());
    kv("routing_enabled", r.routing_enabled.to_string());
    kv("routing_bytes", r.routing_bytes.to_string());
    kv("routing_bits", cfg.routing.bits.to_string());
    kv("routing_sample_rate", cfg.routing.sample_rate.to_string());
    kv("dropped_refs", r.dropped_refs.to_string());
    for (name, t) in &r.stage_times {
        kv(&format!("time_{name}_ms"), format!("{:.3}", t.as_secs_f64() * 1e3));
    }
    fs::write(path, s)?;
    Ok(())
}

/// Parses a `key=value` manifest.
pub fn read_manifest(dir: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_owned(), v.trim().to_owned()))
        .collect())
}

/// How the page file is accessed.
#[derive(Debug, Clone)]
pub struct IoOptions {
    /// Try to bypass the OS page cache.
    pub direct: bool,
    /// Reader threads; 0 reads synchronously on the query thread.
    pub io_threads: usize,
    /// Artificial latency added to every storage read.
    pub latency: Option<Duration>,
}

impl Default for IoOptions {
    fn default() -> Self {
        Self { direct: true, io_threads: 32, latency: None }
    }
}

/// An opened index, shareable across query threads.
pub struct Index<T: Element> {
    dir: PathBuf,
    header: IndexHeader,
    format: PageFormat,
    reader: PageReader,
    disk_qz: Quantizer,
    mem_qz: Option<Quantizer>,
    memory: MemoryCodes,
    routing: Option<RoutingTable>,
    remap: IdRemap,
    cache: PageCache,
    _elem: PhantomData<T>,
}

impl<T: Element> Index<T> {
    pub fn open(dir: &Path, io: &IoOptions) -> Result<Self> {
        let file = FileDevice::open(&dir.join(INDEX_FILE), io.direct)?;
        let file_len = file.len();
        let mut head = vec![0u8; 8 + 4 + 4 * 4];
        file.read_at(0, &mut head).map_err(|_| Error::Corrupt("index file: too short for a header".into()))?;
        let page_size = u32::from_le_bytes([head[24], head[25], head[26], head[27]]) as usize;
        if page_size < head.len() || page_size as u64 > file_len {
            return Err(Error::Corrupt("index file: implausible page size".into()));
        }
        let mut slot = vec![0u8; page_size];
        file.read_at(0, &mut slot)?;
        let header = IndexHeader::from_page(&slot)?;
        if header.elem != T::KIND {
            return Err(Error::InvalidParameter(format!(
                "index stores {} vectors, opened as {}",
                header.elem,
                T::KIND
            )));
        }
        if file_len != header.file_len() {
            return Err(Error::Corrupt(format!(
                "index file is {file_len} bytes, header implies {}",
                header.file_len()
            )));
        }
        let device: Arc<dyn PageDevice> = match io.latency {
            Some(lat) => Arc::new(DelayedDevice::new(file, lat)),
            None => Arc::new(file),
        };
        let reader = PageReader::new(device, page_size, header.page_count, io.io_threads);

        let disk_qz = Quantizer::read(&dir.join(DISK_CODEBOOK_FILE))?;
        let mem_path = dir.join(MEM_CODEBOOK_FILE);
        let mem_qz = if header.codebook_files.iter().any(|f| f == MEM_CODEBOOK_FILE) {
            Some(Quantizer::read(&mem_path)?)
        } else {
            None
        };
        if disk_qz.dim() != header.dim as usize || disk_qz.code_size() != header.disk_code_bytes as usize {
            return Err(Error::Corrupt("disk codebook does not match the index".into()));
        }
        let memory = MemoryCodes::read(&dir.join(MEMCODES_FILE))?;
        let routing_path = dir.join(ROUTING_FILE);
        let routing = if routing_path.exists() { Some(RoutingTable::read(&routing_path)?) } else { None };
        let remap = IdRemap::read(&dir.join(REMAP_FILE))?;
        if remap.len() != header.count as usize {
            return Err(Error::Corrupt("remap size differs from the index".into()));
        }
        Ok(Self {
            dir: dir.to_owned(),
            format: header.format(),
            header,
            reader,
            disk_qz,
            mem_qz,
            memory,
            routing,
            remap,
            cache: PageCache::empty(),
            _elem: PhantomData,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn header(&self) -> &IndexHeader {
        &self.header
    }

    pub fn format(&self) -> &PageFormat {
        &self.format
    }

    pub fn reader(&self) -> &PageReader {
        &self.reader
    }

    pub fn disk_quantizer(&self) -> &Quantizer {
        &self.disk_qz
    }

    /// Quantizer of the in-memory codes when it differs from the disk one.
    pub fn mem_quantizer(&self) -> Option<&Quantizer> {
        self.mem_qz.as_ref()
    }

    pub fn memory_codes(&self) -> &MemoryCodes {
        &self.memory
    }

    pub fn routing(&self) -> Option<&RoutingTable> {
        self.routing.as_ref()
    }

    pub fn remap(&self) -> &IdRemap {
        &self.remap
    }

    pub fn cache(&self) -> &PageCache {
        &self.cache
    }

    pub fn set_cache(&mut self, cache: PageCache) {
        self.cache = cache;
    }

    pub fn count(&self) -> usize {
        self.header.count as usize
    }

    pub fn dim(&self) -> usize {
        self.header.dim as usize
    }

    #[inline]
    pub fn page_of(&self, id: VectorId) -> PageId {
        self.header.page_of(id)
    }

    /// Members of the page holding the medoid; used when routing yields
    /// nothing.
    pub fn fallback_entry(&self) -> Vec<VectorId> {
        self.header.page_members(self.header.entry_page).collect()
    }

    /// Original id for a page-derived id.
    pub fn original_id(&self, id: VectorId) -> VectorId {
        self.remap.old_id(id).expect("id produced by this index")
    }

    /// Bytes of resident in-memory structures, excluding the page cache.
    pub fn memory_bytes(&self) -> u64 {
        self.memory.memory_bytes() + self.routing.as_ref().map_or(0, RoutingTable::memory_bytes)
    }
}
