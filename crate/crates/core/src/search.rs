//! Query execution over an opened [`Index`].
//!
//! Each round picks up to `beam_width` unvisited candidates, reads their
//! pages in one batch, scores every member of an arrived page exactly and
//! every page neighbor by its compressed code. Exact scoring of a round's
//! pages is deferred until the next batch has been submitted, so with
//! pipelining on it runs while those reads are in flight. Pipelining off
//! performs the same work before submitting, so both modes make identical
//! decisions; the early-exit threshold therefore reflects exact distances
//! up to the previous round.

use std::collections::{BinaryHeap, HashSet};
use std::time::{Duration, Instant};

use crate::dataset::{Dataset, Distance, Neighbor, PageId, VectorId};
use crate::disk::{BatchPage, PageCache, PageView};
use crate::element::Element;
use crate::error::{Error, Result};
use crate::index::Index;
use crate::memcodes::MemoryCodes;
use crate::pq::DistanceTable;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchParams {
    /// Candidate set capacity L.
    pub list_size: usize,
    /// Results returned.
    pub k: usize,
    /// Pages per read batch.
    pub beam_width: usize,
    /// Hamming radius for routing.
    pub radius: usize,
    /// Also stop once no unvisited candidate's estimate beats the k-th
    /// exact distance. Off means the loop runs until every entry of the
    /// bounded candidate set has been visited.
    pub early_exit: bool,
    /// Overlap exact scoring with the next batch's reads.
    pub pipeline: bool,
    pub use_routing: bool,
    pub use_cache: bool,
    /// Record per-round state in [`SearchOutput::trace`].
    pub trace: bool,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            list_size: 100,
            k: 10,
            beam_width: 5,
            radius: 2,
            early_exit: false,
            pipeline: true,
            use_routing: true,
            use_cache: true,
            trace: false,
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.list_size {
            return Err(Error::InvalidParameter(format!(
                "k must be in 1..=L, got k={} L={}",
                self.k, self.list_size
            )));
        }
        if self.beam_width == 0 {
            return Err(Error::InvalidParameter("beam width must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-query counters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryStats {
    /// Pages read from storage.
    pub ios: usize,
    /// Batch rounds.
    pub hops: usize,
    pub pages_from_cache: usize,
    pub exact_distances: usize,
    pub estimated_distances: usize,
    pub bytes_read: u64,
    /// Distinct pages visited, cached or not.
    pub visited_pages: usize,
    pub elapsed: Duration,
}

/// State after one round, recorded when tracing.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    pub pages: Vec<PageId>,
    /// Candidate set after the round: id, estimate, visited flag.
    pub candidates: Vec<(VectorId, Distance, bool)>,
    /// Early-exit threshold in force when the next batch was chosen.
    pub threshold: Option<Distance>,
}

#[derive(Debug, Clone)]
pub struct SearchOutput {
    /// Up to k results in page-derived ids, ascending by (distance, id).
    pub neighbors: Vec<Neighbor>,
    pub stats: QueryStats,
    /// Pages in visit order.
    pub visited: Vec<PageId>,
    pub trace: Vec<RoundTrace>,
}

/// Where a neighbor's compressed vector was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodeSource {
    Page,
    Memory,
}

/// Code for the neighbor in `slot` of `view`: the on-page code when the
/// slot carries one, else the in-memory table.
pub fn estimated_source<'a>(
    view: &PageView<'a>,
    slot: usize,
    memory: &'a MemoryCodes,
) -> Option<(&'a [u8], CodeSource)> {
    match view.code(slot) {
        Some(code) => Some((code, CodeSource::Page)),
        None => memory.get(view.neighbor(slot)).map(|c| (c, CodeSource::Memory)),
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    id: VectorId,
    dist: Distance,
    visited: bool,
}

impl Candidate {
    fn key(&self) -> Neighbor {
        Neighbor::new(self.id, self.dist)
    }
}

/// Bounded candidate list sorted by (estimate, id).
struct CandidateSet {
    items: Vec<Candidate>,
    capacity: usize,
}

impl CandidateSet {
    fn new(capacity: usize) -> Self {
        Self { items: Vec::with_capacity(capacity + 1), capacity }
    }

    /// Inserts unless full and the newcomer is not strictly better than
    /// the worst entry, which is then evicted.
    fn insert(&mut self, id: VectorId, dist: Distance) {
        let key = Neighbor::new(id, dist);
        if self.items.len() >= self.capacity {
            match self.items.last() {
                Some(worst) if key < worst.key() => {
                    self.items.pop();
                }
                _ => return,
            }
        }
        let pos = self.items.partition_point(|c| c.key() < key);
        self.items.insert(pos, Candidate { id, dist, visited: false });
    }
}

struct Query<'a, T: Element> {
    index: &'a Index<T>,
    q: &'a [T],
    params: &'a SearchParams,
    cache: Option<&'a PageCache>,
    candidates: CandidateSet,
    seen: HashSet<VectorId>,
    visited_pages: HashSet<PageId>,
    visit_order: Vec<PageId>,
    results: Vec<Neighbor>,
    top: BinaryHeap<Neighbor>,
    stats: QueryStats,
    scratch: Vec<T>,
    trace: Vec<RoundTrace>,
}

impl<'a, T: Element> Query<'a, T> {
    fn threshold(&self) -> Option<Distance> {
        (self.params.early_exit && self.top.len() >= self.params.k).then(|| self.top.peek().expect("non-empty").dist)
    }

    /// Chooses the next batch of pages from the candidate set.
    fn select(&mut self) -> Vec<PageId> {
        let theta = self.threshold();
        let mut pages = Vec::with_capacity(self.params.beam_width);
        for c in self.candidates.items.iter_mut() {
            if pages.len() >= self.params.beam_width {
                break;
            }
            if c.visited {
                continue;
            }
            if theta.is_some_and(|t| c.dist > t) {
                break;
            }
            c.visited = true;
            let page = self.index.page_of(c.id);
            if !self.visited_pages.contains(&page) && !pages.contains(&page) {
                pages.push(page);
            }
        }
        pages
    }

    fn consider(&mut self, id: VectorId, dist: Distance) {
        self.seen.insert(id);
        self.stats.estimated_distances += 1;
        self.candidates.insert(id, dist);
    }

    /// Adds estimates for every unseen neighbor of an arrived page.
    fn expand(&mut self, page: &BatchPage, disk_lut: &DistanceTable, mem_lut: &DistanceTable) -> Result<()> {
        let view = PageView::parse(self.index.format(), &page.buf)?;
        let memory = self.index.memory_codes();
        for j in 0..view.nbr_count() {
            let u = view.neighbor(j);
            if self.seen.contains(&u) || self.visited_pages.contains(&self.index.page_of(u)) {
                continue;
            }
            let dist = match estimated_source(&view, j, memory) {
                Some((code, CodeSource::Page)) => disk_lut.distance(code),
                Some((code, CodeSource::Memory)) => mem_lut.distance(code),
                None => return Err(Error::MissingCode(u)),
            };
            self.consider(u, dist);
        }
        Ok(())
    }

    /// Exact distances for every member of the given pages.
    fn score(&mut self, pages: &[BatchPage]) -> Result<()> {
        let n = self.index.header().vectors_per_page;
        for page in pages {
            let view = PageView::parse(self.index.format(), &page.buf)?;
            for slot in 0..view.vec_count() {
                view.read_vector(slot, &mut self.scratch);
                let nb = Neighbor::new(page.page * n + slot as u32, T::squared_l2(self.q, &self.scratch));
                self.stats.exact_distances += 1;
                self.results.push(nb);
                if self.top.len() < self.params.k {
                    self.top.push(nb);
                } else if nb < *self.top.peek().expect("non-empty") {
                    self.top.pop();
                    self.top.push(nb);
                }
            }
        }
        Ok(())
    }
}

/// Runs one query and returns its top-k neighbors in page-derived ids.
pub fn search<T: Element>(index: &Index<T>, q: &[T], params: &SearchParams) -> Result<SearchOutput> {
    let start = Instant::now();
    params.validate()?;
    if q.len() != index.dim() {
        return Err(Error::DimensionMismatch { expected: index.dim(), actual: q.len() });
    }
    let disk_lut = index.disk_quantizer().build_lut(q);
    let mem_lut = index.mem_quantizer().map(|qz| qz.build_lut(q));
    let mem_lut = mem_lut.as_ref().unwrap_or(&disk_lut);
    let cache = (params.use_cache && !index.cache().is_empty()).then(|| index.cache());

    let mut st = Query {
        index,
        q,
        params,
        cache,
        candidates: CandidateSet::new(params.list_size),
        seen: HashSet::new(),
        visited_pages: HashSet::new(),
        visit_order: Vec::new(),
        results: Vec::new(),
        top: BinaryHeap::with_capacity(params.k + 1),
        stats: QueryStats::default(),
        scratch: vec![T::default(); index.dim()],
        trace: Vec::new(),
    };

    // Entry points: routed ids, or the medoid's page when routing is off
    // or finds nothing. Entries without an in-memory code can only seed
    // the first batch directly by page.
    let routed = match (params.use_routing, index.routing()) {
        (true, Some(rt)) => rt.route(q, params.radius),
        _ => Vec::new(),
    };
    let entries = if routed.is_empty() { index.fallback_entry() } else { routed };
    let mut pending: Vec<PageId> = Vec::new();
    for id in entries {
        if st.seen.contains(&id) {
            continue;
        }
        match index.memory_codes().get(id) {
            Some(code) => st.consider(id, mem_lut.distance(code)),
            None => {
                let page = index.page_of(id);
                if !pending.contains(&page) {
                    pending.push(page);
                }
            }
        }
    }
    let mut batch = if st.candidates.items.is_empty() {
        pending.truncate(params.beam_width);
        pending
    } else {
        st.select()
    };

    let mut unscored: Vec<BatchPage> = Vec::new();
    while !batch.is_empty() {
        for &p in &batch {
            st.visited_pages.insert(p);
            st.visit_order.push(p);
        }
        st.stats.hops += 1;
        if !params.pipeline {
            st.score(&unscored)?;
        }
        let mut inflight = index.reader().submit(&batch, st.cache)?;
        if params.pipeline {
            st.score(&unscored)?;
        }
        let arrived = inflight.finish()?;
        st.stats.ios += inflight.ios();
        st.stats.pages_from_cache += inflight.cache_hits();
        st.stats.bytes_read += inflight.bytes_read();
        for page in &arrived {
            st.expand(page, &disk_lut, mem_lut)?;
        }
        unscored = arrived;
        let threshold = st.threshold();
        batch = st.select();
        if params.trace {
            let candidates = st.candidates.items.iter().map(|c| (c.id, c.dist, c.visited)).collect();
            let pages = inflight.pages().to_vec();
            st.trace.push(RoundTrace { pages, candidates, threshold });
        }
    }
    st.score(&unscored)?;

    let mut neighbors = std::mem::take(&mut st.results);
    neighbors.sort_unstable();
    neighbors.truncate(params.k);
    st.stats.visited_pages = st.visited_pages.len();
    st.stats.elapsed = start.elapsed();
    Ok(SearchOutput { neighbors, stats: st.stats, visited: st.visit_order, trace: st.trace })
}

/// Pins the `budget_pages` pages visited most often by `queries` (ties to
/// the lower page id). The queries run with caching off.
pub fn warm_cache<T: Element>(
    index: &Index<T>,
    queries: &Dataset<T>,
    budget_pages: usize,
    params: &SearchParams,
) -> Result<PageCache> {
    let page_count = index.header().page_count as usize;
    let budget = budget_pages.min(page_count);
    if budget == 0 {
        return Ok(PageCache::empty());
    }
    let mut freq = vec![0u64; page_count];
    let params = SearchParams { use_cache: false, trace: false, ..params.clone() };
    for q in queries.rows() {
        for p in search(index, q, &params)?.visited {
            freq[p as usize] += 1;
        }
    }
    let mut order: Vec<PageId> = (0..page_count as PageId).collect();
    order.sort_by(|&a, &b| freq[b as usize].cmp(&freq[a as usize]).then(a.cmp(&b)));
    let pages = order[..budget]
        .iter()
        .map(|&p| Ok((p, std::sync::Arc::new(index.reader().read_uncounted(p)?))))
        .collect::<Result<Vec<_>>>()?;
    Ok(PageCache::from_pages(pages))
}
