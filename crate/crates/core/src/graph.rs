//! Vector-level proximity graph (Vamana-style): greedy best-first search
//! plus alpha-pruning. The page layout is derived from this graph.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{ByteReader, ByteWriter};
use crate::dataset::{Dataset, Neighbor, VectorId};
use crate::element::Element;
use crate::error::{Error, Result};

const GRAPH_MAGIC: &[u8; 4] = b"PGG0";
const EMPTY_SLOT: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct GraphParams {
    /// Maximum out-degree R.
    pub max_degree: usize,
    /// Candidate pool size used by the construction-time searches.
    pub build_list: usize,
    /// Prune slack for the second pass; the first pass always uses 1.0.
    pub alpha: f32,
    pub seed: u64,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            max_degree: 32,
            build_list: 64,
            alpha: 1.2,
            seed: 0,
        }
    }
}

/// Directed graph over vector ids with bounded out-degree.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorGraph {
    adjacency: Vec<Vec<VectorId>>,
    max_degree: usize,
    entry_point: VectorId,
}

impl VectorGraph {
    /// Wraps an explicit adjacency list, validating the degree bound,
    /// self-loops and duplicates.
    pub fn from_adjacency(
        adjacency: Vec<Vec<VectorId>>,
        max_degree: usize,
        entry_point: VectorId,
    ) -> Result<Self> {
        let n = adjacency.len();
        if entry_point as usize >= n {
            return Err(Error::InvalidParameter("entry point out of range".into()));
        }
        for (v, nbrs) in adjacency.iter().enumerate() {
            if nbrs.len() > max_degree {
                return Err(Error::InvalidParameter(format!(
                    "vertex {v} has degree {} > {max_degree}",
                    nbrs.len()
                )));
            }
            let mut sorted = nbrs.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != nbrs.len() {
                return Err(Error::InvalidParameter(format!("vertex {v} has duplicate edges")));
            }
            if nbrs.iter().any(|&u| u as usize == v || u as usize >= n) {
                return Err(Error::InvalidParameter(format!("vertex {v} has an invalid edge")));
            }
        }
        Ok(Self {
            adjacency,
            max_degree,
            entry_point,
        })
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn entry_point(&self) -> VectorId {
        self.entry_point
    }

    pub fn neighbors(&self, v: VectorId) -> &[VectorId] {
        &self.adjacency[v as usize]
    }

    pub fn adjacency(&self) -> &[Vec<VectorId>] {
        &self.adjacency
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    /// Number of vertices reachable from the entry point.
    pub fn reachable_count(&self) -> usize {
        reachable_from(&self.adjacency, self.entry_point)
            .iter()
            .filter(|&&r| r)
            .count()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_header(GRAPH_MAGIC);
        w.u32(self.len() as u32)
            .u32(self.max_degree as u32)
            .u32(self.entry_point);
        for nbrs in &self.adjacency {
            w.u32(nbrs.len() as u32);
            w.u32s(nbrs);
            for _ in nbrs.len()..self.max_degree {
                w.u32(EMPTY_SLOT);
            }
        }
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "graph file");
        r.expect_header(GRAPH_MAGIC)?;
        let count = r.u32()? as usize;
        let max_degree = r.u32()? as usize;
        let entry = r.u32()?;
        let mut adjacency = Vec::with_capacity(count);
        for _ in 0..count {
            let degree = r.u32()? as usize;
            if degree > max_degree {
                return Err(Error::Corrupt("graph file: degree exceeds bound".into()));
            }
            let slots = r.u32s(max_degree)?;
            if slots[degree..].iter().any(|&s| s != EMPTY_SLOT) {
                return Err(Error::Corrupt("graph file: non-empty unused slot".into()));
            }
            adjacency.push(slots[..degree].to_vec());
        }
        r.finish()?;
        Self::from_adjacency(adjacency, max_degree, entry)
            .map_err(|e| Error::Corrupt(format!("graph file: {e}")))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn reachable_from(adj: &[Vec<VectorId>], start: VectorId) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::new();
    seen[start as usize] = true;
    queue.push_back(start);
    while let Some(v) = queue.pop_front() {
        for &u in &adj[v as usize] {
            if !seen[u as usize] {
                seen[u as usize] = true;
                queue.push_back(u);
            }
        }
    }
    seen
}

/// Epoch-stamped visited marks, reusable across searches without clearing.
struct VisitedSet {
    stamps: Vec<u32>,
    epoch: u32,
}

impl VisitedSet {
    fn new(n: usize) -> Self {
        Self {
            stamps: vec![0; n],
            epoch: 0,
        }
    }

    fn reset(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamps.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
    }

    /// Returns true if `id` was not yet marked.
    #[inline]
    fn insert(&mut self, id: VectorId) -> bool {
        let slot = &mut self.stamps[id as usize];
        if *slot == self.epoch {
            false
        } else {
            *slot = self.epoch;
            true
        }
    }
}

/// Best-first search over an adjacency list. Returns the `list_size`
/// closest evaluated vertices and appends every expanded vertex to
/// `expanded`.
fn search_adjacency<T: Element>(
    adj: &[Vec<VectorId>],
    ds: &Dataset<T>,
    start: VectorId,
    query: &[T],
    list_size: usize,
    visited: &mut VisitedSet,
    expanded: &mut Vec<Neighbor>,
) -> Vec<Neighbor> {
    visited.reset();
    let list_size = list_size.max(1);
    let mut list: Vec<(Neighbor, bool)> = Vec::with_capacity(list_size + 1);
    visited.insert(start);
    list.push((Neighbor::new(start, T::squared_l2(ds.row(start), query)), false));
    let mut cursor = 0;
    while cursor < list.len() {
        let current = list[cursor].0;
        list[cursor].1 = true;
        expanded.push(current);
        let mut next = cursor + 1;
        for &u in &adj[current.id as usize] {
            if !visited.insert(u) {
                continue;
            }
            let cand = Neighbor::new(u, T::squared_l2(ds.row(u), query));
            if list.len() >= list_size && cand >= list[list.len() - 1].0 {
                continue;
            }
            let pos = list.partition_point(|(n, _)| *n < cand);
            list.insert(pos, (cand, false));
            list.truncate(list_size);
            if pos < next {
                next = pos;
            }
        }
        cursor = next;
        while cursor < list.len() && list[cursor].1 {
            cursor += 1;
        }
    }
    list.into_iter().map(|(n, _)| n).collect()
}

/// Greedy best-first search from the graph's entry point.
///
/// Returns the `list_size` closest vertices seen (ascending) and the set of
/// expanded vertices with their distances.
pub fn greedy_search<T: Element>(
    graph: &VectorGraph,
    ds: &Dataset<T>,
    query: &[T],
    list_size: usize,
) -> (Vec<Neighbor>, Vec<Neighbor>) {
    let mut visited = VisitedSet::new(graph.len());
    let mut expanded = Vec::new();
    let top = search_adjacency(
        &graph.adjacency,
        ds,
        graph.entry_point,
        query,
        list_size,
        &mut visited,
        &mut expanded,
    );
    (top, expanded)
}

/// Alpha-pruning of `candidates` (distances measured to `v`).
///
/// Candidates are scanned in ascending distance; one is kept only when no
/// already-kept point `p` satisfies `alpha * d(p, c) <= d(v, c)`.
fn prune_sorted<T: Element>(
    ds: &Dataset<T>,
    v: VectorId,
    mut candidates: Vec<Neighbor>,
    max_degree: usize,
    alpha: f32,
) -> Vec<VectorId> {
    candidates.sort_unstable();
    candidates.dedup_by_key(|n| n.id);
    candidates.retain(|n| n.id != v);
    let mut kept: Vec<VectorId> = Vec::with_capacity(max_degree);
    for cand in &candidates {
        if kept.len() >= max_degree {
            break;
        }
        let dominated = kept
            .iter()
            .any(|&p| alpha * ds.distance(p, cand.id) <= cand.dist);
        if !dominated {
            kept.push(cand.id);
        }
    }
    kept
}

/// Robust prune of a candidate id set around `v`; at most `max_degree` ids
/// are returned, closest first.
pub fn robust_prune<T: Element>(
    ds: &Dataset<T>,
    v: VectorId,
    candidates: &[VectorId],
    max_degree: usize,
    alpha: f32,
) -> Vec<VectorId> {
    let with_dist = candidates
        .iter()
        .map(|&c| Neighbor::new(c, ds.distance(v, c)))
        .collect();
    prune_sorted(ds, v, with_dist, max_degree, alpha)
}

/// Builds the base graph: a random R-regular start, one pass with
/// `alpha = 1`, one pass with `params.alpha`, then a connectivity repair
/// so every vertex is reachable from the medoid.
pub fn build_base_graph<T: Element>(ds: &Dataset<T>, params: &GraphParams) -> Result<VectorGraph> {
    let n = ds.len();
    if n < 2 {
        return Err(Error::DatasetTooSmall(format!(
            "graph construction needs at least 2 vectors, got {n}"
        )));
    }
    if params.max_degree < 2 {
        return Err(Error::InvalidParameter("max degree must be at least 2".into()));
    }
    if params.build_list < params.max_degree {
        return Err(Error::InvalidParameter(
            "build list size must be at least the max degree".into(),
        ));
    }
    if params.alpha.is_nan() || params.alpha < 1.0 {
        return Err(Error::InvalidParameter("alpha must be >= 1".into()));
    }
    let r = params.max_degree;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut adj = random_graph(n, r.min(n - 1), &mut rng);
    let medoid = ds.medoid();

    let mut visited = VisitedSet::new(n);
    let mut expanded = Vec::new();
    let mut order: Vec<VectorId> = (0..n as VectorId).collect();
    for alpha in [1.0, params.alpha] {
        order.shuffle(&mut rng);
        for &v in &order {
            expanded.clear();
            search_adjacency(
                &adj,
                ds,
                medoid,
                ds.row(v),
                params.build_list,
                &mut visited,
                &mut expanded,
            );
            let mut pool = std::mem::take(&mut expanded);
            pool.extend(adj[v as usize].iter().map(|&u| Neighbor::new(u, ds.distance(v, u))));
            let pruned = prune_sorted(ds, v, pool.clone(), r, alpha);
            expanded = pool;
            adj[v as usize] = pruned.clone();
            for &j in &pruned {
                let back = &adj[j as usize];
                if back.contains(&v) {
                    continue;
                }
                if back.len() < r {
                    adj[j as usize].push(v);
                } else {
                    let pool_j: Vec<Neighbor> = back
                        .iter()
                        .chain(std::iter::once(&v))
                        .map(|&u| Neighbor::new(u, ds.distance(j, u)))
                        .collect();
                    adj[j as usize] = prune_sorted(ds, j, pool_j, r, alpha);
                }
            }
        }
    }
    repair_connectivity(ds, &mut adj, medoid, r);
    VectorGraph::from_adjacency(adj, r, medoid)
}

fn random_graph(n: usize, degree: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<VectorId>> {
    (0..n)
        .map(|v| {
            let mut nbrs = Vec::with_capacity(degree);
            if degree >= n - 1 {
                nbrs.extend((0..n as VectorId).filter(|&u| u as usize != v));
                return nbrs;
            }
            while nbrs.len() < degree {
                let u = rng.random_range(0..n as VectorId);
                if u as usize != v && !nbrs.contains(&u) {
                    nbrs.push(u);
                }
            }
            nbrs
        })
        .collect()
}

/// Links every unreachable vertex from its nearest reachable vertex that
/// still has a free slot, falling back to replacing the farthest edge of
/// the nearest reachable vertex.
fn repair_connectivity<T: Element>(
    ds: &Dataset<T>,
    adj: &mut [Vec<VectorId>],
    entry: VectorId,
    max_degree: usize,
) {
    let mut reachable = reachable_from(adj, entry);
    for _ in 0..adj.len() {
        let Some(u) = reachable.iter().position(|&r| !r) else {
            return;
        };
        let u = u as VectorId;
        let nearest = |with_room: bool| {
            (0..adj.len() as VectorId)
                .filter(|&w| reachable[w as usize])
                .filter(|&w| !with_room || adj[w as usize].len() < max_degree)
                .map(|w| Neighbor::new(w, ds.distance(w, u)))
                .min()
        };
        if let Some(w) = nearest(true) {
            adj[w.id as usize].push(u);
            // Only vertices newly reachable through u need marking.
            let mut queue = VecDeque::from([u]);
            reachable[u as usize] = true;
            while let Some(x) = queue.pop_front() {
                for &y in &adj[x as usize] {
                    if !reachable[y as usize] {
                        reachable[y as usize] = true;
                        queue.push_back(y);
                    }
                }
            }
        } else if let Some(w) = nearest(false) {
            let list = &mut adj[w.id as usize];
            let far = list
                .iter()
                .enumerate()
                .max_by(|a, b| {
                    ds.distance(w.id, *a.1)
                        .total_cmp(&ds.distance(w.id, *b.1))
                        .then(a.1.cmp(b.1))
                })
                .map(|(i, _)| i)
                .expect("full vertex has edges");
            list[far] = u;
            reachable = reachable_from(adj, entry);
        } else {
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::brute_force_knn;
    use crate::metrics::recall_at_k;
    use rand_distr::{Distribution, StandardNormal};

    fn line(points: &[u8]) -> Dataset<u8> {
        Dataset::new(1, points.to_vec()).unwrap()
    }

    fn random_f32(n: usize, dim: usize, seed: u64) -> Dataset<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        Dataset::new(dim, data).unwrap()
    }

    #[test]
    fn prune_keeps_only_non_dominated() {
        // v=10; 2 dominates 1 and 0 since 1.2*d(2,c) <= d(10,c)
        let ds = line(&[0, 1, 2, 10]);
        assert_eq!(robust_prune(&ds, 3, &[0, 1, 2], 2, 1.2), vec![2]);
        // around v=0 (id 0): 1 is kept, 2: 1.2*d(1,2)=1.2 <= 4 -> dropped
        assert_eq!(robust_prune(&ds, 0, &[1, 2, 3], 3, 1.2), vec![1]);
    }

    #[test]
    fn prune_keeps_mutually_non_dominated() {
        // two points on opposite sides of v are never dominated
        let ds = Dataset::new(2, vec![10u8, 10, 0, 10, 20, 10]).unwrap();
        let mut got = robust_prune(&ds, 0, &[1, 2], 4, 1.2);
        got.sort();
        assert_eq!(got, vec![1, 2]);
    }

    #[test]
    fn prune_with_huge_alpha_keeps_closest() {
        let ds = line(&[50, 52, 55, 60, 40, 30]);
        let got = robust_prune(&ds, 0, &[1, 2, 3, 4, 5], 3, 1e6);
        // nothing is dominated, so the R closest survive (60 and 40 tie, lower id first)
        assert_eq!(got, vec![1, 2, 3]);
    }

    #[test]
    fn prune_respects_degree_bound() {
        let ds = random_f32(200, 8, 3);
        let cands: Vec<u32> = (1..200).collect();
        assert!(robust_prune(&ds, 0, &cands, 5, 100.0).len() <= 5);
        assert!(robust_prune(&ds, 0, &cands, 5, 1.0).len() <= 5);
    }

    #[test]
    fn two_point_graph() {
        let ds = line(&[3, 9]);
        let g = build_base_graph(&ds, &GraphParams { max_degree: 2, build_list: 2, ..Default::default() }).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0]);
    }

    #[test]
    fn too_small_dataset_errors() {
        let ds = line(&[3]);
        assert!(matches!(
            build_base_graph(&ds, &GraphParams::default()),
            Err(Error::DatasetTooSmall(_))
        ));
    }

    #[test]
    fn collinear_far_point_links_to_nearest() {
        let ds = line(&[0, 1, 2, 10]);
        let g = build_base_graph(&ds, &GraphParams { max_degree: 2, build_list: 4, ..Default::default() }).unwrap();
        assert!(g.neighbors(3).contains(&2));
        for v in 0..4 {
            assert!(g.neighbors(v).len() <= 2);
        }
    }

    #[test]
    fn random_set_is_connected_and_well_formed() {
        let ds = random_f32(1000, 16, 7);
        let g = build_base_graph(&ds, &GraphParams { max_degree: 16, build_list: 32, ..Default::default() }).unwrap();
        assert_eq!(g.reachable_count(), 1000);
        assert_eq!(g.entry_point(), ds.medoid());
        for v in 0..1000u32 {
            let nbrs = g.neighbors(v);
            assert!(nbrs.len() <= 16);
            assert!(!nbrs.contains(&v));
            let mut s = nbrs.to_vec();
            s.sort();
            s.dedup();
            assert_eq!(s.len(), nbrs.len());
        }
    }

    #[test]
    fn greedy_search_finds_stored_vectors() {
        let ds = random_f32(1000, 16, 11);
        let g = build_base_graph(&ds, &GraphParams { max_degree: 16, build_list: 32, ..Default::default() }).unwrap();
        let (top, _) = greedy_search(&g, &ds, ds.row(g.entry_point()), 1);
        assert_eq!(top[0].id, g.entry_point());
        for v in [3u32, 500, 999] {
            let (top, _) = greedy_search(&g, &ds, ds.row(v), 8);
            assert_eq!(top[0].id, v);
            assert_eq!(top[0].dist, 0.0);
        }
    }

    #[test]
    fn full_pool_search_has_near_perfect_recall() {
        let ds = random_f32(1000, 16, 5);
        let g = build_base_graph(&ds, &GraphParams { max_degree: 16, build_list: 32, ..Default::default() }).unwrap();
        let queries = random_f32(20, 16, 99);
        let mut total = 0.0;
        for q in queries.rows() {
            let (top, visited) = greedy_search(&g, &ds, q, ds.len());
            let truth: Vec<u32> = brute_force_knn(&ds, q, 1000).iter().map(|n| n.id).collect();
            let got: Vec<u32> = top.iter().map(|n| n.id).collect();
            total += recall_at_k(&got, &truth, 1000);
            assert!(visited.len() <= ds.len());
        }
        assert!(total / 20.0 >= 0.99);
    }

    #[test]
    fn serialization_round_trip_and_sentinels() {
        let ds = random_f32(50, 4, 1);
        let g = build_base_graph(&ds, &GraphParams { max_degree: 6, build_list: 12, ..Default::default() }).unwrap();
        let bytes = g.to_bytes();
        assert_eq!(bytes.len(), 8 + 12 + 50 * (1 + 6) * 4);
        assert_eq!(VectorGraph::from_bytes(&bytes).unwrap(), g);
        let mut bad = bytes.clone();
        bad.truncate(bad.len() - 1);
        assert!(VectorGraph::from_bytes(&bad).is_err());
    }

    #[test]
    fn build_is_deterministic() {
        let ds = random_f32(300, 8, 2);
        let p = GraphParams { max_degree: 8, build_list: 16, ..Default::default() };
        assert_eq!(build_base_graph(&ds, &p).unwrap(), build_base_graph(&ds, &p).unwrap());
    }
}
