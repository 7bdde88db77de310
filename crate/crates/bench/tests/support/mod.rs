//! Test-only reference implementations, written for clarity rather than
//! speed and sharing no code with the engine.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet};

use pageann::{Dataset, Element, VectorGraph};

/// Squared Euclidean distance in f64.
pub fn sq_dist<T: Element>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x.as_f32() as f64 - y.as_f32() as f64;
            d * d
        })
        .sum()
}

/// Neighbors of `x` ignoring edge direction.
fn both_ways(g: &VectorGraph, x: u32) -> BTreeSet<u32> {
    let mut out: BTreeSet<u32> = g.neighbors(x).iter().copied().collect();
    for v in 0..g.len() as u32 {
        if g.neighbors(v).contains(&x) {
            out.insert(v);
        }
    }
    out
}

/// One page of the reference grouping: members and ranked external ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefPage {
    pub members: Vec<u32>,
    pub external: Vec<u32>,
}

/// Straight-line grouping and neighbor merging.
///
/// For each seed in ascending id order that is not yet placed: walk `hops`
/// undirected steps, collect every unplaced vector reached, keep the
/// `capacity - 1` closest to the seed (ties by id), fill any shortfall with
/// the smallest unplaced ids. Then each page's external list is the set of
/// out-neighbors of its members that live elsewhere, ordered by distance to
/// the seed (ties by id) and cut to `max_nbrs`.
pub fn reference_pages<T: Element>(
    g: &VectorGraph,
    ds: &Dataset<T>,
    capacity: usize,
    hops: usize,
    max_nbrs: usize,
) -> Vec<RefPage> {
    let n = g.len() as u32;
    let mut placed: HashSet<u32> = HashSet::new();
    let mut pages: Vec<Vec<u32>> = Vec::new();
    for seed in 0..n {
        if placed.contains(&seed) {
            continue;
        }
        placed.insert(seed);
        let mut page = vec![seed];
        let mut reached: BTreeSet<u32> = BTreeSet::new();
        let mut layer: BTreeSet<u32> = BTreeSet::from([seed]);
        let mut seen: BTreeSet<u32> = BTreeSet::from([seed]);
        for _ in 0..hops {
            let mut next = BTreeSet::new();
            for &x in &layer {
                for y in both_ways(g, x) {
                    if seen.insert(y) {
                        next.insert(y);
                        reached.insert(y);
                    }
                }
            }
            layer = next;
        }
        let mut cands: Vec<(f64, u32)> = reached
            .into_iter()
            .filter(|v| !placed.contains(v))
            .map(|v| (sq_dist(ds.row(seed), ds.row(v)), v))
            .collect();
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, v) in cands.iter().take(capacity - 1) {
            placed.insert(v);
            page.push(v);
        }
        let mut v = 0;
        while page.len() < capacity && placed.len() < n as usize {
            if !placed.contains(&v) {
                placed.insert(v);
                page.push(v);
            }
            v += 1;
        }
        pages.push(page);
    }
    pages
        .into_iter()
        .map(|members| {
            let seed = members[0];
            let inside: BTreeSet<u32> = members.iter().copied().collect();
            let union: BTreeSet<u32> = members
                .iter()
                .flat_map(|&m| g.neighbors(m).iter().copied())
                .filter(|u| !inside.contains(u))
                .collect();
            let mut ranked: Vec<(f64, u32)> = union.into_iter().map(|u| (sq_dist(ds.row(seed), ds.row(u)), u)).collect();
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            RefPage { members, external: ranked.into_iter().take(max_nbrs).map(|(_, u)| u).collect() }
        })
        .collect()
}

/// Recall@k of result ids against truth ids, computed from scratch.
pub fn recall(results: &[Vec<u32>], truth: &[Vec<u32>], k: usize) -> f64 {
    let hits: usize = results
        .iter()
        .zip(truth)
        .map(|(r, t)| {
            let t: HashSet<u32> = t.iter().take(k).copied().collect();
            r.iter().take(k).filter(|id| t.contains(id)).count()
        })
        .sum();
    hits as f64 / (k * results.len()) as f64
}

/// Linear interpolation of `y` at the first point where `x` reaches
/// `target`, over points sorted by the sweep parameter. Returns the first
/// point's `y` if it already meets the target.
pub fn value_at(points: &[(f64, f64)], target: f64) -> Option<f64> {
    let i = points.iter().position(|&(x, _)| x >= target)?;
    if i == 0 {
        return Some(points[0].1);
    }
    let (x0, y0) = points[i - 1];
    let (x1, y1) = points[i];
    Some(y0 + (y1 - y0) * (target - x0) / (x1 - x0))
}
