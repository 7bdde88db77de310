//! Page-node graph construction.
//!
//! Vectors are grouped into pages by pulling in the closest still-ungrouped
//! vectors within a few hops of a seed, then each page's external edges are
//! the union of its members' out-edges that leave the page, with duplicates
//! merged.

use crate::dataset::{Dataset, Neighbor, VectorId};
use crate::element::Element;
use crate::error::{Error, Result};
use crate::graph::VectorGraph;
use crate::layout::{PagePlan, Regime};
use crate::pq::CodeArray;

/// One page before layout: its members (seed first) and the ids of
/// neighbors outside the page, ranked by distance to the seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageNodeDraft {
    pub members: Vec<VectorId>,
    /// Neighbors stored on the page, at most the neighbor budget.
    pub external: Vec<VectorId>,
    /// Ranked neighbors that did not fit the budget.
    pub spill: Vec<VectorId>,
}

impl PageNodeDraft {
    pub fn seed(&self) -> VectorId {
        self.members[0]
    }
}

/// Undirected adjacency: out-edges plus in-edges, deduplicated.
fn undirected(g: &VectorGraph) -> Vec<Vec<VectorId>> {
    let mut adj: Vec<Vec<VectorId>> = g.adjacency().to_vec();
    for (v, nbrs) in g.adjacency().iter().enumerate() {
        for &u in nbrs {
            adj[u as usize].push(v as VectorId);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// Partitions all vectors into pages of at most `capacity` vectors.
///
/// Seeds are taken in ascending id order. Each page is the seed plus the
/// `capacity - 1` closest ungrouped vectors (ties by id) found within `hops`
/// undirected hops of the seed; a short page is topped up with the next
/// ungrouped ids. Hop distance is measured through grouped vectors too.
pub fn group_vectors<T: Element>(
    g0: &VectorGraph,
    ds: &Dataset<T>,
    capacity: usize,
    hops: usize,
) -> Result<Vec<Vec<VectorId>>> {
    if capacity == 0 {
        return Err(Error::InvalidParameter("page capacity must be at least 1".into()));
    }
    if hops == 0 {
        return Err(Error::InvalidParameter("hop count must be at least 1".into()));
    }
    let n = g0.len();
    if n != ds.len() {
        return Err(Error::InvalidParameter("graph and dataset sizes differ".into()));
    }
    let adj = undirected(g0);
    let mut grouped = vec![false; n];
    let mut stamp = vec![0u32; n];
    let mut epoch = 0u32;
    let mut cursor = 0usize;
    let mut remaining = n;
    let mut pages = Vec::with_capacity(n.div_ceil(capacity));
    let mut frontier = Vec::new();
    let mut next = Vec::new();
    let mut candidates = Vec::new();

    while remaining > 0 {
        while grouped[cursor] {
            cursor += 1;
        }
        let seed = cursor as VectorId;
        grouped[seed as usize] = true;
        remaining -= 1;
        let mut page = Vec::with_capacity(capacity);
        page.push(seed);

        if capacity > 1 {
            epoch += 1;
            stamp[seed as usize] = epoch;
            frontier.clear();
            frontier.push(seed);
            candidates.clear();
            for _ in 0..hops {
                next.clear();
                for &x in &frontier {
                    for &y in &adj[x as usize] {
                        if stamp[y as usize] != epoch {
                            stamp[y as usize] = epoch;
                            next.push(y);
                            if !grouped[y as usize] {
                                candidates.push(Neighbor::new(y, ds.distance(seed, y)));
                            }
                        }
                    }
                }
                std::mem::swap(&mut frontier, &mut next);
            }
            let take = (capacity - 1).min(candidates.len());
            if take > 0 && take < candidates.len() {
                candidates.select_nth_unstable(take - 1);
            }
            candidates.truncate(take);
            candidates.sort_unstable();
            for c in &candidates {
                grouped[c.id as usize] = true;
                page.push(c.id);
            }
            remaining -= take;
        }

        let mut pad = cursor;
        while page.len() < capacity && remaining > 0 {
            while grouped[pad] {
                pad += 1;
            }
            grouped[pad] = true;
            remaining -= 1;
            page.push(pad as VectorId);
        }
        pages.push(page);
    }
    Ok(pages)
}

/// Merges the out-edges of each page's members that leave the page.
///
/// The merged set is ranked by distance to the page seed (ties by id); the
/// first `max_nbrs` become `external`, the remainder `spill`.
pub fn aggregate_neighbors<T: Element>(
    pages: &[Vec<VectorId>],
    g0: &VectorGraph,
    ds: &Dataset<T>,
    max_nbrs: usize,
) -> Vec<PageNodeDraft> {
    let n = g0.len();
    let mut page_of = vec![u32::MAX; n];
    for (p, members) in pages.iter().enumerate() {
        for &v in members {
            page_of[v as usize] = p as u32;
        }
    }
    let mut seen = vec![u32::MAX; n];
    pages
        .iter()
        .enumerate()
        .map(|(p, members)| {
            let seed = members[0];
            let mut ranked = Vec::new();
            for &v in members {
                for &u in g0.neighbors(v) {
                    if page_of[u as usize] == p as u32 || seen[u as usize] == p as u32 {
                        continue;
                    }
                    seen[u as usize] = p as u32;
                    ranked.push(Neighbor::new(u, ds.distance(seed, u)));
                }
            }
            ranked.sort_unstable();
            let mut ids: Vec<VectorId> = ranked.into_iter().map(|nb| nb.id).collect();
            let spill = if ids.len() > max_nbrs {
                ids.split_off(max_nbrs)
            } else {
                Vec::new()
            };
            PageNodeDraft {
                members: members.clone(),
                external: ids,
                spill,
            }
        })
        .collect()
}

/// Picks which vectors get an in-memory code under a hybrid plan.
///
/// Candidates are vectors ranked past the on-page code slots of some page;
/// the most referenced ones (ties by id) win, up to the table capacity.
/// Returns a mask indexed by vector id.
pub fn select_resident(drafts: &[PageNodeDraft], plan: &PagePlan, count: usize) -> Vec<bool> {
    match plan.regime {
        Regime::CodesOnDisk => vec![false; count],
        Regime::CodesInMemory => vec![true; count],
        Regime::Hybrid => {
            let mut refs = vec![0u32; count];
            for d in drafts {
                for &u in d.external.iter().chain(&d.spill).skip(plan.disk_codes) {
                    refs[u as usize] += 1;
                }
            }
            let mut order: Vec<VectorId> = (0..count as VectorId).filter(|&v| refs[v as usize] > 0).collect();
            order.sort_by(|&a, &b| refs[b as usize].cmp(&refs[a as usize]).then(a.cmp(&b)));
            let mut mask = vec![false; count];
            for &v in order.iter().take(plan.resident_codes) {
                mask[v as usize] = true;
            }
            mask
        }
    }
}

/// Orders each page's neighbors so that the on-page code slots hold exactly
/// the non-resident neighbors and memory-resident ones follow.
///
/// A page with fewer non-resident neighbors than code slots cannot also
/// reference resident ones without duplicating their codes, so those
/// references are dropped. Returns the number of dropped references
/// relative to plain budget truncation.
pub fn arrange_neighbors(drafts: &mut [PageNodeDraft], plan: &PagePlan, resident: &[bool]) -> usize {
    let mut dropped = 0;
    for d in drafts.iter_mut() {
        let before: Vec<VectorId> = d.external.clone();
        let ranked: Vec<VectorId> = d.external.iter().chain(&d.spill).copied().collect();
        let (on_disk, in_mem): (Vec<VectorId>, Vec<VectorId>) =
            ranked.iter().partition(|&&u| !resident[u as usize]);
        let mut list: Vec<VectorId> = on_disk.iter().take(plan.disk_codes).copied().collect();
        if on_disk.len() >= plan.disk_codes {
            let room = plan.max_nbrs - list.len();
            list.extend(in_mem.iter().take(room));
        }
        dropped += before.iter().filter(|u| !list.contains(u)).count();
        d.spill = ranked.into_iter().filter(|u| !list.contains(u)).collect();
        d.external = list;
    }
    dropped
}

/// On-page code bytes for each page: the codes of its first
/// `min(|external|, disk_codes)` neighbors.
///
/// Fails if any neighbor beyond the code slots has no in-memory code, or if
/// a neighbor in a code slot is also memory-resident.
pub fn attach_disk_codes(
    drafts: &[PageNodeDraft],
    disk_codes: &CodeArray,
    plan: &PagePlan,
    resident: &[bool],
) -> Result<Vec<Vec<u8>>> {
    drafts
        .iter()
        .map(|d| {
            let slots = d.external.len().min(plan.disk_codes);
            let mut bytes = Vec::with_capacity(slots * plan.disk_code_bytes);
            for (j, &u) in d.external.iter().enumerate() {
                if j < slots {
                    if resident[u as usize] {
                        return Err(Error::InvalidParameter(format!(
                            "neighbor {u} would be stored both in memory and on a page"
                        )));
                    }
                    bytes.extend_from_slice(disk_codes.get(u as usize));
                } else if !resident[u as usize] {
                    return Err(Error::MissingCode(u));
                }
            }
            Ok(bytes)
        })
        .collect()
}
