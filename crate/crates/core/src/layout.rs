//! Page capacity planning and memory–disk placement of neighbor codes.

use crate::error::{Error, Result};

/// Bytes of each of the two per-page count fields (vectors, neighbors).
pub const COUNT_FIELD_BYTES: usize = 2;
/// Bytes per stored neighbor id.
pub const NEIGHBOR_ID_BYTES: usize = 4;
/// Per-entry overhead of a sparse in-memory code table (the id index).
pub const SPARSE_ENTRY_OVERHEAD: usize = 4;

/// Where neighbor codes live, decided by the memory budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Every neighbor code is stored on its page; no code table in memory.
    CodesOnDisk,
    /// The first `disk_codes` neighbors of a page carry codes, the rest are
    /// covered by a partial in-memory table.
    Hybrid,
    /// All codes live in memory and pages carry ids only.
    CodesInMemory,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::CodesOnDisk => "codes-on-disk",
            Regime::Hybrid => "hybrid",
            Regime::CodesInMemory => "codes-in-memory",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "codes-on-disk" => Some(Regime::CodesOnDisk),
            "hybrid" => Some(Regime::Hybrid),
            "codes-in-memory" => Some(Regime::CodesInMemory),
            _ => None,
        }
    }
}

/// Layout constants for one index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PagePlan {
    pub page_size: usize,
    /// Neighbor budget per page.
    pub max_nbrs: usize,
    /// Bytes per on-page compressed neighbor.
    pub disk_code_bytes: usize,
    /// Number of neighbor slots per page that carry an on-page code.
    pub disk_codes: usize,
    pub dim: usize,
    pub elem_size: usize,
    /// Vectors per page.
    pub vectors_per_page: usize,
    pub regime: Regime,
    /// Capacity of the in-memory code table, in codes.
    pub resident_codes: usize,
    /// Bytes per in-memory code.
    pub mem_code_bytes: usize,
}

impl PagePlan {
    /// Vectors that fit in a page once the header, neighbor ids and
    /// on-page codes are accounted for:
    /// `floor((page - 2*count_field - id_bytes*max_nbrs - code_bytes*disk_codes) / (dim*elem_size))`.
    pub fn capacity(
        page_size: usize,
        max_nbrs: usize,
        disk_code_bytes: usize,
        disk_codes: usize,
        dim: usize,
        elem_size: usize,
    ) -> Result<usize> {
        if disk_codes > max_nbrs {
            return Err(Error::InvalidParameter(format!(
                "on-page code count {disk_codes} exceeds neighbor budget {max_nbrs}"
            )));
        }
        let overhead = 2 * COUNT_FIELD_BYTES
            + NEIGHBOR_ID_BYTES * max_nbrs
            + disk_code_bytes * disk_codes;
        let vector_bytes = dim * elem_size;
        let free = page_size.saturating_sub(overhead);
        let n = free.checked_div(vector_bytes).unwrap_or(0);
        if n < 1 {
            return Err(Error::PageTooSmall(format!(
                "{page_size}-byte page leaves {free} bytes for {vector_bytes}-byte vectors"
            )));
        }
        Ok(n)
    }

    /// A plan with an explicit on-page code count and no in-memory table
    /// beyond what `regime` implies.
    pub fn new(
        page_size: usize,
        max_nbrs: usize,
        disk_code_bytes: usize,
        disk_codes: usize,
        dim: usize,
        elem_size: usize,
    ) -> Result<Self> {
        if max_nbrs > u16::MAX as usize {
            return Err(Error::InvalidParameter("neighbor budget exceeds 65535".into()));
        }
        let n = Self::capacity(page_size, max_nbrs, disk_code_bytes, disk_codes, dim, elem_size)?;
        let regime = if disk_codes == max_nbrs {
            Regime::CodesOnDisk
        } else if disk_codes == 0 {
            Regime::CodesInMemory
        } else {
            Regime::Hybrid
        };
        Ok(Self {
            page_size,
            max_nbrs,
            disk_code_bytes,
            disk_codes,
            dim,
            elem_size,
            vectors_per_page: n.min(u16::MAX as usize),
            regime,
            resident_codes: 0,
            mem_code_bytes: 0,
        })
    }

    /// Caps the vectors per page (used by the one-vector-per-page layout).
    pub fn with_vectors_per_page(mut self, n: usize) -> Result<Self> {
        if n == 0 || n > self.vectors_per_page {
            return Err(Error::InvalidParameter(format!(
                "cannot place {n} vectors on a page that holds {}",
                self.vectors_per_page
            )));
        }
        self.vectors_per_page = n;
        Ok(self)
    }

    /// Serialized size of a page with the given member and neighbor counts.
    pub fn record_len(&self, vec_count: usize, nbr_count: usize) -> usize {
        2 * COUNT_FIELD_BYTES
            + vec_count * self.dim * self.elem_size
            + nbr_count * NEIGHBOR_ID_BYTES
            + nbr_count.min(self.disk_codes) * self.disk_code_bytes
    }

    pub fn page_count(&self, count: usize) -> usize {
        count.div_ceil(self.vectors_per_page)
    }

    /// Bytes of memory taken by the in-memory code table.
    pub fn resident_bytes(&self, count: usize) -> u64 {
        match self.regime {
            Regime::CodesOnDisk => 0,
            Regime::CodesInMemory => (count * self.mem_code_bytes) as u64,
            Regime::Hybrid => {
                (self.resident_codes * (self.mem_code_bytes + SPARSE_ENTRY_OVERHEAD)) as u64
            }
        }
    }
}

/// Inputs to [`plan_pages`] that do not depend on the budget.
#[derive(Debug, Clone)]
pub struct PlanInput {
    pub count: usize,
    pub dim: usize,
    pub elem_size: usize,
    pub page_size: usize,
    pub max_nbrs: usize,
    pub disk_code_bytes: usize,
    pub mem_code_bytes: usize,
}

/// Chooses where neighbor codes live for a memory budget (bytes available
/// for the code table) and sizes the page accordingly.
///
/// With `f` the fraction of vectors whose codes fit in memory:
/// no room at all keeps every code on disk, a partial fit stores
/// `ceil(max_nbrs * (1 - f))` codes per page, and a full fit stores none
/// and packs more vectors per page. A code is never kept both in memory
/// and on a page.
pub fn plan_pages(budget: u64, input: &PlanInput) -> Result<PagePlan> {
    let PlanInput {
        count,
        dim,
        elem_size,
        page_size,
        max_nbrs,
        disk_code_bytes,
        mem_code_bytes,
    } = *input;
    if count == 0 {
        return Err(Error::DatasetTooSmall("no vectors to plan for".into()));
    }
    let dense_bytes = (count * mem_code_bytes) as u64;
    let mut plan = if mem_code_bytes > 0 && budget >= dense_bytes {
        let mut p = PagePlan::new(page_size, max_nbrs, disk_code_bytes, 0, dim, elem_size)?;
        p.regime = Regime::CodesInMemory;
        p.resident_codes = count;
        p
    } else {
        let per_entry = (mem_code_bytes + SPARSE_ENTRY_OVERHEAD) as u64;
        let capacity = if mem_code_bytes == 0 {
            0
        } else {
            ((budget / per_entry) as usize).min(count)
        };
        let fraction = capacity as f64 / count as f64;
        let disk_codes = ((max_nbrs as f64) * (1.0 - fraction)).ceil() as usize;
        let disk_codes = disk_codes.min(max_nbrs);
        let mut p = PagePlan::new(page_size, max_nbrs, disk_code_bytes, disk_codes, dim, elem_size)?;
        if disk_codes == max_nbrs {
            p.regime = Regime::CodesOnDisk;
            p.resident_codes = 0;
        } else {
            p.regime = Regime::Hybrid;
            p.resident_codes = capacity;
        }
        p
    };
    plan.mem_code_bytes = mem_code_bytes;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sift_like() -> PlanInput {
        PlanInput {
            count: 10_000,
            dim: 128,
            elem_size: 1,
            page_size: 4096,
            max_nbrs: 48,
            disk_code_bytes: 32,
            mem_code_bytes: 32,
        }
    }

    #[test]
    fn capacity_worked_example() {
        // (4096 - 4 - 192 - 1536) / 128 = 18.47
        assert_eq!(PagePlan::capacity(4096, 48, 32, 48, 128, 1).unwrap(), 18);
        // (4096 - 4 - 192) / 128 = 30.47
        assert_eq!(PagePlan::capacity(4096, 48, 32, 0, 128, 1).unwrap(), 30);
    }

    #[test]
    fn zero_budget_keeps_codes_on_disk() {
        let plan = plan_pages(0, &sift_like()).unwrap();
        assert_eq!(plan.regime, Regime::CodesOnDisk);
        assert_eq!(plan.disk_codes, 48);
        assert_eq!(plan.vectors_per_page, 18);
        assert_eq!(plan.resident_bytes(10_000), 0);
    }

    #[test]
    fn full_budget_moves_codes_to_memory() {
        let plan = plan_pages(10_000 * 32, &sift_like()).unwrap();
        assert_eq!(plan.regime, Regime::CodesInMemory);
        assert_eq!(plan.disk_codes, 0);
        assert_eq!(plan.vectors_per_page, 30);
        assert_eq!(plan.resident_bytes(10_000), 320_000);
    }

    #[test]
    fn partial_budget_splits_codes() {
        // 36 bytes per sparse entry; half the vectors fit
        let plan = plan_pages(5_000 * 36, &sift_like()).unwrap();
        assert_eq!(plan.regime, Regime::Hybrid);
        assert_eq!(plan.resident_codes, 5_000);
        assert_eq!(plan.disk_codes, 24);
        assert_eq!(plan.vectors_per_page, (4096 - 4 - 192 - 24 * 32) / 128);
        assert!(plan.resident_bytes(10_000) <= 5_000 * 36);
    }

    #[test]
    fn disk_codes_shrink_monotonically_with_budget() {
        let mut last = usize::MAX;
        for budget in (0..=400_000u64).step_by(20_000) {
            let plan = plan_pages(budget, &sift_like()).unwrap();
            assert!(plan.disk_codes <= last);
            assert!(plan.resident_bytes(10_000) <= budget);
            last = plan.disk_codes;
        }
    }

    #[test]
    fn oversized_vectors_are_rejected() {
        let err = PagePlan::capacity(4096, 48, 32, 48, 4096, 1).unwrap_err();
        assert!(matches!(err, Error::PageTooSmall(_)));
    }

    #[test]
    fn record_len_never_exceeds_page() {
        let plan = plan_pages(0, &sift_like()).unwrap();
        assert!(plan.record_len(plan.vectors_per_page, plan.max_nbrs) <= plan.page_size);
        let plan = plan_pages(u64::MAX, &sift_like()).unwrap();
        assert!(plan.record_len(plan.vectors_per_page, plan.max_nbrs) <= plan.page_size);
    }
}
