//! Read-only set of pinned pages.

use std::collections::HashMap;

use crate::dataset::PageId;
use crate::disk::io::PageBuf;

/// Pages pinned in memory; built once (typically by a warm-up pass) and
/// never modified while queries run.
#[derive(Debug, Default, Clone)]
pub struct PageCache {
    pages: HashMap<PageId, PageBuf>,
}

impl PageCache {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_pages(pages: Vec<(PageId, PageBuf)>) -> Self {
        Self { pages: pages.into_iter().collect() }
    }

    #[inline]
    pub fn get(&self, page: PageId) -> Option<PageBuf> {
        self.pages.get(&page).cloned()
    }

    pub fn contains(&self, page: PageId) -> bool {
        self.pages.contains_key(&page)
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    /// Resident pages, ascending.
    pub fn page_ids(&self) -> Vec<PageId> {
        let mut ids: Vec<_> = self.pages.keys().copied().collect();
        ids.sort_unstable();
        ids
    }

    /// Bytes held by the cached pages.
    pub fn memory_bytes(&self) -> u64 {
        self.pages.values().map(|p| p.len() as u64).sum()
    }
}
