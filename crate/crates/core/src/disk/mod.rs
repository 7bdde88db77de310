//! On-disk page file: bit-exact page records, id reassignment, the batched
//! page reader and the pinned page cache.

pub mod cache;
pub mod format;
pub mod io;

pub use cache::PageCache;
pub use format::{
    reassign_ids, write_index, IdRemap, IndexHeader, PageFormat, PageRecord, PageView, INDEX_MAGIC,
};
pub use io::{
    AlignedBuf, BatchPage, DelayedDevice, FileDevice, InflightBatch, IoCounters, IoPool, MemDevice,
    PageBuf, PageDevice, PageReader,
};
