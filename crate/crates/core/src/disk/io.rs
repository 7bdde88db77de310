//! Page-granular storage access.
//!
//! A [`PageReader`] turns a batch of page ids into reads against a
//! [`PageDevice`]. Uncached pages are handed to an [`IoPool`] of blocking
//! reader threads so that a whole batch is in flight at once and the caller
//! can compute while it waits. Every storage read covers exactly one page
//! slot at a page-aligned offset.

use std::alloc::{self, Layout};
use std::fs::{File, OpenOptions};
use std::io;
use std::ops::{Deref, DerefMut};
use std::os::unix::fs::{FileExt, OpenOptionsExt};
use std::path::Path;
use std::ptr::NonNull;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam_channel::{Receiver, Sender};

use crate::dataset::PageId;
use crate::disk::cache::PageCache;
use crate::error::{Error, Result};

/// Alignment of page buffers, suitable for direct I/O.
pub const BUFFER_ALIGN: usize = 4096;

/// Heap buffer aligned to [`BUFFER_ALIGN`].
pub struct AlignedBuf {
    ptr: NonNull<u8>,
    len: usize,
}

// The buffer owns its allocation exclusively.
unsafe impl Send for AlignedBuf {}
unsafe impl Sync for AlignedBuf {}

impl AlignedBuf {
    /// Zeroed buffer of `len` bytes.
    pub fn zeroed(len: usize) -> Self {
        if len == 0 {
            return Self { ptr: NonNull::dangling(), len };
        }
        let layout = Layout::from_size_align(len, BUFFER_ALIGN).expect("page buffer layout");
        // SAFETY: layout has non-zero size.
        let raw = unsafe { alloc::alloc_zeroed(layout) };
        let ptr = NonNull::new(raw).unwrap_or_else(|| alloc::handle_alloc_error(layout));
        Self { ptr, len }
    }

    pub fn from_slice(bytes: &[u8]) -> Self {
        let mut b = Self::zeroed(bytes.len());
        b.copy_from_slice(bytes);
        b
    }
}

impl Drop for AlignedBuf {
    fn drop(&mut self) {
        if self.len > 0 {
            let layout = Layout::from_size_align(self.len, BUFFER_ALIGN).expect("page buffer layout");
            // SAFETY: allocated in `zeroed` with this layout.
            unsafe { alloc::dealloc(self.ptr.as_ptr(), layout) }
        }
    }
}

impl Deref for AlignedBuf {
    type Target = [u8];

    fn deref(&self) -> &[u8] {
        // SAFETY: ptr is valid for len initialized bytes.
        unsafe { std::slice::from_raw_parts(self.ptr.as_ptr(), self.len) }
    }
}

impl DerefMut for AlignedBuf {
    fn deref_mut(&mut self) -> &mut [u8] {
        // SAFETY: ptr is valid for len bytes and uniquely borrowed.
        unsafe { std::slice::from_raw_parts_mut(self.ptr.as_ptr(), self.len) }
    }
}

impl std::fmt::Debug for AlignedBuf {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "AlignedBuf({} bytes)", self.len)
    }
}

/// Shared, immutable page contents.
pub type PageBuf = Arc<AlignedBuf>;

/// Random-access byte storage.
pub trait PageDevice: Send + Sync {
    /// Fills `buf` from `offset`; a short read is an error.
    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()>;

    /// Like [`read_at`](Self::read_at) for a request queued at `submitted`.
    /// Devices that model latency count it from that instant.
    fn read_submitted(&self, offset: u64, buf: &mut [u8], submitted: Instant) -> io::Result<()> {
        let _ = submitted;
        self.read_at(offset, buf)
    }

    fn len(&self) -> u64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// File-backed device that bypasses the OS page cache when it can.
pub struct FileDevice {
    buffered: File,
    direct: Option<File>,
    direct_ok: AtomicBool,
    len: u64,
}

impl FileDevice {
    /// Opens `path`; with `direct` set, also tries a cache-bypassing handle
    /// and silently falls back to buffered reads if the platform or file
    /// system refuses it.
    pub fn open(path: &Path, direct: bool) -> Result<Self> {
        let buffered = File::open(path)?;
        let len = buffered.metadata()?.len();
        let direct = if direct {
            OpenOptions::new().read(true).custom_flags(libc::O_DIRECT).open(path).ok()
        } else {
            None
        };
        let direct_ok = AtomicBool::new(direct.is_some());
        Ok(Self { buffered, direct, direct_ok, len })
    }

    /// Whether reads currently bypass the OS page cache.
    pub fn is_direct(&self) -> bool {
        self.direct_ok.load(Ordering::Relaxed)
    }
}

impl PageDevice for FileDevice {
    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()> {
        if let (Some(file), true) = (&self.direct, self.is_direct()) {
            let aligned = offset.is_multiple_of(BUFFER_ALIGN as u64)
                && buf.len().is_multiple_of(BUFFER_ALIGN)
                && (buf.as_ptr() as usize).is_multiple_of(BUFFER_ALIGN);
            if aligned {
                match file.read_exact_at(buf, offset) {
                    Ok(()) => return Ok(()),
                    Err(e) if e.raw_os_error() == Some(libc::EINVAL) => {
                        log::debug!("direct reads refused, using buffered reads");
                        self.direct_ok.store(false, Ordering::Relaxed);
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        self.buffered.read_exact_at(buf, offset)
    }

    fn len(&self) -> u64 {
        self.len
    }
}

/// In-memory device.
pub struct MemDevice {
    bytes: Vec<u8>,
}

impl MemDevice {
    pub fn new(bytes: Vec<u8>) -> Self {
        Self { bytes }
    }
}

impl PageDevice for MemDevice {
    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()> {
        let start = usize::try_from(offset).map_err(|_| io::Error::from(io::ErrorKind::UnexpectedEof))?;
        let src = start
            .checked_add(buf.len())
            .and_then(|end| self.bytes.get(start..end))
            .ok_or_else(|| io::Error::from(io::ErrorKind::UnexpectedEof))?;
        buf.copy_from_slice(src);
        Ok(())
    }

    fn len(&self) -> u64 {
        self.bytes.len() as u64
    }
}

/// Wraps a device and delays every read by a fixed latency, counted from
/// the moment the request was submitted, as a device that starts serving a
/// request when it is queued.
pub struct DelayedDevice<D> {
    inner: D,
    latency: Duration,
}

impl<D: PageDevice> DelayedDevice<D> {
    pub fn new(inner: D, latency: Duration) -> Self {
        Self { inner, latency }
    }
}

impl<D: PageDevice> PageDevice for DelayedDevice<D> {
    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()> {
        self.read_submitted(offset, buf, Instant::now())
    }

    fn read_submitted(&self, offset: u64, buf: &mut [u8], submitted: Instant) -> io::Result<()> {
        let wait = (submitted + self.latency).saturating_duration_since(Instant::now());
        if !wait.is_zero() {
            thread::sleep(wait);
        }
        self.inner.read_at(offset, buf)
    }

    fn len(&self) -> u64 {
        self.inner.len()
    }
}

type Completion = (usize, io::Result<AlignedBuf>);

struct Job {
    device: Arc<dyn PageDevice>,
    offset: u64,
    len: usize,
    index: usize,
    submitted: Instant,
    reply: Sender<Completion>,
}

/// Fixed set of threads performing blocking reads.
pub struct IoPool {
    tx: Option<Sender<Job>>,
    workers: Vec<JoinHandle<()>>,
}

impl IoPool {
    pub fn new(threads: usize) -> Self {
        let (tx, rx) = crossbeam_channel::unbounded::<Job>();
        let workers = (0..threads.max(1))
            .map(|i| {
                let rx = rx.clone();
                thread::Builder::new()
                    .name(format!("page-io-{i}"))
                    .spawn(move || {
                        for job in rx {
                            let mut buf = AlignedBuf::zeroed(job.len);
                            let res = job.device.read_submitted(job.offset, &mut buf, job.submitted).map(|_| buf);
                            // The submitter may have given up on the batch.
                            let _ = job.reply.send((job.index, res));
                        }
                    })
                    .expect("spawn i/o worker")
            })
            .collect();
        Self { tx: Some(tx), workers }
    }

    fn submit(&self, job: Job) {
        self.tx.as_ref().expect("pool is running").send(job).expect("i/o workers alive");
    }
}

impl Drop for IoPool {
    fn drop(&mut self) {
        self.tx.take();
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

/// Process-wide storage read counters.
#[derive(Debug, Default)]
pub struct IoCounters {
    ios: AtomicU64,
    bytes_read: AtomicU64,
}

impl IoCounters {
    pub fn ios(&self) -> u64 {
        self.ios.load(Ordering::Relaxed)
    }

    pub fn bytes_read(&self) -> u64 {
        self.bytes_read.load(Ordering::Relaxed)
    }
}

/// One page delivered by a batch.
#[derive(Debug, Clone)]
pub struct BatchPage {
    pub page: PageId,
    pub buf: PageBuf,
    pub from_cache: bool,
}

/// Batched reader over the data pages of an index file.
pub struct PageReader {
    device: Arc<dyn PageDevice>,
    pool: Option<IoPool>,
    page_size: usize,
    page_count: u32,
    counters: Arc<IoCounters>,
}

impl PageReader {
    /// `io_threads == 0` performs reads synchronously inside `submit`.
    pub fn new(device: Arc<dyn PageDevice>, page_size: usize, page_count: u32, io_threads: usize) -> Self {
        let pool = (io_threads > 0).then(|| IoPool::new(io_threads));
        Self { device, pool, page_size, page_count, counters: Arc::default() }
    }

    pub fn page_size(&self) -> usize {
        self.page_size
    }

    pub fn page_count(&self) -> u32 {
        self.page_count
    }

    pub fn counters(&self) -> &IoCounters {
        &self.counters
    }

    /// Byte offset of data page `page`; slot 0 is the header.
    pub fn offset(&self, page: PageId) -> u64 {
        (page as u64 + 1) * self.page_size as u64
    }

    /// Submits one batch. Duplicate ids are read once; pages found in
    /// `cache` are served without touching storage.
    pub fn submit(&self, pages: &[PageId], cache: Option<&PageCache>) -> Result<InflightBatch> {
        let mut order: Vec<PageId> = Vec::with_capacity(pages.len());
        for &p in pages {
            if p >= self.page_count {
                return Err(Error::InvalidParameter(format!(
                    "page {p} out of range ({} pages)",
                    self.page_count
                )));
            }
            if !order.contains(&p) {
                order.push(p);
            }
        }
        let mut slots: Vec<Option<BatchPage>> = vec![None; order.len()];
        let mut cache_hits = 0;
        let mut ios = 0;
        let (tx, rx) = crossbeam_channel::unbounded();
        for (i, &page) in order.iter().enumerate() {
            if let Some(buf) = cache.and_then(|c| c.get(page)) {
                slots[i] = Some(BatchPage { page, buf, from_cache: true });
                cache_hits += 1;
                continue;
            }
            ios += 1;
            self.counters.ios.fetch_add(1, Ordering::Relaxed);
            let offset = self.offset(page);
            match &self.pool {
                Some(pool) => pool.submit(Job {
                    device: Arc::clone(&self.device),
                    offset,
                    len: self.page_size,
                    index: i,
                    submitted: Instant::now(),
                    reply: tx.clone(),
                }),
                None => {
                    let mut buf = AlignedBuf::zeroed(self.page_size);
                    let res = self.device.read_at(offset, &mut buf).map(|_| buf);
                    tx.send((i, res)).expect("receiver held locally");
                }
            }
        }
        Ok(InflightBatch {
            order,
            slots,
            rx,
            outstanding: ios,
            ios,
            cache_hits,
            bytes_read: 0,
            counters: Arc::clone(&self.counters),
        })
    }

    /// Reads a batch and waits for all of it.
    pub fn read_batch(&self, pages: &[PageId], cache: Option<&PageCache>) -> Result<Vec<BatchPage>> {
        self.submit(pages, cache)?.wait_all()
    }

    /// Reads one page straight from storage, bypassing counters and cache.
    pub fn read_uncounted(&self, page: PageId) -> Result<AlignedBuf> {
        let mut buf = AlignedBuf::zeroed(self.page_size);
        self.device.read_at(self.offset(page), &mut buf)?;
        Ok(buf)
    }
}

/// A submitted batch whose storage reads may still be running.
pub struct InflightBatch {
    order: Vec<PageId>,
    slots: Vec<Option<BatchPage>>,
    rx: Receiver<Completion>,
    outstanding: usize,
    ios: usize,
    cache_hits: usize,
    bytes_read: u64,
    counters: Arc<IoCounters>,
}

impl InflightBatch {
    /// Distinct pages in submission order.
    pub fn pages(&self) -> &[PageId] {
        &self.order
    }

    /// Storage reads issued by this batch.
    pub fn ios(&self) -> usize {
        self.ios
    }

    pub fn cache_hits(&self) -> usize {
        self.cache_hits
    }

    /// Bytes delivered by storage so far.
    pub fn bytes_read(&self) -> u64 {
        self.bytes_read
    }

    pub fn outstanding(&self) -> usize {
        self.outstanding
    }

    /// Blocks until one more storage read completes and returns its page.
    /// Returns `None` once nothing is outstanding.
    pub fn wait_one(&mut self) -> Result<Option<BatchPage>> {
        if self.outstanding == 0 {
            return Ok(None);
        }
        let (i, res) = self
            .rx
            .recv()
            .map_err(|_| Error::Io(io::Error::other("i/o worker disconnected")))?;
        self.outstanding -= 1;
        let buf = res?;
        self.bytes_read += buf.len() as u64;
        self.counters.bytes_read.fetch_add(buf.len() as u64, Ordering::Relaxed);
        let page = BatchPage { page: self.order[i], buf: Arc::new(buf), from_cache: false };
        self.slots[i] = Some(page.clone());
        Ok(Some(page))
    }

    /// Waits for every read and returns all pages in submission order,
    /// leaving the batch's counters readable.
    pub fn finish(&mut self) -> Result<Vec<BatchPage>> {
        while self.wait_one()?.is_some() {}
        Ok(self.slots.iter_mut().map(|s| s.take().expect("every slot completed")).collect())
    }

    pub fn wait_all(mut self) -> Result<Vec<BatchPage>> {
        self.finish()
    }
}
