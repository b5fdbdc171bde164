//! Buffer cache for disk pages.
//!
//! The cache is the only way a store reads a page. Every request is either a
//! hit or a fetch, so the counters give exact page-fetch counts per lookup.
//! Capacity is either unbounded (pages are never evicted, the regime the
//! analytic models assume) or a fixed number of pages with LRU eviction.
//!
//! A cache is driven through `&mut self`, so its counters are confined to
//! one thread; concurrent trials each own a cache.

use std::collections::HashMap;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU32, Ordering};

use crate::error::{Error, Result};
use crate::PAGE_SIZE;

/// Identifies a page: an address space (one per open file or simulated
/// level) and a page number within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PageKey {
    pub space: u32,
    pub page: u64,
}

static NEXT_SPACE: AtomicU32 = AtomicU32::new(1 << 16);

/// Allocates an address space id that no open file uses.
pub fn fresh_space() -> u32 {
    NEXT_SPACE.fetch_add(1, Ordering::Relaxed)
}

/// A read-only file addressed in `PAGE_SIZE` pages.
#[derive(Debug)]
pub struct PagedFile {
    file: File,
    path: PathBuf,
    space: u32,
    len: u64,
}

impl PagedFile {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path)?;
        let len = file.metadata()?.len();
        Ok(Self {
            file,
            path,
            space: fresh_space(),
            len,
        })
    }

    pub fn space(&self) -> u32 {
        self.space
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len_bytes(&self) -> u64 {
        self.len
    }

    pub fn page_count(&self) -> u64 {
        self.len.div_ceil(PAGE_SIZE as u64)
    }

    pub fn key(&self, page: u64) -> PageKey {
        PageKey {
            space: self.space,
            page,
        }
    }

    /// Reads page `page` from disk; bytes past the end of file read as zero.
    pub fn read_page(&self, page: u64, buf: &mut [u8]) -> Result<()> {
        if page >= self.page_count() {
            return Err(Error::Format(format!(
                "page {page} beyond end of {}",
                self.path.display()
            )));
        }
        let offset = page * PAGE_SIZE as u64;
        let want = ((self.len - offset) as usize).min(buf.len());
        read_exact_at(&self.file, &mut buf[..want], offset)?;
        buf[want..].fill(0);
        Ok(())
    }
}

#[cfg(unix)]
fn read_exact_at(file: &File, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
    use std::os::unix::fs::FileExt;
    file.read_exact_at(buf, offset)
}

#[cfg(windows)]
fn read_exact_at(file: &File, mut buf: &mut [u8], mut offset: u64) -> std::io::Result<()> {
    use std::os::windows::fs::FileExt;
    while !buf.is_empty() {
        let n = file.seek_read(buf, offset)?;
        if n == 0 {
            return Err(std::io::ErrorKind::UnexpectedEof.into());
        }
        buf = &mut buf[n..];
        offset += n as u64;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: u64,
    pub fetches: u64,
    pub evictions: u64,
}

impl CacheStats {
    pub fn requests(&self) -> u64 {
        self.hits + self.fetches
    }
}

const NIL: usize = usize::MAX;

#[derive(Debug)]
struct Slot {
    key: PageKey,
    data: Option<Box<[u8]>>,
    prev: usize,
    next: usize,
}

#[derive(Debug)]
pub struct PageCache {
    capacity: Option<usize>,
    map: HashMap<PageKey, usize>,
    slots: Vec<Slot>,
    free: Vec<usize>,
    /// Most recently used.
    head: usize,
    /// Least recently used.
    tail: usize,
    stats: CacheStats,
}

impl PageCache {
    /// `None` means unbounded.
    pub fn new(capacity: Option<usize>) -> Self {
        assert!(
            capacity != Some(0),
            "cache capacity must be at least one page"
        );
        Self {
            capacity,
            map: HashMap::new(),
            slots: Vec::new(),
            free: Vec::new(),
            head: NIL,
            tail: NIL,
            stats: CacheStats::default(),
        }
    }

    pub fn unbounded() -> Self {
        Self::new(None)
    }

    pub fn bounded(pages: usize) -> Self {
        Self::new(Some(pages))
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    /// Changes the capacity, evicting least recently used pages if needed.
    pub fn set_capacity(&mut self, capacity: Option<usize>) {
        assert!(
            capacity != Some(0),
            "cache capacity must be at least one page"
        );
        self.capacity = capacity;
        self.evict_to_capacity();
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    pub fn resident(&self) -> usize {
        self.map.len()
    }

    pub fn resident_in(&self, space: u32) -> usize {
        self.map.keys().filter(|k| k.space == space).count()
    }

    pub fn contains(&self, key: PageKey) -> bool {
        self.map.contains_key(&key)
    }

    pub fn resident_keys(&self) -> impl Iterator<Item = PageKey> + '_ {
        self.map.keys().copied()
    }

    /// Drops every page and resets the counters.
    pub fn clear(&mut self) {
        self.map.clear();
        self.slots.clear();
        self.free.clear();
        self.head = NIL;
        self.tail = NIL;
        self.stats = CacheStats::default();
    }

    /// Requests a page without data; returns `true` on a hit.
    pub fn touch(&mut self, key: PageKey) -> bool {
        if let Some(&slot) = self.map.get(&key) {
            self.stats.hits += 1;
            self.move_to_front(slot);
            true
        } else {
            self.stats.fetches += 1;
            self.insert(key, None);
            false
        }
    }

    /// Returns the contents of `page`, reading it from `file` on a miss.
    pub fn read(&mut self, file: &PagedFile, page: u64) -> Result<&[u8]> {
        let key = file.key(page);
        let slot = match self.map.get(&key) {
            Some(&slot) => {
                self.stats.hits += 1;
                self.move_to_front(slot);
                if self.slots[slot].data.is_none() {
                    let mut buf = vec![0u8; PAGE_SIZE].into_boxed_slice();
                    file.read_page(page, &mut buf)?;
                    self.slots[slot].data = Some(buf);
                }
                slot
            }
            None => {
                let mut buf = vec![0u8; PAGE_SIZE].into_boxed_slice();
                file.read_page(page, &mut buf)?;
                self.stats.fetches += 1;
                self.insert(key, Some(buf))
            }
        };
        Ok(self.slots[slot].data.as_deref().expect("page loaded"))
    }

    fn insert(&mut self, key: PageKey, data: Option<Box<[u8]>>) -> usize {
        if let Some(cap) = self.capacity {
            if self.map.len() >= cap {
                self.evict_lru();
            }
        }
        let slot = Slot {
            key,
            data,
            prev: NIL,
            next: NIL,
        };
        let idx = match self.free.pop() {
            Some(i) => {
                self.slots[i] = slot;
                i
            }
            None => {
                self.slots.push(slot);
                self.slots.len() - 1
            }
        };
        self.map.insert(key, idx);
        self.link_front(idx);
        idx
    }

    fn evict_to_capacity(&mut self) {
        if let Some(cap) = self.capacity {
            while self.map.len() > cap {
                self.evict_lru();
            }
        }
    }

    fn evict_lru(&mut self) {
        let victim = self.tail;
        if victim == NIL {
            return;
        }
        self.unlink(victim);
        let key = self.slots[victim].key;
        self.slots[victim].data = None;
        self.map.remove(&key);
        self.free.push(victim);
        self.stats.evictions += 1;
    }

    fn move_to_front(&mut self, idx: usize) {
        if self.head != idx {
            self.unlink(idx);
            self.link_front(idx);
        }
    }

    fn unlink(&mut self, idx: usize) {
        let (prev, next) = (self.slots[idx].prev, self.slots[idx].next);
        if prev != NIL {
            self.slots[prev].next = next;
        } else {
            self.head = next;
        }
        if next != NIL {
            self.slots[next].prev = prev;
        } else {
            self.tail = prev;
        }
        self.slots[idx].prev = NIL;
        self.slots[idx].next = NIL;
    }

    fn link_front(&mut self, idx: usize) {
        self.slots[idx].prev = NIL;
        self.slots[idx].next = self.head;
        if self.head != NIL {
            self.slots[self.head].prev = idx;
        }
        self.head = idx;
        if self.tail == NIL {
            self.tail = idx;
        }
    }
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    fn key(page: u64) -> PageKey {
        PageKey { space: 1, page }
    }

    #[test]
    fn unbounded_never_evicts() {
        let mut c = PageCache::unbounded();
        for p in 0..1000 {
            assert!(!c.touch(key(p)));
        }
        for p in 0..1000 {
            assert!(c.touch(key(p)));
        }
        let s = c.stats();
        assert_eq!((s.fetches, s.hits, s.evictions), (1000, 1000, 0));
        assert_eq!(c.resident(), 1000);
    }

    #[test]
    fn lru_order() {
        let mut c = PageCache::bounded(2);
        c.touch(key(1));
        c.touch(key(2));
        c.touch(key(1)); // 2 is now least recent
        c.touch(key(3));
        assert!(c.contains(key(1)));
        assert!(!c.contains(key(2)));
        assert!(c.contains(key(3)));
        assert_eq!(c.stats().evictions, 1);
        assert_eq!(c.resident(), 2);
    }

    #[test]
    fn shrinking_evicts() {
        let mut c = PageCache::bounded(10);
        for p in 0..10 {
            c.touch(key(p));
        }
        c.set_capacity(Some(3));
        assert_eq!(c.resident(), 3);
        for p in 7..10 {
            assert!(c.contains(key(p)));
        }
        c.set_capacity(None);
        for p in 100..200 {
            c.touch(key(p));
        }
        assert_eq!(c.resident(), 103);
    }

    #[test]
    fn bounded_cache_respects_capacity_under_random_load() {
        let mut c = PageCache::bounded(17);
        let mut x = 12345u64;
        for _ in 0..10_000 {
            x = x
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            c.touch(key((x >> 40) % 100));
            assert!(c.resident() <= 17);
        }
        assert_eq!(c.stats().requests(), 10_000);
    }

    #[test]
    fn reads_pages_from_file() {
        let mut tmp = tempfile::NamedTempFile::new().unwrap();
        let mut data = vec![0u8; PAGE_SIZE + 10];
        data[0] = 7;
        data[PAGE_SIZE] = 9;
        data[PAGE_SIZE + 9] = 11;
        tmp.write_all(&data).unwrap();
        tmp.flush().unwrap();
        let f = PagedFile::open(tmp.path()).unwrap();
        assert_eq!(f.page_count(), 2);
        let mut c = PageCache::unbounded();
        assert_eq!(c.read(&f, 0).unwrap()[0], 7);
        let p1 = c.read(&f, 1).unwrap();
        assert_eq!((p1[0], p1[9], p1[10]), (9, 11, 0));
        c.read(&f, 1).unwrap();
        assert_eq!(c.stats().fetches, 2);
        assert_eq!(c.stats().hits, 1);
        assert!(c.read(&f, 2).is_err());
    }
}
