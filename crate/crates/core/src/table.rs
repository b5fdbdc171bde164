//! The table representation: a heap file of fixed-width rows clustered by
//! key, plus a bulk-loaded B-tree on the full composite key.
//!
//! `table.bin` holds the heap pages. `index.btree` holds a metadata page
//! followed by the tree, root first and one level after another down to the
//! leaves. Levels are numbered from 1 (root) to L-1 (leaves) and the heap is
//! level L. The metadata page is read once at open and kept in memory; every
//! other page is read through a [`PageCache`].

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::cache::{PageCache, PageKey, PagedFile};
use crate::error::{Error, Result};
use crate::io_util::{le_f64, le_u16, le_u32, le_u64};
use crate::relation::{DimensionSpec, Relation, RelationSchema};
use crate::PAGE_SIZE;

pub const HEAP_FILE: &str = "table.bin";
pub const INDEX_FILE: &str = "index.btree";
pub const BTREE_MAGIC: &[u8; 4] = b"BTR1";
pub const BTREE_VERSION: u8 = 1;

/// Pages per level, root first, heap last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelProfile {
    pages: Vec<u64>,
}

impl LevelProfile {
    pub fn new(pages: Vec<u64>) -> Result<Self> {
        if pages.len() < 2 {
            return Err(Error::InvalidSchema(
                "a level profile needs at least two levels".into(),
            ));
        }
        if pages[0] != 1 {
            return Err(Error::InvalidSchema(
                "the root level has exactly one page".into(),
            ));
        }
        if pages.contains(&0) {
            return Err(Error::InvalidSchema(
                "every level has at least one page".into(),
            ));
        }
        Ok(Self { pages })
    }

    /// L.
    pub fn levels(&self) -> usize {
        self.pages.len()
    }

    pub fn pages(&self) -> &[u64] {
        &self.pages
    }

    /// N.
    pub fn total(&self) -> u64 {
        self.pages.iter().sum()
    }

    /// N_m.
    pub fn max(&self) -> u64 {
        *self.pages.iter().max().expect("nonempty profile")
    }
}

pub fn row_width(dims: usize, measures: usize) -> usize {
    dims * 4 + measures * 8
}

pub fn rows_per_page(dims: usize, measures: usize) -> Result<usize> {
    match PAGE_SIZE / row_width(dims, measures) {
        0 => Err(Error::InvalidSchema(
            "a row does not fit in one page".into(),
        )),
        n => Ok(n),
    }
}

/// Entries per B-tree node, leaf or internal.
pub fn fanout(dims: usize) -> Result<usize> {
    match (PAGE_SIZE - 2) / (dims * 4 + 6) {
        0 | 1 => Err(Error::InvalidSchema(
            "keys too wide for a B-tree page".into(),
        )),
        f => Ok(f),
    }
}

/// Splits `n` entries into nodes of at most `f`; when the last node would be
/// under half full it shares entries with its neighbour.
fn node_sizes(n: usize, f: usize) -> Vec<usize> {
    if n <= f {
        return vec![n];
    }
    let k = n.div_ceil(f);
    let mut sizes = vec![f; k];
    let last = n - (k - 1) * f;
    sizes[k - 1] = last;
    if last < f.div_ceil(2) {
        let pair = f + last;
        sizes[k - 2] = pair - pair / 2;
        sizes[k - 1] = pair / 2;
    }
    sizes
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct IndexMeta {
    fanout: u32,
    /// L, counting the heap.
    levels: u32,
    dims: u32,
    measures: u32,
    rows: u64,
    rows_per_page: u32,
    heap_pages: u32,
    /// (first page, page count) of each tree level, root first.
    ranges: Vec<(u32, u32)>,
    cardinalities: Vec<u64>,
}

impl IndexMeta {
    fn encode(&self) -> Result<Vec<u8>> {
        let mut b = Vec::with_capacity(PAGE_SIZE);
        b.extend_from_slice(BTREE_MAGIC);
        b.extend_from_slice(&[BTREE_VERSION, 0, 0, 0]);
        b.extend_from_slice(&(PAGE_SIZE as u32).to_le_bytes());
        for v in [self.fanout, self.levels, self.dims, self.measures] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&self.rows.to_le_bytes());
        b.extend_from_slice(&self.rows_per_page.to_le_bytes());
        b.extend_from_slice(&self.heap_pages.to_le_bytes());
        for &(first, count) in &self.ranges {
            b.extend_from_slice(&first.to_le_bytes());
            b.extend_from_slice(&count.to_le_bytes());
        }
        for c in &self.cardinalities {
            b.extend_from_slice(&c.to_le_bytes());
        }
        if b.len() > PAGE_SIZE {
            return Err(Error::InvalidSchema(
                "index metadata exceeds one page".into(),
            ));
        }
        b.resize(PAGE_SIZE, 0);
        Ok(b)
    }

    fn decode(b: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::CorruptHeader(format!("index metadata: {m}"));
        if &b[..4] != BTREE_MAGIC {
            return Err(bad("bad magic"));
        }
        if b[4] != BTREE_VERSION {
            return Err(bad("unsupported version"));
        }
        if le_u32(b, 8) as usize != PAGE_SIZE {
            return Err(bad("page size mismatch"));
        }
        let levels = le_u32(b, 16);
        let dims = le_u32(b, 20);
        if levels < 2 || dims == 0 || 44 + 8 * (levels as usize - 1) + 8 * dims as usize > PAGE_SIZE
        {
            return Err(bad("implausible level or dimension count"));
        }
        let mut at = 44;
        let mut ranges = Vec::new();
        for _ in 1..levels {
            ranges.push((le_u32(b, at), le_u32(b, at + 4)));
            at += 8;
        }
        let mut cardinalities = Vec::new();
        for _ in 0..dims {
            cardinalities.push(le_u64(b, at));
            at += 8;
        }
        Ok(Self {
            fanout: le_u32(b, 12),
            levels,
            dims,
            measures: le_u32(b, 24),
            rows: le_u64(b, 28),
            rows_per_page: le_u32(b, 36),
            heap_pages: le_u32(b, 40),
            ranges,
            cardinalities,
        })
    }
}

/// Heap file plus B-tree, opened read-only.
#[derive(Debug)]
pub struct TableStore {
    schema: RelationSchema,
    meta: IndexMeta,
    index: PagedFile,
    heap: PagedFile,
}

fn write_key(out: &mut Vec<u8>, key: &[u32]) {
    for k in key {
        out.extend_from_slice(&k.to_le_bytes());
    }
}

fn cmp_key(page: &[u8], at: usize, key: &[u32]) -> Ordering {
    for (j, &k) in key.iter().enumerate() {
        match le_u32(page, at + 4 * j).cmp(&k) {
            Ordering::Equal => {}
            o => return o,
        }
    }
    Ordering::Equal
}

impl TableStore {
    /// Writes `table.bin` and `index.btree` into `dir` and opens them.
    pub fn build(relation: &Relation, dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        if relation.is_empty() {
            return Err(Error::EmptyRelation);
        }
        let schema = relation.schema();
        let d = schema.dimension_count();
        let m = schema.measure_count();
        let rpp = rows_per_page(d, m)?;
        let f = fanout(d)?;
        let keys: Vec<Vec<u32>> = relation.keys().collect();
        let n = keys.len();

        let mut heap = BufWriter::new(File::create(dir.join(HEAP_FILE))?);
        let mut page = Vec::with_capacity(PAGE_SIZE);
        for (i, ((_, measures), key)) in relation.iter().zip(&keys).enumerate() {
            write_key(&mut page, key);
            for v in measures {
                page.extend_from_slice(&v.to_le_bytes());
            }
            if (i + 1) % rpp == 0 || i + 1 == n {
                page.resize(PAGE_SIZE, 0);
                heap.write_all(&page)?;
                page.clear();
            }
        }
        heap.flush()?;
        let heap_pages = n.div_ceil(rpp);

        // Node sizes bottom-up; level 0 are the leaves.
        let mut shapes = vec![node_sizes(n, f)];
        while shapes.last().unwrap().len() > 1 {
            let below = shapes.last().unwrap().len();
            shapes.push(node_sizes(below, f));
        }
        shapes.reverse();
        let mut ranges = Vec::with_capacity(shapes.len());
        let mut next_page = 1u32;
        for level in &shapes {
            ranges.push((next_page, level.len() as u32));
            next_page += level.len() as u32;
        }
        let levels = shapes.len() + 1;
        let meta = IndexMeta {
            fanout: f as u32,
            levels: levels as u32,
            dims: d as u32,
            measures: m as u32,
            rows: n as u64,
            rows_per_page: rpp as u32,
            heap_pages: heap_pages as u32,
            ranges: ranges.clone(),
            cardinalities: schema.cardinalities(),
        };

        // first_row[t][j]: index of the smallest row under node j of level t.
        let mut first_row: Vec<Vec<usize>> = vec![Vec::new(); shapes.len()];
        let leaf_level = shapes.len() - 1;
        let mut acc = 0;
        for &s in &shapes[leaf_level] {
            first_row[leaf_level].push(acc);
            acc += s;
        }
        for t in (0..leaf_level).rev() {
            let mut child = 0;
            let mut firsts = Vec::with_capacity(shapes[t].len());
            for &s in &shapes[t] {
                firsts.push(first_row[t + 1][child]);
                child += s;
            }
            first_row[t] = firsts;
        }

        let mut index = BufWriter::new(File::create(dir.join(INDEX_FILE))?);
        index.write_all(&meta.encode()?)?;
        for t in 0..shapes.len() {
            let mut start = 0;
            for &s in &shapes[t] {
                page.clear();
                page.extend_from_slice(&(s as u16).to_le_bytes());
                if t == leaf_level {
                    for (row, key) in keys.iter().enumerate().skip(start).take(s) {
                        write_key(&mut page, key);
                        page.extend_from_slice(&((row / rpp) as u32).to_le_bytes());
                        page.extend_from_slice(&((row % rpp) as u16).to_le_bytes());
                    }
                } else {
                    for c in start..start + s {
                        write_key(&mut page, &keys[first_row[t + 1][c]]);
                    }
                    let child_first = ranges[t + 1].0;
                    for c in start..start + s {
                        page.extend_from_slice(&(child_first + c as u32).to_le_bytes());
                    }
                }
                debug_assert!(page.len() <= PAGE_SIZE);
                page.resize(PAGE_SIZE, 0);
                index.write_all(&page)?;
                start += s;
            }
        }
        index.flush()?;
        drop((heap, index));
        Self::open_with_schema(dir, schema.clone())
    }

    /// Opens a store; dimension labels are synthesized from the cardinalities
    /// recorded in the index metadata.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let index = PagedFile::open(dir.join(INDEX_FILE))?;
        let mut buf = vec![0u8; PAGE_SIZE];
        index.read_page(0, &mut buf)?;
        let meta = IndexMeta::decode(&buf)?;
        let dims = meta
            .cardinalities
            .iter()
            .enumerate()
            .map(|(j, &c)| DimensionSpec::with_cardinality(format!("d{j}_"), c))
            .collect::<Result<Vec<_>>>()?;
        let schema = RelationSchema::new(dims, meta.measures as usize)?;
        Self::open_with_schema(dir, schema)
    }

    pub fn open_with_schema(dir: impl AsRef<Path>, schema: RelationSchema) -> Result<Self> {
        let dir = dir.as_ref();
        let index = PagedFile::open(dir.join(INDEX_FILE))?;
        let heap = PagedFile::open(dir.join(HEAP_FILE))?;
        let mut buf = vec![0u8; PAGE_SIZE];
        index.read_page(0, &mut buf)?;
        let meta = IndexMeta::decode(&buf)?;
        if meta.cardinalities != schema.cardinalities()
            || meta.measures as usize != schema.measure_count()
        {
            return Err(Error::CorruptHeader(
                "index metadata does not match schema".into(),
            ));
        }
        let tree_pages: u64 = meta.ranges.iter().map(|r| u64::from(r.1)).sum();
        if index.page_count() != 1 + tree_pages || heap.page_count() != u64::from(meta.heap_pages) {
            return Err(Error::CorruptHeader(
                "file sizes disagree with index metadata".into(),
            ));
        }
        Ok(Self {
            schema,
            meta,
            index,
            heap,
        })
    }

    pub fn schema(&self) -> &RelationSchema {
        &self.schema
    }

    pub fn fanout(&self) -> usize {
        self.meta.fanout as usize
    }

    pub fn rows(&self) -> u64 {
        self.meta.rows
    }

    pub fn rows_per_page(&self) -> usize {
        self.meta.rows_per_page as usize
    }

    /// L, counting the heap.
    pub fn levels(&self) -> usize {
        self.meta.levels as usize
    }

    pub fn level_profile(&self) -> LevelProfile {
        let mut pages: Vec<u64> = self.meta.ranges.iter().map(|r| u64::from(r.1)).collect();
        pages.push(u64::from(self.meta.heap_pages));
        LevelProfile::new(pages).expect("bulk load yields a valid profile")
    }

    pub fn heap_bytes(&self) -> u64 {
        self.heap.len_bytes()
    }

    pub fn index_bytes(&self) -> u64 {
        self.index.len_bytes()
    }

    /// S: total on-disk size.
    pub fn size_bytes(&self) -> u64 {
        self.heap_bytes() + self.index_bytes()
    }

    pub fn heap_space(&self) -> u32 {
        self.heap.space()
    }

    pub fn index_space(&self) -> u32 {
        self.index.space()
    }

    /// Level (1-based, heap = L) a cached page belongs to.
    pub fn level_of(&self, key: PageKey) -> Option<usize> {
        if key.space == self.heap.space() {
            return Some(self.levels());
        }
        if key.space != self.index.space() {
            return None;
        }
        self.meta
            .ranges
            .iter()
            .position(|&(first, count)| {
                key.page >= u64::from(first) && key.page < u64::from(first) + u64::from(count)
            })
            .map(|t| t + 1)
    }

    /// Pages of this store resident in `cache`, per level.
    pub fn resident_per_level(&self, cache: &PageCache) -> Vec<u64> {
        let mut out = vec![0u64; self.levels()];
        for k in cache.resident_keys() {
            if let Some(l) = self.level_of(k) {
                out[l - 1] += 1;
            }
        }
        out
    }

    fn key_width(&self) -> usize {
        4 * self.meta.dims as usize
    }

    /// Descends to the leaf that would hold `key` and returns (heap page,
    /// slot) if it is there. Touches exactly one page per tree level.
    fn locate(&self, cache: &mut PageCache, key: &[u32]) -> Result<Option<(u64, usize)>> {
        let kw = self.key_width();
        let mut page_id = u64::from(self.meta.ranges[0].0);
        let tree_levels = self.meta.ranges.len();
        for _ in 1..tree_levels {
            let page = cache.read(&self.index, page_id)?;
            let n = le_u16(page, 0) as usize;
            if n == 0 || 2 + n * (kw + 4) > PAGE_SIZE {
                return Err(Error::CorruptHeader(format!(
                    "internal node {page_id} is malformed"
                )));
            }
            // Last child whose minimum key is <= key; child 0 otherwise.
            let mut lo = 0;
            let mut hi = n;
            while lo < hi {
                let mid = (lo + hi) / 2;
                if cmp_key(page, 2 + mid * kw, key) != Ordering::Greater {
                    lo = mid + 1;
                } else {
                    hi = mid;
                }
            }
            let child = lo.saturating_sub(1);
            page_id = u64::from(le_u32(page, 2 + n * kw + 4 * child));
        }
        let page = cache.read(&self.index, page_id)?;
        let n = le_u16(page, 0) as usize;
        let entry = kw + 6;
        if n == 0 || 2 + n * entry > PAGE_SIZE {
            return Err(Error::CorruptHeader(format!("leaf {page_id} is malformed")));
        }
        let (mut lo, mut hi) = (0, n);
        while lo < hi {
            let mid = (lo + hi) / 2;
            let at = 2 + mid * entry;
            match cmp_key(page, at, key) {
                Ordering::Less => lo = mid + 1,
                Ordering::Greater => hi = mid,
                Ordering::Equal => {
                    let heap_page = u64::from(le_u32(page, at + kw));
                    let slot = le_u16(page, at + kw + 4) as usize;
                    return Ok(Some((heap_page, slot)));
                }
            }
        }
        Ok(None)
    }

    pub fn lookup(&self, cache: &mut PageCache, key: &[u32]) -> Result<Option<Vec<f64>>> {
        self.schema.check_key(key)?;
        let Some((heap_page, slot)) = self.locate(cache, key)? else {
            return Ok(None);
        };
        if slot >= self.rows_per_page() {
            return Err(Error::CorruptHeader("slot beyond page capacity".into()));
        }
        let kw = self.key_width();
        let at = slot * row_width(self.meta.dims as usize, self.meta.measures as usize);
        let page = cache.read(&self.heap, heap_page)?;
        if cmp_key(page, at, key) != Ordering::Equal {
            return Err(Error::CorruptHeader(
                "heap row does not match index entry".into(),
            ));
        }
        Ok(Some(
            (0..self.meta.measures as usize)
                .map(|j| le_f64(page, at + kw + 8 * j))
                .collect(),
        ))
    }

    /// Keys in leaf order, read through `cache`.
    pub fn leaf_keys(&self, cache: &mut PageCache) -> Result<Vec<Vec<u32>>> {
        let kw = self.key_width();
        let d = self.meta.dims as usize;
        let &(first, count) = self.meta.ranges.last().expect("at least one tree level");
        let mut out = Vec::with_capacity(self.meta.rows as usize);
        for p in first..first + count {
            let page = cache.read(&self.index, u64::from(p))?;
            let n = le_u16(page, 0) as usize;
            for e in 0..n {
                let at = 2 + e * (kw + 6);
                out.push((0..d).map(|j| le_u32(page, at + 4 * j)).collect());
            }
        }
        Ok(out)
    }

    /// Entry counts of every tree node, root first.
    pub fn node_occupancy(&self, cache: &mut PageCache) -> Result<Vec<Vec<usize>>> {
        self.meta
            .ranges
            .iter()
            .map(|&(first, count)| {
                (first..first + count)
                    .map(|p| Ok(le_u16(cache.read(&self.index, u64::from(p))?, 0) as usize))
                    .collect()
            })
            .collect()
    }
}
