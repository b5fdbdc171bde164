//! The multidimensional representation on disk.
//!
//! A store directory holds a header file (`header.dhc` or `header.dsc`),
//! `dims.bin` with the dimension labels (just the cardinality when labels are
//! generated), and `cells.bin`, the compressed array: one fixed-size measure
//! tuple per nonempty cell in logical order, packed into pages without
//! spanning. The header and the labels are loaded
//! into memory at open; only `cells.bin` pages go through the cache.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::cache::{PageCache, PagedFile};
use crate::dhc::DhcHeader;
use crate::dsc::{build_dsc, DscHeader, DscParams, SearchStats};
use crate::error::{Error, Result};
use crate::io_util::{le_f64, read_array, read_u32, read_u64, read_u8};
use crate::relation::{DimensionSpec, Relation, RelationSchema};
use crate::table::TableStore;
use crate::PAGE_SIZE;

pub const CELLS_FILE: &str = "cells.bin";
pub const DIMS_FILE: &str = "dims.bin";
pub const DIMS_MAGIC: &[u8; 4] = b"DIM1";

/// A memory-resident logical-to-physical position index.
pub trait PositionIndex: Sized {
    const FILE_NAME: &'static str;
    const TAG: &'static str;

    fn build(positions: &[u64], params: DscParams) -> Result<Self>;
    fn n_cells(&self) -> u64;
    fn locate(&self, target: u64, stats: &mut SearchStats) -> Result<Option<u64>>;
    fn size_bytes(&self) -> u64;
    fn write_file(&self, out: &mut dyn Write) -> Result<()>;
    fn read_file(input: &mut dyn Read) -> Result<Self>;
}

impl PositionIndex for DscHeader {
    const FILE_NAME: &'static str = "header.dsc";
    const TAG: &'static str = "dsc";

    fn build(positions: &[u64], params: DscParams) -> Result<Self> {
        build_dsc(positions, params)
    }
    fn n_cells(&self) -> u64 {
        DscHeader::n_cells(self)
    }
    fn locate(&self, target: u64, stats: &mut SearchStats) -> Result<Option<u64>> {
        Ok(self.search_counted(target, stats))
    }
    fn size_bytes(&self) -> u64 {
        DscHeader::size_bytes(self)
    }
    fn write_file(&self, out: &mut dyn Write) -> Result<()> {
        self.write_to(out)
    }
    fn read_file(input: &mut dyn Read) -> Result<Self> {
        DscHeader::read_from(input)
    }
}

impl PositionIndex for DhcHeader {
    const FILE_NAME: &'static str = "header.dhc";
    const TAG: &'static str = "dhc";

    fn build(positions: &[u64], params: DscParams) -> Result<Self> {
        crate::dhc::build_dhc_header(positions, params)
    }
    fn n_cells(&self) -> u64 {
        DhcHeader::n_cells(self)
    }
    fn locate(&self, target: u64, stats: &mut SearchStats) -> Result<Option<u64>> {
        self.search_counted(target, stats)
    }
    fn size_bytes(&self) -> u64 {
        DhcHeader::size_bytes(self)
    }
    fn write_file(&self, out: &mut dyn Write) -> Result<()> {
        self.write_to(out)
    }
    fn read_file(input: &mut dyn Read) -> Result<Self> {
        DhcHeader::read_from(input)
    }
}

/// Byte sizes of the parts of a multidimensional store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreSizes {
    /// H: header plus dimension arrays, preloaded.
    pub preloaded: u64,
    /// C: the compressed array.
    pub compressed: u64,
}

impl StoreSizes {
    pub fn total(&self) -> u64 {
        self.preloaded + self.compressed
    }
}

#[derive(Debug)]
pub struct MultidimStore<H> {
    schema: RelationSchema,
    header: H,
    cells: PagedFile,
    cells_per_page: u64,
    header_bytes: u64,
    dims_bytes: u64,
}

pub type DhcStore = MultidimStore<DhcHeader>;
pub type DscStore = MultidimStore<DscHeader>;

pub fn payload_bytes(measures: usize) -> usize {
    measures * 8
}

pub fn cells_per_page(measures: usize) -> Result<usize> {
    match PAGE_SIZE / payload_bytes(measures) {
        0 => Err(Error::InvalidSchema(
            "a cell does not fit in one page".into(),
        )),
        n => Ok(n),
    }
}

/// Size of `cells.bin` for `n` cells.
pub fn cells_file_bytes(n: u64, measures: usize) -> Result<u64> {
    let per = cells_per_page(measures)? as u64;
    Ok(n.div_ceil(per) * PAGE_SIZE as u64)
}

fn write_dims(schema: &RelationSchema, out: &mut impl Write) -> Result<()> {
    out.write_all(DIMS_MAGIC)?;
    out.write_all(&(schema.measure_count() as u32).to_le_bytes())?;
    out.write_all(&(schema.dimension_count() as u32).to_le_bytes())?;
    let put = |s: &str, out: &mut dyn Write| -> Result<()> {
        out.write_all(&(s.len() as u32).to_le_bytes())?;
        out.write_all(s.as_bytes())?;
        Ok(())
    };
    for dim in schema.dimensions() {
        put(dim.name(), out)?;
        match dim.explicit_values() {
            None => {
                out.write_all(&[0])?;
                out.write_all(&dim.cardinality().to_le_bytes())?;
            }
            Some(values) => {
                out.write_all(&[1])?;
                out.write_all(&(values.len() as u64).to_le_bytes())?;
                for v in values {
                    put(v, out)?;
                }
            }
        }
    }
    Ok(())
}

fn read_string(input: &mut impl Read) -> Result<String> {
    let len = read_u32(input)? as usize;
    let mut buf = Vec::new();
    input.take(len as u64).read_to_end(&mut buf)?;
    if buf.len() != len {
        return Err(Error::Format("dimension file is truncated".into()));
    }
    String::from_utf8(buf).map_err(|_| Error::Format("dimension label is not UTF-8".into()))
}

fn read_dims(input: &mut impl Read) -> Result<RelationSchema> {
    let magic: [u8; 4] = read_array(input)?;
    if &magic != DIMS_MAGIC {
        return Err(Error::Format("dimension file has a bad magic".into()));
    }
    let measures = read_u32(input)? as usize;
    let d = read_u32(input)?;
    let mut dims = Vec::new();
    for _ in 0..d {
        let name = read_string(input)?;
        let kind = read_u8(input)?;
        let n = read_u64(input)?;
        dims.push(match kind {
            0 => DimensionSpec::with_cardinality(name, n)?,
            1 => {
                let values = (0..n)
                    .map(|_| read_string(input))
                    .collect::<Result<Vec<_>>>()?;
                DimensionSpec::new(name, values)?
            }
            _ => return Err(Error::Format(format!("unknown label kind {kind}"))),
        });
    }
    RelationSchema::new(dims, measures)
}

fn write_cells(relation: &Relation, out: &mut impl Write) -> Result<()> {
    let per = cells_per_page(relation.schema().measure_count())?;
    let mut page = Vec::with_capacity(PAGE_SIZE);
    let n = relation.len();
    for (i, (_, measures)) in relation.iter().enumerate() {
        for v in measures {
            page.extend_from_slice(&v.to_le_bytes());
        }
        if (i + 1) % per == 0 || i + 1 == n {
            page.resize(PAGE_SIZE, 0);
            out.write_all(&page)?;
            page.clear();
        }
    }
    Ok(())
}

impl<H: PositionIndex> MultidimStore<H> {
    /// Writes the header, `dims.bin` and `cells.bin` into `dir` and opens them.
    pub fn build(relation: &Relation, params: DscParams, dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let positions = relation.sorted_logical_positions()?;
        let header = H::build(&positions, params)?;
        let mut out = BufWriter::new(File::create(dir.join(H::FILE_NAME))?);
        header.write_file(&mut out)?;
        out.flush()?;
        let mut out = BufWriter::new(File::create(dir.join(DIMS_FILE))?);
        write_dims(relation.schema(), &mut out)?;
        out.flush()?;
        let mut out = BufWriter::new(File::create(dir.join(CELLS_FILE))?);
        write_cells(relation, &mut out)?;
        out.flush()?;
        drop(out);
        Self::open(dir)
    }

    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let header_path = dir.join(H::FILE_NAME);
        let header_bytes = std::fs::metadata(&header_path)?.len();
        let header = H::read_file(&mut BufReader::new(File::open(&header_path)?))?;
        let dims_path = dir.join(DIMS_FILE);
        let dims_bytes = std::fs::metadata(&dims_path)?.len();
        let schema = read_dims(&mut BufReader::new(File::open(&dims_path)?))?;
        let cells = PagedFile::open(dir.join(CELLS_FILE))?;
        let measures = schema.measure_count();
        if cells.len_bytes() != cells_file_bytes(header.n_cells(), measures)? {
            return Err(Error::CorruptHeader(
                "cell array size disagrees with the header".into(),
            ));
        }
        Ok(Self {
            schema,
            header,
            cells,
            cells_per_page: cells_per_page(measures)? as u64,
            header_bytes,
            dims_bytes,
        })
    }

    pub fn schema(&self) -> &RelationSchema {
        &self.schema
    }

    pub fn header(&self) -> &H {
        &self.header
    }

    pub fn n_cells(&self) -> u64 {
        self.header.n_cells()
    }

    pub fn cells_per_page(&self) -> u64 {
        self.cells_per_page
    }

    /// N: pages of the compressed array.
    pub fn cell_pages(&self) -> u64 {
        self.cells.page_count()
    }

    pub fn cell_space(&self) -> u32 {
        self.cells.space()
    }

    pub fn header_bytes(&self) -> u64 {
        self.header_bytes
    }

    pub fn dims_bytes(&self) -> u64 {
        self.dims_bytes
    }

    pub fn store_sizes(&self) -> StoreSizes {
        StoreSizes {
            preloaded: self.header_bytes + self.dims_bytes,
            compressed: self.cells.len_bytes(),
        }
    }

    /// Physical position of `key`, answered from the header alone.
    pub fn physical_of(&self, key: &[u32], stats: &mut SearchStats) -> Result<Option<u64>> {
        let pos = self.schema.linearize(key)?;
        self.header.locate(pos.0, stats)
    }

    pub fn lookup(&self, cache: &mut PageCache, key: &[u32]) -> Result<Option<Vec<f64>>> {
        self.lookup_counted(cache, key, &mut SearchStats::default())
    }

    /// Lookup that also records how many differences the search decoded.
    pub fn lookup_counted(
        &self,
        cache: &mut PageCache,
        key: &[u32],
        stats: &mut SearchStats,
    ) -> Result<Option<Vec<f64>>> {
        let Some(physical) = self.physical_of(key, stats)? else {
            return Ok(None);
        };
        let page = physical / self.cells_per_page;
        let at =
            (physical % self.cells_per_page) as usize * payload_bytes(self.schema.measure_count());
        let data = cache.read(&self.cells, page)?;
        Ok(Some(
            (0..self.schema.measure_count())
                .map(|j| le_f64(data, at + 8 * j))
                .collect(),
        ))
    }
}

/// A store answering point queries through a page cache.
pub trait LookupStore {
    fn tag(&self) -> &'static str;
    fn schema(&self) -> &RelationSchema;
    fn lookup(&self, cache: &mut PageCache, key: &[u32]) -> Result<Option<Vec<f64>>>;
    /// Bytes loaded into memory in advance, outside the cache.
    fn preloaded_bytes(&self) -> u64;
    /// Total pages that may pass through the cache.
    fn cached_pages(&self) -> u64;
}

impl<H: PositionIndex> LookupStore for MultidimStore<H> {
    fn tag(&self) -> &'static str {
        H::TAG
    }
    fn schema(&self) -> &RelationSchema {
        &self.schema
    }
    fn lookup(&self, cache: &mut PageCache, key: &[u32]) -> Result<Option<Vec<f64>>> {
        MultidimStore::lookup(self, cache, key)
    }
    fn preloaded_bytes(&self) -> u64 {
        self.store_sizes().preloaded
    }
    fn cached_pages(&self) -> u64 {
        self.cell_pages()
    }
}

impl LookupStore for TableStore {
    fn tag(&self) -> &'static str {
        "table"
    }
    fn schema(&self) -> &RelationSchema {
        TableStore::schema(self)
    }
    fn lookup(&self, cache: &mut PageCache, key: &[u32]) -> Result<Option<Vec<f64>>> {
        TableStore::lookup(self, cache, key)
    }
    fn preloaded_bytes(&self) -> u64 {
        0
    }
    fn cached_pages(&self) -> u64 {
        self.level_profile().total()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_geometry() {
        assert_eq!(cells_per_page(2).unwrap(), 256);
        assert_eq!(cells_file_bytes(1, 2).unwrap(), 4096);
        assert_eq!(cells_file_bytes(256, 2).unwrap(), 4096);
        assert_eq!(cells_file_bytes(257, 2).unwrap(), 8192);
        assert_eq!(cells_per_page(3).unwrap(), 170);
        assert!(cells_per_page(513).is_err());
    }

    #[test]
    fn dims_round_trip() {
        let schema = RelationSchema::new(
            vec![
                DimensionSpec::new("region", vec!["east".into(), "west".into()]).unwrap(),
                DimensionSpec::with_cardinality("day", 31).unwrap(),
            ],
            3,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_dims(&schema, &mut buf).unwrap();
        assert_eq!(read_dims(&mut buf.as_slice()).unwrap(), schema);
        assert!(read_dims(&mut &buf[..buf.len() - 2]).is_err());
    }
}
