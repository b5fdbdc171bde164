//! Difference-Huffman coding: the jump sequence of [`crate::dsc`] plus the
//! difference sequence replaced by its Huffman code.
//!
//! Each jump record carries the bit offset just past its zero symbol, so a
//! search decodes only the codewords of the one segment that can hold the
//! target and stops as soon as the running position reaches or passes it.

use std::io::{Read, Write};

use crate::bits::{BitStream, BitWriter};
use crate::dsc::{check_jumps, split_positions, DscHeader, DscParams, JumpRecord, SearchStats};
use crate::error::{Error, Result};
use crate::huffman::{build_code, CanonicalCode, SymbolFrequencyTable};
use crate::io_util::{read_array, read_u64, read_u8};

pub const DHC_MAGIC: &[u8; 4] = b"DHC1";
pub const DHC_VERSION: u8 = 1;
pub const DHC_JUMP_RECORD_BYTES: u64 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DhcJump {
    pub logical: u64,
    pub physical: u64,
    /// First bit after this segment's zero symbol.
    pub bit_offset: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DhcHeader {
    params: DscParams,
    n_cells: u64,
    code: CanonicalCode,
    jumps: Vec<DhcJump>,
    bitstream: BitStream,
}

pub fn build_dhc_header(positions: &[u64], params: DscParams) -> Result<DhcHeader> {
    let (differences, jumps) = split_positions(positions, params)?;
    encode_parts(params, &differences, &jumps)
}

fn encode_parts(params: DscParams, differences: &[u32], jumps: &[JumpRecord]) -> Result<DhcHeader> {
    let freqs = SymbolFrequencyTable::from_symbols(differences.iter().copied());
    let code = build_code(&freqs)?;
    let mut w = BitWriter::new();
    let mut out = Vec::with_capacity(jumps.len());
    let mut next = jumps.iter().peekable();
    for (i, &d) in differences.iter().enumerate() {
        code.encode_into(&[d], &mut w)?;
        if let Some(j) = next.next_if(|j| j.diff_index == i as u64) {
            out.push(DhcJump {
                logical: j.logical,
                physical: j.physical,
                bit_offset: w.bit_len(),
            });
        }
    }
    Ok(DhcHeader {
        params,
        n_cells: differences.len() as u64,
        code,
        jumps: out,
        bitstream: w.finish(),
    })
}

impl DhcHeader {
    pub fn from_dsc(dsc: &DscHeader) -> Result<Self> {
        encode_parts(dsc.params(), dsc.differences(), dsc.jumps())
    }

    pub fn params(&self) -> DscParams {
        self.params
    }

    pub fn n_cells(&self) -> u64 {
        self.n_cells
    }

    pub fn code(&self) -> &CanonicalCode {
        &self.code
    }

    pub fn jumps(&self) -> &[DhcJump] {
        &self.jumps
    }

    pub fn bitstream(&self) -> &BitStream {
        &self.bitstream
    }

    /// Decodes the whole difference sequence.
    pub fn differences(&self) -> Result<Vec<u32>> {
        let (d, end) = self
            .code
            .decode_prefix(&self.bitstream, 0, self.n_cells as usize)?;
        if d.len() as u64 != self.n_cells || end != self.bitstream.bit_len() {
            return Err(Error::CorruptHeader(format!(
                "bitstream holds {} symbols, expected {}",
                d.len(),
                self.n_cells
            )));
        }
        Ok(d)
    }

    pub fn to_dsc(&self) -> Result<DscHeader> {
        let jumps = self
            .jumps
            .iter()
            .map(|j| JumpRecord {
                logical: j.logical,
                physical: j.physical,
                diff_index: j.physical,
            })
            .collect();
        DscHeader::from_parts(self.params, self.differences()?, jumps)
    }

    pub fn reconstruct_all(&self) -> Result<Vec<u64>> {
        self.to_dsc()?.reconstruct_all()
    }

    pub fn max_segment_len(&self) -> u64 {
        (0..self.jumps.len())
            .map(|k| self.segment_len(k))
            .max()
            .unwrap_or(0)
    }

    fn segment_len(&self, k: usize) -> u64 {
        let end = self.jumps.get(k + 1).map_or(self.n_cells, |j| j.physical);
        end - self.jumps[k].physical - 1
    }

    pub fn search(&self, target: u64) -> Result<Option<u64>> {
        self.search_counted(target, &mut SearchStats::default())
    }

    pub fn search_counted(&self, target: u64, stats: &mut SearchStats) -> Result<Option<u64>> {
        let k = self.jumps.partition_point(|j| j.logical <= target);
        if k == 0 {
            stats.record(0);
            return Ok(None);
        }
        let jump = self.jumps[k - 1];
        if jump.logical == target {
            stats.record(0);
            return Ok(Some(jump.physical));
        }
        let len = self.segment_len(k - 1);
        let mut bit = jump.bit_offset;
        let mut pos = jump.logical;
        let mut decoded = 0u64;
        let mut found = None;
        while decoded < len {
            let d = self.code.decode_one(&self.bitstream, &mut bit)?;
            decoded += 1;
            if d == 0 {
                break;
            }
            pos += u64::from(d);
            if pos >= target {
                if pos == target {
                    found = Some(jump.physical + decoded);
                }
                break;
            }
        }
        stats.record(decoded);
        Ok(found)
    }

    pub fn size_bytes(&self) -> u64 {
        4 + 1
            + 1
            + 8
            + 8
            + self.jumps.len() as u64 * DHC_JUMP_RECORD_BYTES
            + self.code.serialized_len()
            + 8
            + self.bitstream.bytes().len() as u64
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(DHC_MAGIC)?;
        out.write_all(&[DHC_VERSION, self.params.bits() as u8])?;
        out.write_all(&self.n_cells.to_le_bytes())?;
        out.write_all(&(self.jumps.len() as u64).to_le_bytes())?;
        for j in &self.jumps {
            out.write_all(&j.logical.to_le_bytes())?;
            out.write_all(&j.physical.to_le_bytes())?;
            out.write_all(&j.bit_offset.to_le_bytes())?;
        }
        self.code.write_to(&mut out)?;
        out.write_all(&self.bitstream.bit_len().to_le_bytes())?;
        out.write_all(self.bitstream.bytes())?;
        out.flush()?;
        Ok(())
    }

    /// Reads and fully validates a header: the stream must decode to exactly
    /// `N` symbols whose zeros line up with the jump records.
    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let magic: [u8; 4] = read_array(&mut input)?;
        if &magic != DHC_MAGIC {
            return Err(Error::CorruptHeader("bad magic".into()));
        }
        let version = read_u8(&mut input)?;
        if version != DHC_VERSION {
            return Err(Error::CorruptHeader(format!(
                "unsupported version {version}"
            )));
        }
        let params = DscParams::new(u32::from(read_u8(&mut input)?))?;
        let n_cells = read_u64(&mut input)?;
        let k = read_u64(&mut input)?;
        if k > n_cells {
            return Err(Error::CorruptHeader("more jumps than cells".into()));
        }
        let mut jumps = Vec::with_capacity(k as usize);
        for _ in 0..k {
            jumps.push(DhcJump {
                logical: read_u64(&mut input)?,
                physical: read_u64(&mut input)?,
                bit_offset: read_u64(&mut input)?,
            });
        }
        let code = CanonicalCode::read_from(&mut input)?;
        let bit_len = read_u64(&mut input)?;
        let mut bytes = vec![0u8; bit_len.div_ceil(8) as usize];
        input.read_exact(&mut bytes)?;
        let header = Self {
            params,
            n_cells,
            code,
            jumps,
            bitstream: BitStream::from_parts(bytes, bit_len)?,
        };
        header.validate()?;
        Ok(header)
    }

    fn validate(&self) -> Result<()> {
        let max = self.params.max_difference();
        let mut zeros = Vec::new();
        let mut offsets_after_zero = Vec::new();
        let mut bit = 0u64;
        for i in 0..self.n_cells {
            if bit >= self.bitstream.bit_len() {
                return Err(Error::CorruptHeader("bitstream ends early".into()));
            }
            let d = self.code.decode_one(&self.bitstream, &mut bit)?;
            if u64::from(d) > max {
                return Err(Error::CorruptHeader(
                    "difference exceeds element width".into(),
                ));
            }
            if d == 0 {
                zeros.push(i);
                offsets_after_zero.push(bit);
            }
        }
        if bit != self.bitstream.bit_len() {
            return Err(Error::CorruptHeader(
                "trailing bits after last symbol".into(),
            ));
        }
        let records: Vec<JumpRecord> = self
            .jumps
            .iter()
            .map(|j| JumpRecord {
                logical: j.logical,
                physical: j.physical,
                diff_index: j.physical,
            })
            .collect();
        check_jumps(
            &records,
            self.n_cells,
            |i| zeros.binary_search(&i).is_ok(),
            zeros.len() as u64,
        )?;
        if self
            .jumps
            .iter()
            .zip(&offsets_after_zero)
            .any(|(j, &off)| j.bit_offset != off)
        {
            return Err(Error::CorruptHeader("jump bit offset is misplaced".into()));
        }
        Ok(())
    }
}
