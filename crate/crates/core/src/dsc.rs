//! Difference sequence compression of the logical-position sequence.
//!
//! The header stores, for every nonempty cell, the gap to the previous
//! cell's logical position in `s` bits. A gap that does not fit (and the
//! first cell) is stored as zero and the absolute position goes into the
//! jump sequence instead. Each zero of the difference sequence owns exactly
//! one jump record, in order, so a lookup only ever decodes the run of
//! differences between two consecutive zeros.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io_util::{read_array, read_u64, read_u8};

pub const DSC_MAGIC: &[u8; 4] = b"DSC1";
pub const DSC_VERSION: u8 = 1;
/// magic + version + s + N + K
pub const DSC_FIXED_BYTES: u64 = 4 + 1 + 1 + 8 + 8;
pub const DSC_JUMP_RECORD_BYTES: u64 = 24;

/// Width of one difference element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct DscParams {
    bits: u32,
}

impl DscParams {
    pub fn new(bits: u32) -> Result<Self> {
        match bits {
            8 | 16 | 32 => Ok(Self { bits }),
            other => Err(Error::InvalidDifferenceWidth(other)),
        }
    }

    pub fn bits(self) -> u32 {
        self.bits
    }

    /// The largest gap that is stored as a difference, `2^s - 1`.
    pub fn max_difference(self) -> u64 {
        (1u64 << self.bits) - 1
    }
}

impl Default for DscParams {
    fn default() -> Self {
        Self { bits: 16 }
    }
}

impl TryFrom<u32> for DscParams {
    type Error = Error;

    fn try_from(bits: u32) -> Result<Self> {
        Self::new(bits)
    }
}

impl From<DscParams> for u32 {
    fn from(p: DscParams) -> u32 {
        p.bits
    }
}

/// An anchor for one zero of the difference sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JumpRecord {
    pub logical: u64,
    pub physical: u64,
    pub diff_index: u64,
}

/// Counts difference elements decoded by searches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub searches: u64,
    pub decoded: u64,
    /// Largest number of elements decoded by a single search.
    pub max_decoded: u64,
}

impl SearchStats {
    pub(crate) fn record(&mut self, decoded: u64) {
        self.searches += 1;
        self.decoded += decoded;
        self.max_decoded = self.max_decoded.max(decoded);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DscHeader {
    params: DscParams,
    differences: Vec<u32>,
    jumps: Vec<JumpRecord>,
}

/// Splits strictly increasing positions into the overflow difference
/// sequence and the jump records anchoring its zeros.
pub(crate) fn split_positions(
    positions: &[u64],
    params: DscParams,
) -> Result<(Vec<u32>, Vec<JumpRecord>)> {
    let (&first, _) = positions.split_first().ok_or(Error::EmptyInput)?;
    let max = params.max_difference();
    let mut differences = Vec::with_capacity(positions.len());
    let mut jumps = vec![JumpRecord {
        logical: first,
        physical: 0,
        diff_index: 0,
    }];
    differences.push(0);
    for (i, w) in positions.windows(2).enumerate() {
        let index = i + 1;
        if w[1] <= w[0] {
            return Err(Error::NotStrictlyIncreasing { index });
        }
        let gap = w[1] - w[0];
        if gap <= max {
            differences.push(gap as u32);
        } else {
            differences.push(0);
            jumps.push(JumpRecord {
                logical: w[1],
                physical: index as u64,
                diff_index: index as u64,
            });
        }
    }
    Ok((differences, jumps))
}

pub fn build_dsc(positions: &[u64], params: DscParams) -> Result<DscHeader> {
    let (differences, jumps) = split_positions(positions, params)?;
    Ok(DscHeader {
        params,
        differences,
        jumps,
    })
}

/// Checks the jump/zero correspondence shared by both header kinds.
pub(crate) fn check_jumps(
    jumps: &[JumpRecord],
    n_cells: u64,
    mut zero_at: impl FnMut(u64) -> bool,
    zero_count: u64,
) -> Result<()> {
    let first = jumps
        .first()
        .ok_or_else(|| Error::CorruptHeader("no jump records".into()))?;
    if first.physical != 0 || first.diff_index != 0 {
        return Err(Error::CorruptHeader(
            "first jump does not anchor cell 0".into(),
        ));
    }
    if jumps.len() as u64 != zero_count {
        return Err(Error::CorruptHeader(format!(
            "{} jump records for {zero_count} zero differences",
            jumps.len()
        )));
    }
    for (k, j) in jumps.iter().enumerate() {
        if j.physical != j.diff_index || j.diff_index >= n_cells || !zero_at(j.diff_index) {
            return Err(Error::CorruptHeader(format!(
                "jump {k} does not sit on a zero"
            )));
        }
        if k > 0 {
            let prev = &jumps[k - 1];
            if j.logical <= prev.logical || j.diff_index <= prev.diff_index {
                return Err(Error::CorruptHeader(format!("jump {k} is out of order")));
            }
        }
    }
    Ok(())
}

impl DscHeader {
    pub fn from_parts(
        params: DscParams,
        differences: Vec<u32>,
        jumps: Vec<JumpRecord>,
    ) -> Result<Self> {
        if differences.is_empty() {
            return Err(Error::CorruptHeader("no differences".into()));
        }
        let max = params.max_difference();
        if differences.iter().any(|&d| u64::from(d) > max) {
            return Err(Error::CorruptHeader(
                "difference exceeds element width".into(),
            ));
        }
        let zeros = differences.iter().filter(|&&d| d == 0).count() as u64;
        check_jumps(
            &jumps,
            differences.len() as u64,
            |i| differences[i as usize] == 0,
            zeros,
        )?;
        Ok(Self {
            params,
            differences,
            jumps,
        })
    }

    pub fn params(&self) -> DscParams {
        self.params
    }

    pub fn n_cells(&self) -> u64 {
        self.differences.len() as u64
    }

    pub fn differences(&self) -> &[u32] {
        &self.differences
    }

    pub fn jumps(&self) -> &[JumpRecord] {
        &self.jumps
    }

    /// Longest run of differences between consecutive zeros.
    pub fn max_segment_len(&self) -> u64 {
        segment_lengths(&self.jumps, self.n_cells())
            .max()
            .unwrap_or(0)
    }

    pub fn reconstruct_all(&self) -> Result<Vec<u64>> {
        let mut out = Vec::with_capacity(self.differences.len());
        let mut next_jump = 0usize;
        let mut current = 0u64;
        for (i, &d) in self.differences.iter().enumerate() {
            if d > 0 && i > 0 {
                current = current
                    .checked_add(u64::from(d))
                    .ok_or_else(|| Error::CorruptHeader("position overflow".into()))?;
            } else {
                let jump = self.jumps.get(next_jump).ok_or_else(|| {
                    Error::CorruptHeader(format!("zero at {i} has no jump record"))
                })?;
                if jump.diff_index != i as u64 {
                    return Err(Error::CorruptHeader(format!(
                        "jump {next_jump} anchors {} but zero is at {i}",
                        jump.diff_index
                    )));
                }
                if i > 0 && jump.logical <= current {
                    return Err(Error::CorruptHeader(format!(
                        "jump {next_jump} goes backwards"
                    )));
                }
                current = jump.logical;
                next_jump += 1;
            }
            out.push(current);
        }
        if next_jump != self.jumps.len() {
            return Err(Error::CorruptHeader("unused jump records".into()));
        }
        Ok(out)
    }

    pub fn search(&self, target: u64) -> Option<u64> {
        self.search_counted(target, &mut SearchStats::default())
    }

    /// Physical index of `target`, decoding only the segment that could
    /// contain it and stopping as soon as the answer is known.
    pub fn search_counted(&self, target: u64, stats: &mut SearchStats) -> Option<u64> {
        let k = self.jumps.partition_point(|j| j.logical <= target);
        if k == 0 {
            stats.record(0);
            return None;
        }
        let jump = self.jumps[k - 1];
        if jump.logical == target {
            stats.record(0);
            return Some(jump.physical);
        }
        let end = self.jumps.get(k).map_or(self.n_cells(), |j| j.diff_index) as usize;
        let mut pos = jump.logical;
        let mut decoded = 0u64;
        let mut found = None;
        for &d in &self.differences[jump.diff_index as usize + 1..end] {
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
        found
    }

    /// Bytes of the `header.dsc` file.
    pub fn size_bytes(&self) -> u64 {
        dsc_size_bytes(self.n_cells(), self.params, self.jumps.len() as u64)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(DSC_MAGIC)?;
        out.write_all(&[DSC_VERSION, self.params.bits as u8])?;
        out.write_all(&self.n_cells().to_le_bytes())?;
        out.write_all(&(self.jumps.len() as u64).to_le_bytes())?;
        for j in &self.jumps {
            out.write_all(&j.logical.to_le_bytes())?;
            out.write_all(&j.physical.to_le_bytes())?;
            out.write_all(&j.diff_index.to_le_bytes())?;
        }
        let width = (self.params.bits / 8) as usize;
        let mut buf = Vec::with_capacity(self.differences.len() * width);
        for &d in &self.differences {
            buf.extend_from_slice(&d.to_le_bytes()[..width]);
        }
        out.write_all(&buf)?;
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let magic: [u8; 4] = read_array(&mut input)?;
        if &magic != DSC_MAGIC {
            return Err(Error::CorruptHeader("bad magic".into()));
        }
        let version = read_u8(&mut input)?;
        if version != DSC_VERSION {
            return Err(Error::CorruptHeader(format!(
                "unsupported version {version}"
            )));
        }
        let params = DscParams::new(u32::from(read_u8(&mut input)?))?;
        let n = read_u64(&mut input)?;
        let k = read_u64(&mut input)?;
        if k > n {
            return Err(Error::CorruptHeader("more jumps than cells".into()));
        }
        let mut jumps = Vec::with_capacity(k as usize);
        for _ in 0..k {
            jumps.push(JumpRecord {
                logical: read_u64(&mut input)?,
                physical: read_u64(&mut input)?,
                diff_index: read_u64(&mut input)?,
            });
        }
        let width = (params.bits / 8) as usize;
        let mut raw = vec![0u8; n as usize * width];
        input.read_exact(&mut raw)?;
        let differences = raw
            .chunks_exact(width)
            .map(|c| {
                let mut b = [0u8; 4];
                b[..width].copy_from_slice(c);
                u32::from_le_bytes(b)
            })
            .collect();
        Self::from_parts(params, differences, jumps)
    }
}

/// File size of a DSC header with `n_cells` differences and `jumps` records.
pub fn dsc_size_bytes(n_cells: u64, params: DscParams, jumps: u64) -> u64 {
    DSC_FIXED_BYTES + jumps * DSC_JUMP_RECORD_BYTES + (n_cells * u64::from(params.bits)).div_ceil(8)
}

pub(crate) fn segment_lengths(
    jumps: &[JumpRecord],
    n_cells: u64,
) -> impl Iterator<Item = u64> + '_ {
    jumps.iter().enumerate().map(move |(k, j)| {
        let end = jumps.get(k + 1).map_or(n_cells, |next| next.diff_index);
        end - j.diff_index - 1
    })
}
