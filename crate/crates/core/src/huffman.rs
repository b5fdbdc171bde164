//! Canonical Huffman codes over difference symbols.
//!
//! Code lengths come from the classic Huffman merge with a fixed tie-break
//! (lowest weight first, then the subtree holding the smaller symbol), so a
//! frequency table always produces the same file bytes. Codewords are then
//! assigned canonically in `(length, symbol)` order and written most
//! significant bit first.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::io::{Read, Write};

use crate::bits::{BitStream, BitWriter};
use crate::error::{Error, Result};
use crate::io_util::{read_u32, read_u8};

pub const MAX_CODE_LEN: u8 = 63;
const TABLE_BITS: u32 = 11;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolFrequencyTable {
    counts: BTreeMap<u32, u64>,
}

impl SymbolFrequencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_symbols<I: IntoIterator<Item = u32>>(symbols: I) -> Self {
        let mut t = Self::new();
        for s in symbols {
            *t.counts.entry(s).or_insert(0) += 1;
        }
        t
    }

    pub fn from_counts<I: IntoIterator<Item = (u32, u64)>>(counts: I) -> Result<Self> {
        let mut t = Self::new();
        for (s, c) in counts {
            if c == 0 {
                return Err(Error::Format(format!("symbol {s} has zero count")));
            }
            *t.counts.entry(s).or_insert(0) += c;
        }
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn count(&self, symbol: u32) -> u64 {
        self.counts.get(&symbol).copied().unwrap_or(0)
    }

    /// Entries in ascending symbol order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.counts.iter().map(|(&s, &c)| (s, c))
    }

    /// Shannon entropy in bits per symbol.
    pub fn entropy(&self) -> f64 {
        let total = self.total() as f64;
        self.counts
            .values()
            .map(|&c| {
                let p = c as f64 / total;
                -p * p.log2()
            })
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct CanonicalCode {
    /// Symbols sorted by `(length, symbol)`.
    symbols: Vec<u32>,
    lengths: Vec<u8>,
    encode: HashMap<u32, (u64, u8)>,
    max_len: u8,
    /// Per length: first canonical codeword, symbol count, index of the
    /// first symbol with that length.
    first_code: [u64; MAX_CODE_LEN as usize + 1],
    count: [u64; MAX_CODE_LEN as usize + 1],
    offset: [u64; MAX_CODE_LEN as usize + 1],
    /// Indexed by the next `TABLE_BITS` stream bits: `(index << 8) | len`,
    /// zero when the codeword is longer than the table.
    table: Vec<u64>,
}

impl PartialEq for CanonicalCode {
    fn eq(&self, other: &Self) -> bool {
        self.symbols == other.symbols && self.lengths == other.lengths
    }
}

impl Eq for CanonicalCode {}

pub fn build_code(freqs: &SymbolFrequencyTable) -> Result<CanonicalCode> {
    if freqs.is_empty() {
        return Err(Error::EmptyAlphabet);
    }
    let leaves: Vec<(u32, u64)> = freqs.iter().collect();
    if leaves.len() == 1 {
        return CanonicalCode::from_lengths(&[(leaves[0].0, 1)]);
    }

    // parent[i] for every node; leaves first, merged nodes appended.
    let mut parent: Vec<usize> = vec![usize::MAX; leaves.len()];
    let mut heap: BinaryHeap<Reverse<(u64, u32, usize)>> = leaves
        .iter()
        .enumerate()
        .map(|(i, &(s, c))| Reverse((c, s, i)))
        .collect();
    while heap.len() > 1 {
        let Reverse((w1, s1, a)) = heap.pop().unwrap();
        let Reverse((w2, s2, b)) = heap.pop().unwrap();
        let id = parent.len();
        parent.push(usize::MAX);
        parent[a] = id;
        parent[b] = id;
        heap.push(Reverse((w1 + w2, s1.min(s2), id)));
    }
    // Parents always have larger ids, so walk downwards from the root.
    let mut depth = vec![0u32; parent.len()];
    for i in (0..parent.len() - 1).rev() {
        depth[i] = depth[parent[i]] + 1;
    }
    let pairs: Vec<(u32, u8)> = leaves
        .iter()
        .enumerate()
        .map(|(i, &(s, _))| {
            u8::try_from(depth[i])
                .ok()
                .filter(|&l| l <= MAX_CODE_LEN)
                .map(|l| (s, l))
                .ok_or_else(|| Error::Format(format!("code length {} too long", depth[i])))
        })
        .collect::<Result<_>>()?;
    CanonicalCode::from_lengths(&pairs)
}

fn reverse_bits(value: u64, len: u8) -> u64 {
    value.reverse_bits() >> (64 - u32::from(len))
}

impl CanonicalCode {
    /// Builds the canonical code for the given `(symbol, length)` pairs.
    pub fn from_lengths(pairs: &[(u32, u8)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyAlphabet);
        }
        let mut sorted: Vec<(u8, u32)> = pairs.iter().map(|&(s, l)| (l, s)).collect();
        sorted.sort_unstable();
        let distinct: std::collections::HashSet<u32> = sorted.iter().map(|p| p.1).collect();
        if distinct.len() != sorted.len() {
            return Err(Error::CorruptHeader(
                "duplicate symbol in code table".into(),
            ));
        }
        let mut count = [0u64; MAX_CODE_LEN as usize + 1];
        for &(l, _) in &sorted {
            if l == 0 || l > MAX_CODE_LEN {
                return Err(Error::CorruptHeader(format!("invalid code length {l}")));
            }
            count[l as usize] += 1;
        }
        // Kraft: sum 2^-l <= 1, checked exactly in units of 2^-MAX.
        let kraft: u128 = sorted
            .iter()
            .map(|&(l, _)| 1u128 << (MAX_CODE_LEN - l))
            .sum();
        if kraft > 1u128 << MAX_CODE_LEN {
            return Err(Error::CorruptHeader(
                "code lengths violate the Kraft inequality".into(),
            ));
        }

        let max_len = sorted.last().unwrap().0;
        let mut first_code = [0u64; MAX_CODE_LEN as usize + 1];
        let mut offset = [0u64; MAX_CODE_LEN as usize + 1];
        let mut code = 0u64;
        let mut index = 0u64;
        for len in 1..=MAX_CODE_LEN as usize {
            first_code[len] = code;
            offset[len] = index;
            code = (code + count[len]) << 1;
            index += count[len];
        }

        let mut encode = HashMap::with_capacity(sorted.len());
        let mut table = vec![0u64; 1 << TABLE_BITS];
        let mut next = first_code;
        for (i, &(l, s)) in sorted.iter().enumerate() {
            let c = next[l as usize];
            next[l as usize] += 1;
            encode.insert(s, (c, l));
            if u32::from(l) <= TABLE_BITS {
                let rev = reverse_bits(c, l);
                let entry = ((i as u64) << 8) | u64::from(l);
                for fill in 0..(1u64 << (TABLE_BITS - u32::from(l))) {
                    table[(rev | (fill << l)) as usize] = entry;
                }
            }
        }
        Ok(Self {
            symbols: sorted.iter().map(|p| p.1).collect(),
            lengths: sorted.iter().map(|p| p.0).collect(),
            encode,
            max_len,
            first_code,
            count,
            offset,
            table,
        })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn max_len(&self) -> u8 {
        self.max_len
    }

    /// `(symbol, length)` in canonical order.
    pub fn entries(&self) -> impl Iterator<Item = (u32, u8)> + '_ {
        self.symbols
            .iter()
            .copied()
            .zip(self.lengths.iter().copied())
    }

    pub fn length_of(&self, symbol: u32) -> Option<u8> {
        self.encode.get(&symbol).map(|&(_, l)| l)
    }

    pub fn codeword(&self, symbol: u32) -> Option<(u64, u8)> {
        self.encode.get(&symbol).copied()
    }

    /// Sum of `2^-len` over all codewords.
    pub fn kraft_sum(&self) -> f64 {
        self.lengths.iter().map(|&l| (-f64::from(l)).exp2()).sum()
    }

    pub fn encode(&self, symbols: &[u32]) -> Result<BitStream> {
        let mut w = BitWriter::new();
        self.encode_into(symbols, &mut w)?;
        Ok(w.finish())
    }

    pub fn encode_into(&self, symbols: &[u32], w: &mut BitWriter) -> Result<()> {
        for &s in symbols {
            let (c, l) = self.codeword(s).ok_or(Error::SymbolNotInCode(s))?;
            w.push_msb(c, u32::from(l));
        }
        Ok(())
    }

    /// Decodes one symbol at `*pos` and advances it.
    #[inline]
    pub fn decode_one(&self, stream: &BitStream, pos: &mut u64) -> Result<u32> {
        let remaining = stream.bit_len().saturating_sub(*pos);
        let entry = self.table[stream.peek(*pos, TABLE_BITS) as usize];
        if entry != 0 {
            let len = entry & 0xff;
            if len > remaining {
                return Err(Error::TruncatedStream(*pos));
            }
            *pos += len;
            return Ok(self.symbols[(entry >> 8) as usize]);
        }
        let mut code = 0u64;
        for len in 1..=u64::from(self.max_len) {
            if len > remaining {
                return Err(Error::TruncatedStream(*pos));
            }
            code = (code << 1) | u64::from(stream.bit(*pos + len - 1));
            let l = len as usize;
            if self.count[l] > 0
                && code >= self.first_code[l]
                && code - self.first_code[l] < self.count[l]
            {
                *pos += len;
                return Ok(self.symbols[(self.offset[l] + code - self.first_code[l]) as usize]);
            }
        }
        Err(Error::Format(format!("no codeword at bit {}", *pos)))
    }

    /// Decodes up to `max_symbols` symbols starting at `start_bit`,
    /// stopping early at a clean end of stream. Returns the symbols and the
    /// offset just past the last one.
    pub fn decode_prefix(
        &self,
        stream: &BitStream,
        start_bit: u64,
        max_symbols: usize,
    ) -> Result<(Vec<u32>, u64)> {
        if max_symbols > 0 && start_bit >= stream.bit_len() {
            return Err(Error::TruncatedStream(start_bit));
        }
        let mut pos = start_bit;
        let mut out = Vec::with_capacity(max_symbols.min(1 << 20));
        while out.len() < max_symbols && pos < stream.bit_len() {
            out.push(self.decode_one(stream, &mut pos)?);
        }
        Ok((out, pos))
    }

    pub fn expected_code_length(&self, freqs: &SymbolFrequencyTable) -> Result<f64> {
        let total = freqs.total() as f64;
        let mut bits = 0.0;
        for (s, c) in freqs.iter() {
            let l = self.length_of(s).ok_or(Error::SymbolNotInCode(s))?;
            bits += c as f64 * f64::from(l);
        }
        Ok(bits / total)
    }

    /// Serialized table size in bytes.
    pub fn serialized_len(&self) -> u64 {
        4 + 5 * self.symbols.len() as u64
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&(self.symbols.len() as u32).to_le_bytes())?;
        for (s, l) in self.entries() {
            out.write_all(&s.to_le_bytes())?;
            out.write_all(&[l])?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let n = read_u32(&mut input)?;
        let mut pairs = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let s = read_u32(&mut input)?;
            let l = read_u8(&mut input)?;
            pairs.push((s, l));
        }
        Self::from_lengths(&pairs)
    }
}
