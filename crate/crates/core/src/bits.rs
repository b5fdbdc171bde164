//! Bit-level buffers. Stream bit `k` lives in byte `k / 8` at bit `k % 8`
//! counted from the least significant end.

use crate::error::{Error, Result};

/// An owned sequence of bits.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BitStream {
    bytes: Vec<u8>,
    bit_len: u64,
}

impl BitStream {
    pub fn from_parts(bytes: Vec<u8>, bit_len: u64) -> Result<Self> {
        if bit_len > bytes.len() as u64 * 8 {
            return Err(Error::Format(format!(
                "bit length {bit_len} exceeds {} bytes",
                bytes.len()
            )));
        }
        Ok(Self { bytes, bit_len })
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn bit_len(&self) -> u64 {
        self.bit_len
    }

    pub fn is_empty(&self) -> bool {
        self.bit_len == 0
    }

    pub fn bit(&self, k: u64) -> bool {
        (self.bytes[(k / 8) as usize] >> (k % 8)) & 1 == 1
    }

    /// Up to 57 bits starting at `pos`, first stream bit in the least
    /// significant position. Bits past the end read as zero.
    #[inline]
    pub fn peek(&self, pos: u64, count: u32) -> u64 {
        debug_assert!(count <= 57);
        let byte = (pos / 8) as usize;
        let shift = (pos % 8) as u32;
        let word = if byte + 8 <= self.bytes.len() {
            u64::from_le_bytes(self.bytes[byte..byte + 8].try_into().unwrap())
        } else {
            let mut buf = [0u8; 8];
            if byte < self.bytes.len() {
                let tail = &self.bytes[byte..];
                buf[..tail.len()].copy_from_slice(tail);
            }
            u64::from_le_bytes(buf)
        };
        (word >> shift) & ((1u64 << count) - 1)
    }
}

#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bit_len: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends the low `count` bits of `value`, least significant first.
    pub fn push_lsb(&mut self, value: u64, count: u32) {
        for i in 0..count {
            self.push_bit((value >> i) & 1 == 1);
        }
    }

    /// Appends the low `count` bits of `value`, most significant first.
    pub fn push_msb(&mut self, value: u64, count: u32) {
        for i in (0..count).rev() {
            self.push_bit((value >> i) & 1 == 1);
        }
    }

    #[inline]
    pub fn push_bit(&mut self, bit: bool) {
        let off = (self.bit_len % 8) as u32;
        if off == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 1 << off;
        }
        self.bit_len += 1;
    }

    pub fn bit_len(&self) -> u64 {
        self.bit_len
    }

    pub fn finish(self) -> BitStream {
        BitStream {
            bytes: self.bytes,
            bit_len: self.bit_len,
        }
    }
}
