//! MSB-first bit packing.

use crate::{Error, Result};

/// A bit sequence: `bit_len` bits packed MSB-first into `bytes`, zero padded.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BitBuf {
    pub bytes: Vec<u8>,
    pub bit_len: u64,
}

impl BitBuf {
    pub fn is_empty(&self) -> bool {
        self.bit_len == 0
    }

    pub fn byte_len(&self) -> usize {
        self.bytes.len()
    }
}

#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bit_len: u64,
}

impl BitWriter {
    pub fn new() -> BitWriter {
        BitWriter::default()
    }

    /// Appends the low `n` bits of `value`, most significant first.
    pub fn write(&mut self, value: u64, n: u32) {
        debug_assert!(n <= 64);
        for k in (0..n).rev() {
            let bit = (value >> k) & 1;
            let pos = (self.bit_len % 8) as u32;
            if pos == 0 {
                self.bytes.push(0);
            }
            if bit == 1 {
                *self.bytes.last_mut().unwrap() |= 0x80 >> pos;
            }
            self.bit_len += 1;
        }
    }

    pub fn bit_len(&self) -> u64 {
        self.bit_len
    }

    pub fn finish(self) -> BitBuf {
        BitBuf {
            bytes: self.bytes,
            bit_len: self.bit_len,
        }
    }
}

pub struct BitReader<'a> {
    bytes: &'a [u8],
    bit_len: u64,
    pos: u64,
}

impl<'a> BitReader<'a> {
    /// Reads at most `bit_len` bits of `bytes`.
    pub fn new(bytes: &'a [u8], bit_len: u64) -> Result<BitReader<'a>> {
        if bit_len > 8 * bytes.len() as u64 {
            return Err(Error::TruncatedStream(format!(
                "{} bits declared, {} bytes present",
                bit_len,
                bytes.len()
            )));
        }
        Ok(BitReader { bytes, bit_len, pos: 0 })
    }

    pub fn from_buf(buf: &'a BitBuf) -> Result<BitReader<'a>> {
        BitReader::new(&buf.bytes, buf.bit_len)
    }

    pub fn read_bit(&mut self) -> Result<u64> {
        if self.pos >= self.bit_len {
            return Err(Error::TruncatedStream("bit stream ended early".into()));
        }
        let byte = self.bytes[(self.pos / 8) as usize];
        let bit = (byte >> (7 - (self.pos % 8))) & 1;
        self.pos += 1;
        Ok(bit as u64)
    }

    pub fn read(&mut self, n: u32) -> Result<u64> {
        let mut v = 0u64;
        for _ in 0..n {
            v = (v << 1) | self.read_bit()?;
        }
        Ok(v)
    }

    pub fn remaining(&self) -> u64 {
        self.bit_len - self.pos
    }
}
