//! Byte-level container: header, length-prefixed blocks, little-endian
//! readers and writers.

use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BMKN";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;

pub const TAG_IFRAME: u8 = 1;
pub const TAG_NODES: u8 = 2;
pub const TAG_PFRAME: u8 = 3;
/// Tag byte plus `u32` payload length.
pub const BLOCK_OVERHEAD: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub version: u16,
    pub frame_count: u32,
    pub gof_size: u32,
    pub flags: u16,
}

impl Header {
    pub fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&self.frame_count.to_le_bytes());
        out.extend_from_slice(&self.gof_size.to_le_bytes());
        out.extend_from_slice(&self.flags.to_le_bytes());
    }

    pub fn read(bytes: &[u8]) -> Result<Header> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        let mut r = ByteReader::new(&bytes[4..]);
        let version = r.u16().map_err(|_| Error::TruncatedStream("header".into()))?;
        if version != VERSION {
            return Err(Error::VersionUnsupported(version));
        }
        let frame_count = r.u32()?;
        let gof_size = r.u32()?;
        let flags = r.u16()?;
        Ok(Header {
            version,
            frame_count,
            gof_size,
            flags,
        })
    }
}

#[derive(Debug, Default)]
pub struct ByteWriter {
    pub buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> ByteWriter {
        ByteWriter::default()
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn i32(&mut self, v: i32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }
}

pub struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(data: &'a [u8]) -> ByteReader<'a> {
        ByteReader { data, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(Error::TruncatedStream(format!(
                "needed {n} bytes at offset {}, {} left",
                self.pos,
                self.data.len() - self.pos
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.remaining() == 0
    }
}

/// Appends `tag`, payload length and payload; returns the bytes written.
pub fn write_block(out: &mut Vec<u8>, tag: u8, payload: &[u8]) -> usize {
    out.push(tag);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
    BLOCK_OVERHEAD + payload.len()
}

/// Reads the next `(tag, payload)` block, or `None` at the end of data.
pub fn read_block<'a>(r: &mut ByteReader<'a>) -> Result<Option<(u8, &'a [u8])>> {
    if r.is_empty() {
        return Ok(None);
    }
    let tag = r.u8()?;
    let len = r.u32()? as usize;
    Ok(Some((tag, r.take(len)?)))
}
