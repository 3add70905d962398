//! Little-endian framing shared by the binary artifact formats.
//!
//! Every file starts with a 16-byte header: 4-byte magic, then `u32` version,
//! `u32` record count and `u32` flags.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Header {
    pub version: u32,
    pub count: u32,
    pub flags: u32,
}

pub(crate) fn write_header(w: &mut impl Write, magic: &[u8; 4], h: Header) -> Result<()> {
    w.write_all(magic)?;
    w.write_u32::<LittleEndian>(h.version)?;
    w.write_u32::<LittleEndian>(h.count)?;
    w.write_u32::<LittleEndian>(h.flags)?;
    Ok(())
}

pub(crate) fn read_header(r: &mut impl Read, magic: &[u8; 4], version: u32) -> Result<Header> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(Error::Format(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&m)
        )));
    }
    let h = Header {
        version: r.read_u32::<LittleEndian>()?,
        count: r.read_u32::<LittleEndian>()?,
        flags: r.read_u32::<LittleEndian>()?,
    };
    if h.version != version {
        return Err(Error::Format(format!("unsupported version {} (expected {version})", h.version)));
    }
    Ok(h)
}

pub(crate) fn write_f32s(w: &mut impl Write, values: impl IntoIterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_f32::<LittleEndian>(v as f32)?;
    }
    Ok(())
}

pub(crate) fn read_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(r.read_f32::<LittleEndian>()? as f64);
    }
    Ok(out)
}

pub(crate) fn count_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Format(format!("count {n} does not fit in u32")))
}
