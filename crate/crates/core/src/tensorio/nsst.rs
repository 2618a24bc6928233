//! NSST container: `"NSST" | u32 version | u8 rank | rank × u32 dims | f32 payload`,
//! all integers and floats little-endian. Batches are written with rank 3 and
//! dims `(count, height, width)`, payload image-major then row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::image::{Batch, Image};
use crate::error::{Error, Result};

pub const NSST_MAGIC: &[u8; 4] = b"NSST";
pub const NSST_VERSION: u32 = 1;

const BATCH_RANK: u8 = 3;

pub fn write_tensor(batch: &Batch, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (h, w) = batch.shape();
    let dims = [batch.len(), h, w].map(|d| {
        u32::try_from(d).map_err(|_| Error::Validation(format!("dimension {d} exceeds u32")))
    });
    let mut header = Vec::with_capacity(4 + 4 + 1 + 12);
    header.extend_from_slice(NSST_MAGIC);
    header.extend_from_slice(&NSST_VERSION.to_le_bytes());
    header.push(BATCH_RANK);
    for d in dims {
        header.extend_from_slice(&d?.to_le_bytes());
    }

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    out.write_all(&header).map_err(io)?;
    for img in batch {
        for v in img.data() {
            out.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Batch> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Corrupt(format!(
                "truncated {what}: need {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub(crate) fn decode(bytes: &[u8]) -> Result<Batch> {
    if bytes.len() < 4 || &bytes[..4] != NSST_MAGIC {
        return Err(Error::Format("missing NSST magic".into()));
    }
    let mut cur = Cursor { bytes, pos: 4 };
    let version = cur.u32("version")?;
    if version != NSST_VERSION {
        return Err(Error::Format(format!("unsupported NSST version {version}")));
    }
    let rank = cur.take(1, "rank")?[0];
    if rank != BATCH_RANK {
        return Err(Error::Format(format!(
            "expected rank {BATCH_RANK} (count, height, width), got {rank}"
        )));
    }
    let count = cur.u32("dims")? as usize;
    let height = cur.u32("dims")? as usize;
    let width = cur.u32("dims")? as usize;
    if count == 0 || height == 0 || width == 0 {
        return Err(Error::Validation(format!(
            "zero dimension in {count}x{height}x{width}"
        )));
    }
    let per_image = height
        .checked_mul(width)
        .ok_or_else(|| Error::Format("dimension overflow".into()))?;
    let total = per_image
        .checked_mul(count)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("dimension overflow".into()))?;
    let payload = cur.take(total, "payload")?;
    if cur.pos != bytes.len() {
        return Err(Error::Corrupt(format!(
            "{} trailing bytes after payload",
            bytes.len() - cur.pos
        )));
    }

    let mut images = Vec::with_capacity(count);
    for chunk in payload.chunks_exact(per_image * 4) {
        let data = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        images.push(Image::new(height, width, data)?);
    }
    Batch::new(images, 0)
}
