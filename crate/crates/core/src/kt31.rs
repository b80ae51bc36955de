//! `KT31` binary tensor files.
//!
//! Layout, all little-endian: magic `b"KT31"`, `u32` version (1), `u8` dtype
//! (1 = float32), `u8` ndim, `ndim × u32` extents, then the row-major float32
//! payload. Values are held as `f64` in memory and narrowed on write.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"KT31";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 1;

pub fn encode(t: &Tensor) -> Result<Vec<u8>> {
    let ndim = u8::try_from(t.ndim())
        .map_err(|_| Error::format(format!("{} axes do not fit a u8", t.ndim())))?;
    let mut buf = Vec::with_capacity(10 + 4 * t.ndim() + 4 * t.len());
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(DTYPE_F32);
    buf.push(ndim);
    for &d in t.dims() {
        let d = u32::try_from(d).map_err(|_| Error::format(format!("extent {d} exceeds u32")))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for &v in t.data() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(buf)
}

pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::format("bad magic, not a KT31 file"));
    }
    let version = u32::from_le_bytes(cur.array()?);
    if version != VERSION {
        return Err(Error::format(format!("unsupported KT31 version {version}")));
    }
    let [dtype] = cur.array()?;
    if dtype != DTYPE_F32 {
        return Err(Error::format(format!("unsupported dtype code {dtype}")));
    }
    let [ndim] = cur.array()?;
    if ndim == 0 {
        return Err(Error::format("zero-axis tensor"));
    }
    let dims = (0..ndim)
        .map(|_| cur.array().map(|b| u32::from_le_bytes(b) as usize))
        .collect::<Result<Vec<_>>>()?;
    let len = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format("extent product overflows"))?;
    let payload = cur.rest();
    if payload.len() != len * 4 {
        return Err(Error::format(format!(
            "payload holds {} bytes, dims {dims:?} need {}",
            payload.len(),
            len * 4
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Tensor::new(dims, data).map_err(|e| Error::format(e.to_string()))
}

pub fn write(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(t)?).map_err(|e| Error::io(path, e))
}

pub fn read(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::format("truncated header"));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }

    fn rest(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }
}
