//! Binary tensor container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      4 bytes  "MRNG"
//! version    u32      1
//! kind       u32 length + UTF-8 bytes   model kind, e.g. "embedder"
//! count      u32      number of tensors
//! per tensor:
//!   name     u32 length + UTF-8 bytes
//!   dtype    u8       0 = f32, 1 = f64
//!   rank     u32
//!   dims     rank x u64
//!   data     product(dims) values, little-endian
//! ```
//!
//! Optimizer state is stored as ordinary tensors under the reserved
//! `__optim__/` name prefix.

use std::io::{Read, Write};

use crate::error::{NnError, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"MRNG";
pub const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;
const DTYPE_F64: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.push((name.into(), t));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        write_str(w, &self.kind)?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &self.tensors {
            write_str(w, name)?;
            w.write_all(&[DTYPE_F64])?;
            w.write_all(&(t.rank() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(t.numel() * 8);
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NnError::Checkpoint("bad magic".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(NnError::Checkpoint(format!("unsupported version {version}")));
        }
        let kind = read_str(r)?;
        let count = read_u32(r)? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name = read_str(r)?;
            let mut dtype = [0u8; 1];
            r.read_exact(&mut dtype)?;
            let rank = read_u32(r)? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                dims.push(u64::from_le_bytes(b) as usize);
            }
            let n: usize = dims.iter().product();
            let data = match dtype[0] {
                DTYPE_F64 => {
                    let mut buf = vec![0u8; n * 8];
                    r.read_exact(&mut buf)?;
                    buf.chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect()
                }
                DTYPE_F32 => {
                    let mut buf = vec![0u8; n * 4];
                    r.read_exact(&mut buf)?;
                    buf.chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                        .collect()
                }
                d => return Err(NnError::Checkpoint(format!("unknown dtype {d}"))),
            };
            tensors.push((name, Tensor::new(&dims, data)?));
        }
        Ok(Self { kind, tensors })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f)
    }
}

fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let n = read_u32(r)? as usize;
    if n > 1 << 20 {
        return Err(NnError::Checkpoint("string too long".into()));
    }
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| NnError::Checkpoint("name is not UTF-8".into()))
}
