//! VLFT tensor container.
//!
//! Layout: magic `VLFT`, `u8` version (1), `u8` dtype code (1 = f32), `u8`
//! rank, then `rank` little-endian `u32` dimensions, then the row-major
//! little-endian payload. No padding and no compression.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"VLFT";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 1;

/// Dense row-major `f32` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::pre(format!(
                "tensor shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn encoded_len(&self) -> usize {
        7 + 4 * self.shape.len() + 4 * self.data.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let rank = u8::try_from(self.shape.len())
            .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "rank > 255"))?;
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION, DTYPE_F32, rank])?;
        for &d in &self.shape {
            let d = u32::try_from(d).map_err(|_| {
                std::io::Error::new(std::io::ErrorKind::InvalidInput, "dimension exceeds u32")
            })?;
            w.write_all(&d.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(4 * self.data.len());
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)
    }

    /// Decodes one tensor from the front of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn from_bytes(bytes: &[u8], name: &str) -> Result<(Tensor, usize)> {
        let err = |r: &str| Error::format(name, r);
        if bytes.len() < 7 {
            return Err(err("truncated header"));
        }
        if &bytes[0..4] != MAGIC {
            return Err(err("bad magic, expected VLFT"));
        }
        if bytes[4] != VERSION {
            return Err(err(&format!("unsupported version {}", bytes[4])));
        }
        if bytes[5] != DTYPE_F32 {
            return Err(err(&format!("unsupported dtype code {}", bytes[5])));
        }
        let rank = bytes[6] as usize;
        let mut pos = 7;
        if bytes.len() < pos + 4 * rank {
            return Err(err("truncated shape"));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
            shape.push(d as usize);
            pos += 4;
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| err("shape overflows"))?;
        let payload = n.checked_mul(4).ok_or_else(|| err("shape overflows"))?;
        if bytes.len() < pos + payload {
            return Err(err("truncated payload"));
        }
        let data = bytes[pos..pos + payload]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((Tensor { shape, data }, pos + payload))
    }

    pub fn read_file(path: &Path) -> Result<Tensor> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let name = path.display().to_string();
        let (t, used) = Tensor::from_bytes(&bytes, &name)?;
        if used != bytes.len() {
            return Err(Error::format(name, "trailing bytes after payload"));
        }
        Ok(t)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}
