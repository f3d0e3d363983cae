//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "LCCKPT\0\0"
//! version  u32
//! header   u32 length + UTF-8 JSON
//! count    u32 number of tensors
//! tensor*  u32 name length, name, u32 rank, u64 dims..., f32 data...
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::nn::layout::ParamLayout;
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LCCKPT\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: serde_json::Value,
    pub tensors: Vec<Tensor>,
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_string<R: Read>(r: &mut R, len: usize) -> Result<String> {
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|e| Error::Checkpoint(e.to_string()))
}

impl Checkpoint {
    pub fn new(header: serde_json::Value) -> Self {
        Self {
            header,
            tensors: Vec::new(),
        }
    }

    /// Appends every entry of `layout` as `prefix.name`.
    pub fn push_params<T: Scalar>(&mut self, prefix: &str, layout: &ParamLayout, values: &[T]) {
        assert_eq!(layout.len(), values.len());
        for e in layout.entries() {
            self.tensors.push(Tensor {
                name: format!("{prefix}.{}", e.name),
                shape: e.shape.clone(),
                data: values[e.range.clone()].iter().map(|v| v.as_f64() as f32).collect(),
            });
        }
    }

    /// Fills `values` from the tensors stored under `prefix`.
    pub fn load_params<T: Scalar>(&self, prefix: &str, layout: &ParamLayout, values: &mut [T]) -> Result<()> {
        assert_eq!(layout.len(), values.len());
        for e in layout.entries() {
            let name = format!("{prefix}.{}", e.name);
            let t = self
                .tensor(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if t.shape != e.shape {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    t.shape, e.shape
                )));
            }
            for (dst, &src) in values[e.range.clone()].iter_mut().zip(&t.data) {
                *dst = T::of(src as f64);
            }
        }
        Ok(())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        let header = serde_json::to_vec(&self.header)?;
        out.write_all(&(header.len() as u32).to_le_bytes())?;
        out.write_all(&header)?;
        out.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for t in &self.tensors {
            assert_eq!(t.shape.iter().product::<usize>(), t.data.len(), "tensor {} shape mismatch", t.name);
            out.write_all(&(t.name.len() as u32).to_le_bytes())?;
            out.write_all(t.name.as_bytes())?;
            out.write_all(&(t.shape.len() as u32).to_le_bytes())?;
            for &d in &t.shape {
                out.write_all(&(d as u64).to_le_bytes())?;
            }
            let mut bytes = Vec::with_capacity(4 * t.data.len());
            for v in &t.data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            out.write_all(&bytes)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = read_u32(&mut input)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let header_len = read_u32(&mut input)? as usize;
        let header: serde_json::Value = serde_json::from_str(&read_string(&mut input, header_len)?)?;
        let count = read_u32(&mut input)?;
        let mut tensors = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name_len = read_u32(&mut input)? as usize;
            let name = read_string(&mut input, name_len)?;
            let rank = read_u32(&mut input)?;
            let shape = (0..rank)
                .map(|_| read_u64(&mut input).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let mut bytes = vec![0u8; 4 * n];
            input.read_exact(&mut bytes)?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(Tensor { name, shape, data });
        }
        Ok(Self { header, tensors })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(file))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(file))
    }
}
