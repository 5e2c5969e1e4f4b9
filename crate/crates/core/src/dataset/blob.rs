//! Framed tensor records.
//!
//! ```text
//! magic  "CGT1"          4 bytes
//! dtype  0 = f32, 1 = f64  u8
//! rank                   u8
//! dims   rank × u64 LE
//! crc32  of payload      u32 LE
//! payload                product(dims) little-endian values
//! ```

use std::io::{Read, Seek, SeekFrom, Write};

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use super::DatasetError;

pub const MAGIC: &[u8; 4] = b"CGT1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
}

impl DType {
    fn tag(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(DType::F32),
            1 => Some(DType::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

/// Location of one record inside a blob file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorRef {
    pub offset: u64,
    pub shape: Vec<usize>,
    pub dtype: DType,
}

/// Encodes one record. f32 storage rounds each value to nearest.
pub fn encode_record(values: &[f64], shape: &[usize], dtype: DType) -> Vec<u8> {
    assert_eq!(values.len(), shape.iter().product::<usize>(), "shape does not match value count");
    let mut payload = Vec::with_capacity(values.len() * dtype.size());
    match dtype {
        DType::F32 => values.iter().for_each(|&v| payload.extend_from_slice(&(v as f32).to_le_bytes())),
        DType::F64 => values.iter().for_each(|&v| payload.extend_from_slice(&v.to_le_bytes())),
    }
    let mut out = Vec::with_capacity(payload.len() + 10 + 8 * shape.len());
    out.extend_from_slice(MAGIC);
    out.push(dtype.tag());
    out.push(shape.len() as u8);
    for &d in shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

/// Appends records to an in-memory blob and hands out their references.
#[derive(Debug, Default)]
pub struct BlobWriter {
    pub bytes: Vec<u8>,
}

impl BlobWriter {
    pub fn push(&mut self, values: &[f64], shape: &[usize], dtype: DType) -> TensorRef {
        let offset = self.bytes.len() as u64;
        self.bytes.extend_from_slice(&encode_record(values, shape, dtype));
        TensorRef { offset, shape: shape.to_vec(), dtype }
    }

    pub fn push_array(&mut self, a: &ndarray::Array2<f64>, dtype: DType) -> TensorRef {
        let values: Vec<f64> = a.iter().copied().collect();
        self.push(&values, &[a.nrows(), a.ncols()], dtype)
    }
}

/// Reads and verifies the record at `tensor.offset`.
pub fn read_record<R: Read + Seek>(reader: &mut R, tensor: &TensorRef, what: &str) -> Result<ArrayD<f64>, DatasetError> {
    let corrupt = |m: &str| DatasetError::Corrupt(format!("{what}: {m}"));
    reader.seek(SeekFrom::Start(tensor.offset))?;
    let mut head = [0u8; 6];
    reader.read_exact(&mut head).map_err(|_| corrupt("truncated header"))?;
    if &head[..4] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let dtype = DType::from_tag(head[4]).ok_or_else(|| corrupt("unknown dtype"))?;
    let rank = head[5] as usize;
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut b = [0u8; 8];
        reader.read_exact(&mut b).map_err(|_| corrupt("truncated dims"))?;
        dims.push(u64::from_le_bytes(b) as usize);
    }
    if dims != tensor.shape || dtype != tensor.dtype {
        return Err(corrupt(&format!("record is {dims:?}/{dtype:?}, manifest says {:?}/{:?}", tensor.shape, tensor.dtype)));
    }
    let mut crc = [0u8; 4];
    reader.read_exact(&mut crc).map_err(|_| corrupt("truncated checksum"))?;
    let count: usize = dims.iter().product();
    let mut payload = vec![0u8; count * dtype.size()];
    reader.read_exact(&mut payload).map_err(|_| corrupt("truncated payload"))?;
    if crc32fast::hash(&payload) != u32::from_le_bytes(crc) {
        return Err(DatasetError::Checksum(what.to_string()));
    }
    let values: Vec<f64> = match dtype {
        DType::F32 => payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
        DType::F64 => payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
    };
    Ok(ArrayD::from_shape_vec(IxDyn(&dims), values).expect("dims match payload"))
}

pub fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<(), DatasetError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}
