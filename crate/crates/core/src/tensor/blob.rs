//! Tensor blob: `rank: u32 LE`, `extents: u32 LE × rank`, then the values as
//! `f64 LE` in row-major order.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{check_shape, Tensor};

const MAX_RANK: u32 = 8;
const MAX_ELEMENTS: usize = 1 << 30;

pub fn write_tensor<T: Scalar, W: Write>(w: &mut W, t: &Tensor<T>) -> Result<()> {
    w.write_all(&(t.rank() as u32).to_le_bytes())?;
    for &e in t.shape() {
        w.write_all(&(e as u32).to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&v.to_f64_lossless().to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|e| Error::from_read(e, "tensor header"))?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_tensor<T: Scalar, R: Read>(r: &mut R) -> Result<Tensor<T>> {
    let rank = read_u32(r)?;
    if rank == 0 || rank > MAX_RANK {
        return Err(Error::Format(format!("tensor rank {rank} out of range")));
    }
    let shape = (0..rank)
        .map(|_| read_u32(r).map(|e| e as usize))
        .collect::<Result<Vec<_>>>()?;
    let n = check_shape(&shape).map_err(|e| Error::Format(e.to_string()))?;
    if n > MAX_ELEMENTS {
        return Err(Error::Format(format!(
            "tensor with {n} elements is too large"
        )));
    }
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::from_read(e, "tensor data"))?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Tensor::new(shape, data).map_err(|e| Error::Format(e.to_string()))
}

pub fn tensor_to_bytes<T: Scalar>(t: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * t.rank() + 8 * t.len());
    write_tensor(&mut out, t).expect("writing to a Vec cannot fail");
    out
}

pub fn tensor_from_bytes<T: Scalar>(bytes: &[u8]) -> Result<Tensor<T>> {
    let mut cursor = bytes;
    let t = read_tensor(&mut cursor)?;
    if !cursor.is_empty() {
        return Err(Error::Format(format!(
            "{} trailing bytes after tensor",
            cursor.len()
        )));
    }
    Ok(t)
}
