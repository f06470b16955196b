//! Dataset file: `"PNETDATA"`, version `u32`, then the body and a trailing
//! CRC32 of the body. The body holds the sample count `u64`, the input rank
//! and extents (`u32`s), the label arity `u32`, the channel count `u32`
//! with the per-channel mean and standard deviation (`f64`s), and two
//! tensor blobs: all inputs `[n, ...shape]` and all labels `[n, arity]`.

use std::fs;
use std::path::Path;

use crate::codec::{open_container, put_f64, put_u32, put_u64, seal_container, Reader};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{read_tensor, write_tensor, Tensor};

use super::Dataset;

pub const DATA_MAGIC: &[u8; 8] = b"PNETDATA";
pub const DATA_FORMAT_VERSION: u32 = 1;

pub fn dataset_to_bytes<T: Scalar>(d: &Dataset<T>) -> Vec<u8> {
    let mut body = Vec::new();
    put_u64(&mut body, d.len() as u64);
    put_u32(&mut body, d.input_shape().len());
    for &e in d.input_shape() {
        put_u32(&mut body, e);
    }
    put_u32(&mut body, d.label_arity());
    put_u32(&mut body, d.channel_mean().len());
    for &v in d.channel_mean().iter().chain(d.channel_std()) {
        put_f64(&mut body, v);
    }
    let mut shape = vec![d.len()];
    shape.extend_from_slice(d.input_shape());
    let inputs = Tensor::from_parts(
        shape,
        d.inputs()
            .iter()
            .flat_map(|x| x.data().iter().copied())
            .collect(),
    );
    let labels = Tensor::from_parts(
        vec![d.len(), d.label_arity()],
        d.labels()
            .iter()
            .flat_map(|y| y.data().iter().copied())
            .collect(),
    );
    write_tensor(&mut body, &inputs).unwrap();
    write_tensor(&mut body, &labels).unwrap();
    seal_container(DATA_MAGIC, DATA_FORMAT_VERSION, &body)
}

pub fn dataset_from_bytes<T: Scalar>(bytes: &[u8]) -> Result<Dataset<T>> {
    const WHAT: &str = "dataset file";
    let mut r = Reader::new(
        open_container(bytes, DATA_MAGIC, DATA_FORMAT_VERSION, WHAT)?,
        WHAT,
    );
    let n = r.u64()? as usize;
    let rank = r.u32()?;
    if rank == 0 || rank > 7 {
        return Err(Error::Format(format!("input rank {rank} out of range")));
    }
    let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let arity = r.u32()?;
    let c = r.u32()?;
    if c > 4096 {
        return Err(Error::Format(format!("{c} channels")));
    }
    let stats = (0..2 * c).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let inputs: Tensor<T> = read_tensor(&mut r.rest)?;
    let labels: Tensor<T> = read_tensor(&mut r.rest)?;
    r.finish()?;
    let mut expect = vec![n];
    expect.extend_from_slice(&shape);
    if inputs.shape() != expect.as_slice() || labels.shape() != [n, arity] {
        return Err(Error::Format(
            "dataset blobs do not match the header".into(),
        ));
    }
    let per = inputs.len() / n.max(1);
    let xs = inputs
        .data()
        .chunks_exact(per)
        .map(|c| Tensor::from_parts(shape.clone(), c.to_vec()))
        .collect();
    let ys = labels
        .data()
        .chunks_exact(arity)
        .map(|c| Tensor::from_parts(vec![arity], c.to_vec()))
        .collect();
    Dataset::with_channel_stats(
        shape,
        arity,
        xs,
        ys,
        stats[..c].to_vec(),
        stats[c..].to_vec(),
    )
}

pub fn save_dataset<T: Scalar>(d: &Dataset<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, dataset_to_bytes(d))?;
    Ok(())
}

pub fn load_dataset<T: Scalar>(path: impl AsRef<Path>) -> Result<Dataset<T>> {
    dataset_from_bytes(&fs::read(path)?)
}
