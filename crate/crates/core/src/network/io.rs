//! Model file: `"PNETMODL"`, version `u32`, the body, then the CRC32 of the
//! body. The body holds the input rank and extents (`u32`s), the layer count
//! `u32`, and per layer a kind tag `u8`, its geometry `u32`s and the weight
//! and bias tensor blobs. All integers little-endian.

use std::fs;
use std::path::Path;

use crate::codec::{open_container, put_u32, seal_container, Reader};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{read_tensor, write_tensor, Tensor};

use super::{Layer, NetworkModel, Padding};

pub const MODEL_MAGIC: &[u8; 8] = b"PNETMODL";
pub const MODEL_FORMAT_VERSION: u32 = 1;

const TAG_DENSE: u8 = 0;
const TAG_CONV: u8 = 1;
const TAG_RELU: u8 = 2;
const TAG_MAXPOOL: u8 = 3;

pub fn model_to_bytes<T: Scalar>(model: &NetworkModel<T>) -> Vec<u8> {
    let mut body = Vec::new();
    put_u32(&mut body, model.input_shape().len());
    for &e in model.input_shape() {
        put_u32(&mut body, e);
    }
    put_u32(&mut body, model.layers().len());
    for layer in model.layers() {
        match layer {
            Layer::Dense { weights, bias } => {
                body.push(TAG_DENSE);
                write_tensor(&mut body, weights).unwrap();
                write_tensor(&mut body, bias).unwrap();
            }
            Layer::Conv2d {
                weights,
                bias,
                stride,
                padding,
            } => {
                body.push(TAG_CONV);
                put_u32(&mut body, *stride);
                put_u32(&mut body, matches!(padding, Padding::Same) as usize);
                write_tensor(&mut body, weights).unwrap();
                write_tensor(&mut body, bias).unwrap();
            }
            Layer::Relu => body.push(TAG_RELU),
            Layer::MaxPool2d { window, stride } => {
                body.push(TAG_MAXPOOL);
                put_u32(&mut body, *window);
                put_u32(&mut body, *stride);
            }
        }
    }
    seal_container(MODEL_MAGIC, MODEL_FORMAT_VERSION, &body)
}

pub fn model_from_bytes<T: Scalar>(bytes: &[u8]) -> Result<NetworkModel<T>> {
    let mut r = Reader::new(
        open_container(bytes, MODEL_MAGIC, MODEL_FORMAT_VERSION, "model file")?,
        "model file",
    );
    let rank = r.u32()?;
    if rank == 0 || rank > 8 {
        return Err(Error::Format(format!("input rank {rank} out of range")));
    }
    let input_shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let count = r.u32()?;
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let layer = match r.u8()? {
            TAG_DENSE => {
                let w: Tensor<T> = read_tensor(&mut r.rest)?;
                let b = read_tensor(&mut r.rest)?;
                Layer::dense(w, b)?
            }
            TAG_CONV => {
                let stride = r.u32()?;
                let padding = match r.u32()? {
                    0 => Padding::Valid,
                    1 => Padding::Same,
                    p => return Err(Error::Format(format!("unknown padding tag {p}"))),
                };
                let w = read_tensor(&mut r.rest)?;
                let b = read_tensor(&mut r.rest)?;
                Layer::conv2d(w, b, stride, padding)?
            }
            TAG_RELU => Layer::Relu,
            TAG_MAXPOOL => Layer::MaxPool2d {
                window: r.u32()?,
                stride: r.u32()?,
            },
            t => return Err(Error::Format(format!("unknown layer tag {t}"))),
        };
        layers.push(layer);
    }
    r.finish()?;
    NetworkModel::new(input_shape, layers)
}

pub fn save_model<T: Scalar>(model: &NetworkModel<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_bytes(model))?;
    Ok(())
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<NetworkModel<T>> {
    model_from_bytes(&fs::read(path)?)
}
