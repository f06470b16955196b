//! Pattern file: `"PNETPATT"`, version `u32`, then the body and a trailing
//! CRC32 of the body. The body holds the bound model's CRC32 `u32`, the
//! estimator kind tag `u8`, the layer count `u32` and per layer its index
//! and neuron count (`u32`s) followed by the linear, positive and negative
//! pattern blobs. A provenance block closes the body: sample count `u64`,
//! split tag `u8` (255 when unfitted) with start/end `u64`s, timestamp
//! `u64`, then per layer and neuron the fit flags `u8` and the total and
//! positive sample counts `u64`.

use std::fs;
use std::path::Path;

use crate::codec::{open_container, put_u32, put_u64, seal_container, Reader};
use crate::data::Split;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{read_tensor, write_tensor};

use super::{FitFlags, LayerPatterns, PatternSet, Provenance, SignalEstimatorKind};

pub const PATTERN_MAGIC: &[u8; 8] = b"PNETPATT";
pub const PATTERN_FORMAT_VERSION: u32 = 1;

const UNFITTED: u8 = 255;

pub fn patterns_to_bytes<T: Scalar>(set: &PatternSet<T>) -> Vec<u8> {
    let mut body = Vec::new();
    body.extend_from_slice(&set.model_crc().to_le_bytes());
    body.push(set.kind().tag());
    put_u32(&mut body, set.layers().len());
    for l in set.layers() {
        put_u32(&mut body, l.layer);
        put_u32(&mut body, l.neurons());
        for t in [&l.linear, &l.positive, &l.negative] {
            write_tensor(&mut body, t).unwrap();
        }
    }
    let p = set.provenance();
    put_u64(&mut body, p.sample_count);
    let (tag, start, end) = p.split.map_or((UNFITTED, 0, 0), Split::encode);
    body.push(tag);
    put_u64(&mut body, start);
    put_u64(&mut body, end);
    put_u64(&mut body, p.timestamp);
    for l in set.layers() {
        for o in 0..l.neurons() {
            body.push(l.flags[o].bits());
            put_u64(&mut body, l.count_total[o]);
            put_u64(&mut body, l.count_pos[o]);
        }
    }
    seal_container(PATTERN_MAGIC, PATTERN_FORMAT_VERSION, &body)
}

pub fn patterns_from_bytes<T: Scalar>(bytes: &[u8]) -> Result<PatternSet<T>> {
    const WHAT: &str = "pattern file";
    let mut r = Reader::new(
        open_container(bytes, PATTERN_MAGIC, PATTERN_FORMAT_VERSION, WHAT)?,
        WHAT,
    );
    let crc = r.u32()? as u32;
    let kind_tag = r.u8()?;
    let kind = SignalEstimatorKind::from_tag(kind_tag)
        .ok_or_else(|| Error::Format(format!("unknown estimator tag {kind_tag}")))?;
    let count = r.u32()?;
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let layer = r.u32()?;
        let n = r.u32()?;
        let linear = read_tensor(&mut r.rest)?;
        let positive = read_tensor(&mut r.rest)?;
        let negative = read_tensor(&mut r.rest)?;
        if n == 0
            || linear.shape()[0] != n
            || positive.shape() != linear.shape()
            || negative.shape() != linear.shape()
        {
            return Err(Error::Format(format!(
                "inconsistent pattern shapes for layer {layer}"
            )));
        }
        layers.push(LayerPatterns {
            layer,
            linear,
            positive,
            negative,
            flags: Vec::new(),
            count_total: Vec::new(),
            count_pos: Vec::new(),
        });
    }
    let sample_count = r.u64()?;
    let split_tag = r.u8()?;
    let (start, end) = (r.u64()?, r.u64()?);
    let split = match split_tag {
        UNFITTED => None,
        t => Some(Split::decode(t, start, end)?),
    };
    let timestamp = r.u64()?;
    for l in &mut layers {
        for _ in 0..l.linear.shape()[0] {
            let bits = r.u8()?;
            l.flags.push(
                FitFlags::from_bits(bits)
                    .ok_or_else(|| Error::Format(format!("bad fit flags {bits:#x}")))?,
            );
            l.count_total.push(r.u64()?);
            l.count_pos.push(r.u64()?);
        }
    }
    r.finish()?;
    Ok(PatternSet::from_parts(
        crc,
        Provenance {
            kind,
            sample_count,
            split,
            timestamp,
        },
        layers,
    ))
}

pub fn save_patterns<T: Scalar>(set: &PatternSet<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, patterns_to_bytes(set))?;
    Ok(())
}

pub fn load_patterns<T: Scalar>(path: impl AsRef<Path>) -> Result<PatternSet<T>> {
    patterns_from_bytes(&fs::read(path)?)
}
