//! Datasets: the `PNETDATA` container, stable-order splits, the toy and
//! synthetic image generators, and IDX / CSV / PNG-directory ingestion.

mod container;
mod generate;
mod ingest;
mod split;

pub use container::{
    dataset_from_bytes, dataset_to_bytes, load_dataset, save_dataset, DATA_FORMAT_VERSION,
    DATA_MAGIC,
};
pub use generate::{ImageConfig, ToyConfig};
pub use ingest::{ingest_csv, ingest_idx, ingest_png_dir, parse_idx, IdxArray, PngOptions};
pub use split::Split;

use std::ops::Range;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Samples with a common input shape and label arity, in a stable order.
/// The per-channel mean and standard deviation record the normalization
/// applied at ingestion (identity for generated data).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    input_shape: Vec<usize>,
    label_arity: usize,
    inputs: Vec<Tensor<T>>,
    labels: Vec<Tensor<T>>,
    channel_mean: Vec<f64>,
    channel_std: Vec<f64>,
}

/// Channel count of an input shape: the leading extent of `[C, H, W]`,
/// otherwise 1.
pub fn channel_count(shape: &[usize]) -> usize {
    if shape.len() == 3 {
        shape[0]
    } else {
        1
    }
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        input_shape: Vec<usize>,
        label_arity: usize,
        inputs: Vec<Tensor<T>>,
        labels: Vec<Tensor<T>>,
    ) -> Result<Self> {
        let c = channel_count(&input_shape);
        Self::with_channel_stats(
            input_shape,
            label_arity,
            inputs,
            labels,
            vec![0.0; c],
            vec![1.0; c],
        )
    }

    pub fn with_channel_stats(
        input_shape: Vec<usize>,
        label_arity: usize,
        inputs: Vec<Tensor<T>>,
        labels: Vec<Tensor<T>>,
        channel_mean: Vec<f64>,
        channel_std: Vec<f64>,
    ) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::Data("dataset has no samples".into()));
        }
        if inputs.len() != labels.len() {
            return Err(Error::Data(format!(
                "{} inputs but {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        if label_arity == 0 {
            return Err(Error::Data("label arity must be positive".into()));
        }
        if let Some(i) = inputs
            .iter()
            .position(|x| x.shape() != input_shape.as_slice())
        {
            return Err(Error::Dimension(format!(
                "sample {i} has shape {:?}, expected {input_shape:?}",
                inputs[i].shape()
            )));
        }
        if let Some(i) = labels.iter().position(|y| y.len() != label_arity) {
            return Err(Error::Dimension(format!(
                "label {i} does not have arity {label_arity}"
            )));
        }
        let c = channel_count(&input_shape);
        if channel_mean.len() != c || channel_std.len() != c {
            return Err(Error::Data(format!(
                "expected channel statistics for {c} channels"
            )));
        }
        Ok(Dataset {
            input_shape,
            label_arity,
            inputs,
            labels,
            channel_mean,
            channel_std,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn label_arity(&self) -> usize {
        self.label_arity
    }

    pub fn inputs(&self) -> &[Tensor<T>] {
        &self.inputs
    }

    pub fn labels(&self) -> &[Tensor<T>] {
        &self.labels
    }

    pub fn channel_mean(&self) -> &[f64] {
        &self.channel_mean
    }

    pub fn channel_std(&self) -> &[f64] {
        &self.channel_std
    }

    /// Class of sample `i`: the argmax of a one-hot label, or the rounded
    /// value of a scalar label.
    pub fn class_of(&self, i: usize) -> usize {
        let l = &self.labels[i];
        if self.label_arity == 1 {
            l.data()[0].to_f64_lossless().round().max(0.0) as usize
        } else {
            l.argmax()
        }
    }

    pub fn range(&self, split: Split) -> Result<Range<usize>> {
        split.range(self.len())
    }

    /// Inputs and labels of a split (may be empty).
    pub fn split(&self, split: Split) -> Result<(&[Tensor<T>], &[Tensor<T>])> {
        let r = self.range(split)?;
        Ok((&self.inputs[r.clone()], &self.labels[r]))
    }

    /// A new dataset holding the samples of `split`.
    pub fn subset(&self, split: Split) -> Result<Self> {
        let r = self.range(split)?;
        Self::with_channel_stats(
            self.input_shape.clone(),
            self.label_arity,
            self.inputs[r.clone()].to_vec(),
            self.labels[r].to_vec(),
            self.channel_mean.clone(),
            self.channel_std.clone(),
        )
    }

    /// Standardizes every channel to zero mean and unit variance over all
    /// samples and positions, recording the statistics that were removed.
    /// Constant channels keep a standard deviation of 1.
    pub fn normalize_channels(mut self) -> Self {
        let c = channel_count(&self.input_shape);
        let plane = self.inputs[0].len() / c;
        let mut mean = vec![0.0; c];
        let mut m2 = vec![0.0; c];
        let mut count = 0.0f64;
        for x in &self.inputs {
            count += 1.0;
            for ch in 0..c {
                let vals = &x.data()[ch * plane..(ch + 1) * plane];
                let s: f64 = vals.iter().map(|v| v.to_f64_lossless()).sum();
                let ss: f64 = vals.iter().map(|v| v.to_f64_lossless().powi(2)).sum();
                mean[ch] += s;
                m2[ch] += ss;
            }
        }
        let n = count * plane as f64;
        let std: Vec<f64> = (0..c)
            .map(|ch| {
                mean[ch] /= n;
                let var = (m2[ch] / n - mean[ch] * mean[ch]).max(0.0);
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        for x in &mut self.inputs {
            let data = x
                .data()
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let ch = i / plane;
                    T::lit((v.to_f64_lossless() - mean[ch]) / std[ch])
                })
                .collect();
            *x = Tensor::from_parts(self.input_shape.clone(), data);
        }
        for ch in 0..c {
            self.channel_mean[ch] = self.channel_mean[ch] + mean[ch] * self.channel_std[ch];
            self.channel_std[ch] *= std[ch];
        }
        self
    }
}

/// One-hot label of arity `classes`.
pub fn one_hot<T: Scalar>(class: usize, classes: usize) -> Tensor<T> {
    let mut v = vec![T::zero(); classes];
    v[class] = T::one();
    Tensor::from_parts(vec![classes], v)
}
