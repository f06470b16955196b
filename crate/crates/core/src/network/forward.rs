use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};
use crate::tensor::{ensure_finite, Tensor};

use super::conv::im2col;
use super::{Layer, NetworkModel};

/// Everything the backward passes and the estimators need from one forward
/// pass: the tensor at every layer boundary, the ReLU gate masks and the
/// max-pool switches.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace<T> {
    boundaries: Vec<Tensor<T>>,
    gates: Vec<Option<Vec<bool>>>,
    switches: Vec<Option<Vec<usize>>>,
}

pub(crate) struct LayerOutput<T> {
    pub values: Vec<T>,
    pub gate: Option<Vec<bool>>,
    pub switches: Option<Vec<usize>>,
}

impl<T: Scalar> Layer<T> {
    /// Applies the layer to an input whose shape has already been validated.
    pub(crate) fn apply(&self, input: &[T], in_shape: &[usize]) -> Result<LayerOutput<T>> {
        let mut out = LayerOutput {
            values: Vec::new(),
            gate: None,
            switches: None,
        };
        match self {
            Layer::Dense { weights, bias } => {
                let k = weights.shape()[1];
                out.values = (0..weights.shape()[0])
                    .map(|o| dot(&weights.data()[o * k..(o + 1) * k], input) + bias.data()[o])
                    .collect();
            }
            Layer::Conv2d { weights, bias, .. } => {
                let g = self.conv_geometry(in_shape)?;
                let cols = im2col(&g, input);
                let (p_n, k) = (g.positions(), g.patch_len());
                let mut values = Vec::with_capacity(weights.shape()[0] * p_n);
                for o in 0..weights.shape()[0] {
                    let w = &weights.data()[o * k..(o + 1) * k];
                    let b = bias.data()[o];
                    for p in 0..p_n {
                        values.push(dot(w, &cols[p * k..(p + 1) * k]) + b);
                    }
                }
                out.values = values;
            }
            Layer::Relu => {
                // a pre-activation of exactly zero closes the gate
                let gate: Vec<bool> = input.iter().map(|&v| v > T::zero()).collect();
                out.values = input
                    .iter()
                    .zip(&gate)
                    .map(|(&v, &open)| if open { v } else { T::zero() })
                    .collect();
                out.gate = Some(gate);
            }
            Layer::MaxPool2d { window, stride } => {
                let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
                let (oh, ow) = ((h - window) / stride + 1, (w - window) / stride + 1);
                let mut values = Vec::with_capacity(c * oh * ow);
                let mut switches = Vec::with_capacity(c * oh * ow);
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            // scanning in increasing flat index with a strict
                            // comparison makes the lowest index win ties
                            let mut best = (ch * h + oy * stride) * w + ox * stride;
                            for dy in 0..*window {
                                for dx in 0..*window {
                                    let idx = (ch * h + oy * stride + dy) * w + ox * stride + dx;
                                    if input[idx] > input[best] {
                                        best = idx;
                                    }
                                }
                            }
                            values.push(input[best]);
                            switches.push(best);
                        }
                    }
                }
                out.values = values;
                out.switches = Some(switches);
            }
        }
        Ok(out)
    }
}

impl<T: Scalar> NetworkModel<T> {
    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.shape() != self.input_shape() {
            return Err(Error::Dimension(format!(
                "input shape {:?} does not match model input {:?}",
                x.shape(),
                self.input_shape()
            )));
        }
        Ok(())
    }

    /// Forward pass recording the full trace. Returns the final pre-soft-max
    /// output and the trace.
    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ActivationTrace<T>)> {
        self.check_input(x)?;
        let shapes = self.boundary_shapes();
        let mut boundaries = Vec::with_capacity(self.layers().len() + 1);
        let mut gates = Vec::with_capacity(self.layers().len());
        let mut switches = Vec::with_capacity(self.layers().len());
        boundaries.push(x.clone());
        for (i, layer) in self.layers().iter().enumerate() {
            let out = layer.apply(boundaries[i].data(), &shapes[i])?;
            ensure_finite(&out.values, "forward pass")?;
            boundaries.push(Tensor::from_parts(shapes[i + 1].clone(), out.values));
            gates.push(out.gate);
            switches.push(out.switches);
        }
        let y = boundaries.last().unwrap().clone();
        Ok((
            y,
            ActivationTrace {
                boundaries,
                gates,
                switches,
            },
        ))
    }

    /// Forward pass without keeping the trace.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let shapes = self.boundary_shapes();
        let mut cur = x.data().to_vec();
        for (i, layer) in self.layers().iter().enumerate() {
            cur = layer.apply(&cur, &shapes[i])?.values;
        }
        ensure_finite(&cur, "forward pass")?;
        Ok(Tensor::from_parts(self.output_shape().to_vec(), cur))
    }
}

impl<T: Scalar> ActivationTrace<T> {
    pub fn layer_count(&self) -> usize {
        self.gates.len()
    }

    /// Input of layer `i`.
    pub fn input(&self, i: usize) -> &Tensor<T> {
        &self.boundaries[i]
    }

    /// Output of layer `i`; the pre-activation for dense and conv layers.
    pub fn output(&self, i: usize) -> &Tensor<T> {
        &self.boundaries[i + 1]
    }

    pub fn final_output(&self) -> &Tensor<T> {
        self.boundaries.last().unwrap()
    }

    /// Open-gate mask of a ReLU layer.
    pub fn gate(&self, i: usize) -> Option<&[bool]> {
        self.gates[i].as_deref()
    }

    /// Argmax input index per output element of a max-pool layer.
    pub fn switches(&self, i: usize) -> Option<&[usize]> {
        self.switches[i].as_deref()
    }

    /// Checks that the trace has the model's layer structure and shapes.
    pub fn check_against(&self, model: &NetworkModel<T>) -> Result<()> {
        if self.boundaries.len() != model.layers().len() + 1 {
            return Err(Error::Trace(format!(
                "trace has {} layers, model has {}",
                self.layer_count(),
                model.layers().len()
            )));
        }
        for (i, (t, s)) in self
            .boundaries
            .iter()
            .zip(model.boundary_shapes())
            .enumerate()
        {
            if t.shape() != s.as_slice() {
                return Err(Error::Trace(format!(
                    "boundary {i} has shape {:?}, model expects {s:?}",
                    t.shape()
                )));
            }
        }
        for (i, layer) in model.layers().iter().enumerate() {
            let ok = match layer {
                Layer::Relu => self.gates[i].is_some(),
                Layer::MaxPool2d { .. } => self.switches[i].is_some(),
                _ => true,
            };
            if !ok {
                return Err(Error::Trace(format!(
                    "layer {i} record is missing its mask"
                )));
            }
        }
        Ok(())
    }

    /// Recomputes every layer from its recorded input and checks the recorded
    /// outputs bit for bit.
    pub fn replay(&self, model: &NetworkModel<T>) -> Result<()> {
        self.check_against(model)?;
        for (i, layer) in model.layers().iter().enumerate() {
            let out = layer.apply(self.input(i).data(), self.input(i).shape())?;
            let same = out
                .values
                .iter()
                .zip(self.output(i).data())
                .all(|(a, b)| a.to_f64_lossless().to_bits() == b.to_f64_lossless().to_bits());
            if !same || out.gate != self.gates[i] || out.switches != self.switches[i] {
                return Err(Error::Trace(format!("layer {i} does not replay")));
            }
        }
        Ok(())
    }
}
