//! Minimal feedforward engine: dense, conv2d, ReLU and max-pool layers,
//! a forward pass that records a full activation trace, rule-driven reverse
//! passes, small-scale training and the model file format.

mod backward;
mod conv;
mod forward;
mod io;
mod train;

pub use backward::{
    backward, backward_layers, backward_with, BackwardRule, Gradient, LinearWeights, RectifierRule,
};
pub use conv::{im2col, ConvGeometry};
pub use forward::ActivationTrace;
pub use io::{
    load_model, model_from_bytes, model_to_bytes, save_model, MODEL_FORMAT_VERSION, MODEL_MAGIC,
};
pub use train::{train, Loss, Optimizer, TrainConfig, TrainReport};

pub(crate) use backward::{linear_transpose, route_maxpool};
pub(crate) use train::softmax;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{RngStream, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Valid,
    Same,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    /// `weights`: out × in, applied to the flattened input.
    Dense {
        weights: Tensor<T>,
        bias: Tensor<T>,
    },
    /// `weights`: out_channels × in_channels × kh × kw over `[C, H, W]` inputs.
    Conv2d {
        weights: Tensor<T>,
        bias: Tensor<T>,
        stride: usize,
        padding: Padding,
    },
    Relu,
    /// Valid max-pooling over square windows.
    MaxPool2d {
        window: usize,
        stride: usize,
    },
}

impl<T: Scalar> Layer<T> {
    pub fn dense(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weights.rank() != 2 {
            return Err(Error::Dimension("dense weights must be out x in".into()));
        }
        if bias.shape() != [weights.shape()[0]] {
            return Err(Error::Dimension(format!(
                "dense bias {:?} does not match {} outputs",
                bias.shape(),
                weights.shape()[0]
            )));
        }
        Ok(Layer::Dense { weights, bias })
    }

    pub fn conv2d(
        weights: Tensor<T>,
        bias: Tensor<T>,
        stride: usize,
        padding: Padding,
    ) -> Result<Self> {
        if weights.rank() != 4 {
            return Err(Error::Dimension(
                "conv weights must be oc x ic x kh x kw".into(),
            ));
        }
        if bias.shape() != [weights.shape()[0]] {
            return Err(Error::Dimension(format!(
                "conv bias {:?} does not match {} filters",
                bias.shape(),
                weights.shape()[0]
            )));
        }
        if stride == 0 {
            return Err(Error::Dimension("conv stride must be positive".into()));
        }
        Ok(Layer::Conv2d {
            weights,
            bias,
            stride,
            padding,
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Conv2d { .. } => "conv2d",
            Layer::Relu => "relu",
            Layer::MaxPool2d { .. } => "maxpool2d",
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Layer::Dense { .. } | Layer::Conv2d { .. })
    }

    pub fn weights(&self) -> Option<&Tensor<T>> {
        match self {
            Layer::Dense { weights, .. } | Layer::Conv2d { weights, .. } => Some(weights),
            _ => None,
        }
    }

    pub fn bias(&self) -> Option<&Tensor<T>> {
        match self {
            Layer::Dense { bias, .. } | Layer::Conv2d { bias, .. } => Some(bias),
            _ => None,
        }
    }

    /// Number of output units (dense) or filters (conv).
    pub fn neurons(&self) -> usize {
        self.weights().map_or(0, |w| w.shape()[0])
    }

    /// Length of one neuron's weight vector.
    pub fn fan_in(&self) -> usize {
        self.weights().map_or(0, |w| w.len() / w.shape()[0])
    }

    /// Weight vector of neuron `o` (a row of the out × fan_in view).
    pub fn neuron_weights(&self, o: usize) -> &[T] {
        let w = self.weights().expect("linear layer");
        let k = self.fan_in();
        &w.data()[o * k..(o + 1) * k]
    }

    pub fn conv_geometry(&self, input_shape: &[usize]) -> Result<ConvGeometry> {
        match self {
            Layer::Conv2d {
                weights,
                stride,
                padding,
                ..
            } => {
                let ws = weights.shape();
                if input_shape.len() != 3 || input_shape[0] != ws[1] {
                    return Err(Error::Dimension(format!(
                        "conv with {} input channels cannot take input {input_shape:?}",
                        ws[1]
                    )));
                }
                ConvGeometry::new(input_shape, ws[2], ws[3], *stride, *padding)
            }
            _ => Err(Error::Dimension(format!(
                "{} layer has no conv geometry",
                self.kind()
            ))),
        }
    }

    pub fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Dense { weights, .. } => {
                let n: usize = input_shape.iter().product();
                if n != weights.shape()[1] {
                    return Err(Error::Dimension(format!(
                        "dense layer expects {} inputs, got shape {input_shape:?}",
                        weights.shape()[1]
                    )));
                }
                Ok(vec![weights.shape()[0]])
            }
            Layer::Conv2d { weights, .. } => {
                let g = self.conv_geometry(input_shape)?;
                Ok(vec![weights.shape()[0], g.out_h, g.out_w])
            }
            Layer::Relu => Ok(input_shape.to_vec()),
            Layer::MaxPool2d { window, stride } => {
                if input_shape.len() != 3 {
                    return Err(Error::Dimension(format!(
                        "max-pool needs [C, H, W] input, got {input_shape:?}"
                    )));
                }
                let (h, w) = (input_shape[1], input_shape[2]);
                if *window == 0 || *stride == 0 || h < *window || w < *window {
                    return Err(Error::Dimension(format!(
                        "pool window {window} / stride {stride} does not fit {input_shape:?}"
                    )));
                }
                Ok(vec![
                    input_shape[0],
                    (h - window) / stride + 1,
                    (w - window) / stride + 1,
                ])
            }
        }
    }
}

/// Architecture description used to initialize a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Dense {
        units: usize,
    },
    Conv {
        filters: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
    },
    Relu,
    MaxPool {
        window: usize,
        stride: usize,
    },
}

impl FromStr for LayerSpec {
    type Err = Error;

    /// `dense:64`, `conv:8:3[:stride][:same|valid]`, `relu`, `pool:2[:stride]`
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').map(str::trim).collect();
        let num =
            |i: usize, default: Option<usize>| -> Result<usize> {
                match parts.get(i) {
                    Some(p) => p.parse::<usize>().ok().filter(|&v| v > 0).ok_or_else(|| {
                        Error::Config(format!("bad number {p:?} in layer spec {s:?}"))
                    }),
                    None => default
                        .ok_or_else(|| Error::Config(format!("layer spec {s:?} is incomplete"))),
                }
            };
        match parts[0] {
            "dense" => Ok(LayerSpec::Dense {
                units: num(1, None)?,
            }),
            "relu" => Ok(LayerSpec::Relu),
            "pool" | "maxpool" => {
                let window = num(1, None)?;
                Ok(LayerSpec::MaxPool {
                    window,
                    stride: num(2, Some(window))?,
                })
            }
            "conv" => {
                let padding = match parts.last() {
                    Some(&"valid") => Padding::Valid,
                    _ => Padding::Same,
                };
                let stride = match parts.get(3) {
                    Some(&"same") | Some(&"valid") | None => 1,
                    Some(_) => num(3, None)?,
                };
                Ok(LayerSpec::Conv {
                    filters: num(1, None)?,
                    kernel: num(2, None)?,
                    stride,
                    padding,
                })
            }
            other => Err(Error::Config(format!("unknown layer kind {other:?}"))),
        }
    }
}

/// Parses a comma separated architecture such as `dense:64,relu,dense:10`.
pub fn parse_architecture(s: &str) -> Result<Vec<LayerSpec>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// Ordered layers plus the input shape. The output of the final layer is the
/// explained quantity (no soft-max inside the model).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel<T> {
    input_shape: Vec<usize>,
    layers: Vec<Layer<T>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> NetworkModel<T> {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer<T>>) -> Result<Self> {
        crate::tensor::check_shape(&input_shape)?;
        let mut shapes = vec![input_shape.clone()];
        for layer in &layers {
            let next = layer.output_shape(shapes.last().unwrap())?;
            shapes.push(next);
        }
        Ok(NetworkModel {
            input_shape,
            layers,
            shapes,
        })
    }

    /// He-initialized weights and zero biases.
    pub fn init(input_shape: &[usize], arch: &[LayerSpec], rng: &mut RngStream) -> Result<Self> {
        let mut layers = Vec::with_capacity(arch.len());
        let mut shape = input_shape.to_vec();
        for spec in arch {
            let layer = match *spec {
                LayerSpec::Dense { units } => {
                    let fan_in: usize = shape.iter().product();
                    let std = (2.0 / fan_in as f64).sqrt();
                    let w = (0..units * fan_in)
                        .map(|_| T::lit(rng.normal() * std))
                        .collect();
                    Layer::dense(
                        Tensor::new(vec![units, fan_in], w)?,
                        Tensor::zeros(&[units])?,
                    )?
                }
                LayerSpec::Conv {
                    filters,
                    kernel,
                    stride,
                    padding,
                } => {
                    if shape.len() != 3 {
                        return Err(Error::Config(format!(
                            "conv layer needs [C, H, W] input, got {shape:?}"
                        )));
                    }
                    let fan_in = shape[0] * kernel * kernel;
                    let std = (2.0 / fan_in as f64).sqrt();
                    let w = (0..filters * fan_in)
                        .map(|_| T::lit(rng.normal() * std))
                        .collect();
                    Layer::conv2d(
                        Tensor::new(vec![filters, shape[0], kernel, kernel], w)?,
                        Tensor::zeros(&[filters])?,
                        stride,
                        padding,
                    )?
                }
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::MaxPool { window, stride } => Layer::MaxPool2d { window, stride },
            };
            shape = layer.output_shape(&shape)?;
            layers.push(layer);
        }
        NetworkModel::new(input_shape.to_vec(), layers)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().unwrap()
    }

    pub fn output_len(&self) -> usize {
        self.output_shape().iter().product()
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    /// Shape at each layer boundary: `[i]` is the input of layer `i`, the
    /// last entry is the model output.
    pub fn boundary_shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    /// Indices of dense and conv layers.
    pub fn linear_layers(&self) -> Vec<usize> {
        (0..self.layers.len())
            .filter(|&i| self.layers[i].is_linear())
            .collect()
    }

    /// Replaces layer `index` with a layer of identical shape.
    pub fn with_layer(&self, index: usize, layer: Layer<T>) -> Result<Self> {
        let mut layers = self.layers.clone();
        layers[index] = layer;
        let m = NetworkModel::new(self.input_shape.clone(), layers)?;
        if m.shapes != self.shapes {
            return Err(Error::Dimension(
                "replacement layer changes the network shape".into(),
            ));
        }
        Ok(m)
    }

    /// CRC32 of the serialized model, trailer excluded (a CRC over data
    /// followed by its own CRC is a constant); binds pattern files and
    /// explanations to a model.
    pub fn crc32(&self) -> u32 {
        let bytes = model_to_bytes(self);
        crc32fast::hash(&bytes[..bytes.len() - 4])
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights().map_or(0, |w| w.len()) + l.bias().map_or(0, |b| b.len()))
            .sum()
    }
}

impl<T: Scalar> fmt::Display for NetworkModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.input_shape)?;
        for (layer, shape) in self.layers.iter().zip(&self.shapes[1..]) {
            write!(f, " -> {} {:?}", layer.kind(), shape)?;
        }
        Ok(())
    }
}
