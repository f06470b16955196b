use crate::error::{Error, Result};
use crate::scalar::{axpy, Scalar};
use crate::tensor::{RngStream, Tensor};

use super::backward::{linear_transpose, route_maxpool, LinearWeights};
use super::conv::im2col;
use super::{Layer, NetworkModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// Mean over outputs of the squared error.
    MeanSquared,
    /// Soft-max cross-entropy applied on top of the model output. Targets are
    /// either a distribution over outputs or a single class index.
    SoftmaxCrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub loss: Loss,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: Optimizer::Adam,
            loss: Loss::MeanSquared,
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Mean training loss of each epoch.
    pub epoch_loss: Vec<f64>,
    pub batches: usize,
}

pub(crate) fn softmax<T: Scalar>(y: &[T]) -> Vec<T> {
    let m = y.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let e: Vec<T> = y.iter().map(|&v| (v - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn loss_and_grad<T: Scalar>(loss: Loss, y: &[T], target: &[T]) -> (f64, Vec<T>) {
    match loss {
        Loss::MeanSquared => {
            let n = T::lit(y.len() as f64);
            let mut l = T::zero();
            let g = y
                .iter()
                .zip(target)
                .map(|(&a, &t)| {
                    let d = a - t;
                    l = l + d * d;
                    T::lit(2.0) * d / n
                })
                .collect();
            ((l / n).to_f64_lossless(), g)
        }
        Loss::SoftmaxCrossEntropy => {
            let p = softmax(y);
            let dist: Vec<T> = if target.len() == 1 && y.len() > 1 {
                let c = target[0].to_f64_lossless() as usize;
                (0..y.len())
                    .map(|o| if o == c { T::one() } else { T::zero() })
                    .collect()
            } else {
                target.to_vec()
            };
            let mass: T = dist.iter().copied().sum();
            let tiny = T::min_positive_value();
            let l = dist
                .iter()
                .zip(&p)
                .fold(T::zero(), |acc, (&t, &q)| acc - t * q.max(tiny).ln());
            let g = p.iter().zip(&dist).map(|(&q, &t)| q * mass - t).collect();
            (l.to_f64_lossless(), g)
        }
    }
}

struct Params<T> {
    weights: Vec<Vec<T>>,
    biases: Vec<Vec<T>>,
}

impl<T: Scalar> Params<T> {
    fn zeros_like(model: &NetworkModel<T>) -> Self {
        Params {
            weights: model
                .layers()
                .iter()
                .map(|l| vec![T::zero(); l.weights().map_or(0, |w| w.len())])
                .collect(),
            biases: model
                .layers()
                .iter()
                .map(|l| vec![T::zero(); l.bias().map_or(0, |b| b.len())])
                .collect(),
        }
    }

    fn of(model: &NetworkModel<T>) -> Self {
        Params {
            weights: model
                .layers()
                .iter()
                .map(|l| l.weights().map_or_else(Vec::new, |w| w.data().to_vec()))
                .collect(),
            biases: model
                .layers()
                .iter()
                .map(|l| l.bias().map_or_else(Vec::new, |b| b.data().to_vec()))
                .collect(),
        }
    }

    fn slots(&mut self) -> impl Iterator<Item = &mut Vec<T>> {
        self.weights.iter_mut().chain(self.biases.iter_mut())
    }

    fn clear(&mut self) {
        for s in self.slots() {
            s.iter_mut().for_each(|v| *v = T::zero());
        }
    }
}

/// Accumulates the parameter gradient of one sample into `grads`.
fn accumulate_sample<T: Scalar>(
    model: &NetworkModel<T>,
    x: &Tensor<T>,
    target: &[T],
    loss: Loss,
    grads: &mut Params<T>,
) -> Result<f64> {
    let (y, trace) = model.forward(x)?;
    let (l, mut g) = loss_and_grad(loss, y.data(), target);
    let shapes = model.boundary_shapes();
    for i in (0..model.layers().len()).rev() {
        let layer = &model.layers()[i];
        let input = trace.input(i).data();
        match layer {
            Layer::Dense { .. } => {
                let k = layer.fan_in();
                for (o, &go) in g.iter().enumerate() {
                    if go != T::zero() {
                        axpy(go, input, &mut grads.weights[i][o * k..(o + 1) * k]);
                        grads.biases[i][o] = grads.biases[i][o] + go;
                    }
                }
            }
            Layer::Conv2d { .. } => {
                let geom = layer.conv_geometry(&shapes[i])?;
                let cols = im2col(&geom, input);
                let (p_n, k) = (geom.positions(), geom.patch_len());
                for o in 0..layer.neurons() {
                    for p in 0..p_n {
                        let go = g[o * p_n + p];
                        if go != T::zero() {
                            axpy(
                                go,
                                &cols[p * k..(p + 1) * k],
                                &mut grads.weights[i][o * k..(o + 1) * k],
                            );
                            grads.biases[i][o] = grads.biases[i][o] + go;
                        }
                    }
                }
            }
            _ => {}
        }
        if i == 0 {
            break;
        }
        g = match layer {
            Layer::Dense { weights, .. } | Layer::Conv2d { weights, .. } => linear_transpose(
                layer,
                &shapes[i],
                LinearWeights {
                    positive: weights.data(),
                    negative: None,
                },
                trace.output(i).data(),
                &g,
            )?,
            Layer::Relu => {
                let gate = trace.gate(i).expect("forward records gates");
                g.iter()
                    .zip(gate)
                    .map(|(&v, &open)| if open { v } else { T::zero() })
                    .collect()
            }
            Layer::MaxPool2d { .. } => route_maxpool(
                trace.switches(i).expect("forward records switches"),
                &g,
                shapes[i].iter().product(),
            ),
        };
    }
    Ok(l)
}

fn check_targets<T: Scalar>(
    model: &NetworkModel<T>,
    targets: &[Tensor<T>],
    loss: Loss,
) -> Result<()> {
    let out = model.output_len();
    for (i, t) in targets.iter().enumerate() {
        let ok = match loss {
            Loss::MeanSquared => t.len() == out,
            Loss::SoftmaxCrossEntropy => {
                t.len() == out
                    || (t.len() == 1 && {
                        let c = t.data()[0].to_f64_lossless();
                        c >= 0.0 && c.fract() == 0.0 && (c as usize) < out
                    })
            }
        };
        if !ok {
            return Err(Error::Data(format!(
                "label {i} with {} values is incompatible with {out} outputs",
                t.len()
            )));
        }
    }
    Ok(())
}

/// Mini-batch training. Fully deterministic given `config.seed`: the sample
/// order of every epoch is a seeded permutation and gradients are summed in
/// that order.
pub fn train<T: Scalar>(
    model: &NetworkModel<T>,
    inputs: &[Tensor<T>],
    targets: &[Tensor<T>],
    config: &TrainConfig,
) -> Result<(NetworkModel<T>, TrainReport)> {
    if inputs.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if inputs.len() != targets.len() {
        return Err(Error::Data(format!(
            "{} inputs but {} labels",
            inputs.len(),
            targets.len()
        )));
    }
    if config.batch_size == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::Config(
            "batch size and learning rate must be positive".into(),
        ));
    }
    check_targets(model, targets, config.loss)?;

    let mut report = TrainReport::default();
    if config.epochs == 0 {
        return Ok((model.clone(), report));
    }

    let mut current = model.clone();
    let mut params = Params::of(model);
    let mut grads = Params::zeros_like(model);
    let mut m1 = Params::zeros_like(model);
    let mut m2 = Params::zeros_like(model);
    let (beta1, beta2, eps) = (0.9f64, 0.999f64, 1e-8f64);
    let lr = config.learning_rate;
    let mut step = 0i32;
    let mut rng = RngStream::new(config.seed);

    for _epoch in 0..config.epochs {
        let order = rng.permutation(inputs.len());
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.clear();
            let mut batch_loss = 0.0;
            for &idx in batch {
                batch_loss += accumulate_sample(
                    &current,
                    &inputs[idx],
                    targets[idx].data(),
                    config.loss,
                    &mut grads,
                )?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::Divergence {
                    batch: report.batches,
                    loss: batch_loss,
                });
            }
            epoch_loss += batch_loss;
            let inv = T::lit(1.0 / batch.len() as f64);
            step += 1;
            let (c1, c2) = (1.0 - beta1.powi(step), 1.0 - beta2.powi(step));
            let slots = params
                .slots()
                .zip(grads.slots())
                .zip(m1.slots().zip(m2.slots()));
            for ((p, g), (a, b)) in slots {
                for j in 0..p.len() {
                    let gj = g[j] * inv;
                    match config.optimizer {
                        Optimizer::Sgd => p[j] = p[j] - T::lit(lr) * gj,
                        Optimizer::Adam => {
                            a[j] = T::lit(beta1) * a[j] + T::lit(1.0 - beta1) * gj;
                            b[j] = T::lit(beta2) * b[j] + T::lit(1.0 - beta2) * gj * gj;
                            let mhat = a[j] / T::lit(c1);
                            let vhat = b[j] / T::lit(c2);
                            p[j] = p[j] - T::lit(lr) * mhat / (vhat.sqrt() + T::lit(eps));
                        }
                    }
                }
            }
            current = rebuild(model, &params).map_err(|_| Error::Divergence {
                batch: report.batches,
                loss: f64::NAN,
            })?;
            report.batches += 1;
        }
        report.epoch_loss.push(epoch_loss / inputs.len() as f64);
    }
    Ok((current, report))
}

fn rebuild<T: Scalar>(template: &NetworkModel<T>, params: &Params<T>) -> Result<NetworkModel<T>> {
    let layers = template
        .layers()
        .iter()
        .enumerate()
        .map(|(i, l)| {
            Ok(match l {
                Layer::Dense { weights, bias } => Layer::Dense {
                    weights: Tensor::new(weights.shape().to_vec(), params.weights[i].clone())?,
                    bias: Tensor::new(bias.shape().to_vec(), params.biases[i].clone())?,
                },
                Layer::Conv2d {
                    weights,
                    bias,
                    stride,
                    padding,
                } => Layer::Conv2d {
                    weights: Tensor::new(weights.shape().to_vec(), params.weights[i].clone())?,
                    bias: Tensor::new(bias.shape().to_vec(), params.biases[i].clone())?,
                    stride: *stride,
                    padding: *padding,
                },
                other => other.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    NetworkModel::new(template.input_shape().to_vec(), layers)
}
