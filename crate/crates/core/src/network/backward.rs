use crate::error::{Error, Result};
use crate::scalar::{axpy, Scalar};
use crate::tensor::{ensure_finite, Tensor};

use super::conv::col2im_add;
use super::{ActivationTrace, Layer, NetworkModel};

/// How a backward pass treats ReLU layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RectifierRule {
    /// Multiply by the forward gate mask (true gradient).
    Gate,
    /// Ignore the forward gate, rectify the backward signal (DeConvNet).
    ReluOnSignal,
    /// Forward gate and a rectified backward signal (Guided BackProp).
    GateAndRelu,
}

/// Backward weights of one linear layer as `neurons × fan_in` row-major
/// matrices. When `negative` is set, neurons whose forward pre-activation is
/// not positive use it instead of `positive`.
#[derive(Debug, Clone, Copy)]
pub struct LinearWeights<'a, T> {
    pub positive: &'a [T],
    pub negative: Option<&'a [T]>,
}

/// Per-method substitution rules for a reverse pass over a trace.
pub trait BackwardRule<T: Scalar> {
    fn linear_weights<'a>(
        &'a self,
        layer_index: usize,
        layer: &'a Layer<T>,
    ) -> Result<LinearWeights<'a, T>>;

    fn rectifier(&self) -> RectifierRule {
        RectifierRule::Gate
    }
}

/// The true gradient.
#[derive(Debug, Clone, Copy, Default)]
pub struct Gradient;

impl<T: Scalar> BackwardRule<T> for Gradient {
    fn linear_weights<'a>(&'a self, _: usize, layer: &'a Layer<T>) -> Result<LinearWeights<'a, T>> {
        Ok(LinearWeights {
            positive: layer.weights().expect("linear layer").data(),
            negative: None,
        })
    }
}

/// `grad_in = Wᵀ grad_out` for a dense or conv layer, choosing per output
/// element between the positive and negative weight sets by the sign of the
/// recorded pre-activation.
pub(crate) fn linear_transpose<T: Scalar>(
    layer: &Layer<T>,
    in_shape: &[usize],
    weights: LinearWeights<'_, T>,
    preact: &[T],
    grad_out: &[T],
) -> Result<Vec<T>> {
    let n = layer.neurons();
    let k = layer.fan_in();
    if weights.positive.len() != n * k || weights.negative.is_some_and(|w| w.len() != n * k) {
        return Err(Error::Dimension(format!(
            "backward weights for a {} layer must have {n}x{k} entries",
            layer.kind()
        )));
    }
    let pick = |o: usize, z: T| -> &[T] {
        let w = match weights.negative {
            Some(neg) if !(z > T::zero()) => neg,
            _ => weights.positive,
        };
        &w[o * k..(o + 1) * k]
    };
    let in_len: usize = in_shape.iter().product();
    let mut grad_in = vec![T::zero(); in_len];
    match layer {
        Layer::Dense { .. } => {
            for o in 0..n {
                let g = grad_out[o];
                if g != T::zero() {
                    axpy(g, pick(o, preact[o]), &mut grad_in);
                }
            }
        }
        Layer::Conv2d { .. } => {
            let geom = layer.conv_geometry(in_shape)?;
            let p_n = geom.positions();
            let mut cols = vec![T::zero(); p_n * k];
            for o in 0..n {
                for p in 0..p_n {
                    let g = grad_out[o * p_n + p];
                    if g != T::zero() {
                        axpy(
                            g,
                            pick(o, preact[o * p_n + p]),
                            &mut cols[p * k..(p + 1) * k],
                        );
                    }
                }
            }
            col2im_add(&geom, &cols, &mut grad_in);
        }
        _ => unreachable!("linear_transpose on a {} layer", layer.kind()),
    }
    Ok(grad_in)
}

/// Routes each pooled value back to its recorded argmax.
pub(crate) fn route_maxpool<T: Scalar>(
    switches: &[usize],
    grad_out: &[T],
    in_len: usize,
) -> Vec<T> {
    let mut grad_in = vec![T::zero(); in_len];
    for (&src, &g) in switches.iter().zip(grad_out) {
        grad_in[src] = grad_in[src] + g;
    }
    grad_in
}

/// Runs a reverse pass and returns the backward signal at every layer
/// boundary: `[i]` is the signal at the input of layer `i`, the last entry is
/// the seed.
pub fn backward_layers<T: Scalar, R: BackwardRule<T> + ?Sized>(
    model: &NetworkModel<T>,
    trace: &ActivationTrace<T>,
    seed: &Tensor<T>,
    rule: &R,
) -> Result<Vec<Tensor<T>>> {
    trace.check_against(model)?;
    if seed.shape() != model.output_shape() {
        return Err(Error::Dimension(format!(
            "seed shape {:?} does not match output {:?}",
            seed.shape(),
            model.output_shape()
        )));
    }
    let shapes = model.boundary_shapes();
    let n_layers = model.layers().len();
    let mut signals = vec![seed.clone(); n_layers + 1];
    for i in (0..n_layers).rev() {
        let g = signals[i + 1].data();
        let in_len: usize = shapes[i].iter().product();
        let layer = &model.layers()[i];
        let next = match layer {
            Layer::Dense { .. } | Layer::Conv2d { .. } => {
                let w = rule.linear_weights(i, layer)?;
                linear_transpose(layer, &shapes[i], w, trace.output(i).data(), g)?
            }
            Layer::Relu => {
                let gate = trace.gate(i).expect("checked");
                let zero = T::zero();
                match rule.rectifier() {
                    RectifierRule::Gate => g
                        .iter()
                        .zip(gate)
                        .map(|(&v, &open)| if open { v } else { zero })
                        .collect(),
                    RectifierRule::ReluOnSignal => g.iter().map(|&v| v.max(zero)).collect(),
                    RectifierRule::GateAndRelu => g
                        .iter()
                        .zip(gate)
                        .map(|(&v, &open)| if open { v.max(zero) } else { zero })
                        .collect(),
                }
            }
            Layer::MaxPool2d { .. } => {
                route_maxpool(trace.switches(i).expect("checked"), g, in_len)
            }
        };
        ensure_finite(&next, "backward pass")?;
        signals[i] = Tensor::from_parts(shapes[i].clone(), next);
    }
    Ok(signals)
}

pub fn backward_with<T: Scalar, R: BackwardRule<T> + ?Sized>(
    model: &NetworkModel<T>,
    trace: &ActivationTrace<T>,
    seed: &Tensor<T>,
    rule: &R,
) -> Result<Tensor<T>> {
    Ok(backward_layers(model, trace, seed, rule)?.swap_remove(0))
}

/// Reverse-mode gradient of `seedᵀ y` with respect to the input.
pub fn backward<T: Scalar>(
    model: &NetworkModel<T>,
    trace: &ActivationTrace<T>,
    seed: &Tensor<T>,
) -> Result<Tensor<T>> {
    backward_with(model, trace, seed, &Gradient)
}
