use rayon::prelude::*;

use crate::data::Split;
use crate::error::{Error, Result};
use crate::network::{im2col, Layer, NetworkModel};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::fit::{
    filter_pattern, fit_two_component, FitFlags, NeuronPatterns, SignalEstimatorKind,
};
use super::NeuronStats;

/// Samples per statistics shard. Shards are reduced in order, so results do
/// not depend on the number of worker threads.
const SHARD: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub kind: SignalEstimatorKind,
    pub sample_count: u64,
    /// `None` for patterns that were not fitted to data.
    pub split: Option<Split>,
    pub timestamp: u64,
}

/// Patterns of one linear layer, each tensor shaped like the layer weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerPatterns<T> {
    pub layer: usize,
    pub linear: Tensor<T>,
    pub positive: Tensor<T>,
    pub negative: Tensor<T>,
    pub flags: Vec<FitFlags>,
    pub count_total: Vec<u64>,
    pub count_pos: Vec<u64>,
}

impl<T: Scalar> LayerPatterns<T> {
    pub fn neurons(&self) -> usize {
        self.flags.len()
    }

    pub fn fan_in(&self) -> usize {
        self.linear.len() / self.neurons()
    }

    pub fn neuron(&self, o: usize) -> NeuronPatterns<'_, T> {
        let k = self.fan_in();
        let r = o * k..(o + 1) * k;
        NeuronPatterns {
            linear: &self.linear.data()[r.clone()],
            positive: &self.positive.data()[r.clone()],
            negative: &self.negative.data()[r],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternSet<T> {
    model_crc: u32,
    provenance: Provenance,
    layers: Vec<LayerPatterns<T>>,
}

impl<T: Scalar> PatternSet<T> {
    /// Assembles a pattern set for `model`, checking that there is exactly
    /// one entry per linear layer with the layer's weight shape.
    pub fn new(
        model: &NetworkModel<T>,
        provenance: Provenance,
        layers: Vec<LayerPatterns<T>>,
    ) -> Result<Self> {
        let set = PatternSet {
            model_crc: model.crc32(),
            provenance,
            layers,
        };
        set.check_shapes(model)?;
        Ok(set)
    }

    pub(crate) fn from_parts(
        model_crc: u32,
        provenance: Provenance,
        layers: Vec<LayerPatterns<T>>,
    ) -> Self {
        PatternSet {
            model_crc,
            provenance,
            layers,
        }
    }

    fn check_shapes(&self, model: &NetworkModel<T>) -> Result<()> {
        let linear = model.linear_layers();
        if linear.len() != self.layers.len() {
            return Err(Error::Dimension(format!(
                "{} pattern layers for {} linear layers",
                self.layers.len(),
                linear.len()
            )));
        }
        for (&li, lp) in linear.iter().zip(&self.layers) {
            let w = model.layers()[li].weights().unwrap();
            let n = w.shape()[0];
            let shapes_ok = lp.layer == li
                && [&lp.linear, &lp.positive, &lp.negative]
                    .iter()
                    .all(|t| t.shape() == w.shape())
                && lp.flags.len() == n
                && lp.count_total.len() == n
                && lp.count_pos.len() == n;
            if !shapes_ok {
                return Err(Error::Dimension(format!(
                    "patterns do not match layer {li}"
                )));
            }
        }
        Ok(())
    }

    pub fn model_crc(&self) -> u32 {
        self.model_crc
    }

    pub fn kind(&self) -> SignalEstimatorKind {
        self.provenance.kind
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn layers(&self) -> &[LayerPatterns<T>] {
        &self.layers
    }

    pub fn layer(&self, index: usize) -> Option<&LayerPatterns<T>> {
        self.layers.iter().find(|l| l.layer == index)
    }

    /// Same patterns, used as a different estimator kind.
    pub fn with_kind(&self, kind: SignalEstimatorKind) -> Result<Self> {
        if kind == SignalEstimatorKind::Identity {
            return Err(Error::Config("identity estimator has no patterns".into()));
        }
        let mut s = self.clone();
        s.provenance.kind = kind;
        Ok(s)
    }

    /// Patterns selected by the set's kind for the `y > 0` and `y ≤ 0`
    /// regimes: the linear and filter estimators use one pattern for both.
    pub fn regime_patterns(&self, index: usize) -> Option<(&Tensor<T>, &Tensor<T>)> {
        let l = self.layer(index)?;
        Some(match self.kind() {
            SignalEstimatorKind::TwoComponent => (&l.positive, &l.negative),
            _ => (&l.linear, &l.linear),
        })
    }

    /// Binding check against a model: the model CRC recorded at fit time
    /// must match.
    pub fn check_binding(&self, model: &NetworkModel<T>) -> Result<()> {
        let crc = model.crc32();
        if crc != self.model_crc {
            return Err(Error::Binding(format!(
                "patterns were fitted for model {:08x}, not {crc:08x}",
                self.model_crc
            )));
        }
        self.check_shapes(model)
    }

    pub fn flagged_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| &l.flags)
            .filter(|f| !f.is_empty())
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitOptions {
    pub kind: SignalEstimatorKind,
    pub split: Option<Split>,
    pub timestamp: u64,
}

impl FitOptions {
    pub fn new(kind: SignalEstimatorKind) -> Self {
        FitOptions {
            kind,
            split: None,
            timestamp: 0,
        }
    }
}

fn empty_stats<T: Scalar>(model: &NetworkModel<T>, linear: &[usize]) -> Vec<Vec<NeuronStats<T>>> {
    linear
        .iter()
        .map(|&li| {
            let l = &model.layers()[li];
            vec![NeuronStats::new(l.fan_in()); l.neurons()]
        })
        .collect()
}

fn accumulate_sample<T: Scalar>(
    model: &NetworkModel<T>,
    linear: &[usize],
    x: &Tensor<T>,
    stats: &mut [Vec<NeuronStats<T>>],
) -> Result<()> {
    let (_, trace) = model.forward(x)?;
    for (slot, &li) in linear.iter().enumerate() {
        let layer = &model.layers()[li];
        let input = trace.input(li).data();
        let pre = trace.output(li).data();
        match layer {
            Layer::Dense { .. } => {
                for (s, &y) in stats[slot].iter_mut().zip(pre) {
                    s.push_unchecked(input, y);
                }
            }
            Layer::Conv2d { .. } => {
                let g = layer.conv_geometry(&model.boundary_shapes()[li])?;
                let cols = im2col(&g, input);
                let (p, k) = (g.positions(), g.patch_len());
                for (o, s) in stats[slot].iter_mut().enumerate() {
                    for (q, patch) in cols.chunks_exact(k).enumerate() {
                        s.push_unchecked(patch, pre[o * p + q]);
                    }
                }
            }
            _ => unreachable!(),
        }
    }
    Ok(())
}

/// One forward pass per input, accumulating statistics for every neuron of
/// every linear layer (outer index follows `model.linear_layers()`). Conv
/// filters pool their statistics over all spatial positions.
pub fn collect_stats<T: Scalar>(
    model: &NetworkModel<T>,
    inputs: &[Tensor<T>],
) -> Result<Vec<Vec<NeuronStats<T>>>> {
    let linear = model.linear_layers();
    let shards = inputs
        .par_chunks(SHARD)
        .map(|chunk| {
            let mut stats = empty_stats(model, &linear);
            for x in chunk {
                accumulate_sample(model, &linear, x, &mut stats)?;
            }
            Ok(stats)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = empty_stats(model, &linear);
    for shard in &shards {
        for (acc, part) in total.iter_mut().zip(shard) {
            for (a, b) in acc.iter_mut().zip(part) {
                a.merge(b)?;
            }
        }
    }
    Ok(total)
}

/// Closed-form fits from collected statistics.
pub fn patterns_from_stats<T: Scalar>(
    model: &NetworkModel<T>,
    stats: &[Vec<NeuronStats<T>>],
    sample_count: u64,
    options: &FitOptions,
) -> Result<PatternSet<T>> {
    let linear = model.linear_layers();
    if stats.len() != linear.len() {
        return Err(Error::Dimension(
            "statistics do not match the model's linear layers".into(),
        ));
    }
    let mut layers = Vec::with_capacity(linear.len());
    for (&li, layer_stats) in linear.iter().zip(stats) {
        let layer = &model.layers()[li];
        let shape = layer.weights().unwrap().shape().to_vec();
        let (mut a, mut ap, mut an) = (Vec::new(), Vec::new(), Vec::new());
        let mut flags = Vec::new();
        for (o, s) in layer_stats.iter().enumerate() {
            let fit = fit_two_component(s, layer.neuron_weights(o))?;
            a.extend(super::fit_linear(s, layer.neuron_weights(o))?.pattern);
            ap.extend(fit.positive);
            an.extend(fit.negative);
            flags.push(fit.flags);
        }
        layers.push(LayerPatterns {
            layer: li,
            linear: Tensor::new(shape.clone(), a)?,
            positive: Tensor::new(shape.clone(), ap)?,
            negative: Tensor::new(shape, an)?,
            flags,
            count_total: layer_stats.iter().map(|s| s.count_total()).collect(),
            count_pos: layer_stats.iter().map(|s| s.count_pos()).collect(),
        });
    }
    PatternSet::new(
        model,
        Provenance {
            kind: options.kind,
            sample_count,
            split: options.split,
            timestamp: options.timestamp,
        },
        layers,
    )
}

fn filter_patterns<T: Scalar>(
    model: &NetworkModel<T>,
    options: &FitOptions,
) -> Result<PatternSet<T>> {
    let mut layers = Vec::new();
    for li in model.linear_layers() {
        let layer = &model.layers()[li];
        let n = layer.neurons();
        let data: Vec<T> = (0..n)
            .flat_map(|o| filter_pattern(layer.neuron_weights(o)))
            .collect();
        let t = Tensor::new(layer.weights().unwrap().shape().to_vec(), data)?;
        layers.push(LayerPatterns {
            layer: li,
            linear: t.clone(),
            positive: t.clone(),
            negative: t,
            flags: vec![FitFlags::empty(); n],
            count_total: vec![0; n],
            count_pos: vec![0; n],
        });
    }
    PatternSet::new(
        model,
        Provenance {
            kind: SignalEstimatorKind::Filter,
            sample_count: 0,
            split: None,
            timestamp: options.timestamp,
        },
        layers,
    )
}

/// Fits patterns for every linear layer from one pass over `inputs`. The
/// filter estimator is analytic and ignores the data; the identity
/// estimator has no patterns.
pub fn fit_all<T: Scalar>(
    model: &NetworkModel<T>,
    inputs: &[Tensor<T>],
    options: &FitOptions,
) -> Result<PatternSet<T>> {
    match options.kind {
        SignalEstimatorKind::Identity => {
            Err(Error::Config("identity estimator has no patterns".into()))
        }
        SignalEstimatorKind::Filter => filter_patterns(model, options),
        _ => {
            if inputs.is_empty() {
                return Err(Error::Data("cannot fit patterns on an empty split".into()));
            }
            let stats = collect_stats(model, inputs)?;
            patterns_from_stats(model, &stats, inputs.len() as u64, options)
        }
    }
}
