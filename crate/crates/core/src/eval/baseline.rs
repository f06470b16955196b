use crate::error::Result;
use crate::estimators::{FitFlags, LayerPatterns, PatternSet, Provenance, SignalEstimatorKind};
use crate::network::NetworkModel;
use crate::scalar::{dot, Scalar};
use crate::tensor::{RngStream, Tensor};

/// A random direction `u` is redrawn while `|wᵀu| ≤ RESAMPLE_TOL · ‖w‖`.
pub const RESAMPLE_TOL: f64 = 1e-6;

/// Random-direction estimator: per neuron a unit vector `u`, rescaled to
/// `a = u / wᵀu` so that `wᵀa = 1`. Neurons with zero weights keep `u` and
/// are flagged dead. Recorded as a linear-kind, unfitted pattern set.
pub fn random_patterns<T: Scalar>(model: &NetworkModel<T>, seed: u64) -> Result<PatternSet<T>> {
    let mut rng = RngStream::new(seed).fork(0);
    let mut layers = Vec::new();
    for li in model.linear_layers() {
        let layer = &model.layers()[li];
        let (n, k) = (layer.neurons(), layer.fan_in());
        let mut data = Vec::with_capacity(n * k);
        let mut flags = Vec::with_capacity(n);
        for o in 0..n {
            let w: Vec<f64> = layer
                .neuron_weights(o)
                .iter()
                .map(|v| v.to_f64_lossless())
                .collect();
            let wn = dot(&w, &w).sqrt();
            loop {
                let mut u: Vec<f64> = (0..k).map(|_| rng.normal()).collect();
                let un = dot(&u, &u).sqrt();
                u.iter_mut().for_each(|v| *v /= un);
                let den = dot(&w, &u);
                if wn == 0.0 {
                    data.extend(u.into_iter().map(T::lit));
                    flags.push(FitFlags::DEAD);
                    break;
                }
                if den.abs() > RESAMPLE_TOL * wn {
                    data.extend(u.into_iter().map(|v| T::lit(v / den)));
                    flags.push(FitFlags::empty());
                    break;
                }
            }
        }
        let t = Tensor::new(layer.weights().unwrap().shape().to_vec(), data)?;
        layers.push(LayerPatterns {
            layer: li,
            linear: t.clone(),
            positive: t.clone(),
            negative: t,
            flags,
            count_total: vec![0; n],
            count_pos: vec![0; n],
        });
    }
    PatternSet::new(
        model,
        Provenance {
            kind: SignalEstimatorKind::Linear,
            sample_count: 0,
            split: None,
            timestamp: 0,
        },
        layers,
    )
}

/// Seeded random permutation of `patches` patch indices for image `image`.
pub fn random_patch_order(seed: u64, image: usize, patches: usize) -> Vec<usize> {
    RngStream::new(seed)
        .fork(1 + image as u64)
        .permutation(patches)
}
