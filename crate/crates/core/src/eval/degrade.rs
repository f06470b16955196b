use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::explain::{Explainer, Method};
use crate::network::softmax;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::baseline::random_patch_order;

/// How patches are ranked for removal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchOrdering {
    /// Descending patch sums of the method's explanation for the predicted
    /// class; ties go to the lower patch index.
    Method(Method),
    /// A seeded random permutation per image.
    Random { seed: u64 },
}

impl PatchOrdering {
    pub fn label(&self) -> String {
        match self {
            PatchOrdering::Method(m) => m.name().to_string(),
            PatchOrdering::Random { .. } => "random".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DegradationOptions {
    pub patch: usize,
    pub steps: usize,
}

impl Default for DegradationOptions {
    fn default() -> Self {
        DegradationOptions {
            patch: 4,
            steps: 100,
        }
    }
}

/// Mean soft-max confidence in the originally predicted class after
/// replacing the first `step` ranked patches (`confidence[0]` is the
/// unperturbed prediction). Once every patch is replaced the curve stays at
/// its last value.
#[derive(Debug, Clone, PartialEq)]
pub struct DegradationCurve {
    pub ordering: String,
    pub images: usize,
    pub confidence: Vec<f64>,
}

impl DegradationCurve {
    /// Mean of the curve over all `steps + 1` points.
    pub fn auc(&self) -> f64 {
        self.confidence.iter().sum::<f64>() / self.confidence.len() as f64
    }
}

/// Non-overlapping `p × p` patches of an `h × w` grid in row-major order;
/// edge patches are cut to fit. Each entry is `(y0, y1, x0, x1)`.
pub fn patch_grid(h: usize, w: usize, p: usize) -> Vec<(usize, usize, usize, usize)> {
    let mut v = Vec::new();
    for y0 in (0..h).step_by(p) {
        for x0 in (0..w).step_by(p) {
            v.push((y0, (y0 + p).min(h), x0, (x0 + p).min(w)));
        }
    }
    v
}

fn image_dims(shape: &[usize], patch: usize) -> Result<(usize, usize, usize)> {
    let [c, h, w] = *shape else {
        return Err(Error::Data(format!(
            "degradation needs [C, H, W] images, got {shape:?}"
        )));
    };
    if patch == 0 || h < patch || w < patch {
        return Err(Error::Data(format!(
            "{h}x{w} image is smaller than one {patch}x{patch} patch"
        )));
    }
    Ok((c, h, w))
}

/// Ranks the patches of one image (descending score, ascending index on
/// ties).
pub fn rank_patches(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

fn curve_for_image<T: Scalar>(
    explainer: &Explainer<'_, T>,
    x: &Tensor<T>,
    index: usize,
    ordering: PatchOrdering,
    opts: &DegradationOptions,
) -> Result<Vec<f64>> {
    let model = explainer.model();
    let (c, h, w) = image_dims(x.shape(), opts.patch)?;
    let grid = patch_grid(h, w, opts.patch);
    let y = model.predict(x)?;
    let class = y.argmax();
    let confidence = |y: &Tensor<T>| softmax(y.data())[class].to_f64_lossless();
    let order = match ordering {
        PatchOrdering::Method(m) => {
            let e = explainer.explain(x, class, m)?.values.to_f64_vec();
            let scores: Vec<f64> = grid
                .iter()
                .map(|&(y0, y1, x0, x1)| {
                    let mut s = 0.0;
                    for ch in 0..c {
                        for yy in y0..y1 {
                            for xx in x0..x1 {
                                s += e[(ch * h + yy) * w + xx];
                            }
                        }
                    }
                    s
                })
                .collect();
            rank_patches(&scores)
        }
        PatchOrdering::Random { seed } => random_patch_order(seed, index, grid.len()),
    };
    let mut cur = x.data().to_vec();
    let mut curve = Vec::with_capacity(opts.steps + 1);
    curve.push(confidence(&y));
    for step in 0..opts.steps {
        let Some(&p) = order.get(step) else {
            curve.push(*curve.last().unwrap());
            continue;
        };
        let (y0, y1, x0, x1) = grid[p];
        let area = T::lit(((y1 - y0) * (x1 - x0)) as f64);
        for ch in 0..c {
            let idx = |yy: usize, xx: usize| (ch * h + yy) * w + xx;
            let mut mean = T::zero();
            for yy in y0..y1 {
                for xx in x0..x1 {
                    mean = mean + cur[idx(yy, xx)];
                }
            }
            mean = mean / area;
            for yy in y0..y1 {
                for xx in x0..x1 {
                    cur[idx(yy, xx)] = mean;
                }
            }
        }
        let xt = Tensor::new(x.shape().to_vec(), cur.clone())?;
        curve.push(confidence(&model.predict(&xt)?));
    }
    Ok(curve)
}

/// Patch-degradation experiment averaged over `images`. `first_index` is
/// the dataset index of `images[0]`; it keys the random orderings so a
/// sharded run matches a single pass.
pub fn degradation_run<T: Scalar>(
    explainer: &Explainer<'_, T>,
    images: &[Tensor<T>],
    first_index: usize,
    ordering: PatchOrdering,
    opts: &DegradationOptions,
) -> Result<DegradationCurve> {
    if images.is_empty() {
        return Err(Error::Data("degradation needs at least one image".into()));
    }
    let curves = images
        .par_iter()
        .enumerate()
        .map(|(i, x)| curve_for_image(explainer, x, first_index + i, ordering, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut mean = vec![0.0; opts.steps + 1];
    for c in &curves {
        for (m, v) in mean.iter_mut().zip(c) {
            *m += v;
        }
    }
    let n = curves.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(DegradationCurve {
        ordering: ordering.label(),
        images: images.len(),
        confidence: mean,
    })
}
