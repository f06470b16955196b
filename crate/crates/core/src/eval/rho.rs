use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::PatternSet;
use crate::network::{im2col, ActivationTrace, Layer, NetworkModel};
use crate::scalar::{axpy, dot, Scalar};
use crate::tensor::{ridge_solve_normal, Tensor};

/// Ridge strength relative to the mean diagonal of the probe's normal
/// matrix.
pub const RHO_LAMBDA_SCALE: f64 = 1e-6;

const SHARD: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronRho {
    pub rho: f64,
    /// No linear information could be recovered (zero residual or a dead
    /// neuron); `rho` is 1 by convention.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerRho {
    pub layer: usize,
    pub neurons: Vec<NeuronRho>,
}

impl LayerRho {
    /// Mean over unflagged neurons, or 1 when every neuron is flagged.
    pub fn mean(&self) -> f64 {
        let ok: Vec<f64> = self
            .neurons
            .iter()
            .filter(|n| !n.flagged)
            .map(|n| n.rho)
            .collect();
        if ok.is_empty() {
            1.0
        } else {
            ok.iter().sum::<f64>() / ok.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhoReport {
    pub layers: Vec<LayerRho>,
}

impl RhoReport {
    pub fn layer_means(&self) -> Vec<f64> {
        self.layers.iter().map(LayerRho::mean).collect()
    }
}

/// Rows seen by one linear layer: a dense layer sees one input vector per
/// sample, a conv layer one patch per output position.
fn for_each_row<T: Scalar>(
    model: &NetworkModel<T>,
    li: usize,
    x: &[f64],
    pre: &[f64],
    mut f: impl FnMut(&[f64], &dyn Fn(usize) -> f64),
) -> Result<()> {
    match &model.layers()[li] {
        Layer::Dense { .. } => f(x, &|o| pre[o]),
        layer @ Layer::Conv2d { .. } => {
            let g = layer.conv_geometry(&model.boundary_shapes()[li])?;
            let (p, k) = (g.positions(), g.patch_len());
            let cols = im2col(&g, x);
            for q in 0..p {
                f(&cols[q * k..(q + 1) * k], &|o| pre[o * p + q]);
            }
        }
        _ => unreachable!(),
    }
    Ok(())
}

/// Regime index: 0 for `y > 0`, 1 otherwise.
fn regime(y: f64) -> usize {
    if y > 0.0 {
        0
    } else {
        1
    }
}

#[derive(Clone)]
struct NeuronAcc {
    s: [Vec<f64>; 2],
    q: [f64; 2],
    z: [f64; 2],
}

/// Probe-split sums for one layer: `Σ x xᵀ` (upper triangle), `Σ x`, and per
/// neuron and regime `Σ z x`, `Σ z²`, `Σ z` with `z = wᵀx`.
#[derive(Clone)]
struct LayerAcc {
    k: usize,
    n: f64,
    g: Vec<f64>,
    m: Vec<f64>,
    neurons: Vec<NeuronAcc>,
}

impl LayerAcc {
    fn new(k: usize, neurons: usize) -> Self {
        LayerAcc {
            k,
            n: 0.0,
            g: vec![0.0; k * k],
            m: vec![0.0; k],
            neurons: vec![
                NeuronAcc {
                    s: [vec![0.0; k], vec![0.0; k]],
                    q: [0.0; 2],
                    z: [0.0; 2],
                };
                neurons
            ],
        }
    }

    fn push(&mut self, x: &[f64], w: &[Vec<f64>], y: &dyn Fn(usize) -> f64) {
        let k = self.k;
        self.n += 1.0;
        for i in 0..k {
            let xi = x[i];
            if xi != 0.0 {
                self.m[i] += xi;
                axpy(xi, &x[i..], &mut self.g[i * k + i..(i + 1) * k]);
            }
        }
        for (o, acc) in self.neurons.iter_mut().enumerate() {
            let z = dot(&w[o], x);
            let r = regime(y(o));
            axpy(z, x, &mut acc.s[r]);
            acc.q[r] += z * z;
            acc.z[r] += z;
        }
    }

    fn merge(&mut self, o: &LayerAcc) {
        self.n += o.n;
        axpy(1.0, &o.g, &mut self.g);
        axpy(1.0, &o.m, &mut self.m);
        for (a, b) in self.neurons.iter_mut().zip(&o.neurons) {
            for r in 0..2 {
                axpy(1.0, &b.s[r], &mut a.s[r]);
                a.q[r] += b.q[r];
                a.z[r] += b.z[r];
            }
        }
    }
}

/// Streaming correlation of two variables (Welford co-moments).
#[derive(Debug, Clone, Copy, Default)]
struct Corr {
    n: f64,
    mu: f64,
    mz: f64,
    cuu: f64,
    czz: f64,
    cuz: f64,
}

impl Corr {
    fn push(&mut self, u: f64, z: f64) {
        self.n += 1.0;
        let du = u - self.mu;
        let dz = z - self.mz;
        self.mu += du / self.n;
        self.mz += dz / self.n;
        self.cuu += du * (u - self.mu);
        self.czz += dz * (z - self.mz);
        self.cuz += du * (z - self.mz);
    }

    fn merge(&mut self, o: &Corr) {
        if o.n == 0.0 {
            return;
        }
        let n = self.n + o.n;
        let du = o.mu - self.mu;
        let dz = o.mz - self.mz;
        let f = self.n * o.n / n;
        self.cuu += o.cuu + du * du * f;
        self.czz += o.czz + dz * dz * f;
        self.cuz += o.cuz + du * dz * f;
        self.mu += du * o.n / n;
        self.mz += dz * o.n / n;
        self.n = n;
    }

    fn abs_corr(&self) -> Option<f64> {
        let c = self.cuz / (self.cuu.sqrt() * self.czz.sqrt());
        (self.cuu > 0.0 && self.czz > 0.0 && c.is_finite()).then(|| c.abs().min(1.0))
    }
}

/// Per-neuron probe: `v` and `vᵀa` for both regimes, or `None` if flagged.
type Probe = Option<(Vec<f64>, [f64; 2])>;

fn weight_rows<T: Scalar>(t: &Tensor<T>, k: usize) -> Vec<Vec<f64>> {
    t.to_f64_vec()
        .chunks_exact(k)
        .map(<[f64]>::to_vec)
        .collect()
}

fn shard_map<T: Scalar, A: Send>(
    model: &NetworkModel<T>,
    inputs: &[Tensor<T>],
    init: impl Fn() -> A + Sync,
    visit: impl Fn(&mut A, &ActivationTrace<T>) -> Result<()> + Sync,
) -> Result<Vec<A>> {
    inputs
        .par_chunks(SHARD)
        .map(|chunk| {
            let mut acc = init();
            for x in chunk {
                let (_, trace) = model.forward(x)?;
                visit(&mut acc, &trace)?;
            }
            Ok(acc)
        })
        .collect()
}

fn solve_probe(acc: &LayerAcc, o: usize, a: &[Vec<f64>; 2], lambda_scale: f64) -> Result<Probe> {
    let k = acc.k;
    let n = acc.n;
    let na = &acc.neurons[o];
    let zsum = na.z[0] + na.z[1];
    let var_z = ((na.q[0] + na.q[1]) - zsum * zsum / n) / n;
    let scale_z = (na.q[0] + na.q[1]) / n;
    if !(var_z > 1e-12 * scale_z.max(1e-300)) {
        return Ok(None);
    }
    // centered Σ d̂ d̂ᵀ and Σ d̂ z with d̂ = x − a_r z
    let mut sd = acc.m.clone();
    let mut hd: Vec<f64> = na.s[0].iter().zip(&na.s[1]).map(|(p, q)| p + q).collect();
    for r in 0..2 {
        axpy(-na.z[r], &a[r], &mut sd);
        axpy(-na.q[r], &a[r], &mut hd);
    }
    let mut c = vec![0.0; k * k];
    for i in 0..k {
        for j in i..k {
            let mut v = acc.g[i * k + j];
            for r in 0..2 {
                v += -a[r][i] * na.s[r][j] - na.s[r][i] * a[r][j] + na.q[r] * a[r][i] * a[r][j];
            }
            v -= sd[i] * sd[j] / n;
            c[i * k + j] = v;
            c[j * k + i] = v;
        }
    }
    let rhs: Vec<f64> = hd.iter().zip(&sd).map(|(h, s)| h - s * zsum / n).collect();
    let trace: f64 = (0..k).map(|i| c[i * k + i]).sum();
    let gtrace: f64 = (0..k)
        .map(|i| acc.g[i * k + i] - acc.m[i] * acc.m[i] / n)
        .sum();
    if !(trace > 1e-20 * gtrace.max(1e-300)) {
        return Ok(None);
    }
    let mut lambda = lambda_scale * trace / k as f64;
    let v = loop {
        match ridge_solve_normal(&c, &rhs, k, lambda) {
            Ok(v) => break v,
            Err(Error::Singular(_)) if lambda < trace => lambda *= 100.0,
            Err(e) => return Err(e),
        }
    };
    let t = [dot(&v, &a[0]), dot(&v, &a[1])];
    Ok(Some((v, t)))
}

/// Sufficient statistics of the probe split, shared by every estimator
/// evaluated on the same model and split.
pub struct ProbeStats {
    layers: Vec<usize>,
    w: Vec<Vec<Vec<f64>>>,
    acc: Vec<LayerAcc>,
    model_crc: u32,
}

impl ProbeStats {
    /// One forward pass per probe input.
    pub fn collect<T: Scalar>(model: &NetworkModel<T>, probe_inputs: &[Tensor<T>]) -> Result<Self> {
        if probe_inputs.is_empty() {
            return Err(Error::Data("rho needs a nonempty probe split".into()));
        }
        let layers = model.linear_layers();
        let w: Vec<Vec<Vec<f64>>> = layers
            .iter()
            .map(|&li| {
                let l = &model.layers()[li];
                weight_rows(l.weights().unwrap(), l.fan_in())
            })
            .collect();
        let init = || -> Vec<LayerAcc> {
            w.iter()
                .map(|w| LayerAcc::new(w[0].len(), w.len()))
                .collect()
        };
        let visit = |acc: &mut Vec<LayerAcc>, trace: &ActivationTrace<T>| -> Result<()> {
            for ((la, &li), w) in acc.iter_mut().zip(&layers).zip(&w) {
                let x = trace.input(li).to_f64_vec();
                let pre = trace.output(li).to_f64_vec();
                for_each_row(model, li, &x, &pre, |row, y| la.push(row, w, y))?;
            }
            Ok(())
        };
        let mut shards = shard_map(model, probe_inputs, init, visit)?.into_iter();
        let mut acc = shards.next().unwrap();
        for s in shards {
            for (a, b) in acc.iter_mut().zip(&s) {
                a.merge(b);
            }
        }
        Ok(ProbeStats {
            layers,
            w,
            acc,
            model_crc: model.crc32(),
        })
    }

    /// `ρ` of the estimator given by `patterns` (`None`: identity).
    pub fn rho<T: Scalar>(
        &self,
        model: &NetworkModel<T>,
        patterns: Option<&PatternSet<T>>,
        eval_inputs: &[Tensor<T>],
        lambda_scale: f64,
    ) -> Result<RhoReport> {
        if model.crc32() != self.model_crc {
            return Err(Error::Binding(
                "probe statistics belong to a different model".into(),
            ));
        }
        let Some(patterns) = patterns else {
            let layers = self
                .layers
                .iter()
                .zip(&self.w)
                .map(|(&li, w)| LayerRho {
                    layer: li,
                    neurons: vec![
                        NeuronRho {
                            rho: 1.0,
                            flagged: true
                        };
                        w.len()
                    ],
                })
                .collect();
            return Ok(RhoReport { layers });
        };
        if eval_inputs.is_empty() {
            return Err(Error::Data("rho needs a nonempty evaluation split".into()));
        }
        patterns.check_binding(model)?;
        let a: Vec<Vec<[Vec<f64>; 2]>> = self
            .layers
            .iter()
            .zip(&self.w)
            .map(|(&li, w)| {
                let k = w[0].len();
                let (pos, neg) = patterns.regime_patterns(li).unwrap();
                weight_rows(pos, k)
                    .into_iter()
                    .zip(weight_rows(neg, k))
                    .map(|(p, n)| [p, n])
                    .collect()
            })
            .collect();
        let probes: Vec<Vec<Probe>> = self
            .acc
            .iter()
            .zip(&a)
            .map(|(la, a)| {
                (0..a.len())
                    .into_par_iter()
                    .map(|o| solve_probe(la, o, &a[o], lambda_scale))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;

        let init = || -> Vec<Vec<Corr>> {
            self.w
                .iter()
                .map(|w| vec![Corr::default(); w.len()])
                .collect()
        };
        let visit = |acc: &mut Vec<Vec<Corr>>, trace: &ActivationTrace<T>| -> Result<()> {
            for (((corrs, &li), w), pr) in
                acc.iter_mut().zip(&self.layers).zip(&self.w).zip(&probes)
            {
                let x = trace.input(li).to_f64_vec();
                let pre = trace.output(li).to_f64_vec();
                for_each_row(model, li, &x, &pre, |row, y| {
                    for (o, c) in corrs.iter_mut().enumerate() {
                        if let Some((v, t)) = &pr[o] {
                            let z = dot(&w[o], row);
                            c.push(dot(v, row) - t[regime(y(o))] * z, z);
                        }
                    }
                })?;
            }
            Ok(())
        };
        let mut shards = shard_map(model, eval_inputs, init, visit)?.into_iter();
        let mut corr = shards.next().unwrap();
        for s in shards {
            for (a, b) in corr.iter_mut().flatten().zip(s.iter().flatten()) {
                a.merge(b);
            }
        }
        let layers = self
            .layers
            .iter()
            .zip(&probes)
            .zip(&corr)
            .map(|((&li, pr), cs)| LayerRho {
                layer: li,
                neurons: pr
                    .iter()
                    .zip(cs)
                    .map(|(p, c)| match (p, c.abs_corr()) {
                        (Some(_), Some(r)) => NeuronRho {
                            rho: 1.0 - r,
                            flagged: false,
                        },
                        _ => NeuronRho {
                            rho: 1.0,
                            flagged: true,
                        },
                    })
                    .collect(),
            })
            .collect();
        Ok(RhoReport { layers })
    }
}

/// Quality of a signal estimator for every neuron of every linear layer:
/// `ρ = 1 − |corr(wᵀx, vᵀd̂)|` with `d̂ = x − S(x)`. The probe `v` is a
/// ridge regression of `wᵀx` on the centered residual over `probe_inputs`;
/// the correlation is measured on `eval_inputs`. `patterns = None` is the
/// identity estimator, whose residual is zero (every neuron flagged).
pub fn measure_rho<T: Scalar>(
    model: &NetworkModel<T>,
    patterns: Option<&PatternSet<T>>,
    probe_inputs: &[Tensor<T>],
    eval_inputs: &[Tensor<T>],
    lambda_scale: f64,
) -> Result<RhoReport> {
    ProbeStats::collect(model, probe_inputs)?.rho(model, patterns, eval_inputs, lambda_scale)
}
