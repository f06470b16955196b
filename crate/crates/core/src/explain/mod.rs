//! Explanation methods as configurable reverse passes over an activation
//! trace: each method fixes the backward weights of linear layers, the
//! treatment of ReLUs and the output seed.

mod heatmap;

pub use heatmap::{render_heatmap, Heatmap, HeatmapMode};

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::estimators::PatternSet;
use crate::network::{
    backward_layers, linear_transpose, route_maxpool, ActivationTrace, BackwardRule, Layer,
    LinearWeights, NetworkModel, RectifierRule,
};
use crate::scalar::{dot, Scalar};
use crate::tensor::{ensure_finite, tensor_to_bytes, Tensor};

/// What an explanation shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Semantics {
    /// How the output changes with the input.
    Function,
    /// The part of the input that the output is built from.
    Signal,
    /// Each input's contribution to the output value.
    Attribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Saliency,
    DeconvNet,
    GuidedBackprop,
    LrpZ,
    DtdW2,
    PatternNet,
    PatternAttribution,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Saliency,
        Method::DeconvNet,
        Method::GuidedBackprop,
        Method::LrpZ,
        Method::DtdW2,
        Method::PatternNet,
        Method::PatternAttribution,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Saliency => "saliency",
            Method::DeconvNet => "deconvnet",
            Method::GuidedBackprop => "guided_backprop",
            Method::LrpZ => "lrp_z",
            Method::DtdW2 => "dtd_w2",
            Method::PatternNet => "pattern_net",
            Method::PatternAttribution => "pattern_attribution",
        }
    }

    pub fn semantics(self) -> Semantics {
        match self {
            Method::Saliency => Semantics::Function,
            Method::DeconvNet | Method::GuidedBackprop | Method::PatternNet => Semantics::Signal,
            Method::LrpZ | Method::DtdW2 | Method::PatternAttribution => Semantics::Attribution,
        }
    }

    pub fn needs_patterns(self) -> bool {
        matches!(self, Method::PatternNet | Method::PatternAttribution)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation<T> {
    pub values: Tensor<T>,
    pub method: Method,
    pub target: usize,
    pub model_crc: u32,
}

impl<T: Scalar> Explanation<T> {
    /// Writes `<stem>.blob` (raw tensor) and `<stem>.json` (sidecar with
    /// method, target, model CRC and the heatmap normalization).
    pub fn export(&self, dir: impl AsRef<Path>, stem: &str) -> Result<Vec<std::path::PathBuf>> {
        let dir = dir.as_ref();
        let blob = dir.join(format!("{stem}.blob"));
        let sidecar = dir.join(format!("{stem}.json"));
        fs::write(&blob, tensor_to_bytes(&self.values))?;
        let meta = serde_json::json!({
            "method": self.method.name(),
            "semantics": format!("{:?}", self.method.semantics()).to_lowercase(),
            "target": self.target,
            "model_crc": format!("{:08x}", self.model_crc),
            "normalization": HeatmapMode::for_method(self.method).name(),
            "shape": self.values.shape(),
        });
        fs::write(
            &sidecar,
            serde_json::to_string_pretty(&meta).unwrap() + "\n",
        )?;
        Ok(vec![blob, sidecar])
    }
}

/// Deep-Taylor redistribution of relevance `r` of a neuron with weights `w`
/// at input `x` onto its inputs, relative to root point `x0`:
/// `w ⊙ (x − x0) · r / wᵀx`.
pub fn dtd_redistribute<T: Scalar>(r: T, w: &[T], x: &[T], x0: &[T]) -> Result<Vec<T>> {
    if w.len() != x.len() || x0.len() != x.len() {
        return Err(Error::Dimension(
            "weights, input and root point lengths differ".into(),
        ));
    }
    let z = dot(w, x);
    if !(z > T::zero()) {
        return Err(Error::Numerical(format!(
            "redistribution through a neuron with wᵀx = {z}"
        )));
    }
    let out: Vec<T> = w
        .iter()
        .zip(x)
        .zip(x0)
        .map(|((&wi, &xi), &x0i)| wi * (xi - x0i) * r / z)
        .collect();
    ensure_finite(&out, "redistributed relevance")?;
    Ok(out)
}

/// Backward weights substituted for each linear layer, indexed by layer.
#[derive(Debug)]
struct Substituted<T> {
    w2: Vec<Option<Vec<T>>>,
    wa: Vec<Option<Vec<T>>>,
}

/// Explains one model, optionally with fitted patterns bound to it.
pub struct Explainer<'a, T> {
    model: &'a NetworkModel<T>,
    patterns: Option<&'a PatternSet<T>>,
    subst: Substituted<T>,
}

impl<'a, T: Scalar> Explainer<'a, T> {
    pub fn new(model: &'a NetworkModel<T>, patterns: Option<&'a PatternSet<T>>) -> Result<Self> {
        if let Some(p) = patterns {
            p.check_binding(model)?;
        }
        let n = model.layers().len();
        let mut subst = Substituted {
            w2: vec![None; n],
            wa: vec![None; n],
        };
        for li in model.linear_layers() {
            let layer = &model.layers()[li];
            let k = layer.fan_in();
            let w = layer.weights().unwrap().data();
            let mut w2 = Vec::with_capacity(w.len());
            for row in w.chunks_exact(k) {
                let norm = dot(row, row);
                w2.extend(row.iter().map(|&v| {
                    if norm > T::zero() {
                        v * v / norm
                    } else {
                        T::zero()
                    }
                }));
            }
            subst.w2[li] = Some(w2);
            if let Some((pos, _)) = patterns.and_then(|p| p.regime_patterns(li)) {
                subst.wa[li] = Some(w.iter().zip(pos.data()).map(|(&a, &b)| a * b).collect());
            }
        }
        Ok(Explainer {
            model,
            patterns,
            subst,
        })
    }

    pub fn model(&self) -> &NetworkModel<T> {
        self.model
    }

    pub fn explain(&self, x: &Tensor<T>, target: usize, method: Method) -> Result<Explanation<T>> {
        let (mut layers, _) = self.relevance_layers(x, target, method)?;
        Ok(Explanation {
            values: layers.swap_remove(0),
            method,
            target,
            model_crc: self.model.crc32(),
        })
    }

    /// The backward signal at every layer boundary (`[i]` enters layer `i`,
    /// the last entry is the seed), with the forward trace it came from.
    pub fn relevance_layers(
        &self,
        x: &Tensor<T>,
        target: usize,
        method: Method,
    ) -> Result<(Vec<Tensor<T>>, ActivationTrace<T>)> {
        let out_len = self.model.output_len();
        if target >= out_len {
            return Err(Error::Dimension(format!(
                "target {target} outside an output of {out_len}"
            )));
        }
        if method.needs_patterns() && self.patterns.is_none() {
            return Err(Error::Config(format!("{method} needs a pattern set")));
        }
        let (y, trace) = self.model.forward(x)?;
        let mut seed = vec![T::zero(); out_len];
        seed[target] = match method.semantics() {
            Semantics::Attribution => y.data()[target],
            _ => T::one(),
        };
        let seed = Tensor::new(self.model.output_shape().to_vec(), seed)?;
        let layers = if method == Method::LrpZ {
            self.z_rule(&trace, seed)?
        } else {
            backward_layers(
                self.model,
                &trace,
                &seed,
                &MethodRule {
                    method,
                    explainer: self,
                },
            )?
        };
        Ok((layers, trace))
    }

    /// Relevance pass with the z-rule: each neuron's relevance is split in
    /// proportion to `x_i w_i` over its full pre-activation (bias included,
    /// so the bias absorbs its share).
    fn z_rule(&self, trace: &ActivationTrace<T>, seed: Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let shapes = self.model.boundary_shapes();
        let n = self.model.layers().len();
        let mut out = vec![seed; n + 1];
        for i in (0..n).rev() {
            let r = out[i + 1].data();
            let layer = &self.model.layers()[i];
            let next = match layer {
                Layer::Dense { .. } | Layer::Conv2d { .. } => {
                    let z = trace.output(i).data();
                    let s: Vec<T> = r
                        .iter()
                        .zip(z)
                        .map(|(&r, &z)| if z == T::zero() { T::zero() } else { r / z })
                        .collect();
                    let w = LinearWeights {
                        positive: layer.weights().unwrap().data(),
                        negative: None,
                    };
                    let c = linear_transpose(layer, &shapes[i], w, z, &s)?;
                    trace
                        .input(i)
                        .data()
                        .iter()
                        .zip(c)
                        .map(|(&x, c)| x * c)
                        .collect()
                }
                Layer::Relu => r.to_vec(),
                Layer::MaxPool2d { .. } => {
                    route_maxpool(trace.switches(i).unwrap(), r, trace.input(i).len())
                }
            };
            ensure_finite(&next, "relevance")?;
            out[i] = Tensor::new(shapes[i].clone(), next)?;
        }
        Ok(out)
    }
}

struct MethodRule<'e, 'a, T> {
    method: Method,
    explainer: &'e Explainer<'a, T>,
}

impl<T: Scalar> BackwardRule<T> for MethodRule<'_, '_, T> {
    fn linear_weights<'b>(&'b self, i: usize, layer: &'b Layer<T>) -> Result<LinearWeights<'b, T>> {
        let e = self.explainer;
        let missing = || Error::Config(format!("no patterns for layer {i}"));
        Ok(match self.method {
            Method::DtdW2 => LinearWeights {
                positive: e.subst.w2[i].as_deref().unwrap(),
                negative: None,
            },
            Method::PatternNet => {
                let (pos, neg) = e
                    .patterns
                    .and_then(|p| p.regime_patterns(i))
                    .ok_or_else(missing)?;
                LinearWeights {
                    positive: pos.data(),
                    negative: Some(neg.data()),
                }
            }
            Method::PatternAttribution => LinearWeights {
                positive: e.subst.wa[i].as_deref().ok_or_else(missing)?,
                negative: None,
            },
            _ => LinearWeights {
                positive: layer.weights().unwrap().data(),
                negative: None,
            },
        })
    }

    fn rectifier(&self) -> RectifierRule {
        match self.method {
            Method::DeconvNet => RectifierRule::ReluOnSignal,
            Method::GuidedBackprop => RectifierRule::GateAndRelu,
            _ => RectifierRule::Gate,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{estimate_signal, fit_all, FitOptions, SignalEstimatorKind};
    use crate::network::{backward, parse_architecture};
    use crate::tensor::RngStream;

    fn toy_model() -> NetworkModel<f64> {
        let w = Tensor::matrix(&[&[1.0, -1.0]]).unwrap();
        NetworkModel::new(
            vec![2],
            vec![Layer::dense(w, Tensor::vector(vec![0.0]).unwrap()).unwrap()],
        )
        .unwrap()
    }

    fn toy_inputs(n: usize, seed: u64) -> Vec<Tensor<f64>> {
        let mut rng = RngStream::new(seed);
        (0..n)
            .map(|_| {
                let y = rng.uniform_in(-1.0, 1.0);
                let e = rng.normal();
                Tensor::vector(vec![y + e, e]).unwrap()
            })
            .collect()
    }

    #[test]
    fn semantics_are_fixed_per_method() {
        use Semantics::*;
        let expect = [
            Function,
            Signal,
            Signal,
            Attribution,
            Attribution,
            Signal,
            Attribution,
        ];
        for (m, s) in Method::ALL.into_iter().zip(expect) {
            assert_eq!(m.semantics(), s);
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
    }

    #[test]
    fn gradient_methods_agree_on_linear_model() {
        let m = toy_model();
        let e = Explainer::new(&m, None).unwrap();
        let x = Tensor::vector(vec![2.0, 1.0]).unwrap();
        for method in [Method::Saliency, Method::DeconvNet, Method::GuidedBackprop] {
            assert_eq!(
                e.explain(&x, 0, method).unwrap().values.data(),
                &[1.0, -1.0]
            );
        }
        let lrp = e.explain(&x, 0, Method::LrpZ).unwrap();
        assert_eq!(lrp.values.data(), &[2.0, -1.0]);
        assert_eq!(lrp.values.sum(), 1.0);
    }

    #[test]
    fn pattern_methods_on_toy_model() {
        let m = toy_model();
        let p = fit_all(
            &m,
            &toy_inputs(20_000, 3),
            &FitOptions::new(SignalEstimatorKind::TwoComponent),
        )
        .unwrap();
        let e = Explainer::new(&m, Some(&p)).unwrap();
        let x = Tensor::vector(vec![2.0, 1.0]).unwrap();
        let net = e.explain(&x, 0, Method::PatternNet).unwrap().values;
        let cos = crate::scalar::cosine_similarity(net.data(), &[1.0, 0.0]);
        assert!(cos > 0.99, "{:?}", net.data());
        // single linear neuron: pattern_net is the regime pattern, and the
        // two-component signal estimate divided by y
        let a = p.layers()[0].neuron(0);
        assert_eq!(net.data(), a.positive);
        let s = estimate_signal(
            SignalEstimatorKind::TwoComponent,
            &[1.0, -1.0],
            Some(a),
            x.data(),
            1.0,
        )
        .unwrap();
        assert_eq!(s, net.data());
        let att = e.explain(&x, 0, Method::PatternAttribution).unwrap().values;
        assert!((att.data()[0] - a.positive[0]).abs() < 1e-15);
        assert!((att.data()[1] + a.positive[1]).abs() < 1e-15);
        assert!((att.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pattern_methods_need_patterns() {
        let m = toy_model();
        let e = Explainer::new(&m, None).unwrap();
        let x = Tensor::vector(vec![2.0, 1.0]).unwrap();
        assert!(matches!(
            e.explain(&x, 0, Method::PatternNet),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            e.explain(&x, 1, Method::Saliency),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn dtd_rule_examples() {
        let w: [f64; 3] = [1.0, -1.0, 0.5];
        let x: [f64; 3] = [2.0, 0.5, 1.0];
        assert_eq!(dtd_redistribute(3.0, &w, &x, &x).unwrap(), vec![0.0; 3]);
        let z = dot(&w, &x);
        let lrp = dtd_redistribute(3.0, &w, &x, &[0.0; 3]).unwrap();
        for i in 0..3 {
            assert!((lrp[i] - w[i] * x[i] * 3.0 / z).abs() < 1e-15);
        }
        // root point along a normalized pattern conserves relevance
        let a: [f64; 3] = [0.4, -0.4, 0.4];
        assert!((dot(&w, &a) - 1.0).abs() < 1e-15);
        let x0: Vec<f64> = x.iter().zip(a).map(|(xi, ai)| xi - ai * z).collect();
        let r = dtd_redistribute(3.0, &w, &x, &x0).unwrap();
        assert!((r.iter().sum::<f64>() - 3.0).abs() < 1e-12);
        assert!(matches!(
            dtd_redistribute(1.0, &w, &[0.0; 3], &[0.0; 3]),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn lrp_z_is_gradient_times_input_on_cnn() {
        let mut rng = RngStream::new(21);
        let arch =
            parse_architecture("conv:4:3,relu,pool:2,conv:4:3:1:valid,relu,dense:5").unwrap();
        let mut model = NetworkModel::init(&[2, 8, 8], &arch, &mut rng).unwrap();
        // nonzero biases
        for li in model.linear_layers() {
            let l = model.layers()[li].clone();
            let b = Tensor::vector((0..l.neurons()).map(|_| 0.1 * rng.normal()).collect()).unwrap();
            let l = match l {
                Layer::Dense { weights, .. } => Layer::dense(weights, b).unwrap(),
                Layer::Conv2d {
                    weights,
                    stride,
                    padding,
                    ..
                } => Layer::conv2d(weights, b, stride, padding).unwrap(),
                _ => unreachable!(),
            };
            model = model.with_layer(li, l).unwrap();
        }
        let e = Explainer::new(&model, None).unwrap();
        for _ in 0..10 {
            let x = Tensor::new(vec![2, 8, 8], (0..128).map(|_| rng.normal()).collect()).unwrap();
            let t = rng.below(5);
            let lrp = e.explain(&x, t, Method::LrpZ).unwrap().values;
            let (_, trace) = model.forward(&x).unwrap();
            let mut seed = vec![0.0; 5];
            seed[t] = 1.0;
            let g = backward(&model, &trace, &Tensor::vector(seed).unwrap()).unwrap();
            for ((r, gi), xi) in lrp.data().iter().zip(g.data()).zip(x.data()) {
                assert!((r - gi * xi).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn explanations_export_blob_and_sidecar() {
        let m = toy_model();
        let e = Explainer::new(&m, None).unwrap();
        let x = Tensor::vector(vec![2.0, 1.0]).unwrap();
        let ex = e.explain(&x, 0, Method::LrpZ).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = ex.export(dir.path(), "lrp").unwrap();
        let back: Tensor<f64> =
            crate::tensor::tensor_from_bytes(&fs::read(&files[0]).unwrap()).unwrap();
        assert_eq!(back, ex.values);
        let meta: serde_json::Value =
            serde_json::from_slice(&fs::read(&files[1]).unwrap()).unwrap();
        assert_eq!(meta["method"], "lrp_z");
        assert_eq!(meta["model_crc"], format!("{:08x}", m.crc32()));
    }
}
