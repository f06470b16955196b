use std::fmt;
use std::str::FromStr;

use bitflags::bitflags;

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

use super::NeuronStats;

/// Output variance at or below which a neuron is considered dead.
pub const EPSILON_DEAD: f64 = 1e-12;

/// Regimes with fewer samples fall back to the linear pattern.
pub const MIN_REGIME_SAMPLES: u64 = 10;

bitflags! {
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
    pub struct FitFlags: u8 {
        /// Output variance ≤ EPSILON_DEAD; patterns are zero.
        const DEAD = 1;
        const POS_FALLBACK = 1 << 1;
        const NEG_FALLBACK = 1 << 2;
        /// Regime denominator vanished; that regime's pattern is zero.
        const POS_DEGENERATE = 1 << 3;
        const NEG_DEGENERATE = 1 << 4;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignalEstimatorKind {
    Identity,
    Filter,
    Linear,
    TwoComponent,
}

impl SignalEstimatorKind {
    pub const ALL: [SignalEstimatorKind; 4] = [
        SignalEstimatorKind::Identity,
        SignalEstimatorKind::Filter,
        SignalEstimatorKind::Linear,
        SignalEstimatorKind::TwoComponent,
    ];

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SignalEstimatorKind::Identity => "identity",
            SignalEstimatorKind::Filter => "filter",
            SignalEstimatorKind::Linear => "linear",
            SignalEstimatorKind::TwoComponent => "two_component",
        }
    }
}

impl fmt::Display for SignalEstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SignalEstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown estimator {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit<T> {
    pub pattern: Vec<T>,
    pub flags: FitFlags,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoComponentFit<T> {
    pub positive: Vec<T>,
    pub negative: Vec<T>,
    pub flags: FitFlags,
}

fn check_width<T: Scalar>(stats: &NeuronStats<T>, w: &[T]) -> Result<()> {
    if stats.dim() != w.len() {
        return Err(Error::Dimension(format!(
            "statistics of width {} for a weight vector of length {}",
            stats.dim(),
            w.len()
        )));
    }
    Ok(())
}

/// `a = cov(x, y) / σ²_y`.
pub fn fit_linear<T: Scalar>(stats: &NeuronStats<T>, w: &[T]) -> Result<LinearFit<T>> {
    check_width(stats, w)?;
    let var = stats.var_y();
    if !(var > T::lit(EPSILON_DEAD)) {
        return Ok(LinearFit {
            pattern: vec![T::zero(); w.len()],
            flags: FitFlags::DEAD,
        });
    }
    Ok(LinearFit {
        pattern: stats.cov_xy().into_iter().map(|c| c / var).collect(),
        flags: FitFlags::empty(),
    })
}

/// Regime patterns
/// `a₊ = (E₊[xy] − E₊[x]E[y]) / wᵀ(E₊[xy] − E₊[x]E[y])`, and `a₋` likewise,
/// where `E[y]` is the mean over all samples.
pub fn fit_two_component<T: Scalar>(stats: &NeuronStats<T>, w: &[T]) -> Result<TwoComponentFit<T>> {
    let linear = fit_linear(stats, w)?;
    let mean_y = stats.mean_y_all();
    let mut flags = linear.flags;
    let mut regime =
        |moments: &super::RegimeMoments<T>, fallback: FitFlags, degenerate: FitFlags| {
            if moments.count() < MIN_REGIME_SAMPLES {
                flags |= fallback;
                return linear.pattern.clone();
            }
            let num = moments.cross_moment_about(mean_y);
            let den = dot(w, &num);
            if !(den.abs() > T::lit(EPSILON_DEAD)) {
                flags |= degenerate;
                return vec![T::zero(); w.len()];
            }
            num.into_iter().map(|v| v / den).collect()
        };
    let positive = regime(
        stats.positive(),
        FitFlags::POS_FALLBACK,
        FitFlags::POS_DEGENERATE,
    );
    let negative = regime(
        stats.negative(),
        FitFlags::NEG_FALLBACK,
        FitFlags::NEG_DEGENERATE,
    );
    Ok(TwoComponentFit {
        positive,
        negative,
        flags,
    })
}

/// `w / wᵀw`, or zero for a zero filter.
pub fn filter_pattern<T: Scalar>(w: &[T]) -> Vec<T> {
    let ww = dot(w, w);
    if ww == T::zero() {
        return vec![T::zero(); w.len()];
    }
    w.iter().map(|&v| v / ww).collect()
}

/// Fitted patterns of one neuron.
#[derive(Debug, Clone, Copy)]
pub struct NeuronPatterns<'a, T> {
    pub linear: &'a [T],
    pub positive: &'a [T],
    pub negative: &'a [T],
}

/// Signal estimate `ŝ` for one neuron with weights `w`, input `x` and
/// pre-activation `y` (which selects the regime). Learned estimators scale
/// their pattern by `wᵀx`, so `wᵀŝ = wᵀx` whenever `wᵀa = 1`; the residual
/// `x − ŝ` is the distractor estimate.
pub fn estimate_signal<T: Scalar>(
    kind: SignalEstimatorKind,
    w: &[T],
    patterns: Option<NeuronPatterns<'_, T>>,
    x: &[T],
    y: T,
) -> Result<Vec<T>> {
    if w.len() != x.len() {
        return Err(Error::Dimension(format!(
            "input of length {} for a weight vector of length {}",
            x.len(),
            w.len()
        )));
    }
    let z = dot(w, x);
    let pattern: Vec<T> = match kind {
        SignalEstimatorKind::Identity => return Ok(x.to_vec()),
        SignalEstimatorKind::Filter => filter_pattern(w),
        SignalEstimatorKind::Linear | SignalEstimatorKind::TwoComponent => {
            let p = patterns
                .ok_or_else(|| Error::Config(format!("{kind} estimator needs fitted patterns")))?;
            let a = match kind {
                SignalEstimatorKind::Linear => p.linear,
                _ if y > T::zero() => p.positive,
                _ => p.negative,
            };
            if a.len() != w.len() {
                return Err(Error::Dimension("pattern and weight lengths differ".into()));
            }
            a.to_vec()
        }
    };
    Ok(pattern.into_iter().map(|a| a * z).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cosine_similarity;
    use crate::tensor::RngStream;

    fn toy_stats(n: usize, seed: u64, w: [f64; 2]) -> NeuronStats<f64> {
        let mut rng = RngStream::new(seed);
        let mut s = NeuronStats::new(2);
        for _ in 0..n {
            let y = rng.uniform_in(-1.0, 1.0);
            let e = rng.normal();
            let x = [y + e, e];
            s.accumulate(&x, w[0] * x[0] + w[1] * x[1]).unwrap();
        }
        s
    }

    #[test]
    fn linear_pattern_recovers_signal_direction() {
        // a = (1 + c, c) with c = cov(ε, y) / σ²_y, whose standard error is
        // σ_ε / (σ_y √n): 0.017 at n = 10⁴ and 0.0055 at n = 10⁵
        for (n, tol) in [(10_000, 3.0 * 3f64.sqrt() / 100.0), (100_000, 0.02)] {
            let s = toy_stats(n, 1, [1.0, -1.0]);
            let a = fit_linear(&s, &[1.0, -1.0]).unwrap();
            assert!(a.flags.is_empty());
            assert!((a.pattern[0] - 1.0).abs() < tol, "{n}: {:?}", a.pattern);
            assert!(a.pattern[1].abs() < tol, "{n}: {:?}", a.pattern);
        }
    }

    #[test]
    fn two_component_recovers_signal_direction() {
        let w = [1.0, -1.0];
        let s = toy_stats(10_000, 2, w);
        let f = fit_two_component(&s, &w).unwrap();
        assert!(f.flags.is_empty());
        assert!(
            (f.positive[0] - 1.0).abs() < 0.05 && f.positive[1].abs() < 0.05,
            "{:?}",
            f.positive
        );
        let n = dot(&w, &f.positive);
        assert!((n - 1.0).abs() < 1e-6);
        assert!((dot(&w, &f.negative) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn noiseless_data_gives_filter_direction() {
        // x = w·t exactly: cov(x, y) = w σ²_t wᵀw, so a = w / wᵀw
        let w = [0.6, -0.3, 1.2];
        let ww: f64 = w.iter().map(|v| v * v).sum();
        let mut rng = RngStream::new(3);
        let mut s = NeuronStats::new(3);
        for _ in 0..200 {
            let t = rng.normal();
            let x: Vec<f64> = w.iter().map(|v| v * t).collect();
            s.accumulate(&x, t * ww).unwrap();
        }
        let a = fit_linear(&s, &w).unwrap().pattern;
        let f = filter_pattern(&w);
        for (p, q) in a.iter().zip(&f) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_relation_makes_regimes_agree() {
        // y is a linear function of x with no distractor: both regime
        // patterns reduce to the linear one
        let w = [2.0, 0.5];
        let mut rng = RngStream::new(4);
        let mut s = NeuronStats::new(2);
        for _ in 0..2000 {
            let t = rng.normal();
            let x = [t, 0.25 * t];
            s.accumulate(&x, dot(&w, &x)).unwrap();
        }
        let lin = fit_linear(&s, &w).unwrap().pattern;
        let two = fit_two_component(&s, &w).unwrap();
        for i in 0..2 {
            assert!((two.positive[i] - lin[i]).abs() < 1e-9);
            assert!((two.negative[i] - lin[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_output_is_dead() {
        let mut s = NeuronStats::new(2);
        for i in 0..50 {
            s.accumulate(&[i as f64, 1.0], 3.0).unwrap();
        }
        let a = fit_linear(&s, &[0.0, 3.0]).unwrap();
        assert!(a.flags.contains(FitFlags::DEAD));
        assert!(a.pattern.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn thin_regime_falls_back() {
        let w = [1.0, -1.0];
        let mut s = NeuronStats::new(2);
        let mut rng = RngStream::new(5);
        for i in 0..100 {
            let x = [rng.normal(), rng.normal()];
            // only 5 positive outputs
            let y = if i < 5 {
                1.0 + x[0] * 0.0
            } else {
                -1.0 - rng.uniform()
            };
            s.accumulate(&x, y).unwrap();
        }
        let f = fit_two_component(&s, &w).unwrap();
        assert!(f.flags.contains(FitFlags::POS_FALLBACK));
        assert!(!f.flags.contains(FitFlags::NEG_FALLBACK));
        assert_eq!(f.positive, fit_linear(&s, &w).unwrap().pattern);
    }

    #[test]
    fn signal_estimates_on_toy_point() {
        let w = [1.0, -1.0];
        let x = [2.0, 1.0];
        assert_eq!(
            estimate_signal(SignalEstimatorKind::Identity, &w, None, &x, 1.0).unwrap(),
            vec![2.0, 1.0]
        );
        let sw = estimate_signal(SignalEstimatorKind::Filter, &w, None, &x, 1.0).unwrap();
        assert_eq!(sw, vec![0.5, -0.5]);
        assert!(cosine_similarity(&sw, &[1.0, 0.0]) < 0.8);
        let a = [1.0, 0.0];
        let p = NeuronPatterns {
            linear: &a,
            positive: &a,
            negative: &a,
        };
        let s = estimate_signal(SignalEstimatorKind::Linear, &w, Some(p), &x, 1.0).unwrap();
        assert_eq!(s, vec![1.0, 0.0]);
        let d: Vec<f64> = x.iter().zip(&s).map(|(a, b)| a - b).collect();
        assert_eq!(d, vec![1.0, 1.0]);
        assert!(matches!(
            estimate_signal(SignalEstimatorKind::TwoComponent, &w, None, &x, 1.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn kind_tags_roundtrip() {
        for k in SignalEstimatorKind::ALL {
            assert_eq!(SignalEstimatorKind::from_tag(k.tag()), Some(k));
            assert_eq!(k.name().parse::<SignalEstimatorKind>().unwrap(), k);
        }
        assert!(SignalEstimatorKind::from_tag(4).is_none());
    }
}
