use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{RngStream, Tensor};

use super::{one_hot, Dataset};

/// Linear toy data `x = a_s·y + a_d·ε` with `y ~ U[y_range]` and
/// `ε ~ N(μ, σ²)`. The label is `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub a_s: Vec<f64>,
    pub a_d: Vec<f64>,
    pub y_range: (f64, f64),
    pub noise_mean: f64,
    pub noise_std: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            a_s: vec![1.0, 0.0],
            a_d: vec![1.0, 1.0],
            y_range: (-1.0, 1.0),
            noise_mean: 0.0,
            noise_std: 1.0,
            n_samples: 10_000,
            seed: 0,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.a_s.is_empty() || self.a_s.len() != self.a_d.len() {
            return bad("signal and distractor directions must be nonempty and of equal length");
        }
        let all = self.a_s.iter().chain(&self.a_d).chain([
            &self.y_range.0,
            &self.y_range.1,
            &self.noise_mean,
            &self.noise_std,
        ]);
        if all.into_iter().any(|v| !v.is_finite()) {
            return bad("toy parameters must be finite");
        }
        let ss: f64 = self.a_s.iter().map(|v| v * v).sum();
        let dd: f64 = self.a_d.iter().map(|v| v * v).sum();
        let sd: f64 = self.a_s.iter().zip(&self.a_d).map(|(a, b)| a * b).sum();
        if ss == 0.0 || dd == 0.0 {
            return bad("signal and distractor directions must be nonzero");
        }
        if (sd * sd - ss * dd).abs() <= 1e-12 * ss * dd {
            return bad("signal and distractor directions are parallel");
        }
        if !(self.y_range.0 < self.y_range.1) {
            return bad("y range must be a nonempty interval");
        }
        if self.noise_std < 0.0 {
            return bad("noise standard deviation must be nonnegative");
        }
        Ok(())
    }

    pub fn generate<T: Scalar>(&self) -> Result<Dataset<T>> {
        self.validate()?;
        if self.n_samples == 0 {
            return Err(Error::Data("toy dataset with zero samples".into()));
        }
        let mut rng = RngStream::new(self.seed);
        let dim = self.a_s.len();
        let mut xs = Vec::with_capacity(self.n_samples);
        let mut ys = Vec::with_capacity(self.n_samples);
        for _ in 0..self.n_samples {
            let y = rng.uniform_in(self.y_range.0, self.y_range.1);
            let e = self.noise_mean + self.noise_std * rng.normal();
            let x = (0..dim)
                .map(|i| T::lit(self.a_s[i] * y + self.a_d[i] * e))
                .collect();
            xs.push(Tensor::new(vec![dim], x)?);
            ys.push(Tensor::new(vec![1], vec![T::lit(y)])?);
        }
        Dataset::new(vec![dim], 1, xs, ys)
    }
}

/// Synthetic classification images. Each class owns a template made of a
/// few Gaussian bumps; a sample is its class template at a random amplitude
/// plus a random mix of shared sinusoidal gratings (the distractors) and
/// white noise. Labels are one-hot.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageConfig {
    pub classes: usize,
    pub size: usize,
    pub channels: usize,
    pub bumps_per_class: usize,
    pub bump_width: f64,
    pub signal_range: (f64, f64),
    pub distractors: usize,
    pub distractor_std: f64,
    pub noise_std: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for ImageConfig {
    fn default() -> Self {
        ImageConfig {
            classes: 10,
            size: 28,
            channels: 1,
            bumps_per_class: 3,
            bump_width: 2.0,
            signal_range: (0.5, 1.5),
            distractors: 8,
            distractor_std: 1.0,
            noise_std: 0.1,
            n_samples: 10_000,
            seed: 0,
        }
    }
}

impl ImageConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.classes < 2 || self.size < 4 || self.channels == 0 || self.bumps_per_class == 0 {
            return bad(
                "need at least 2 classes, 4 pixels per side, 1 channel and 1 bump per class",
            );
        }
        if !(self.bump_width > 0.0) || !(self.signal_range.0 <= self.signal_range.1) {
            return bad("bump width must be positive and the signal range an interval");
        }
        if !(self.distractor_std >= 0.0) || !(self.noise_std >= 0.0) {
            return bad("noise levels must be nonnegative");
        }
        Ok(())
    }

    fn templates(&self, rng: &mut RngStream) -> Vec<Vec<f64>> {
        let s = self.size;
        let margin = (self.size as f64 * 0.1).max(1.0);
        (0..self.classes)
            .map(|_| {
                let mut t = vec![0.0; self.channels * s * s];
                for _ in 0..self.bumps_per_class {
                    let cy = rng.uniform_in(margin, s as f64 - 1.0 - margin);
                    let cx = rng.uniform_in(margin, s as f64 - 1.0 - margin);
                    let tint: Vec<f64> = (0..self.channels)
                        .map(|_| rng.uniform_in(0.3, 1.0))
                        .collect();
                    for (ch, &k) in tint.iter().enumerate() {
                        for y in 0..s {
                            for x in 0..s {
                                let r2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                                t[ch * s * s + y * s + x] +=
                                    k * (-r2 / (2.0 * self.bump_width.powi(2))).exp();
                            }
                        }
                    }
                }
                t
            })
            .collect()
    }

    fn gratings(&self, rng: &mut RngStream) -> Vec<Vec<f64>> {
        let s = self.size;
        (0..self.distractors)
            .map(|_| {
                let f = rng.uniform_in(1.0, 4.0);
                let theta = rng.uniform_in(0.0, PI);
                let phase = rng.uniform_in(0.0, 2.0 * PI);
                let tint: Vec<f64> = (0..self.channels)
                    .map(|_| rng.uniform_in(0.3, 1.0))
                    .collect();
                let mut g = vec![0.0; self.channels * s * s];
                for (ch, &k) in tint.iter().enumerate() {
                    for y in 0..s {
                        for x in 0..s {
                            let u = (x as f64 * theta.cos() + y as f64 * theta.sin()) / s as f64;
                            g[ch * s * s + y * s + x] = k * (2.0 * PI * f * u + phase).sin();
                        }
                    }
                }
                g
            })
            .collect()
    }

    pub fn generate<T: Scalar>(&self) -> Result<Dataset<T>> {
        self.validate()?;
        if self.n_samples == 0 {
            return Err(Error::Data("image dataset with zero samples".into()));
        }
        let root = RngStream::new(self.seed);
        let templates = self.templates(&mut root.fork(1));
        let gratings = self.gratings(&mut root.fork(2));
        let mut rng = root.fork(3);
        let shape = vec![self.channels, self.size, self.size];
        let len = self.channels * self.size * self.size;
        let mut xs = Vec::with_capacity(self.n_samples);
        let mut ys = Vec::with_capacity(self.n_samples);
        for _ in 0..self.n_samples {
            let class = rng.below(self.classes);
            let amp = rng.uniform_in(self.signal_range.0, self.signal_range.1);
            let mut x: Vec<f64> = templates[class].iter().map(|v| amp * v).collect();
            for g in &gratings {
                let c = self.distractor_std * rng.normal();
                for (xi, gi) in x.iter_mut().zip(g) {
                    *xi += c * gi;
                }
            }
            for xi in x.iter_mut().take(len) {
                *xi += self.noise_std * rng.normal();
            }
            xs.push(Tensor::new(
                shape.clone(),
                x.into_iter().map(T::lit).collect(),
            )?);
            ys.push(one_hot(class, self.classes));
        }
        Dataset::new(shape, self.classes, xs, ys)
    }
}
