use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Streaming moments of one regime: count, means of x and y, the second
/// central moment of y and the co-moment `Σ (x − x̄)(y − ȳ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeMoments<T> {
    count: u64,
    mean_x: Vec<T>,
    mean_y: T,
    m2_y: T,
    comoment: Vec<T>,
}

impl<T: Scalar> RegimeMoments<T> {
    fn new(dim: usize) -> Self {
        RegimeMoments {
            count: 0,
            mean_x: vec![T::zero(); dim],
            mean_y: T::zero(),
            m2_y: T::zero(),
            comoment: vec![T::zero(); dim],
        }
    }

    #[inline]
    fn push(&mut self, x: &[T], y: T) {
        self.count += 1;
        let n = T::lit(self.count as f64);
        let dy = y - self.mean_y;
        self.mean_y = self.mean_y + dy / n;
        let dy_new = y - self.mean_y;
        self.m2_y = self.m2_y + dy * dy_new;
        for ((m, c), &xi) in self.mean_x.iter_mut().zip(&mut self.comoment).zip(x) {
            let dx = xi - *m;
            *m = *m + dx / n;
            *c = *c + dx * dy_new;
        }
    }

    fn merge(&mut self, other: &RegimeMoments<T>) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (T::lit(self.count as f64), T::lit(other.count as f64));
        let n = na + nb;
        let dy = other.mean_y - self.mean_y;
        self.mean_y = self.mean_y + dy * nb / n;
        self.m2_y = self.m2_y + other.m2_y + dy * dy * na * nb / n;
        for i in 0..self.mean_x.len() {
            let dx = other.mean_x[i] - self.mean_x[i];
            self.mean_x[i] = self.mean_x[i] + dx * nb / n;
            self.comoment[i] = self.comoment[i] + other.comoment[i] + dx * dy * na * nb / n;
        }
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean_x(&self) -> &[T] {
        &self.mean_x
    }

    pub fn mean_y(&self) -> T {
        self.mean_y
    }

    /// `E[x·y]` over this regime.
    pub fn mean_xy(&self) -> Vec<T> {
        if self.count == 0 {
            return vec![T::zero(); self.mean_x.len()];
        }
        let n = T::lit(self.count as f64);
        self.comoment
            .iter()
            .zip(&self.mean_x)
            .map(|(&c, &m)| c / n + m * self.mean_y)
            .collect()
    }

    /// `E_r[x·y] − E_r[x]·ȳ` against an external mean of y, computed without
    /// forming the raw second moment.
    pub fn cross_moment_about(&self, mean_y: T) -> Vec<T> {
        if self.count == 0 {
            return vec![T::zero(); self.mean_x.len()];
        }
        let n = T::lit(self.count as f64);
        let shift = self.mean_y - mean_y;
        self.comoment
            .iter()
            .zip(&self.mean_x)
            .map(|(&c, &m)| c / n + m * shift)
            .collect()
    }
}

/// Sufficient statistics of one neuron, split by the sign of its
/// pre-activation: samples with `y > 0` go to the positive regime, all
/// others (including `y == 0`) to the negative one.
///
/// Statistics merge exactly, so a dataset can be sharded and reduced.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronStats<T> {
    pos: RegimeMoments<T>,
    neg: RegimeMoments<T>,
}

impl<T: Scalar> NeuronStats<T> {
    pub fn new(dim: usize) -> Self {
        NeuronStats {
            pos: RegimeMoments::new(dim),
            neg: RegimeMoments::new(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.pos.mean_x.len()
    }

    /// Adds one sample: `x` is the neuron's immediate input, `y` its
    /// pre-activation.
    pub fn accumulate(&mut self, x: &[T], y: T) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "sample of length {} for a neuron with {} inputs",
                x.len(),
                self.dim()
            )));
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(
                "non-finite value in estimator statistics".into(),
            ));
        }
        self.push_unchecked(x, y);
        Ok(())
    }

    #[inline]
    pub(crate) fn push_unchecked(&mut self, x: &[T], y: T) {
        if y > T::zero() {
            self.pos.push(x, y)
        } else {
            self.neg.push(x, y)
        }
    }

    pub fn merge(&mut self, other: &NeuronStats<T>) -> Result<()> {
        if other.dim() != self.dim() {
            return Err(Error::Dimension(
                "merging statistics of different width".into(),
            ));
        }
        self.pos.merge(&other.pos);
        self.neg.merge(&other.neg);
        Ok(())
    }

    pub fn positive(&self) -> &RegimeMoments<T> {
        &self.pos
    }

    pub fn negative(&self) -> &RegimeMoments<T> {
        &self.neg
    }

    pub fn count_total(&self) -> u64 {
        self.pos.count + self.neg.count
    }

    pub fn count_pos(&self) -> u64 {
        self.pos.count
    }

    /// Fraction of samples in the positive regime.
    pub fn positive_ratio(&self) -> f64 {
        match self.count_total() {
            0 => 0.0,
            n => self.pos.count as f64 / n as f64,
        }
    }

    fn all(&self) -> RegimeMoments<T> {
        let mut all = self.pos.clone();
        all.merge(&self.neg);
        all
    }

    pub fn mean_x_all(&self) -> Vec<T> {
        self.all().mean_x
    }

    pub fn mean_y_all(&self) -> T {
        self.all().mean_y
    }

    pub fn mean_xy_all(&self) -> Vec<T> {
        self.all().mean_xy()
    }

    /// Population variance of y.
    pub fn var_y(&self) -> T {
        match self.count_total() {
            0 => T::zero(),
            n => self.all().m2_y / T::lit(n as f64),
        }
    }

    /// Population covariance between each input coordinate and y.
    pub fn cov_xy(&self) -> Vec<T> {
        let all = self.all();
        match all.count {
            0 => vec![T::zero(); self.dim()],
            n => {
                let n = T::lit(n as f64);
                all.comoment.iter().map(|&c| c / n).collect()
            }
        }
    }
}
