use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Padding;

/// Geometry of one conv application over a `[C, H, W]` input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(
        input_shape: &[usize],
        kh: usize,
        kw: usize,
        stride: usize,
        padding: Padding,
    ) -> Result<Self> {
        let (in_c, in_h, in_w) = (input_shape[0], input_shape[1], input_shape[2]);
        let (out_h, out_w, pad_top, pad_left) = match padding {
            Padding::Valid => {
                if in_h < kh || in_w < kw {
                    return Err(Error::Dimension(format!(
                        "{kh}x{kw} kernel does not fit {in_h}x{in_w} input"
                    )));
                }
                ((in_h - kh) / stride + 1, (in_w - kw) / stride + 1, 0, 0)
            }
            Padding::Same => {
                let oh = in_h.div_ceil(stride);
                let ow = in_w.div_ceil(stride);
                let ph = ((oh - 1) * stride + kh).saturating_sub(in_h);
                let pw = ((ow - 1) * stride + kw).saturating_sub(in_w);
                (oh, ow, ph / 2, pw / 2)
            }
        };
        Ok(ConvGeometry {
            in_c,
            in_h,
            in_w,
            kh,
            kw,
            stride,
            pad_top,
            pad_left,
            out_h,
            out_w,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.in_c * self.kh * self.kw
    }

    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Input flat index for patch element `k` at output position `p`, or
    /// `None` inside the zero padding.
    #[inline]
    fn source(&self, p: usize, k: usize) -> Option<usize> {
        let (oy, ox) = (p / self.out_w, p % self.out_w);
        let c = k / (self.kh * self.kw);
        let r = k % (self.kh * self.kw);
        let (ky, kx) = (r / self.kw, r % self.kw);
        let y = (oy * self.stride + ky).checked_sub(self.pad_top)?;
        let x = (ox * self.stride + kx).checked_sub(self.pad_left)?;
        if y >= self.in_h || x >= self.in_w {
            return None;
        }
        Some((c * self.in_h + y) * self.in_w + x)
    }
}

/// Lowers a `[C, H, W]` input into a `positions × patch_len` matrix whose
/// rows are the receptive fields in `(c, ky, kx)` order.
pub fn im2col<T: Scalar>(g: &ConvGeometry, input: &[T]) -> Vec<T> {
    let (p_n, k_n) = (g.positions(), g.patch_len());
    let mut cols = vec![T::zero(); p_n * k_n];
    for p in 0..p_n {
        for k in 0..k_n {
            if let Some(src) = g.source(p, k) {
                cols[p * k_n + k] = input[src];
            }
        }
    }
    cols
}

/// Scatter-adds patch rows back into an input-shaped buffer.
pub(crate) fn col2im_add<T: Scalar>(g: &ConvGeometry, cols: &[T], out: &mut [T]) {
    let (p_n, k_n) = (g.positions(), g.patch_len());
    for p in 0..p_n {
        for k in 0..k_n {
            if let Some(dst) = g.source(p, k) {
                out[dst] = out[dst] + cols[p * k_n + k];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_padding_keeps_size() {
        let g = ConvGeometry::new(&[1, 5, 5], 3, 3, 1, Padding::Same).unwrap();
        assert_eq!((g.out_h, g.out_w, g.pad_top, g.pad_left), (5, 5, 1, 1));
        let g = ConvGeometry::new(&[1, 5, 5], 3, 3, 2, Padding::Same).unwrap();
        assert_eq!((g.out_h, g.out_w), (3, 3));
    }

    #[test]
    fn im2col_reads_receptive_fields() {
        let input: Vec<f64> = (0..9).map(|v| v as f64).collect();
        let g = ConvGeometry::new(&[1, 3, 3], 2, 2, 1, Padding::Valid).unwrap();
        let cols = im2col(&g, &input);
        assert_eq!(&cols[..4], &[0.0, 1.0, 3.0, 4.0]);
        assert_eq!(&cols[12..], &[4.0, 5.0, 7.0, 8.0]);
        let gs = ConvGeometry::new(&[1, 3, 3], 3, 3, 1, Padding::Same).unwrap();
        let cols = im2col(&gs, &input);
        // top-left position: first row and column fall in the padding
        assert_eq!(&cols[..9], &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 3.0, 4.0]);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = ConvGeometry::new(&[2, 4, 5], 3, 3, 2, Padding::Same).unwrap();
        let x: Vec<f64> = (0..40).map(|v| (v as f64 * 0.37).sin()).collect();
        let c: Vec<f64> = (0..g.positions() * g.patch_len())
            .map(|v| (v as f64 * 0.11).cos())
            .collect();
        let lhs: f64 = im2col(&g, &x).iter().zip(&c).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; 40];
        col2im_add(&g, &c, &mut back);
        let rhs: f64 = back.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
