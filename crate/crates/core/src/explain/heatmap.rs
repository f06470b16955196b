use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Explanation, Semantics};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatmapMode {
    /// `x / (2 max|x|) + ½` per value, color channels kept.
    Signal,
    /// Channels summed, then the same scaling through a blue-white-red
    /// palette centered at zero.
    Attribution,
}

impl HeatmapMode {
    pub fn for_method(method: super::Method) -> Self {
        match method.semantics() {
            Semantics::Attribution => HeatmapMode::Attribution,
            _ => HeatmapMode::Signal,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HeatmapMode::Signal => "signal",
            HeatmapMode::Attribution => "attribution",
        }
    }
}

/// A normalized map with values in `[0, 1]`, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub mode: HeatmapMode,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
    /// `max|x|` used for scaling; zero for an all-zero explanation.
    pub scale: f64,
}

fn image_dims(shape: &[usize]) -> (usize, usize, usize) {
    match *shape {
        [c, h, w] => (c, h, w),
        [h, w] => (1, h, w),
        _ => (1, 1, shape.iter().product()),
    }
}

pub fn render_heatmap<T: Scalar>(expl: &Explanation<T>, mode: HeatmapMode) -> Result<Heatmap> {
    if expl.values.is_empty() {
        return Err(Error::Data("empty explanation".into()));
    }
    let (c, h, w) = image_dims(expl.values.shape());
    let raw = expl.values.to_f64_vec();
    let keep_channels = mode == HeatmapMode::Signal && (c == 1 || c == 3);
    let (channels, raw) = if keep_channels {
        (c, raw)
    } else {
        let plane = h * w;
        let summed = (0..plane)
            .map(|p| (0..c).map(|ch| raw[ch * plane + p]).sum())
            .collect();
        (1, summed)
    };
    let scale = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let values = if scale > 0.0 {
        raw.iter().map(|v| v / (2.0 * scale) + 0.5).collect()
    } else {
        vec![0.5; raw.len()]
    };
    Ok(Heatmap {
        mode,
        channels,
        height: h,
        width: w,
        values,
        scale,
    })
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

impl Heatmap {
    pub fn to_image(&self) -> RgbImage {
        let plane = self.height * self.width;
        RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let p = y as usize * self.width + x as usize;
            if self.scale == 0.0 {
                return Rgb([128, 128, 128]);
            }
            match (self.mode, self.channels) {
                (HeatmapMode::Signal, 3) => {
                    Rgb([0, 1, 2].map(|c| to_u8(self.values[c * plane + p])))
                }
                (HeatmapMode::Signal, _) => Rgb([to_u8(self.values[p]); 3]),
                (HeatmapMode::Attribution, _) => {
                    let v = self.values[p];
                    // white at ½, blue at 0, red at 1
                    let t = to_u8(1.0 - 2.0 * (v - 0.5).abs());
                    if v >= 0.5 {
                        Rgb([255, t, t])
                    } else {
                        Rgb([t, t, 255])
                    }
                }
            }
        })
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_image()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::Image(e.to_string()))
    }
}
