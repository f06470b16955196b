use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::{ColorType, DynamicImage};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{one_hot, Dataset};

/// An IDX array of unsigned bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Parses an IDX file: two zero bytes, type code `0x08` (u8), the number of
/// dimensions, big-endian `u32` extents, then the data. Images use magic
/// `0x00000803`, labels `0x00000801`.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::Format("bad IDX magic".into()));
    }
    if bytes[2] != 0x08 {
        return Err(Error::Format(format!(
            "unsupported IDX element type {:#04x}",
            bytes[2]
        )));
    }
    let rank = bytes[3] as usize;
    if rank == 0 || bytes.len() < 4 + 4 * rank {
        return Err(Error::Format("truncated IDX header".into()));
    }
    let dims: Vec<usize> = bytes[4..4 + 4 * rank]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let n = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    let data = &bytes[4 + 4 * rank..];
    if n != Some(data.len()) {
        return Err(Error::Format(format!(
            "IDX payload of {} bytes for extents {dims:?}",
            data.len()
        )));
    }
    Ok(IdxArray {
        dims,
        data: data.to_vec(),
    })
}

/// Images `[n, rows, cols]` scaled to `[0, 1]` as `[1, rows, cols]` inputs,
/// with one-hot labels of arity `max label + 1`.
pub fn ingest_idx<T: Scalar>(
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
) -> Result<Dataset<T>> {
    let img = parse_idx(&fs::read(images)?)?;
    let lab = parse_idx(&fs::read(labels)?)?;
    if img.dims.len() != 3 {
        return Err(Error::Format(format!(
            "IDX images must have 3 dimensions, got {:?}",
            img.dims
        )));
    }
    if lab.dims.len() != 1 || lab.dims[0] != img.dims[0] {
        return Err(Error::Data(format!(
            "{} images but labels of extents {:?}",
            img.dims[0], lab.dims
        )));
    }
    let (n, h, w) = (img.dims[0], img.dims[1], img.dims[2]);
    if n == 0 || h == 0 || w == 0 {
        return Err(Error::Data("empty IDX image set".into()));
    }
    let classes = *lab.data.iter().max().unwrap() as usize + 1;
    let xs = img
        .data
        .chunks_exact(h * w)
        .map(|c| {
            Tensor::from_parts(
                vec![1, h, w],
                c.iter().map(|&b| T::lit(b as f64 / 255.0)).collect(),
            )
        })
        .collect();
    let ys = lab
        .data
        .iter()
        .map(|&l| one_hot(l as usize, classes))
        .collect();
    Dataset::new(vec![1, h, w], classes, xs, ys)
}

/// Numeric CSV: each row holds `n − 1` feature columns followed by one
/// label column. A first row that does not parse as numbers is taken as a
/// header.
pub fn ingest_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut width = None;
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let vals = match vals {
            Ok(v) => v,
            Err(_) if row == 0 => continue,
            Err(e) => {
                return Err(Error::Data(format!(
                    "{} row {}: {e}",
                    path.display(),
                    row + 1
                )))
            }
        };
        if vals.len() < 2 {
            return Err(Error::Data(format!(
                "{} row {}: need features and a label",
                path.display(),
                row + 1
            )));
        }
        if *width.get_or_insert(vals.len()) != vals.len() {
            return Err(Error::Data(format!(
                "{} row {}: expected {} columns",
                path.display(),
                row + 1,
                width.unwrap()
            )));
        }
        let (label, feats) = vals.split_last().unwrap();
        xs.push(Tensor::new(
            vec![feats.len()],
            feats.iter().map(|&v| T::lit(v)).collect(),
        )?);
        ys.push(Tensor::new(vec![1], vec![T::lit(*label)])?);
    }
    let dim = width.ok_or_else(|| Error::Data(format!("{}: no data rows", path.display())))? - 1;
    Dataset::new(vec![dim], 1, xs, ys)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PngOptions {
    /// Target `(height, width)`: images are scaled so they cover it and
    /// then center-cropped. Without it all images must share one size.
    pub size: Option<(usize, usize)>,
    /// Force grayscale or color; by default color is kept if any image has it.
    pub grayscale: Option<bool>,
}

fn list(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v = fs::read_dir(dir)?
        .map(|e| Ok(e?.path()))
        .collect::<Result<Vec<_>>>()?;
    v.sort();
    Ok(v)
}

fn cover_and_crop(img: &DynamicImage, h: usize, w: usize) -> DynamicImage {
    let (iw, ih) = (img.width() as f64, img.height() as f64);
    let s = (w as f64 / iw).max(h as f64 / ih);
    let (rw, rh) = (
        ((iw * s).round() as u32).max(w as u32),
        ((ih * s).round() as u32).max(h as u32),
    );
    let resized = img.resize_exact(rw, rh, FilterType::Triangle);
    let (x0, y0) = ((rw - w as u32) / 2, (rh - h as u32) / 2);
    DynamicImage::from(
        imageops::crop_imm(&resized.to_rgba8(), x0, y0, w as u32, h as u32).to_image(),
    )
}

/// A directory with one subdirectory per class (sorted by name, giving
/// class indices) holding PNG files. Pixels are scaled to `[0, 1]`;
/// labels are one-hot.
pub fn ingest_png_dir<T: Scalar>(root: impl AsRef<Path>, opts: PngOptions) -> Result<Dataset<T>> {
    let root = root.as_ref();
    let classes: Vec<PathBuf> = list(root)?.into_iter().filter(|p| p.is_dir()).collect();
    if classes.is_empty() {
        return Err(Error::Data(format!(
            "{}: no class subdirectories",
            root.display()
        )));
    }
    let mut images = Vec::new();
    for (c, dir) in classes.iter().enumerate() {
        for f in list(dir)? {
            if f.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
                let img =
                    image::open(&f).map_err(|e| Error::Image(format!("{}: {e}", f.display())))?;
                images.push((f, c, img));
            }
        }
    }
    if images.is_empty() {
        return Err(Error::Data(format!("{}: no PNG files", root.display())));
    }
    let (h, w) = match opts.size {
        Some(s) => s,
        None => {
            let (w0, h0) = (images[0].2.width(), images[0].2.height());
            let offenders: Vec<String> = images
                .iter()
                .filter(|(_, _, i)| (i.width(), i.height()) != (w0, h0))
                .map(|(p, _, i)| format!("{} ({}x{})", p.display(), i.width(), i.height()))
                .collect();
            if !offenders.is_empty() {
                return Err(Error::Data(format!(
                    "inconsistent image sizes, expected {w0}x{h0}: {}",
                    offenders.join(", ")
                )));
            }
            (h0 as usize, w0 as usize)
        }
    };
    if h == 0 || w == 0 {
        return Err(Error::Data("zero image size".into()));
    }
    let gray = opts.grayscale.unwrap_or_else(|| {
        images.iter().all(|(_, _, i)| {
            matches!(
                i.color(),
                ColorType::L8 | ColorType::La8 | ColorType::L16 | ColorType::La16
            )
        })
    });
    let ch = if gray { 1 } else { 3 };
    let mut xs = Vec::with_capacity(images.len());
    let mut ys = Vec::with_capacity(images.len());
    for (_, c, img) in &images {
        let img = if opts.size.is_some() {
            cover_and_crop(img, h, w)
        } else {
            img.clone()
        };
        let raw: Vec<u8> = if gray {
            img.to_luma8().into_raw()
        } else {
            img.to_rgb8().into_raw()
        };
        let mut data = vec![T::zero(); ch * h * w];
        for (i, &b) in raw.iter().enumerate() {
            let (p, k) = (i / ch, i % ch);
            data[k * h * w + p] = T::lit(b as f64 / 255.0);
        }
        xs.push(Tensor::from_parts(vec![ch, h, w], data));
        ys.push(one_hot(*c, classes.len()));
    }
    Dataset::new(vec![ch, h, w], classes.len(), xs, ys)
}
