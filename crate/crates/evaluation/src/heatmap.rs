//! Channel-averaged feature-map visualization: per image, the mean over
//! channels is min-max normalized to [0,1] (constant maps go to zero) and
//! written as 16-bit grayscale PNG.

use std::path::Path;

use diffcore::Tensor;

use crate::error::{EvalError, Result};

/// Collapses (b,h,w,c) feature maps to per-image (h,w) heat-maps.
pub fn heatmap(gamma: &Tensor) -> Result<Vec<Tensor>> {
    let s = gamma.shape();
    if s.len() != 4 || s[3] == 0 {
        return Err(EvalError::Config(format!(
            "expected (b,h,w,c) feature maps with c >= 1, got {s:?}"
        )));
    }
    let (b, h, w, c) = (s[0], s[1], s[2], s[3]);
    let mut maps = Vec::with_capacity(b);
    for i in 0..b {
        let mut mean = vec![0.0f64; h * w];
        for (p, m) in mean.iter_mut().enumerate() {
            let base = (i * h * w + p) * c;
            *m = gamma.data()[base..base + c].iter().sum::<f64>() / c as f64;
        }
        let lo = mean.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = mean.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            for m in &mut mean {
                *m = (*m - lo) / (hi - lo);
            }
        } else {
            mean.fill(0.0);
        }
        maps.push(Tensor::new(&[h, w], mean)?);
    }
    Ok(maps)
}

/// Standard file name for one emitted map: `{task}_{index}_{kind}.png`
/// where `kind` distinguishes the plain map from the gated one.
pub fn heatmap_filename(task: &str, index: usize, gated: bool) -> String {
    let kind = if gated { "gamma_alpha" } else { "gamma" };
    format!("{task}_{index}_{kind}.png")
}

/// Writes one (h,w) map in [0,1] as 16-bit grayscale PNG.
pub fn write_heatmap_png(map: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let s = map.shape();
    if s.len() != 2 {
        return Err(EvalError::Config(format!("expected an (h,w) map, got {s:?}")));
    }
    let (h, w) = (s[0], s[1]);
    let pixels: Vec<u16> = map
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * f64::from(u16::MAX)).round() as u16)
        .collect();
    let img: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
        image::ImageBuffer::from_raw(w as u32, h as u32, pixels)
            .expect("buffer length matches dimensions");
    img.save(path).map_err(|e| EvalError::Format(format!("{}: {e}", path.display())))
}
