//! sRGB to CIE L*a*b* conversion and plane splitting.
//!
//! The split-channel pretraining objective predicts color from lightness
//! and vice versa, so images must be moved out of RGB into a space where
//! those structure levels live on separate axes. Conversion follows the
//! standard pipeline: sRGB gamma expansion, the linear-RGB-to-XYZ matrix,
//! then the Lab cube-root compression against the D65 reference white.
//!
//! The white point is taken as the image of RGB (1,1,1) under the matrix
//! itself (its row sums) rather than the independently rounded published
//! triple; the two differ in the seventh decimal, and using the row sums
//! makes pure white map to exactly (100, 0, 0).

use diffcore::Tensor;

use crate::error::{ModelError, Result};

/// Linear-RGB → XYZ (sRGB primaries, D65).
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

fn white_point() -> [f64; 3] {
    let mut w = [0.0; 3];
    for (wi, row) in w.iter_mut().zip(RGB_TO_XYZ) {
        *wi = row.iter().sum();
    }
    w
}

/// sRGB gamma expansion of one channel in [0,1].
fn srgb_linearize(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// Lab forward compression: cube root above the linear-segment knee.
fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// One sRGB pixel (channels in [0,1]) to (L, a, b).
/// L lands in [0,100]; a and b in roughly [-110, 110] for in-gamut input.
pub fn srgb_to_lab(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let rgb = [srgb_linearize(r), srgb_linearize(g), srgb_linearize(b)];
    let w = white_point();
    let mut f = [0.0; 3];
    for i in 0..3 {
        let coord: f64 = (0..3).map(|j| RGB_TO_XYZ[i][j] * rgb[j]).sum();
        f[i] = lab_f(coord / w[i]);
    }
    (116.0 * f[1] - 16.0, 500.0 * (f[0] - f[1]), 200.0 * (f[1] - f[2]))
}

/// 8-bit convenience wrapper.
pub fn rgb8_to_lab(r: u8, g: u8, b: u8) -> (f64, f64, f64) {
    srgb_to_lab(r as f64 / 255.0, g as f64 / 255.0, b as f64 / 255.0)
}

/// Range used to squash a/b coordinates into the unit interval.
const AB_SPAN: f64 = 220.0;

/// Maps (L, a, b) onto unit-range network inputs:
/// L/100 and (a + 110)/220, (b + 110)/220.
pub fn normalize_lab(l: f64, a: f64, b: f64) -> (f64, f64, f64) {
    (l / 100.0, (a + AB_SPAN / 2.0) / AB_SPAN, (b + AB_SPAN / 2.0) / AB_SPAN)
}

/// Splits an sRGB batch (b,h,w,3) in [0,1] into normalized Lab planes:
/// a lightness tensor (b,h,w,1) and a color tensor (b,h,w,2).
pub fn split_lab_planes(images: &Tensor) -> Result<(Tensor, Tensor)> {
    let s = images.shape();
    if s.len() != 4 || s[3] != 3 {
        return Err(ModelError::Config(format!(
            "Lab plane splitting expects (b,h,w,3) sRGB images, got {:?}",
            s
        )));
    }
    let (b, h, w) = (s[0], s[1], s[2]);
    let pixels = b * h * w;
    let data = images.data();
    let mut l_plane = vec![0.0; pixels];
    let mut ab_plane = vec![0.0; pixels * 2];
    for p in 0..pixels {
        let (l, a, bb) = srgb_to_lab(data[3 * p], data[3 * p + 1], data[3 * p + 2]);
        let (ln, an, bn) = normalize_lab(l, a, bb);
        l_plane[p] = ln;
        ab_plane[2 * p] = an;
        ab_plane[2 * p + 1] = bn;
    }
    let l_t = Tensor::new(&[b, h, w, 1], l_plane)?;
    let ab_t = Tensor::new(&[b, h, w, 2], ab_plane)?;
    Ok((l_t, ab_t))
}
