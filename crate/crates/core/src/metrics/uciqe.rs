//! Underwater colour image quality evaluation: chroma spread, luminance
//! contrast and mean saturation.

use super::RgbImage;

pub const C_CHROMA: f64 = 0.4680;
pub const C_CONTRAST: f64 = 0.2745;
pub const C_SATURATION: f64 = 0.2575;

/// Linear-sRGB → XYZ, D65.
const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UciqeParts {
    /// Standard deviation of CIELAB chroma, with a*, b* scaled by 1/100.
    pub chroma_std: f64,
    /// 99th minus 1st percentile of L*/100.
    pub contrast: f64,
    /// Mean HSV saturation in [0, 1].
    pub saturation: f64,
}

impl UciqeParts {
    pub fn combine(&self) -> f64 {
        C_CHROMA * self.chroma_std + C_CONTRAST * self.contrast + C_SATURATION * self.saturation
    }
}

fn linearize(c: u8) -> f64 {
    let v = c as f64 / 255.0;
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const D: f64 = 6.0 / 29.0;
    if t > D * D * D {
        t.cbrt()
    } else {
        t / (3.0 * D * D) + 4.0 / 29.0
    }
}

/// CIELAB (L* in [0, 100]) of one sRGB pixel. The reference white is the
/// matrix applied to linear white, so sRGB white maps to exactly a* = b* = 0.
pub(crate) fn srgb_to_lab(p: [u8; 3]) -> [f64; 3] {
    let lin = [linearize(p[0]), linearize(p[1]), linearize(p[2])];
    let xyz = |row: &[f64; 3], v: &[f64; 3]| row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
    let white = [1.0, 1.0, 1.0];
    let f: Vec<f64> = SRGB_TO_XYZ
        .iter()
        .map(|row| lab_f(xyz(row, &lin) / xyz(row, &white)))
        .collect();
    [116.0 * f[1] - 16.0, 500.0 * (f[0] - f[1]), 200.0 * (f[1] - f[2])]
}

/// Linear-interpolated percentile (`q` in [0, 1]) of sorted data.
pub(crate) fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn uciqe_parts(img: &RgbImage) -> UciqeParts {
    let n = img.pixels();
    let mut lum = Vec::with_capacity(n);
    // Welford keeps the spread of a constant image at exactly zero.
    let (mut mean, mut m2, mut count) = (0.0, 0.0, 0.0);
    let mut sat_sum = 0.0;
    for p in img.data().chunks_exact(3) {
        let px = [p[0], p[1], p[2]];
        let [l, a, b] = srgb_to_lab(px);
        lum.push(l / 100.0);
        let chroma = ((a / 100.0).powi(2) + (b / 100.0).powi(2)).sqrt();
        count += 1.0;
        let d = chroma - mean;
        mean += d / count;
        m2 += d * (chroma - mean);
        let hi = *px.iter().max().expect("3 channels") as f64;
        let lo = *px.iter().min().expect("3 channels") as f64;
        if hi > 0.0 {
            sat_sum += (hi - lo) / hi;
        }
    }
    lum.sort_by(f64::total_cmp);
    UciqeParts {
        chroma_std: (m2 / count).max(0.0).sqrt(),
        contrast: percentile(&lum, 0.99) - percentile(&lum, 0.01),
        saturation: sat_sum / n as f64,
    }
}

pub fn uciqe(img: &RgbImage) -> f64 {
    uciqe_parts(img).combine()
}
