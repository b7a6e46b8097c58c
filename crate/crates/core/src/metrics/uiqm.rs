//! Underwater image quality measure: colourfulness (UICM), sharpness (UISM)
//! and contrast (UIConM).

use super::RgbImage;
use crate::diffcore::GUARD_EPS;

pub const C_UICM: f64 = 0.0282;
pub const C_UISM: f64 = 0.2953;
pub const C_UICONM: f64 = 3.5753;

/// Fraction trimmed from each tail of the opponent-channel distributions.
const TRIM: f64 = 0.1;
const UICM_MEAN_WEIGHT: f64 = -0.0268;
const UICM_STD_WEIGHT: f64 = 0.1586;
/// Side of the square blocks used by the EME and AMEE statistics.
pub const BLOCK: usize = 8;
const CHANNEL_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UiqmParts {
    pub uicm: f64,
    pub uism: f64,
    pub uiconm: f64,
}

impl UiqmParts {
    pub fn combine(&self) -> f64 {
        C_UICM * self.uicm + C_UISM * self.uism + C_UICONM * self.uiconm
    }
}

/// α-trimmed mean plus the spread about it over all samples.
fn trimmed_stats(mut v: Vec<f64>) -> (f64, f64) {
    let k = v.len();
    v.sort_by(f64::total_cmp);
    let lo = (TRIM * k as f64).ceil() as usize;
    let hi = (TRIM * k as f64).floor() as usize;
    let kept = if lo + hi < k { &v[lo..k - hi] } else { &v[..] };
    let mu = kept.iter().sum::<f64>() / kept.len() as f64;
    let var = v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / k as f64;
    (mu, var)
}

pub fn uicm(img: &RgbImage) -> f64 {
    let (rg, yb): (Vec<f64>, Vec<f64>) = img
        .data()
        .chunks_exact(3)
        .map(|p| {
            let (r, g, b) = (p[0] as f64, p[1] as f64, p[2] as f64);
            (r - g, 0.5 * (r + g) - b)
        })
        .unzip();
    let (mu_rg, var_rg) = trimmed_stats(rg);
    let (mu_yb, var_yb) = trimmed_stats(yb);
    UICM_MEAN_WEIGHT * (mu_rg * mu_rg + mu_yb * mu_yb).sqrt() + UICM_STD_WEIGHT * (var_rg + var_yb).sqrt()
}

/// Sobel gradient magnitude with replicated borders.
pub(crate) fn sobel(plane: &[f64], w: usize, h: usize) -> Vec<f64> {
    let at = |x: isize, y: isize| {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        plane[y * w + x]
    };
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1)
                - at(x - 1, y - 1)
                - 2.0 * at(x - 1, y)
                - at(x - 1, y + 1);
            let gy = at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1)
                - at(x - 1, y - 1)
                - 2.0 * at(x, y - 1)
                - at(x + 1, y - 1);
            out[y as usize * w + x as usize] = (gx * gx + gy * gy).sqrt();
        }
    }
    out
}

/// Per-block (min, max) over `planes` for the full 8×8 blocks.
fn block_extrema(planes: &[&[f64]], w: usize, h: usize) -> Vec<(f64, f64)> {
    let (k1, k2) = (h / BLOCK, w / BLOCK);
    let mut out = Vec::with_capacity(k1 * k2);
    for by in 0..k1 {
        for bx in 0..k2 {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for p in planes {
                for y in by * BLOCK..(by + 1) * BLOCK {
                    for &v in &p[y * w + bx * BLOCK..y * w + (bx + 1) * BLOCK] {
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
            }
            out.push((lo, hi));
        }
    }
    out
}

/// Enhancement measure `2/(k1·k2) Σ ln(max/min)`; blocks with a zero
/// minimum contribute nothing.
pub(crate) fn eme(plane: &[f64], w: usize, h: usize) -> f64 {
    let blocks = block_extrema(&[plane], w, h);
    if blocks.is_empty() {
        return 0.0;
    }
    let s: f64 = blocks
        .iter()
        .filter(|(lo, _)| *lo > GUARD_EPS)
        .map(|(lo, hi)| (hi / lo).ln())
        .sum();
    2.0 * s / blocks.len() as f64
}

pub fn uism(img: &RgbImage) -> f64 {
    let (w, h) = (img.width(), img.height());
    (0..3)
        .map(|c| {
            let ch = img.channel(c);
            let mag = sobel(&ch, w, h);
            let peak = mag.iter().copied().fold(0.0, f64::max);
            if peak <= GUARD_EPS {
                return 0.0;
            }
            // Edge map: the channel weighted by its normalised gradient.
            let edge: Vec<f64> = mag.iter().zip(&ch).map(|(m, v)| m / peak * v).collect();
            CHANNEL_WEIGHTS[c] * eme(&edge, w, h)
        })
        .sum()
}

/// Logarithmic AMEE contrast over 8×8 blocks of all three channels.
pub fn uiconm(img: &RgbImage) -> f64 {
    let (w, h) = (img.width(), img.height());
    let chans: Vec<Vec<f64>> = (0..3).map(|c| img.channel(c)).collect();
    let refs: Vec<&[f64]> = chans.iter().map(Vec::as_slice).collect();
    let blocks = block_extrema(&refs, w, h);
    if blocks.is_empty() {
        return 0.0;
    }
    let s: f64 = blocks
        .iter()
        .filter_map(|&(lo, hi)| {
            let (top, bot) = (hi - lo, hi + lo);
            (top > GUARD_EPS && bot > GUARD_EPS).then(|| {
                let r = top / bot;
                r * r.ln()
            })
        })
        .sum();
    -s / blocks.len() as f64
}

pub fn uiqm_parts(img: &RgbImage) -> UiqmParts {
    UiqmParts {
        uicm: uicm(img),
        uism: uism(img),
        uiconm: uiconm(img),
    }
}

pub fn uiqm(img: &RgbImage) -> f64 {
    uiqm_parts(img).combine()
}
