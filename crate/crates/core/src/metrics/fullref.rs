use super::{gaussian_kernel, RgbImage};
use crate::error::{shape_err, Error, Result};

/// Reported for identical images (zero MSE).
pub const PSNR_CAP: f64 = 100.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const PEAK: f64 = 255.0;

fn check_pair(a: &RgbImage, b: &RgbImage) -> Result<()> {
    if !a.same_size(b) {
        return Err(shape_err!(
            "image sizes differ: {}×{} vs {}×{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        ));
    }
    Ok(())
}

/// Peak signal-to-noise ratio over all three channels, in dB, capped at
/// [`PSNR_CAP`].
pub fn psnr(y: &RgbImage, y_hat: &RgbImage) -> Result<f64> {
    check_pair(y, y_hat)?;
    let sse: u64 = y
        .data()
        .iter()
        .zip(y_hat.data())
        .map(|(&a, &b)| {
            let d = a as i64 - b as i64;
            (d * d) as u64
        })
        .sum();
    if sse == 0 {
        return Ok(PSNR_CAP);
    }
    let mse = sse as f64 / y.data().len() as f64;
    Ok((10.0 * (PEAK * PEAK / mse).log10()).min(PSNR_CAP))
}

/// Valid-mode separable filtering of a `w×h` plane.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = k.iter().zip(&row[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(i, a)| a * tmp[(y + i) * ow + x]).sum();
        }
    }
    (out, ow, oh)
}

/// Structural similarity of the BT.601 luma, averaged over every fully
/// contained 11×11 Gaussian window (σ = 1.5).
pub fn ssim(y: &RgbImage, y_hat: &RgbImage) -> Result<f64> {
    check_pair(y, y_hat)?;
    let (w, h) = (y.width(), y.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::Input(format!(
            "SSIM needs at least {SSIM_WINDOW}×{SSIM_WINDOW} pixels, got {w}×{h}"
        )));
    }
    let a = y.luminance();
    let b = y_hat.luminance();
    let k = gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA);
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    let (mu_a, _, _) = filter_valid(&a, w, h, &k);
    let (mu_b, _, _) = filter_valid(&b, w, h, &k);
    let (e_aa, _, _) = filter_valid(&aa, w, h, &k);
    let (e_bb, _, _) = filter_valid(&bb, w, h, &k);
    let (e_ab, _, _) = filter_valid(&ab, w, h, &k);
    let c1 = (K1 * PEAK).powi(2);
    let c2 = (K2 * PEAK).powi(2);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    Ok(total / n as f64)
}
