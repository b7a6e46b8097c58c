//! Image-quality metrics: PSNR and SSIM against a reference, and the
//! no-reference UIQM, UCIQE and NIQE scores.

mod fullref;
mod image;
mod niqe;
mod report;
mod uciqe;
mod uiqm;

pub use self::image::RgbImage;
pub use fullref::{psnr, ssim, PSNR_CAP};
pub use niqe::{
    fit_niqe_model, mscn, niqe_features, niqe_score, NiqeModel, BUNDLED_PATCH, DEFAULT_PATCH, FEATURES_PER_PATCH,
};
pub use report::{evaluate, MetricMeans, MetricReport, MetricRow};
pub use uciqe::{uciqe, uciqe_parts, UciqeParts};
pub use uiqm::{uicm, uiconm, uiqm, uiqm_parts, uism, UiqmParts};

/// Normalised 1-D Gaussian of odd length `size`.
pub(crate) fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let w: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}
