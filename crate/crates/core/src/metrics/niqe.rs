//! Naturalness image quality evaluator.
//!
//! Luminance is normalised into MSCN coefficients; every patch contributes
//! 18 natural-scene statistics per scale (a generalised Gaussian fit of the
//! coefficients and asymmetric fits of four neighbour products) at full and
//! half resolution. An image's score is the distance between the Gaussian of
//! its patch features and a pristine model's.

use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use super::RgbImage;
use crate::diffcore::{Tensor, GUARD_EPS};
use crate::error::{Error, Result};
use crate::pipeline::{AnyTensor, Checkpoint};

pub const FEATURES_PER_PATCH: usize = 36;
const PER_SCALE: usize = FEATURES_PER_PATCH / 2;
/// Conventional full-resolution patch side.
pub const DEFAULT_PATCH: usize = 96;
/// Patch side of the bundled model, small enough for 64×64 images.
pub const BUNDLED_PATCH: usize = 32;
const RIDGE: f64 = 1e-6;
/// Patches at least this fraction of the sharpest one are kept for fitting.
const SHARPNESS_FRACTION: f64 = 0.75;
const MSCN_C: f64 = 1.0;
const MSCN_WINDOW: usize = 7;
const MSCN_SIGMA: f64 = 7.0 / 6.0;
/// Below this second moment a patch is treated as flat.
const DEGENERATE_VAR: f64 = 1e-10;
/// Shape parameter reported for flat patches.
const DEGENERATE_ALPHA: f64 = 2.0;

static BUNDLED: &[u8] = include_bytes!("../../assets/niqe_pristine.mlag");

/// Multivariate Gaussian of pristine patch features.
#[derive(Debug, Clone, PartialEq)]
pub struct NiqeModel {
    pub mean: Vec<f64>,
    /// Row-major `FEATURES_PER_PATCH²` covariance.
    pub cov: Vec<f64>,
    pub patch: usize,
    pub source: String,
}

/// Shape-parameter grid 0.2, 0.201, …, 10 with the moment ratios
/// Γ(1/α)Γ(3/α)/Γ(2/α)² used by both fits.
fn ratio_table() -> &'static [(f64, f64)] {
    static TABLE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (200..=10_000)
            .map(|i| {
                let a = i as f64 / 1000.0;
                let r = (ln_gamma(1.0 / a) + ln_gamma(3.0 / a) - 2.0 * ln_gamma(2.0 / a)).exp();
                (a, r)
            })
            .collect()
    })
}

/// Grid α whose ratio (or inverse ratio) is closest to `target`.
fn best_alpha(target: f64, inverse: bool) -> f64 {
    ratio_table()
        .iter()
        .map(|&(a, r)| (a, if inverse { 1.0 / r } else { r }))
        .min_by(|x, y| (x.1 - target).abs().total_cmp(&(y.1 - target).abs()))
        .expect("non-empty grid")
        .0
}

fn ggd_fit(x: &[f64]) -> [f64; 2] {
    let n = x.len() as f64;
    let var = x.iter().map(|v| v * v).sum::<f64>() / n;
    if var < DEGENERATE_VAR {
        return [DEGENERATE_ALPHA, 0.0];
    }
    let abs_mean = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    let rho = var / (abs_mean * abs_mean).max(GUARD_EPS);
    [best_alpha(rho, false), var]
}

fn aggd_fit(x: &[f64]) -> [f64; 4] {
    let n = x.len() as f64;
    let sq = x.iter().map(|v| v * v).sum::<f64>() / n;
    if sq < DEGENERATE_VAR {
        return [DEGENERATE_ALPHA, 0.0, 0.0, 0.0];
    }
    let side = |pred: fn(f64) -> bool| {
        let (s, c) = x
            .iter()
            .filter(|&&v| pred(v))
            .fold((0.0, 0usize), |(s, c), v| (s + v * v, c + 1));
        if c == 0 {
            0.0
        } else {
            s / c as f64
        }
    };
    let var_l = side(|v| v < 0.0);
    let var_r = side(|v| v > 0.0);
    let (sl, sr) = (var_l.sqrt(), var_r.sqrt());
    let g = sl / sr.max(GUARD_EPS);
    let abs_mean = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    let r_hat = abs_mean * abs_mean / sq;
    let r_norm = r_hat * (g * g * g + 1.0) * (g + 1.0) / ((g * g + 1.0) * (g * g + 1.0));
    let alpha = best_alpha(r_norm, true);
    let (l1, l2, l3) = (ln_gamma(1.0 / alpha), ln_gamma(2.0 / alpha), ln_gamma(3.0 / alpha));
    let scale = (0.5 * (l1 - l3)).exp();
    let eta = (sr - sl) * scale * (l2 - l1).exp();
    [alpha, eta, var_l, var_r]
}

/// 1-D Gaussian filtering along both axes with replicated borders.
fn blur_replicate(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as isize;
    let clampx = |x: isize| x.clamp(0, w as isize - 1) as usize;
    let clampy = |y: isize| y.clamp(0, h as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, a)| a * src[y * w + clampx(x as isize + i as isize - r)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, a)| a * tmp[clampy(y as isize + i as isize - r) * w + x])
                .sum();
        }
    }
    out
}

/// MSCN coefficients `(I − μ)/(σ + 1)` and the local deviation map σ.
pub fn mscn(lum: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let k = super::gaussian_kernel(MSCN_WINDOW, MSCN_SIGMA);
    let mu = blur_replicate(lum, w, h, &k);
    let sq: Vec<f64> = lum.iter().map(|v| v * v).collect();
    let e2 = blur_replicate(&sq, w, h, &k);
    let sigma: Vec<f64> = e2.iter().zip(&mu).map(|(e, m)| (e - m * m).abs().sqrt()).collect();
    let out = lum
        .iter()
        .zip(&mu)
        .zip(&sigma)
        .map(|((v, m), s)| (v - m) / (s + MSCN_C))
        .collect();
    (out, sigma)
}

/// 18 statistics for one `p×p` block of MSCN coefficients.
fn patch_features(block: &[f64], p: usize) -> [f64; PER_SCALE] {
    let mut out = [0.0; PER_SCALE];
    out[..2].copy_from_slice(&ggd_fit(block));
    // Neighbour products, wrapping around inside the patch.
    let shifts: [(usize, usize); 4] = [(0, 1), (1, 0), (1, 1), (1, p - 1)];
    for (i, (dy, dx)) in shifts.into_iter().enumerate() {
        let prod: Vec<f64> = (0..p * p)
            .map(|j| {
                let (y, x) = (j / p, j % p);
                block[j] * block[((y + dy) % p) * p + (x + dx) % p]
            })
            .collect();
        out[2 + 4 * i..6 + 4 * i].copy_from_slice(&aggd_fit(&prod));
    }
    out
}

fn extract(plane: &[f64], w: usize, py: usize, px: usize, p: usize) -> Vec<f64> {
    (0..p)
        .flat_map(|y| {
            plane[(py * p + y) * w + px * p..(py * p + y) * w + (px + 1) * p]
                .iter()
                .copied()
        })
        .collect()
}

fn half_scale(lum: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let (hw, hh) = (w / 2, h / 2);
    let mut out = vec![0.0; hw * hh];
    for y in 0..hh {
        for x in 0..hw {
            let a = lum[2 * y * w + 2 * x] + lum[2 * y * w + 2 * x + 1];
            let b = lum[(2 * y + 1) * w + 2 * x] + lum[(2 * y + 1) * w + 2 * x + 1];
            out[y * hw + x] = 0.25 * (a + b);
        }
    }
    (out, hw, hh)
}

fn check_patch(patch: usize) -> Result<()> {
    if patch < 8 || !patch.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "NIQE patch size must be even and at least 8, got {patch}"
        )));
    }
    Ok(())
}

/// Per-patch features and their sharpness (mean local deviation).
fn features_and_sharpness(img: &RgbImage, patch: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    check_patch(patch)?;
    let (w, h) = (img.width(), img.height());
    if w < patch || h < patch {
        return Err(Error::Input(format!(
            "{w}×{h} image is smaller than one {patch}×{patch} patch"
        )));
    }
    let lum = img.luminance();
    let (m1, s1) = mscn(&lum, w, h);
    let (half, hw, hh) = half_scale(&lum, w, h);
    let (m2, _) = mscn(&half, hw, hh);
    let hp = patch / 2;
    let (ny, nx) = (h / patch, w / patch);
    let mut feats = Vec::with_capacity(ny * nx);
    let mut sharp = Vec::with_capacity(ny * nx);
    for py in 0..ny {
        for px in 0..nx {
            let mut f = Vec::with_capacity(FEATURES_PER_PATCH);
            f.extend_from_slice(&patch_features(&extract(&m1, w, py, px, patch), patch));
            f.extend_from_slice(&patch_features(&extract(&m2, hw, py, px, hp), hp));
            feats.push(f);
            let s = extract(&s1, w, py, px, patch);
            sharp.push(s.iter().sum::<f64>() / s.len() as f64);
        }
    }
    Ok((feats, sharp))
}

/// One 36-dimensional feature vector per non-overlapping patch.
pub fn niqe_features(img: &RgbImage, patch: usize) -> Result<Vec<Vec<f64>>> {
    Ok(features_and_sharpness(img, patch)?.0)
}

fn mean_cov(feats: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = FEATURES_PER_PATCH;
    let n = feats.len() as f64;
    let mut mean = vec![0.0; d];
    for f in feats {
        mean.iter_mut().zip(f).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = vec![0.0; d * d];
    for f in feats {
        for i in 0..d {
            let di = f[i] - mean[i];
            for j in i..d {
                cov[i * d + j] += di * (f[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / n;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    (mean, cov)
}

impl NiqeModel {
    /// Gaussian of the given feature vectors; the covariance uses 1/n
    /// normalisation and carries a small ridge.
    pub fn from_features(feats: &[Vec<f64>], patch: usize, source: impl Into<String>) -> Result<Self> {
        if feats.is_empty() {
            return Err(Error::Data("no patch features to fit".into()));
        }
        if feats
            .iter()
            .any(|f| f.len() != FEATURES_PER_PATCH || f.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Numerical("malformed or non-finite patch features".into()));
        }
        let (mean, mut cov) = mean_cov(feats);
        for i in 0..FEATURES_PER_PATCH {
            cov[i * FEATURES_PER_PATCH + i] += RIDGE;
        }
        Ok(NiqeModel {
            mean,
            cov,
            patch,
            source: source.into(),
        })
    }

    /// The model fitted on the clean fixture corpus shipped with the crate.
    pub fn bundled() -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::from_bytes(BUNDLED)?)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let d = FEATURES_PER_PATCH;
        let mut c = Checkpoint::new(serde_json::json!({
            "kind": "niqe_model",
            "patch": self.patch,
            "source": self.source,
        }));
        c.insert("niqe.mean", Tensor::new(vec![d], self.mean.clone())?)?;
        c.insert("niqe.cov", Tensor::new(vec![d, d], self.cov.clone())?)?;
        Ok(c)
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let d = FEATURES_PER_PATCH;
        let get = |name: &str, shape: &[usize]| -> Result<Vec<f64>> {
            let t = c
                .get(name)
                .ok_or_else(|| Error::Data(format!("NIQE model lacks {name}")))?;
            if t.shape() != shape {
                return Err(Error::Data(format!(
                    "{name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
            Ok(AnyTensor::to::<f64>(t).into_data())
        };
        let mean = get("niqe.mean", &[d])?;
        let cov = get("niqe.cov", &[d, d])?;
        let patch = c.metadata["patch"]
            .as_u64()
            .ok_or_else(|| Error::Data("NIQE model metadata lacks a patch size".into()))? as usize;
        check_patch(patch)?;
        let source = c.metadata["source"].as_str().unwrap_or("").to_string();
        for i in 0..d {
            for j in 0..i {
                if cov[i * d + j] != cov[j * d + i] {
                    return Err(Error::Data("NIQE covariance is not symmetric".into()));
                }
            }
        }
        Ok(NiqeModel {
            mean,
            cov,
            patch,
            source,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Fits a pristine model from sharp patches of at least two images.
pub fn fit_niqe_model(corpus: &[RgbImage], patch: usize) -> Result<NiqeModel> {
    if corpus.len() < 2 {
        return Err(Error::Data(format!(
            "a NIQE model needs at least 2 corpus images, got {}",
            corpus.len()
        )));
    }
    let mut pooled = Vec::new();
    for img in corpus {
        let (feats, sharp) = features_and_sharpness(img, patch)?;
        let peak = sharp.iter().copied().fold(0.0, f64::max);
        pooled.extend(
            feats
                .into_iter()
                .zip(&sharp)
                .filter(|(_, &s)| s >= SHARPNESS_FRACTION * peak)
                .map(|(f, _)| f),
        );
    }
    NiqeModel::from_features(&pooled, patch, format!("{} images", corpus.len()))
}

/// Distance between the image's patch-feature Gaussian and the model:
/// `√(dᵀ((Σ₁+Σ₂)/2 + ridge)⁻¹ d)`.
pub fn niqe_score(img: &RgbImage, model: &NiqeModel) -> Result<f64> {
    let d = FEATURES_PER_PATCH;
    let feats = niqe_features(img, model.patch)?;
    if feats.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite NIQE features".into()));
    }
    let (mean, cov) = mean_cov(&feats);
    let diff = DVector::from_iterator(d, model.mean.iter().zip(&mean).map(|(a, b)| a - b));
    let pooled = DMatrix::from_fn(d, d, |i, j| {
        0.5 * (model.cov[i * d + j] + cov[i * d + j]) + if i == j { RIDGE } else { 0.0 }
    });
    let chol = pooled
        .cholesky()
        .ok_or_else(|| Error::Numerical("pooled NIQE covariance is not positive definite".into()))?;
    let q = diff.dot(&chol.solve(&diff));
    if !q.is_finite() {
        return Err(Error::Numerical("non-finite NIQE distance".into()));
    }
    Ok(q.max(0.0).sqrt())
}
