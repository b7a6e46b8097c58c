mod common;

use common::{random_image, rng};
use mulagan::metrics::{
    evaluate, psnr, ssim, uciqe, uciqe_parts, uicm, uiconm, uiqm, uiqm_parts, uism, NiqeModel, UciqeParts, UiqmParts,
    PSNR_CAP,
};
use mulagan::{ErrorKind, RgbImage};
use proptest::prelude::*;
use rand::Rng;

fn brute_psnr(a: &RgbImage, b: &RgbImage) -> f64 {
    let mut sse = 0.0;
    for y in 0..a.height() {
        for x in 0..a.width() {
            let (p, q) = (a.pixel(x, y), b.pixel(x, y));
            for c in 0..3 {
                sse += (p[c] as f64 - q[c] as f64).powi(2);
            }
        }
    }
    let mse = sse / (3 * a.pixels()) as f64;
    if mse == 0.0 {
        PSNR_CAP
    } else {
        (20.0 * 255.0f64.log10() - 10.0 * mse.log10()).min(PSNR_CAP)
    }
}

fn luma(img: &RgbImage, x: usize, y: usize) -> f64 {
    let p = img.pixel(x, y);
    0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64
}

/// Direct 2-D sliding window: every 11×11 window fully inside the image.
fn brute_ssim(a: &RgbImage, b: &RgbImage) -> f64 {
    let n = 11usize;
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            w[i * n + j] = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
        }
    }
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= z);
    let (c1, c2) = ((0.01 * 255.0f64).powi(2), (0.03 * 255.0f64).powi(2));
    let mut total = 0.0;
    let mut count = 0;
    for oy in 0..=a.height() - n {
        for ox in 0..=a.width() - n {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    ma += w[i * n + j] * luma(a, ox + j, oy + i);
                    mb += w[i * n + j] * luma(b, ox + j, oy + i);
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    let (da, db) = (luma(a, ox + j, oy + i) - ma, luma(b, ox + j, oy + i) - mb);
                    va += w[i * n + j] * da * da;
                    vb += w[i * n + j] * db * db;
                    cov += w[i * n + j] * da * db;
                }
            }
            total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

#[test]
fn full_reference_metrics_match_brute_force() {
    let mut r = rng(11);
    for _ in 0..50 {
        let a = random_image(&mut r, 32, 32);
        let b = random_image(&mut r, 32, 32);
        assert!((psnr(&a, &b).unwrap() - brute_psnr(&a, &b)).abs() < 1e-6);
        assert!((ssim(&a, &b).unwrap() - brute_ssim(&a, &b)).abs() < 1e-6);
    }
}

#[test]
fn full_reference_calibration() {
    let base = random_image(&mut rng(12), 24, 24);
    let mut data = base.data().to_vec();
    data.iter_mut().for_each(|v| *v = (*v).clamp(1, 254));
    let a = RgbImage::new(24, 24, data.clone()).unwrap();
    let shifted = RgbImage::new(24, 24, data.iter().map(|v| v + 1).collect()).unwrap();
    assert!((psnr(&a, &shifted).unwrap() - 48.1308).abs() < 1e-3);
    let black = RgbImage::filled(16, 16, [0; 3]).unwrap();
    let white = RgbImage::filled(16, 16, [255; 3]).unwrap();
    assert_eq!(psnr(&black, &white).unwrap(), 0.0);
    assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);

    // A mid-contrast gradient against its negative.
    let g = RgbImage::from_fn(32, 32, |x, y| {
        let v = (64 + 4 * x + y) as u8;
        [v, v, v]
    })
    .unwrap();
    let neg = RgbImage::new(32, 32, g.data().iter().map(|v| 255 - v).collect()).unwrap();
    assert!(ssim(&g, &neg).unwrap() < 0.5);

    let small = RgbImage::filled(8, 8, [0; 3]).unwrap();
    assert_eq!(ssim(&small, &small).unwrap_err().kind(), ErrorKind::Input);
    assert_eq!(psnr(&a, &small).unwrap_err().kind(), ErrorKind::Shape);
}

#[test]
fn uiqm_and_uciqe_calibration() {
    let gray = RgbImage::filled(32, 32, [128; 3]).unwrap();
    assert_eq!(uiqm(&gray), 0.0);
    assert_eq!(uciqe(&gray), 0.0);
    let halves = RgbImage::from_fn(32, 32, |x, _| if x < 16 { [0; 3] } else { [255; 3] }).unwrap();
    assert!((uciqe(&halves) - 0.2745).abs() < 1e-6);
    let unit = UiqmParts {
        uicm: 1.0,
        uism: 1.0,
        uiconm: 1.0,
    };
    assert!((unit.combine() - 3.8988).abs() < 1e-12);
    let unit = UciqeParts {
        chroma_std: 1.0,
        contrast: 1.0,
        saturation: 1.0,
    };
    assert!((unit.combine() - 1.0).abs() < 1e-12);
}

// ---- independent UIQM sub-metrics -------------------------------------------------

fn trimmed(mut v: Vec<f64>, alpha: f64) -> (f64, f64) {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = v.len() as f64;
    let (tl, tr) = ((alpha * k).ceil() as usize, (alpha * k).floor() as usize);
    let kept = &v[tl..v.len() - tr];
    let mu = kept.iter().sum::<f64>() / kept.len() as f64;
    (mu, v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / k)
}

fn oracle_uicm(img: &RgbImage) -> f64 {
    let mut rg = vec![];
    let mut yb = vec![];
    for y in 0..img.height() {
        for x in 0..img.width() {
            let [r, g, b] = img.pixel(x, y).map(|v| v as f64);
            rg.push(r - g);
            yb.push((r + g) / 2.0 - b);
        }
    }
    let (m1, v1) = trimmed(rg, 0.1);
    let (m2, v2) = trimmed(yb, 0.1);
    -0.0268 * (m1 * m1 + m2 * m2).sqrt() + 0.1586 * (v1 + v2).sqrt()
}

#[allow(clippy::needless_range_loop)]
fn oracle_sobel(img: &RgbImage, c: usize) -> Vec<Vec<f64>> {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let px = |x: isize, y: isize| img.pixel(x.clamp(0, w - 1) as usize, y.clamp(0, h - 1) as usize)[c] as f64;
    let kx = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
    (0..h)
        .map(|y| {
            (0..w)
                .map(|x| {
                    let (mut gx, mut gy) = (0.0, 0.0);
                    for i in 0..3 {
                        for j in 0..3 {
                            let v = px(x + j as isize - 1, y + i as isize - 1);
                            gx += kx[i][j] * v;
                            gy += kx[j][i] * v;
                        }
                    }
                    gx.hypot(gy)
                })
                .collect()
        })
        .collect()
}

/// Visits each full 8×8 block.
fn blocks(w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..h / 8).flat_map(move |by| (0..w / 8).map(move |bx| (bx * 8, by * 8)))
}

#[allow(clippy::needless_range_loop)]
fn oracle_uism(img: &RgbImage) -> f64 {
    let (w, h) = (img.width(), img.height());
    let lw = [0.299, 0.587, 0.114];
    let mut total = 0.0;
    for c in 0..3 {
        let g = oracle_sobel(img, c);
        let peak = g.iter().flatten().cloned().fold(0.0, f64::max);
        if peak == 0.0 {
            continue;
        }
        let mut s = 0.0;
        let mut nb = 0.0;
        for (x0, y0) in blocks(w, h) {
            let vals: Vec<f64> = (y0..y0 + 8)
                .flat_map(|y| (x0..x0 + 8).map(move |x| (x, y)))
                .map(|(x, y)| g[y][x] / peak * img.pixel(x, y)[c] as f64)
                .collect();
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(0.0, f64::max);
            if lo > 1e-12 {
                s += (hi / lo).ln();
            }
            nb += 1.0;
        }
        total += lw[c] * 2.0 / nb * s;
    }
    total
}

fn oracle_uiconm(img: &RgbImage) -> f64 {
    let (mut s, mut nb) = (0.0, 0.0);
    for (x0, y0) in blocks(img.width(), img.height()) {
        let (mut lo, mut hi) = (255.0f64, 0.0f64);
        for y in y0..y0 + 8 {
            for x in x0..x0 + 8 {
                for v in img.pixel(x, y) {
                    lo = lo.min(v as f64);
                    hi = hi.max(v as f64);
                }
            }
        }
        if hi - lo > 1e-12 && hi + lo > 1e-12 {
            let r = (hi - lo) / (hi + lo);
            s += r * r.ln();
        }
        nb += 1.0;
    }
    -s / nb
}

/// Blocky random image: varied per-block contrast with some flat blocks.
fn textured(r: &mut impl Rng, w: usize, h: usize) -> RgbImage {
    let levels: Vec<(u8, u8)> = (0..(w / 8) * (h / 8) + w)
        .map(|_| {
            let lo = r.random_range(0..200u8);
            (lo, lo + r.random_range(0..=55u8))
        })
        .collect();
    RgbImage::from_fn(w, h, |x, y| {
        let (lo, hi) = levels[(y / 8) * (w / 8) + x / 8];
        [0, 1, 2].map(|_| r.random_range(lo..=hi))
    })
    .unwrap()
}

#[test]
fn uiqm_sub_metrics_match_per_block_oracles() {
    let mut r = rng(13);
    for i in 0..6 {
        let img = if i % 2 == 0 {
            random_image(&mut r, 64, 64)
        } else {
            textured(&mut r, 64, 64)
        };
        assert!((uicm(&img) - oracle_uicm(&img)).abs() < 1e-6);
        assert!(
            (uism(&img) - oracle_uism(&img)).abs() < 1e-6,
            "{} {}",
            uism(&img),
            oracle_uism(&img)
        );
        assert!((uiconm(&img) - oracle_uiconm(&img)).abs() < 1e-6);
    }
}

// ---- independent UCIQE statistics --------------------------------------------------

fn oracle_lab(p: [u8; 3]) -> [f64; 3] {
    let m = [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ];
    let lin = p.map(|c| {
        let v = c as f64 / 255.0;
        if v <= 0.04045 {
            v / 12.92
        } else {
            ((v + 0.055) / 1.055).powf(2.4)
        }
    });
    let f = |t: f64| {
        if t > (6.0f64 / 29.0).powi(3) {
            t.cbrt()
        } else {
            t * 841.0 / 108.0 + 4.0 / 29.0
        }
    };
    let xyz: Vec<f64> = m
        .iter()
        .map(|row| (0..3).map(|i| row[i] * lin[i]).sum::<f64>() / row.iter().sum::<f64>())
        .collect();
    let (fx, fy, fz) = (f(xyz[0]), f(xyz[1]), f(xyz[2]));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

fn oracle_uciqe_parts(img: &RgbImage) -> UciqeParts {
    let px: Vec<[u8; 3]> = img.data().chunks(3).map(|p| [p[0], p[1], p[2]]).collect();
    let n = px.len() as f64;
    let labs: Vec<[f64; 3]> = px.iter().map(|&p| oracle_lab(p)).collect();
    let chroma: Vec<f64> = labs.iter().map(|l| (l[1] / 100.0).hypot(l[2] / 100.0)).collect();
    let mc = chroma.iter().sum::<f64>() / n;
    let sd = (chroma.iter().map(|c| (c - mc).powi(2)).sum::<f64>() / n).sqrt();
    let mut l: Vec<f64> = labs.iter().map(|v| v[0] / 100.0).collect();
    l.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pct = |q: f64| {
        let t = q * (l.len() - 1) as f64;
        let i = t.floor() as usize;
        l[i] + (l[(i + 1).min(l.len() - 1)] - l[i]) * (t - i as f64)
    };
    let sat = px
        .iter()
        .map(|p| {
            let (mx, mn) = (*p.iter().max().unwrap() as f64, *p.iter().min().unwrap() as f64);
            if mx == 0.0 {
                0.0
            } else {
                1.0 - mn / mx
            }
        })
        .sum::<f64>()
        / n;
    UciqeParts {
        chroma_std: sd,
        contrast: pct(0.99) - pct(0.01),
        saturation: sat,
    }
}

#[test]
fn recomposition_identities() {
    let mut r = rng(14);
    for _ in 0..8 {
        let img = random_image(&mut r, 40, 24);
        let p = uiqm_parts(&img);
        let direct = 0.0282 * uicm(&img) + 0.2953 * uism(&img) + 3.5753 * uiconm(&img);
        assert!((uiqm(&img) - direct).abs() < 1e-10);
        assert_eq!(uiqm(&img), p.combine());

        let q = oracle_uciqe_parts(&img);
        let got = uciqe_parts(&img);
        assert!((got.chroma_std - q.chroma_std).abs() < 1e-10);
        assert!((got.contrast - q.contrast).abs() < 1e-10);
        assert!((got.saturation - q.saturation).abs() < 1e-10);
        let want = 0.4680 * q.chroma_std + 0.2745 * q.contrast + 0.2575 * q.saturation;
        assert!((uciqe(&img) - want).abs() < 1e-10);
    }
}

#[test]
fn degenerate_images_stay_finite() {
    let model = NiqeModel::bundled().unwrap();
    let mut one_off = RgbImage::filled(48, 48, [100; 3]).unwrap();
    one_off.data_mut()[3 * (20 * 48 + 20)] = 101;
    let suite = [
        RgbImage::filled(48, 48, [100; 3]).unwrap(),
        RgbImage::filled(48, 48, [0; 3]).unwrap(),
        RgbImage::filled(48, 48, [255; 3]).unwrap(),
        RgbImage::filled(48, 48, [255, 0, 0]).unwrap(),
        one_off,
    ];
    for img in &suite {
        let other = &suite[0];
        for v in [
            psnr(img, other).unwrap(),
            ssim(img, other).unwrap(),
            ssim(img, img).unwrap(),
            uiqm(img),
            uciqe(img),
            mulagan::metrics::niqe_score(img, &model).unwrap(),
        ] {
            assert!(v.is_finite(), "{v}");
        }
    }
}

#[test]
fn evaluate_pairs_and_averages() {
    let mut r = rng(15);
    let model = NiqeModel::bundled().unwrap();
    let imgs: Vec<(String, RgbImage)> = (0..3)
        .map(|i| (format!("im{i}.png"), random_image(&mut r, 40, 40)))
        .collect();
    let same = evaluate(&imgs, Some(&imgs), &model).unwrap();
    assert!(same.reference);
    for row in &same.images {
        assert_eq!(row.ssim, Some(1.0));
        assert_eq!(row.psnr, Some(PSNR_CAP));
    }
    let refs: Vec<(String, RgbImage)> = (0..3)
        .map(|i| (format!("im{i}.jpg"), random_image(&mut r, 40, 40)))
        .collect();
    let rep = evaluate(&imgs, Some(&refs), &model).unwrap();
    let names: Vec<&str> = rep.images.iter().map(|r| r.filename.as_str()).collect();
    assert_eq!(names, ["im0.png", "im1.png", "im2.png"]);
    let m = |f: fn(&mulagan::metrics::MetricRow) -> f64| rep.images.iter().map(f).sum::<f64>() / 3.0;
    assert!((rep.means.psnr.unwrap() - m(|r| r.psnr.unwrap())).abs() < 1e-12);
    assert!((rep.means.ssim.unwrap() - m(|r| r.ssim.unwrap())).abs() < 1e-12);
    assert!((rep.means.uiqm - m(|r| r.uiqm)).abs() < 1e-12);
    assert!((rep.means.niqe - m(|r| r.niqe)).abs() < 1e-12);

    let no_ref = evaluate(&imgs, None, &model).unwrap();
    assert!(!no_ref.reference && no_ref.means.psnr.is_none() && no_ref.images[0].ssim.is_none());
    assert_eq!(
        evaluate(&imgs, Some(&refs[..2]), &model).unwrap_err().kind(),
        ErrorKind::Data
    );
    assert_eq!(evaluate(&[], None, &model).unwrap_err().kind(), ErrorKind::Data);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn full_reference_symmetry_and_identity(seed in any::<u64>(), w in 11usize..30, h in 11usize..30) {
        let mut r = rng(seed);
        let (a, b) = (random_image(&mut r, w, h), random_image(&mut r, w, h));
        prop_assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!(ssim(&a, &b).unwrap() <= 1.0);
    }

    #[test]
    fn psnr_falls_along_a_noise_ladder(seed in any::<u64>()) {
        let mut r = rng(seed);
        let base = RgbImage::from_fn(16, 16, |_, _| [0, 1, 2].map(|_| r.random_range(64..=192u8))).unwrap();
        let signs: Vec<i32> = (0..base.data().len()).map(|_| if r.random::<bool>() { 1 } else { -1 }).collect();
        let mut last = f64::INFINITY;
        for amp in [1, 2, 4, 8, 16, 32, 60] {
            let noisy = RgbImage::new(16, 16, base.data().iter().zip(&signs).map(|(&v, s)| (v as i32 + s * amp) as u8).collect()).unwrap();
            let p = psnr(&base, &noisy).unwrap();
            prop_assert!(p < last);
            last = p;
        }
    }
}
