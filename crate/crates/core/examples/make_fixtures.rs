//! Regenerates the bundled test data: a clean synthetic corpus, colour-cast
//! "underwater" pairs derived from it, and the NIQE pristine model fitted on
//! the corpus.
//!
//! ```text
//! cargo run -p mulagan --example make_fixtures [-- <workspace-root>]
//! ```

use std::path::PathBuf;

use mulagan::metrics::{fit_niqe_model, BUNDLED_PATCH};
use mulagan::pipeline::{resize, save_image};
use mulagan::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CLEAN: usize = 30;
const CLEAN_SIZE: usize = 128;
const PAIRS: usize = 12;
const PAIR_SIZE: usize = 64;

/// Bilinearly interpolated random lattice with `cells` cells per side.
fn value_noise(rng: &mut ChaCha8Rng, size: usize, cells: usize) -> Vec<f64> {
    let g = cells + 1;
    let lattice: Vec<f64> = (0..g * g).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut out = vec![0.0; size * size];
    for y in 0..size {
        let fy = y as f64 / size as f64 * cells as f64;
        let (iy, ty) = (fy.floor() as usize, fy.fract());
        let sy = ty * ty * (3.0 - 2.0 * ty);
        for x in 0..size {
            let fx = x as f64 / size as f64 * cells as f64;
            let (ix, tx) = (fx.floor() as usize, fx.fract());
            let sx = tx * tx * (3.0 - 2.0 * tx);
            let l = |j: usize, i: usize| lattice[j * g + i];
            let top = l(iy, ix) * (1.0 - sx) + l(iy, ix + 1) * sx;
            let bot = l(iy + 1, ix) * (1.0 - sx) + l(iy + 1, ix + 1) * sx;
            out[y * size + x] = top * (1.0 - sy) + bot * sy;
        }
    }
    out
}

/// 1/f-weighted octaves of value noise in roughly [−1, 1].
fn fractal(rng: &mut ChaCha8Rng, size: usize) -> Vec<f64> {
    let mut acc = vec![0.0; size * size];
    let mut amp = 0.6;
    let mut cells = 2;
    while cells <= size / 2 {
        let n = value_noise(rng, size, cells);
        acc.iter_mut().zip(n).for_each(|(a, v)| *a += amp * v);
        amp *= 0.55;
        cells *= 2;
    }
    acc
}

fn random_colour(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [
        rng.random_range(0.05..0.95),
        rng.random_range(0.05..0.95),
        rng.random_range(0.05..0.95),
    ]
}

/// A textured background with a few shaded, anti-aliased shapes on top.
fn clean_scene(rng: &mut ChaCha8Rng, size: usize) -> RgbImage {
    let palette = [random_colour(rng), random_colour(rng), random_colour(rng)];
    let t = fractal(rng, size);
    let u = fractal(rng, size);
    let mut px: Vec<[f64; 3]> = (0..size * size)
        .map(|i| {
            let a = (0.5 + 0.5 * t[i]).clamp(0.0, 1.0);
            let b = (0.5 + 0.5 * u[i]).clamp(0.0, 1.0);
            let mut c = [0.0; 3];
            for k in 0..3 {
                c[k] = palette[0][k] * (1.0 - a) + palette[1][k] * a;
                c[k] = c[k] * (1.0 - 0.4 * b) + palette[2][k] * 0.4 * b;
            }
            c
        })
        .collect();
    for _ in 0..rng.random_range(3..9) {
        let colour = random_colour(rng);
        let (cx, cy) = (rng.random_range(0.0..size as f64), rng.random_range(0.0..size as f64));
        let (rx, ry) = (
            rng.random_range(0.06..0.3) * size as f64,
            rng.random_range(0.06..0.3) * size as f64,
        );
        let ellipse = rng.random_bool(0.6);
        let shade = fractal(rng, size);
        for y in 0..size {
            for x in 0..size {
                let (dx, dy) = ((x as f64 - cx) / rx, (y as f64 - cy) / ry);
                // Signed distance in pixels (approximately) to the boundary.
                let d = if ellipse {
                    ((dx * dx + dy * dy).sqrt() - 1.0) * rx.min(ry)
                } else {
                    (dx.abs().max(dy.abs()) - 1.0) * rx.min(ry)
                };
                let cover = (0.5 - d).clamp(0.0, 1.0);
                if cover > 0.0 {
                    let i = y * size + x;
                    let s = 0.8 + 0.2 * shade[i] - 0.15 * dy;
                    for k in 0..3 {
                        px[i][k] = px[i][k] * (1.0 - cover) + (colour[k] * s).clamp(0.0, 1.0) * cover;
                    }
                }
            }
        }
    }
    let grain: Vec<f64> = (0..size * size).map(|_| rng.random_range(-0.01..0.01)).collect();
    RgbImage::from_fn(size, size, |x, y| {
        let i = y * size + x;
        let mut out = [0u8; 3];
        for k in 0..3 {
            out[k] = ((px[i][k] + grain[i]).clamp(0.0, 1.0) * 255.0).round() as u8;
        }
        out
    })
    .expect("non-empty size")
}

/// Wavelength-dependent attenuation plus blue-green backscatter, as seen
/// through water: `I = J·t + B·(1 − t)` with `t = exp(−β·depth)`.
fn underwater(rng: &mut ChaCha8Rng, clean: &RgbImage) -> RgbImage {
    let size = clean.width();
    let beta = [
        rng.random_range(1.2..2.0),
        rng.random_range(0.3..0.6),
        rng.random_range(0.15..0.4),
    ];
    let backlight = [
        rng.random_range(0.05..0.15),
        rng.random_range(0.35..0.55),
        rng.random_range(0.45..0.65),
    ];
    let base = rng.random_range(0.5..1.0);
    let depth_noise = value_noise(rng, size, 2);
    RgbImage::from_fn(size, clean.height(), |x, y| {
        let depth = base + 0.6 * y as f64 / size as f64 + 0.15 * depth_noise[y * size + x];
        let p = clean.pixel(x, y);
        let mut out = [0u8; 3];
        for k in 0..3 {
            let t = (-beta[k] * depth).exp();
            let v = p[k] as f64 / 255.0 * t + backlight[k] * (1.0 - t);
            out[k] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
        out
    })
    .expect("same size as the clean image")
}

fn main() -> mulagan::Result<()> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../.."));
    let fixtures = root.join("fixtures");
    let clean_dir = fixtures.join("clean");
    let input_dir = fixtures.join("pairs/input");
    let ref_dir = fixtures.join("pairs/reference");
    for d in [&clean_dir, &input_dir, &ref_dir] {
        std::fs::create_dir_all(d).map_err(|e| mulagan::Error::Data(format!("{}: {e}", d.display())))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_611);
    let mut corpus = Vec::new();
    for i in 0..CLEAN {
        let img = clean_scene(&mut rng, CLEAN_SIZE);
        save_image(&img, clean_dir.join(format!("clean_{i:02}.png")))?;
        corpus.push(img);
    }
    for i in 0..PAIRS {
        let big = clean_scene(&mut rng, CLEAN_SIZE);
        let reference = resize(&big, PAIR_SIZE, PAIR_SIZE)?;
        let input = underwater(&mut rng, &reference);
        save_image(&reference, ref_dir.join(format!("pair_{i:02}.png")))?;
        save_image(&input, input_dir.join(format!("pair_{i:02}.png")))?;
    }
    let mut model = fit_niqe_model(&corpus, BUNDLED_PATCH)?;
    model.source = format!("fixtures/clean ({CLEAN} synthetic {CLEAN_SIZE}x{CLEAN_SIZE} scenes)");
    let asset = root.join("crates/core/assets/niqe_pristine.mlag");
    model.save(&asset)?;
    println!("wrote {CLEAN} clean images, {PAIRS} pairs and {}", asset.display());
    Ok(())
}
