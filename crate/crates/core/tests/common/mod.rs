#![allow(dead_code)]

use std::path::PathBuf;

use mulagan::pipeline::load_image;
use mulagan::{RgbImage, Tensor, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

pub fn random_image(rng: &mut impl Rng, w: usize, h: usize) -> RgbImage {
    RgbImage::from_fn(w, h, |_, _| [rng.random(), rng.random(), rng.random()]).unwrap()
}

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixtures() -> PathBuf {
    repo_root().join("fixtures")
}

pub fn pair_dirs() -> (PathBuf, PathBuf) {
    let p = fixtures().join("pairs");
    (p.join("input"), p.join("reference"))
}

pub fn clean_image(i: usize) -> RgbImage {
    load_image(fixtures().join("clean").join(format!("clean_{i:02}.png"))).unwrap()
}

/// Copies the first `n` fixture pairs into `dir/{input,reference}`.
pub fn copy_pairs(dir: &std::path::Path, n: usize) -> (PathBuf, PathBuf) {
    let (src_in, src_ref) = pair_dirs();
    let (dst_in, dst_ref) = (dir.join("input"), dir.join("reference"));
    std::fs::create_dir_all(&dst_in).unwrap();
    std::fs::create_dir_all(&dst_ref).unwrap();
    for i in 0..n {
        let name = format!("pair_{i:02}.png");
        std::fs::copy(src_in.join(&name), dst_in.join(&name)).unwrap();
        std::fs::copy(src_ref.join(&name), dst_ref.join(&name)).unwrap();
    }
    (dst_in, dst_ref)
}

/// A narrow network on 64×64 pairs: fast enough for multi-step tests.
pub fn small_config(out: PathBuf) -> TrainConfig {
    TrainConfig {
        channel_widths: vec![4, 8, 8, 16, 16],
        disc_widths: vec![4, 8, 8, 16],
        output_dir: out,
        ..TrainConfig::default()
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}
