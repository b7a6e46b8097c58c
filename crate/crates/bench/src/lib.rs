//! Deterministic inputs shared by the benchmarks in `benches/`.

use mulagan::{RgbImage, Tensor};

/// A smooth, non-constant tensor in [−1, 1].
pub fn pattern_tensor(shape: &[usize]) -> Tensor<f32> {
    let n = shape.iter().product();
    let data = (0..n).map(|i| ((i as f32) * 0.618_034).sin()).collect();
    Tensor::new(shape.to_vec(), data).expect("sized from shape")
}

/// A textured colour image with some structure in every 8×8 block.
pub fn pattern_image(w: usize, h: usize) -> RgbImage {
    RgbImage::from_fn(w, h, |x, y| {
        let v = |k: usize| ((x * k + y * (k + 3) + (x * y) % 17) % 256) as u8;
        [v(3), v(5), v(7)]
    })
    .expect("non-empty")
}
