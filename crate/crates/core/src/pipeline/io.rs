use std::path::Path;

use image::{DynamicImage, ImageReader};

use crate::diffcore::Tensor;
use crate::error::{shape_err, Error, Result};
use crate::metrics::RgbImage;

/// Decodes PNG or JPEG to 8-bit RGB. 16-bit samples keep their high byte;
/// alpha is dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let decode_err = |reason: String| Error::Decode {
        path: path.to_path_buf(),
        reason,
    };
    let reader = ImageReader::open(path)
        .map_err(|e| decode_err(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| decode_err(e.to_string()))?;
    let img = reader.decode().map_err(|e| decode_err(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgb16(_)
        | DynamicImage::ImageRgba16(_) => img.to_rgb16().into_raw().into_iter().map(|v| (v >> 8) as u8).collect(),
        other => other.to_rgb8().into_raw(),
    };
    RgbImage::new(w, h, data).map_err(|e| decode_err(e.to_string()))
}

/// Writes a PNG; the parent directory must exist.
pub fn save_image(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    image::save_buffer_with_format(
        path,
        img.data(),
        img.width() as u32,
        img.height() as u32,
        image::ExtendedColorType::Rgb8,
        image::ImageFormat::Png,
    )
    .map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(other.to_string())),
    })
}

/// Bilinear resize; a no-op at the current size.
pub fn resize(img: &RgbImage, width: usize, height: usize) -> Result<RgbImage> {
    if img.width() == width && img.height() == height {
        return Ok(img.clone());
    }
    if width == 0 || height == 0 {
        return Err(Error::Input(format!("cannot resize to {width}×{height}")));
    }
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, img.data().to_vec())
        .expect("buffer length matches dimensions");
    let out = image::imageops::resize(&buf, width as u32, height as u32, image::imageops::FilterType::Triangle);
    RgbImage::new(width, height, out.into_raw())
}

/// 3×H×W tensor in [−1, 1] via `v / 127.5 − 1`.
pub fn normalize(img: &RgbImage) -> Tensor<f32> {
    let (w, h) = (img.width(), img.height());
    let mut data = vec![0f32; 3 * w * h];
    for (i, p) in img.data().chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * w * h + i] = p[c] as f32 / 127.5 - 1.0;
        }
    }
    Tensor::new(vec![3, h, w], data).expect("sized above")
}

/// Inverse of [`normalize`]: `(v + 1)·127.5`, rounded and clamped.
pub fn denormalize(v: f32) -> u8 {
    ((v as f64 + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

/// Converts a 3×H×W (or 1×3×H×W) tensor in [−1, 1] back to an image.
pub fn tensor_to_image(t: &Tensor<f32>) -> Result<RgbImage> {
    let s = t.shape();
    let (h, w) = match s {
        [3, h, w] | [1, 3, h, w] => (*h, *w),
        _ => return Err(shape_err!("expected a 3×H×W image tensor, got {:?}", s)),
    };
    let d = t.data();
    let mut data = Vec::with_capacity(3 * w * h);
    for i in 0..w * h {
        for c in 0..3 {
            data.push(denormalize(d[c * w * h + i]));
        }
    }
    RgbImage::new(w, h, data)
}
