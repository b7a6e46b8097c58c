use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::dataset::list_images;
use super::io::{load_image, normalize, resize, save_image, tensor_to_image};
use crate::error::{Error, Result};
use crate::metrics::RgbImage;
use crate::model::Generator;

type Decoded = (Vec<(String, RgbImage)>, Vec<String>);

/// Decodes every image of `dir` in filename order, keyed by file name.
/// Undecodable files are skipped and reported.
pub fn load_dir(dir: &Path) -> Result<Decoded> {
    let files: Vec<(String, PathBuf)> = list_images(dir)?.into_values().map(|p| (file_name(&p), p)).collect();
    let decoded: Vec<_> = files.par_iter().map(|(n, p)| (n.clone(), load_image(p))).collect();
    let mut images = Vec::new();
    let mut warnings = Vec::new();
    for (name, r) in decoded {
        match r {
            Ok(img) => images.push((name, img)),
            Err(e) => warnings.push(format!("skipping {name}: {e}")),
        }
    }
    Ok((images, warnings))
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Runs the generator (inference mode) on one image at `size`×`size`;
/// with `keep_size` the result is resized back to the input dimensions.
pub fn enhance_image(gen: &mut Generator<f32>, img: &RgbImage, size: usize, keep_size: bool) -> Result<RgbImage> {
    let x = normalize(&resize(img, size, size)?);
    let x = x.reshape(vec![1, 3, size, size])?;
    let y = tensor_to_image(&gen.enhance(&x)?)?;
    if keep_size {
        resize(&y, img.width(), img.height())
    } else {
        Ok(y)
    }
}

#[derive(Debug, Clone, Default)]
pub struct EnhanceSummary {
    pub written: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Enhances every decodable image of `input`, writing `<stem>.png` files
/// into `output` (created if needed).
pub fn enhance_dir(
    gen: &Generator<f32>,
    input: &Path,
    output: &Path,
    size: usize,
    keep_size: bool,
) -> Result<EnhanceSummary> {
    let (images, warnings) = load_dir(input)?;
    if images.is_empty() {
        return Err(Error::Data(format!("no decodable images in {}", input.display())));
    }
    std::fs::create_dir_all(output).map_err(|e| Error::io(output, e))?;
    let written = images
        .par_iter()
        .map_init(
            || gen.clone(),
            |g, (name, img)| {
                let stem = Path::new(name)
                    .file_stem()
                    .map_or_else(|| name.clone(), |s| s.to_string_lossy().into_owned());
                let path = output.join(format!("{stem}.png"));
                save_image(&enhance_image(g, img, size, keep_size)?, &path)?;
                Ok(path)
            },
        )
        .collect::<Result<Vec<_>>>()?;
    Ok(EnhanceSummary { written, warnings })
}
