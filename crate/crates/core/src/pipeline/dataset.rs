use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::io::{load_image, normalize, resize};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// One (input, optional reference) pair, each 3×S×S in [−1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub id: String,
    pub x: Tensor<f32>,
    pub y: Option<Tensor<f32>>,
}

/// Filename-ordered samples plus the problems met while building them.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub samples: Vec<PairedSample>,
    /// Horizontal-flip augmentation requested for training.
    pub augment: bool,
    pub warnings: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        .unwrap_or(false)
}

/// PNG/JPEG files in `dir`, keyed and sorted by filename stem.
pub fn list_images(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if !path.is_file() || !is_image(&path) {
            continue;
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Data(format!("non-UTF-8 file name {}", path.display())))?
            .to_string();
        if let Some(prev) = out.insert(stem.clone(), path.clone()) {
            return Err(Error::Data(format!(
                "ambiguous stem {stem}: {} and {}",
                prev.display(),
                path.display()
            )));
        }
    }
    Ok(out)
}

fn load_resized(path: &Path, size: usize) -> Result<Tensor<f32>> {
    let img = load_image(path)?;
    Ok(normalize(&resize(&img, size, size)?))
}

/// Loads `input_dir` (paired by stem with `reference_dir` when given),
/// resizing to `size`×`size`. Unpaired and undecodable files are skipped
/// with a warning.
pub fn ingest_dataset(input_dir: &Path, reference_dir: Option<&Path>, size: usize, augment: bool) -> Result<Dataset> {
    if size == 0 {
        return Err(Error::Config("image size must be positive".into()));
    }
    let inputs = list_images(input_dir)?;
    let mut warnings = Vec::new();
    let refs = match reference_dir {
        Some(dir) => {
            let refs = list_images(dir)?;
            let orphans: Vec<&String> = inputs
                .keys()
                .filter(|k| !refs.contains_key(*k))
                .chain(refs.keys().filter(|k| !inputs.contains_key(*k)))
                .collect();
            for o in orphans {
                warnings.push(format!("no counterpart for {o}"));
            }
            Some(refs)
        }
        None => None,
    };
    let jobs: Vec<(String, PathBuf, Option<PathBuf>)> = inputs
        .iter()
        .filter_map(|(stem, p)| match &refs {
            None => Some((stem.clone(), p.clone(), None)),
            Some(r) => r.get(stem).map(|rp| (stem.clone(), p.clone(), Some(rp.clone()))),
        })
        .collect();
    if refs.is_some() && jobs.is_empty() {
        return Err(Error::Data(format!(
            "no filename stems in {} match the reference directory",
            input_dir.display()
        )));
    }
    let loaded: Vec<Result<PairedSample>> = jobs
        .par_iter()
        .map(|(id, xp, yp)| {
            let x = load_resized(xp, size)?;
            let y = yp.as_deref().map(|p| load_resized(p, size)).transpose()?;
            Ok(PairedSample { id: id.clone(), x, y })
        })
        .collect();
    let mut samples = Vec::with_capacity(loaded.len());
    for r in loaded {
        match r {
            Ok(s) => samples.push(s),
            Err(e) => warnings.push(format!("skipped: {e}")),
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    if samples.is_empty() {
        return Err(Error::Data(format!("no usable images in {}", input_dir.display())));
    }
    Ok(Dataset {
        samples,
        augment,
        warnings,
    })
}
