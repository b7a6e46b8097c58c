use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::{niqe_score, psnr, ssim, uciqe, uiqm, NiqeModel, RgbImage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub filename: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psnr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ssim: Option<f64>,
    pub uiqm: f64,
    pub uciqe: f64,
    pub niqe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricMeans {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psnr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ssim: Option<f64>,
    pub uiqm: f64,
    pub uciqe: f64,
    pub niqe: f64,
}

/// Per-image scores in filename order plus their arithmetic means.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    /// Whether PSNR/SSIM were computed against references.
    pub reference: bool,
    pub images: Vec<MetricRow>,
    pub means: MetricMeans,
}

pub const CSV_HEADER: [&str; 6] = ["filename", "psnr", "ssim", "uiqm", "uciqe", "niqe"];

fn stem(name: &str) -> String {
    Path::new(name)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(name)
        .to_string()
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Scores every input; PSNR and SSIM are added when `references` pair with
/// the inputs by filename stem.
pub fn evaluate(
    inputs: &[(String, RgbImage)],
    references: Option<&[(String, RgbImage)]>,
    model: &NiqeModel,
) -> Result<MetricReport> {
    if inputs.is_empty() {
        return Err(Error::Data("no images to evaluate".into()));
    }
    let mut by_stem: BTreeMap<String, &(String, RgbImage)> = BTreeMap::new();
    for item in inputs {
        if by_stem.insert(stem(&item.0), item).is_some() {
            return Err(Error::Data(format!("duplicate input stem {}", stem(&item.0))));
        }
    }
    let refs: Option<BTreeMap<String, &RgbImage>> = references.map(|r| r.iter().map(|(n, i)| (stem(n), i)).collect());
    if let Some(refs) = &refs {
        let orphans: Vec<String> = by_stem
            .keys()
            .filter(|k| !refs.contains_key(*k))
            .chain(refs.keys().filter(|k| !by_stem.contains_key(*k)))
            .cloned()
            .collect();
        if !orphans.is_empty() {
            return Err(Error::Data(format!("unpaired images: {}", orphans.join(", "))));
        }
    }
    let ordered: Vec<(&String, &RgbImage)> = by_stem.values().map(|(n, i)| (n, i)).collect();
    let rows: Vec<Result<MetricRow>> = ordered
        .par_iter()
        .map(|&(name, img)| {
            let reference = refs.as_ref().map(|r| r[&stem(name)]);
            Ok(MetricRow {
                filename: name.clone(),
                psnr: reference.map(|r| psnr(img, r)).transpose()?,
                ssim: reference.map(|r| ssim(img, r)).transpose()?,
                uiqm: uiqm(img),
                uciqe: uciqe(img),
                niqe: niqe_score(img, model)?,
            })
        })
        .collect();
    let images = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let with_ref = refs.is_some();
    let means = MetricMeans {
        psnr: with_ref.then(|| mean(images.iter().filter_map(|r| r.psnr))),
        ssim: with_ref.then(|| mean(images.iter().filter_map(|r| r.ssim))),
        uiqm: mean(images.iter().map(|r| r.uiqm)),
        uciqe: mean(images.iter().map(|r| r.uciqe)),
        niqe: mean(images.iter().map(|r| r.niqe)),
    };
    Ok(MetricReport {
        reference: with_ref,
        images,
        means,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fail = |e: csv::Error| Error::Contract(format!("csv encoding failed: {e}"));
        w.write_record(CSV_HEADER).map_err(fail)?;
        for r in &self.images {
            w.write_record([
                r.filename.clone(),
                cell(r.psnr),
                cell(r.ssim),
                r.uiqm.to_string(),
                r.uciqe.to_string(),
                r.niqe.to_string(),
            ])
            .map_err(fail)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Contract(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Contract(format!("json encoding failed: {e}")))
    }

    /// Writes `path` as CSV and a sibling `.json`.
    pub fn save(&self, csv_path: &Path) -> Result<()> {
        std::fs::write(csv_path, self.to_csv()?).map_err(|e| Error::io(csv_path, e))?;
        let json_path = csv_path.with_extension("json");
        std::fs::write(&json_path, self.to_json()?).map_err(|e| Error::io(&json_path, e))
    }
}
