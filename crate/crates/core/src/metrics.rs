//! Semantic style loss: per-region distance between the feature statistics
//! of a stylized output and its style reference.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::semantics::LabelMap;
use crate::tensor::FeatureMap;

/// One region's contribution: euclidean distances between the per-channel
/// mean vectors and between the per-channel std vectors.
#[derive(Debug, Clone, Serialize)]
pub struct RegionSsl {
    pub label: u16,
    pub mean_d: f64,
    pub std_d: f64,
}

/// Loss report. `total` is the average of `mean_d + std_d` over the listed
/// regions; labels present on only one side are skipped and recorded.
#[derive(Debug, Clone, Serialize)]
pub struct SslReport {
    pub total: f64,
    #[serde(rename = "regions")]
    pub per_region: Vec<RegionSsl>,
    #[serde(skip)]
    pub skipped: Vec<u16>,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Computes the loss over every label present in both maps; errors when the
/// maps share no label at all.
pub fn semantic_style_loss(
    f_out: &FeatureMap,
    f_s: &FeatureMap,
    l_out: &LabelMap,
    l_s: &LabelMap,
) -> Result<SslReport> {
    if f_out.height() != l_out.height() || f_out.width() != l_out.width() {
        return Err(Error::ShapeMismatch {
            context: "semantic style loss (output)".into(),
            expected: format!("labels at {}x{}", f_out.height(), f_out.width()),
            got: format!("{}x{}", l_out.height(), l_out.width()),
        });
    }
    if f_s.height() != l_s.height() || f_s.width() != l_s.width() {
        return Err(Error::ShapeMismatch {
            context: "semantic style loss (style)".into(),
            expected: format!("labels at {}x{}", f_s.height(), f_s.width()),
            got: format!("{}x{}", l_s.height(), l_s.width()),
        });
    }
    if f_out.channels() != f_s.channels() {
        return Err(Error::ShapeMismatch {
            context: "semantic style loss".into(),
            expected: format!("{} style channels", f_out.channels()),
            got: f_s.channels().to_string(),
        });
    }
    if l_out.num_labels() != l_s.num_labels() {
        return Err(Error::ShapeMismatch {
            context: "semantic style loss".into(),
            expected: format!("{} labels on both sides", l_out.num_labels()),
            got: l_s.num_labels().to_string(),
        });
    }

    let out_present = l_out.present_labels();
    let s_present = l_s.present_labels();
    let mut per_region = Vec::new();
    let mut skipped = Vec::new();
    for label in 0..l_out.num_labels() as u16 {
        let in_out = out_present.contains(&label);
        let in_s = s_present.contains(&label);
        match (in_out, in_s) {
            (true, true) => {
                let (omean, ostd) = f_out.slice_stats(&l_out.cells_with(label))?;
                let (smean, sstd) = f_s.slice_stats(&l_s.cells_with(label))?;
                per_region.push(RegionSsl {
                    label,
                    mean_d: euclidean(&omean, &smean),
                    std_d: euclidean(&ostd, &sstd),
                });
            }
            (false, false) => {}
            _ => skipped.push(label),
        }
    }
    if per_region.is_empty() {
        return Err(Error::NoSharedLabels);
    }
    let total = per_region
        .iter()
        .map(|r| r.mean_d + r.std_d)
        .sum::<f64>()
        / per_region.len() as f64;
    Ok(SslReport {
        total,
        per_region,
        skipped,
    })
}
