//! Counting metrics and region-of-interest evaluation.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::Sample;
use crate::density::tiled_sum;
use crate::error::{Error, Result};
use crate::model::{predict, ModelConfig, ModelParams};
use crate::tensor::{Float, Tensor};

/// `(MAE, MSE)` over `(truth, estimate)` pairs, where MSE is the root of the
/// mean squared error.
pub fn metrics(pairs: &[(f64, f64)]) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::Empty("metric pairs"));
    }
    let n = pairs.len() as f64;
    let mae = pairs.iter().map(|(p, q)| (p - q).abs()).sum::<f64>() / n;
    let mse = (pairs.iter().map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / n).sqrt();
    Ok((mae, mse))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub id: String,
    pub truth: f64,
    /// Count of the refined map `Mn`.
    pub estimate: f64,
    /// Count of the initial map `M0`.
    pub initial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub steps: usize,
    pub images: usize,
    pub mae: f64,
    pub mse: f64,
    pub mae_initial: f64,
    pub mse_initial: f64,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn from_rows(steps: usize, rows: Vec<EvalRow>) -> Result<Self> {
        let refined: Vec<(f64, f64)> = rows.iter().map(|r| (r.truth, r.estimate)).collect();
        let initial: Vec<(f64, f64)> = rows.iter().map(|r| (r.truth, r.initial)).collect();
        let (mae, mse) = metrics(&refined)?;
        let (mae_initial, mse_initial) = metrics(&initial)?;
        Ok(Self {
            steps,
            images: rows.len(),
            mae,
            mse,
            mae_initial,
            mse_initial,
            rows,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let id_width = self.rows.iter().map(|r| r.id.len()).max().unwrap_or(0).max(5);
        let mut s = String::new();
        let _ = writeln!(s, "{:<id_width$}  {:>10}  {:>10}  {:>10}", "image", "truth", "M0", "Mn");
        for r in &self.rows {
            let _ = writeln!(s, "{:<id_width$}  {:>10.3}  {:>10.3}  {:>10.3}", r.id, r.truth, r.initial, r.estimate);
        }
        let _ = writeln!(s, "n = {}, images = {}", self.steps, self.images);
        let _ = writeln!(s, "M0: MAE {:.4}  MSE {:.4}", self.mae_initial, self.mse_initial);
        let _ = writeln!(s, "Mn: MAE {:.4}  MSE {:.4}", self.mae, self.mse);
        s
    }
}

fn masked_count(map: &Tensor, roi: Option<&Tensor>) -> Float {
    let (h, w) = (map.shape()[map.shape().len() - 2], map.shape()[map.shape().len() - 1]);
    match roi {
        None => tiled_sum(map.data(), h, w),
        Some(mask) => {
            let masked: Vec<Float> = map.data().iter().zip(mask.data()).map(|(a, b)| a * b).collect();
            tiled_sum(&masked, h, w)
        }
    }
}

/// Runs every sample through `n` refinement steps and compares counts.
///
/// `roi`, when given, holds one mask per sample at density-map resolution
/// (`[h, w]` or `[1, 1, h, w]`); both predicted and ground-truth maps are
/// multiplied by it before counting.
pub fn evaluate(
    params: &ModelParams,
    cfg: &ModelConfig,
    samples: &[Sample],
    n: usize,
    roi: Option<&[Tensor]>,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let (mh, mw) = cfg.map_size();
    if let Some(masks) = roi {
        if masks.len() != samples.len() {
            return Err(Error::dim(
                "evaluate",
                "roi",
                format!("{} masks for {} images", masks.len(), samples.len()),
            ));
        }
        for (i, m) in masks.iter().enumerate() {
            let s = m.shape();
            if s.len() < 2 || s[s.len() - 2..] != [mh, mw] || m.len() != mh * mw {
                return Err(Error::dim(
                    "evaluate",
                    format!("roi #{i}"),
                    format!("mask shape {s:?} does not match the {mh}x{mw} density map"),
                ));
            }
        }
    }
    let rows = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mask = roi.map(|m| &m[i]);
            let (m0, mn, _) = predict(params, cfg, &s.image, n)?;
            Ok(EvalRow {
                id: s.id.clone(),
                truth: masked_count(&s.target, mask) as f64,
                estimate: masked_count(&mn, mask) as f64,
                initial: masked_count(&m0, mask) as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_rows(n, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, samples_from, SceneConfig};
    use crate::train::init_params;

    #[test]
    fn metric_examples() {
        assert_eq!(metrics(&[(5.0, 5.0), (7.0, 7.0)]).unwrap(), (0.0, 0.0));
        let (mae, mse) = metrics(&[(10.0, 13.0), (20.0, 16.0)]).unwrap();
        assert!((mae - 3.5).abs() <= 1e-12);
        assert!((mse - 12.5f64.sqrt()).abs() <= 1e-12);
        let (mae, mse) = metrics(&[(3.0, 7.5)]).unwrap();
        assert_eq!(mae, mse);
        assert!(matches!(metrics(&[]), Err(Error::Empty(_))));
    }

    fn fixture() -> (ModelConfig, ModelParams, Vec<Sample>) {
        let scene = SceneConfig {
            height: 32,
            width: 32,
            count_range: (3, 8),
            ..SceneConfig::default()
        };
        let samples = samples_from(&gen_synthetic(&scene, 3).unwrap(), 2.0, 1).unwrap();
        let cfg = ModelConfig::with_width(32, 32, 0.5);
        let params = init_params(&cfg, 1);
        (cfg, params, samples)
    }

    #[test]
    fn roi_masks() {
        let (cfg, params, samples) = fixture();
        let plain = evaluate(&params, &cfg, &samples, 1, None).unwrap();
        assert!(plain.mae.is_finite() && plain.mae <= plain.mse + 1e-12);
        let ones = vec![Tensor::full(&[4, 4], 1.0); 3];
        assert_eq!(evaluate(&params, &cfg, &samples, 1, Some(&ones)).unwrap(), plain);
        let zeros = vec![Tensor::zeros(&[4, 4]); 3];
        let masked = evaluate(&params, &cfg, &samples, 1, Some(&zeros)).unwrap();
        assert_eq!(masked.mae, 0.0);
        assert!(masked.rows.iter().all(|r| r.truth == 0.0 && r.estimate == 0.0));
        let wrong = vec![Tensor::zeros(&[8, 8]); 3];
        assert!(matches!(
            evaluate(&params, &cfg, &samples, 1, Some(&wrong)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn half_plane_roi_halves_a_mirrored_scene() {
        let (cfg, params, _) = fixture();
        let points = vec![[6.3, 9.1], [25.7, 9.1], [12.0, 20.5], [20.0, 20.5]];
        let ann = crate::Annotation {
            image: "mirror".into(),
            width: 32,
            height: 32,
            points,
        };
        let img = crate::data::Image::new(32, 32, vec![0.0; 1024]).unwrap();
        let sample = Sample::new(&img, ann, 2.0, 1).unwrap();
        let left = Tensor::from_fn(&[4, 4], |i| if i % 4 < 2 { 1.0 } else { 0.0 });
        let report = evaluate(&params, &cfg, &[sample], 0, Some(&[left])).unwrap();
        assert!((report.rows[0].truth - 2.0).abs() < 1e-9, "{}", report.rows[0].truth);
    }

    #[test]
    fn report_exports() {
        let (cfg, params, samples) = fixture();
        let report = evaluate(&params, &cfg, &samples, 0, None).unwrap();
        let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(json["images"], 3);
        assert_eq!(json["rows"].as_array().unwrap().len(), 3);
        let table = report.to_table();
        assert!(table.contains("Mn: MAE"));
        assert_eq!(table.lines().count(), 3 + 4);
    }
}
