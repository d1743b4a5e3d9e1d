//! L1 error between predicted and simulated manifolds.
//!
//! `|.|_1` is normalized per pixel: the error of one tile is the mean
//! absolute difference over the RoE, and the data-set error is the mean
//! of the per-tile errors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::coverage::CoverageManifold;
use crate::{Error, Result};

/// Per-pixel mean absolute difference.
pub fn l1(a: &CoverageManifold, b: &CoverageManifold) -> Result<f64> {
    if a.side() != b.side() {
        return Err(Error::domain(format!(
            "manifold sizes differ: {0}x{0} vs {1}x{1}",
            a.side(),
            b.side()
        )));
    }
    if a.gamma_db() != b.gamma_db() {
        return Err(Error::domain(format!(
            "manifold thresholds differ: {} dB vs {} dB",
            a.gamma_db(),
            b.gamma_db()
        )));
    }
    let sum: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(&x, &y)| (x as f64 - y as f64).abs())
        .sum();
    Ok(sum / a.values().len() as f64)
}

pub fn avg(m: &CoverageManifold) -> f64 {
    m.values().iter().map(|&v| v as f64).sum::<f64>() / m.values().len() as f64
}

/// Mean absolute deviation around the arithmetic mean, taken at f32
/// precision like every stored manifold value. With that rounding the
/// deviation is bit-identical to `l1` against the mean-filled manifold.
pub fn mean_abs_deviation(m: &CoverageManifold) -> f64 {
    let mean = avg(m) as f32 as f64;
    m.values()
        .iter()
        .map(|&v| (mean - v as f64).abs())
        .sum::<f64>()
        / m.values().len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileError {
    pub tile_id: u32,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub predictor: String,
    pub gamma_db: f32,
    #[serde(rename = "K")]
    pub tile_count: usize,
    pub mean_error: f64,
    pub per_tile: Vec<TileError>,
}

/// Data-set L1 error over matching tile ids.
pub fn dataset_error(
    predictor: &str,
    pred: &BTreeMap<u32, CoverageManifold>,
    truth: &BTreeMap<u32, CoverageManifold>,
) -> Result<EvalReport> {
    if truth.is_empty() {
        return Err(Error::domain("no tiles to evaluate"));
    }
    let missing: Vec<u32> = truth
        .keys()
        .filter(|k| !pred.contains_key(k))
        .copied()
        .collect();
    let extra: Vec<u32> = pred
        .keys()
        .filter(|k| !truth.contains_key(k))
        .copied()
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::domain(format!(
            "prediction/truth tile sets differ; missing predictions: {missing:?}, unmatched predictions: {extra:?}"
        )));
    }
    let gammas: BTreeSet<u32> = truth.values().map(|m| m.gamma_db().to_bits()).collect();
    if gammas.len() != 1 {
        return Err(Error::domain("truth manifolds mix several thresholds"));
    }
    let per_tile = truth
        .iter()
        .map(|(&id, t)| {
            Ok(TileError {
                tile_id: id,
                error: l1(&pred[&id], t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_error = per_tile.iter().map(|e| e.error).sum::<f64>() / per_tile.len() as f64;
    Ok(EvalReport {
        predictor: predictor.to_string(),
        gamma_db: truth.values().next().expect("non-empty").gamma_db(),
        tile_count: per_tile.len(),
        mean_error,
        per_tile,
    })
}

/// Aligned text table: one row per predictor, one column per threshold.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut gammas: Vec<f32> = Vec::new();
    let mut predictors: Vec<&str> = Vec::new();
    for r in reports {
        if !gammas.contains(&r.gamma_db) {
            gammas.push(r.gamma_db);
        }
        if !predictors.contains(&r.predictor.as_str()) {
            predictors.push(&r.predictor);
        }
    }
    gammas.sort_by(f32::total_cmp);
    let name_w = predictors
        .iter()
        .map(|p| p.len())
        .chain([5])
        .max()
        .unwrap_or(5);

    let mut out = String::new();
    let _ = write!(out, "{:<name_w$}", "gamma");
    for g in &gammas {
        let _ = write!(out, " | {:>9}", format!("{g} dB"));
    }
    out.push('\n');
    out.push_str(&"-".repeat(name_w + gammas.len() * 12));
    out.push('\n');
    for p in &predictors {
        let _ = write!(out, "{p:<name_w$}");
        for g in &gammas {
            match reports
                .iter()
                .find(|r| r.predictor == *p && r.gamma_db == *g)
            {
                Some(r) => {
                    let _ = write!(out, " | {:>9.4}", r.mean_error);
                }
                None => {
                    let _ = write!(out, " | {:>9}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}
