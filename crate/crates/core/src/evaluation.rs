//! ROC/AUC scoring against binary ground truth, line profiles, and
//! junction/centerline uniformity metrics on phantoms.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::Image;
use crate::mfat::ResponseMap;
use crate::phantom::Phantom;

/// Number of points on the shared FPR grid used for mean ROC curves.
pub const MEAN_ROC_GRID: usize = 1001;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC sweep from `(0, 0)` at threshold `+inf` to `(1, 1)` at `-inf`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

fn check_dims(expected: &[usize], got: &[usize]) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            expected: expected.iter().product(),
            actual: got.iter().product(),
        });
    }
    Ok(())
}

/// Exact ROC over every distinct response value; a voxel is called positive
/// when its response is `>= threshold`. Ground truth and mask are nonzero =
/// true. Tied positive/negative pairs count one half, so the AUC equals the
/// Mann-Whitney statistic.
pub fn roc(response: &ResponseMap, gt: &Image, mask: Option<&Image>) -> Result<RocCurve> {
    check_dims(response.dims(), gt.dims())?;
    if let Some(m) = mask {
        check_dims(response.dims(), m.dims())?;
    }
    let mut samples: Vec<(f64, bool)> = Vec::with_capacity(response.len());
    for (i, (&r, &g)) in response.values().iter().zip(gt.data()).enumerate() {
        if mask.is_some_and(|m| m.data()[i] == 0.0) {
            continue;
        }
        if r.is_nan() {
            return Err(Error::Degenerate(format!("response is NaN at voxel {i}")));
        }
        samples.push((r, g != 0.0));
    }
    let n_pos = samples.iter().filter(|s| s.1).count();
    let n_neg = samples.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Degenerate(format!(
            "ROC needs positive and negative voxels, got {n_pos} and {n_neg}"
        )));
    }
    samples.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0u128, 0u128);
    // twice the area, in units of one pos/neg pair
    let mut area2 = 0u128;
    let mut i = 0;
    while i < samples.len() {
        let v = samples[i].0;
        let (mut dtp, mut dfp) = (0u128, 0u128);
        while i < samples.len() && samples[i].0 == v {
            if samples[i].1 {
                dtp += 1;
            } else {
                dfp += 1;
            }
            i += 1;
        }
        area2 += dfp * (2 * tp + dtp);
        tp += dtp;
        fp += dfp;
        points.push(RocPoint {
            threshold: v,
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
        });
    }
    points.push(RocPoint {
        threshold: f64::NEG_INFINITY,
        fpr: 1.0,
        tpr: 1.0,
    });
    let auc = area2 as f64 / (2 * n_pos as u128 * n_neg as u128) as f64;
    Ok(RocCurve {
        points,
        auc,
        n_pos,
        n_neg,
    })
}

/// TPR of `curve` at false-positive rate `f`, taking the upper value on
/// vertical segments and interpolating linearly elsewhere.
fn tpr_at(curve: &RocCurve, f: f64) -> f64 {
    let pts = &curve.points;
    let mut best: Option<f64> = None;
    for p in pts.iter().filter(|p| p.fpr == f) {
        best = Some(best.map_or(p.tpr, |b: f64| b.max(p.tpr)));
    }
    if let Some(b) = best {
        return b;
    }
    let j = pts.iter().position(|p| p.fpr > f).unwrap_or(pts.len() - 1);
    let (a, b) = (pts[j - 1], pts[j]);
    a.tpr + (b.tpr - a.tpr) * (f - a.fpr) / (b.fpr - a.fpr)
}

/// Vertically averaged ROC on a uniform grid of [`MEAN_ROC_GRID`] FPR values.
/// Returns `(fpr, mean_tpr)` pairs.
pub fn mean_roc(curves: &[RocCurve]) -> Result<Vec<(f64, f64)>> {
    if curves.is_empty() {
        return Err(Error::param("mean ROC needs at least one curve"));
    }
    Ok((0..MEAN_ROC_GRID)
        .map(|k| {
            let f = k as f64 / (MEAN_ROC_GRID - 1) as f64;
            let t = curves.iter().map(|c| tpr_at(c, f)).sum::<f64>() / curves.len() as f64;
            (f, t)
        })
        .collect())
}

/// Trapezoidal area under a list of `(fpr, tpr)` pairs.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

fn fmt_threshold(t: f64) -> String {
    if t == f64::INFINITY {
        "inf".into()
    } else if t == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{t}")
    }
}

/// `threshold,fpr,tpr` rows followed by an `auc,<value>,` summary row.
pub fn write_roc_csv(curve: &RocCurve, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "threshold,fpr,tpr")?;
    for p in &curve.points {
        writeln!(out, "{},{},{}", fmt_threshold(p.threshold), p.fpr, p.tpr)?;
    }
    writeln!(out, "auc,{:.12},", curve.auc)
}

/// `fpr,tpr` rows of a mean ROC followed by an `auc,<value>` summary row.
pub fn write_mean_roc_csv(points: &[(f64, f64)], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "fpr,tpr")?;
    for (f, t) in points {
        writeln!(out, "{f},{t}")?;
    }
    writeln!(out, "auc,{:.12}", trapezoid_area(points))
}

/// Multilinear interpolation at a continuous index-space point.
fn sample(values: &[f64], dims: &[usize], p: &[f64]) -> f64 {
    let rank = dims.len();
    let mut base = vec![0usize; rank];
    let mut frac = vec![0.0; rank];
    for k in 0..rank {
        let f = p[k].floor();
        let i = (f as usize).min(dims[k] - 1);
        base[k] = i;
        frac[k] = if i + 1 < dims[k] { p[k] - i as f64 } else { 0.0 };
    }
    let mut acc = 0.0;
    for corner in 0..(1usize << rank) {
        let mut w = 1.0;
        let mut off = 0;
        for k in 0..rank {
            let hi = corner >> (rank - 1 - k) & 1 == 1;
            let idx = if hi { (base[k] + 1).min(dims[k] - 1) } else { base[k] };
            w *= if hi { frac[k] } else { 1.0 - frac[k] };
            off = off * dims[k] + idx;
        }
        if w != 0.0 {
            acc += w * values[off];
        }
    }
    acc
}

/// Evenly spaced samples from `start` to `end` (both included), given as
/// index-space coordinates in axis order where integer values land on voxels.
pub fn profile(response: &ResponseMap, start: &[f64], end: &[f64], n_samples: usize) -> Result<Vec<f64>> {
    let dims = response.dims();
    for p in [start, end] {
        if p.len() != dims.len() {
            return Err(Error::param(format!(
                "profile endpoint {p:?} needs {} coordinates",
                dims.len()
            )));
        }
        for (k, &c) in p.iter().enumerate() {
            if !(c >= 0.0 && c <= (dims[k] - 1) as f64) {
                return Err(Error::param(format!("profile endpoint {p:?} lies outside {dims:?}")));
            }
        }
    }
    if n_samples == 0 {
        return Err(Error::param("profile needs at least one sample"));
    }
    Ok((0..n_samples)
        .map(|s| {
            let t = if n_samples == 1 { 0.0 } else { s as f64 / (n_samples - 1) as f64 };
            let p: Vec<f64> = start.iter().zip(end).map(|(a, b)| a + t * (b - a)).collect();
            sample(response.values(), dims, &p)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JunctionMetrics {
    /// Mean response over junction voxels divided by the centerline median.
    pub junction_ratio: f64,
    /// Population standard deviation over mean of centerline responses.
    pub centerline_cv: f64,
}

pub fn centerline_values(response: &ResponseMap, phantom: &Phantom) -> Result<Vec<f64>> {
    check_dims(response.dims(), phantom.centerline.dims())?;
    let vals: Vec<f64> = response
        .values()
        .iter()
        .zip(phantom.centerline.data())
        .filter(|(_, &c)| c != 0.0)
        .map(|(&v, _)| v)
        .collect();
    if vals.is_empty() {
        return Err(Error::Degenerate("phantom has an empty centerline".into()));
    }
    Ok(vals)
}

pub fn coefficient_of_variation(vals: &[f64]) -> f64 {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if mean == 0.0 {
        if var == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        var.sqrt() / mean
    }
}

pub fn median(vals: &[f64]) -> f64 {
    let mut v = vals.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn junction_metrics(response: &ResponseMap, phantom: &Phantom) -> Result<JunctionMetrics> {
    let center = centerline_values(response, phantom)?;
    let junctions = &phantom.descriptor.junctions;
    if junctions.is_empty() {
        return Err(Error::Degenerate("phantom has no junction voxels".into()));
    }
    let at_junction = junctions
        .iter()
        .map(|&o| {
            response.values().get(o).copied().ok_or(Error::DimensionMismatch {
                expected: response.len(),
                actual: o + 1,
            })
        })
        .sum::<Result<f64>>()?
        / junctions.len() as f64;
    let med = median(&center);
    if med == 0.0 {
        return Err(Error::Degenerate("centerline median response is zero".into()));
    }
    Ok(JunctionMetrics {
        junction_ratio: at_junction / med,
        centerline_cv: coefficient_of_variation(&center),
    })
}
