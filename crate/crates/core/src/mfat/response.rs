//! Per-scale gated response and the multiscale co-addition.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigensym::EigenField;
use crate::error::{Error, Result};
use crate::imagecore::Image;

use super::regularize::RegularizedEigen;
use super::ResponseVariant;

/// What produced a response map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Provenance {
    Scale { sigma: f64 },
    Combined { scales: usize, delta: f64 },
    Mfat(super::FilterParams),
    Frangi(crate::baselines::FrangiParams),
    External { source: String },
}

/// Enhancement output, values in `[0, 1]`.
#[derive(Clone, Debug)]
pub struct ResponseMap {
    dims: Vec<usize>,
    values: Vec<f64>,
    provenance: Provenance,
}

impl ResponseMap {
    pub fn new(dims: &[usize], values: Vec<f64>, provenance: Provenance) -> Result<Self> {
        let n: usize = dims.iter().product();
        if values.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: values.len(),
            });
        }
        Ok(ResponseMap {
            dims: dims.to_vec(),
            values,
            provenance,
        })
    }

    /// Wraps an image read from disk as a response, rescaled by its intensity range.
    pub fn from_image(img: &Image, source: impl Into<String>) -> Result<Self> {
        let (lo, hi) = img.intensity_range();
        let span = hi - lo;
        let values = img
            .data()
            .iter()
            .map(|&v| if span > 0.0 { (v - lo) / span } else { v })
            .collect();
        ResponseMap::new(img.dims(), values, Provenance::External { source: source.into() })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub(crate) fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn to_image(&self) -> Image {
        Image::new(&self.dims, self.values.clone()).expect("response dims were validated")
    }
}

fn check_inputs(eig: &EigenField, reg: &RegularizedEigen, fat: &[f64]) -> Result<()> {
    let n = eig.len();
    for len in [reg.len(), reg.lambda_rho.len(), reg.lambda_nu.len(), fat.len()] {
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: len,
            });
        }
    }
    if eig.sigma() != reg.sigma {
        return Err(Error::param(format!(
            "eigenvalues at sigma {} paired with regularization at sigma {}",
            eig.sigma(),
            reg.sigma
        )));
    }
    Ok(())
}

/// Background gate: the voxel must carry positive `l2` and positive `l_rho`.
#[inline]
fn passes_gate(l2: f64, l_rho: f64) -> bool {
    l2 > 0.0 && l_rho > 0.0
}

/// Extremes of `l_rho - l2` over the voxels that pass the gate.
fn gap_extremes(reg: &RegularizedEigen) -> (f64, f64) {
    reg.lambda2
        .iter()
        .zip(&reg.lambda_rho)
        .filter(|(&l2, &lr)| passes_gate(l2, lr))
        .map(|(&l2, &lr)| lr - l2)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), g| (lo.min(g), hi.max(g)))
}

fn gated(reg: &RegularizedEigen, fat: &[f64], variant: ResponseVariant) -> Vec<f64> {
    let (gap_min, gap_max) = gap_extremes(reg);
    (0..reg.len())
        .into_par_iter()
        .map(|i| {
            let (l2, lr) = (reg.lambda2[i], reg.lambda_rho[i]);
            if !passes_gate(l2, lr) {
                return 0.0;
            }
            let gap = lr - l2;
            match variant {
                ResponseVariant::Consistent => {
                    if gap == gap_max {
                        1.0
                    } else {
                        (1.0 - fat[i]).clamp(0.0, 1.0)
                    }
                }
                ResponseVariant::Literal => {
                    if gap < gap_max {
                        0.0
                    } else if gap == gap_min {
                        1.0
                    } else {
                        (1.0 - fat[i]).clamp(0.0, 1.0)
                    }
                }
            }
        })
        .collect()
}

/// Volume response at one scale: 0 off the gate, 1 where `l_rho - l2`
/// peaks, `1 - FAT` elsewhere.
pub fn response_at_scale_3d(eig: &EigenField, reg: &RegularizedEigen, fat: &[f64]) -> Result<ResponseMap> {
    if eig.rank() != 3 {
        return Err(Error::param("3D response needs a rank-3 eigen field"));
    }
    check_inputs(eig, reg, fat)?;
    let values = gated(reg, fat, ResponseVariant::Consistent);
    ResponseMap::new(eig.dims(), values, Provenance::Scale { sigma: eig.sigma() })
}

/// Image response at one scale. `Consistent` uses the volume case structure;
/// `Literal` additionally zeroes every voxel below the maximum gap and
/// assigns 1 where the gap equals its minimum.
pub fn response_at_scale_2d(
    eig: &EigenField,
    reg: &RegularizedEigen,
    fat: &[f64],
    variant: ResponseVariant,
) -> Result<ResponseMap> {
    if eig.rank() != 2 {
        return Err(Error::param("2D response needs a rank-2 eigen field"));
    }
    check_inputs(eig, reg, fat)?;
    let values = gated(reg, fat, variant);
    ResponseMap::new(eig.dims(), values, Provenance::Scale { sigma: eig.sigma() })
}

/// Co-adds per-scale responses (ascending scale order):
/// `A = A_prev + delta * tanh(R - delta)` from a zero accumulator, then the
/// per-voxel maximum of every `A` and `R`, clamped to `[0, 1]`.
pub fn multiscale_combine(per_scale: &[ResponseMap], delta: f64) -> Result<ResponseMap> {
    let first = per_scale
        .first()
        .ok_or_else(|| Error::param("no per-scale responses to combine"))?;
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::param(format!("step size must be >= 0, got {delta}")));
    }
    if let Some(bad) = per_scale.iter().find(|r| r.dims() != first.dims()) {
        return Err(Error::DimensionMismatch {
            expected: first.len(),
            actual: bad.len(),
        });
    }
    let values = (0..first.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            let mut best = f64::NEG_INFINITY;
            for r in per_scale {
                let v = r.values[i];
                acc += delta * (v - delta).tanh();
                best = best.max(acc).max(v);
            }
            best.clamp(0.0, 1.0)
        })
        .collect();
    ResponseMap::new(
        first.dims(),
        values,
        Provenance::Combined {
            scales: per_scale.len(),
            delta,
        },
    )
}
