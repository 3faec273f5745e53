//! Frangi vesselness, the Hessian-based comparison baseline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigensym::{eigen_field, EigenField, Polarity};
use crate::error::{Error, Result};
use crate::imagecore::{normalize, Image};
use crate::mfat::{Provenance, ResponseMap};
use crate::scalespace::{build_scale_list, hessian_at_scale, ScaleList};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrangiParams {
    pub scales: ScaleList,
    /// Plate-vs-line sensitivity (volumes only).
    pub alpha: f64,
    /// Blob-vs-line sensitivity.
    pub beta: f64,
    /// Structureness sensitivity; `None` uses half the maximum Frobenius norm per scale.
    pub c: Option<f64>,
    pub polarity: Polarity,
    pub normalize_scale: bool,
    pub normalize_input: bool,
}

impl Default for FrangiParams {
    fn default() -> Self {
        FrangiParams {
            scales: build_scale_list(1.0, 3.0, 5).expect("static scale range"),
            alpha: 0.5,
            beta: 0.5,
            c: None,
            polarity: Polarity::BrightOnDark,
            normalize_scale: true,
            normalize_input: true,
        }
    }
}

fn vesselness_2d(l: &[f64], beta2: f64, c2: f64) -> f64 {
    let (l1, l2) = (l[0], l[1]);
    if !(l2 > 0.0) {
        return 0.0;
    }
    let rb = l1.abs() / l2.abs();
    let s2 = l1 * l1 + l2 * l2;
    (-rb * rb / beta2).exp() * (1.0 - (-s2 / c2).exp())
}

fn vesselness_3d(l: &[f64], alpha2: f64, beta2: f64, c2: f64) -> f64 {
    let (l1, l2, l3) = (l[0], l[1], l[2]);
    if !(l2 > 0.0) || !(l3 > 0.0) {
        return 0.0;
    }
    let ra = l2.abs() / l3.abs();
    let rb = l1.abs() / (l2.abs() * l3.abs()).sqrt();
    let s2 = l1 * l1 + l2 * l2 + l3 * l3;
    (1.0 - (-ra * ra / alpha2).exp()) * (-rb * rb / beta2).exp() * (1.0 - (-s2 / c2).exp())
}

fn scale_response(eig: &EigenField, params: &FrangiParams) -> Vec<f64> {
    let c = params.c.unwrap_or_else(|| {
        let max_s = (0..eig.len())
            .map(|i| eig.at(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        0.5 * max_s
    });
    if !(c > 0.0) {
        return vec![0.0; eig.len()];
    }
    let (alpha2, beta2, c2) = (
        2.0 * params.alpha * params.alpha,
        2.0 * params.beta * params.beta,
        2.0 * c * c,
    );
    let rank = eig.rank();
    (0..eig.len())
        .into_par_iter()
        .map(|i| {
            let v = if rank == 2 {
                vesselness_2d(eig.at(i), beta2, c2)
            } else {
                vesselness_3d(eig.at(i), alpha2, beta2, c2)
            };
            if v.is_finite() {
                v.clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect()
}

/// Multiscale vesselness: per-voxel maximum over scales, values in `[0, 1]`.
pub fn frangi(img: &Image, params: &FrangiParams) -> Result<ResponseMap> {
    if !(params.alpha > 0.0) || !(params.beta > 0.0) {
        return Err(Error::param("alpha and beta must be positive"));
    }
    if let Some(c) = params.c {
        if !(c > 0.0) {
            return Err(Error::param(format!("c = {c} must be positive")));
        }
    }
    let input = if params.normalize_input {
        normalize(img)
    } else {
        img.clone()
    };
    let mut best = vec![0.0f64; input.len()];
    for &sigma in params.scales.sigmas() {
        let h = hessian_at_scale(&input, sigma, params.normalize_scale)?;
        let eig = eigen_field(&h, params.polarity);
        let v = scale_response(&eig, params);
        best.par_iter_mut().zip(&v).for_each(|(b, x)| *b = b.max(*x));
    }
    ResponseMap::new(input.dims(), best, Provenance::Frangi(params.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band(dims: &[usize]) -> Image {
        Image::from_fn(dims, |i| {
            let r = i[i.len() - 2] as f64 - dims[dims.len() - 2] as f64 / 2.0;
            if r.abs() < 2.0 {
                1.0
            } else {
                0.0
            }
        })
        .unwrap()
    }

    #[test]
    fn constant_is_zero() {
        let r = frangi(&Image::filled(&[24, 24], 3.0).unwrap(), &FrangiParams::default()).unwrap();
        assert!(r.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn line_beats_background() {
        let img = band(&[48, 48]);
        let r = frangi(&img, &FrangiParams::default()).unwrap();
        let center = r.values()[img.offset(&[23, 20])];
        assert!(center > 0.5, "{center}");
        assert_eq!(r.values()[img.offset(&[5, 20])], 0.0);
        assert!(r.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn volume_tube_responds() {
        let img = Image::from_fn(&[20, 20, 20], |i| {
            let (y, x) = (i[1] as f64 - 9.5, i[2] as f64 - 9.5);
            if x * x + y * y < 9.0 {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let r = frangi(&img, &FrangiParams::default()).unwrap();
        assert!(r.values()[img.offset(&[10, 10, 10])] > 0.3);
        assert_eq!(r.values()[img.offset(&[10, 1, 1])], 0.0);
    }

    #[test]
    fn rejects_bad_constants() {
        let img = Image::zeros(&[8, 8]).unwrap();
        let mut p = FrangiParams::default();
        p.beta = 0.0;
        assert!(frangi(&img, &p).is_err());
        let mut p = FrangiParams::default();
        p.c = Some(-1.0);
        assert!(frangi(&img, &p).is_err());
    }
}
