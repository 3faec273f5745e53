//! Multiscale fractional anisotropy tensor enhancement.
//!
//! Per scale: Hessian, polarity-adjusted eigenvalues, two cut-off
//! regularizations of the dominant eigenvalue, FAT of the triple
//! `(l2, l_rho, l_nu)`, a gated `1 - FAT` response, and finally the
//! co-addition across scales.
//!
//! Eigenvalues here follow the polarity convention of
//! [`eigen_field`](crate::eigensym::eigen_field): structure voxels carry
//! positive dominant eigenvalues whichever the image polarity.

mod fat;
mod regularize;
mod response;

pub use fat::{fat_lambda, fat_prob, TensorStats};
pub use regularize::{regularize_lambda3, RegularizedEigen};
pub use response::{
    multiscale_combine, response_at_scale_2d, response_at_scale_3d, Provenance, ResponseMap,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigensym::{eigen_field, Polarity};
use crate::error::{Error, Result};
use crate::imagecore::{normalize, Image};
use crate::scalespace::{build_scale_list, hessian_at_scale, ScaleList};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FatMode {
    /// Anisotropy of the eigenvalue triple.
    #[default]
    #[serde(rename = "fat")]
    Eigenvalue,
    /// Anisotropy of the relative axis importances.
    #[serde(rename = "pfat")]
    Probabilistic,
}

impl FatMode {
    pub fn eval(self, l2: f64, l_rho: f64, l_nu: f64) -> f64 {
        match self {
            FatMode::Eigenvalue => fat_lambda(l2, l_rho, l_nu),
            FatMode::Probabilistic => fat_prob(l2, l_rho, l_nu),
        }
    }
}

/// Case structure of the 2D response.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ResponseVariant {
    /// Same cases as the volume response.
    #[default]
    Consistent,
    /// The 2D cases exactly as printed: everything below the maximum gap is
    /// zeroed, so only extremal voxels survive.
    Literal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterParams {
    pub scales: ScaleList,
    pub tau_rho: f64,
    pub tau_nu: f64,
    pub delta: f64,
    pub mode: FatMode,
    pub polarity: Polarity,
    pub response_variant: ResponseVariant,
    /// Multiply second derivatives by sigma^2.
    pub normalize_scale: bool,
    /// Map input intensities onto [0, 1] before filtering.
    pub normalize_input: bool,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            scales: build_scale_list(1.0, 3.0, 5).expect("static scale range"),
            tau_rho: 0.5,
            tau_nu: 0.25,
            delta: 0.5,
            mode: FatMode::Eigenvalue,
            polarity: Polarity::BrightOnDark,
            response_variant: ResponseVariant::Consistent,
            normalize_scale: true,
            normalize_input: true,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        for (name, tau) in [("tau_rho", self.tau_rho), ("tau_nu", self.tau_nu)] {
            if !(0.0..=1.0).contains(&tau) {
                return Err(Error::param(format!("{name} = {tau} outside [0, 1]")));
            }
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(Error::param(format!("delta = {} must be >= 0", self.delta)));
        }
        // re-check in case the list was built by hand
        ScaleList::new(self.scales.sigmas().to_vec())?;
        Ok(())
    }
}

/// Per-scale responses in ascending scale order, before co-addition.
pub fn per_scale_responses(img: &Image, params: &FilterParams) -> Result<Vec<ResponseMap>> {
    params.validate()?;
    let input = if params.normalize_input {
        normalize(img)
    } else {
        img.clone()
    };
    params
        .scales
        .sigmas()
        .iter()
        .map(|&sigma| {
            let h = hessian_at_scale(&input, sigma, params.normalize_scale)?;
            let eig = eigen_field(&h, params.polarity);
            let reg = RegularizedEigen::from_field(&eig, params.tau_rho, params.tau_nu)?;
            let fat: Vec<f64> = (0..reg.len())
                .into_par_iter()
                .map(|i| params.mode.eval(reg.lambda2[i], reg.lambda_rho[i], reg.lambda_nu[i]))
                .collect();
            if input.rank() == 2 {
                response_at_scale_2d(&eig, &reg, &fat, params.response_variant)
            } else {
                response_at_scale_3d(&eig, &reg, &fat)
            }
        })
        .collect()
}

/// Full enhancement pipeline; output values in `[0, 1]`.
pub fn enhance(img: &Image, params: &FilterParams) -> Result<ResponseMap> {
    let per_scale = per_scale_responses(img, params)?;
    Ok(multiscale_combine(&per_scale, params.delta)?.with_provenance(Provenance::Mfat(params.clone())))
}
