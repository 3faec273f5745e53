//! Dual cut-off regularization of the dominant eigenvalue.

use crate::eigensym::EigenField;
use crate::error::{Error, Result};

/// Floors positive values at `tau * max(field)` and zeroes the rest.
///
/// Per voxel: `v > tau*M` keeps `v`, `0 < v <= tau*M` becomes `tau*M`,
/// anything else becomes 0, where `M` is the maximum over the whole field.
pub fn regularize_lambda3(lambda3: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    let max = lambda3.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = tau * max;
    Ok(lambda3
        .iter()
        .map(|&v| {
            if !(v > 0.0) {
                0.0
            } else if v > floor {
                v
            } else {
                floor
            }
        })
        .collect())
}

fn check_tau(tau: f64) -> Result<()> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(Error::param(format!("cut-off {tau} outside [0, 1]")))
    }
}

/// `l2` alongside the two regularized copies of the dominant eigenvalue at one scale.
#[derive(Clone, Debug)]
pub struct RegularizedEigen {
    pub lambda2: Vec<f64>,
    pub lambda_rho: Vec<f64>,
    pub lambda_nu: Vec<f64>,
    pub sigma: f64,
}

impl RegularizedEigen {
    /// In 3D the regularized eigenvalue is `l3`; in 2D, where there is no
    /// third eigenvalue, the largest-magnitude `l2` takes its place.
    pub fn from_field(eig: &EigenField, tau_rho: f64, tau_nu: f64) -> Result<Self> {
        check_tau(tau_rho)?;
        check_tau(tau_nu)?;
        let lambda2 = eig.nth(1);
        let dominant = eig.largest();
        Ok(RegularizedEigen {
            lambda_rho: regularize_lambda3(&dominant, tau_rho)?,
            lambda_nu: regularize_lambda3(&dominant, tau_nu)?,
            lambda2,
            sigma: eig.sigma(),
        })
    }

    pub fn len(&self) -> usize {
        self.lambda2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda2.is_empty()
    }
}
