//! Closed-form eigenvalues of symmetric 2x2 and 3x3 tensors.
//!
//! Eigenvalues are returned ordered by ascending magnitude, `|l1| <= |l2| (<= |l3|)`,
//! with equal magnitudes ordered by signed value. Eigenvectors are not computed.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::scalespace::HessianField;

/// Structure polarity relative to the background.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    /// Bright structures on a dark background; eigenvalues are negated.
    #[default]
    BrightOnDark,
    DarkOnBright,
}

impl Polarity {
    pub fn sign(self) -> f64 {
        match self {
            Polarity::BrightOnDark => -1.0,
            Polarity::DarkOnBright => 1.0,
        }
    }
}

#[inline]
fn abs_order(a: f64, b: f64) -> std::cmp::Ordering {
    a.abs()
        .total_cmp(&b.abs())
        .then_with(|| a.total_cmp(&b))
}

#[inline]
fn sort2(a: f64, b: f64) -> (f64, f64) {
    if abs_order(a, b).is_gt() {
        (b, a)
    } else {
        (a, b)
    }
}

pub fn eig_sym2(hxx: f64, hxy: f64, hyy: f64) -> (f64, f64) {
    let mean = 0.5 * (hxx + hyy);
    let radius = (0.5 * (hxx - hyy)).hypot(hxy);
    sort2(mean - radius, mean + radius)
}

pub fn eig_sym3(hxx: f64, hxy: f64, hxz: f64, hyy: f64, hyz: f64, hzz: f64) -> (f64, f64, f64) {
    let mut v = eig_sym3_unsorted(hxx, hxy, hxz, hyy, hyz, hzz);
    v.sort_by(|a, b| abs_order(*a, *b));
    (v[0], v[1], v[2])
}

/// Trigonometric closed form (deviatoric decomposition of the characteristic cubic).
fn eig_sym3_unsorted(a: f64, d: f64, e: f64, b: f64, f: f64, c: f64) -> [f64; 3] {
    let q = (a + b + c) / 3.0;
    let off = d * d + e * e + f * f;
    let (da, db, dc) = (a - q, b - q, c - q);
    let dev2 = da * da + db * db + dc * dc + 2.0 * off;
    if dev2 == 0.0 || dev2.sqrt() < 1e-12 * q.abs() {
        return [q, q, q];
    }
    let p = (dev2 / 6.0).sqrt();
    // B = (A - qI) / p; r = det(B) / 2, clamped to [-1, 1] against rounding
    let (ba, bb, bc, bd, be, bf) = (da / p, db / p, dc / p, d / p, e / p, f / p);
    let det = ba * (bb * bc - bf * bf) - bd * (bd * bc - bf * be) + be * (bd * bf - bb * be);
    let r = (0.5 * det).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
    let mid = 3.0 * q - hi - lo;
    [polish(a, d, e, b, f, c, lo), polish(a, d, e, b, f, c, mid), polish(a, d, e, b, f, c, hi)]
}

/// One guarded Newton step on the characteristic polynomial.
fn polish(a: f64, d: f64, e: f64, b: f64, f: f64, c: f64, x: f64) -> f64 {
    let (p, q, r) = (a - x, b - x, c - x);
    let det = p * (q * r - f * f) - d * (d * r - f * e) + e * (d * f - q * e);
    // d/dx det(A - xI) = -(sum of principal 2x2 minors)
    let deriv = -((q * r - f * f) + (p * r - e * e) + (p * q - d * d));
    if deriv == 0.0 || !deriv.is_finite() {
        return x;
    }
    let step = det / deriv;
    let scale = a.abs().max(b.abs()).max(c.abs()).max(d.abs()).max(e.abs()).max(f.abs());
    if step.abs() <= 1e-8 * scale.max(f64::MIN_POSITIVE) {
        x - step
    } else {
        x
    }
}

/// Per-voxel eigenvalues, stored `rank` values per voxel in magnitude order.
#[derive(Clone, Debug)]
pub struct EigenField {
    dims: Vec<usize>,
    sigma: f64,
    lambdas: Vec<f64>,
    polarity_applied: bool,
}

impl EigenField {
    pub fn from_values(dims: &[usize], sigma: f64, lambdas: Vec<f64>, polarity_applied: bool) -> Self {
        debug_assert_eq!(lambdas.len(), dims.iter().product::<usize>() * dims.len());
        EigenField {
            dims: dims.to_vec(),
            sigma,
            lambdas,
            polarity_applied,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn polarity_applied(&self) -> bool {
        self.polarity_applied
    }

    pub fn len(&self) -> usize {
        self.lambdas.len() / self.rank()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn at(&self, voxel: usize) -> &[f64] {
        let r = self.rank();
        &self.lambdas[voxel * r..(voxel + 1) * r]
    }

    /// The `k`-th (0-based, magnitude order) eigenvalue at every voxel.
    pub fn nth(&self, k: usize) -> Vec<f64> {
        self.lambdas.iter().skip(k).step_by(self.rank()).copied().collect()
    }

    /// Largest-magnitude eigenvalue at every voxel.
    pub fn largest(&self) -> Vec<f64> {
        self.nth(self.rank() - 1)
    }
}

/// Decomposes every voxel's Hessian. With [`Polarity::BrightOnDark`] the
/// eigenvalues are negated before ordering, so bright tubes carry positive
/// large eigenvalues.
pub fn eigen_field(h: &HessianField, polarity: Polarity) -> EigenField {
    let s = polarity.sign();
    let rank = h.rank();
    let c = h.components();
    let mut lambdas = vec![0.0; h.len() * rank];
    if rank == 2 {
        lambdas.par_chunks_mut(2).enumerate().for_each(|(i, out)| {
            let (a, b) = eig_sym2(s * c[0][i], s * c[1][i], s * c[2][i]);
            out[0] = a;
            out[1] = b;
        });
    } else {
        lambdas.par_chunks_mut(3).enumerate().for_each(|(i, out)| {
            let (a, b, l) = eig_sym3(
                s * c[0][i],
                s * c[1][i],
                s * c[2][i],
                s * c[3][i],
                s * c[4][i],
                s * c[5][i],
            );
            out[0] = a;
            out[1] = b;
            out[2] = l;
        });
    }
    EigenField {
        dims: h.dims().to_vec(),
        sigma: h.sigma(),
        lambdas,
        polarity_applied: polarity == Polarity::BrightOnDark,
    }
}
