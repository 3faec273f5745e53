//! Gaussian scale space: separable second derivatives and Hessian assembly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::Image;

/// Strictly increasing list of positive scales, in voxels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ScaleList(Vec<f64>);

impl ScaleList {
    pub fn new(sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(Error::param("scale list is empty"));
        }
        if sigmas.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::param(format!("scales must be positive and finite: {sigmas:?}")));
        }
        if sigmas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param(format!("scales must be strictly increasing: {sigmas:?}")));
        }
        Ok(ScaleList(sigmas))
    }

    /// `min, min+step, ..., <= max`; the `min:step:max` command-line form.
    pub fn from_step(min: f64, step: f64, max: f64) -> Result<Self> {
        if !(step > 0.0) || !(min > 0.0) || max < min {
            return Err(Error::param(format!(
                "scale range {min}:{step}:{max} needs 0 < min <= max and step > 0"
            )));
        }
        let count = ((max - min) / step + 1e-9).floor() as usize + 1;
        ScaleList::new((0..count).map(|i| min + step * i as f64).collect())
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for ScaleList {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ScaleList::new(v)
    }
}

impl From<ScaleList> for Vec<f64> {
    fn from(s: ScaleList) -> Self {
        s.0
    }
}

/// `count` linearly spaced scales from `sigma_min` to `sigma_max` inclusive.
pub fn build_scale_list(sigma_min: f64, sigma_max: f64, count: usize) -> Result<ScaleList> {
    if !(sigma_min > 0.0) || sigma_max < sigma_min || count == 0 {
        return Err(Error::param(format!(
            "need 0 < sigma_min <= sigma_max and count >= 1, got ({sigma_min}, {sigma_max}, {count})"
        )));
    }
    if count == 1 {
        return ScaleList::new(vec![sigma_min]);
    }
    let span = sigma_max - sigma_min;
    let last = (count - 1) as f64;
    let mut sigmas: Vec<f64> = (0..count)
        .map(|i| sigma_min + span * i as f64 / last)
        .collect();
    sigmas[count - 1] = sigma_max;
    ScaleList::new(sigmas)
}

/// Sampled Gaussian and its first two derivatives on `[-radius, radius]`.
///
/// The smoothing kernel sums to one. The derivative kernels are corrected so
/// that their discrete moments match the continuous ones: `g1` has first
/// moment -1, `g2` has zero sum and second moment 2. This makes constants
/// and linear ramps produce exactly zero second derivative.
#[derive(Clone, Debug)]
pub struct GaussianKernels {
    pub radius: usize,
    pub g0: Vec<f64>,
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
}

impl GaussianKernels {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::param(format!("sigma must be positive, got {sigma}")));
        }
        let radius = (4.0 * sigma).ceil() as usize;
        let s2 = sigma * sigma;
        let offsets: Vec<f64> = (0..=2 * radius).map(|i| i as f64 - radius as f64).collect();

        let mut g0: Vec<f64> = offsets.iter().map(|x| (-x * x / (2.0 * s2)).exp()).collect();
        let sum0: f64 = g0.iter().sum();
        g0.iter_mut().for_each(|v| *v /= sum0);

        let mut g1: Vec<f64> = offsets.iter().zip(&g0).map(|(x, g)| -x / s2 * g).collect();
        let m1: f64 = offsets.iter().zip(&g1).map(|(x, g)| x * g).sum();
        g1.iter_mut().for_each(|v| *v /= -m1);

        let mut g2: Vec<f64> = offsets
            .iter()
            .zip(&g0)
            .map(|(x, g)| (x * x / (s2 * s2) - 1.0 / s2) * g)
            .collect();
        let sum2: f64 = g2.iter().sum();
        g2.iter_mut().zip(&g0).for_each(|(v, g)| *v -= sum2 * g);
        let m2: f64 = offsets.iter().zip(&g2).map(|(x, g)| x * x * g).sum();
        g2.iter_mut().for_each(|v| *v *= 2.0 / m2);

        Ok(GaussianKernels { radius, g0, g1, g2 })
    }

    pub fn order(&self, order: usize) -> &[f64] {
        match order {
            0 => &self.g0,
            1 => &self.g1,
            2 => &self.g2,
            _ => panic!("derivative order {order} not sampled"),
        }
    }
}

/// Reflect-without-repeat boundary: `-1 -> 1`, `n -> n-2`.
#[inline]
pub fn mirror_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Convolves `data` (row-major, extent `dims`) with `kernel` along `axis`.
pub fn convolve_axis(data: &[f64], dims: &[usize], axis: usize, kernel: &[f64]) -> Vec<f64> {
    let n = dims[axis];
    let inner: usize = dims[axis + 1..].iter().product();
    let radius = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; data.len()];

    if inner == 1 {
        out.par_chunks_mut(n)
            .zip(data.par_chunks(n))
            .for_each(|(dst, src)| {
                for (i, o) in dst.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (k, w) in kernel.iter().enumerate() {
                        let j = mirror_index(i as isize + radius - k as isize, n);
                        acc += w * src[j];
                    }
                    *o = acc;
                }
            });
        return out;
    }

    let block = n * inner;
    out.par_chunks_mut(block)
        .zip(data.par_chunks(block))
        .for_each(|(dst, src)| {
            dst.par_chunks_mut(inner).enumerate().for_each(|(t, row)| {
                for (k, w) in kernel.iter().enumerate() {
                    let j = mirror_index(t as isize + radius - k as isize, n);
                    let src_row = &src[j * inner..(j + 1) * inner];
                    for (o, s) in row.iter_mut().zip(src_row) {
                        *o += w * s;
                    }
                }
            });
        });
    out
}

/// Separable Gaussian smoothing; `sigma == 0` returns a copy.
pub fn gaussian_smooth(img: &Image, sigma: f64) -> Result<Image> {
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let k = GaussianKernels::new(sigma)?;
    let mut data = img.data().to_vec();
    for axis in 0..img.rank() {
        data = convolve_axis(&data, img.dims(), axis, &k.g0);
    }
    img.with_data(data)
}

/// Upper triangle of the per-voxel Hessian at one scale.
///
/// Component order is `xx, xy, yy` in 2D and `xx, xy, xz, yy, yz, zz` in 3D,
/// where `x` is the fastest (last) axis.
#[derive(Clone, Debug)]
pub struct HessianField {
    dims: Vec<usize>,
    sigma: f64,
    normalized: bool,
    components: Vec<Vec<f64>>,
}

impl HessianField {
    pub fn from_components(
        dims: &[usize],
        sigma: f64,
        normalized: bool,
        components: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let want = match dims.len() {
            2 => 3,
            3 => 6,
            r => return Err(Error::param(format!("Hessian rank {r} unsupported"))),
        };
        let n: usize = dims.iter().product();
        if components.len() != want {
            return Err(Error::param(format!(
                "rank-{} Hessian needs {want} components, got {}",
                dims.len(),
                components.len()
            )));
        }
        if let Some(c) = components.iter().find(|c| c.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: c.len(),
            });
        }
        Ok(HessianField {
            dims: dims.to_vec(),
            sigma,
            normalized,
            components,
        })
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

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.components[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.components[i]
    }

    /// Trace (Laplacian) at every voxel.
    pub fn trace(&self) -> Vec<f64> {
        let diag: &[usize] = if self.rank() == 2 { &[0, 2] } else { &[0, 3, 5] };
        (0..self.len())
            .map(|i| diag.iter().map(|&c| self.components[c][i]).sum())
            .collect()
    }
}

/// Second derivatives smaller than this fraction of `max|input| / sigma^2`
/// are set to zero.
pub const ROUNDOFF_FLOOR: f64 = 1e-12;

/// Gaussian second derivatives of `img` at scale `sigma`, optionally scaled by `sigma^2`.
pub fn hessian_at_scale(img: &Image, sigma: f64, normalize_scale: bool) -> Result<HessianField> {
    let k = GaussianKernels::new(sigma)?;
    let dims = img.dims();
    let rank = img.rank();
    let conv = |data: &[f64], axis: usize, order: usize| convolve_axis(data, dims, axis, k.order(order));

    let x_axis = rank - 1;
    let y_axis = rank - 2;
    let x: Vec<Vec<f64>> = (0..3).map(|o| conv(img.data(), x_axis, o)).collect();
    // (x order, y order) pairs with total order <= 2
    let xy = |ox: usize, oy: usize| conv(&x[ox], y_axis, oy);

    let mut components = if rank == 2 {
        vec![xy(2, 0), xy(1, 1), xy(0, 2)]
    } else {
        let a20 = xy(2, 0);
        let a11 = xy(1, 1);
        let a10 = xy(1, 0);
        let a02 = xy(0, 2);
        let a01 = xy(0, 1);
        let a00 = xy(0, 0);
        vec![
            conv(&a20, 0, 0),
            conv(&a11, 0, 0),
            conv(&a10, 0, 1),
            conv(&a02, 0, 0),
            conv(&a01, 0, 1),
            conv(&a00, 0, 2),
        ]
    };
    // exact cancellation (flat or linear regions) leaves rounding residue
    let peak = img.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = ROUNDOFF_FLOOR * peak / (sigma * sigma);
    components
        .par_iter_mut()
        .for_each(|c| c.iter_mut().filter(|v| v.abs() <= floor).for_each(|v| *v = 0.0));
    if normalize_scale {
        let s2 = sigma * sigma;
        components
            .par_iter_mut()
            .for_each(|c| c.iter_mut().for_each(|v| *v *= s2));
    }
    HessianField::from_components(dims, sigma, normalize_scale, components)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct (non-separable) 2D convolution with an explicit outer-product kernel.
    fn direct_2d(img: &Image, ky: &[f64], kx: &[f64]) -> Vec<f64> {
        let (rows, cols) = (img.dims()[0], img.dims()[1]);
        let r = (kx.len() / 2) as isize;
        let mut out = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                let mut acc = 0.0;
                for (a, wy) in ky.iter().enumerate() {
                    let si = mirror_index(i as isize + r - a as isize, rows);
                    for (b, wx) in kx.iter().enumerate() {
                        let sj = mirror_index(j as isize + r - b as isize, cols);
                        acc += wy * wx * img.get(&[si, sj]);
                    }
                }
                out[i * cols + j] = acc;
            }
        }
        out
    }

    fn random_image(dims: &[usize], seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = dims.iter().product();
        Image::new(dims, (0..n).map(|_| rng.gen::<f64>()).collect()).unwrap()
    }

    #[test]
    fn scale_lists() {
        assert_eq!(build_scale_list(1.0, 3.0, 3).unwrap().sigmas(), &[1.0, 2.0, 3.0]);
        assert_eq!(build_scale_list(2.0, 2.0, 1).unwrap().sigmas(), &[2.0]);
        assert_eq!(
            build_scale_list(0.5, 2.5, 5).unwrap().sigmas(),
            &[0.5, 1.0, 1.5, 2.0, 2.5]
        );
        assert!(build_scale_list(0.0, 1.0, 2).is_err());
        assert!(build_scale_list(2.0, 1.0, 2).is_err());
        assert!(build_scale_list(1.0, 2.0, 0).is_err());
        assert!(build_scale_list(2.0, 2.0, 3).is_err());
        assert_eq!(
            ScaleList::from_step(1.0, 0.5, 3.0).unwrap().sigmas(),
            &[1.0, 1.5, 2.0, 2.5, 3.0]
        );
        assert!(ScaleList::new(vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn mirror_reflects_without_repeat() {
        let got: Vec<usize> = (-4..9).map(|i| mirror_index(i, 5)).collect();
        assert_eq!(got, vec![4, 3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1, 0]);
        assert_eq!(mirror_index(-7, 1), 0);
    }

    #[test]
    fn kernel_moments() {
        for sigma in [0.5, 1.0, 2.3, 4.0] {
            let k = GaussianKernels::new(sigma).unwrap();
            assert_eq!(k.radius, (4.0 * sigma).ceil() as usize);
            let r = k.radius as f64;
            let x = |i: usize| i as f64 - r;
            assert!((k.g0.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!(k.g1.iter().sum::<f64>().abs() < 1e-14);
            let m1: f64 = k.g1.iter().enumerate().map(|(i, g)| x(i) * g).sum();
            assert!((m1 + 1.0).abs() < 1e-13);
            assert!(k.g2.iter().sum::<f64>().abs() < 1e-14);
            let m2: f64 = k.g2.iter().enumerate().map(|(i, g)| x(i) * x(i) * g).sum();
            assert!((m2 - 2.0).abs() < 1e-12);
        }
        assert!(GaussianKernels::new(0.0).is_err());
        assert!(GaussianKernels::new(-1.0).is_err());
    }

    #[test]
    fn constant_image_gives_zero_hessian() {
        for dims in [&[20usize, 30][..], &[9, 10, 11][..]] {
            let img = Image::filled(dims, 3.7).unwrap();
            let h = hessian_at_scale(&img, 1.5, true).unwrap();
            for c in h.components() {
                assert!(c.iter().all(|v| v.abs() < 1e-12));
            }
        }
    }

    #[test]
    fn linear_ramp_has_no_second_derivative_inside() {
        let img = Image::from_fn(&[40, 40], |i| 0.25 * i[1] as f64 - 0.1 * i[0] as f64).unwrap();
        let sigma = 2.0;
        let h = hessian_at_scale(&img, sigma, false).unwrap();
        let m = (4.0 * sigma).ceil() as usize;
        for i in m..40 - m {
            for j in m..40 - m {
                let o = img.offset(&[i, j]);
                for c in h.components() {
                    assert!(c[o].abs() < 1e-9, "{}", c[o]);
                }
            }
        }
    }

    #[test]
    fn separable_matches_direct_convolution() {
        let img = random_image(&[64, 64], 3);
        for sigma in [1.0, 2.0, 4.0] {
            let k = GaussianKernels::new(sigma).unwrap();
            let h = hessian_at_scale(&img, sigma, false).unwrap();
            let want = [
                direct_2d(&img, &k.g0, &k.g2),
                direct_2d(&img, &k.g1, &k.g1),
                direct_2d(&img, &k.g2, &k.g0),
            ];
            for (got, want) in h.components().iter().zip(&want) {
                let diff = got
                    .iter()
                    .zip(want)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(diff < 1e-6, "sigma {sigma}: {diff}");
            }
        }
    }

    #[test]
    fn second_derivative_of_quadratic() {
        // f = y^2/2 + 3xy has Hxx = 0, Hxy = 3, Hyy = 1 everywhere inside.
        let img = Image::from_fn(&[30, 30], |i| {
            let (y, x) = (i[0] as f64, i[1] as f64);
            0.5 * y * y + 3.0 * x * y
        })
        .unwrap();
        let h = hessian_at_scale(&img, 1.0, false).unwrap();
        let o = img.offset(&[15, 15]);
        assert!(h.component(0)[o].abs() < 1e-9);
        assert!((h.component(1)[o] - 3.0).abs() < 1e-9);
        assert!((h.component(2)[o] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn linearity() {
        let a = random_image(&[24, 20], 1);
        let b = random_image(&[24, 20], 2);
        let combo = Image::new(
            a.dims(),
            a.data().iter().zip(b.data()).map(|(x, y)| 2.5 * x - 0.75 * y).collect(),
        )
        .unwrap();
        let ha = hessian_at_scale(&a, 1.3, true).unwrap();
        let hb = hessian_at_scale(&b, 1.3, true).unwrap();
        let hc = hessian_at_scale(&combo, 1.3, true).unwrap();
        for c in 0..3 {
            for i in 0..a.len() {
                let want = 2.5 * ha.component(c)[i] - 0.75 * hb.component(c)[i];
                assert!((hc.component(c)[i] - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn isotropic_blob_is_rotationally_consistent() {
        let img = Image::from_fn(&[41, 41], |i| {
            let (y, x) = (i[0] as f64 - 20.0, i[1] as f64 - 20.0);
            (-(x * x + y * y) / (2.0 * 9.0)).exp()
        })
        .unwrap();
        let h = hessian_at_scale(&img, 2.0, true).unwrap();
        let o = img.offset(&[20, 20]);
        assert!((h.component(0)[o] - h.component(2)[o]).abs() < 1e-6);
        assert!(h.component(1)[o].abs() < 1e-6);
        assert!(h.component(0)[o] < 0.0);
    }

    #[test]
    fn trace_equals_laplacian_of_gaussian() {
        let img = random_image(&[32, 28], 9);
        let k = GaussianKernels::new(1.5).unwrap();
        let h = hessian_at_scale(&img, 1.5, false).unwrap();
        let log: Vec<f64> = direct_2d(&img, &k.g0, &k.g2)
            .iter()
            .zip(direct_2d(&img, &k.g2, &k.g0))
            .map(|(a, b)| a + b)
            .collect();
        for (t, l) in h.trace().iter().zip(&log) {
            assert!((t - l).abs() < 1e-9);
        }
    }

    #[test]
    fn volume_hessian_matches_per_axis_passes() {
        let img = random_image(&[10, 12, 14], 4);
        let k = GaussianKernels::new(1.0).unwrap();
        let h = hessian_at_scale(&img, 1.0, false).unwrap();
        // Hyz: g1 along z and y, g0 along x, applied in a different pass order.
        let mut d = convolve_axis(img.data(), img.dims(), 0, &k.g1);
        d = convolve_axis(&d, img.dims(), 2, &k.g0);
        d = convolve_axis(&d, img.dims(), 1, &k.g1);
        for (a, b) in h.component(4).iter().zip(&d) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scale_normalization_multiplies_by_sigma_squared() {
        let img = random_image(&[16, 16], 8);
        let raw = hessian_at_scale(&img, 2.0, false).unwrap();
        let norm = hessian_at_scale(&img, 2.0, true).unwrap();
        assert!(norm.normalized() && !raw.normalized());
        for (a, b) in raw.component(1).iter().zip(norm.component(1)) {
            assert_eq!(a * 4.0, *b);
        }
    }
}
