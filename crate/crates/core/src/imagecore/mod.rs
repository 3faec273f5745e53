//! Scalar images and volumes.
//!
//! An [`Image`] is a rank-2 or rank-3 field of `f64` intensities stored in
//! row-major order: `dims` lists the extents slowest axis first, so a 2D
//! image is `[rows, cols]` and a volume is `[slices, rows, cols]`.

mod io;
mod nrrd;
mod pnm;

pub use io::{load_image, save_image, FormatHint};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    dims: Vec<usize>,
    data: Vec<f64>,
    spacing: Vec<f64>,
    intensity_range: (f64, f64),
}

impl Image {
    /// Wraps `data` as an image of extent `dims` (slowest axis first).
    pub fn new(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        let expected: usize = dims.iter().product();
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(Image {
            dims: dims.to_vec(),
            data,
            spacing: vec![1.0; dims.len()],
            intensity_range: (0.0, 1.0),
        })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        let n = dims.iter().product();
        Image::new(dims, vec![0.0; n])
    }

    pub fn filled(dims: &[usize], value: f64) -> Result<Self> {
        let n = dims.iter().product();
        Image::new(dims, vec![value; n])
    }

    /// Builds an image by evaluating `f` at every voxel index (slowest axis first).
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        check_dims(dims)?;
        let n: usize = dims.iter().product();
        let mut idx = vec![0usize; dims.len()];
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f(&idx));
            for axis in (0..dims.len()).rev() {
                idx[axis] += 1;
                if idx[axis] < dims[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }
        Image::new(dims, data)
    }

    pub fn with_spacing(mut self, spacing: &[f64]) -> Result<Self> {
        if spacing.len() != self.dims.len() || spacing.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::param(format!(
                "spacing {spacing:?} must have one positive entry per axis"
            )));
        }
        self.spacing = spacing.to_vec();
        Ok(self)
    }

    /// Records the value range that integer encoders map onto their full code range.
    pub fn with_intensity_range(mut self, lo: f64, hi: f64) -> Self {
        self.intensity_range = (lo, hi);
        self
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Value range of the source encoding. Integer files record `(0, max code)`;
    /// images built in memory default to `(0, 1)`.
    pub fn intensity_range(&self) -> (f64, f64) {
        self.intensity_range
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        idx.iter()
            .zip(&self.dims)
            .fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    /// Inverse of [`Image::offset`].
    pub fn unravel(&self, mut offset: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims.len()];
        for axis in (0..self.dims.len()).rev() {
            idx[axis] = offset % self.dims[axis];
            offset /= self.dims[axis];
        }
        idx
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            spacing: self.spacing.clone(),
            intensity_range: self.intensity_range,
        }
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Replaces the voxel values, keeping geometry metadata.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Image> {
        if data.len() != self.data.len() {
            return Err(Error::DimensionMismatch {
                expected: self.data.len(),
                actual: data.len(),
            });
        }
        Ok(Image {
            dims: self.dims.clone(),
            data,
            spacing: self.spacing.clone(),
            intensity_range: self.intensity_range,
        })
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.dims == other.dims
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() != 2 && dims.len() != 3 {
        return Err(Error::param(format!(
            "image rank must be 2 or 3, got {}",
            dims.len()
        )));
    }
    if dims.contains(&0) {
        return Err(Error::param(format!("image extent {dims:?} has an empty axis")));
    }
    Ok(())
}

/// Affine map of the value range onto `[0, 1]`. A constant image maps to zeros.
pub fn normalize(img: &Image) -> Image {
    let (lo, hi) = img.min_max();
    let range = hi - lo;
    let data = if range > 0.0 && range.is_finite() {
        img.data.iter().map(|&v| (v - lo) / range).collect()
    } else {
        vec![0.0; img.len()]
    };
    Image {
        dims: img.dims.clone(),
        data,
        spacing: img.spacing.clone(),
        intensity_range: (0.0, 1.0),
    }
}
