//! Synthetic ground-truthed phantoms: straight tubes, junctions, crossings,
//! disks and random capsule trees, plus the noise-and-blur degradation.
//!
//! Geometry lives in continuous voxel coordinates where voxel `i` covers
//! `[i, i + 1)` along each axis (center `i + 0.5`), axes ordered like the
//! image dims. Structures are bright (1) on a dark (0) background. Voxels
//! straddling a boundary get their area/volume coverage from a 4-per-axis
//! supersampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::Image;
use crate::scalespace::gaussian_smooth;

/// Gaussian noise variance on the 0-255 intensity scale.
pub const DEFAULT_NOISE_VARIANCE: f64 = 10.0;
/// Post-noise Gaussian smoothing, in voxels.
pub const DEFAULT_SMOOTH_SIGMA: f64 = 1.0;

const SUPERSAMPLE: usize = 4;

/// A line segment with a radius; its union with end spheres is a capsule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Capsule {
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub radius: f64,
}

impl Capsule {
    fn axis_distance(&self, p: &[f64; 3]) -> f64 {
        let ab = sub(&self.b, &self.a);
        let ap = sub(p, &self.a);
        let len2 = dot(&ab, &ab);
        let t = if len2 > 0.0 {
            (dot(&ap, &ab) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = [
            self.a[0] + t * ab[0],
            self.a[1] + t * ab[1],
            self.a[2] + t * ab[2],
        ];
        let d = sub(p, &q);
        dot(&d, &d).sqrt()
    }

    pub fn length(&self) -> f64 {
        let d = sub(&self.b, &self.a);
        dot(&d, &d).sqrt()
    }
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn normalized(v: [f64; 3]) -> [f64; 3] {
    let n = dot(&v, &v).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Degradation {
    pub noise_variance: f64,
    pub smooth_sigma: f64,
    pub seed: u64,
}

/// Parameters a phantom was generated from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub kind: String,
    pub dims: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub angle_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_branches: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius_range: Option<(f64, f64)>,
    pub segments: Vec<Capsule>,
    /// Flat voxel offsets of junction voxels.
    pub junctions: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degradation: Option<Degradation>,
}

impl Descriptor {
    fn new(kind: &str, dims: &[usize], segments: Vec<Capsule>) -> Self {
        Descriptor {
            kind: kind.to_string(),
            dims: dims.to_vec(),
            width: None,
            angle_deg: None,
            seed: None,
            n_branches: None,
            radius_range: None,
            segments,
            junctions: Vec::new(),
            degradation: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Phantom {
    pub image: Image,
    pub ground_truth: Image,
    pub centerline: Image,
    pub descriptor: Descriptor,
}

fn voxel_center(idx: &[usize]) -> [f64; 3] {
    let mut p = [0.0; 3];
    for (k, &i) in idx.iter().enumerate() {
        p[k] = i as f64 + 0.5;
    }
    p
}

fn render(descriptor: Descriptor) -> Result<Phantom> {
    let dims = descriptor.dims.clone();
    let rank = dims.len();
    let segs = &descriptor.segments;
    let half_diag = (rank as f64).sqrt() / 2.0;
    let sub_offsets: Vec<f64> = (0..SUPERSAMPLE)
        .map(|k| (k as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5)
        .collect();
    let n_sub = SUPERSAMPLE.pow(rank as u32);
    let inside = |p: &[f64; 3]| segs.iter().any(|s| s.axis_distance(p) < s.radius);

    let mut gt = Vec::new();
    let mut center = Vec::new();
    let image = Image::from_fn(&dims, |idx| {
        let p = voxel_center(idx);
        let signed = segs
            .iter()
            .map(|s| s.axis_distance(&p) - s.radius)
            .fold(f64::INFINITY, f64::min);
        let axis = segs
            .iter()
            .map(|s| s.axis_distance(&p))
            .fold(f64::INFINITY, f64::min);
        gt.push(if signed < 0.0 { 1.0 } else { 0.0 });
        center.push(if axis <= 0.5 { 1.0 } else { 0.0 });
        if signed < -half_diag {
            return 1.0;
        }
        if signed > half_diag {
            return 0.0;
        }
        let mut hits = 0usize;
        for s in 0..n_sub {
            let mut q = p;
            let mut code = s;
            for k in 0..rank {
                q[k] += sub_offsets[code % SUPERSAMPLE];
                code /= SUPERSAMPLE;
            }
            if inside(&q) {
                hits += 1;
            }
        }
        hits as f64 / n_sub as f64
    })?;
    let ground_truth = Image::new(&dims, gt)?;
    let centerline = Image::new(&dims, center)?;
    Ok(Phantom {
        image,
        ground_truth,
        centerline,
        descriptor,
    })
}

fn check_2d(dims: &[usize], width: f64) -> Result<()> {
    if dims.len() != 2 {
        return Err(Error::param(format!("2D phantom needs two dims, got {dims:?}")));
    }
    let limit = dims[0].min(dims[1]) as f64 / 2.0;
    if !(width >= 2.0 && width < limit) {
        return Err(Error::param(format!(
            "tube width {width} outside [2, {limit}) for dims {dims:?}"
        )));
    }
    Ok(())
}

fn center_of(dims: &[usize]) -> [f64; 3] {
    let mut c = [0.0; 3];
    for (k, &d) in dims.iter().enumerate() {
        c[k] = d as f64 / 2.0;
    }
    c
}

/// In-plane unit direction for an angle in degrees: 0 runs along columns,
/// 90 points towards row 0.
fn direction(angle_deg: f64) -> [f64; 3] {
    let t = angle_deg.to_radians();
    [-t.sin(), t.cos(), 0.0]
}

fn ray(from: [f64; 3], dir: [f64; 3], length: f64, radius: f64) -> Capsule {
    Capsule {
        a: from,
        b: [
            from[0] + length * dir[0],
            from[1] + length * dir[1],
            from[2] + length * dir[2],
        ],
        radius,
    }
}

fn through_line(dims: &[usize], dir: [f64; 3], radius: f64) -> Capsule {
    let c = center_of(dims);
    let reach: f64 = dims.iter().map(|&d| d as f64).sum();
    let start = [c[0] - reach * dir[0], c[1] - reach * dir[1], c[2] - reach * dir[2]];
    ray(start, dir, 2.0 * reach, radius)
}

fn junction_voxels(dims: &[usize], at: [f64; 3]) -> Vec<usize> {
    let img = Image::zeros(dims).expect("validated dims");
    (0..img.len())
        .filter(|&o| {
            let p = voxel_center(&img.unravel(o));
            let d = sub(&p, &at);
            dot(&d, &d).sqrt() <= 1.0
        })
        .collect()
}

/// Straight tube of `width` through the image center.
pub fn tube_2d(dims: &[usize], width: f64, orientation_deg: f64) -> Result<Phantom> {
    check_2d(dims, width)?;
    let mut d = Descriptor::new("tube", dims, vec![through_line(dims, direction(orientation_deg), width / 2.0)]);
    d.width = Some(width);
    d.angle_deg = Some(orientation_deg);
    render(d)
}

/// Three arms meeting at the center: a stem pointing down (increasing row)
/// and two branches `branch_angle` apart, symmetric about the upward axis.
pub fn yjunction_2d(dims: &[usize], width: f64, branch_angle_deg: f64) -> Result<Phantom> {
    check_2d(dims, width)?;
    if !(branch_angle_deg > 0.0 && branch_angle_deg <= 180.0) {
        return Err(Error::param(format!(
            "branch angle {branch_angle_deg} must lie in (0, 180]"
        )));
    }
    let c = center_of(dims);
    let arm = 0.375 * dims[0].min(dims[1]) as f64;
    let r = width / 2.0;
    let segments = vec![
        ray(c, direction(-90.0), arm, r),
        ray(c, direction(90.0 - branch_angle_deg / 2.0), arm, r),
        ray(c, direction(90.0 + branch_angle_deg / 2.0), arm, r),
    ];
    let mut d = Descriptor::new("yjunction", dims, segments);
    d.width = Some(width);
    d.angle_deg = Some(branch_angle_deg);
    d.junctions = junction_voxels(dims, c);
    render(d)
}

/// Horizontal and vertical tubes crossing at the center.
pub fn cross_2d(dims: &[usize], width: f64) -> Result<Phantom> {
    check_2d(dims, width)?;
    let r = width / 2.0;
    let segments = vec![
        through_line(dims, direction(0.0), r),
        through_line(dims, direction(90.0), r),
    ];
    let mut d = Descriptor::new("cross", dims, segments);
    d.width = Some(width);
    d.junctions = junction_voxels(dims, center_of(dims));
    render(d)
}

/// Filled disk at the center; a blob with no tubular structure.
pub fn disk_2d(dims: &[usize], radius: f64) -> Result<Phantom> {
    if dims.len() != 2 || !(radius > 0.0) || 2.0 * radius >= dims[0].min(dims[1]) as f64 {
        return Err(Error::param(format!("disk radius {radius} does not fit {dims:?}")));
    }
    let c = center_of(dims);
    let mut d = Descriptor::new("disk", dims, vec![Capsule { a: c, b: c, radius }]);
    d.width = Some(2.0 * radius);
    render(d)
}

/// Random binary tree of capsules in a volume; see [`tree`].
pub fn tree_3d(dims: &[usize], seed: u64, n_branches: usize, radius_range: (f64, f64)) -> Result<Phantom> {
    if dims.len() != 3 {
        return Err(Error::param(format!("tree_3d needs three dims, got {dims:?}")));
    }
    tree(dims, seed, n_branches, radius_range)
}

/// Random binary tree of capsules in an image; see [`tree`].
pub fn tree_2d(dims: &[usize], seed: u64, n_branches: usize, radius_range: (f64, f64)) -> Result<Phantom> {
    if dims.len() != 2 {
        return Err(Error::param(format!("tree_2d needs two dims, got {dims:?}")));
    }
    tree(dims, seed, n_branches, radius_range)
}

/// Random binary tree of `n_branches` capsule segments.
///
/// The root enters from the low side of axis 0 with the maximum radius;
/// every segment spawns up to two children at its end point, each turned by
/// 25-50 degrees, shortened, and with radius tapered towards the minimum.
/// Every segment stays at least `radius + 2` voxels inside the volume.
/// Deterministic for a given seed.
pub fn tree(dims: &[usize], seed: u64, n_branches: usize, radius_range: (f64, f64)) -> Result<Phantom> {
    let rank = dims.len();
    let (r_min, r_max) = radius_range;
    if !(rank == 2 || rank == 3) || dims.iter().any(|&d| d < 32) {
        return Err(Error::param(format!("tree phantom needs every dim >= 32, got {dims:?}")));
    }
    if n_branches == 0 {
        return Err(Error::param("tree phantom needs at least one branch"));
    }
    if !(r_min >= 1.0 && r_max >= r_min) {
        return Err(Error::param(format!(
            "radius range ({r_min}, {r_max}) must satisfy 1 <= min <= max"
        )));
    }
    let smallest = *dims.iter().min().unwrap() as f64;
    if 4.0 * (r_max + 2.0) >= smallest {
        return Err(Error::param(format!(
            "radius {r_max} too large for extent {smallest}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fits = |p: &[f64; 3], r: f64| (0..rank).all(|k| p[k] >= r + 2.0 && p[k] <= dims[k] as f64 - r - 2.0);

    let mut start = [0.0; 3];
    start[0] = r_max + 2.0;
    for k in 1..rank {
        start[k] = dims[k] as f64 * rng.gen_range(0.4..0.6);
    }
    let mut dir = [0.0; 3];
    dir[0] = 1.0;
    for k in 1..rank {
        dir[k] = rng.gen_range(-0.25..0.25);
    }
    let dir = normalized(dir);
    let root_len = (dims[0] as f64 - 2.0 * (r_max + 2.0)) * rng.gen_range(0.4..0.5);
    let root = ray(start, dir, root_len, r_max);
    debug_assert!(fits(&root.b, r_max));

    let mut segments = vec![root];
    let mut frontier = std::collections::VecDeque::from([0usize]);
    while segments.len() < n_branches {
        let Some(parent_idx) = frontier.pop_front() else {
            return Err(Error::param(format!(
                "could only place {} of {n_branches} branches in {dims:?}",
                segments.len()
            )));
        };
        let parent = segments[parent_idx];
        let pdir = normalized(sub(&parent.b, &parent.a));
        let perp = random_perpendicular(&pdir, rank, &mut rng);
        for side in [1.0, -1.0] {
            if segments.len() >= n_branches {
                break;
            }
            let radius = (parent.radius * rng.gen_range(0.7..0.9)).max(r_min);
            let mut length = parent.length() * rng.gen_range(0.6..0.85);
            for _ in 0..40 {
                let turn = rng.gen_range(25.0f64..50.0).to_radians();
                let d = normalized([
                    turn.cos() * pdir[0] + side * turn.sin() * perp[0],
                    turn.cos() * pdir[1] + side * turn.sin() * perp[1],
                    turn.cos() * pdir[2] + side * turn.sin() * perp[2],
                ]);
                let child = ray(parent.b, d, length, radius);
                if length >= 2.0 * radius && fits(&child.b, radius) {
                    segments.push(child);
                    frontier.push_back(segments.len() - 1);
                    break;
                }
                length *= 0.85;
            }
        }
    }

    let mut d = Descriptor::new(if rank == 2 { "tree2d" } else { "tree3d" }, dims, segments);
    d.seed = Some(seed);
    d.n_branches = Some(n_branches);
    d.radius_range = Some(radius_range);
    d.junctions = Vec::new();
    let mut p = render(d)?;
    let img = &p.ground_truth;
    let mut junctions = Vec::new();
    for (i, s) in p.descriptor.segments.iter().enumerate().skip(1) {
        // children share their start with the parent's end
        let joint = s.a;
        if p.descriptor.segments[..i].iter().any(|q| q.b == joint) {
            let mut idx = vec![0usize; rank];
            for k in 0..rank {
                idx[k] = (joint[k].floor() as usize).min(dims[k] - 1);
            }
            junctions.push(img.offset(&idx));
        }
    }
    junctions.sort_unstable();
    junctions.dedup();
    p.descriptor.junctions = junctions;
    Ok(p)
}

fn random_perpendicular(d: &[f64; 3], rank: usize, rng: &mut ChaCha8Rng) -> [f64; 3] {
    if rank == 2 {
        let s = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        return [-s * d[1], s * d[0], 0.0];
    }
    loop {
        let v = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let proj = dot(&v, d);
        let w = [v[0] - proj * d[0], v[1] - proj * d[1], v[2] - proj * d[2]];
        if dot(&w, &w) > 1e-3 {
            return normalized(w);
        }
    }
}

/// Adds Gaussian noise of `noise_variance` on the 0-255 scale, smooths with
/// `smooth_sigma`, and clamps back to `[0, 1]`. Masks are unchanged.
pub fn degrade(p: &Phantom, noise_variance: f64, smooth_sigma: f64, seed: u64) -> Result<Phantom> {
    if !(noise_variance >= 0.0) || !(smooth_sigma >= 0.0) {
        return Err(Error::param(format!(
            "noise variance {noise_variance} and smoothing {smooth_sigma} must be >= 0"
        )));
    }
    let mut noisy: Vec<f64> = p.image.data().iter().map(|v| v * 255.0).collect();
    if noise_variance > 0.0 {
        let normal = Normal::new(0.0, noise_variance.sqrt()).expect("finite std");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        noisy.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
    }
    let smoothed = gaussian_smooth(&p.image.with_data(noisy)?, smooth_sigma)?;
    let image = smoothed.map(|v| (v / 255.0).clamp(0.0, 1.0));
    let mut descriptor = p.descriptor.clone();
    descriptor.degradation = Some(Degradation {
        noise_variance,
        smooth_sigma,
        seed,
    });
    Ok(Phantom {
        image,
        ground_truth: p.ground_truth.clone(),
        centerline: p.centerline.clone(),
        descriptor,
    })
}
