//! Fractional anisotropy of a regularized eigenvalue triple.

const SQRT_3_2: f64 = 1.224_744_871_391_589;

/// Trace, mean diffusivities and relative axis importances of `(l2, l_rho, l_nu)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TensorStats {
    pub trace: f64,
    pub mean_diffusivity_lambda: f64,
    pub mean_diffusivity_p: f64,
    pub p2: f64,
    pub p_rho: f64,
    pub p_nu: f64,
}

impl TensorStats {
    pub fn new(l2: f64, l_rho: f64, l_nu: f64) -> Self {
        let trace = l2 + l_rho + l_nu;
        let importance = |l: f64| if trace == 0.0 { 0.0 } else { (l / trace).abs() };
        TensorStats {
            trace,
            mean_diffusivity_lambda: trace / 3.0,
            mean_diffusivity_p: 1.0 / 3.0,
            p2: importance(l2),
            p_rho: importance(l_rho),
            p_nu: importance(l_nu),
        }
    }
}

fn anisotropy(v: [f64; 3], mean: f64) -> f64 {
    let den: f64 = v.iter().map(|x| x * x).sum();
    if den == 0.0 {
        return 0.0;
    }
    let num: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    (SQRT_3_2 * (num / den).sqrt()).clamp(0.0, 1.0)
}

/// Eigenvalue FAT of the triple, in `[0, 1]`. Equal entries give exactly 0;
/// the all-zero triple gives 0.
pub fn fat_lambda(l2: f64, l_rho: f64, l_nu: f64) -> f64 {
    if l2 == l_rho && l_rho == l_nu {
        return 0.0;
    }
    anisotropy([l2, l_rho, l_nu], (l2 + l_rho + l_nu) / 3.0)
}

/// Probabilistic FAT: anisotropy of the importances `|l / trace|` about 1/3.
/// A zero trace gives 0.
pub fn fat_prob(l2: f64, l_rho: f64, l_nu: f64) -> f64 {
    let s = TensorStats::new(l2, l_rho, l_nu);
    if s.trace == 0.0 || (s.p2 == s.p_rho && s.p_rho == s.p_nu) {
        return 0.0;
    }
    anisotropy([s.p2, s.p_rho, s.p_nu], s.mean_diffusivity_p)
}
