//! Gaussian random field theory for cluster inference: smoothness, Euler
//! characteristic density, cluster-size law and the pTFCE building blocks.

mod exceedance;
mod table;

pub use exceedance::{
    conditional_exceedance, make_threshold_grid, restricted_prior_exceedance, PriorSupport,
    ThresholdGrid, FREEZE_HEIGHT,
};
pub(crate) use exceedance::{exceedance_weights, ProfileQuadrature};
pub use table::{build_exceedance_table, default_size_knots, ExceedanceTable, TableCache, CACHE_DIR_ENV};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::norm_logsf;
use crate::volume::{Mask3D, SubjectStack};

/// 4 ln 2
pub const FOUR_LN2: f64 = 4.0 * std::f64::consts::LN_2;
/// ln Gamma(5/2)
const LN_GAMMA_5_2: f64 = 0.284_682_870_472_919_2;
/// ln (2 pi)^2
const LN_TWO_PI_SQ: f64 = 3.675_754_132_818_691;

/// Stationary smoothness summary of a field over a mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrfParams {
    pub n_voxels: usize,
    pub fwhm_vox: [f64; 3],
    /// |Lambda|^{1/2}
    pub roughness: f64,
    /// R3 = N |Lambda|^{1/2}
    pub resels3: f64,
}

impl GrfParams {
    pub fn from_fwhm(n_voxels: usize, fwhm_vox: [f64; 3]) -> Result<Self> {
        if n_voxels == 0 {
            return Err(Error::InvalidParams("GRF voxel count must be positive".into()));
        }
        if fwhm_vox.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
            return Err(Error::InvalidParams(format!("FWHM {fwhm_vox:?} must be positive")));
        }
        let roughness = FOUR_LN2.powf(1.5) / (fwhm_vox[0] * fwhm_vox[1] * fwhm_vox[2]);
        Ok(Self {
            n_voxels,
            fwhm_vox,
            roughness,
            resels3: n_voxels as f64 * roughness,
        })
    }

    pub fn isotropic(n_voxels: usize, fwhm: f64) -> Result<Self> {
        Self::from_fwhm(n_voxels, [fwhm; 3])
    }

    /// ln E[c_h], valid for h > 1.
    pub(crate) fn ln_expected_cluster_size(&self, h: f64) -> f64 {
        (self.n_voxels as f64).ln() + norm_logsf(h) - self.resels3.ln() - (h * h - 1.0).ln()
            + 0.5 * h * h
            + LN_TWO_PI_SQ
    }

    /// ln lambda_h of the cluster-size law.
    pub(crate) fn ln_lambda(&self, h: f64) -> f64 {
        -(2.0 / 3.0) * (self.ln_expected_cluster_size(h) - LN_GAMMA_5_2)
    }
}

/// Expected Euler characteristic of the excursion set above `h`.
pub fn expected_euler_char(h: f64, params: &GrfParams) -> f64 {
    params.resels3 * (h * h - 1.0) * (-0.5 * h * h).exp() / (LN_TWO_PI_SQ.exp())
}

fn check_regime(h: f64) -> Result<()> {
    if h > 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidRegime(h))
    }
}

/// Expected supra-threshold cluster size `N (1 - Phi(h)) / E[chi_h]`.
pub fn expected_cluster_size(h: f64, params: &GrfParams) -> Result<f64> {
    check_regime(h)?;
    Ok(params.ln_expected_cluster_size(h).exp())
}

/// `P(C > c | h) = exp(-lambda_h c^{2/3})`.
pub fn cluster_size_survival(c: f64, h: f64, params: &GrfParams) -> Result<f64> {
    check_regime(h)?;
    if c < 0.0 || c.is_nan() {
        return Err(Error::InvalidParams(format!("cluster size {c} must be >= 0")));
    }
    let lambda = params.ln_lambda(h).exp();
    Ok((-lambda * c.powf(2.0 / 3.0)).exp())
}

/// Density of the cluster-size law, the derivative of `1 - survival`.
pub fn cluster_size_density(c: f64, h: f64, params: &GrfParams) -> Result<f64> {
    check_regime(h)?;
    if !(c > 0.0) {
        return Err(Error::InvalidParams(format!("density needs c > 0, got {c}")));
    }
    Ok(ln_cluster_density(c.ln(), params.ln_lambda(h)).exp())
}

/// ln f_C(c | h) from ln c and ln lambda_h.
#[inline]
pub(crate) fn ln_cluster_density(ln_c: f64, ln_lambda: f64) -> f64 {
    let lambda = ln_lambda.exp();
    ln_lambda + (2.0f64 / 3.0).ln() - ln_c / 3.0 - lambda * (2.0 * ln_c / 3.0).exp()
}

/// Maps accumulated evidence `A` (a sum of `-ln p` over a grid with step
/// `delta`) back to a single `-ln p` scale.
pub fn q_function(a: f64, delta: f64) -> f64 {
    if !(a > 0.0) {
        return 0.0;
    }
    // (sqrt(delta (8a + delta)) - delta) / 2, rearranged to avoid cancellation
    4.0 * a * delta / ((delta * (8.0 * a + delta)).sqrt() + delta)
}

/// Estimates per-axis FWHM from the first spatial differences of the
/// standardised residuals.
pub fn estimate_smoothness(residuals: &SubjectStack, mask: &Mask3D) -> Result<GrfParams> {
    let dims = residuals.dims();
    mask.check_dims(dims)?;
    let m = residuals.subjects();
    let n = dims.len();
    // per-voxel mean and unbiased sd across subjects
    let mut mean = vec![0.0; n];
    let mut scale = vec![0.0; n];
    for s in 0..m {
        for (acc, &x) in mean.iter_mut().zip(residuals.subject(s)) {
            *acc += x;
        }
    }
    mean.iter_mut().for_each(|x| *x /= m as f64);
    for s in 0..m {
        for ((acc, &x), &mu) in scale.iter_mut().zip(residuals.subject(s)).zip(&mean) {
            *acc += (x - mu) * (x - mu);
        }
    }
    let mut valid = vec![false; n];
    for i in mask.indices() {
        let var = scale[i] / (m - 1) as f64;
        if var > 0.0 && var.is_finite() {
            scale[i] = 1.0 / var.sqrt();
            valid[i] = true;
        }
    }

    let strides = [1, dims.nx, dims.nx * dims.ny];
    let extents = [dims.nx, dims.ny, dims.nz];
    let mut fwhm = [0.0; 3];
    for axis in 0..3 {
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for i in 0..n {
            let (x, y, z) = dims.coords(i);
            let pos = [x, y, z][axis];
            if pos + 1 >= extents[axis] {
                continue;
            }
            let j = i + strides[axis];
            if !(valid[i] && valid[j]) {
                continue;
            }
            pairs += 1;
            for s in 0..m {
                let r = residuals.subject(s);
                let d = (r[j] - mean[j]) * scale[j] - (r[i] - mean[i]) * scale[i];
                sum += d * d;
            }
        }
        let v = sum / (pairs as f64 * (m - 1) as f64);
        if pairs == 0 || !(v > 0.0) || !v.is_finite() {
            return Err(Error::DegenerateResiduals(format!(
                "first-difference variance {v} along axis {axis} from {pairs} pairs"
            )));
        }
        fwhm[axis] = (FOUR_LN2 / v).sqrt();
    }
    GrfParams::from_fwhm(mask.count(), fwhm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use crate::volume::Dims;

    fn phantom_params() -> GrfParams {
        GrfParams::isotropic(92_000, 3.532).unwrap()
    }

    #[test]
    fn unit_fwhm_roughness() {
        let p = GrfParams::isotropic(10, 1.0).unwrap();
        assert_eq!(p.roughness, FOUR_LN2.powf(1.5));
        assert!((p.roughness - 4.616_663_051_089_118).abs() < 1e-14);
        assert_eq!(p.resels3, 10.0 * p.roughness);
    }

    #[test]
    fn roughness_product_identity() {
        for fw in [[1.0, 2.0, 3.0], [3.532, 3.532, 3.532], [0.7, 11.0, 2.5]] {
            let p = GrfParams::from_fwhm(1234, fw).unwrap();
            let prod = p.roughness * fw[0] * fw[1] * fw[2];
            assert!((prod / FOUR_LN2.powf(1.5) - 1.0).abs() < 4.0 * f64::EPSILON);
        }
        assert!(GrfParams::from_fwhm(10, [1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn euler_characteristic_values() {
        let p = phantom_params();
        assert_eq!(expected_euler_char(1.0, &p), 0.0);
        let mut zero = p;
        zero.resels3 = 0.0;
        assert_eq!(expected_euler_char(3.0, &zero), 0.0);
        let mut r1000 = p;
        r1000.resels3 = 1000.0;
        // mpmath: 1000 * 8 * exp(-4.5) / (2 pi)^2
        assert!((expected_euler_char(3.0, &r1000) - 2.251_153_356_666_687).abs() < 1e-12);
    }

    #[test]
    fn expected_cluster_size_values() {
        let p = phantom_params();
        assert!(matches!(expected_cluster_size(1.0, &p), Err(Error::InvalidRegime(_))));
        assert!((p.roughness - 0.104_777_032_419_303_71).abs() < 1e-15);
        let ec = expected_cluster_size(3.0, &p).unwrap();
        assert!((ec - 5.723_079_628_197_449).abs() < 1e-10, "{ec}");
        let doubled = GrfParams::isotropic(184_000, 3.532).unwrap();
        let ec2 = expected_cluster_size(3.0, &doubled).unwrap();
        assert!((ec2 / ec - 1.0).abs() < 1e-14);
        // the direct ratio agrees with the log-space route
        let direct = 92_000.0 * crate::stats::norm_sf(3.0) / expected_euler_char(3.0, &p);
        assert!((direct / ec - 1.0).abs() < 1e-13);
    }

    #[test]
    fn survival_and_density() {
        let p = phantom_params();
        let h = 3.0;
        assert_eq!(cluster_size_survival(0.0, h, &p).unwrap(), 1.0);
        let lambda = p.ln_lambda(h).exp();
        let median = (std::f64::consts::LN_2 / lambda).powf(1.5);
        assert!((cluster_size_survival(median, h, &p).unwrap() - 0.5).abs() < 1e-14);
        let mut prev = 1.0;
        for k in 1..60 {
            let s = cluster_size_survival(k as f64 * 0.7, h, &p).unwrap();
            assert!(s < prev);
            prev = s;
        }
        // substitute c = u^3 to remove the c^{-1/3} endpoint singularity
        let mass = integrate(
            |u: f64| cluster_size_density(u * u * u, h, &p).unwrap() * 3.0 * u * u,
            1e-9,
            60.0,
            1e-10,
            64,
        )
        .unwrap();
        assert!((mass - 1.0).abs() < 1e-6, "{mass}");
    }

    #[test]
    fn density_is_derivative_of_survival() {
        let p = phantom_params();
        for h in [1.5, 2.5, 4.0] {
            let mut c: f64 = 0.5;
            while c < 5e3 {
                let eps = 1e-5 * c;
                let num = (cluster_size_survival(c - eps, h, &p).unwrap()
                    - cluster_size_survival(c + eps, h, &p).unwrap())
                    / (2.0 * eps);
                let den = cluster_size_density(c, h, &p).unwrap();
                assert!((num - den).abs() < 1e-5 * den.max(1e-3), "h={h} c={c}");
                c *= 1.7;
            }
        }
    }

    #[test]
    fn q_function_identities() {
        assert_eq!(q_function(0.0, 0.3), 0.0);
        for &delta in &[0.1, 0.037, 1.0, 2.5e-3] {
            for k in 1..=100u32 {
                let k = k as f64;
                let got = q_function(k * (k + 1.0) * delta / 2.0, delta);
                assert!((got / (k * delta) - 1.0).abs() < 4.0 * f64::EPSILON, "k={k}");
            }
        }
        assert!((q_function(10.0, 0.1) - 1.365_097_169_808_491).abs() < 1e-14);
        let mut prev = 0.0;
        for i in 1..100 {
            let q = q_function(i as f64 * 0.37, 0.05);
            assert!(q > prev);
            prev = q;
        }
    }

    fn stack_from(d: Dims, m: usize, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> SubjectStack {
        let mut data = Vec::with_capacity(m * d.len());
        for s in 0..m {
            for i in 0..d.len() {
                let (x, y, z) = d.coords(i);
                data.push(f(s, x, y, z));
            }
        }
        SubjectStack::new(d, m, data).unwrap()
    }

    #[test]
    fn constant_axis_is_degenerate() {
        let d = Dims::cube(5);
        let st = stack_from(d, 4, |s, x, y, _| ((s * 7 + x * 3 + y * 5) as f64).sin());
        assert!(matches!(
            estimate_smoothness(&st, &Mask3D::full(d)),
            Err(Error::DegenerateResiduals(_))
        ));
    }

    #[test]
    fn white_noise_is_rough() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let d = Dims::cube(12);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let st = stack_from(d, 10, |_, _, _, _| StandardNormal.sample(&mut rng));
        let p = estimate_smoothness(&st, &Mask3D::full(d)).unwrap();
        // independent voxels: difference variance 2, FWHM sqrt(2 ln 2)
        for f in p.fwhm_vox {
            assert!((f - (2.0 * std::f64::consts::LN_2).sqrt()).abs() < 0.03, "{f}");
        }
    }
}
