//! Normal and Student-t distribution helpers.
//!
//! Upper-tail functions work in log space so that thresholds derived from
//! p-values far below `f64::MIN_POSITIVE` stay finite.

use statrs::function::beta::beta_reg;
use libm::erfc;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
/// ln(sqrt(2 pi))
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Largest |Z| reported for converted statistics.
pub const Z_CLAMP: f64 = 38.0;

#[inline]
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

/// Phi(z).
#[inline]
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// 1 - Phi(z), accurate in the upper tail.
#[inline]
pub fn norm_sf(z: f64) -> f64 {
    0.5 * erfc(z * FRAC_1_SQRT_2)
}

/// ln(1 - Phi(z)).
pub fn norm_logsf(z: f64) -> f64 {
    if z < 37.0 {
        return norm_sf(z).ln();
    }
    // asymptotic Mills-ratio expansion; relative error < 1e-9 for z >= 37
    let r = 1.0 / (z * z);
    let series = 1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r)));
    -0.5 * z * z - LN_SQRT_2PI - z.ln() + series.ln()
}

/// Phi(b) - Phi(a) for a <= b, without cancellation in either tail.
pub fn norm_interval(a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    if a >= 0.0 {
        norm_sf(a) - norm_sf(b)
    } else if b <= 0.0 {
        norm_cdf(b) - norm_cdf(a)
    } else {
        1.0 - norm_cdf(a) - norm_sf(b)
    }
}

// Acklam's rational approximation, refined by Newton steps below.
const A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];

/// Initial upper-tail quantile for ln p <= ln 0.5.
fn acklam_upper(log_p: f64) -> f64 {
    let p = log_p.exp();
    if p > 0.02425 {
        let q = 0.5 - p;
        let r = q * q;
        let num = ((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5];
        let den = ((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0;
        num * q / den
    } else {
        let q = (-2.0 * log_p).sqrt();
        let num = ((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5];
        let den = (((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0;
        -num / den
    }
}

/// Upper-tail quantile from ln p: the z with ln(1 - Phi(z)) = `log_p`.
pub fn norm_isf_log(log_p: f64) -> f64 {
    if log_p.is_nan() {
        return f64::NAN;
    }
    if log_p >= 0.0 {
        return f64::NEG_INFINITY;
    }
    if log_p == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    if log_p > -std::f64::consts::LN_2 {
        // p > 0.5: mirror through the lower tail
        let q = -log_p.exp_m1();
        return -norm_isf_log(q.ln());
    }
    let mut z = acklam_upper(log_p);
    for _ in 0..6 {
        let ls = norm_logsf(z);
        let g = ls - log_p;
        // d/dz ln sf = -pdf/sf
        let slope = -(-0.5 * z * z - LN_SQRT_2PI - ls).exp();
        let step = g / slope;
        z -= step;
        if step.abs() <= 1e-15 * z.abs().max(1.0) {
            break;
        }
    }
    z
}

/// Upper-tail quantile: Phi^{-1}(1 - p).
pub fn norm_isf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::INFINITY;
    }
    if p >= 1.0 {
        return f64::NEG_INFINITY;
    }
    if p > 0.5 {
        return -norm_isf(1.0 - p);
    }
    norm_isf_log(p.ln())
}

/// Phi^{-1}(p).
pub fn norm_ppf(p: f64) -> f64 {
    -norm_isf(p)
}

/// Upper tail of Student's t with `df` degrees of freedom, for t >= 0.
pub fn t_sf(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 0.5;
    }
    if t < 0.0 {
        return 1.0 - t_sf(-t, df);
    }
    0.5 * beta_reg(0.5 * df, 0.5, df / (df + t * t))
}

/// Maps a t statistic to the Z score with equal tail probability, clamped to
/// `|Z| <= Z_CLAMP`.
pub fn t_to_z(t: f64, df: f64) -> f64 {
    if t == 0.0 || t.is_nan() {
        return 0.0;
    }
    let sf = t_sf(t.abs(), df);
    let z = if sf > 0.0 { norm_isf(sf) } else { Z_CLAMP };
    (z.min(Z_CLAMP)).copysign(t)
}
