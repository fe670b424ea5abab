//! Adaptive Simpson quadrature.

use crate::error::{Error, Result};

/// Relative tolerance used for GRF integrals.
pub const REL_TOL: f64 = 1e-6;
/// Minimum number of equal panels a finite interval is split into.
pub const MIN_PANELS: usize = 64;
const MAX_DEPTH: u32 = 48;

#[inline]
fn simpson(fa: f64, fm: f64, fb: f64, width: f64) -> f64 {
    width / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let delta = left + right - whole;
    if depth >= MAX_DEPTH || !delta.is_finite() || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)
        + refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)
}

/// Integrates `f` over `[a, b]` split into `panels` equal panels, each refined
/// adaptively until its share of `abs_tol` is met.
pub fn simpson_panels<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, panels: usize, abs_tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let tol = abs_tol / panels as f64;
    let mut total = 0.0;
    let mut x0 = a;
    let mut f0 = f(a);
    for k in 0..panels {
        let x1 = if k + 1 == panels { b } else { a + (k + 1) as f64 * h };
        let xm = 0.5 * (x0 + x1);
        let fm = f(xm);
        let f1 = f(x1);
        let whole = simpson(f0, fm, f1, x1 - x0);
        total += refine(f, x0, x1, f0, fm, f1, whole, tol, 0);
        x0 = x1;
        f0 = f1;
    }
    total
}

/// Adaptive Simpson over `[a, b]` with relative tolerance `rel_tol` and at
/// least `min_panels` initial subdivisions.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, min_panels: usize) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::QuadratureFailure(format!(
            "non-finite interval [{a}, {b}]"
        )));
    }
    if b <= a {
        return Ok(0.0);
    }
    // coarse pass fixes the absolute tolerance scale
    let coarse = simpson_panels(&f, a, b, min_panels, f64::INFINITY);
    if !coarse.is_finite() {
        return Err(Error::QuadratureFailure(format!(
            "integrand not finite on [{a}, {b}]"
        )));
    }
    let abs_tol = (rel_tol * coarse.abs()).max(f64::MIN_POSITIVE);
    let v = simpson_panels(&f, a, b, min_panels, abs_tol);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::QuadratureFailure(format!(
            "refinement diverged on [{a}, {b}]"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|x| 3.0 * x * x, 0.0, 2.0, 1e-12, 1).unwrap();
        assert!((v - 8.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_mass() {
        let v = integrate(crate::stats::norm_pdf, -10.0, 10.0, REL_TOL, MIN_PANELS).unwrap();
        assert!((v - 1.0).abs() < 1e-8);
    }

    #[test]
    fn peaked_integrand() {
        let v = integrate(|x: f64| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-8, 4).unwrap();
        let want = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!(((v - want) / want).abs() < 1e-7);
    }

    #[test]
    fn empty_and_bad_intervals() {
        assert_eq!(integrate(|x| x, 1.0, 1.0, 1e-6, 4).unwrap(), 0.0);
        assert!(integrate(|x| x, 0.0, f64::INFINITY, 1e-6, 4).is_err());
        assert!(integrate(|_| f64::NAN, 0.0, 1.0, 1e-6, 4).is_err());
    }
}
