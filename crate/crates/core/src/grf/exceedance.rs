use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ln_cluster_density, GrfParams};
use crate::error::{Error, Result};
use crate::quadrature::{integrate, MIN_PANELS, REL_TOL};
use crate::stats::{norm_cdf, norm_interval, norm_isf_log, norm_logsf};

/// Below this height the cluster-size likelihood is held at its value here.
pub const FREEZE_HEIGHT: f64 = 1.0 + 1e-3;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Height prior support `[lo, hi]`; `lo = None` means unbounded below.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSupport {
    pub lo: Option<f64>,
    pub hi: f64,
}

impl PriorSupport {
    /// `(-inf, z_max + 1]`.
    pub fn for_max(z_max: f64) -> Self {
        Self {
            lo: None,
            hi: z_max + 1.0,
        }
    }

    pub fn bounded(lo: f64, hi: f64) -> Self {
        Self { lo: Some(lo), hi }
    }

    fn lo_value(&self) -> f64 {
        self.lo.unwrap_or(f64::NEG_INFINITY)
    }

    fn check(&self) -> Result<()> {
        let lo = self.lo_value();
        if !(self.hi.is_finite() && lo < self.hi) || self.lo.is_some_and(|l| !l.is_finite()) {
            return Err(Error::InvalidSupport {
                tau: f64::NAN,
                lo,
                hi: self.hi,
            });
        }
        Ok(())
    }
}

/// Thresholds equidistant in `-ln(1 - Phi(tau))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdGrid {
    pub taus: Vec<f64>,
    pub delta: f64,
    pub n_levels: usize,
    pub z_max: f64,
}

/// `tau_i = Phi^{-1}(1 - exp(-i delta))` with `delta = -ln(1 - Phi(z_max)) / n`.
pub fn make_threshold_grid(z_max: f64, n_levels: usize) -> Result<ThresholdGrid> {
    if !(z_max > 0.0 && z_max.is_finite()) {
        return Err(Error::NonPositiveMax(z_max));
    }
    if n_levels == 0 || n_levels > u16::MAX as usize {
        return Err(Error::InvalidParams(format!("n_levels = {n_levels} out of range")));
    }
    let delta = -norm_logsf(z_max) / n_levels as f64;
    let mut taus: Vec<f64> = (1..n_levels).map(|i| norm_isf_log(-(i as f64) * delta)).collect();
    taus.push(z_max);
    Ok(ThresholdGrid {
        taus,
        delta,
        n_levels,
        z_max,
    })
}

impl ThresholdGrid {
    /// Number of levels at or below `z`.
    pub fn levels_at_or_below(&self, z: f64) -> usize {
        self.taus.partition_point(|&t| t <= z)
    }
}

/// Posterior exceedance with a likelihood that is frozen below `freeze`.
fn exceedance_with(tau: f64, support: &PriorSupport, freeze: f64, ln_lik: impl Fn(f64) -> f64) -> Result<f64> {
    support.check()?;
    let lo = support.lo_value();
    let hi = support.hi;
    if !(tau >= lo && tau <= hi) {
        return Err(Error::InvalidSupport { tau, lo, hi });
    }
    if tau == lo {
        return Ok(1.0);
    }
    if tau == hi {
        return Ok(0.0);
    }
    let e = freeze.min(hi);
    let ln_frozen = ln_lik(e);
    let ln_pdf = |h: f64| -0.5 * h * h - LN_SQRT_2PI;

    // shift keeps the integrand near unit scale
    let scan_lo = lo.max(-10.0);
    let mut shift = ln_frozen + ln_pdf(e.max(0.0).min(hi).max(scan_lo));
    for k in 0..=256 {
        let h = scan_lo + (hi - scan_lo) * k as f64 / 256.0;
        shift = shift.max(ln_lik(h.max(e)) + ln_pdf(h));
    }
    let frozen_scale = (ln_frozen - shift).exp();
    let upper = |a: f64| -> Result<f64> {
        let a = a.max(e).max(lo);
        if a >= hi {
            return Ok(0.0);
        }
        integrate(|h| (ln_lik(h) + ln_pdf(h) - shift).exp(), a, hi, REL_TOL, MIN_PANELS)
    };
    let frozen = |a: f64| -> f64 {
        if a >= e {
            0.0
        } else {
            frozen_scale * norm_interval(a, e)
        }
    };
    let num = frozen(tau) + upper(tau)?;
    let den = frozen(lo) + upper(lo)?;
    if !(den > 0.0 && den.is_finite() && num.is_finite()) {
        return Err(Error::QuadratureFailure(format!(
            "posterior mass {num}/{den} at tau = {tau}"
        )));
    }
    Ok((num / den).clamp(0.0, 1.0))
}

/// `P(Z >= tau | C = c)` under a standard normal height prior on `support`
/// and the GRF cluster-size likelihood.
pub fn conditional_exceedance(tau: f64, c: f64, params: &GrfParams, support: &PriorSupport) -> Result<f64> {
    if !(c >= 1.0 && c.is_finite()) {
        return Err(Error::InvalidParams(format!("cluster size {c} must be >= 1")));
    }
    let ln_c = c.ln();
    exceedance_with(tau, support, FREEZE_HEIGHT, |h| {
        ln_cluster_density(ln_c, params.ln_lambda(h.max(FREEZE_HEIGHT)))
    })
}

// 8-point Gauss-Legendre rule on [-1, 1]
const GL_X: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_W: [f64; 4] = [
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];
const MAX_PANEL: f64 = 0.125;

/// Fixed-node quadrature of the posterior for every grid level at once.
///
/// Nodes depend only on the grid and support, so each cluster size costs
/// one exponential per node. Panel edges sit on every grid level above the
/// freeze height and are graded geometrically towards it.
#[derive(Debug, Clone)]
pub(crate) struct ProfileQuadrature {
    taus: Vec<f64>,
    lo: f64,
    /// per node: ln(weight * pdf * 2/3 * lambda)
    base: Vec<f64>,
    lambda: Vec<f64>,
    /// first node at or above each level
    node_start: Vec<usize>,
    frozen_ln_lambda: f64,
    frozen_mass: Vec<f64>,
    frozen_total: f64,
}

impl ProfileQuadrature {
    pub(crate) fn new(params: &GrfParams, grid: &ThresholdGrid, support: &PriorSupport) -> Result<Self> {
        support.check()?;
        let lo = support.lo_value();
        let hi = support.hi;
        let e = FREEZE_HEIGHT;
        let a0 = e.max(lo);

        let mut edges = Vec::new();
        if hi > a0 {
            edges.push(a0);
            let mut g = 5e-4;
            while e + 2.0 * g < a0 + 0.5 {
                g *= 2.0;
                if e + g > a0 {
                    edges.push(e + g);
                }
            }
            edges.extend(grid.taus.iter().copied().filter(|&t| t > a0 && t < hi));
            edges.push(hi);
            edges.sort_by(f64::total_cmp);
            edges.dedup();
        }
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            let pieces = ((b - a) / MAX_PANEL).ceil().max(1.0) as usize;
            for p in 0..pieces {
                let pa = a + (b - a) * p as f64 / pieces as f64;
                let pb = if p + 1 == pieces { b } else { a + (b - a) * (p + 1) as f64 / pieces as f64 };
                let (mid, half) = (0.5 * (pa + pb), 0.5 * (pb - pa));
                for k in (0..4).rev() {
                    nodes.push(mid - half * GL_X[k]);
                    weights.push(half * GL_W[k]);
                }
                for k in 0..4 {
                    nodes.push(mid + half * GL_X[k]);
                    weights.push(half * GL_W[k]);
                }
            }
        }
        let ln_two_thirds = (2.0f64 / 3.0).ln();
        let mut base = Vec::with_capacity(nodes.len());
        let mut lambda = Vec::with_capacity(nodes.len());
        for (&h, &w) in nodes.iter().zip(&weights) {
            let ll = params.ln_lambda(h);
            base.push(w.ln() - 0.5 * h * h - LN_SQRT_2PI + ln_two_thirds + ll);
            lambda.push(ll.exp());
        }
        let node_start = grid
            .taus
            .iter()
            .map(|&t| nodes.partition_point(|&h| h < t))
            .collect();
        let frozen_mass = grid
            .taus
            .iter()
            .map(|&t| if t < e { norm_interval(t.max(lo), e.min(hi)) } else { 0.0 })
            .collect();
        let frozen_total = if lo < e { norm_interval(lo, e.min(hi)) } else { 0.0 };
        Ok(Self {
            taus: grid.taus.clone(),
            lo,
            base,
            lambda,
            node_start,
            frozen_ln_lambda: params.ln_lambda(e),
            frozen_mass,
            frozen_total,
        })
    }

    pub(crate) fn n_levels(&self) -> usize {
        self.taus.len()
    }

    /// `-ln P(Z >= tau_i | c)` for every level.
    pub(crate) fn neg_log_profile(&self, c: u32) -> Vec<f64> {
        let ln_c = (c as f64).ln();
        let c23 = (2.0 * ln_c / 3.0).exp();
        let shared = -ln_c / 3.0;
        let mut terms: Vec<f64> = self
            .base
            .iter()
            .zip(&self.lambda)
            .map(|(&b, &l)| b + shared - l * c23)
            .collect();
        let ln_frozen = self.frozen_ln_lambda + (2.0f64 / 3.0).ln() + shared - self.frozen_ln_lambda.exp() * c23;
        let shift = terms.iter().copied().fold(ln_frozen, f64::max);
        // suffix sums from the top node down
        let mut acc = 0.0;
        for t in terms.iter_mut().rev() {
            acc += (*t - shift).exp();
            *t = acc;
        }
        let frozen_scale = (ln_frozen - shift).exp();
        let suffix = |k: usize| terms.get(k).copied().unwrap_or(0.0);
        let total = suffix(0) + frozen_scale * self.frozen_total;
        let ln_total = total.ln();
        self.taus
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                if t <= self.lo {
                    return 0.0;
                }
                let num = suffix(self.node_start[i]) + frozen_scale * self.frozen_mass[i];
                (ln_total - num.ln()).max(0.0)
            })
            .collect()
    }
}

/// `-ln P(Z >= tau_level | c)` for each requested `(level, size)` pair.
pub(crate) fn exceedance_weights(
    quad: &ProfileQuadrature,
    mut demands: Vec<(u32, u32)>,
) -> HashMap<(u32, u32), f64> {
    // group by size so each profile is computed once
    demands.sort_unstable_by_key(|&(level, size)| (size, level));
    demands.dedup();
    let mut groups: Vec<&[(u32, u32)]> = Vec::new();
    let mut start = 0;
    for k in 1..=demands.len() {
        if k == demands.len() || demands[k].1 != demands[start].1 {
            groups.push(&demands[start..k]);
            start = k;
        }
    }
    let n_levels = quad.n_levels();
    let values: Vec<Vec<f64>> = groups
        .par_iter()
        .map(|g| {
            let prof = quad.neg_log_profile(g[0].1);
            g.iter()
                .map(|&(level, _)| if (level as usize) < n_levels { prof[level as usize] } else { 0.0 })
                .collect()
        })
        .collect();
    let mut out = HashMap::with_capacity(demands.len());
    for (g, vals) in groups.iter().zip(values) {
        for (&key, v) in g.iter().zip(vals) {
            out.insert(key, v);
        }
    }
    out
}

/// Prior-only exceedance on a support, for callers comparing against the
/// flat-likelihood limit.
pub fn restricted_prior_exceedance(tau: f64, support: &PriorSupport) -> f64 {
    let lo = support.lo_value();
    let den = if lo == f64::NEG_INFINITY {
        norm_cdf(support.hi)
    } else {
        norm_interval(lo, support.hi)
    };
    norm_interval(tau, support.hi) / den
}
