//! TFCE-family enhancement: Riemann-sum TFCE, exact TFCE and generalised
//! cluster statistics of the form `integral g(e_v(h)) f(h) dh`.

use serde::{Deserialize, Serialize};

use crate::cluster::{ExtentIntegrand, MergeTree};
use crate::error::{Error, Result};
use crate::volume::{Dims, Mask3D, Volume3D};

/// How the Riemann grid is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiemannStep {
    /// Fixed step `dh` (FSL uses 0.1).
    Fixed(f64),
    /// `n` equal steps spanning `(h0, h_max]`.
    Count(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TfceParams {
    /// Extent exponent.
    pub e: f64,
    /// Height exponent.
    pub h: f64,
    /// Lower integration bound.
    pub h0: f64,
    pub step: RiemannStep,
    /// Omit the step factor from the Riemann sum, as FSL does.
    pub fsl_bug_compat: bool,
}

impl Default for TfceParams {
    fn default() -> Self {
        Self {
            e: 0.5,
            h: 2.0,
            h0: 0.0,
            step: RiemannStep::Fixed(0.1),
            fsl_bug_compat: false,
        }
    }
}

impl TfceParams {
    pub fn with_step(mut self, dh: f64) -> Self {
        self.step = RiemannStep::Fixed(dh);
        self
    }

    pub fn with_steps(mut self, n: usize) -> Self {
        self.step = RiemannStep::Count(n);
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("E", self.e), ("H", self.h), ("h0", self.h0)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParams(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        match self.step {
            RiemannStep::Fixed(dh) if !(dh > 0.0 && dh.is_finite()) => Err(Error::NonPositiveStep(dh)),
            RiemannStep::Count(0) => Err(Error::NonPositiveStep(0.0)),
            _ => Ok(()),
        }
    }
}

/// Per-voxel enhancement scores over a mask; 0 outside the mask and for
/// voxels at or below `h0`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhancedScoreMap {
    dims: Dims,
    mask: Mask3D,
    score: Vec<f64>,
}

impl EnhancedScoreMap {
    pub(crate) fn new(mask: &Mask3D, score: Vec<f64>) -> Self {
        Self {
            dims: mask.dims(),
            mask: mask.clone(),
            score,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn mask(&self) -> &Mask3D {
        &self.mask
    }

    pub fn scores(&self) -> &[f64] {
        &self.score
    }

    pub fn score(&self, voxel: usize) -> f64 {
        self.score[voxel]
    }

    /// Largest in-mask score (0 for an all-zero map).
    pub fn max(&self) -> f64 {
        self.mask.indices().map(|i| self.score[i]).fold(0.0, f64::max)
    }

    pub fn to_volume(&self) -> Volume3D {
        Volume3D::from_data(self.dims, self.score.clone()).expect("score length matches dims")
    }
}

/// A cluster statistic `T(v) = integral_{h0}^{h_v} g(e_v(h)) f(h) dh`.
///
/// Exact evaluation needs an antiderivative `F` of the height weight.
pub struct ClusterStatistic {
    extent: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    height: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    antiderivative: Option<Box<dyn Fn(f64) -> f64 + Send + Sync>>,
}

impl std::fmt::Debug for ClusterStatistic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClusterStatistic")
            .field("has_antiderivative", &self.antiderivative.is_some())
            .finish()
    }
}

impl ClusterStatistic {
    pub fn new(
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            extent: Box::new(g),
            height: Box::new(f),
            antiderivative: None,
        }
    }

    pub fn with_antiderivative(mut self, big_f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.antiderivative = Some(Box::new(big_f));
        self
    }

    /// `g(x) = x^E`, `f(h) = h^H`.
    pub fn tfce(e: f64, h: f64) -> Self {
        Self::new(move |x| x.powf(e), move |t| t.powf(h))
            .with_antiderivative(move |t| t.powf(h + 1.0) / (h + 1.0))
    }

    /// `g(x) = x`, `f(h) = 1`.
    pub fn cluster_mass() -> Self {
        Self::new(|x| x, |_| 1.0).with_antiderivative(|t| t)
    }

    pub fn extent_weight(&self, size: f64) -> f64 {
        (self.extent)(size)
    }

    pub fn height_weight(&self, h: f64) -> f64 {
        (self.height)(h)
    }

    fn exact(&self) -> Result<ExactStatistic<'_>> {
        match &self.antiderivative {
            Some(big_f) => Ok(ExactStatistic {
                g: &*self.extent,
                big_f: &**big_f,
            }),
            None => Err(Error::MissingAntiderivative),
        }
    }
}

struct ExactStatistic<'a> {
    g: &'a (dyn Fn(f64) -> f64 + Send + Sync),
    big_f: &'a (dyn Fn(f64) -> f64 + Send + Sync),
}

impl ExtentIntegrand for ExactStatistic<'_> {
    fn extent_weight(&self, size: f64) -> f64 {
        (self.g)(size)
    }

    fn height_antiderivative(&self, h: f64) -> f64 {
        (self.big_f)(h)
    }
}

fn has_positive_part(zmap: &Volume3D, mask: &Mask3D, h0: f64) -> Result<bool> {
    zmap.check_finite_on(mask)?;
    Ok(zmap.max_in(mask).is_some_and(|m| m > h0))
}

/// Evaluates several statistics in one pass over a prebuilt tree.
pub fn exact_statistics_from_tree(
    tree: &MergeTree,
    stats: &[&ClusterStatistic],
    h0: f64,
) -> Result<Vec<EnhancedScoreMap>> {
    let exact: Vec<ExactStatistic> = stats.iter().map(|s| s.exact()).collect::<Result<_>>()?;
    let dyns: Vec<&dyn ExtentIntegrand> = exact.iter().map(|e| e as &dyn ExtentIntegrand).collect();
    Ok(tree
        .integrate_all(&dyns, h0)
        .into_iter()
        .map(|score| EnhancedScoreMap::new(tree.mask(), score))
        .collect())
}

/// Computes several generalised statistics together, sharing one tree.
pub fn generalized_statistics(
    zmap: &Volume3D,
    mask: &Mask3D,
    stats: &[&ClusterStatistic],
    h0: f64,
) -> Result<Vec<EnhancedScoreMap>> {
    for s in stats {
        s.exact()?;
    }
    if !has_positive_part(zmap, mask, h0)? {
        return Ok(stats
            .iter()
            .map(|_| EnhancedScoreMap::new(mask, vec![0.0; zmap.len()]))
            .collect());
    }
    let tree = MergeTree::build(zmap, mask)?;
    exact_statistics_from_tree(&tree, stats, h0)
}

/// Exact `integral_{h0}^{h_v} g(e_v(h)) f(h) dh` at every voxel.
pub fn generalized_statistic(
    zmap: &Volume3D,
    mask: &Mask3D,
    stat: &ClusterStatistic,
    h0: f64,
) -> Result<EnhancedScoreMap> {
    Ok(generalized_statistics(zmap, mask, &[stat], h0)?.remove(0))
}

/// Exact, grid-free TFCE.
pub fn tfce_exact(zmap: &Volume3D, mask: &Mask3D, params: &TfceParams) -> Result<EnhancedScoreMap> {
    params.validate()?;
    generalized_statistic(zmap, mask, &ClusterStatistic::tfce(params.e, params.h), params.h0)
}

/// Exact TFCE from a prebuilt tree.
pub fn tfce_exact_from_tree(tree: &MergeTree, params: &TfceParams) -> Result<EnhancedScoreMap> {
    params.validate()?;
    let stat = ClusterStatistic::tfce(params.e, params.h);
    Ok(exact_statistics_from_tree(tree, &[&stat], params.h0)?.remove(0))
}

/// Riemann grid `tau_i = h0 + i * dh`, `i = 1..=n`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RiemannGrid {
    pub h0: f64,
    pub dh: f64,
    pub n: usize,
}

impl RiemannGrid {
    pub(crate) fn new(params: &TfceParams, h_max: f64) -> Result<Self> {
        params.validate()?;
        let span = h_max - params.h0;
        let (dh, n) = match params.step {
            RiemannStep::Fixed(dh) => (dh, (span / dh).ceil().max(0.0) as usize),
            RiemannStep::Count(n) => (span / n as f64, n),
        };
        Ok(Self { h0: params.h0, dh, n })
    }

    #[inline]
    pub(crate) fn tau(&self, i: usize) -> f64 {
        self.h0 + i as f64 * self.dh
    }

    /// Largest `i` with `tau(i) <= t` (0 when none).
    fn last_at_or_below(&self, t: f64) -> usize {
        let guess = ((t - self.h0) / self.dh).floor();
        let mut i = if guess.is_nan() || guess < 0.0 {
            0
        } else {
            (guess as usize).min(self.n)
        };
        while i < self.n && self.tau(i + 1) <= t {
            i += 1;
        }
        while i > 0 && self.tau(i) > t {
            i -= 1;
        }
        i
    }
}

/// Riemann-sum TFCE with right-endpoint evaluation on `(h0, h_max]`.
pub fn tfce_riemann(zmap: &Volume3D, mask: &Mask3D, params: &TfceParams) -> Result<EnhancedScoreMap> {
    params.validate()?;
    if !has_positive_part(zmap, mask, params.h0)? {
        return Ok(EnhancedScoreMap::new(mask, vec![0.0; zmap.len()]));
    }
    let h_max = zmap.max_in(mask).expect("non-empty mask");
    let tree = MergeTree::build(zmap, mask)?;
    tfce_riemann_from_tree(&tree, params, h_max)
}

pub(crate) fn tfce_riemann_from_tree(
    tree: &MergeTree,
    params: &TfceParams,
    h_max: f64,
) -> Result<EnhancedScoreMap> {
    let grid = RiemannGrid::new(params, h_max)?;
    // prefix[i] = sum_{j <= i} tau_j^H
    let mut prefix = Vec::with_capacity(grid.n + 1);
    prefix.push(0.0);
    let integer_h = params.h.fract() == 0.0 && params.h <= i32::MAX as f64;
    let mut acc = 0.0;
    for i in 1..=grid.n {
        let t = grid.tau(i);
        acc += if integer_h { t.powi(params.h as i32) } else { t.powf(params.h) };
        prefix.push(acc);
    }
    let scale = if params.fsl_bug_compat { 1.0 } else { grid.dh };
    let mut score = vec![0.0; tree.values().len()];
    for &v in tree.order() {
        let v = v as usize;
        if !(tree.value(v) > params.h0) {
            continue;
        }
        let cps = tree.change_points_above(v, params.h0);
        let pts = cps.points();
        let mut raw = 0.0;
        for (k, p) in pts.iter().enumerate() {
            let lo = pts.get(k + 1).map_or(params.h0, |q| q.tau);
            let (a, b) = (grid.last_at_or_below(lo), grid.last_at_or_below(p.tau));
            if b > a {
                raw += (p.size as f64).powf(params.e) * (prefix[b] - prefix[a]);
            }
        }
        score[v] = if params.fsl_bug_compat { raw } else { raw * scale };
    }
    Ok(EnhancedScoreMap::new(tree.mask(), score))
}
