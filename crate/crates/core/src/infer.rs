//! Analytical cluster-enhanced inference: baseline pTFCE with per-level
//! connected-component labelling, the hybrid merge-tree pipeline, two-sided
//! recombination and multiple-comparison thresholds.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{descending_order, LevelLabeller, MergeTree};
use crate::error::{Error, Result};
use crate::grf::{
    exceedance_weights, make_threshold_grid, q_function, ExceedanceTable, GrfParams, PriorSupport,
    ProfileQuadrature, ThresholdGrid,
};
use crate::stats::{norm_isf_log, Z_CLAMP};
use crate::volume::{Dims, Mask3D, Volume3D};

/// Cap on `S`, so that `p_enh >= 1e-308`.
pub const S_CAP: f64 = 709.196_208_642_166;
/// Lower clamp for enhanced Z.
pub const Z_ENH_MIN: f64 = -8.2;

pub const BASELINE_LEVELS: usize = 100;
pub const HYBRID_LEVELS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// Cluster sizes by labelling each grid level.
    Baseline,
    /// Cluster sizes from the merge tree.
    Hybrid,
}

impl Pipeline {
    pub fn default_levels(self) -> usize {
        match self {
            Pipeline::Baseline => BASELINE_LEVELS,
            Pipeline::Hybrid => HYBRID_LEVELS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Correction {
    Bonferroni,
    BhFdr,
}

/// Pipeline configuration.
#[derive(Debug, Clone, Copy)]
pub struct PtfceOptions<'a> {
    pub pipeline: Pipeline,
    pub n_levels: usize,
    /// Height prior support; defaults to `(-inf, z_max + 1]`.
    pub support: Option<PriorSupport>,
    /// Interpolate exceedances from a precomputed table instead of exact
    /// quadrature. The table must share the grid.
    pub table: Option<&'a ExceedanceTable>,
}

impl PtfceOptions<'_> {
    pub fn new(pipeline: Pipeline) -> Self {
        Self {
            pipeline,
            n_levels: pipeline.default_levels(),
            support: None,
            table: None,
        }
    }

    pub fn with_levels(mut self, n_levels: usize) -> Self {
        self.n_levels = n_levels;
        self
    }
}

/// Which pipeline and grid produced a map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub pipeline: Pipeline,
    pub n_levels: usize,
    /// Grid spacing of the positive tail (and of the negative tail when two-sided).
    pub delta: Vec<f64>,
    pub z_max: Vec<f64>,
    pub two_sided: bool,
}

/// Accumulated evidence `S`, enhanced p-values and enhanced Z-scores.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhancedMap {
    dims: Dims,
    mask: Mask3D,
    s: Vec<f64>,
    p: Vec<f64>,
    z: Vec<f64>,
    sign: Vec<i8>,
    provenance: Provenance,
}

fn z_from_s(s: f64) -> f64 {
    norm_isf_log(-s).clamp(Z_ENH_MIN, Z_CLAMP)
}

impl EnhancedMap {
    fn from_s(mask: &Mask3D, s: Vec<f64>, sign: Vec<i8>, provenance: Provenance) -> Self {
        let p = s.iter().map(|&x| (-x).exp()).collect();
        let z = s.iter().map(|&x| z_from_s(x)).collect();
        Self {
            dims: mask.dims(),
            mask: mask.clone(),
            s,
            p,
            z,
            sign,
            provenance,
        }
    }

    fn empty(mask: &Mask3D, provenance: Provenance) -> Self {
        let n = mask.dims().len();
        Self::from_s(mask, vec![0.0; n], vec![0; n], provenance)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn mask(&self) -> &Mask3D {
        &self.mask
    }

    /// Evidence in `-ln p` units.
    pub fn s(&self) -> &[f64] {
        &self.s
    }

    /// `exp(-S)`.
    pub fn p(&self) -> &[f64] {
        &self.p
    }

    /// `Phi^{-1}(1 - p)` clamped to `[-8.2, 38]`.
    pub fn z(&self) -> &[f64] {
        &self.z
    }

    /// Tail of origin: +1, -1, or 0 where neither tail carries evidence.
    pub fn sign(&self) -> &[i8] {
        &self.sign
    }

    /// `sign * z`, 0 where the sign is 0.
    pub fn signed_z(&self) -> Vec<f64> {
        self.z
            .iter()
            .zip(&self.sign)
            .map(|(&z, &s)| if s == 0 { 0.0 } else { s as f64 * z })
            .collect()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    fn volume(&self, data: &[f64]) -> Volume3D {
        let masked = (0..data.len())
            .map(|i| if self.mask.contains(i) { data[i] } else { 0.0 })
            .collect();
        Volume3D::from_data(self.dims, masked).expect("dims match")
    }

    pub fn s_volume(&self) -> Volume3D {
        self.volume(&self.s)
    }

    pub fn p_volume(&self) -> Volume3D {
        self.volume(&self.p)
    }

    pub fn z_volume(&self) -> Volume3D {
        self.volume(&self.signed_z())
    }

    /// Voxels significant at family-wise or false-discovery level `alpha`.
    pub fn significant(&self, alpha: f64, correction: Correction) -> Mask3D {
        let n = self.mask.count();
        let included = match correction {
            Correction::Bonferroni => {
                let cut = alpha / n as f64;
                (0..self.s.len())
                    .map(|i| self.mask.contains(i) && self.p[i] < cut)
                    .collect()
            }
            Correction::BhFdr => {
                let idx: Vec<usize> = self.mask.indices().collect();
                let ps: Vec<f64> = idx.iter().map(|&i| self.p[i]).collect();
                let sel = bh_fdr_select(&ps, alpha);
                let mut inc = vec![false; self.s.len()];
                for (k, &i) in idx.iter().enumerate() {
                    inc[i] = sel[k];
                }
                inc
            }
        };
        Mask3D::new(self.dims, included).expect("dims match")
    }
}

/// `Phi^{-1}(1 - alpha / n)`.
pub fn bonferroni_z_threshold(alpha: f64, n_voxels: usize) -> f64 {
    norm_isf_log(alpha.ln() - (n_voxels.max(1) as f64).ln())
}

/// Benjamini-Hochberg step-up selection at level `alpha`.
pub fn bh_fdr_select(p_values: &[f64], alpha: f64) -> Vec<bool> {
    let m = p_values.len();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut k = 0;
    for (rank, &i) in idx.iter().enumerate() {
        if p_values[i] <= (rank + 1) as f64 * alpha / m as f64 {
            k = rank + 1;
        }
    }
    let mut out = vec![false; m];
    for &i in &idx[..k] {
        out[i] = true;
    }
    out
}

struct Setup {
    grid: ThresholdGrid,
    support: PriorSupport,
}

fn setup(zmap: &Volume3D, mask: &Mask3D, n_levels: usize, support: Option<PriorSupport>) -> Result<Setup> {
    zmap.check_finite_on(mask)?;
    let z_max = zmap.max_in(mask).ok_or(Error::EmptyMask)?;
    if !(z_max > 0.0) {
        return Err(Error::NonPositiveMap);
    }
    let grid = make_threshold_grid(z_max, n_levels)?;
    let support = support.unwrap_or_else(|| PriorSupport::for_max(z_max));
    Ok(Setup { grid, support })
}

/// `-ln P(Z >= tau_level | c)` for the requested pairs.
fn weights(
    params: &GrfParams,
    setup: &Setup,
    table: Option<&ExceedanceTable>,
    demands: Vec<(u32, u32)>,
) -> Result<HashMap<(u32, u32), f64>> {
    match table {
        None => {
            let quad = ProfileQuadrature::new(params, &setup.grid, &setup.support)?;
            Ok(exceedance_weights(&quad, demands))
        }
        Some(t) => {
            if t.taus() != setup.grid.taus.as_slice() {
                return Err(Error::InvalidParams("exceedance table grid does not match the map".into()));
            }
            Ok(demands
                .into_iter()
                .map(|(level, size)| {
                    let p = t.query(setup.grid.taus[level as usize], size as f64);
                    ((level, size), -(p.clamp(f64::MIN_POSITIVE, 1.0)).ln())
                })
                .map(|(k, w)| (k, w.max(0.0)))
                .collect())
        }
    }
}

fn finish(mask: &Mask3D, zmap: &Volume3D, acc: Vec<f64>, setup: &Setup, pipeline: Pipeline) -> EnhancedMap {
    let s: Vec<f64> = acc
        .iter()
        .map(|&a| q_function(a, setup.grid.delta).min(S_CAP))
        .collect();
    let sign = (0..s.len())
        .map(|i| i8::from(mask.contains(i) && zmap.data()[i] > 0.0))
        .collect();
    EnhancedMap::from_s(
        mask,
        s,
        sign,
        Provenance {
            pipeline,
            n_levels: setup.grid.n_levels,
            delta: vec![setup.grid.delta],
            z_max: vec![setup.grid.z_max],
            two_sided: false,
        },
    )
}

fn baseline(zmap: &Volume3D, mask: &Mask3D, params: &GrfParams, opts: &PtfceOptions) -> Result<EnhancedMap> {
    let setup = setup(zmap, mask, opts.n_levels, opts.support)?;
    let values = zmap.data();
    let order = descending_order(values, mask);
    let mut labeller = LevelLabeller::new(zmap.dims(), values, mask);
    let mut level_sizes: Vec<Vec<u32>> = Vec::with_capacity(setup.grid.n_levels);
    let mut demands = Vec::new();
    for (i, &tau) in setup.grid.taus.iter().enumerate() {
        let len = order.partition_point(|&v| values[v as usize] >= tau);
        let supra = &order[..len];
        labeller.label(supra, tau);
        let sizes: Vec<u32> = supra.iter().map(|&v| labeller.size(v as usize)).collect();
        let mut distinct = sizes.clone();
        distinct.sort_unstable();
        distinct.dedup();
        demands.extend(distinct.into_iter().map(|s| (i as u32, s)));
        level_sizes.push(sizes);
    }
    let w = weights(params, &setup, opts.table, demands)?;
    let mut acc = vec![0.0; values.len()];
    for (i, sizes) in level_sizes.iter().enumerate() {
        for (&v, &size) in order.iter().zip(sizes) {
            if values[v as usize] > 0.0 {
                acc[v as usize] += w[&(i as u32, size)];
            }
        }
    }
    Ok(finish(mask, zmap, acc, &setup, Pipeline::Baseline))
}

fn hybrid(zmap: &Volume3D, mask: &Mask3D, params: &GrfParams, opts: &PtfceOptions) -> Result<EnhancedMap> {
    let setup = setup(zmap, mask, opts.n_levels, opts.support)?;
    let tree = MergeTree::build(zmap, mask)?;
    let taus = &setup.grid.taus;

    // one weight slot per (merge event, level) on which the event is live
    let mut slot_start = vec![usize::MAX; tree.event_count()];
    let mut slot_level = vec![0usize; tree.event_count()];
    let mut demands = Vec::new();
    tree.for_each_event_span(taus, |event, size, a, b| {
        slot_start[event] = demands.len();
        slot_level[event] = a;
        demands.extend((a..b).map(|level| (level as u32, size)));
    });
    let w = weights(params, &setup, opts.table, demands.clone())?;
    let slots: Vec<f64> = demands.iter().map(|key| w[key]).collect();

    let values = zmap.data();
    let positive: Vec<u32> = tree
        .order()
        .iter()
        .copied()
        .take_while(|&v| values[v as usize] > 0.0)
        .collect();
    let sums: Vec<(u32, f64)> = positive
        .par_iter()
        .map_init(Vec::new, |buf: &mut Vec<f64>, &v| {
            buf.clear();
            tree.walk_levels_desc(v as usize, taus, |level, event| {
                buf.push(slots[slot_start[event] + level - slot_level[event]]);
            });
            // ascending level order, as in the baseline
            (v, buf.iter().rev().fold(0.0, |a, &x| a + x))
        })
        .collect();
    let mut acc = vec![0.0; values.len()];
    for (v, a) in sums {
        acc[v as usize] = a;
    }
    Ok(finish(mask, zmap, acc, &setup, Pipeline::Hybrid))
}

/// Runs the configured pipeline on the positive tail of `zmap`.
pub fn ptfce(zmap: &Volume3D, mask: &Mask3D, params: &GrfParams, opts: &PtfceOptions) -> Result<EnhancedMap> {
    match opts.pipeline {
        Pipeline::Baseline => baseline(zmap, mask, params, opts),
        Pipeline::Hybrid => hybrid(zmap, mask, params, opts),
    }
}

/// Baseline pTFCE: per-level labelling on an `n_levels` grid.
pub fn ptfce_baseline(zmap: &Volume3D, mask: &Mask3D, params: &GrfParams, n_levels: usize) -> Result<EnhancedMap> {
    ptfce(zmap, mask, params, &PtfceOptions::new(Pipeline::Baseline).with_levels(n_levels))
}

/// Hybrid pipeline: cluster sizes from the merge tree on an `n_levels` grid.
pub fn ptfce_hybrid(zmap: &Volume3D, mask: &Mask3D, params: &GrfParams, n_levels: usize) -> Result<EnhancedMap> {
    ptfce(zmap, mask, params, &PtfceOptions::new(Pipeline::Hybrid).with_levels(n_levels))
}

/// Enhances both tails and keeps, per voxel, the one with more evidence.
pub fn two_sided_enhance(
    zmap: &Volume3D,
    mask: &Mask3D,
    params: &GrfParams,
    opts: &PtfceOptions,
) -> Result<EnhancedMap> {
    let run = |z: &Volume3D| match ptfce(z, mask, params, opts) {
        Ok(m) => Ok(Some(m)),
        Err(Error::NonPositiveMap) => Ok(None),
        Err(e) => Err(e),
    };
    let pos = run(zmap)?;
    let neg = run(&zmap.map(|x| -x))?;
    let mut provenance = Provenance {
        pipeline: opts.pipeline,
        n_levels: opts.n_levels,
        delta: Vec::new(),
        z_max: Vec::new(),
        two_sided: true,
    };
    for m in [&pos, &neg].into_iter().flatten() {
        provenance.delta.extend(&m.provenance.delta);
        provenance.z_max.extend(&m.provenance.z_max);
    }
    let n = zmap.len();
    let zero = vec![0.0; n];
    let s_pos = pos.as_ref().map_or(&zero, |m| &m.s);
    let s_neg = neg.as_ref().map_or(&zero, |m| &m.s);
    if pos.is_none() && neg.is_none() {
        return Ok(EnhancedMap::empty(mask, provenance));
    }
    let mut s = vec![0.0; n];
    let mut sign = vec![0i8; n];
    for i in mask.indices() {
        if s_neg[i] > s_pos[i] {
            s[i] = s_neg[i];
            sign[i] = -1;
        } else if s_pos[i] > 0.0 {
            s[i] = s_pos[i];
            sign[i] = 1;
        }
    }
    Ok(EnhancedMap::from_s(mask, s, sign, provenance))
}
