use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{
    add_signal, dice, one_sample_t_to_z, pearson_r, phantom_noise, sigma_to_fwhm, splitmix64,
    wilson_interval, PhantomSpec, GENERATOR,
};
use crate::enhance::TfceParams;
use crate::error::{Error, Result};
use crate::grf::{estimate_smoothness, GrfParams};
use crate::infer::{ptfce, Correction, EnhancedMap, Pipeline, PtfceOptions, BASELINE_LEVELS, HYBRID_LEVELS};
use crate::perm::{sign_flip_null, Enhancer};
use crate::volume::{Dims, Mask3D, SubjectStack, Volume3D};

/// Version of the report layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Amplitude ladder of the power experiment.
pub const AMPLITUDE_LADDER: [f64; 10] = [0.005, 0.01, 0.02, 0.03, 0.04, 0.05, 0.07, 0.1, 0.2, 0.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    NullFwer,
    Power,
    Bench,
    Smoothness,
    Concordance,
    GridConvergence,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 6] = [
        ExperimentId::NullFwer,
        ExperimentId::Power,
        ExperimentId::Bench,
        ExperimentId::Smoothness,
        ExperimentId::Concordance,
        ExperimentId::GridConvergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::NullFwer => "null_fwer",
            ExperimentId::Power => "power",
            ExperimentId::Bench => "bench",
            ExperimentId::Smoothness => "smoothness",
            ExperimentId::Concordance => "concordance",
            ExperimentId::GridConvergence => "grid_convergence",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::UnknownExperiment(s.to_string()))
    }
}

/// Scale and protocol settings of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub realisations: usize,
    /// Cube side length.
    pub dim: usize,
    pub subjects: usize,
    pub noise_sigma: f64,
    pub amplitudes: Vec<f64>,
    pub alpha: f64,
    pub pipelines: Vec<Pipeline>,
    pub baseline_levels: usize,
    pub hybrid_levels: usize,
    /// Grid sizes compared against `reference_levels`.
    pub grid_levels: Vec<usize>,
    pub reference_levels: usize,
    pub permutations: usize,
    /// Timed repeats per method, excluding the warm-up.
    pub repeats: usize,
    pub smooth_signal: bool,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Full-scale protocol for `experiment`.
    pub fn new(experiment: ExperimentId) -> Self {
        let mut cfg = Self {
            experiment,
            realisations: 1,
            dim: 64,
            subjects: 80,
            noise_sigma: 1.5,
            amplitudes: vec![0.1],
            alpha: 0.05,
            pipelines: vec![Pipeline::Baseline, Pipeline::Hybrid],
            baseline_levels: BASELINE_LEVELS,
            hybrid_levels: HYBRID_LEVELS,
            grid_levels: vec![25, 50, 100, 200, 500, 1000],
            reference_levels: 5000,
            permutations: 200,
            repeats: 5,
            smooth_signal: false,
            seed: 0,
        };
        match experiment {
            ExperimentId::NullFwer => {
                cfg.realisations = 200;
                cfg.amplitudes = vec![0.0];
            }
            ExperimentId::Power => {
                cfg.realisations = 20;
                cfg.amplitudes = AMPLITUDE_LADDER.to_vec();
            }
            ExperimentId::Bench => {}
            ExperimentId::Smoothness => {
                cfg.realisations = 50;
                cfg.amplitudes = vec![0.0];
            }
            ExperimentId::Concordance => cfg.realisations = 5,
            ExperimentId::GridConvergence => {
                cfg.realisations = 3;
                cfg.pipelines = vec![Pipeline::Hybrid];
            }
        }
        cfg
    }

    pub fn with_scale(mut self, realisations: usize, dim: usize, subjects: usize) -> Self {
        self.realisations = realisations;
        self.dim = dim;
        self.subjects = subjects;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn dims(&self) -> Dims {
        Dims::cube(self.dim)
    }

    /// Seed of realisation `r`.
    pub fn realisation_seed(&self, r: usize) -> u64 {
        splitmix64(self.seed.wrapping_add(r as u64))
    }

    fn phantom(&self, r: usize, amplitude: f64) -> PhantomSpec {
        let mut spec = PhantomSpec::standard(self.dims(), self.subjects, amplitude, self.realisation_seed(r));
        spec.noise_sigma = self.noise_sigma;
        spec.smooth_signal = self.smooth_signal;
        spec
    }

    fn levels(&self, pipeline: Pipeline) -> usize {
        match pipeline {
            Pipeline::Baseline => self.baseline_levels,
            Pipeline::Hybrid => self.hybrid_levels,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.realisations == 0 || self.dim == 0 || self.repeats == 0 {
            return Err(Error::InvalidParams("realisations, dim and repeats must be positive".into()));
        }
        if self.subjects < 2 {
            return Err(Error::TooFewSubjects(self.subjects));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParams(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.amplitudes.is_empty() || self.pipelines.is_empty() {
            return Err(Error::InvalidParams("amplitudes and pipelines must be non-empty".into()));
        }
        Ok(())
    }
}

/// Structured result of `run_experiment`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: ExperimentId,
    pub config: ExperimentConfig,
    pub generator: String,
    /// Phantom of realisation 0, recording geometry and mask rule.
    pub phantom: PhantomSpec,
    pub rows: Vec<Map<String, Value>>,
    pub summary: Value,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Rows as CSV, with the columns of the first row.
    pub fn to_csv(&self) -> String {
        let Some(first) = self.rows.first() else {
            return String::new();
        };
        let keys: Vec<&String> = first.keys().collect();
        let mut out = keys.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = keys
                .iter()
                .map(|k| match row.get(*k) {
                    Some(Value::String(s)) => s.clone(),
                    Some(Value::Null) | None => String::new(),
                    Some(v) => v.to_string(),
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Writes `<stem>.json` and `<stem>.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let json_path = dir.join(format!("{stem}.json"));
        let csv_path = dir.join(format!("{stem}.csv"));
        std::fs::write(&json_path, self.to_json()?)?;
        std::fs::write(&csv_path, self.to_csv())?;
        Ok((json_path, csv_path))
    }

    /// Summary entry by key.
    pub fn summary_value(&self, key: &str) -> Option<&Value> {
        self.summary.get(key)
    }
}

fn row(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => Map::new(),
    }
}

struct Study {
    mask: Mask3D,
    truth: Mask3D,
    z: Volume3D,
    grf: GrfParams,
}

fn analyse(stack: &SubjectStack, spec: &PhantomSpec, grf: Option<&GrfParams>) -> Result<Study> {
    let mask = spec.mask.build(spec.dims);
    let z = one_sample_t_to_z(stack, &mask)?;
    let grf = match grf {
        Some(g) => *g,
        None => estimate_smoothness(&stack.residuals(), &mask)?,
    };
    Ok(Study {
        mask,
        truth: spec.truth(),
        z,
        grf,
    })
}

/// Enhanced map, or `None` when the map has no positive voxel.
fn enhance(study: &Study, pipeline: Pipeline, n_levels: usize) -> Result<Option<EnhancedMap>> {
    match ptfce(&study.z, &study.mask, &study.grf, &PtfceOptions::new(pipeline).with_levels(n_levels)) {
        Ok(m) => Ok(Some(m)),
        Err(Error::NonPositiveMap) => Ok(None),
        Err(e) => Err(e),
    }
}

fn detections(map: Option<&EnhancedMap>, mask: &Mask3D, alpha: f64) -> Mask3D {
    match map {
        Some(m) => m.significant(alpha, Correction::Bonferroni),
        None => Mask3D::new(mask.dims(), vec![false; mask.dims().len()]).expect("dims match"),
    }
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

fn realisations<T: Send>(cfg: &ExperimentConfig, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..cfg.realisations).into_par_iter().map(f).collect()
}

fn null_fwer(cfg: &ExperimentConfig) -> Result<(Vec<Map<String, Value>>, Value)> {
    let per = realisations(cfg, |r| {
        let spec = cfg.phantom(r, 0.0);
        let stack = phantom_noise(&spec)?;
        let study = analyse(&stack, &spec, None)?;
        let n_mask = study.mask.count() as f64;
        cfg.pipelines
            .iter()
            .map(|&pl| {
                let map = enhance(&study, pl, cfg.levels(pl))?;
                let sig = detections(map.as_ref(), &study.mask, cfg.alpha);
                let p05 = map.as_ref().map_or(0, |m| study.mask.indices().filter(|&i| m.p()[i] < 0.05).count());
                Ok(row(json!({
                    "realisation": r,
                    "seed": spec.seed,
                    "pipeline": pl,
                    "rejected": sig.count() > 0,
                    "n_significant": sig.count(),
                    "voxel_p05_fraction": p05 as f64 / n_mask,
                    "fwhm_mean": study.grf.fwhm_vox.iter().sum::<f64>() / 3.0,
                })))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let rows: Vec<_> = per.into_iter().flatten().collect();
    let mut summary = Map::new();
    for &pl in &cfg.pipelines {
        let mine: Vec<_> = rows.iter().filter(|r| r["pipeline"] == json!(pl)).collect();
        let k = mine.iter().filter(|r| r["rejected"] == json!(true)).count();
        let (lo, hi) = wilson_interval(k, mine.len(), 0.95)?;
        let fr: Vec<f64> = mine.iter().map(|r| r["voxel_p05_fraction"].as_f64().unwrap_or(0.0)).collect();
        summary.insert(
            serde_json::to_value(pl)?.as_str().unwrap_or_default().to_string(),
            json!({
                "rejections": k,
                "realisations": mine.len(),
                "fwer": k as f64 / mine.len() as f64,
                "wilson_lo": lo,
                "wilson_hi": hi,
                "mean_voxel_p05_fraction": mean_sd(&fr).0,
            }),
        );
    }
    Ok((rows, Value::Object(summary)))
}

fn power(cfg: &ExperimentConfig) -> Result<(Vec<Map<String, Value>>, Value)> {
    let per = realisations(cfg, |r| {
        let base = cfg.phantom(r, 0.0);
        let noise = phantom_noise(&base)?;
        let grf = estimate_smoothness(&noise.residuals(), &base.mask.build(base.dims))?;
        let mut rows = Vec::new();
        for &a in &cfg.amplitudes {
            let spec = base.clone().with_amplitude(a);
            let study = analyse(&add_signal(&noise, &spec)?, &spec, Some(&grf))?;
            for &pl in &cfg.pipelines {
                let map = enhance(&study, pl, cfg.levels(pl))?;
                let sig = detections(map.as_ref(), &study.mask, cfg.alpha);
                let tp = sig.intersection_count(&study.truth);
                rows.push(row(json!({
                    "realisation": r,
                    "seed": spec.seed,
                    "amplitude": a,
                    "pipeline": pl,
                    "dice": dice(&sig, &study.truth)?,
                    "tpr": tp as f64 / study.truth.count() as f64,
                    "false_positives": sig.count() - tp,
                    "n_significant": sig.count(),
                })));
            }
        }
        Ok(rows)
    })?;
    let rows: Vec<_> = per.into_iter().flatten().collect();
    let mut summary = Map::new();
    for &pl in &cfg.pipelines {
        let mut curve = Vec::new();
        let mut onset = Value::Null;
        for &a in &cfg.amplitudes {
            let mine: Vec<_> = rows
                .iter()
                .filter(|r| r["pipeline"] == json!(pl) && r["amplitude"].as_f64() == Some(a))
                .collect();
            let d: Vec<f64> = mine.iter().map(|r| r["dice"].as_f64().unwrap_or(0.0)).collect();
            let t: Vec<f64> = mine.iter().map(|r| r["tpr"].as_f64().unwrap_or(0.0)).collect();
            let fp: u64 = mine.iter().map(|r| r["false_positives"].as_u64().unwrap_or(0)).sum();
            let (md, sd) = mean_sd(&d);
            if onset.is_null() && md > 0.0 {
                onset = json!(a);
            }
            curve.push(json!({
                "amplitude": a,
                "mean_dice": md,
                "sd_dice": sd,
                "se_dice": sd / (d.len() as f64).sqrt(),
                "mean_tpr": mean_sd(&t).0,
                "false_positives": fp,
            }));
        }
        let key = serde_json::to_value(pl)?.as_str().unwrap_or_default().to_string();
        summary.insert(key, json!({ "onset": onset, "curve": curve }));
    }
    Ok((rows, Value::Object(summary)))
}

fn smoothness(cfg: &ExperimentConfig) -> Result<(Vec<Map<String, Value>>, Value)> {
    let rows = realisations(cfg, |r| {
        let spec = cfg.phantom(r, 0.0);
        let stack = phantom_noise(&spec)?;
        let g = estimate_smoothness(&stack.residuals(), &spec.mask.build(spec.dims))?;
        let f = g.fwhm_vox;
        Ok(row(json!({
            "realisation": r,
            "seed": spec.seed,
            "fwhm_x": f[0],
            "fwhm_y": f[1],
            "fwhm_z": f[2],
            "fwhm_mean": (f[0] + f[1] + f[2]) / 3.0,
        })))
    })?;
    let means: Vec<f64> = rows.iter().map(|r| r["fwhm_mean"].as_f64().unwrap_or(f64::NAN)).collect();
    let (mean, sd) = mean_sd(&means);
    let truth = sigma_to_fwhm(cfg.noise_sigma);
    Ok((
        rows,
        json!({
            "analytical_fwhm": truth,
            "mean_fwhm": mean,
            "sd_fwhm": sd,
            "relative_error": (mean - truth) / truth,
        }),
    ))
}

fn positive_domain(study: &Study) -> Mask3D {
    Mask3D::from_fn(study.mask.dims(), |x, y, z| {
        let i = study.mask.dims().index(x, y, z);
        study.mask.contains(i) && study.z.data()[i] > 0.0
    })
}

fn z_diffs(a: &[f64], b: &[f64], mask: &Mask3D) -> (f64, f64) {
    let d: Vec<f64> = mask.indices().map(|i| (a[i] - b[i]).abs()).collect();
    let max = d.iter().cloned().fold(0.0, f64::max);
    (max, d.iter().sum::<f64>() / d.len().max(1) as f64)
}

fn concordance(cfg: &ExperimentConfig) -> Result<(Vec<Map<String, Value>>, Value)> {
    let a = cfg.amplitudes[0];
    let rows = realisations(cfg, |r| {
        let spec = cfg.phantom(r, a);
        let noise = phantom_noise(&spec)?;
        let study = analyse(&add_signal(&noise, &spec)?, &spec, None)?;
        let base = enhance(&study, Pipeline::Baseline, cfg.baseline_levels)?.ok_or(Error::NonPositiveMap)?;
        let hyb = enhance(&study, Pipeline::Hybrid, cfg.hybrid_levels)?.ok_or(Error::NonPositiveMap)?;
        let pos = positive_domain(&study);
        let (max_dz, mean_dz) = z_diffs(base.z(), hyb.z(), &pos);
        Ok(row(json!({
            "realisation": r,
            "seed": spec.seed,
            "amplitude": a,
            "r_mask": pearson_r(base.z(), hyb.z(), &study.mask)?,
            "r_positive": pearson_r(base.z(), hyb.z(), &pos)?,
            "dice": dice(
                &base.significant(cfg.alpha, Correction::Bonferroni),
                &hyb.significant(cfg.alpha, Correction::Bonferroni),
            )?,
            "max_abs_dz": max_dz,
            "mean_abs_dz": mean_dz,
        })))
    })?;
    let col = |k: &str| rows.iter().map(|r| r[k].as_f64().unwrap_or(f64::NAN)).collect::<Vec<f64>>();
    let min = |v: Vec<f64>| v.into_iter().fold(f64::INFINITY, f64::min);
    Ok((
        rows.clone(),
        json!({
            "min_r_mask": min(col("r_mask")),
            "min_r_positive": min(col("r_positive")),
            "min_dice": min(col("dice")),
            "max_abs_dz": col("max_abs_dz").into_iter().fold(0.0, f64::max),
        }),
    ))
}

fn grid_convergence(cfg: &ExperimentConfig) -> Result<(Vec<Map<String, Value>>, Value)> {
    let a = cfg.amplitudes[0];
    let per = realisations(cfg, |r| {
        let spec = cfg.phantom(r, a);
        let noise = phantom_noise(&spec)?;
        let study = analyse(&add_signal(&noise, &spec)?, &spec, None)?;
        let reference = enhance(&study, Pipeline::Hybrid, cfg.reference_levels)?.ok_or(Error::NonPositiveMap)?;
        let ref_sig = reference.significant(cfg.alpha, Correction::Bonferroni);
        let pos = positive_domain(&study);
        let mut rows = Vec::new();
        let mut last_ds = f64::INFINITY;
        for &n in &cfg.grid_levels {
            let m = enhance(&study, Pipeline::Hybrid, n)?.ok_or(Error::NonPositiveMap)?;
            let (max_dz, mean_dz) = z_diffs(m.z(), reference.z(), &pos);
            let (max_ds, _) = z_diffs(m.s(), reference.s(), &pos);
            rows.push(row(json!({
                "realisation": r,
                "seed": spec.seed,
                "n_levels": n,
                "r": pearson_r(m.z(), reference.z(), &pos)?,
                "dice": dice(&m.significant(cfg.alpha, Correction::Bonferroni), &ref_sig)?,
                "max_abs_dz": max_dz,
                "mean_abs_dz": mean_dz,
                "max_abs_ds": max_ds,
                "ds_non_increasing": max_ds <= last_ds,
            })));
            last_ds = max_ds;
        }
        Ok(rows)
    })?;
    let rows: Vec<_> = per.into_iter().flatten().collect();
    let curve: Vec<Value> = cfg
        .grid_levels
        .iter()
        .map(|&n| {
            let mine: Vec<_> = rows.iter().filter(|r| r["n_levels"] == json!(n)).collect();
            let get = |k: &str| mine.iter().map(|r| r[k].as_f64().unwrap_or(f64::NAN)).collect::<Vec<f64>>();
            json!({
                "n_levels": n,
                "min_r": get("r").into_iter().fold(f64::INFINITY, f64::min),
                "min_dice": get("dice").into_iter().fold(f64::INFINITY, f64::min),
                "max_abs_dz": get("max_abs_dz").into_iter().fold(0.0, f64::max),
                "max_abs_ds": get("max_abs_ds").into_iter().fold(0.0, f64::max),
            })
        })
        .collect();
    let monotone = rows.iter().all(|r| r["ds_non_increasing"] == json!(true));
    Ok((
        rows,
        json!({ "reference_levels": cfg.reference_levels, "ds_non_increasing": monotone, "curve": curve }),
    ))
}

/// Wall-clock seconds of `repeats` runs after one discarded warm-up.
pub fn time_repeats(repeats: usize, mut f: impl FnMut() -> Result<()>) -> Result<Vec<f64>> {
    f()?;
    (0..repeats)
        .map(|_| {
            let t = Instant::now();
            f()?;
            Ok(t.elapsed().as_secs_f64())
        })
        .collect()
}

fn bench(cfg: &ExperimentConfig) -> Result<(Vec<Map<String, Value>>, Value)> {
    let spec = cfg.phantom(0, cfg.amplitudes[0]);
    let stack = add_signal(&phantom_noise(&spec)?, &spec)?;
    let mask = spec.mask.build(spec.dims);
    let z = one_sample_t_to_z(&stack, &mask)?;
    let residuals = stack.residuals();
    let run_ptfce = |pl: Pipeline, n: usize| -> Result<()> {
        let grf = estimate_smoothness(&residuals, &mask)?;
        std::hint::black_box(ptfce(&z, &mask, &grf, &PtfceOptions::new(pl).with_levels(n))?);
        Ok(())
    };
    let enhancer = Enhancer::Exact(TfceParams::default());
    let methods: Vec<(String, Vec<f64>)> = vec![
        (
            "baseline".to_string(),
            time_repeats(cfg.repeats, || run_ptfce(Pipeline::Baseline, cfg.baseline_levels))?,
        ),
        (
            "hybrid".to_string(),
            time_repeats(cfg.repeats, || run_ptfce(Pipeline::Hybrid, cfg.hybrid_levels))?,
        ),
        (
            "perm_etfce".to_string(),
            time_repeats(cfg.repeats, || {
                let obs = enhancer.enhance(&z, &mask)?;
                let null = sign_flip_null(&stack, &mask, &enhancer, cfg.permutations, spec.seed)?;
                std::hint::black_box(crate::perm::perm_fwer_p(&obs, &null));
                Ok(())
            })?,
        ),
    ];
    let mut rows = Vec::new();
    let mut summary = Map::new();
    for (name, times) in &methods {
        for (k, t) in times.iter().enumerate() {
            rows.push(row(json!({ "method": name, "repeat": k, "seconds": t })));
        }
        let (mean, sd) = mean_sd(times);
        summary.insert(
            name.clone(),
            json!({ "repeats": times.len(), "mean_seconds": mean, "sd_seconds": sd, "seconds": times }),
        );
    }
    let mean = |k: &str| summary[k]["mean_seconds"].as_f64().unwrap_or(f64::NAN);
    let ratio = mean("hybrid") / mean("baseline");
    summary.insert("hybrid_over_baseline".into(), json!(ratio));
    summary.insert("warmup_discarded".into(), json!(true));
    Ok((rows, Value::Object(summary)))
}

/// Runs one experiment protocol at the configured scale.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let (rows, summary) = match cfg.experiment {
        ExperimentId::NullFwer => null_fwer(cfg)?,
        ExperimentId::Power => power(cfg)?,
        ExperimentId::Bench => bench(cfg)?,
        ExperimentId::Smoothness => smoothness(cfg)?,
        ExperimentId::Concordance => concordance(cfg)?,
        ExperimentId::GridConvergence => grid_convergence(cfg)?,
    };
    Ok(ExperimentReport {
        schema_version: SCHEMA_VERSION,
        experiment: cfg.experiment,
        config: cfg.clone(),
        generator: GENERATOR.to_string(),
        phantom: cfg.phantom(0, cfg.amplitudes[0]),
        rows,
        summary,
    })
}
