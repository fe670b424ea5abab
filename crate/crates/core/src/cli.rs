//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::enhance::{tfce_exact, tfce_riemann, RiemannStep, TfceParams};
use crate::error::{Error, Result};
use crate::grf::{estimate_smoothness, make_threshold_grid, GrfParams, PriorSupport, TableCache};
use crate::infer::{
    bonferroni_z_threshold, ptfce, two_sided_enhance, Correction, EnhancedMap, Pipeline, PtfceOptions,
};
use crate::nifti::{load_stack, load_volume, save_bytes, save_volume, write_nifti_stack};
use crate::perm::{perm_fwer_p, sign_flip_null, Enhancer};
use crate::sim::{
    dice, generate_phantom, one_sample_t_to_z, pearson_r, run_experiment, ExperimentConfig, ExperimentId,
    PhantomSpec, SCHEMA_VERSION,
};
use crate::volume::{Dims, Mask3D, Volume3D};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Riemann-sum TFCE.
    Tfce,
    /// Exact TFCE from the merge tree.
    Etfce,
    /// Baseline pTFCE with per-level labelling.
    Ptfce,
    /// Merge-tree cluster sizes with GRF p-values.
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionArg {
    Bonferroni,
    BhFdr,
}

impl From<CorrectionArg> for Correction {
    fn from(c: CorrectionArg) -> Self {
        match c {
            CorrectionArg::Bonferroni => Correction::Bonferroni,
            CorrectionArg::BhFdr => Correction::BhFdr,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "etfce-grf", version, about = "Threshold-free cluster enhancement with GRF inference")]
pub struct Cli {
    /// Worker threads; defaults to available parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for all randomness; an entropy seed is drawn and echoed when absent.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Lookup-table cache directory (overrides the environment).
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    /// Report format written to stdout.
    #[arg(long, global = true, value_enum, default_value_t = ReportFormat::Json)]
    pub format: ReportFormat,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TfceArgs {
    /// Extent exponent.
    #[arg(long, default_value_t = 0.5)]
    pub e: f64,
    /// Height exponent.
    #[arg(long, default_value_t = 2.0)]
    pub h: f64,
    /// Lower integration bound.
    #[arg(long, default_value_t = 0.0)]
    pub h0: f64,
    /// Riemann step size.
    #[arg(long, default_value_t = 0.1)]
    pub dh: f64,
    /// Omit the step factor from the Riemann sum.
    #[arg(long)]
    pub fsl_bug_compat: bool,
}

impl TfceArgs {
    fn params(&self) -> TfceParams {
        TfceParams {
            e: self.e,
            h: self.h,
            h0: self.h0,
            step: RiemannStep::Fixed(self.dh),
            fsl_bug_compat: self.fsl_bug_compat,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SmoothnessArgs {
    /// Isotropic FWHM in voxels, or three comma-separated values.
    #[arg(long, value_delimiter = ',', num_args = 1..=3)]
    pub fwhm: Vec<f64>,
    /// 4D subject stack whose residuals give the smoothness.
    #[arg(long, conflicts_with = "fwhm")]
    pub residuals: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enhance a Z map and write S, p and Z maps plus a JSON summary.
    Enhance {
        input: PathBuf,
        out_prefix: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Hybrid)]
        method: Method,
        /// Threshold levels; defaults to 100 for ptfce and 500 for hybrid.
        #[arg(long)]
        n_levels: Option<usize>,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[command(flatten)]
        smoothness: SmoothnessArgs,
        #[command(flatten)]
        tfce: TfceArgs,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = CorrectionArg::Bonferroni)]
        correction: CorrectionArg,
        /// Enhance both tails and keep the stronger per voxel.
        #[arg(long)]
        two_sided: bool,
        /// Interpolate exceedances from the cached lookup table.
        #[arg(long, conflicts_with = "two_sided")]
        table: bool,
    },
    /// Estimate smoothness from a 4D subject stack.
    Smoothest {
        stack: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// Simulate a subject stack with the standard ellipsoid layout.
    Phantom {
        out_prefix: PathBuf,
        #[arg(long, default_value_t = 64)]
        dims: usize,
        #[arg(long, default_value_t = 80)]
        subjects: usize,
        #[arg(long, default_value_t = 0.1)]
        amplitude: f64,
        #[arg(long, default_value_t = 1.5)]
        sigma: f64,
        /// Smooth the signal together with the noise.
        #[arg(long)]
        smooth_signal: bool,
    },
    /// Run a Monte Carlo experiment protocol.
    Experiment {
        /// null_fwer, power, bench, smoothness, concordance or grid_convergence.
        id: String,
        #[arg(long)]
        realisations: Option<usize>,
        #[arg(long)]
        dims: Option<usize>,
        #[arg(long)]
        subjects: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        amplitudes: Vec<f64>,
        #[arg(long)]
        permutations: Option<usize>,
        #[arg(long)]
        repeats: Option<usize>,
        /// Also write `<id>.json` and `<id>.csv` here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Sign-flip permutation p-values for TFCE scores.
    Perm {
        stack: PathBuf,
        out_prefix: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Method::Etfce)]
        method: Method,
        #[arg(long = "permutations", short = 'B', default_value_t = 200)]
        permutations: usize,
        #[command(flatten)]
        tfce: TfceArgs,
    },
    /// Time each enhancement method on a Z map.
    Bench {
        input: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[command(flatten)]
        smoothness: SmoothnessArgs,
        /// Timed repeats after one discarded warm-up.
        #[arg(long, default_value_t = 30)]
        repeats: usize,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Method::Ptfce, Method::Hybrid, Method::Etfce])]
        methods: Vec<Method>,
        /// Subject stack; adds a permutation eTFCE run.
        #[arg(long)]
        stack: Option<PathBuf>,
        #[arg(long = "permutations", short = 'B', default_value_t = 200)]
        permutations: usize,
    },
    /// Compare two maps.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Dice is computed on voxels above this value.
        #[arg(long)]
        threshold: f64,
        #[arg(long)]
        mask: Option<PathBuf>,
    },
}

impl Command {
    fn uses_seed(&self) -> bool {
        matches!(
            self,
            Command::Phantom { .. } | Command::Experiment { .. } | Command::Perm { .. } | Command::Bench { stack: Some(_), .. }
        )
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Enhance { .. } => "enhance",
            Command::Smoothest { .. } => "smoothest",
            Command::Phantom { .. } => "phantom",
            Command::Experiment { .. } => "experiment",
            Command::Perm { .. } => "perm",
            Command::Bench { .. } => "bench",
            Command::Compare { .. } => "compare",
        }
    }
}

/// Resolved settings echoed into every report.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub inputs: Vec<PathBuf>,
    pub output: Option<PathBuf>,
    pub method: Option<Method>,
    pub tfce: Option<TfceArgs>,
    pub n_levels: Option<usize>,
    pub alpha: Option<f64>,
    pub correction: Option<CorrectionArg>,
    pub two_sided: bool,
    pub seed: u64,
    pub seed_from_entropy: bool,
    pub permutations: Option<usize>,
    pub cache_dir: Option<PathBuf>,
    pub threads: usize,
    pub format: ReportFormat,
}

impl RunConfig {
    fn new(cli: &Cli, seed: u64) -> Self {
        Self {
            subcommand: cli.command.name().to_string(),
            inputs: Vec::new(),
            output: None,
            method: None,
            tfce: None,
            n_levels: None,
            alpha: None,
            correction: None,
            two_sided: false,
            seed,
            seed_from_entropy: cli.seed.is_none(),
            permutations: None,
            cache_dir: cli.cache_dir.clone(),
            threads: rayon::current_num_threads(),
            format: cli.format,
        }
    }
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })
}

fn read_volume(path: &Path) -> Result<Volume3D> {
    with_path(path, load_volume(path)).map(|(v, _)| v)
}

fn read_stack(path: &Path) -> Result<crate::volume::SubjectStack> {
    with_path(path, load_stack(path)).map(|(s, _)| s)
}

fn load_mask(path: Option<&Path>, dims: Dims) -> Result<Mask3D> {
    match path {
        Some(p) => {
            let m = read_volume(p)?;
            let mask = Mask3D::nonzero(&m);
            mask.check_dims(dims)?;
            Ok(mask)
        }
        None => Ok(Mask3D::full(dims)),
    }
}

fn grf_params(args: &SmoothnessArgs, mask: &Mask3D) -> Result<GrfParams> {
    if let Some(p) = &args.residuals {
        let stack = read_stack(p)?;
        return estimate_smoothness(&stack.residuals(), mask);
    }
    let fwhm = match args.fwhm.as_slice() {
        [f] => [*f; 3],
        [x, y, z] => [*x, *y, *z],
        _ => return Err(Error::InvalidParams("pTFCE needs --fwhm (1 or 3 values) or --residuals".into())),
    };
    GrfParams::from_fwhm(mask.count(), fwhm)
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)?)?;
    Ok(())
}

/// Writes to stdout; a closed pipe is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn report(format: ReportFormat, v: &Value) -> Result<()> {
    match format {
        ReportFormat::Json => emit(&format!("{}\n", serde_json::to_string_pretty(v)?)),
        ReportFormat::Csv => {
            // flat key,value listing of the top-level scalars
            let mut text = String::from("key,value\n");
            if let Value::Object(m) = v {
                for (k, x) in m {
                    if !x.is_object() && !x.is_array() {
                        text.push_str(&format!("{k},{x}\n"));
                    }
                }
            }
            emit(&text)
        }
    }
}

fn envelope(cfg: &RunConfig, body: Value) -> Value {
    let mut out = json!({ "schema_version": SCHEMA_VERSION, "run_config": cfg });
    if let (Value::Object(o), Value::Object(b)) = (&mut out, body) {
        o.extend(b);
    }
    out
}

fn enhanced(
    method: Method,
    z: &Volume3D,
    mask: &Mask3D,
    params: &GrfParams,
    n_levels: usize,
    two_sided: bool,
    cache: Option<&TableCache>,
) -> Result<EnhancedMap> {
    let pipeline = if method == Method::Ptfce { Pipeline::Baseline } else { Pipeline::Hybrid };
    let opts = PtfceOptions::new(pipeline).with_levels(n_levels);
    if two_sided {
        return two_sided_enhance(z, mask, params, &opts);
    }
    match cache {
        Some(cache) => {
            let z_max = z.max_in(mask).filter(|&m| m > 0.0).ok_or(Error::NonPositiveMap)?;
            let grid = make_threshold_grid(z_max, n_levels)?;
            let support = PriorSupport::for_max(z_max);
            let (table, _) = cache.load_or_build(params, &grid, &support)?;
            ptfce(z, mask, params, &PtfceOptions { table: Some(&table), ..opts })
        }
        None => ptfce(z, mask, params, &opts),
    }
}

fn run(cli: Cli, seed: u64) -> Result<()> {
    let mut cfg = RunConfig::new(&cli, seed);
    let format = cli.format;
    let cache = || match &cli.cache_dir {
        Some(d) => TableCache::new(d),
        None => TableCache::from_env_or(std::env::temp_dir().join("etfce-grf-cache")),
    };
    match &cli.command {
        Command::Enhance {
            input,
            out_prefix,
            method,
            n_levels,
            mask,
            smoothness,
            tfce,
            alpha,
            correction,
            two_sided,
            table,
        } => {
            cfg.inputs.push(input.clone());
            cfg.output = Some(out_prefix.clone());
            cfg.method = Some(*method);
            cfg.alpha = Some(*alpha);
            cfg.correction = Some(*correction);
            cfg.two_sided = *two_sided;
            let z = read_volume(input)?;
            let mask = load_mask(mask.as_deref(), z.dims())?;
            z.check_finite_on(&mask)?;
            let s_path = with_suffix(out_prefix, ".S.nii");
            let body = match method {
                Method::Tfce | Method::Etfce => {
                    cfg.tfce = Some(tfce.clone());
                    let params = tfce.params();
                    let scores = if *method == Method::Tfce {
                        tfce_riemann(&z, &mask, &params)?
                    } else {
                        tfce_exact(&z, &mask, &params)?
                    };
                    save_volume(&s_path, &scores.to_volume(), Some(&mask))?;
                    json!({ "max_score": scores.max(), "outputs": [s_path] })
                }
                Method::Ptfce | Method::Hybrid => {
                    let pipeline = if *method == Method::Ptfce { Pipeline::Baseline } else { Pipeline::Hybrid };
                    let n = n_levels.unwrap_or(pipeline.default_levels());
                    cfg.n_levels = Some(n);
                    let params = grf_params(smoothness, &mask)?;
                    let table_cache = table.then(cache);
                    let map = enhanced(*method, &z, &mask, &params, n, *two_sided, table_cache.as_ref())?;
                    let p_path = with_suffix(out_prefix, ".p.nii");
                    let z_path = with_suffix(out_prefix, ".z.nii");
                    let z_out = if *two_sided { z.with_data(map.signed_z())? } else { map.z_volume() };
                    save_volume(&s_path, &map.s_volume(), Some(&mask))?;
                    save_volume(&p_path, &map.p_volume(), Some(&mask))?;
                    save_volume(&z_path, &z_out, Some(&mask))?;
                    let sig = map.significant(*alpha, (*correction).into());
                    json!({
                        "grf": params,
                        "provenance": map.provenance(),
                        "fwer_z_threshold": bonferroni_z_threshold(*alpha, mask.count()),
                        "n_significant": sig.count(),
                        "max_s": map.s().iter().cloned().fold(0.0, f64::max),
                        "outputs": [s_path, p_path, z_path],
                    })
                }
            };
            let out = envelope(&cfg, body);
            write_json(&with_suffix(out_prefix, ".json"), &out)?;
            report(format, &out)
        }
        Command::Smoothest { stack, mask } => {
            cfg.inputs.push(stack.clone());
            let st = read_stack(stack)?;
            let mask = load_mask(mask.as_deref(), st.dims())?;
            let params = estimate_smoothness(&st.residuals(), &mask)?;
            report(format, &envelope(&cfg, json!({ "grf": params })))
        }
        Command::Phantom {
            out_prefix,
            dims,
            subjects,
            amplitude,
            sigma,
            smooth_signal,
        } => {
            cfg.output = Some(out_prefix.clone());
            let mut spec = PhantomSpec::standard(Dims::cube(*dims), *subjects, *amplitude, seed);
            spec.noise_sigma = *sigma;
            spec.smooth_signal = *smooth_signal;
            let ph = generate_phantom(&spec)?;
            let stack_path = with_suffix(out_prefix, ".stack.nii");
            let truth_path = with_suffix(out_prefix, ".truth.nii");
            let mask_path = with_suffix(out_prefix, ".mask.nii");
            let z_path = with_suffix(out_prefix, ".zstat.nii");
            save_bytes(&stack_path, &write_nifti_stack(&ph.stack))?;
            save_volume(&z_path, &one_sample_t_to_z(&ph.stack, &ph.mask)?, Some(&ph.mask))?;
            save_volume(&truth_path, &ph.truth.to_volume(), None)?;
            save_volume(&mask_path, &ph.mask.to_volume(), None)?;
            let out = envelope(
                &cfg,
                json!({ "phantom": spec, "outputs": [stack_path, truth_path, mask_path, z_path] }),
            );
            write_json(&with_suffix(out_prefix, ".json"), &out)?;
            report(format, &out)
        }
        Command::Experiment {
            id,
            realisations,
            dims,
            subjects,
            amplitudes,
            permutations,
            repeats,
            out_dir,
        } => {
            let id: ExperimentId = id.parse()?;
            let mut ec = ExperimentConfig::new(id).with_seed(seed);
            if let Some(r) = realisations {
                ec.realisations = *r;
            }
            if let Some(d) = dims {
                ec.dim = *d;
            }
            if let Some(m) = subjects {
                ec.subjects = *m;
            }
            if !amplitudes.is_empty() {
                ec.amplitudes = amplitudes.clone();
            }
            if let Some(b) = permutations {
                ec.permutations = *b;
            }
            if let Some(r) = repeats {
                ec.repeats = *r;
            }
            cfg.permutations = Some(ec.permutations);
            cfg.output = out_dir.clone();
            let rep = run_experiment(&ec)?;
            if let Some(dir) = out_dir {
                rep.write(dir, id.name())?;
            }
            match format {
                ReportFormat::Json => {
                    let mut v = serde_json::to_value(&rep)?;
                    v["run_config"] = serde_json::to_value(&cfg)?;
                    emit(&format!("{}\n", serde_json::to_string_pretty(&v)?))?;
                }
                ReportFormat::Csv => emit(&rep.to_csv())?,
            }
            Ok(())
        }
        Command::Perm {
            stack,
            out_prefix,
            mask,
            method,
            permutations,
            tfce,
        } => {
            cfg.inputs.push(stack.clone());
            cfg.output = Some(out_prefix.clone());
            cfg.method = Some(*method);
            cfg.tfce = Some(tfce.clone());
            cfg.permutations = Some(*permutations);
            let enhancer = match method {
                Method::Tfce => Enhancer::Riemann(tfce.params()),
                Method::Etfce => Enhancer::Exact(tfce.params()),
                _ => return Err(Error::InvalidParams("perm supports --method tfce or etfce".into())),
            };
            let st = read_stack(stack)?;
            let mask = load_mask(mask.as_deref(), st.dims())?;
            let z = one_sample_t_to_z(&st, &mask)?;
            let obs = enhancer.enhance(&z, &mask)?;
            let dist = sign_flip_null(&st, &mask, &enhancer, *permutations, seed)?;
            let p = perm_fwer_p(&obs, &dist);
            let s_path = with_suffix(out_prefix, ".S.nii");
            let p_path = with_suffix(out_prefix, ".p.nii");
            save_volume(&s_path, &obs.to_volume(), Some(&mask))?;
            save_volume(&p_path, &z.with_data(p.clone())?, Some(&mask))?;
            let n_sig = mask.indices().filter(|&i| p[i] < 0.05).count();
            let out = envelope(
                &cfg,
                json!({
                    "max_score": obs.max(),
                    "min_p": dist.p_value(obs.max()),
                    "n_significant_05": n_sig,
                    "null_max": dist.max_scores(),
                    "outputs": [s_path, p_path],
                }),
            );
            write_json(&with_suffix(out_prefix, ".json"), &out)?;
            report(format, &out)
        }
        Command::Bench {
            input,
            mask,
            smoothness,
            repeats,
            methods,
            stack,
            permutations,
        } => {
            cfg.inputs.push(input.clone());
            if let Some(s) = stack {
                cfg.inputs.push(s.clone());
                cfg.permutations = Some(*permutations);
            }
            let z = read_volume(input)?;
            let mask = load_mask(mask.as_deref(), z.dims())?;
            let needs_grf = methods.iter().any(|m| matches!(m, Method::Ptfce | Method::Hybrid));
            let params = if needs_grf { Some(grf_params(smoothness, &mask)?) } else { None };
            let mut results = serde_json::Map::new();
            for &m in methods {
                let times = crate::sim::time_repeats(*repeats, || {
                    match m {
                        Method::Tfce => drop(tfce_riemann(&z, &mask, &TfceParams::default())?),
                        Method::Etfce => drop(tfce_exact(&z, &mask, &TfceParams::default())?),
                        Method::Ptfce | Method::Hybrid => {
                            let params = params.as_ref().expect("checked above");
                            let pl = if m == Method::Ptfce { Pipeline::Baseline } else { Pipeline::Hybrid };
                            drop(enhanced(m, &z, &mask, params, pl.default_levels(), false, None)?)
                        }
                    }
                    Ok(())
                })?;
                results.insert(format!("{m:?}").to_lowercase(), timing(&times));
            }
            if let Some(s) = stack {
                let st = read_stack(s)?;
                let enhancer = Enhancer::Exact(TfceParams::default());
                let times = crate::sim::time_repeats(*repeats, || {
                    drop(sign_flip_null(&st, &mask, &enhancer, *permutations, seed)?);
                    Ok(())
                })?;
                results.insert("perm_etfce".into(), timing(&times));
            }
            report(
                format,
                &envelope(&cfg, json!({ "repeats": repeats, "warmup_discarded": true, "methods": results })),
            )
        }
        Command::Compare {
            a,
            b,
            threshold,
            mask,
        } => {
            cfg.inputs.extend([a.clone(), b.clone()]);
            let va = read_volume(a)?;
            let vb = read_volume(b)?;
            if va.dims() != vb.dims() {
                return Err(Error::ShapeMismatch("maps differ in grid size".into()));
            }
            let mask = load_mask(mask.as_deref(), va.dims())?;
            let (x, y) = (va.data(), vb.data());
            let diffs: Vec<f64> = mask.indices().map(|i| (x[i] - y[i]).abs()).collect();
            let above = |d: &[f64]| Mask3D::from_fn(va.dims(), |i, j, k| {
                let v = va.dims().index(i, j, k);
                mask.contains(v) && d[v] > *threshold
            });
            let (sa, sb) = (above(x), above(y));
            let body = json!({
                "r": pearson_r(x, y, &mask)?,
                "max_abs_dz": diffs.iter().cloned().fold(0.0, f64::max),
                "mean_abs_dz": diffs.iter().sum::<f64>() / diffs.len().max(1) as f64,
                "dice": dice(&sa, &sb)?,
                "threshold": threshold,
                "n_above_a": sa.count(),
                "n_above_b": sb.count(),
            });
            report(format, &envelope(&cfg, body))
        }
    }
}

fn timing(times: &[f64]) -> Value {
    let n = times.len() as f64;
    let mean = times.iter().sum::<f64>() / n;
    let sd = if times.len() > 1 {
        (times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    json!({ "repeats": times.len(), "mean_seconds": mean, "sd_seconds": sd, "seconds": times })
}

/// Parses `args`, runs the subcommand and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 || rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            eprintln!("error: cannot configure {n} worker threads");
            return EXIT_USAGE;
        }
    }
    let seed = cli.seed.unwrap_or_else(rand::random);
    if cli.seed.is_none() && cli.command.uses_seed() {
        eprintln!("seed: {seed}");
    }
    match run(cli, seed) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::UnknownExperiment(_) => EXIT_USAGE,
                _ => EXIT_DATA,
            }
        }
    }
}
