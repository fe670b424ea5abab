//! Synthetic phantoms, one-sample statistics and validation metrics.

mod experiment;

pub use experiment::{
    run_experiment, time_repeats, ExperimentConfig, ExperimentId, ExperimentReport, AMPLITUDE_LADDER, SCHEMA_VERSION,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{norm_isf, t_to_z, Z_CLAMP};
use crate::volume::{Dims, Mask3D, SubjectStack, Volume3D};

/// Name of the noise generator recorded in reports.
pub const GENERATOR: &str = "ChaCha8 seeded by SplitMix64(seed, subject); Ziggurat standard normal";

/// FWHM of a Gaussian kernel with standard deviation `sigma`.
pub fn sigma_to_fwhm(sigma: f64) -> f64 {
    sigma * (8.0 * std::f64::consts::LN_2).sqrt()
}

/// Unit-sum discrete Gaussian truncated at radius `ceil(4 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as i64;
    let mut w: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

fn convolve_axis(data: &[f64], out: &mut [f64], dims: Dims, axis: usize, kernel: &[f64]) {
    let radius = (kernel.len() / 2) as isize;
    let extent = dims.as_array()[axis] as isize;
    let stride = [1, dims.nx, dims.nx * dims.ny][axis] as isize;
    for (i, o) in out.iter_mut().enumerate() {
        let (x, y, z) = dims.coords(i);
        let pos = [x, y, z][axis] as isize;
        let lo = (-radius).max(-pos);
        let hi = radius.min(extent - 1 - pos);
        let mut acc = 0.0;
        for k in lo..=hi {
            acc += kernel[(k + radius) as usize] * data[(i as isize + k * stride) as usize];
        }
        *o = acc;
    }
}

fn smooth_in_place(data: &mut Vec<f64>, dims: Dims, kernel: &[f64]) {
    let mut tmp = vec![0.0; data.len()];
    for axis in 0..3 {
        convolve_axis(data, &mut tmp, dims, axis, kernel);
        std::mem::swap(data, &mut tmp);
    }
}

/// Separable Gaussian smoothing with zero padding at the volume edges.
pub fn gaussian_smooth(vol: &Volume3D, sigma: f64) -> Result<Volume3D> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParams(format!("smoothing sigma {sigma} must be positive")));
    }
    let kernel = gaussian_kernel(sigma);
    let mut data = vol.data().to_vec();
    smooth_in_place(&mut data, vol.dims(), &kernel);
    vol.with_data(data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub center: [f64; 3],
    pub semi_axes: [f64; 3],
    pub amplitude: f64,
}

impl Ellipsoid {
    pub fn contains(&self, x: usize, y: usize, z: usize) -> bool {
        let p = [x as f64, y as f64, z as f64];
        (0..3)
            .map(|k| ((p[k] - self.center[k]) / self.semi_axes[k]).powi(2))
            .sum::<f64>()
            <= 1.0
    }
}

/// Rule producing the analysis mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MaskSpec {
    /// Axis-aligned box of the given side lengths centred in the volume.
    CentredBox { side: [usize; 3] },
    Full,
}

impl MaskSpec {
    /// The 45/64 box used for the standard phantom, scaled to `dims`.
    pub fn standard(dims: Dims) -> Self {
        let side = |n: usize| ((n as f64 * 45.0 / 64.0).round() as usize).max(1);
        MaskSpec::CentredBox {
            side: [side(dims.nx), side(dims.ny), side(dims.nz)],
        }
    }

    pub fn build(&self, dims: Dims) -> Mask3D {
        match *self {
            MaskSpec::Full => Mask3D::full(dims),
            MaskSpec::CentredBox { side } => {
                let start: Vec<usize> = dims
                    .as_array()
                    .iter()
                    .zip(side)
                    .map(|(&n, s)| n.saturating_sub(s) / 2)
                    .collect();
                Mask3D::from_fn(dims, |x, y, z| {
                    [x, y, z]
                        .iter()
                        .enumerate()
                        .all(|(k, &c)| c >= start[k] && c < start[k] + side[k])
                })
            }
        }
    }
}

/// Standard geometry at 64^3: centres and semi-axes of the three regions.
const STANDARD_ELLIPSOIDS: [([f64; 3], [f64; 3]); 3] = [
    ([21.0, 21.0, 31.0], [5.0, 4.0, 6.0]),
    ([40.0, 24.0, 22.0], [6.0, 5.0, 4.0]),
    ([31.0, 40.0, 38.0], [4.0, 6.0, 5.0]),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: Dims,
    pub subjects: usize,
    /// Smoothing sigma in voxels.
    pub noise_sigma: f64,
    pub ellipsoids: Vec<Ellipsoid>,
    pub mask: MaskSpec,
    /// Smooth the signal along with the noise instead of adding it afterwards.
    pub smooth_signal: bool,
    pub seed: u64,
}

impl PhantomSpec {
    /// Three ellipsoids of amplitude `a`, scaled from the 64^3 layout.
    pub fn standard(dims: Dims, subjects: usize, amplitude: f64, seed: u64) -> Self {
        let scale = [dims.nx as f64 / 64.0, dims.ny as f64 / 64.0, dims.nz as f64 / 64.0];
        let ellipsoids = STANDARD_ELLIPSOIDS
            .iter()
            .map(|(c, s)| Ellipsoid {
                center: [c[0] * scale[0], c[1] * scale[1], c[2] * scale[2]],
                semi_axes: [s[0] * scale[0], s[1] * scale[1], s[2] * scale[2]],
                amplitude,
            })
            .collect();
        Self {
            dims,
            subjects,
            noise_sigma: 1.5,
            ellipsoids,
            mask: MaskSpec::standard(dims),
            smooth_signal: false,
            seed,
        }
    }

    pub fn with_amplitude(mut self, a: f64) -> Self {
        self.ellipsoids.iter_mut().for_each(|e| e.amplitude = a);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.subjects < 2 {
            return Err(Error::TooFewSubjects(self.subjects));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidParams(format!("noise sigma {} must be positive", self.noise_sigma)));
        }
        if self.dims.is_empty() {
            return Err(Error::InvalidParams("empty phantom grid".into()));
        }
        for i in 0..self.dims.len() {
            let (x, y, z) = self.dims.coords(i);
            if self.ellipsoids.iter().filter(|e| e.contains(x, y, z)).count() > 1 {
                return Err(Error::InvalidParams(format!("ellipsoids overlap at voxel {i}")));
            }
        }
        Ok(())
    }

    /// Union of the ellipsoids.
    pub fn truth(&self) -> Mask3D {
        Mask3D::from_fn(self.dims, |x, y, z| self.ellipsoids.iter().any(|e| e.contains(x, y, z)))
    }

    fn signal(&self) -> Vec<f64> {
        (0..self.dims.len())
            .map(|i| {
                let (x, y, z) = self.dims.coords(i);
                self.ellipsoids
                    .iter()
                    .find(|e| e.contains(x, y, z))
                    .map_or(0.0, |e| e.amplitude)
            })
            .collect()
    }
}

/// SplitMix64 finaliser, used to derive independent stream seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn subject_seed(seed: u64, subject: usize) -> u64 {
    splitmix64(seed ^ splitmix64(subject as u64 + 1))
}

/// A simulated study.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub stack: SubjectStack,
    pub truth: Mask3D,
    pub mask: Mask3D,
}

/// Smoothed unit white noise for every subject, without signal.
pub fn phantom_noise(spec: &PhantomSpec) -> Result<SubjectStack> {
    spec.validate()?;
    let n = spec.dims.len();
    let kernel = gaussian_kernel(spec.noise_sigma);
    let mut data = Vec::with_capacity(n * spec.subjects);
    for s in 0..spec.subjects {
        let mut rng = ChaCha8Rng::seed_from_u64(subject_seed(spec.seed, s));
        let mut vol: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        smooth_in_place(&mut vol, spec.dims, &kernel);
        data.extend_from_slice(&vol);
    }
    SubjectStack::new(spec.dims, spec.subjects, data)
}

/// Adds the phantom's signal to every subject of a noise stack.
pub fn add_signal(noise: &SubjectStack, spec: &PhantomSpec) -> Result<SubjectStack> {
    let mut signal = spec.signal();
    if spec.smooth_signal {
        smooth_in_place(&mut signal, spec.dims, &gaussian_kernel(spec.noise_sigma));
    }
    let n = spec.dims.len();
    let data = noise
        .data()
        .iter()
        .enumerate()
        .map(|(k, &x)| x + signal[k % n])
        .collect();
    SubjectStack::new(spec.dims, noise.subjects(), data)
}

/// Generates subjects as smoothed unit noise plus the ellipsoid signal.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    let noise = phantom_noise(spec)?;
    Ok(Phantom {
        stack: add_signal(&noise, spec)?,
        truth: spec.truth(),
        mask: spec.mask.build(spec.dims),
    })
}

/// Per-voxel one-sample Z map of `sign_m * x_m` over subjects.
pub(crate) fn one_sample_z_signed(stack: &SubjectStack, mask: &Mask3D, signs: &[f64]) -> Result<Volume3D> {
    let dims = stack.dims();
    mask.check_dims(dims)?;
    let m = stack.subjects();
    if m < 2 {
        return Err(Error::TooFewSubjects(m));
    }
    let n = dims.len();
    let mut sum = vec![0.0; n];
    for (s, &sg) in signs.iter().enumerate().take(m) {
        for (acc, &x) in sum.iter_mut().zip(stack.subject(s)) {
            *acc += sg * x;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|&x| x / m as f64).collect();
    let mut ss = vec![0.0; n];
    for (s, &sg) in signs.iter().enumerate().take(m) {
        for ((acc, &x), &mu) in ss.iter_mut().zip(stack.subject(s)).zip(&mean) {
            let d = sg * x - mu;
            *acc += d * d;
        }
    }
    let df = (m - 1) as f64;
    let mut z = vec![0.0; n];
    for i in mask.indices() {
        let sd = (ss[i] / df).sqrt();
        z[i] = if sd > 0.0 {
            t_to_z(mean[i] / (sd / (m as f64).sqrt()), df)
        } else if mean[i] == 0.0 {
            0.0
        } else {
            Z_CLAMP.copysign(mean[i])
        };
    }
    Volume3D::new(dims, stack.voxel_size_mm(), z)
}

/// Voxel-wise one-sample t-test converted to Z through the t distribution.
pub fn one_sample_t_to_z(stack: &SubjectStack, mask: &Mask3D) -> Result<Volume3D> {
    one_sample_z_signed(stack, mask, &vec![1.0; stack.subjects()])
}

/// `2|A & B| / (|A| + |B|)`; 1 when both are empty.
pub fn dice(a: &Mask3D, b: &Mask3D) -> Result<f64> {
    b.check_dims(a.dims())?;
    let total = a.count() + b.count();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * a.intersection_count(b) as f64 / total as f64)
}

/// Sample correlation of two maps over the mask.
pub fn pearson_r(x: &[f64], y: &[f64], mask: &Mask3D) -> Result<f64> {
    if x.len() != mask.dims().len() || y.len() != x.len() {
        return Err(Error::ShapeMismatch("maps and mask differ in length".into()));
    }
    let n = mask.count();
    if n < 2 {
        return Err(Error::ConstantInput);
    }
    let mx = mask.indices().map(|i| x[i]).sum::<f64>() / n as f64;
    let my = mask.indices().map(|i| y[i]).sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in mask.indices() {
        let (dx, dy) = (x[i] - mx, y[i] - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ConstantInput);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize, confidence: f64) -> Result<(f64, f64)> {
    if n == 0 || k > n || !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidParams(format!("wilson interval needs 0 <= k <= n, n >= 1; got {k}/{n}")));
    }
    let z = norm_isf((1.0 - confidence) / 2.0);
    let (k, n) = (k as f64, n as f64);
    let z2 = z * z;
    let centre = (k + z2 / 2.0) / (n + z2);
    let half = z * (k * (n - k) / n + z2 / 4.0).sqrt() / (n + z2);
    Ok(((centre - half).max(0.0), (centre + half).min(1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_unit_sum() {
        let k = gaussian_kernel(1.5);
        assert_eq!(k.len(), 13);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((sigma_to_fwhm(1.5) - 3.532_230_067_546_424).abs() < 1e-12);
    }

    #[test]
    fn constant_interior_unchanged() {
        let d = Dims::cube(20);
        let v = Volume3D::from_data(d, vec![2.5; d.len()]).unwrap();
        let s = gaussian_smooth(&v, 1.5).unwrap();
        assert!((s.get(10, 10, 10) - 2.5).abs() < 1e-13);
        assert!(s.get(0, 0, 0) < 2.5);
        assert!(gaussian_smooth(&v, 0.0).is_err());
    }

    #[test]
    fn impulse_response() {
        let d = Dims::cube(21);
        let mut data = vec![0.0; d.len()];
        data[d.index(10, 10, 10)] = 1.0;
        let s = gaussian_smooth(&Volume3D::from_data(d, data).unwrap(), 1.5).unwrap();
        let k = gaussian_kernel(1.5);
        assert!((s.data().iter().sum::<f64>() - 1.0).abs() < 1e-13);
        assert!((s.get(10, 10, 10) - k[6].powi(3)).abs() < 1e-15);
        assert!((s.get(12, 9, 10) - k[8] * k[5] * k[6]).abs() < 1e-15);
    }

    #[test]
    fn variance_reduction_matches_kernel() {
        let d = Dims::cube(100);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let v = Volume3D::from_data(d, (0..d.len()).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap();
        let s = gaussian_smooth(&v, 1.5).unwrap();
        let k = gaussian_kernel(1.5);
        let want = k.iter().map(|w| w * w).sum::<f64>().powi(3);
        // interior voxels only, away from the zero padding
        let inner = Mask3D::from_fn(d, |x, y, z| [x, y, z].iter().all(|&c| (7..93).contains(&c)));
        let vals: Vec<f64> = inner.indices().map(|i| s.data()[i]).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
        assert!((var / want - 1.0).abs() < 0.02, "{var} vs {want}");
    }

    #[test]
    fn ellipsoid_lattice_count() {
        let e = Ellipsoid {
            center: [10.0, 10.0, 10.0],
            semi_axes: [6.0, 5.0, 4.0],
            amplitude: 1.0,
        };
        let d = Dims::cube(21);
        let got = Mask3D::from_fn(d, |x, y, z| e.contains(x, y, z)).count();
        let mut want = 0;
        for x in -6i32..=6 {
            for y in -5i32..=5 {
                for z in -4i32..=4 {
                    if (x * x) as f64 / 36.0 + (y * y) as f64 / 25.0 + (z * z) as f64 / 16.0 <= 1.0 {
                        want += 1;
                    }
                }
            }
        }
        assert_eq!(got, want);
    }

    #[test]
    fn standard_phantom_layout() {
        let spec = PhantomSpec::standard(Dims::cube(64), 3, 0.5, 1);
        spec.validate().unwrap();
        let mask = spec.mask.build(spec.dims);
        assert_eq!(mask.count(), 45 * 45 * 45);
        let truth = spec.truth();
        assert_eq!(truth.intersection_count(&mask), truth.count());
        assert!(truth.count() > 1000);
    }

    #[test]
    fn phantom_is_deterministic() {
        let spec = PhantomSpec::standard(Dims::cube(16), 3, 0.2, 99);
        let a = generate_phantom(&spec).unwrap();
        let b = generate_phantom(&spec).unwrap();
        assert_eq!(a.stack, b.stack);
        let c = generate_phantom(&PhantomSpec { seed: 100, ..spec }).unwrap();
        assert_ne!(a.stack, c.stack);
    }

    #[test]
    fn null_phantom_mean_is_small() {
        let spec = PhantomSpec::standard(Dims::cube(16), 40, 0.0, 3);
        let p = generate_phantom(&spec).unwrap();
        assert!(p.truth.count() > 0);
        let n = spec.dims.len();
        let mut grand = 0.0;
        for s in 0..spec.subjects {
            grand += p.stack.subject(s)[n / 2];
        }
        grand /= spec.subjects as f64;
        // smoothed-noise sd is about 0.08, so the mean of 40 is within a few 0.013
        assert!(grand.abs() < 0.06, "{grand}");
    }

    #[test]
    fn t_to_z_cases() {
        let d = Dims::cube(2);
        let zero = SubjectStack::new(d, 3, vec![0.0; 24]).unwrap();
        let z = one_sample_t_to_z(&zero, &Mask3D::full(d)).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        let constant = SubjectStack::new(d, 3, vec![0.5; 24]).unwrap();
        let z = one_sample_t_to_z(&constant, &Mask3D::full(d)).unwrap();
        assert!(z.data().iter().all(|&v| v == Z_CLAMP));
        // mean 0.1, sd 0.1 * sqrt(80) / 2 gives t = 2 at M = 80
        let m = 80;
        let spread = 0.1 * (m as f64).sqrt() / 2.0;
        let base: Vec<f64> = (0..m)
            .map(|k| if k % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let scale = spread / (m as f64 / (m - 1) as f64).sqrt();
        let d1 = Dims::cube(1);
        let data: Vec<f64> = base.iter().map(|b| 0.1 + b * scale).collect();
        let st = SubjectStack::new(d1, m, data).unwrap();
        let z = one_sample_t_to_z(&st, &Mask3D::full(d1)).unwrap();
        assert!((z.data()[0] - 1.969_139_806_086_694_8).abs() < 1e-9, "{}", z.data()[0]);
    }

    #[test]
    fn metric_cases() {
        let d = Dims::new(10, 10, 3);
        let empty = Mask3D::new(d, vec![false; 300]).unwrap();
        assert_eq!(dice(&empty, &empty).unwrap(), 1.0);
        let a = Mask3D::from_fn(d, |_, _, z| z == 0);
        let b = Mask3D::from_fn(d, |x, _, z| z == 0 && x < 5);
        let c = Mask3D::from_fn(d, |_, _, z| z == 2);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(dice(&a, &c).unwrap(), 0.0);
        assert_eq!(dice(&empty, &a).unwrap(), 0.0);
        assert!((dice(&a, &b).unwrap() - 2.0 / 3.0).abs() < 1e-15);

        let m = Mask3D::full(d);
        let x: Vec<f64> = (0..300).map(|i| ((i * 37) % 101) as f64).collect();
        let y2: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
        let yn: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_r(&x, &x, &m).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson_r(&x, &y2, &m).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson_r(&x, &yn, &m).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(pearson_r(&x, &[1.0; 300], &m), Err(Error::ConstantInput)));
    }

    #[test]
    fn wilson_cases() {
        let (lo, hi) = wilson_interval(0, 200, 0.95).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - 0.018_845_326_377_266_578).abs() < 1e-12);
        let (_, hi) = wilson_interval(200, 200, 0.95).unwrap();
        assert_eq!(hi, 1.0);
        let n = 10_000;
        let (lo, hi) = wilson_interval(n / 2, n, 0.95).unwrap();
        let z = 1.959_963_984_540_054;
        let nf = n as f64;
        let centre = (nf / 2.0 + z * z / 2.0) / (nf + z * z);
        let half = z * (nf / 4.0 + z * z / 4.0).sqrt() / (nf + z * z);
        assert!((lo - (centre - half)).abs() < 1e-14 && (hi - (centre + half)).abs() < 1e-14);
        assert!(((hi - lo) - 2.0 * z / (2.0 * nf.sqrt())).abs() < 1e-4);
        assert!(wilson_interval(3, 2, 0.95).is_err());
    }
}
