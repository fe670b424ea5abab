use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::exceedance::{conditional_exceedance, PriorSupport, ThresholdGrid};
use super::GrfParams;
use crate::error::{Error, Result};

/// Environment variable overriding the table cache directory.
pub const CACHE_DIR_ENV: &str = "ETFCE_GRF_CACHE_DIR";

const MAGIC: &[u8; 8] = b"PTLUT01\0";
const DEFAULT_SIZE_KNOTS: usize = 64;

/// Conditional exceedance probabilities on a `(tau, ln c)` lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct ExceedanceTable {
    n_voxels: u64,
    roughness_q: i64,
    n_levels: u64,
    z_max: f64,
    support: PriorSupport,
    taus: Vec<f64>,
    sizes: Vec<f64>,
    /// row-major over `(tau, size)`
    values: Vec<f64>,
}

/// Log-spaced cluster sizes from 1 to `n_voxels`.
pub fn default_size_knots(n_voxels: usize) -> Vec<f64> {
    let top = (n_voxels.max(2) as f64).ln();
    (0..DEFAULT_SIZE_KNOTS)
        .map(|k| (top * k as f64 / (DEFAULT_SIZE_KNOTS - 1) as f64).exp())
        .collect()
}

fn quantise_roughness(r: f64) -> i64 {
    (r * 1e6).round() as i64
}

/// Evaluates `conditional_exceedance` at every `(tau_i, size)` knot.
pub fn build_exceedance_table(
    params: &GrfParams,
    grid: &ThresholdGrid,
    size_knots: &[f64],
    support: &PriorSupport,
) -> Result<ExceedanceTable> {
    if size_knots.len() < 2 || size_knots.windows(2).any(|w| !(w[1] > w[0])) || size_knots[0] < 1.0 {
        return Err(Error::InvalidParams("size knots must be increasing and >= 1".into()));
    }
    let rows: Vec<Vec<f64>> = grid
        .taus
        .par_iter()
        .map(|&tau| {
            if support.lo.is_some_and(|lo| tau <= lo) {
                return Ok(vec![1.0; size_knots.len()]);
            }
            size_knots
                .iter()
                .map(|&c| conditional_exceedance(tau, c, params, support))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(ExceedanceTable {
        n_voxels: params.n_voxels as u64,
        roughness_q: quantise_roughness(params.roughness),
        n_levels: grid.n_levels as u64,
        z_max: grid.z_max,
        support: *support,
        taus: grid.taus.clone(),
        sizes: size_knots.to_vec(),
        values: rows.concat(),
    })
}

fn bracket(knots: &[f64], x: f64) -> (usize, f64) {
    if x <= knots[0] {
        return (0, 0.0);
    }
    let last = knots.len() - 1;
    if x >= knots[last] {
        return (last - 1, 1.0);
    }
    let j = knots.partition_point(|&k| k <= x) - 1;
    (j, (x - knots[j]) / (knots[j + 1] - knots[j]))
}

impl ExceedanceTable {
    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn sizes(&self) -> &[f64] {
        &self.sizes
    }

    pub fn at_knot(&self, tau_index: usize, size_index: usize) -> f64 {
        self.values[tau_index * self.sizes.len() + size_index]
    }

    /// Bilinear interpolation in `(tau, ln c)`, clamped to the lattice.
    pub fn query(&self, tau: f64, c: f64) -> f64 {
        let ns = self.sizes.len();
        if self.taus.len() == 1 {
            let ln_sizes: Vec<f64> = self.sizes.iter().map(|s| s.ln()).collect();
            let (j, u) = bracket(&ln_sizes, c.max(1.0).ln());
            return (1.0 - u) * self.values[j] + u * self.values[j + 1];
        }
        let (i, t) = bracket(&self.taus, tau);
        let lc = c.max(1.0).ln();
        let (j, u) = {
            let (lo, hi) = (self.sizes[0].ln(), self.sizes[ns - 1].ln());
            if lc <= lo {
                (0, 0.0)
            } else if lc >= hi {
                (ns - 2, 1.0)
            } else {
                let j = self.sizes.partition_point(|&s| s.ln() <= lc) - 1;
                let (a, b) = (self.sizes[j].ln(), self.sizes[j + 1].ln());
                (j, (lc - a) / (b - a))
            }
        };
        let v = |a: usize, b: usize| self.values[a * ns + b];
        (1.0 - t) * ((1.0 - u) * v(i, j) + u * v(i, j + 1)) + t * ((1.0 - u) * v(i + 1, j) + u * v(i + 1, j + 1))
    }

    fn key_matches(&self, params: &GrfParams, grid: &ThresholdGrid, support: &PriorSupport) -> bool {
        self.n_voxels == params.n_voxels as u64
            && self.roughness_q == quantise_roughness(params.roughness)
            && self.n_levels == grid.n_levels as u64
            && self.z_max.to_bits() == grid.z_max.to_bits()
            && self.support == *support
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(96 + 8 * (self.taus.len() + self.sizes.len() + self.values.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.n_voxels.to_le_bytes());
        out.extend_from_slice(&self.roughness_q.to_le_bytes());
        out.extend_from_slice(&self.n_levels.to_le_bytes());
        out.extend_from_slice(&self.z_max.to_le_bytes());
        out.extend_from_slice(&self.support.lo.unwrap_or(f64::NEG_INFINITY).to_le_bytes());
        out.extend_from_slice(&self.support.hi.to_le_bytes());
        out.extend_from_slice(&(self.taus.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.sizes.len() as u64).to_le_bytes());
        for x in self.taus.iter().chain(&self.sizes).chain(&self.values) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |why: &str| Error::CacheCorrupt(why.to_string());
        if bytes.len() < MAGIC.len() + 64 + 4 || &bytes[..8] != MAGIC {
            return Err(corrupt("bad magic or short file"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(corrupt("checksum mismatch"));
        }
        let word = |k: usize| -> [u8; 8] { body[8 + 8 * k..16 + 8 * k].try_into().expect("8 bytes") };
        let n_taus = u64::from_le_bytes(word(6)) as usize;
        let n_sizes = u64::from_le_bytes(word(7)) as usize;
        let expected = n_taus
            .checked_mul(n_sizes)
            .and_then(|t| t.checked_add(n_taus + n_sizes + 8))
            .and_then(|w| w.checked_mul(8))
            .and_then(|b| b.checked_add(8));
        if expected != Some(body.len()) || n_sizes < 2 || n_taus == 0 {
            return Err(corrupt("inconsistent dimensions"));
        }
        let floats: Vec<f64> = (8..8 + n_taus + n_sizes + n_taus * n_sizes)
            .map(|k| f64::from_le_bytes(word(k)))
            .collect();
        let lo = f64::from_le_bytes(word(4));
        Ok(Self {
            n_voxels: u64::from_le_bytes(word(0)),
            roughness_q: i64::from_le_bytes(word(1)),
            n_levels: u64::from_le_bytes(word(2)),
            z_max: f64::from_le_bytes(word(3)),
            support: PriorSupport {
                lo: lo.is_finite().then_some(lo),
                hi: f64::from_le_bytes(word(5)),
            },
            taus: floats[..n_taus].to_vec(),
            sizes: floats[n_taus..n_taus + n_sizes].to_vec(),
            values: floats[n_taus + n_sizes..].to_vec(),
        })
    }
}

/// Directory of persisted tables, one file per key.
#[derive(Debug, Clone)]
pub struct TableCache {
    dir: PathBuf,
}

impl TableCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// Uses `$ETFCE_GRF_CACHE_DIR` when set, otherwise `fallback`.
    pub fn from_env_or(fallback: impl Into<PathBuf>) -> Self {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(d) if !d.is_empty() => Self::new(d),
            _ => Self::new(fallback),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, params: &GrfParams, grid: &ThresholdGrid, support: &PriorSupport) -> PathBuf {
        let mut key = Vec::new();
        key.extend_from_slice(&grid.z_max.to_le_bytes());
        key.extend_from_slice(&support.lo.unwrap_or(f64::NEG_INFINITY).to_le_bytes());
        key.extend_from_slice(&support.hi.to_le_bytes());
        self.dir.join(format!(
            "ptlut-{}-{}-{}-{:08x}.bin",
            params.n_voxels,
            quantise_roughness(params.roughness),
            grid.n_levels,
            crc32fast::hash(&key)
        ))
    }

    /// Loads a matching table, or builds, stores and returns a fresh one.
    /// The flag reports whether the table came from disk.
    pub fn load_or_build(
        &self,
        params: &GrfParams,
        grid: &ThresholdGrid,
        support: &PriorSupport,
    ) -> Result<(ExceedanceTable, bool)> {
        let path = self.path_for(params, grid, support);
        match self.load(&path) {
            Ok(t) if t.key_matches(params, grid, support) => return Ok((t, true)),
            Ok(_) | Err(Error::CacheCorrupt(_)) => {}
            Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e),
        }
        let table = build_exceedance_table(params, grid, &default_size_knots(params.n_voxels), support)?;
        self.store(&path, &table)?;
        Ok((table, false))
    }

    fn load(&self, path: &Path) -> Result<ExceedanceTable> {
        ExceedanceTable::from_bytes(&std::fs::read(path)?)
    }

    fn store(&self, path: &Path, table: &ExceedanceTable) -> Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(&table.to_bytes())?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| Error::Io(e.error))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grf::make_threshold_grid;
    use rand::{Rng, SeedableRng};

    fn small_table() -> (GrfParams, ThresholdGrid, PriorSupport, ExceedanceTable) {
        let p = GrfParams::isotropic(20_000, 3.2).unwrap();
        let g = make_threshold_grid(4.5, 20).unwrap();
        let s = PriorSupport::for_max(g.z_max);
        let knots = default_size_knots(p.n_voxels);
        let t = build_exceedance_table(&p, &g, &knots, &s).unwrap();
        (p, g, s, t)
    }

    #[test]
    fn knots_are_exact() {
        let (p, g, s, t) = small_table();
        for (i, &tau) in g.taus.iter().enumerate().step_by(4) {
            for (j, &c) in t.sizes().iter().enumerate().step_by(9) {
                let direct = conditional_exceedance(tau, c, &p, &s).unwrap();
                assert_eq!(t.query(tau, c), direct);
                assert_eq!(t.at_knot(i, j), direct);
            }
        }
        assert!(t.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn round_trip_and_corruption() {
        let (p, g, s, t) = small_table();
        let bytes = t.to_bytes();
        assert_eq!(&bytes[..8], b"PTLUT01\0");
        assert_eq!(ExceedanceTable::from_bytes(&bytes).unwrap(), t);
        let mut bad = bytes.clone();
        bad[100] ^= 1;
        assert!(matches!(ExceedanceTable::from_bytes(&bad), Err(Error::CacheCorrupt(_))));
        assert!(matches!(ExceedanceTable::from_bytes(&bytes[..50]), Err(Error::CacheCorrupt(_))));

        let dir = tempfile::tempdir().unwrap();
        let cache = TableCache::new(dir.path());
        let (first, loaded) = cache.load_or_build(&p, &g, &s).unwrap();
        assert!(!loaded);
        let (second, loaded) = cache.load_or_build(&p, &g, &s).unwrap();
        assert!(loaded);
        assert_eq!(first.to_bytes(), second.to_bytes());
        // a damaged file is rebuilt
        let path = cache.path_for(&p, &g, &s);
        std::fs::write(&path, &bytes[..200]).unwrap();
        let (third, loaded) = cache.load_or_build(&p, &g, &s).unwrap();
        assert!(!loaded);
        assert_eq!(third, first);
    }

    #[test]
    fn off_knot_sizes_interpolate() {
        let (p, g, s, t) = small_table();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut worst: f64 = 0.0;
        for _ in 0..40 {
            let tau = g.taus[rng.random_range(0..g.n_levels)];
            let c = rng.random_range(0.0..(p.n_voxels as f64).ln()).exp();
            let direct = conditional_exceedance(tau, c, &p, &s).unwrap();
            worst = worst.max((t.query(tau, c) - direct).abs());
        }
        assert!(worst < 1e-3, "{worst}");
    }
}
