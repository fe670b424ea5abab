//! Sign-flip permutation inference for TFCE scores.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::enhance::{tfce_exact, tfce_riemann, EnhancedScoreMap, TfceParams};
use crate::error::{Error, Result};
use crate::sim::one_sample_z_signed;
use crate::volume::{Mask3D, SubjectStack, Volume3D};

/// Enhancement applied to every permuted map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Enhancer {
    Exact(TfceParams),
    Riemann(TfceParams),
}

impl Enhancer {
    pub fn enhance(&self, zmap: &Volume3D, mask: &Mask3D) -> Result<EnhancedScoreMap> {
        match self {
            Enhancer::Exact(p) => tfce_exact(zmap, mask, p),
            Enhancer::Riemann(p) => tfce_riemann(zmap, mask, p),
        }
    }
}

/// Sorted maxima of the enhanced score under sign flipping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullMaxDistribution {
    pub seed: u64,
    max_scores: Vec<f64>,
}

impl NullMaxDistribution {
    pub fn from_maxima(seed: u64, mut max_scores: Vec<f64>) -> Self {
        max_scores.sort_by(f64::total_cmp);
        Self { seed, max_scores }
    }

    pub fn permutations(&self) -> usize {
        self.max_scores.len()
    }

    /// Ascending.
    pub fn max_scores(&self) -> &[f64] {
        &self.max_scores
    }

    /// `(1 + #{b : max_b >= score}) / (B + 1)`.
    pub fn p_value(&self, score: f64) -> f64 {
        let below = self.max_scores.partition_point(|&m| m < score);
        let exceed = self.max_scores.len() - below;
        (1 + exceed) as f64 / (self.max_scores.len() + 1) as f64
    }
}

/// Signs for permutation `b`, drawn from the substream `seed ^ b`.
pub fn flip_signs(seed: u64, b: u64, subjects: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ b);
    (0..subjects)
        .map(|_| if rng.random_bool(0.5) { -1.0 } else { 1.0 })
        .collect()
}

/// Builds the null distribution of the in-mask maximum over `b` sign flips.
pub fn sign_flip_null(
    stack: &SubjectStack,
    mask: &Mask3D,
    enhancer: &Enhancer,
    permutations: usize,
    seed: u64,
) -> Result<NullMaxDistribution> {
    if permutations == 0 {
        return Err(Error::InvalidParams("at least one permutation is required".into()));
    }
    mask.check_dims(stack.dims())?;
    let maxima = (1..=permutations as u64)
        .into_par_iter()
        .map(|b| {
            let signs = flip_signs(seed, b, stack.subjects());
            let z = one_sample_z_signed(stack, mask, &signs)?;
            Ok(enhancer.enhance(&z, mask)?.max())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(NullMaxDistribution::from_maxima(seed, maxima))
}

/// FWER-corrected p-value per voxel; 1 outside the mask.
pub fn perm_fwer_p(observed: &EnhancedScoreMap, null: &NullMaxDistribution) -> Vec<f64> {
    let mask = observed.mask();
    observed
        .scores()
        .iter()
        .enumerate()
        .map(|(i, &s)| if mask.contains(i) { null.p_value(s) } else { 1.0 })
        .collect()
}

/// Smallest voxel p-value in the mask.
pub fn min_p(observed: &EnhancedScoreMap, null: &NullMaxDistribution) -> f64 {
    null.p_value(observed.max())
}
