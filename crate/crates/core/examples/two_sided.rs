//! Two-sided enhancement of a map with positive and negative effects.

use etfce_grf::grf::GrfParams;
use etfce_grf::infer::{two_sided_enhance, Correction, Pipeline, PtfceOptions};
use etfce_grf::sim::{gaussian_smooth, Ellipsoid};
use etfce_grf::{Dims, Mask3D, Volume3D};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> etfce_grf::Result<()> {
    let dims = Dims::cube(40);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
    let noise: Vec<f64> = (0..dims.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let smooth = gaussian_smooth(&Volume3D::from_data(dims, noise)?, 1.5)?;
    let sd = (smooth.data().iter().map(|x| x * x).sum::<f64>() / dims.len() as f64).sqrt();
    let blobs = [
        Ellipsoid { center: [12.0, 20.0, 20.0], semi_axes: [4.0; 3], amplitude: 5.0 },
        Ellipsoid { center: [28.0, 20.0, 20.0], semi_axes: [4.0; 3], amplitude: -5.0 },
    ];
    let z = smooth.with_data(
        (0..dims.len())
            .map(|i| {
                let (x, y, zz) = dims.coords(i);
                let s: f64 = blobs.iter().filter(|b| b.contains(x, y, zz)).map(|b| b.amplitude).sum();
                smooth.data()[i] / sd + s
            })
            .collect(),
    )?;
    let mask = Mask3D::full(dims);
    let params = GrfParams::isotropic(mask.count(), 3.532)?;
    let map = two_sided_enhance(&z, &mask, &params, &PtfceOptions::new(Pipeline::Hybrid))?;

    let sig = map.significant(0.05, Correction::Bonferroni);
    let pos = sig.indices().filter(|&i| map.sign()[i] > 0).count();
    let neg = sig.indices().filter(|&i| map.sign()[i] < 0).count();
    println!("significant voxels: {pos} positive, {neg} negative");
    let signed = map.signed_z();
    let (lo, hi) = signed.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    println!("signed enhanced Z range [{lo:.2}, {hi:.2}]");
    Ok(())
}
