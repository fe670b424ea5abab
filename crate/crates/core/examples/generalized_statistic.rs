//! Several exact cluster statistics from a single merge tree.

use etfce_grf::enhance::{generalized_statistics, ClusterStatistic};
use etfce_grf::sim::{generate_phantom, one_sample_t_to_z, PhantomSpec};
use etfce_grf::Dims;

fn main() -> etfce_grf::Result<()> {
    let ph = generate_phantom(&PhantomSpec::standard(Dims::cube(32), 20, 0.1, 5))?;
    let z = one_sample_t_to_z(&ph.stack, &ph.mask)?;

    let tfce = ClusterStatistic::tfce(0.5, 2.0);
    let mass = ClusterStatistic::cluster_mass();
    let sqrt_extent = ClusterStatistic::new(|s| s.sqrt(), |_| 1.0).with_antiderivative(|h| h);
    let maps = generalized_statistics(&z, &ph.mask, &[&tfce, &mass, &sqrt_extent], 0.0)?;

    for (name, m) in ["tfce(0.5, 2)", "cluster mass", "sqrt extent"].iter().zip(&maps) {
        let inside = ph.truth.indices().map(|i| m.score(i)).sum::<f64>() / ph.truth.count() as f64;
        println!("{name:<14} max {:>12.2}  mean in signal {:>12.2}", m.max(), inside);
    }
    Ok(())
}
