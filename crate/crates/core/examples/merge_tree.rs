//! Exact cluster sizes from the merge tree, checked against labelling.

use etfce_grf::cluster::{build_merge_tree, ccl_cluster_sizes, change_points, cluster_size_at};
use etfce_grf::sim::gaussian_smooth;
use etfce_grf::{Dims, Mask3D, Volume3D};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> etfce_grf::Result<()> {
    let dims = Dims::cube(24);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let noise: Vec<f64> = (0..dims.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let z = gaussian_smooth(&Volume3D::from_data(dims, noise)?, 1.5)?.map(|x| x * 12.0);
    let mask = Mask3D::full(dims);

    let tree = build_merge_tree(&z, &mask)?;
    let peak = (0..dims.len()).max_by(|&a, &b| z.data()[a].total_cmp(&z.data()[b])).unwrap();
    println!("peak voxel {peak}, value {:.3}, tree depth {}", z.data()[peak], tree.depth());

    for tau in [2.0, 1.0, 0.5, 0.0] {
        let from_tree = cluster_size_at(&tree, peak, tau)?;
        let from_ccl = ccl_cluster_sizes(&z, &mask, tau)?[peak];
        println!("tau {tau:>4}: tree {from_tree:>6}  labelling {from_ccl:>6}");
    }

    let cps = change_points(&tree, peak)?;
    println!("{} extent change points above 0; first five:", cps.len());
    for cp in cps.iter().take(5) {
        println!("  below {:.4} the cluster has {} voxels", cp.tau, cp.size);
    }
    Ok(())
}
