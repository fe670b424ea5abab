//! Cached lookup table of conditional exceedance probabilities.

use etfce_grf::grf::{
    conditional_exceedance, make_threshold_grid, GrfParams, PriorSupport, TableCache,
};

fn main() -> etfce_grf::Result<()> {
    let params = GrfParams::isotropic(92_000, 3.532)?;
    let grid = make_threshold_grid(8.0, 100)?;
    let support = PriorSupport::for_max(grid.z_max);
    let cache = TableCache::from_env_or(std::env::temp_dir().join("etfce-grf-example-cache"));

    let (table, loaded) = cache.load_or_build(&params, &grid, &support)?;
    println!("table at {} ({})", cache.path_for(&params, &grid, &support).display(), if loaded { "loaded" } else { "built" });

    let tau = grid.taus[grid.taus.partition_point(|&t| t < 2.5)];
    println!("P(Z >= {tau:.3} | c) as the cluster grows:");
    for c in [1.0, 10.0, 100.0, 1_000.0, 10_000.0] {
        let direct = conditional_exceedance(tau, c, &params, &support)?;
        println!("  c = {c:>7}: table {:.4e}  direct {:.4e}", table.query(tau, c), direct);
    }
    Ok(())
}
