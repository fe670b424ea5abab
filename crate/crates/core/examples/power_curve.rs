//! A small power experiment, printed as CSV.

use etfce_grf::sim::{run_experiment, ExperimentConfig, ExperimentId};

fn main() -> etfce_grf::Result<()> {
    let mut cfg = ExperimentConfig::new(ExperimentId::Power).with_scale(2, 32, 40).with_seed(9);
    cfg.amplitudes = vec![0.02, 0.05, 0.1, 0.5];
    let report = run_experiment(&cfg)?;
    print!("{}", report.to_csv());
    println!("{}", serde_json::to_string_pretty(&report.summary)?);
    Ok(())
}
