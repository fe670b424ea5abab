//! Smoothness estimation and the GRF cluster-size law.

use etfce_grf::grf::{cluster_size_survival, estimate_smoothness, expected_cluster_size, expected_euler_char};
use etfce_grf::sim::{phantom_noise, sigma_to_fwhm, PhantomSpec};
use etfce_grf::Dims;

fn main() -> etfce_grf::Result<()> {
    let spec = PhantomSpec::standard(Dims::cube(48), 40, 0.0, 2);
    let noise = phantom_noise(&spec)?;
    let mask = spec.mask.build(spec.dims);
    let params = estimate_smoothness(&noise.residuals(), &mask)?;
    println!("analytical FWHM {:.3}", sigma_to_fwhm(spec.noise_sigma));
    println!("estimated FWHM  {:.3?}", params.fwhm_vox);
    println!("resels {:.1}, roughness {:.5}", params.resels3, params.roughness);

    println!("{:>4} {:>10} {:>10} {:>14}", "h", "E[EC]", "E[c]", "P(C > 20)");
    for h in [2.0, 2.5, 3.0, 3.5, 4.0] {
        println!(
            "{h:>4} {:>10.3} {:>10.2} {:>14.3e}",
            expected_euler_char(h, &params),
            expected_cluster_size(h, &params)?,
            cluster_size_survival(20.0, h, &params)?
        );
    }
    Ok(())
}
