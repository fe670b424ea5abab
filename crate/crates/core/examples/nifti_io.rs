//! Writing and reading NIfTI-1 volumes and subject stacks.

use etfce_grf::nifti::{load_stack, load_volume, save_bytes, save_volume, write_nifti_stack};
use etfce_grf::sim::{generate_phantom, one_sample_t_to_z, PhantomSpec};
use etfce_grf::Dims;

fn main() -> etfce_grf::Result<()> {
    let dir = std::env::temp_dir().join("etfce-grf-nifti-example");
    std::fs::create_dir_all(&dir)?;
    let ph = generate_phantom(&PhantomSpec::standard(Dims::cube(24), 6, 0.1, 2))?;
    let z = one_sample_t_to_z(&ph.stack, &ph.mask)?;

    let z_path = dir.join("zstat.nii.gz");
    let stack_path = dir.join("stack.nii");
    save_volume(&z_path, &z, Some(&ph.mask))?;
    save_bytes(&stack_path, &write_nifti_stack(&ph.stack))?;

    let (back, header) = load_volume(&z_path)?;
    let worst = z.data().iter().zip(back.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("{} -> dims {:?}, float32 round-trip error {worst:.1e}", z_path.display(), header.dims());
    let (stack, header) = load_stack(&stack_path)?;
    println!("{} -> {} subjects of {:?}", stack_path.display(), stack.subjects(), header.dims());
    Ok(())
}
