use crate::error::Result;
use crate::volume::{for_each_neighbor26, Dims, Mask3D, Volume3D};

/// Flood-fill labeller for superlevel sets, reusable across thresholds.
///
/// Visited flags are generation stamps, so relabelling at a new threshold
/// costs only the size of the superlevel set.
pub(crate) struct LevelLabeller<'a> {
    dims: Dims,
    values: &'a [f64],
    mask: &'a [bool],
    stamp: Vec<u32>,
    generation: u32,
    size: Vec<u32>,
    stack: Vec<u32>,
    members: Vec<u32>,
}

impl<'a> LevelLabeller<'a> {
    pub(crate) fn new(dims: Dims, values: &'a [f64], mask: &'a Mask3D) -> Self {
        let n = dims.len();
        Self {
            dims,
            values,
            mask: mask.as_slice(),
            stamp: vec![0; n],
            generation: 0,
            size: vec![0; n],
            stack: Vec::new(),
            members: Vec::new(),
        }
    }

    /// Labels the components of `{h >= tau}`. `supra` must list every
    /// in-mask voxel with value at least `tau`; afterwards `size(v)` holds
    /// the component size of each of them.
    pub(crate) fn label(&mut self, supra: &[u32], tau: f64) {
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.fill(0);
            self.generation = 1;
        }
        let generation = self.generation;
        for &seed in supra {
            if self.stamp[seed as usize] == generation {
                continue;
            }
            self.stamp[seed as usize] = generation;
            self.stack.clear();
            self.members.clear();
            self.stack.push(seed);
            while let Some(v) = self.stack.pop() {
                self.members.push(v);
                let (stamp, stack, values, mask) =
                    (&mut self.stamp, &mut self.stack, self.values, self.mask);
                for_each_neighbor26(self.dims, v as usize, |u| {
                    if mask[u] && stamp[u] != generation && values[u] >= tau {
                        stamp[u] = generation;
                        stack.push(u as u32);
                    }
                });
            }
            let s = self.members.len() as u32;
            for &m in &self.members {
                self.size[m as usize] = s;
            }
        }
    }

    #[inline]
    pub(crate) fn size(&self, voxel: usize) -> u32 {
        self.size[voxel]
    }
}

/// Component size of every voxel in `{h >= tau}` under 26-connectivity;
/// sub-threshold and out-of-mask voxels carry 0.
pub fn ccl_cluster_sizes(zmap: &Volume3D, mask: &Mask3D, tau: f64) -> Result<Vec<u64>> {
    zmap.check_finite_on(mask)?;
    let values = zmap.data();
    let supra: Vec<u32> = mask
        .indices()
        .filter(|&i| values[i] >= tau)
        .map(|i| i as u32)
        .collect();
    let mut labeller = LevelLabeller::new(zmap.dims(), values, mask);
    labeller.label(&supra, tau);
    let mut out = vec![0u64; values.len()];
    for &v in &supra {
        out[v as usize] = labeller.size(v as usize) as u64;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_at_one_and_a_half() {
        let d = Dims::new(1, 1, 5);
        let z = Volume3D::from_data(d, vec![5.0, 1.0, 4.0, 2.0, 3.0]).unwrap();
        let sizes = ccl_cluster_sizes(&z, &Mask3D::full(d), 1.5).unwrap();
        assert_eq!(sizes, vec![1, 0, 3, 3, 3]);
    }

    #[test]
    fn extreme_thresholds() {
        let d = Dims::new(3, 4, 2);
        let z = Volume3D::from_data(d, (0..24).map(|i| (i as f64).sin()).collect()).unwrap();
        let m = Mask3D::full(d);
        assert!(ccl_cluster_sizes(&z, &m, 2.0).unwrap().iter().all(|&s| s == 0));
        assert!(ccl_cluster_sizes(&z, &m, -2.0).unwrap().iter().all(|&s| s == 24));
    }

    #[test]
    fn mask_splits_components() {
        let d = Dims::new(5, 1, 1);
        let z = Volume3D::from_data(d, vec![1.0; 5]).unwrap();
        let m = Mask3D::new(d, vec![true, true, false, true, true]).unwrap();
        assert_eq!(ccl_cluster_sizes(&z, &m, 0.0).unwrap(), vec![2, 2, 0, 2, 2]);
    }

    #[test]
    fn diagonal_neighbours_connect() {
        let d = Dims::cube(2);
        let mut data = vec![0.0; 8];
        data[d.index(0, 0, 0)] = 1.0;
        data[d.index(1, 1, 1)] = 1.0;
        let z = Volume3D::from_data(d, data).unwrap();
        let s = ccl_cluster_sizes(&z, &Mask3D::full(d), 0.5).unwrap();
        assert_eq!(s[d.index(1, 1, 1)], 2);
    }
}
