//! Voxel-lattice containers and 26-connectivity.
//!
//! All volumes use x-fastest linearisation: `index = x + nx * (y + ny * z)`.

use crate::error::{Error, Result};

/// Grid shape `(nx, ny, nz)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub const fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self { nx, ny, nz }
    }

    pub const fn cube(n: usize) -> Self {
        Self::new(n, n, n)
    }

    pub const fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub const fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub const fn coords(&self, index: usize) -> (usize, usize, usize) {
        let x = index % self.nx;
        let rest = index / self.nx;
        (x, rest % self.ny, rest / self.ny)
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }
}

/// A 3D scalar field with voxel dimensions in millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    dims: Dims,
    voxel_size_mm: [f64; 3],
    data: Vec<f64>,
}

impl Volume3D {
    pub fn new(dims: Dims, voxel_size_mm: [f64; 3], data: Vec<f64>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidVolume(format!("empty grid {dims:?}")));
        }
        if data.len() != dims.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {}x{}x{} grid",
                data.len(),
                dims.nx,
                dims.ny,
                dims.nz
            )));
        }
        if voxel_size_mm.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(Error::InvalidVolume(format!(
                "voxel sizes must be positive, got {voxel_size_mm:?}"
            )));
        }
        Ok(Self {
            dims,
            voxel_size_mm,
            data,
        })
    }

    /// Isotropic 1 mm volume.
    pub fn from_data(dims: Dims, data: Vec<f64>) -> Result<Self> {
        Self::new(dims, [1.0; 3], data)
    }

    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            voxel_size_mm: [1.0; 3],
            data: vec![0.0; dims.len()],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn voxel_size_mm(&self) -> [f64; 3] {
        self.voxel_size_mm
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.dims.index(x, y, z)]
    }

    /// Same geometry, new values.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Self::new(self.dims, self.voxel_size_mm, data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            dims: self.dims,
            voxel_size_mm: self.voxel_size_mm,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Checks that every in-mask value is finite.
    pub fn check_finite_on(&self, mask: &Mask3D) -> Result<()> {
        mask.check_dims(self.dims)?;
        for i in mask.indices() {
            if !self.data[i].is_finite() {
                return Err(Error::InvalidVolume(format!(
                    "non-finite value {} at in-mask voxel {i}",
                    self.data[i]
                )));
            }
        }
        Ok(())
    }

    /// Largest in-mask value, or `None` for an empty mask.
    pub fn max_in(&self, mask: &Mask3D) -> Option<f64> {
        mask.indices()
            .map(|i| self.data[i])
            .fold(None, |m, v| Some(m.map_or(v, |m: f64| m.max(v))))
    }
}

/// Boolean inclusion mask with a cached voxel count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask3D {
    dims: Dims,
    included: Vec<bool>,
    in_mask_count: usize,
}

impl Mask3D {
    pub fn new(dims: Dims, included: Vec<bool>) -> Result<Self> {
        if included.len() != dims.len() {
            return Err(Error::ShapeMismatch(format!(
                "mask of {} entries for {} voxels",
                included.len(),
                dims.len()
            )));
        }
        let in_mask_count = included.iter().filter(|&&b| b).count();
        Ok(Self {
            dims,
            included,
            in_mask_count,
        })
    }

    pub fn full(dims: Dims) -> Self {
        Self {
            dims,
            included: vec![true; dims.len()],
            in_mask_count: dims.len(),
        }
    }

    pub fn from_fn(dims: Dims, f: impl Fn(usize, usize, usize) -> bool) -> Self {
        let included: Vec<bool> = (0..dims.len())
            .map(|i| {
                let (x, y, z) = dims.coords(i);
                f(x, y, z)
            })
            .collect();
        let in_mask_count = included.iter().filter(|&&b| b).count();
        Self {
            dims,
            included,
            in_mask_count,
        }
    }

    /// Voxels holding a finite, non-zero value.
    pub fn nonzero(vol: &Volume3D) -> Self {
        Self::from_fn(vol.dims(), |x, y, z| {
            let v = vol.get(x, y, z);
            v.is_finite() && v != 0.0
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn count(&self) -> usize {
        self.in_mask_count
    }

    #[inline]
    pub fn contains(&self, index: usize) -> bool {
        self.included[index]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.included
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.included
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn intersection_count(&self, other: &Mask3D) -> usize {
        self.included
            .iter()
            .zip(&other.included)
            .filter(|(&a, &b)| a && b)
            .count()
    }

    pub fn and(&self, other: &Mask3D) -> Result<Mask3D> {
        other.check_dims(self.dims)?;
        Mask3D::new(
            self.dims,
            self.included
                .iter()
                .zip(&other.included)
                .map(|(&a, &b)| a && b)
                .collect(),
        )
    }

    pub(crate) fn check_dims(&self, dims: Dims) -> Result<()> {
        if self.dims != dims {
            return Err(Error::ShapeMismatch(format!(
                "mask {:?} vs volume {:?}",
                self.dims, dims
            )));
        }
        Ok(())
    }

    /// 0/1 volume for writing to disk.
    pub fn to_volume(&self) -> Volume3D {
        Volume3D {
            dims: self.dims,
            voxel_size_mm: [1.0; 3],
            data: self
                .included
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        }
    }
}

/// `M` subject volumes sharing one grid, stored subject-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectStack {
    dims: Dims,
    voxel_size_mm: [f64; 3],
    subjects: usize,
    data: Vec<f64>,
}

impl SubjectStack {
    pub fn new(dims: Dims, subjects: usize, data: Vec<f64>) -> Result<Self> {
        if subjects < 2 {
            return Err(Error::TooFewSubjects(subjects));
        }
        if data.len() != dims.len() * subjects {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} subjects of {} voxels",
                data.len(),
                subjects,
                dims.len()
            )));
        }
        Ok(Self {
            dims,
            voxel_size_mm: [1.0; 3],
            subjects,
            data,
        })
    }

    pub fn from_volumes(volumes: &[Volume3D]) -> Result<Self> {
        let first = volumes.first().ok_or(Error::TooFewSubjects(0))?;
        let dims = first.dims();
        let mut data = Vec::with_capacity(dims.len() * volumes.len());
        for v in volumes {
            if v.dims() != dims {
                return Err(Error::ShapeMismatch(format!(
                    "subject grid {:?} vs {:?}",
                    v.dims(),
                    dims
                )));
            }
            data.extend_from_slice(v.data());
        }
        let mut stack = Self::new(dims, volumes.len(), data)?;
        stack.voxel_size_mm = first.voxel_size_mm();
        Ok(stack)
    }

    pub fn with_voxel_size(mut self, voxel_size_mm: [f64; 3]) -> Self {
        self.voxel_size_mm = voxel_size_mm;
        self
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn voxel_size_mm(&self) -> [f64; 3] {
        self.voxel_size_mm
    }

    pub fn subjects(&self) -> usize {
        self.subjects
    }

    pub fn subject(&self, m: usize) -> &[f64] {
        let n = self.dims.len();
        &self.data[m * n..(m + 1) * n]
    }

    pub fn subject_volume(&self, m: usize) -> Volume3D {
        Volume3D {
            dims: self.dims,
            voxel_size_mm: self.voxel_size_mm,
            data: self.subject(m).to_vec(),
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Subtracts the across-subject mean at every voxel.
    pub fn residuals(&self) -> SubjectStack {
        let n = self.dims.len();
        let mut mean = vec![0.0; n];
        for m in 0..self.subjects {
            for (acc, &v) in mean.iter_mut().zip(self.subject(m)) {
                *acc += v;
            }
        }
        let inv = 1.0 / self.subjects as f64;
        mean.iter_mut().for_each(|v| *v *= inv);
        let mut data = self.data.clone();
        for chunk in data.chunks_mut(n) {
            for (v, &mu) in chunk.iter_mut().zip(&mean) {
                *v -= mu;
            }
        }
        SubjectStack {
            data,
            ..self.clone()
        }
    }
}

/// Calls `f` for every in-bounds 26-neighbour of `index`.
#[inline]
pub(crate) fn for_each_neighbor26(dims: Dims, index: usize, mut f: impl FnMut(usize)) {
    let (x, y, z) = dims.coords(index);
    let (x, y, z) = (x as isize, y as isize, z as isize);
    let (nx, ny, nz) = (dims.nx as isize, dims.ny as isize, dims.nz as isize);
    for dz in -1..=1isize {
        let zz = z + dz;
        if zz < 0 || zz >= nz {
            continue;
        }
        for dy in -1..=1isize {
            let yy = y + dy;
            if yy < 0 || yy >= ny {
                continue;
            }
            for dx in -1..=1isize {
                if dx == 0 && dy == 0 && dz == 0 {
                    continue;
                }
                let xx = x + dx;
                if xx < 0 || xx >= nx {
                    continue;
                }
                f((xx + nx * (yy + ny * zz)) as usize);
            }
        }
    }
}

/// All in-bounds (and in-mask, when given) voxels sharing a face, edge or
/// corner with `index`.
pub fn neighbors26(index: usize, dims: Dims, mask: Option<&Mask3D>) -> Result<Vec<usize>> {
    if index >= dims.len() {
        return Err(Error::IndexOutOfBounds {
            index,
            len: dims.len(),
        });
    }
    if let Some(m) = mask {
        m.check_dims(dims)?;
    }
    let mut out = Vec::with_capacity(26);
    for_each_neighbor26(dims, index, |j| {
        if mask.is_none_or(|m| m.contains(j)) {
            out.push(j);
        }
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn center_has_26_neighbors() {
        let d = Dims::cube(3);
        assert_eq!(neighbors26(d.index(1, 1, 1), d, None).unwrap().len(), 26);
    }

    #[test]
    fn corner_of_2_cube_has_7() {
        let d = Dims::cube(2);
        assert_eq!(neighbors26(0, d, None).unwrap().len(), 7);
    }

    #[test]
    fn masked_corners_leave_18() {
        let d = Dims::cube(3);
        // enumerate offsets directly: 26 minus the 8 with |dx|=|dy|=|dz|=1
        let corners = (0..27)
            .filter(|&i| {
                let (x, y, z) = d.coords(i);
                x != 1 && y != 1 && z != 1
            })
            .count();
        assert_eq!(corners, 8);
        let mask = Mask3D::from_fn(d, |x, y, z| !(x != 1 && y != 1 && z != 1));
        let n = neighbors26(d.index(1, 1, 1), d, Some(&mask)).unwrap();
        assert_eq!(n.len(), 26 - corners);
    }

    #[test]
    fn out_of_bounds_index() {
        let d = Dims::cube(2);
        assert!(matches!(
            neighbors26(8, d, None),
            Err(Error::IndexOutOfBounds { index: 8, len: 8 })
        ));
    }

    #[test]
    fn volume_rejects_bad_shapes() {
        assert!(Volume3D::from_data(Dims::cube(2), vec![0.0; 7]).is_err());
        assert!(Volume3D::new(Dims::cube(1), [1.0, 0.0, 1.0], vec![0.0]).is_err());
        assert!(SubjectStack::new(Dims::cube(1), 1, vec![0.0]).is_err());
    }

    #[test]
    fn residuals_have_zero_mean() {
        let stack = SubjectStack::new(Dims::new(2, 1, 1), 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 9.0])
            .unwrap();
        let r = stack.residuals();
        assert_eq!(r.subject(0), &[-2.0, -3.0]);
        assert_eq!(r.subject(2), &[2.0, 4.0]);
    }

    proptest! {
        #[test]
        fn linearisation_roundtrip(nx in 1usize..9, ny in 1usize..9, nz in 1usize..9) {
            let d = Dims::new(nx, ny, nz);
            for i in 0..d.len() {
                let (x, y, z) = d.coords(i);
                prop_assert_eq!(d.index(x, y, z), i);
            }
        }

        #[test]
        fn neighborhood_is_symmetric(
            nx in 1usize..6, ny in 1usize..6, nz in 1usize..6,
            bits in proptest::collection::vec(any::<bool>(), 216),
        ) {
            let d = Dims::new(nx, ny, nz);
            let mask = Mask3D::new(d, bits[..d.len()].to_vec()).unwrap();
            for u in mask.indices() {
                for v in neighbors26(u, d, Some(&mask)).unwrap() {
                    prop_assert!(neighbors26(v, d, Some(&mask)).unwrap().contains(&u));
                }
            }
        }
    }
}
