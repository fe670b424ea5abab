use crate::error::{Error, Result};
use crate::volume::{for_each_neighbor26, Dims, Mask3D, Volume3D};

pub(crate) const NONE: u32 = u32::MAX;

/// One step of a voxel's extent function: on `(next.tau, tau]` the cluster
/// containing the voxel has `size` voxels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChangePoint {
    pub tau: f64,
    pub size: u64,
}

/// Thresholds at which a voxel's cluster extent changes, descending in
/// `tau`. The first entry sits at the voxel's own value.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChangePointList {
    points: Vec<ChangePoint>,
}

impl ChangePointList {
    pub fn points(&self) -> &[ChangePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Extent at threshold `h`, or 0 above the voxel's value.
    pub fn size_at(&self, h: f64) -> u64 {
        // last point with tau >= h
        let k = self.points.partition_point(|p| p.tau >= h);
        if k == 0 {
            0
        } else {
            self.points[k - 1].size
        }
    }

    /// `sum_k g(size_k) * (F(tau_k) - F(tau_{k+1}))`, truncated below `h0`.
    pub fn integrate(&self, g: impl Fn(f64) -> f64, antiderivative: impl Fn(f64) -> f64, h0: f64) -> f64 {
        let mut total = 0.0;
        for (k, p) in self.points.iter().enumerate() {
            if p.tau <= h0 {
                break;
            }
            let lower = self.points.get(k + 1).map_or(h0, |q| q.tau.max(h0));
            total += g(p.size as f64) * (antiderivative(p.tau) - antiderivative(lower));
        }
        total
    }

    pub fn iter(&self) -> impl Iterator<Item = &ChangePoint> {
        self.points.iter()
    }
}

/// Disjoint-set forest over the superlevel-set filtration of a masked map.
///
/// Voxels are inserted in descending order of value (ties broken by
/// ascending linear index) and merged with already-inserted 26-neighbours
/// using union by rank. Every union is logged on the surviving root as a
/// `(height, size)` event, and the absorbed root keeps an uncompressed link
/// to its parent together with the height of the merge. The compressed
/// find-structure is discarded after construction, so the tree is
/// immutable and can be queried from many threads.
#[derive(Debug, Clone)]
pub struct MergeTree {
    dims: Dims,
    mask: Mask3D,
    value: Vec<f64>,
    order: Vec<u32>,
    parent: Vec<u32>,
    rank: Vec<u8>,
    merge_height: Vec<f64>,
    event_start: Vec<u32>,
    event_height: Vec<f64>,
    event_size: Vec<u32>,
    link_order: Vec<u32>,
}

fn find(up: &mut [u32], mut x: u32) -> u32 {
    while up[x as usize] != x {
        let p = up[x as usize];
        up[x as usize] = up[p as usize];
        x = p;
    }
    x
}

/// In-mask voxels sorted by descending value, ties by ascending index.
pub(crate) fn descending_order(values: &[f64], mask: &Mask3D) -> Vec<u32> {
    let mut order: Vec<u32> = mask.indices().map(|i| i as u32).collect();
    order.sort_unstable_by(|&a, &b| {
        values[b as usize]
            .total_cmp(&values[a as usize])
            .then(a.cmp(&b))
    });
    order
}

impl MergeTree {
    pub fn build(zmap: &Volume3D, mask: &Mask3D) -> Result<Self> {
        zmap.check_finite_on(mask)?;
        if mask.count() == 0 {
            return Err(Error::EmptyMask);
        }
        if mask.count() >= NONE as usize {
            return Err(Error::InvalidVolume("too many voxels for u32 indices".into()));
        }
        let dims = zmap.dims();
        let n = dims.len();
        let value = zmap.data().to_vec();
        let order = descending_order(&value, mask);

        let mut up = vec![NONE; n];
        let mut size = vec![0u32; n];
        let mut parent = vec![NONE; n];
        let mut rank = vec![0u8; n];
        let mut merge_height = vec![f64::NEG_INFINITY; n];
        let mut link_order = Vec::new();
        let mut log: Vec<(u32, f64, u32)> = Vec::with_capacity(2 * order.len());

        for &v in &order {
            let vi = v as usize;
            let h = value[vi];
            up[vi] = v;
            size[vi] = 1;
            log.push((v, h, 1));
            for_each_neighbor26(dims, vi, |u| {
                if up[u] == NONE {
                    // outside the mask or not yet inserted
                    return;
                }
                let ru = find(&mut up, u as u32);
                let rv = find(&mut up, v);
                if ru == rv {
                    return;
                }
                // on equal rank the neighbour's (older) root survives
                let (child, root) = if rank[rv as usize] > rank[ru as usize] {
                    (ru, rv)
                } else {
                    if rank[rv as usize] == rank[ru as usize] {
                        rank[ru as usize] += 1;
                    }
                    (rv, ru)
                };
                up[child as usize] = root;
                parent[child as usize] = root;
                merge_height[child as usize] = h;
                link_order.push(child);
                size[root as usize] += size[child as usize];
                log.push((root, h, size[root as usize]));
            });
        }

        // CSR layout of the event log, keeping per-node chronological order
        let mut event_start = vec![0u32; n + 1];
        for &(node, _, _) in &log {
            event_start[node as usize + 1] += 1;
        }
        for i in 0..n {
            event_start[i + 1] += event_start[i];
        }
        let mut cursor = event_start.clone();
        let mut event_height = vec![0.0; log.len()];
        let mut event_size = vec![0u32; log.len()];
        for (node, h, s) in log {
            let slot = cursor[node as usize] as usize;
            cursor[node as usize] += 1;
            event_height[slot] = h;
            event_size[slot] = s;
        }

        Ok(Self {
            dims,
            mask: mask.clone(),
            value,
            order,
            parent,
            rank,
            merge_height,
            event_start,
            event_height,
            event_size,
            link_order,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn mask(&self) -> &Mask3D {
        &self.mask
    }

    pub fn value(&self, voxel: usize) -> f64 {
        self.value[voxel]
    }

    pub fn values(&self) -> &[f64] {
        &self.value
    }

    /// In-mask voxels in insertion order.
    pub fn order(&self) -> &[u32] {
        &self.order
    }

    /// Merge-tree parent of `voxel`, `None` for a root.
    pub fn parent(&self, voxel: usize) -> Option<usize> {
        let p = self.parent[voxel];
        (p != NONE).then_some(p as usize)
    }

    pub fn rank(&self, voxel: usize) -> u8 {
        self.rank[voxel]
    }

    /// Height at which `voxel`'s subtree was absorbed into its parent.
    pub fn merge_height(&self, voxel: usize) -> Option<f64> {
        self.parent(voxel).map(|_| self.merge_height[voxel])
    }

    /// `(height, size)` events logged on `voxel` while it was a root.
    pub fn events(&self, voxel: usize) -> impl Iterator<Item = (f64, u64)> + '_ {
        let (s, e) = self.event_range(voxel);
        (s..e).map(|k| (self.event_height[k], self.event_size[k] as u64))
    }

    /// Longest root-ward path; logarithmic in the voxel count.
    pub fn depth(&self) -> usize {
        self.order
            .iter()
            .map(|&v| {
                let mut d = 0;
                let mut x = v;
                while self.parent[x as usize] != NONE {
                    x = self.parent[x as usize];
                    d += 1;
                }
                d
            })
            .max()
            .unwrap_or(0)
    }

    #[inline]
    fn event_range(&self, voxel: usize) -> (usize, usize) {
        (
            self.event_start[voxel] as usize,
            self.event_start[voxel + 1] as usize,
        )
    }

    #[inline]
    fn heights(&self, node: usize) -> &[f64] {
        let (s, e) = self.event_range(node);
        &self.event_height[s..e]
    }

    /// Size of `node`'s component at `tau`, given that `node` is the
    /// component's representative there.
    #[inline]
    fn node_size_at(&self, node: usize, tau: f64) -> u32 {
        let (s, _) = self.event_range(node);
        let k = self.heights(node).partition_point(|&h| h >= tau);
        debug_assert!(k > 0);
        self.event_size[s + k - 1]
    }

    /// Representative of `voxel`'s component within `{h >= tau}`.
    #[inline]
    fn representative(&self, voxel: usize, tau: f64) -> usize {
        let mut x = voxel;
        loop {
            let p = self.parent[x];
            if p == NONE || self.merge_height[x] < tau {
                return x;
            }
            x = p as usize;
        }
    }

    fn check_voxel(&self, voxel: usize) -> Result<()> {
        if voxel >= self.value.len() {
            return Err(Error::IndexOutOfBounds {
                index: voxel,
                len: self.value.len(),
            });
        }
        if !self.mask.contains(voxel) {
            return Err(Error::InvalidVolume(format!("voxel {voxel} is outside the mask")));
        }
        Ok(())
    }

    /// Exact size of the component of `{u : h_u >= tau}` containing `voxel`.
    pub fn cluster_size_at(&self, voxel: usize, tau: f64) -> Result<u64> {
        self.check_voxel(voxel)?;
        let h = self.value[voxel];
        if h < tau || tau.is_nan() {
            return Err(Error::VoxelBelowThreshold {
                voxel,
                value: h,
                threshold: tau,
            });
        }
        Ok(self.size_at_unchecked(voxel, tau) as u64)
    }

    #[inline]
    pub(crate) fn size_at_unchecked(&self, voxel: usize, tau: f64) -> u32 {
        let x = self.representative(voxel, tau);
        self.node_size_at(x, tau)
    }

    /// Calls `f(level, event)` for each level of the ascending `taus` that
    /// lies at or below the voxel's value, from the highest level down,
    /// where `event` indexes the merge event giving the cluster size there.
    pub(crate) fn walk_levels_desc(&self, voxel: usize, taus: &[f64], mut f: impl FnMut(usize, usize)) {
        let top = taus.partition_point(|&t| t <= self.value[voxel]);
        let mut x = voxel;
        for level in (0..top).rev() {
            let tau = taus[level];
            loop {
                let p = self.parent[x];
                if p == NONE || self.merge_height[x] < tau {
                    break;
                }
                x = p as usize;
            }
            let (s, _) = self.event_range(x);
            f(level, s + self.heights(x).partition_point(|&h| h >= tau) - 1);
        }
    }

    /// Calls `f(event, size, a, b)` for every merge event that is the
    /// cluster size of its node's component on levels `a..b` of `taus`.
    pub(crate) fn for_each_event_span(&self, taus: &[f64], mut f: impl FnMut(usize, u32, usize, usize)) {
        for &x in &self.order {
            let x = x as usize;
            let lower = if self.parent[x] == NONE {
                f64::NEG_INFINITY
            } else {
                self.merge_height[x]
            };
            let (s, e) = self.event_range(x);
            for k in s..e {
                let hi = self.event_height[k];
                let below = if k + 1 < e { self.event_height[k + 1] } else { f64::NEG_INFINITY };
                let lo = below.max(lower);
                if hi <= lo {
                    continue;
                }
                let a = taus.partition_point(|&t| t <= lo);
                let b = taus.partition_point(|&t| t <= hi);
                if b > a {
                    f(k, self.event_size[k], a, b);
                }
            }
        }
    }

    pub(crate) fn event_count(&self) -> usize {
        self.event_height.len()
    }

    /// Every threshold above 0 at which the extent of `voxel`'s cluster
    /// changes, with the constant size on each interval.
    pub fn change_points(&self, voxel: usize) -> Result<ChangePointList> {
        self.check_voxel(voxel)?;
        let h = self.value[voxel];
        if !(h > 0.0) {
            return Err(Error::VoxelBelowThreshold {
                voxel,
                value: h,
                threshold: 0.0,
            });
        }
        Ok(self.change_points_above(voxel, 0.0))
    }

    /// Change points strictly above `floor`.
    pub fn change_points_above(&self, voxel: usize, floor: f64) -> ChangePointList {
        let mut points: Vec<ChangePoint> = Vec::new();
        let mut x = voxel;
        let mut upper = self.value[voxel];
        loop {
            let lower = if self.parent[x] == NONE {
                f64::NEG_INFINITY
            } else {
                self.merge_height[x]
            };
            let heights = self.heights(x);
            let (s, _) = self.event_range(x);
            let start = heights.partition_point(|&hh| hh > upper);
            let end = heights.partition_point(|&hh| hh > lower.max(floor));
            for k in start..end {
                let cp = ChangePoint {
                    tau: heights[k],
                    size: self.event_size[s + k] as u64,
                };
                match points.last_mut() {
                    Some(last) if last.tau == cp.tau => *last = cp,
                    _ => points.push(cp),
                }
            }
            if self.parent[x] == NONE || lower <= floor {
                break;
            }
            upper = lower;
            x = self.parent[x] as usize;
        }
        ChangePointList { points }
    }

    /// Evaluates `sum_k g(e_k) (F(tau_k) - F(tau_{k-1}))` for every voxel at
    /// once, for several statistics in a single pass over the tree.
    ///
    /// Each node stores running integrals of its own piecewise-constant
    /// size function; a voxel's total is its own segment plus the integrals
    /// accumulated along its root-ward path, which are shared between
    /// siblings and computed once per node.
    pub(crate) fn integrate_all(&self, stats: &[&dyn ExtentIntegrand], h0: f64) -> Vec<Vec<f64>> {
        let n = self.value.len();
        let ns = stats.len();
        let m = self.event_height.len();
        // cumulative integral from each node's top event down to event k
        let mut cum = vec![0.0; m * ns];
        let mut gsize = vec![0.0; m * ns];
        let mut fh = vec![0.0; m * ns];
        for &v in &self.order {
            let (s, e) = self.event_range(v as usize);
            for (j, st) in stats.iter().enumerate() {
                for k in s..e {
                    gsize[k * ns + j] = st.extent_weight(self.event_size[k] as f64);
                    fh[k * ns + j] = st.height_antiderivative(self.event_height[k].max(h0));
                }
                let mut acc = 0.0;
                for k in s..e {
                    cum[k * ns + j] = acc;
                    if k + 1 < e {
                        acc += gsize[k * ns + j] * (fh[k * ns + j] - fh[(k + 1) * ns + j]);
                    }
                }
            }
        }
        // integral from the top of `node` down to height t, for statistic j
        let down_to = |node: usize, t: f64, j: usize, ft: f64| -> f64 {
            let (s, _) = self.event_range(node);
            let k = s + self.heights(node).partition_point(|&hh| hh >= t) - 1;
            cum[k * ns + j] + gsize[k * ns + j] * (fh[k * ns + j] - ft)
        };
        let bottom = |node: usize, j: usize| -> f64 {
            if self.parent[node] == NONE {
                let ft = stats[j].height_antiderivative(h0);
                let (_, e) = self.event_range(node);
                let k = e - 1;
                cum[k * ns + j] + gsize[k * ns + j] * (fh[k * ns + j] - ft)
            } else {
                let t = self.merge_height[node];
                down_to(node, t, j, stats[j].height_antiderivative(t.max(h0)))
            }
        };

        // accumulated integral below each node's link, parents first
        let mut below = vec![0.0; n * ns];
        for &x in self.link_order.iter().rev() {
            let x = x as usize;
            let p = self.parent[x] as usize;
            let t = self.merge_height[x];
            for j in 0..ns {
                let ft = stats[j].height_antiderivative(t.max(h0));
                let seg = bottom(p, j) - down_to(p, t, j, ft);
                below[x * ns + j] = seg + below[p * ns + j];
            }
        }

        let mut out = vec![vec![0.0; n]; ns];
        for &v in &self.order {
            let v = v as usize;
            if !(self.value[v] > h0) {
                continue;
            }
            for j in 0..ns {
                let ft = stats[j].height_antiderivative(self.value[v].max(h0));
                let own = bottom(v, j) - down_to(v, self.value[v], j, ft);
                out[j][v] = own + below[v * ns + j];
            }
        }
        out
    }
}

/// A statistic of the form `integral g(e_v(h)) f(h) dh`, described by the
/// extent weight `g` and an antiderivative of the height weight `f`.
pub trait ExtentIntegrand: Sync {
    fn extent_weight(&self, size: f64) -> f64;
    fn height_antiderivative(&self, h: f64) -> f64;
}
