//! Superlevel-set component structure: the union-find merge tree and
//! per-threshold connected-component labelling.

mod ccl;
mod merge_tree;

pub(crate) use ccl::LevelLabeller;
pub use ccl::ccl_cluster_sizes;
pub(crate) use merge_tree::descending_order;
pub use merge_tree::{ChangePoint, ChangePointList, ExtentIntegrand, MergeTree};

use crate::error::Result;
use crate::volume::{Mask3D, Volume3D};

/// Builds the merge tree of the superlevel-set filtration of `zmap`.
pub fn build_merge_tree(zmap: &Volume3D, mask: &Mask3D) -> Result<MergeTree> {
    MergeTree::build(zmap, mask)
}

/// Exact size of the component of `{h >= tau}` containing `voxel`.
pub fn cluster_size_at(tree: &MergeTree, voxel: usize, tau: f64) -> Result<u64> {
    tree.cluster_size_at(voxel, tau)
}

/// Thresholds above 0 at which `voxel`'s cluster extent changes.
pub fn change_points(tree: &MergeTree, voxel: usize) -> Result<ChangePointList> {
    tree.change_points(voxel)
}
