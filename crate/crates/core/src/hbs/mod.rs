//! Rank-structured (HBS) representation of dense interface operators and its
//! randomized black-box construction.

mod compress;
mod matrix;
mod tree;

pub use compress::{
    compress_from_samples, hbs_compress, hbs_compress_adaptive, hbs_compress_groups, CompressionStats,
    DenseSampler, GroupCompression, GroupSampler, HbsConfig, Sampler,
};
pub use matrix::{HbsMatrix, HbsNode, HBS_FORMAT_VERSION};
pub use tree::{build_tree, ClusterTree, TreeNode};
