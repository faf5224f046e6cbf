use serde::{Deserialize, Serialize};

use super::tree::ClusterTree;
use crate::error::{Result, SlabError};
use crate::linalg::{Mat, SolveMode};

/// Format version written into serialized matrices.
pub const HBS_FORMAT_VERSION: u32 = 1;

/// Generators of one tree node.
///
/// For a leaf, `d` is a block of the operator itself (`|τ| × |τ|`). For an inner
/// node with children `α, β`, `d` acts on the concatenated compressed
/// coordinates of its children: its diagonal sub-blocks are the remaining
/// diagonal parts and its off-diagonal sub-blocks are the sibling
/// interactions. `u`/`v` map the node's compressed coordinates back to its
/// (row/column) input coordinates; the root has zero-width generators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HbsNode {
    pub u: Mat,
    pub v: Mat,
    pub d: Mat,
}

fn in_gen(g: &HbsNode, adj: bool) -> &Mat {
    if adj {
        &g.u
    } else {
        &g.v
    }
}

fn out_gen(g: &HbsNode, adj: bool) -> &Mat {
    if adj {
        &g.v
    } else {
        &g.u
    }
}

/// Hierarchically block-separable matrix with telescoping generators.
///
/// With `D⁽ˡ⁾`, `U⁽ˡ⁾`, `V⁽ˡ⁾` the block-diagonal collections on level `l`,
/// the represented operator is `M = D⁽ᴸ⁾ + U⁽ᴸ⁾(D⁽ᴸ⁻¹⁾ + U⁽ᴸ⁻¹⁾(⋯ D⁽⁰⁾ ⋯)V⁽ᴸ⁻¹⁾ᵀ)V⁽ᴸ⁾ᵀ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HbsMatrix {
    format_version: u32,
    tree: ClusterTree,
    nodes: Vec<HbsNode>,
    rank_bound: usize,
    seed: u64,
}

impl HbsMatrix {
    /// Assembles a matrix from per-node generators (indexed like the tree
    /// nodes) after checking that all shapes telescope.
    pub fn from_parts(tree: ClusterTree, nodes: Vec<HbsNode>, rank_bound: usize, seed: u64) -> Result<Self> {
        if nodes.len() != tree.len() {
            return Err(SlabError::DimensionMismatch {
                context: "HBS node count",
                expected: tree.len(),
                actual: nodes.len(),
            });
        }
        for (i, t) in tree.nodes().iter().enumerate() {
            let g = &nodes[i];
            let (rows, cols) = match t.children {
                None => (t.len(), t.len()),
                Some([a, b]) => (
                    nodes[a].u.cols() + nodes[b].u.cols(),
                    nodes[a].v.cols() + nodes[b].v.cols(),
                ),
            };
            let bad = |what: String| Err(SlabError::invalid(format!("HBS node {i}: {what}")));
            if g.d.shape() != (rows, cols) {
                return bad(format!("D is {:?}, expected {:?}", g.d.shape(), (rows, cols)));
            }
            if g.u.rows() != rows || g.v.rows() != cols {
                return bad("generator row counts do not match D".into());
            }
            if t.parent.is_none() && (g.u.cols() != 0 || g.v.cols() != 0) {
                return bad("root generators must be empty".into());
            }
            if g.u.cols() > rank_bound || g.v.cols() > rank_bound {
                return bad(format!("generator wider than rank bound {rank_bound}"));
            }
        }
        Ok(Self {
            format_version: HBS_FORMAT_VERSION,
            tree,
            nodes,
            rank_bound,
            seed,
        })
    }

    /// Block-diagonal matrix (zero-width generators) with the given leaf blocks.
    pub fn block_diagonal(tree: ClusterTree, leaf_blocks: Vec<Mat>) -> Result<Self> {
        let leaves = tree.leaves();
        if leaves.len() != leaf_blocks.len() {
            return Err(SlabError::DimensionMismatch {
                context: "HBS leaf block count",
                expected: leaves.len(),
                actual: leaf_blocks.len(),
            });
        }
        let mut nodes: Vec<HbsNode> = tree
            .nodes()
            .iter()
            .map(|t| {
                let m = if t.is_leaf() { t.len() } else { 0 };
                HbsNode {
                    u: Mat::zeros(m, 0),
                    v: Mat::zeros(m, 0),
                    d: Mat::zeros(m, m),
                }
            })
            .collect();
        for (&l, blk) in leaves.iter().zip(leaf_blocks) {
            nodes[l].d = blk;
        }
        Self::from_parts(tree, nodes, 0, 0)
    }

    pub fn n(&self) -> usize {
        self.tree.n()
    }

    pub fn tree(&self) -> &ClusterTree {
        &self.tree
    }

    pub fn nodes(&self) -> &[HbsNode] {
        &self.nodes
    }

    pub fn rank_bound(&self) -> usize {
        self.rank_bound
    }

    /// Seed of the random stream used to build this matrix.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Widest generator actually stored.
    pub fn max_rank(&self) -> usize {
        self.nodes
            .iter()
            .map(|g| g.u.cols().max(g.v.cols()))
            .max()
            .unwrap_or(0)
    }

    /// Number of stored floating-point scalars.
    pub fn stored_scalars(&self) -> usize {
        self.nodes.iter().map(|g| g.u.len() + g.v.len() + g.d.len()).sum()
    }

    /// `M·x` (normal) or `Mᵀ·x` (adjoint) in `O(n·r)` work per column.
    pub fn apply(&self, x: &Mat, mode: SolveMode) -> Result<Mat> {
        let n = self.n();
        if x.rows() != n {
            return Err(SlabError::DimensionMismatch {
                context: "HBS apply",
                expected: n,
                actual: x.rows(),
            });
        }
        let c = x.cols();
        let adj = mode == SolveMode::Adjoint;
        let nn = self.nodes.len();
        let tn = self.tree.nodes();
        // upward: node inputs x̃ and compressed x̂ = Vᵀ x̃
        let mut xt: Vec<Mat> = vec![Mat::zeros(0, 0); nn];
        let mut xh: Vec<Mat> = vec![Mat::zeros(0, 0); nn];
        for i in (0..nn).rev() {
            xt[i] = match tn[i].children {
                None => x.rows_range(tn[i].range()),
                Some([a, b]) => xh[a].vstack(&xh[b]),
            };
            xh[i] = in_gen(&self.nodes[i], adj).t_matmul(&xt[i]);
        }
        // downward: ỹ = D x̃ + U z
        let mut yt: Vec<Mat> = vec![Mat::zeros(0, 0); nn];
        let mut out = Mat::zeros(n, c);
        for i in 0..nn {
            let g = &self.nodes[i];
            let mut y = if adj { g.d.t_matmul(&xt[i]) } else { g.d.matmul(&xt[i]) };
            if let Some(p) = tn[i].parent {
                let [a, _] = tn[p].children.expect("parent has children");
                let off = if a == i { 0 } else { out_gen(&self.nodes[a], adj).cols() };
                let k = out_gen(g, adj).cols();
                let z = yt[p].rows_range(off..off + k);
                y.axpy(1.0, &out_gen(g, adj).matmul(&z));
            }
            if tn[i].is_leaf() {
                out.set_block(tn[i].start, 0, &y);
            }
            yt[i] = y;
        }
        Ok(out)
    }

    /// Dense materialization of the represented operator.
    pub fn to_dense(&self) -> Mat {
        self.apply(&Mat::identity(self.n()), SolveMode::Normal)
            .expect("identity has matching size")
    }

    /// Row basis of node `i` expressed in original indices (`|τ| × k`).
    pub fn expanded_u(&self, i: usize) -> Mat {
        self.expanded(i, true)
    }

    /// Column basis of node `i` expressed in original indices.
    pub fn expanded_v(&self, i: usize) -> Mat {
        self.expanded(i, false)
    }

    fn expanded(&self, i: usize, rows: bool) -> Mat {
        let g = &self.nodes[i];
        let gen = if rows { &g.u } else { &g.v };
        match self.tree.node(i).children {
            None => gen.clone(),
            Some([a, b]) => {
                let (ea, eb) = (self.expanded(a, rows), self.expanded(b, rows));
                let mut blk = Mat::zeros(ea.rows() + eb.rows(), ea.cols() + eb.cols());
                blk.set_block(0, 0, &ea);
                blk.set_block(ea.rows(), ea.cols(), &eb);
                blk.matmul(gen)
            }
        }
    }

    /// Full compressed block of node `i` in its own input coordinates:
    /// `W(root) = D`, `W(τ) = D_τ + U_τ·W(parent)[τ, τ]·V_τᵀ`.
    fn compressed_block(&self, i: usize) -> Mat {
        let g = &self.nodes[i];
        match self.tree.node(i).parent {
            None => g.d.clone(),
            Some(p) => {
                let wp = self.compressed_block(p);
                let [a, _] = self.tree.node(p).children.expect("parent has children");
                let (r0, c0) = if a == i {
                    (0, 0)
                } else {
                    (self.nodes[a].u.cols(), self.nodes[a].v.cols())
                };
                let e = wp.block(r0..r0 + g.u.cols(), c0..c0 + g.v.cols());
                g.d.add(&g.u.matmul(&e).matmul_t(&g.v))
            }
        }
    }

    /// Sibling interaction blocks `(B_αβ, B_βα)` of inner node `p`, such that
    /// `M[α, β] = Û_α·B_αβ·V̂_βᵀ` with the expanded bases of
    /// [`expanded_u`](Self::expanded_u) / [`expanded_v`](Self::expanded_v).
    pub fn sibling_blocks(&self, p: usize) -> Option<(Mat, Mat)> {
        let [a, b] = self.tree.node(p).children?;
        let w = self.compressed_block(p);
        let (ka, la) = (self.nodes[a].u.cols(), self.nodes[a].v.cols());
        let (kb, lb) = (self.nodes[b].u.cols(), self.nodes[b].v.cols());
        Some((w.block(0..ka, la..la + lb), w.block(ka..ka + kb, 0..la)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parses a serialized matrix, rejecting unknown format versions and
    /// inconsistent shapes.
    pub fn from_json(s: &str) -> Result<Self> {
        let m: HbsMatrix = serde_json::from_str(s)?;
        if m.format_version != HBS_FORMAT_VERSION {
            return Err(SlabError::invalid(format!(
                "unsupported HBS format version {} (expected {HBS_FORMAT_VERSION})",
                m.format_version
            )));
        }
        if !m.tree.is_consistent() {
            return Err(SlabError::invalid("serialized HBS tree is inconsistent"));
        }
        Self::from_parts(m.tree, m.nodes, m.rank_bound, m.seed)
    }
}
