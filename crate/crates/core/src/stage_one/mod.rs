//! Local elimination of the interior strips.
//!
//! The grid columns are split into interior strips separated by single-column
//! interfaces. Each strip's interior block is factored independently; the
//! interface unknowns then satisfy a block-tridiagonal reduced system
//! `T = A_JJ − A_JI·A_II⁻¹·A_IJ`, whose blocks are available matrix-free via
//! [`StageOne::apply_t_block`] and can be formed densely or by randomized
//! HBS compression.

mod partition;
mod slab;

pub use partition::{partition, Block, SlabPartition, Strip};
pub use slab::{factor_interiors, Side, SlabFactor, SparseBlock};

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SlabError};
use crate::hbs::{build_tree, CompressionStats, GroupCompression, GroupSampler, HbsConfig};
use crate::linalg::{Mat, SolveMode};
use crate::problem::CsrMatrix;
use crate::stage_two::BlockTridiagonal;

/// How the reduced interface blocks are formed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Compression {
    /// Apply every Schur block to the identity.
    Dense,
    /// Compress every strip's Schur blocks from random samples.
    Hbs(HbsSettings),
}

/// Rank range and compression parameters for [`Compression::Hbs`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HbsSettings {
    pub config: HbsConfig,
    /// Initial rank bound; defaults to the maximum.
    pub r_start: Option<usize>,
    /// Rank cap; defaults to twice the strip width.
    pub r_max: Option<usize>,
}

impl HbsSettings {
    pub fn new(config: HbsConfig) -> Self {
        Self {
            config,
            r_start: None,
            r_max: None,
        }
    }

    fn ranks(&self, width: usize) -> (usize, usize) {
        let r_max = self.r_max.unwrap_or(2 * width).max(1);
        (self.r_start.unwrap_or(r_max).clamp(1, r_max), r_max)
    }
}

/// Distinct, reproducible seed for each strip's compression stream.
pub fn strip_seed(seed: u64, strip: usize) -> u64 {
    seed ^ (strip as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Compression record of one strip.
#[derive(Clone, Debug)]
pub struct StripCompression {
    pub strip: usize,
    /// Interface sides, in group order of `blocks`.
    pub sides: Vec<Side>,
    pub blocks: GroupCompression,
}

impl StripCompression {
    pub fn stats(&self) -> &CompressionStats {
        &self.blocks.stats
    }
}

/// Block-tridiagonal reduced system plus how it was obtained.
#[derive(Clone, Debug)]
pub struct ReducedSystem {
    pub blocks: BlockTridiagonal,
    /// Per-strip compression records (empty in dense mode).
    pub compression: Vec<StripCompression>,
}

impl ReducedSystem {
    /// Widest HBS generator over all strips (0 in dense mode).
    pub fn hbs_max_rank(&self) -> usize {
        self.compression.iter().map(|c| c.stats().max_rank).max().unwrap_or(0)
    }
}

/// Factored interior strips plus the interface couplings of the global matrix.
#[derive(Clone, Debug)]
pub struct StageOne {
    part: SlabPartition,
    slabs: Vec<SlabFactor>,
    /// `A_jj`.
    iface_diag: Vec<SparseBlock>,
    /// `A_{j,j+1}`.
    iface_next: Vec<SparseBlock>,
    /// `A_{j+1,j}`.
    iface_prev: Vec<SparseBlock>,
    symmetric: bool,
    sign_fault: bool,
}

/// Schur contribution to a reduced block: strip, output side, input side.
type Contribution = (usize, Side, Side);

impl StageOne {
    /// Factors every strip and extracts the interface couplings.
    pub fn new(matrix: &CsrMatrix, part: SlabPartition) -> Result<Self> {
        let slabs = factor_interiors(matrix, &part)?;
        let n2 = part.n2;
        let m = part.num_interfaces();
        let mut iface_diag = vec![SparseBlock::new(n2, n2); m];
        let mut iface_next = vec![SparseBlock::new(n2, n2); m.saturating_sub(1)];
        let mut iface_prev = vec![SparseBlock::new(n2, n2); m.saturating_sub(1)];
        for j in 0..m {
            let (ls, rs) = part.strips_of_interface(j);
            let near = |col: usize| {
                [ls, rs]
                    .into_iter()
                    .flatten()
                    .any(|s| part.strips[s].columns().contains(&col))
            };
            let c = part.interfaces[j];
            for row in 0..n2 {
                let g = c * n2 + row;
                let (idx, vals) = matrix.row(g);
                for (&gc, &v) in idx.iter().zip(vals) {
                    let (col, r2) = (gc / n2, gc % n2);
                    if col == c {
                        iface_diag[j].entries.push((row, r2, v));
                    } else if j + 1 < m && col == part.interfaces[j + 1] {
                        iface_next[j].entries.push((row, r2, v));
                    } else if j > 0 && col == part.interfaces[j - 1] {
                        iface_prev[j - 1].entries.push((row, r2, v));
                    } else if !near(col) {
                        return Err(SlabError::invalid(format!(
                            "matrix entry ({g}, {gc}) couples an interface to a non-adjacent block"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            part,
            slabs,
            iface_diag,
            iface_next,
            iface_prev,
            symmetric: matrix.is_symmetric(0.0),
            sign_fault: false,
        })
    }

    /// Test hook: flips the sign of the Schur correction in every reduced block.
    #[doc(hidden)]
    pub fn with_sign_fault(mut self, on: bool) -> Self {
        self.sign_fault = on;
        self
    }

    pub fn partition(&self) -> &SlabPartition {
        &self.part
    }

    pub fn slabs(&self) -> &[SlabFactor] {
        &self.slabs
    }

    pub fn num_interfaces(&self) -> usize {
        self.part.num_interfaces()
    }

    /// Dimension of the reduced system.
    pub fn reduced_dim(&self) -> usize {
        self.num_interfaces() * self.part.n2
    }

    /// Whether the global matrix is exactly symmetric.
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Scalars retained by stage one (banded factors plus couplings).
    pub fn stored_scalars(&self) -> usize {
        self.slabs.iter().map(SlabFactor::stored_scalars).sum::<usize>()
            + self
                .iface_diag
                .iter()
                .chain(&self.iface_next)
                .chain(&self.iface_prev)
                .map(SparseBlock::nnz)
                .sum::<usize>()
    }

    fn coupling(&self, j: usize, k: usize) -> &SparseBlock {
        if j == k {
            &self.iface_diag[j]
        } else if k == j + 1 {
            &self.iface_next[j]
        } else {
            &self.iface_prev[k]
        }
    }

    /// Strip Schur blocks that enter `T_jk`, in a fixed order.
    fn contributions(&self, j: usize, k: usize) -> Vec<Contribution> {
        if j == k {
            let (l, r) = self.part.strips_of_interface(j);
            l.map(|s| (s, Side::Right, Side::Right))
                .into_iter()
                .chain(r.map(|s| (s, Side::Left, Side::Left)))
                .collect()
        } else if k == j + 1 {
            self.part.strip_between(j).map(|s| (s, Side::Left, Side::Right)).into_iter().collect()
        } else {
            self.part.strip_between(k).map(|s| (s, Side::Right, Side::Left)).into_iter().collect()
        }
    }

    fn check_block(&self, j: usize, k: usize) -> Result<()> {
        let m = self.num_interfaces();
        if j >= m || k >= m {
            return Err(SlabError::invalid(format!(
                "reduced block ({j}, {k}) out of range for {m} interfaces"
            )));
        }
        if j.abs_diff(k) > 1 {
            return Err(SlabError::NonAdjacentBlock { j, k });
        }
        Ok(())
    }

    fn correct(&self, out: &mut Mat, schur: &Mat) {
        out.axpy(if self.sign_fault { 1.0 } else { -1.0 }, schur);
    }

    /// `T_jk·x` (normal) or `T_jkᵀ·x` (adjoint) without forming `T_jk`.
    /// Blocks with `|j − k| > 1` are structurally zero and rejected.
    pub fn apply_t_block(&self, j: usize, k: usize, x: &Mat, mode: SolveMode) -> Result<Mat> {
        self.check_block(j, k)?;
        if x.rows() != self.part.n2 {
            return Err(SlabError::DimensionMismatch {
                context: "reduced block apply",
                expected: self.part.n2,
                actual: x.rows(),
            });
        }
        let mut out = self.coupling(j, k).apply(x, mode);
        for (s, g, h) in self.contributions(j, k) {
            let sx = self.slabs[s].schur_block_apply(g, h, x, mode)?;
            self.correct(&mut out, &sx);
        }
        Ok(out)
    }

    /// Forms every reduced block, densely or through HBS compression.
    ///
    /// Strips are processed in parallel batches; their Schur blocks are folded
    /// into the reduced blocks in strip order, so the result does not depend
    /// on the thread count.
    pub fn build_reduced(&self, compression: &Compression) -> Result<ReducedSystem> {
        let n2 = self.part.n2;
        let m = self.num_interfaces();
        let eye = Mat::identity(n2);
        let init = |j: usize, k: usize| self.coupling(j, k).apply(&eye, SolveMode::Normal);
        let mut diag: Vec<Mat> = (0..m).map(|j| init(j, j)).collect();
        let mut sup: Vec<Mat> = (1..m).map(|j| init(j - 1, j)).collect();
        let mut sub: Vec<Mat> = (1..m).map(|j| init(j, j - 1)).collect();
        let mut records = Vec::new();
        let batch = rayon::current_num_threads().max(1);
        let strips: Vec<usize> = (0..self.slabs.len()).filter(|&s| !self.slabs[s].sides().is_empty()).collect();
        for chunk in strips.chunks(batch) {
            let results: Vec<Result<(usize, SchurBlocks, Option<StripCompression>)>> = chunk
                .par_iter()
                .map(|&s| {
                    let (blocks, rec) = self.strip_schur_blocks(s, compression, &eye)?;
                    Ok((s, blocks, rec))
                })
                .collect();
            for res in results {
                let (s, blocks, rec) = res?;
                let st = &self.slabs[s].strip;
                for (g, h) in [(Side::Right, Side::Right), (Side::Left, Side::Left), (Side::Left, Side::Right), (Side::Right, Side::Left)] {
                    let Some(b) = &blocks[g.index()][h.index()] else { continue };
                    let (Some(jg), Some(jh)) = (side_iface(st, g), side_iface(st, h)) else { continue };
                    let target = if jg == jh {
                        &mut diag[jg]
                    } else if jh == jg + 1 {
                        &mut sup[jg]
                    } else {
                        &mut sub[jh]
                    };
                    self.correct(target, b);
                }
                if let Some(rec) = rec {
                    records.push(rec);
                }
            }
        }
        Ok(ReducedSystem {
            blocks: BlockTridiagonal::new(n2, diag, sup, sub)?,
            compression: records,
        })
    }

    fn strip_schur_blocks(
        &self,
        s: usize,
        compression: &Compression,
        eye: &Mat,
    ) -> Result<(SchurBlocks, Option<StripCompression>)> {
        let slab = &self.slabs[s];
        let sides = slab.sides();
        let mut blocks: SchurBlocks = Default::default();
        match compression {
            Compression::Dense => {
                for &h in &sides {
                    let out = slab.schur_sample(h, eye, SolveMode::Normal, &sides)?;
                    for (g, b) in Side::BOTH.into_iter().zip(out) {
                        blocks[g.index()][h.index()] = b;
                    }
                }
                Ok((blocks, None))
            }
            Compression::Hbs(settings) => {
                let (r_start, r_max) = settings.ranks(slab.strip.width);
                let cfg = HbsConfig {
                    seed: strip_seed(settings.config.seed, s),
                    ..settings.config.clone()
                };
                let sampler = StripSampler {
                    slab,
                    sides: &sides,
                    symmetric: self.symmetric,
                };
                let tree = build_tree(self.part.n2, cfg.leaf_size);
                let comp = crate::hbs::hbs_compress_groups(&sampler, &tree, r_start, r_max, &cfg).map_err(|e| match e {
                    SlabError::CompressionFailed {
                        residual,
                        tol,
                        rank,
                        block,
                    } => SlabError::CompressionFailed {
                        residual,
                        tol,
                        rank,
                        block: Some(format!("strip {s}{}", block.map(|b| format!(", {b}")).unwrap_or_default())),
                    },
                    other => other,
                })?;
                debug!("strip {s}: {:?}", comp.stats);
                for (gi, &g) in sides.iter().enumerate() {
                    for (hi, &h) in sides.iter().enumerate() {
                        blocks[g.index()][h.index()] = Some(comp.block(gi, hi).to_dense());
                    }
                }
                Ok((
                    blocks,
                    Some(StripCompression {
                        strip: s,
                        sides,
                        blocks: comp,
                    }),
                ))
            }
        }
    }

    fn check_rhs(&self, rows: usize, context: &'static str) -> Result<()> {
        if rows != self.part.n() {
            return Err(SlabError::DimensionMismatch {
                context,
                expected: self.part.n(),
                actual: rows,
            });
        }
        Ok(())
    }

    /// Interface right-hand side `f_J − A_JI·A_II⁻¹·f_I` for every column of `f`.
    pub fn reduce_rhs(&self, f: &Mat) -> Result<Mat> {
        self.check_rhs(f.rows(), "reduce_rhs")?;
        let n2 = self.part.n2;
        let c = f.cols();
        let mut out = Mat::zeros(self.reduced_dim(), c);
        for j in 0..self.num_interfaces() {
            out.set_block(j * n2, 0, &f.rows_range(self.part.interface_range(j)));
        }
        let parts: Vec<Result<Vec<(usize, Mat)>>> = self
            .slabs
            .par_iter()
            .map(|slab| {
                let st = &slab.strip;
                let sides = slab.sides();
                if sides.is_empty() {
                    return Ok(Vec::new());
                }
                let mut buf = gather_strip(st, f);
                slab.solve_interior_rows(&mut buf, c, SolveMode::Normal)?;
                let wk = rows_to_mat(&buf, st.len(), c);
                Ok(sides
                    .into_iter()
                    .map(|g| {
                        let j = side_iface(st, g).expect("side present");
                        (j, slab.from_iface(g).expect("side present").apply(&wk, SolveMode::Normal))
                    })
                    .collect())
            })
            .collect();
        for p in parts {
            for (j, contrib) in p? {
                let mut blk = out.rows_range(j * n2..(j + 1) * n2);
                blk.axpy(-1.0, &contrib);
                out.set_block(j * n2, 0, &blk);
            }
        }
        Ok(out)
    }

    /// Full solution from the interface values: interiors solve
    /// `A_ii·u_i = f_i − A_{i,J}·u_J` strip by strip.
    pub fn recover_interiors(&self, u_iface: &Mat, f: &Mat) -> Result<Mat> {
        self.check_rhs(f.rows(), "recover_interiors")?;
        if u_iface.rows() != self.reduced_dim() || u_iface.cols() != f.cols() {
            return Err(SlabError::DimensionMismatch {
                context: "recover_interiors interface values",
                expected: self.reduced_dim(),
                actual: u_iface.rows(),
            });
        }
        let n2 = self.part.n2;
        let c = f.cols();
        let mut u = Mat::zeros(self.part.n(), c);
        for j in 0..self.num_interfaces() {
            u.set_block(self.part.interface_range(j).start, 0, &u_iface.rows_range(j * n2..(j + 1) * n2));
        }
        let interiors: Vec<Result<Vec<f64>>> = self
            .slabs
            .par_iter()
            .map(|slab| {
                let st = &slab.strip;
                let mut rhs = Mat::zeros(st.len(), c);
                for g in slab.sides() {
                    let j = side_iface(st, g).expect("side present");
                    let uj = u_iface.rows_range(j * n2..(j + 1) * n2);
                    rhs.axpy(1.0, &slab.to_iface(g).expect("side present").apply(&uj, SolveMode::Normal));
                }
                let mut buf = gather_strip(st, f);
                for l in 0..st.len() {
                    for k in 0..c {
                        buf[l * c + k] -= rhs[(l, k)];
                    }
                }
                slab.solve_interior_rows(&mut buf, c, SolveMode::Normal)?;
                Ok(buf)
            })
            .collect();
        for (slab, buf) in self.slabs.iter().zip(interiors) {
            let buf = buf?;
            let st = &slab.strip;
            for l in 0..st.len() {
                let g = st.global(l);
                for k in 0..c {
                    u[(g, k)] = buf[l * c + k];
                }
            }
        }
        Ok(u)
    }
}

/// `blocks[g][h] = S_{gh}` of one strip.
type SchurBlocks = [[Option<Mat>; 2]; 2];

fn side_iface(st: &Strip, side: Side) -> Option<usize> {
    match side {
        Side::Left => st.left,
        Side::Right => st.right,
    }
}

/// Strip rows of `f` in strip-local, row-major layout.
fn gather_strip(st: &Strip, f: &Mat) -> Vec<f64> {
    let c = f.cols();
    let mut buf = vec![0.0; st.len() * c];
    for l in 0..st.len() {
        let g = st.global(l);
        for k in 0..c {
            buf[l * c + k] = f[(g, k)];
        }
    }
    buf
}

fn rows_to_mat(buf: &[f64], rows: usize, c: usize) -> Mat {
    Mat::from_fn(rows, c, |i, k| buf[i * c + k])
}

/// Presents a strip's Schur blocks to the HBS compressor, one group per side.
struct StripSampler<'a> {
    slab: &'a SlabFactor,
    sides: &'a [Side],
    symmetric: bool,
}

impl GroupSampler for StripSampler<'_> {
    fn groups(&self) -> usize {
        self.sides.len()
    }

    fn dim(&self) -> usize {
        self.slab.strip.n2
    }

    fn sample(&self, h: usize, x: &Mat, mode: SolveMode) -> Result<Vec<Mat>> {
        let mut out = self.slab.schur_sample(self.sides[h], x, mode, self.sides)?;
        Ok(self
            .sides
            .iter()
            .map(|g| out[g.index()].take().expect("requested output"))
            .collect())
    }

    fn is_symmetric(&self) -> bool {
        self.symmetric
    }
}

#[cfg(test)]
mod tests;
