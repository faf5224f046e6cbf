//! Block-tridiagonal elimination of the reduced interface system.
//!
//! The interface unknowns couple only to their immediate neighbours, so the
//! reduced system is block tridiagonal. A forward sweep forms the pivot blocks
//! `S₀ = T₀₀`, `S_j = T_jj − T_{j,j−1}·S_{j−1}⁻¹·T_{j−1,j}` and stores their
//! LU factors; a solve is one forward and one backward substitution.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SlabError};
use crate::linalg::{DenseLu, Mat, SolveMode};

/// Block-tridiagonal matrix with square blocks of a common size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockTridiagonal {
    pub block_dim: usize,
    /// `T_jj`.
    pub diag: Vec<Mat>,
    /// `T_{j,j+1}`.
    pub sup: Vec<Mat>,
    /// `T_{j+1,j}`.
    pub sub: Vec<Mat>,
}

impl BlockTridiagonal {
    pub fn new(block_dim: usize, diag: Vec<Mat>, sup: Vec<Mat>, sub: Vec<Mat>) -> Result<Self> {
        let k = diag.len();
        let off = k.saturating_sub(1);
        if sup.len() != off || sub.len() != off {
            return Err(SlabError::DimensionMismatch {
                context: "off-diagonal block count",
                expected: off,
                actual: sup.len().max(sub.len()),
            });
        }
        for m in diag.iter().chain(&sup).chain(&sub) {
            if m.shape() != (block_dim, block_dim) {
                return Err(SlabError::DimensionMismatch {
                    context: "block-tridiagonal block size",
                    expected: block_dim,
                    actual: if m.rows() != block_dim { m.rows() } else { m.cols() },
                });
            }
        }
        Ok(Self {
            block_dim,
            diag,
            sup,
            sub,
        })
    }

    pub fn num_blocks(&self) -> usize {
        self.diag.len()
    }

    pub fn dim(&self) -> usize {
        self.block_dim * self.num_blocks()
    }

    pub fn stored_scalars(&self) -> usize {
        self.diag.iter().chain(&self.sup).chain(&self.sub).map(Mat::len).sum()
    }

    pub fn to_dense(&self) -> Mat {
        let n = self.block_dim;
        let mut m = Mat::zeros(self.dim(), self.dim());
        for (j, d) in self.diag.iter().enumerate() {
            m.set_block(j * n, j * n, d);
        }
        for (j, (up, lo)) in self.sup.iter().zip(&self.sub).enumerate() {
            m.set_block(j * n, (j + 1) * n, up);
            m.set_block((j + 1) * n, j * n, lo);
        }
        m
    }

    /// `T·x` for a stacked block vector `x`.
    pub fn matmul(&self, x: &Mat) -> Result<Mat> {
        let n = self.block_dim;
        if x.rows() != self.dim() {
            return Err(SlabError::DimensionMismatch {
                context: "block-tridiagonal product",
                expected: self.dim(),
                actual: x.rows(),
            });
        }
        let mut out = Mat::zeros(x.rows(), x.cols());
        for j in 0..self.num_blocks() {
            let mut y = self.diag[j].matmul(&x.rows_range(j * n..(j + 1) * n));
            if j + 1 < self.num_blocks() {
                y.axpy(1.0, &self.sup[j].matmul(&x.rows_range((j + 1) * n..(j + 2) * n)));
            }
            if j > 0 {
                y.axpy(1.0, &self.sub[j - 1].matmul(&x.rows_range((j - 1) * n..j * n)));
            }
            out.set_block(j * n, 0, &y);
        }
        Ok(out)
    }
}

/// Factored sweep: LU factors of every pivot block plus the off-diagonal blocks.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepFactor {
    block_dim: usize,
    pivots: Vec<DenseLu>,
    sup: Vec<Mat>,
    sub: Vec<Mat>,
}

/// Forward elimination sweep over the block-tridiagonal system.
pub fn sweep_build(t: BlockTridiagonal) -> Result<SweepFactor> {
    let BlockTridiagonal {
        block_dim,
        diag,
        sup,
        sub,
    } = t;
    let mut pivots: Vec<DenseLu> = Vec::with_capacity(diag.len());
    for (j, mut s) in diag.into_iter().enumerate() {
        if j > 0 {
            // S_j = T_jj − T_{j,j−1}·(S_{j−1}⁻¹·T_{j−1,j})
            let w = pivots[j - 1].solve(&sup[j - 1], SolveMode::Normal)?;
            crate::linalg::gemm(
                -1.0,
                &sub[j - 1],
                crate::linalg::Op::N,
                &w,
                crate::linalg::Op::N,
                1.0,
                &mut s,
            );
        }
        let lu = DenseLu::factor(s).map_err(|e| match e {
            SlabError::Singular { column } => SlabError::SingularSweep { block: j, column },
            other => other,
        })?;
        pivots.push(lu);
    }
    Ok(SweepFactor {
        block_dim,
        pivots,
        sup,
        sub,
    })
}

impl SweepFactor {
    pub fn num_blocks(&self) -> usize {
        self.pivots.len()
    }

    pub fn dim(&self) -> usize {
        self.block_dim * self.num_blocks()
    }

    /// `k·n₂² + 2(k−1)·n₂²` scalars (pivot indices not counted).
    pub fn stored_scalars(&self) -> usize {
        self.pivots.iter().map(|p| p.dim() * p.dim()).sum::<usize>()
            + self.sup.iter().chain(&self.sub).map(Mat::len).sum::<usize>()
    }

    /// Solves `T·x = rhs` for a stacked multi-column right-hand side.
    pub fn sweep_solve(&self, rhs: &Mat) -> Result<Mat> {
        let n = self.block_dim;
        let k = self.num_blocks();
        if rhs.rows() != self.dim() {
            return Err(SlabError::DimensionMismatch {
                context: "sweep solve",
                expected: self.dim(),
                actual: rhs.rows(),
            });
        }
        let blk = |j: usize| j * n..(j + 1) * n;
        // forward: y_j = r_j − T_{j,j−1}·S_{j−1}⁻¹·y_{j−1}
        let mut y: Vec<Mat> = Vec::with_capacity(k);
        for j in 0..k {
            let mut yj = rhs.rows_range(blk(j));
            if j > 0 {
                let w = self.pivots[j - 1].solve(&y[j - 1], SolveMode::Normal)?;
                yj.axpy(-1.0, &self.sub[j - 1].matmul(&w));
            }
            y.push(yj);
        }
        // backward: x_j = S_j⁻¹·(y_j − T_{j,j+1}·x_{j+1})
        let mut x = Mat::zeros(rhs.rows(), rhs.cols());
        for j in (0..k).rev() {
            let mut r = std::mem::replace(&mut y[j], Mat::zeros(0, 0));
            if j + 1 < k {
                r.axpy(-1.0, &self.sup[j].matmul(&x.rows_range(blk(j + 1))));
            }
            x.set_block(j * n, 0, &self.pivots[j].solve(&r, SolveMode::Normal)?);
        }
        Ok(x)
    }
}
