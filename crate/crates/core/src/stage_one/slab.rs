use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::partition::{SlabPartition, Strip};
use crate::error::{Result, SlabError};
use crate::linalg::{BandedLu, BandedMatrix, Mat, SolveMode};
use crate::problem::CsrMatrix;

/// Right-hand sides pushed through a banded solve at once.
const RHS_CHUNK: usize = 64;

/// Which interface of a strip.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }
}

/// Small sparse block stored as coordinate triplets.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseBlock {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseBlock {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn to_dense(&self) -> Mat {
        let mut m = Mat::zeros(self.rows, self.cols);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }

    /// `B·x` (normal) or `Bᵀ·x` (adjoint) for a column-major block `x`.
    pub fn apply(&self, x: &Mat, mode: SolveMode) -> Mat {
        let c = x.cols();
        let (out_rows, in_rows) = match mode {
            SolveMode::Normal => (self.rows, self.cols),
            SolveMode::Adjoint => (self.cols, self.rows),
        };
        debug_assert_eq!(x.rows(), in_rows);
        let mut out = Mat::zeros(out_rows, c);
        for k in 0..c {
            let xk = x.col(k);
            let ok = out.col_mut(k);
            for &(r, cc, v) in &self.entries {
                match mode {
                    SolveMode::Normal => ok[r] += v * xk[cc],
                    SolveMode::Adjoint => ok[cc] += v * xk[r],
                }
            }
        }
        out
    }

    /// Adds `op(B)·x[:, c0..c0+c]` into the row-major buffer `y` (`rows × c`).
    fn scatter(&self, x: &Mat, c0: usize, c: usize, y: &mut [f64], transposed: bool) {
        for &(r, cc, v) in &self.entries {
            let (dst, src) = if transposed { (cc, r) } else { (r, cc) };
            let row = &mut y[dst * c..(dst + 1) * c];
            for (k, yk) in row.iter_mut().enumerate() {
                *yk += v * x[(src, c0 + k)];
            }
        }
    }

    /// Adds `op(B)·buf` (buf row-major, `c` columns) into `out[:, c0..c0+c]`.
    fn gather(&self, buf: &[f64], c0: usize, c: usize, out: &mut Mat, transposed: bool) {
        for &(r, cc, v) in &self.entries {
            let (dst, src) = if transposed { (cc, r) } else { (r, cc) };
            let row = &buf[src * c..(src + 1) * c];
            for (k, bk) in row.iter().enumerate() {
                out[(dst, c0 + k)] += v * bk;
            }
        }
    }
}

/// Factored interior block of one strip together with its couplings to the
/// neighbouring interfaces.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlabFactor {
    pub strip: Strip,
    lu: BandedLu,
    /// `A_{i,side}`: strip rows × interface columns.
    to_iface: [Option<SparseBlock>; 2],
    /// `A_{side,i}`: interface rows × strip columns.
    from_iface: [Option<SparseBlock>; 2],
}

fn coupling_error(row: usize, col: usize) -> SlabError {
    SlabError::invalid(format!(
        "matrix entry ({row}, {col}) couples grid columns that are not adjacent in the slab partition"
    ))
}

impl SlabFactor {
    /// Extracts the strip's interior block (banded, strip-local ordering) and
    /// its interface couplings from the global matrix, then factors it.
    pub fn assemble(matrix: &CsrMatrix, part: &SlabPartition, s: usize) -> Result<Self> {
        let st = part.strips[s];
        let n2 = part.n2;
        let w = st.width;
        let iface_col = |side: Side| match side {
            Side::Left => st.left.map(|j| part.interfaces[j]),
            Side::Right => st.right.map(|j| part.interfaces[j]),
        };
        let cols = [iface_col(Side::Left), iface_col(Side::Right)];
        let mut band = BandedMatrix::zeros(st.len(), w, w);
        let mut to_iface = cols.map(|c| c.map(|_| SparseBlock::new(st.len(), n2)));
        let mut from_iface = cols.map(|c| c.map(|_| SparseBlock::new(n2, st.len())));
        for l in 0..st.len() {
            let g = st.global(l);
            let (idx, vals) = matrix.row(g);
            for (&gc, &v) in idx.iter().zip(vals) {
                let col = gc / n2;
                if st.columns().contains(&col) {
                    let lc = st.local(gc);
                    if lc.abs_diff(l) > w {
                        return Err(coupling_error(g, gc));
                    }
                    band.add_to(l, lc, v);
                } else if let Some(side) = Side::BOTH.into_iter().find(|sd| cols[sd.index()] == Some(col)) {
                    to_iface[side.index()]
                        .as_mut()
                        .expect("side present")
                        .entries
                        .push((l, gc % n2, v));
                } else {
                    return Err(coupling_error(g, gc));
                }
            }
        }
        for side in Side::BOTH {
            let Some(c) = cols[side.index()] else { continue };
            let blk = from_iface[side.index()].as_mut().expect("side present");
            for row in 0..n2 {
                let (idx, vals) = matrix.row(c * n2 + row);
                for (&gc, &v) in idx.iter().zip(vals) {
                    if st.columns().contains(&(gc / n2)) {
                        blk.entries.push((row, st.local(gc), v));
                    }
                }
            }
        }
        let lu = BandedLu::factor(band).map_err(|e| match e {
            SlabError::Singular { column } => SlabError::SingularSlab { slab: s, row: column },
            other => other,
        })?;
        Ok(Self {
            strip: st,
            lu,
            to_iface,
            from_iface,
        })
    }

    pub fn has_side(&self, side: Side) -> bool {
        self.to_iface[side.index()].is_some()
    }

    pub fn sides(&self) -> Vec<Side> {
        Side::BOTH.into_iter().filter(|&s| self.has_side(s)).collect()
    }

    /// Scalars held by the banded factors plus the retained couplings.
    pub fn stored_scalars(&self) -> usize {
        let couplings: usize = self
            .to_iface
            .iter()
            .chain(&self.from_iface)
            .flatten()
            .map(SparseBlock::nnz)
            .sum();
        self.lu.stored_scalars() + couplings
    }

    /// Scalars held by the banded factors alone.
    pub fn factor_scalars(&self) -> usize {
        self.lu.stored_scalars()
    }

    /// `A_ii⁻¹·f` (or `A_ii⁻ᵀ·f`) for a row-major strip-local block with `c` columns.
    pub fn solve_interior_rows(&self, f: &mut [f64], c: usize, mode: SolveMode) -> Result<()> {
        self.lu.solve_rows_in_place(f, c, mode)
    }

    pub fn to_iface(&self, side: Side) -> Option<&SparseBlock> {
        self.to_iface[side.index()].as_ref()
    }

    pub fn from_iface(&self, side: Side) -> Option<&SparseBlock> {
        self.from_iface[side.index()].as_ref()
    }

    fn missing(&self, side: Side) -> SlabError {
        SlabError::invalid(format!("strip at column {} has no {side:?} interface", self.strip.col0))
    }

    /// Products of the strip's Schur complement blocks
    /// `S_{gh} = A_{g,i}·A_ii⁻¹·A_{i,h}` with input side `h`:
    /// normal mode returns `S_{gh}·x` for every side `g`, adjoint mode
    /// returns `S_{hg}ᵀ·x`. Outputs are indexed by [`Side::index`].
    pub fn schur_sample(&self, h: Side, x: &Mat, mode: SolveMode, outputs: &[Side]) -> Result<[Option<Mat>; 2]> {
        let n2 = self.strip.n2;
        if x.rows() != n2 {
            return Err(SlabError::DimensionMismatch {
                context: "slab Schur apply",
                expected: n2,
                actual: x.rows(),
            });
        }
        let adj = mode == SolveMode::Adjoint;
        let input = if adj { self.from_iface(h) } else { self.to_iface(h) }.ok_or_else(|| self.missing(h))?;
        let mut out: [Option<Mat>; 2] = [None, None];
        for &g in outputs {
            if !self.has_side(g) {
                return Err(self.missing(g));
            }
            out[g.index()] = Some(Mat::zeros(n2, x.cols()));
        }
        let len = self.strip.len();
        let mut buf = Vec::new();
        let mut c0 = 0;
        while c0 < x.cols() {
            let c = RHS_CHUNK.min(x.cols() - c0);
            buf.clear();
            buf.resize(len * c, 0.0);
            input.scatter(x, c0, c, &mut buf, adj);
            self.lu.solve_rows_in_place(&mut buf, c, mode)?;
            for &g in outputs {
                let blk = if adj { self.to_iface(g) } else { self.from_iface(g) }.expect("checked above");
                blk.gather(&buf, c0, c, out[g.index()].as_mut().expect("allocated"), adj);
            }
            c0 += c;
        }
        Ok(out)
    }

    /// `S_{gh}·x` (normal) or `S_{gh}ᵀ·x` (adjoint) for a single block.
    pub fn schur_block_apply(&self, g: Side, h: Side, x: &Mat, mode: SolveMode) -> Result<Mat> {
        let (input, output) = match mode {
            SolveMode::Normal => (h, g),
            SolveMode::Adjoint => (g, h),
        };
        let mut out = self.schur_sample(input, x, mode, &[output])?;
        Ok(out[output.index()].take().expect("requested output"))
    }
}

/// Factors the interior block of every strip independently (in parallel).
pub fn factor_interiors(matrix: &CsrMatrix, part: &SlabPartition) -> Result<Vec<SlabFactor>> {
    if matrix.nrows() != part.n() || matrix.ncols() != part.n() {
        return Err(SlabError::DimensionMismatch {
            context: "matrix vs partition",
            expected: part.n(),
            actual: matrix.nrows(),
        });
    }
    (0..part.num_strips())
        .into_par_iter()
        .map(|s| SlabFactor::assemble(matrix, part, s))
        .collect()
}
