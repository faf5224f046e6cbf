//! Black-box randomized recovery of HBS matrices from products with Gaussian
//! test matrices.
//!
//! Each tree level is processed from the leaves up. For a node with sample
//! rows `Y_τ = M_τ·Ω`, a basis of the off-diagonal range is read from
//! `Y_τ·P`, where `P` spans the nullspace of the node's rows of `Ω` (so the
//! diagonal block drops out). The diagonal remainder is recovered with the
//! pseudo-inverse of those rows, the samples are projected onto the bases and
//! the parent level sees the compressed samples.

use std::cell::Cell;

use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::matrix::{HbsMatrix, HbsNode};
use super::tree::ClusterTree;
use crate::error::{Result, SlabError};
use crate::linalg::{pivoted_qr, Mat, Qr, SolveMode};

/// Black-box products with a square operator `M` and its transpose.
pub trait Sampler {
    fn dim(&self) -> usize;
    /// `M·x` (normal) or `Mᵀ·x` (adjoint).
    fn apply(&self, x: &Mat, mode: SolveMode) -> Result<Mat>;
    /// `M = Mᵀ`; lets the compressor skip adjoint products.
    fn is_symmetric(&self) -> bool {
        false
    }
}

/// Black-box products with a `G × G` block operator whose blocks are all
/// `n × n`. One product with an input on group `h` yields the outputs of
/// every block in block-column `h`.
pub trait GroupSampler {
    fn groups(&self) -> usize;
    fn dim(&self) -> usize;
    /// Outputs `[M_{0h}·x, …, M_{G−1,h}·x]` (normal) or
    /// `[M_{h0}ᵀ·x, …, M_{h,G−1}ᵀ·x]` (adjoint).
    fn sample(&self, h: usize, x: &Mat, mode: SolveMode) -> Result<Vec<Mat>>;
    /// `M_{gh}ᵀ = M_{hg}` for all blocks.
    fn is_symmetric(&self) -> bool {
        false
    }
}

/// Dense matrix viewed as a sampler (useful for tests and small problems).
pub struct DenseSampler<'a>(pub &'a Mat);

impl Sampler for DenseSampler<'_> {
    fn dim(&self) -> usize {
        self.0.rows()
    }

    fn apply(&self, x: &Mat, mode: SolveMode) -> Result<Mat> {
        Ok(match mode {
            SolveMode::Normal => self.0.matmul(x),
            SolveMode::Adjoint => self.0.t_matmul(x),
        })
    }
}

struct SingleGroup<'a, S: ?Sized>(&'a S);

impl<S: Sampler + ?Sized> GroupSampler for SingleGroup<'_, S> {
    fn groups(&self) -> usize {
        1
    }

    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn sample(&self, _h: usize, x: &Mat, mode: SolveMode) -> Result<Vec<Mat>> {
        Ok(vec![self.0.apply(x, mode)?])
    }

    fn is_symmetric(&self) -> bool {
        self.0.is_symmetric()
    }
}

/// Tunables of the randomized compressor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HbsConfig {
    /// Upper bound on leaf size; leaves are refined further to at most
    /// `max(2r, 4)` so that every node keeps a nontrivial sample nullspace.
    pub leaf_size: usize,
    /// Extra sample columns beyond `3r`.
    pub oversampling: usize,
    /// Relative threshold (against the estimated `‖M‖_F`) for truncating bases.
    pub rank_tol: f64,
    /// Accepted relative residual of the a-posteriori probe.
    pub probe_tol: f64,
    /// Fresh vectors per mode in each probe.
    pub probe_vectors: usize,
    pub seed: u64,
}

impl Default for HbsConfig {
    fn default() -> Self {
        Self {
            leaf_size: 64,
            oversampling: 10,
            rank_tol: 1e-12,
            probe_tol: 1e-10,
            probe_vectors: 4,
            seed: 0,
        }
    }
}

impl HbsConfig {
    /// Sample columns per mode needed for working rank `r`.
    pub fn samples_for_rank(&self, r: usize) -> usize {
        3 * r + self.oversampling
    }
}

/// Bookkeeping of one (possibly multi-round) compression.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CompressionStats {
    /// Operator products requested in normal mode, per input group.
    pub normal_products: usize,
    /// Operator products requested in adjoint mode, per input group.
    pub adjoint_products: usize,
    pub rounds: usize,
    /// Final working rank bound.
    pub working_rank: usize,
    /// Widest generator in the accepted result.
    pub max_rank: usize,
    /// Largest relative probe residual of the accepted result.
    pub residual: f64,
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Mat {
    let data: Vec<f64> = (0..n * c).map(|_| StandardNormal.sample(rng)).collect();
    Mat::from_col_major(n, c, data)
}

/// Rows `0..k` and `k..` of `Qᵀ·Xᵀ` for the QR factors of `Ωᵀ`: used for both the
/// nullspace projection `X·P` and the pseudo-inverse product `X·Ω⁺`.
struct RowSketch {
    qr: Qr,
    r: Mat,
    m: usize,
}

impl RowSketch {
    fn new(omega: &Mat) -> Self {
        let qr = Qr::new(omega.transpose());
        let r = qr.r();
        Self {
            qr,
            r,
            m: omega.rows(),
        }
    }

    /// `(X·P, X·Ω⁺)` with `P` an orthonormal nullspace basis of `Ω`.
    fn split(&self, x: &Mat) -> (Mat, Mat) {
        let s = self.qr.rows();
        let mut w = x.transpose();
        self.qr.apply_qt(&mut w);
        let null = w.rows_range(self.m..s).transpose();
        let mut head = w.rows_range(0..self.m);
        crate::linalg::solve_upper(&self.r, &mut head);
        (null, head.transpose())
    }
}

/// Recovers an HBS matrix from samples `Y = M·Ω` and `Z = Mᵀ·Ψ`.
///
/// Every non-root node needs more sample columns than its size; generators
/// are truncated at `r` columns and at `rank_tol` relative to `‖M‖_F`
/// (estimated from the samples).
#[allow(clippy::too_many_arguments)]
pub fn compress_from_samples(
    tree: &ClusterTree,
    r: usize,
    omega: &Mat,
    y: &Mat,
    psi: &Mat,
    z: &Mat,
    rank_tol: f64,
    seed: u64,
) -> Result<HbsMatrix> {
    let n = tree.n();
    for (m, what) in [(omega, "Ω"), (y, "Y"), (psi, "Ψ"), (z, "Z")] {
        if m.rows() != n {
            return Err(SlabError::invalid(format!(
                "sample matrix {what} has {} rows, expected {n}",
                m.rows()
            )));
        }
    }
    if omega.cols() != y.cols() || psi.cols() != z.cols() {
        return Err(SlabError::invalid("sample and test matrices differ in column count"));
    }
    let scale_y = y.norm_fro() / (y.cols().max(1) as f64).sqrt();
    let scale_z = z.norm_fro() / (z.cols().max(1) as f64).sqrt();
    let tol_u = rank_tol * scale_y.max(scale_z);
    let tol_v = tol_u;

    let tn = tree.nodes();
    let nn = tn.len();
    // per-node compressed samples handed to the parent: (Ω', Y', Ψ', Z')
    let mut up: Vec<Option<[Mat; 4]>> = vec![None; nn];
    let mut nodes: Vec<Option<HbsNode>> = vec![None; nn];
    for i in (0..nn).rev() {
        let [om, yy, ps, zz] = match tn[i].children {
            None => {
                let rg = tn[i].range();
                [omega.rows_range(rg.clone()), y.rows_range(rg.clone()), psi.rows_range(rg.clone()), z.rows_range(rg)]
            }
            Some([a, b]) => {
                let [oa, ya, pa, za] = up[a].take().expect("child processed");
                let [ob, yb, pb, zb] = up[b].take().expect("child processed");
                [oa.vstack(&ob), ya.vstack(&yb), pa.vstack(&pb), za.vstack(&zb)]
            }
        };
        let (rows, cols) = (yy.rows(), om.rows());
        if tn[i].parent.is_none() {
            if om.cols() < cols {
                return Err(SlabError::invalid(format!(
                    "{} samples cannot resolve a {rows}×{cols} root block",
                    om.cols()
                )));
            }
            let (_, d) = RowSketch::new(&om).split(&yy);
            nodes[i] = Some(HbsNode {
                u: Mat::zeros(rows, 0),
                v: Mat::zeros(cols, 0),
                d,
            });
            continue;
        }
        if om.cols() <= cols || ps.cols() <= rows {
            return Err(SlabError::invalid(format!(
                "node {i} of size {rows}×{cols} needs more than {} samples",
                om.cols().min(ps.cols())
            )));
        }
        let (y_null, y_pinv) = RowSketch::new(&om).split(&yy);
        let (z_null, z_pinv) = RowSketch::new(&ps).split(&zz);
        let u = pivoted_qr(&y_null, r, tol_u).q;
        let v = pivoted_qr(&z_null, r, tol_v).q;
        // D̂ = (I − UUᵀ)·YΩ⁺ + UUᵀ·[(I − VVᵀ)·ZΨ⁺]ᵀ
        let a = y_pinv;
        let mut bt = z_pinv.clone();
        bt.axpy(-1.0, &v.matmul(&v.t_matmul(&z_pinv)));
        let bt = bt.transpose();
        let mut d = a.clone();
        d.axpy(-1.0, &u.matmul(&u.t_matmul(&a)));
        d.axpy(1.0, &u.matmul(&u.t_matmul(&bt)));
        let mut yr = yy;
        yr.axpy(-1.0, &d.matmul(&om));
        let mut zr = zz;
        zr.axpy(-1.0, &d.t_matmul(&ps));
        up[i] = Some([v.t_matmul(&om), u.t_matmul(&yr), u.t_matmul(&ps), v.t_matmul(&zr)]);
        nodes[i] = Some(HbsNode { u, v, d });
    }
    let nodes = nodes.into_iter().map(|g| g.expect("all nodes processed")).collect();
    HbsMatrix::from_parts(tree.clone(), nodes, r, seed)
}

/// Result of compressing all blocks of a [`GroupSampler`].
#[derive(Clone, Debug)]
pub struct GroupCompression {
    groups: usize,
    /// Block `(g, h)` at index `g·G + h`.
    pub blocks: Vec<HbsMatrix>,
    pub stats: CompressionStats,
}

impl GroupCompression {
    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn block(&self, g: usize, h: usize) -> &HbsMatrix {
        &self.blocks[g * self.groups + h]
    }
}

/// Counts columns handed to the sampler, per mode and input group.
struct Counted<'a, S: ?Sized> {
    inner: &'a S,
    normal: Vec<Cell<usize>>,
    adjoint: Vec<Cell<usize>>,
}

impl<S: GroupSampler + ?Sized> Counted<'_, S> {
    fn sample(&self, h: usize, x: &Mat, mode: SolveMode) -> Result<Vec<Mat>> {
        let c = match mode {
            SolveMode::Normal => &self.normal[h],
            SolveMode::Adjoint => &self.adjoint[h],
        };
        c.set(c.get() + x.cols());
        let out = self.inner.sample(h, x, mode)?;
        if out.len() != self.inner.groups() || out.iter().any(|o| o.shape() != x.shape()) {
            return Err(SlabError::invalid("sampler returned blocks of the wrong shape"));
        }
        Ok(out)
    }
}

/// Per-group random test matrices and the products computed so far.
struct Samples {
    /// Test matrix per input group.
    test: Vec<Mat>,
    /// `out[h][g]`: product of block-column `h` with `test[h]`, output group `g`.
    out: Vec<Vec<Mat>>,
}

impl Samples {
    fn empty(g: usize, n: usize) -> Self {
        Self {
            test: vec![Mat::zeros(n, 0); g],
            out: vec![vec![Mat::zeros(n, 0); g]; g],
        }
    }

    fn cols(&self) -> usize {
        self.test[0].cols()
    }

    fn append(&mut self, other: Samples) {
        for (t, o) in self.test.iter_mut().zip(other.test) {
            *t = t.hstack(&o);
        }
        for (row, orow) in self.out.iter_mut().zip(other.out) {
            for (a, b) in row.iter_mut().zip(orow) {
                *a = a.hstack(&b);
            }
        }
    }
}

fn draw<S: GroupSampler + ?Sized>(
    s: &Counted<'_, S>,
    rngs: &mut [ChaCha8Rng],
    n: usize,
    c: usize,
    mode: SolveMode,
) -> Result<Samples> {
    let mut out = Samples::empty(rngs.len(), n);
    if c == 0 {
        return Ok(out);
    }
    for (h, rng) in rngs.iter_mut().enumerate() {
        let t = gaussian(rng, n, c);
        out.out[h] = s.sample(h, &t, mode)?;
        out.test[h] = t;
    }
    Ok(out)
}

fn rel_residual(exact: &Mat, approx: &Mat, fallback_scale: f64) -> f64 {
    let diff = exact.sub(approx).norm_fro();
    let e = exact.norm_fro();
    if e > 0.0 {
        diff / e
    } else if diff == 0.0 {
        0.0
    } else {
        diff / fallback_scale.max(f64::MIN_POSITIVE)
    }
}

/// Compresses every block of a group sampler from shared samples, doubling
/// the working rank from `r_start` until a fresh-vector probe of every block
/// passes or `r_max` is reached.
pub fn hbs_compress_groups<S: GroupSampler + ?Sized>(
    sampler: &S,
    tree: &ClusterTree,
    r_start: usize,
    r_max: usize,
    cfg: &HbsConfig,
) -> Result<GroupCompression> {
    let g = sampler.groups();
    let n = sampler.dim();
    if g == 0 {
        return Err(SlabError::invalid("sampler has no groups"));
    }
    if tree.n() != n {
        return Err(SlabError::DimensionMismatch {
            context: "HBS compression tree",
            expected: n,
            actual: tree.n(),
        });
    }
    if r_max == 0 || r_start > r_max {
        return Err(SlabError::invalid(format!(
            "rank range must satisfy 1 ≤ r_start ≤ r_max, got {r_start}..{r_max}"
        )));
    }
    let sym = sampler.is_symmetric();
    let counted = Counted {
        inner: sampler,
        normal: (0..g).map(|_| Cell::new(0)).collect(),
        adjoint: (0..g).map(|_| Cell::new(0)).collect(),
    };
    let stream = |h: usize, mode: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
        r.set_stream(2 * h as u64 + mode);
        r
    };
    let mut rng_n: Vec<ChaCha8Rng> = (0..g).map(|h| stream(h, 0)).collect();
    let mut rng_a: Vec<ChaCha8Rng> = (0..g).map(|h| stream(h, 1)).collect();
    let mut normal = Samples::empty(g, n);
    let mut adjoint = Samples::empty(g, n);
    let mut r = r_start.max(1);
    let mut rounds = 0;
    loop {
        rounds += 1;
        let need = cfg.samples_for_rank(r);
        let extra = need.saturating_sub(normal.cols());
        normal.append(draw(&counted, &mut rng_n, n, extra, SolveMode::Normal)?);
        if !sym {
            let extra = need.saturating_sub(adjoint.cols());
            adjoint.append(draw(&counted, &mut rng_a, n, extra, SolveMode::Adjoint)?);
        }
        let cap = tree.leaf_size().min((2 * r).max(4));
        let t = tree.refined(cap);
        let adj = if sym { &normal } else { &adjoint };
        let mut blocks = Vec::with_capacity(g * g);
        for bg in 0..g {
            for bh in 0..g {
                // Y_{gh} = M_{gh}·Ω_h, Z_{gh} = M_{gh}ᵀ·Ψ_g
                let m = compress_from_samples(
                    &t,
                    r,
                    &normal.test[bh],
                    &normal.out[bh][bg],
                    &adj.test[bg],
                    &adj.out[bg][bh],
                    cfg.rank_tol,
                    cfg.seed,
                )?;
                blocks.push(m);
            }
        }
        // a-posteriori probe with fresh vectors
        let pn = draw(&counted, &mut rng_n, n, cfg.probe_vectors, SolveMode::Normal)?;
        let pa = if sym {
            None
        } else {
            Some(draw(&counted, &mut rng_a, n, cfg.probe_vectors, SolveMode::Adjoint)?)
        };
        let pa_ref = pa.as_ref().unwrap_or(&pn);
        let scale = pn.out.iter().flatten().map(|m| m.norm_fro()).fold(0.0, f64::max);
        let mut worst = (0.0f64, 0, 0);
        for bg in 0..g {
            for bh in 0..g {
                let blk = &blocks[bg * g + bh];
                let yn = blk.apply(&pn.test[bh], SolveMode::Normal)?;
                let za = blk.apply(&pa_ref.test[bg], SolveMode::Adjoint)?;
                let res = rel_residual(&pn.out[bh][bg], &yn, scale)
                    .max(rel_residual(&pa_ref.out[bg][bh], &za, scale));
                if res > worst.0 || res.is_nan() {
                    worst = (res, bg, bh);
                }
            }
        }
        debug!(
            "hbs round {rounds}: rank bound {r}, samples {}, probe residual {:.3e}",
            normal.cols(),
            worst.0
        );
        if worst.0 <= cfg.probe_tol {
            let max_rank = blocks.iter().map(HbsMatrix::max_rank).max().unwrap_or(0);
            let stats = CompressionStats {
                normal_products: counted.normal.iter().map(Cell::get).max().unwrap_or(0),
                adjoint_products: counted.adjoint.iter().map(Cell::get).max().unwrap_or(0),
                rounds,
                working_rank: r,
                max_rank,
                residual: worst.0,
            };
            return Ok(GroupCompression {
                groups: g,
                blocks,
                stats,
            });
        }
        if r >= r_max {
            return Err(SlabError::CompressionFailed {
                residual: worst.0,
                tol: cfg.probe_tol,
                rank: r,
                block: (g > 1).then(|| format!("block ({}, {})", worst.1, worst.2)),
            });
        }
        normal.append(pn);
        if let Some(pa) = pa {
            adjoint.append(pa);
        }
        r = (2 * r).min(r_max);
    }
}

/// Compresses a single operator at fixed rank bound `r` (one sampling round).
pub fn hbs_compress<S: Sampler + ?Sized>(
    sampler: &S,
    tree: &ClusterTree,
    r: usize,
    cfg: &HbsConfig,
) -> Result<(HbsMatrix, CompressionStats)> {
    hbs_compress_adaptive(sampler, tree, r, r, cfg)
}

/// Compresses a single operator, doubling the rank bound from `r_start` up to
/// `r_max` until the probe passes.
pub fn hbs_compress_adaptive<S: Sampler + ?Sized>(
    sampler: &S,
    tree: &ClusterTree,
    r_start: usize,
    r_max: usize,
    cfg: &HbsConfig,
) -> Result<(HbsMatrix, CompressionStats)> {
    let mut out = hbs_compress_groups(&SingleGroup(sampler), tree, r_start, r_max, cfg)?;
    Ok((out.blocks.remove(0), out.stats))
}
