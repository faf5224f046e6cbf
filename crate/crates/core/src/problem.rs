//! Five-point finite-difference assembly of `−Δu − κ²·b(x)·u = f` on a
//! rectangle with Dirichlet data, plus manufactured solutions and error metrics.
//!
//! Unknowns are the interior grid nodes. Node `(col, row)` (0-based) sits at
//! `((col + 1)·h, (row + 1)·h)` and has global index `col·n2 + row`, so the
//! `y` coordinate varies fastest.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SlabError};
use crate::linalg::{norm2, Mat};

/// Point-wise scalar field `(x, y) ↦ value`.
pub type ScalarField = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Source point of the manufactured solutions.
pub const SOURCE_POINT: (f64, f64) = (-0.1, 0.5);

/// Defines one linear system: grid geometry, wavenumber and point-wise data.
#[derive(Clone)]
pub struct ProblemSpec {
    pub n1: usize,
    pub n2: usize,
    pub h: f64,
    pub kappa: f64,
    /// Coefficient `b(x) ≥ 0` multiplying `κ²`.
    pub coefficient: ScalarField,
    /// Dirichlet data on boundary nodes.
    pub dirichlet: ScalarField,
    /// Body load at interior nodes.
    pub body: ScalarField,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("n1", &self.n1)
            .field("n2", &self.n2)
            .field("h", &self.h)
            .field("kappa", &self.kappa)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    /// `b ≡ 1`, `g ≡ 0`, `f ≡ 0`.
    pub fn new(n1: usize, n2: usize, h: f64, kappa: f64) -> Self {
        Self {
            n1,
            n2,
            h,
            kappa,
            coefficient: Arc::new(|_, _| 1.0),
            dirichlet: Arc::new(|_, _| 0.0),
            body: Arc::new(|_, _| 0.0),
        }
    }

    pub fn with_coefficient(mut self, b: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.coefficient = Arc::new(b);
        self
    }

    pub fn with_dirichlet(mut self, g: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.dirichlet = Arc::new(g);
        self
    }

    pub fn with_body(mut self, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.body = Arc::new(f);
        self
    }

    /// Laplace problem on a grid with spacing `1/(n2 + 1)` whose boundary data
    /// and exact solution is `log‖x − (−0.1, 0.5)‖`.
    pub fn poisson_manufactured(n1: usize, n2: usize) -> Self {
        Self::new(n1, n2, 1.0 / (n2 as f64 + 1.0), 0.0).with_dirichlet(log_potential)
    }

    /// Constant-coefficient Helmholtz problem whose exact solution is
    /// `J₀(κ‖x − (−0.1, 0.5)‖)`; grid spacing `1/(n2 + 1)`.
    pub fn helmholtz_manufactured(n1: usize, n2: usize, kappa: f64) -> Self {
        Self::new(n1, n2, 1.0 / (n2 as f64 + 1.0), kappa)
            .with_dirichlet(move |x, y| bessel_j0(kappa * distance_to_source(x, y)))
    }

    /// Helmholtz problem with the smooth coefficient
    /// `b(x, y) = 1 + ½·sin(2πx)·sin(πy) + ¼·cos(3xy)` (values in `[0.25, 1.75]`),
    /// unit body load and zero boundary data. No closed-form solution is available.
    pub fn helmholtz_varcoef(n1: usize, n2: usize, kappa: f64) -> Self {
        use std::f64::consts::PI;
        Self::new(n1, n2, 1.0 / (n2 as f64 + 1.0), kappa)
            .with_coefficient(|x, y| {
                1.0 + 0.5 * (2.0 * PI * x).sin() * (PI * y).sin() + 0.25 * (3.0 * x * y).cos()
            })
            .with_body(|_, _| 1.0)
    }

    pub fn n(&self) -> usize {
        self.n1 * self.n2
    }

    /// Checks the grid-size, spacing and wavenumber requirements.
    pub fn validate(&self) -> Result<()> {
        if self.n1 < 2 || self.n2 < 2 {
            return Err(SlabError::invalid(format!(
                "grid must have at least 2 unknowns per direction, got {}×{}",
                self.n1, self.n2
            )));
        }
        if self.n1 < self.n2 {
            return Err(SlabError::invalid(format!(
                "slabs run along the longer side: need n1 ≥ n2, got n1 = {}, n2 = {}",
                self.n1, self.n2
            )));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(SlabError::invalid(format!("grid spacing must be positive, got {}", self.h)));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(SlabError::invalid(format!("wavenumber must be ≥ 0, got {}", self.kappa)));
        }
        Ok(())
    }

    /// Physical coordinates of unknown `(col, row)`.
    pub fn node(&self, col: usize, row: usize) -> (f64, f64) {
        ((col + 1) as f64 * self.h, (row + 1) as f64 * self.h)
    }

    /// Evaluates `u` at every unknown, in global order.
    pub fn sample(&self, u: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n());
        for c in 0..self.n1 {
            for r in 0..self.n2 {
                let (x, y) = self.node(c, r);
                out.push(u(x, y));
            }
        }
        out
    }
}

/// Global index of unknown `(col, row)` on a grid with `n2` rows.
#[inline]
pub fn grid_index(n2: usize, col: usize, row: usize) -> usize {
    col * n2 + row
}

/// Wavenumber giving `ppw` grid points per wavelength at spacing `h`.
pub fn kappa_from_ppw(ppw: f64, h: f64) -> f64 {
    2.0 * std::f64::consts::PI / (ppw * h)
}

/// Square sparse matrix in compressed-row form with sorted column indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(i, j, _)) = t.iter().find(|(i, j, _)| *i >= nrows || *j >= ncols) {
            return Err(SlabError::invalid(format!(
                "triplet ({i}, {j}) outside {nrows}×{ncols}"
            )));
        }
        t.sort_by_key(|a| (a.0, a.1));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in t {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                values.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Ok(Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|p| vals[p]).unwrap_or(0.0)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, a)| a * x[j]).sum()
            })
            .collect()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            t.extend(c.iter().zip(v).map(|(&j, &a)| (j, i, a)));
        }
        CsrMatrix::from_triplets(self.ncols, self.nrows, t).expect("transpose indices are in range")
    }

    pub fn to_dense(&self) -> Mat {
        let mut d = Mat::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                d[(i, j)] = a;
            }
        }
        d
    }

    /// Every stored `(i, j)` has a stored `(j, i)`.
    pub fn is_structurally_symmetric(&self) -> bool {
        (0..self.nrows).all(|i| {
            let (c, _) = self.row(i);
            c.iter()
                .all(|&j| j < self.nrows && self.row(j).0.binary_search(&i).is_ok())
        })
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.nrows).all(|i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).all(|(&j, &a)| (a - self.get(j, i)).abs() <= tol * a.abs().max(1.0))
        })
    }

    /// Writes MatrixMarket coordinate format with 1-based indices.
    pub fn write_matrix_market(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                writeln!(w, "{} {} {:e}", i + 1, j + 1, a)?;
            }
        }
        Ok(())
    }

    /// Reads MatrixMarket `coordinate real general` data.
    pub fn read_matrix_market(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| SlabError::invalid("empty MatrixMarket input"))??;
        let h = header.to_ascii_lowercase();
        if !(h.starts_with("%%matrixmarket matrix coordinate real general")) {
            return Err(SlabError::invalid(format!("unsupported MatrixMarket header: {header}")));
        }
        let mut size: Option<(usize, usize, usize)> = None;
        let mut t = Vec::new();
        let parse_err = |l: &str| SlabError::invalid(format!("malformed MatrixMarket line: {l}"));
        for line in lines {
            let line = line?;
            let s = line.trim();
            if s.is_empty() || s.starts_with('%') {
                continue;
            }
            let f: Vec<&str> = s.split_whitespace().collect();
            if size.is_none() {
                let p = |k: usize| f.get(k).and_then(|x| x.parse().ok()).ok_or_else(|| parse_err(s));
                size = Some((p(0)?, p(1)?, p(2)?));
                continue;
            }
            if f.len() != 3 {
                return Err(parse_err(s));
            }
            let i: usize = f[0].parse().map_err(|_| parse_err(s))?;
            let j: usize = f[1].parse().map_err(|_| parse_err(s))?;
            let v: f64 = f[2].parse().map_err(|_| parse_err(s))?;
            if i == 0 || j == 0 {
                return Err(parse_err(s));
            }
            t.push((i - 1, j - 1, v));
        }
        let (m, n, nnz) = size.ok_or_else(|| SlabError::invalid("missing MatrixMarket size line"))?;
        if t.len() != nnz {
            return Err(SlabError::invalid(format!(
                "MatrixMarket declares {nnz} entries but has {}",
                t.len()
            )));
        }
        CsrMatrix::from_triplets(m, n, t)
    }
}

/// Assembled linear system `A·u = f` over the interior grid nodes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SparseSystem {
    pub n1: usize,
    pub n2: usize,
    pub h: f64,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Physical coordinates of each unknown, in global order.
    pub node_coords: Vec<(f64, f64)>,
}

impl SparseSystem {
    pub fn n(&self) -> usize {
        self.n1 * self.n2
    }
}

/// Assembles the five-point discretization of `−Δu − κ²·b·u = f`.
///
/// Interior row: diagonal `4/h² − κ²·b`, `−1/h²` to each unknown neighbour;
/// neighbours on the boundary add `g/h²` to the right-hand side instead.
pub fn assemble_fd5(spec: &ProblemSpec) -> Result<SparseSystem> {
    spec.validate()?;
    let (n1, n2, h) = (spec.n1, spec.n2, spec.h);
    let inv_h2 = 1.0 / (h * h);
    let k2 = spec.kappa * spec.kappa;
    let n = n1 * n2;
    let mut t = Vec::with_capacity(5 * n);
    let mut rhs = vec![0.0; n];
    let mut coords = Vec::with_capacity(n);
    for c in 0..n1 {
        for r in 0..n2 {
            let idx = grid_index(n2, c, r);
            let (x, y) = spec.node(c, r);
            coords.push((x, y));
            let b = (spec.coefficient)(x, y);
            if !(b >= 0.0 && b.is_finite()) {
                return Err(SlabError::invalid(format!(
                    "coefficient must be finite and ≥ 0, got {b} at ({x}, {y})"
                )));
            }
            t.push((idx, idx, 4.0 * inv_h2 - k2 * b));
            let mut f = (spec.body)(x, y);
            let neighbours = [
                (c as isize - 1, r as isize),
                (c as isize + 1, r as isize),
                (c as isize, r as isize - 1),
                (c as isize, r as isize + 1),
            ];
            for (nc, nr) in neighbours {
                if nc >= 0 && nr >= 0 && (nc as usize) < n1 && (nr as usize) < n2 {
                    t.push((idx, grid_index(n2, nc as usize, nr as usize), -inv_h2));
                } else {
                    let gx = (nc + 1) as f64 * h;
                    let gy = (nr + 1) as f64 * h;
                    f += (spec.dirichlet)(gx, gy) * inv_h2;
                }
            }
            rhs[idx] = f;
        }
    }
    Ok(SparseSystem {
        n1,
        n2,
        h,
        matrix: CsrMatrix::from_triplets(n, n, t)?,
        rhs,
        node_coords: coords,
    })
}

fn distance_to_source(x: f64, y: f64) -> f64 {
    (x - SOURCE_POINT.0).hypot(y - SOURCE_POINT.1)
}

fn log_potential(x: f64, y: f64) -> f64 {
    distance_to_source(x, y).ln()
}

/// `log‖x − (−0.1, 0.5)‖`; the source point itself is rejected.
pub fn true_solution_poisson(x: f64, y: f64) -> Result<f64> {
    if (x, y) == SOURCE_POINT {
        return Err(SlabError::invalid("log potential is singular at its source point"));
    }
    Ok(log_potential(x, y))
}

/// `J₀(κ‖x − (−0.1, 0.5)‖)`.
pub fn true_solution_helmholtz(x: f64, y: f64, kappa: f64) -> Result<f64> {
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(SlabError::invalid(format!("wavenumber must be ≥ 0, got {kappa}")));
    }
    Ok(bessel_j0(kappa * distance_to_source(x, y)))
}

/// Double-double value `hi + lo` (about 32 significant digits).
#[derive(Clone, Copy)]
struct Dd(f64, f64);

impl Dd {
    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd(s, (a - (s - bb)) + (b - bb))
    }

    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.0, o.0);
        let t = Dd::two_sum(self.1, o.1);
        let s = Dd::two_sum(s.0, s.1 + t.0);
        Dd::two_sum(s.0, s.1 + t.1)
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.0 * o.0;
        let e = self.0.mul_add(o.0, -p);
        Dd::two_sum(p, e + self.0 * o.1 + self.1 * o.0)
    }

    fn div_f64(self, d: f64) -> Dd {
        let q1 = self.0 / d;
        let p = q1 * d;
        let e = q1.mul_add(d, -p);
        let r = (self.0 - p - e + self.1) / d;
        Dd::two_sum(q1, r)
    }
}

/// Switch point between the power series and the asymptotic expansion.
const J0_SERIES_LIMIT: f64 = 20.0;

/// Bessel function of the first kind of order zero.
///
/// Power series summed in double-double arithmetic for `|t| ≤ 20` (the
/// alternating terms peak near 10⁷ at the top of the range) and Hankel's
/// asymptotic expansion beyond, where truncation error is below `e^{-2|t|}`.
pub fn bessel_j0(t: f64) -> f64 {
    let x = t.abs();
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= J0_SERIES_LIMIT {
        // term_k = (−x²/4)^k / (k!)²
        let q = Dd(x * x, x.mul_add(x, -(x * x))).div_f64(-4.0);
        let mut term = Dd(1.0, 0.0);
        let mut sum = term;
        let mut k = 1.0f64;
        loop {
            term = term.mul(q).div_f64(k * k);
            sum = sum.add(term);
            if term.0.abs() < 1e-34 * sum.0.abs().max(1e-300) || k > 200.0 {
                break;
            }
            k += 1.0;
        }
        return sum.0 + sum.1;
    }
    // P ~ Σ (−1)^k a_{2k} x^{−2k}, Q ~ Σ (−1)^k a_{2k+1} x^{−2k−1},
    // a_k = Π_{j ≤ k} (−(2j−1)²) / (k!·8^k)
    let mut p = 0.0;
    let mut q = 0.0;
    let mut a = 1.0f64; // a_k / x^k
    let mut prev = f64::INFINITY;
    for k in 0..200usize {
        if a.abs() >= prev {
            break;
        }
        match k % 4 {
            0 => p += a,
            1 => q += a,
            2 => p -= a,
            _ => q -= a,
        }
        prev = a.abs();
        if prev < 1e-18 {
            break;
        }
        let j = (2 * k + 1) as f64;
        a *= -(j * j) / (8.0 * (k + 1) as f64 * x);
    }
    let (s, c) = x.sin_cos();
    let cos_chi = (c + s) * std::f64::consts::FRAC_1_SQRT_2;
    let sin_chi = (s - c) * std::f64::consts::FRAC_1_SQRT_2;
    (2.0 / (std::f64::consts::PI * x)).sqrt() * (p * cos_chi - q * sin_chi)
}

/// Relative errors of a computed solution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// `‖A·u − f‖₂ / ‖f‖₂`, or the absolute residual norm when `‖f‖₂ = 0`.
    pub relerr_res: f64,
    /// `‖u − u_true‖₂ / ‖u_true‖₂`, or the absolute error norm when `‖u_true‖₂ = 0`.
    pub relerr_true: f64,
    pub n_rhs: usize,
    /// Set when `relerr_res` is an absolute norm.
    pub res_is_absolute: bool,
    /// Set when `relerr_true` is an absolute norm.
    pub true_is_absolute: bool,
}

/// Residual and true-solution errors for one right-hand side.
pub fn error_report(system: &SparseSystem, u_calc: &[f64], u_true: &[f64]) -> Result<ErrorReport> {
    let n = system.n();
    for (len, what) in [(u_calc.len(), "error_report (u_calc)"), (u_true.len(), "error_report (u_true)")] {
        if len != n {
            return Err(SlabError::DimensionMismatch {
                context: what,
                expected: n,
                actual: len,
            });
        }
    }
    let au = system.matrix.matvec(u_calc);
    let r: Vec<f64> = au.iter().zip(&system.rhs).map(|(a, f)| a - f).collect();
    let e: Vec<f64> = u_calc.iter().zip(u_true).map(|(a, b)| a - b).collect();
    let (fnorm, tnorm) = (norm2(&system.rhs), norm2(u_true));
    Ok(ErrorReport {
        relerr_res: if fnorm > 0.0 { norm2(&r) / fnorm } else { norm2(&r) },
        relerr_true: if tnorm > 0.0 { norm2(&e) / tnorm } else { norm2(&e) },
        n_rhs: 1,
        res_is_absolute: fnorm == 0.0,
        true_is_absolute: tnorm == 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dense_lu, SolveMode};

    #[test]
    fn interior_stencil_with_unit_spacing() {
        let sys = assemble_fd5(&ProblemSpec::new(3, 3, 1.0, 0.0)).unwrap();
        let centre = grid_index(3, 1, 1);
        let (cols, vals) = sys.matrix.row(centre);
        assert_eq!(cols, &[1, 3, 4, 5, 7]);
        assert_eq!(vals, &[-1.0, -1.0, 4.0, -1.0, -1.0]);
    }

    #[test]
    fn rows_have_at_most_five_entries_and_symmetric_pattern() {
        let spec = ProblemSpec::helmholtz_varcoef(9, 6, 12.0);
        let sys = assemble_fd5(&spec).unwrap();
        assert!((0..sys.n()).all(|i| sys.matrix.row(i).0.len() <= 5));
        assert!(sys.matrix.is_structurally_symmetric());
        assert!(sys.matrix.is_symmetric(0.0));
    }

    #[test]
    fn helmholtz_shifts_diagonal() {
        let spec = ProblemSpec::new(4, 4, 0.5, 2.0).with_coefficient(|x, _| x);
        let sys = assemble_fd5(&spec).unwrap();
        let (x, _) = spec.node(2, 1);
        let i = grid_index(4, 2, 1);
        assert!((sys.matrix.get(i, i) - (16.0 - 4.0 * x)).abs() < 1e-15);
    }

    #[test]
    fn dirichlet_data_is_folded_into_rhs() {
        let spec = ProblemSpec::new(2, 2, 0.5, 0.0).with_dirichlet(|x, y| x + 10.0 * y);
        let sys = assemble_fd5(&spec).unwrap();
        // corner unknown (0.5, 0.5): boundary neighbours (0, 0.5) and (0.5, 0)
        let g = (0.0 + 5.0) + (0.5 + 0.0);
        assert!((sys.rhs[0] - 4.0 * g).abs() < 1e-14);
        assert_eq!(sys.node_coords[grid_index(2, 1, 0)], (1.0, 0.5));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(assemble_fd5(&ProblemSpec::new(1, 1, 0.1, 0.0)).is_err());
        assert!(assemble_fd5(&ProblemSpec::new(4, 4, 0.0, 0.0)).is_err());
        assert!(assemble_fd5(&ProblemSpec::new(4, 4, 0.1, -1.0)).is_err());
        assert!(assemble_fd5(&ProblemSpec::new(3, 5, 0.1, 0.0)).is_err());
        let neg = ProblemSpec::new(4, 4, 0.1, 1.0).with_coefficient(|_, _| -1.0);
        assert!(assemble_fd5(&neg).is_err());
    }

    #[test]
    fn laplace_matrix_admits_cholesky() {
        let sys = assemble_fd5(&ProblemSpec::poisson_manufactured(12, 12)).unwrap();
        let a = sys.matrix.to_dense();
        let n = a.rows();
        let mut l = Mat::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            assert!(d > 0.0, "not positive definite at {j}");
            l[(j, j)] = d.sqrt();
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }

    #[test]
    fn constant_boundary_shift_shifts_solution() {
        let base = ProblemSpec::new(6, 5, 0.2, 0.0).with_dirichlet(|x, y| (x * y).sin());
        let shifted = base.clone().with_dirichlet(|x, y| (x * y).sin() + 2.5);
        let solve = |s: &ProblemSpec| {
            let sys = assemble_fd5(s).unwrap();
            dense_lu(&sys.matrix.to_dense())
                .unwrap()
                .solve_vec(&sys.rhs, SolveMode::Normal)
                .unwrap()
        };
        let (u0, u1) = (solve(&base), solve(&shifted));
        for (a, b) in u0.iter().zip(&u1) {
            assert!((b - a - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn poisson_solution_values() {
        assert_eq!(true_solution_poisson(0.9, 0.5).unwrap(), 0.0);
        assert!(true_solution_poisson(-0.1, 1.5).unwrap().abs() < 1e-16);
        assert!((true_solution_poisson(0.5, 0.5).unwrap() - 0.6f64.ln()).abs() < 1e-15);
        assert!(true_solution_poisson(-0.1, 0.5).is_err());
    }

    #[test]
    fn helmholtz_solution_values() {
        assert_eq!(true_solution_helmholtz(0.3, 0.2, 0.0).unwrap(), 1.0);
        assert!((true_solution_helmholtz(0.9, 0.5, 1.0).unwrap() - 0.7651976865579666).abs() < 1e-15);
        assert!(true_solution_helmholtz(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn bessel_reference_points() {
        assert_eq!(bessel_j0(0.0), 1.0);
        assert!((bessel_j0(5.0) - -0.177_596_771_314_338_3).abs() < 1e-15);
        assert!(bessel_j0(2.404825557695773).abs() < 1e-15);
        for t in [0.3, 7.7, 19.9, 20.1, 300.0] {
            assert_eq!(bessel_j0(t), bessel_j0(-t));
        }
    }

    #[test]
    fn error_report_definitions() {
        let sys = assemble_fd5(&ProblemSpec::poisson_manufactured(8, 8)).unwrap();
        let u = dense_lu(&sys.matrix.to_dense())
            .unwrap()
            .solve_vec(&sys.rhs, SolveMode::Normal)
            .unwrap();
        let rep = error_report(&sys, &u, &u).unwrap();
        assert_eq!(rep.relerr_true, 0.0);
        assert!(rep.relerr_res < 1e-14);
        let mut p = u.clone();
        p[0] += 1e-3;
        let rep = error_report(&sys, &p, &u).unwrap();
        assert!((rep.relerr_true - 1e-3 / norm2(&u)).abs() < 1e-15);
        assert!(error_report(&sys, &u[1..], &u).is_err());
    }

    #[test]
    fn zero_norms_are_flagged() {
        let sys = assemble_fd5(&ProblemSpec::new(3, 3, 0.25, 0.0)).unwrap();
        let z = vec![0.0; 9];
        let rep = error_report(&sys, &z, &z).unwrap();
        assert!(rep.res_is_absolute && rep.true_is_absolute);
        assert_eq!(rep.relerr_res, 0.0);
    }

    #[test]
    fn matrix_market_round_trip() {
        let sys = assemble_fd5(&ProblemSpec::helmholtz_varcoef(5, 4, 3.0)).unwrap();
        let mut buf = Vec::new();
        sys.matrix.write_matrix_market(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("%%MatrixMarket matrix coordinate real general\n20 20 "));
        let back = CsrMatrix::read_matrix_market(&buf[..]).unwrap();
        assert_eq!(back, sys.matrix);
        assert!(CsrMatrix::read_matrix_market(&b"garbage\n"[..]).is_err());
    }

    #[test]
    fn ppw_relation() {
        let h = 1.0 / 513.0;
        let k = kappa_from_ppw(250.0, h);
        assert!((2.0 * std::f64::consts::PI / (k * h) - 250.0).abs() < 1e-12);
    }
}
