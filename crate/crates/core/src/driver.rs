//! End-to-end orchestration: choose the slab width, run both elimination
//! stages, solve, and report timings, storage and accuracy.

use std::io::Write;
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SlabError};
use crate::hbs::HbsConfig;
use crate::linalg::Mat;
use crate::problem::{
    assemble_fd5, error_report, kappa_from_ppw, true_solution_helmholtz, true_solution_poisson, CsrMatrix, ErrorReport,
    ProblemSpec, SparseSystem,
};
use crate::stage_one::{partition, Compression, HbsSettings, StageOne};
use crate::stage_two::{sweep_build, SweepFactor};

/// Default coefficient of the slab-width heuristic `b ≈ c·n₂^{2/3}`.
pub const DEFAULT_B_COEFFICIENT: f64 = 0.6;

/// How the reduced blocks are formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompressionMode {
    /// HBS for large interfaces with wide slabs, dense otherwise.
    #[default]
    Auto,
    Dense,
    Hbs,
}

/// Solver parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Explicit slab width; overrides the heuristic.
    pub b: Option<usize>,
    /// Coefficient of the slab-width heuristic.
    pub c: f64,
    pub compression: CompressionMode,
    /// HBS parameters (its seed is replaced by `seed`).
    pub hbs: HbsConfig,
    /// Optional cap on the HBS rank (defaults to twice the slab width).
    pub hbs_max_rank: Option<usize>,
    pub seed: u64,
    /// Worker threads; `None` uses the ambient pool.
    pub threads: Option<usize>,
    /// Test hook: sign-flipped Schur correction.
    #[doc(hidden)]
    #[serde(skip)]
    pub sign_fault: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            b: None,
            c: DEFAULT_B_COEFFICIENT,
            compression: CompressionMode::Auto,
            hbs: HbsConfig::default(),
            hbs_max_rank: None,
            seed: 0,
            threads: None,
            sign_fault: false,
        }
    }
}

impl SolverConfig {
    pub fn with_b(mut self, b: usize) -> Self {
        self.b = Some(b);
        self
    }

    pub fn with_compression(mut self, mode: CompressionMode) -> Self {
        self.compression = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, n1: usize) -> Result<()> {
        if !(self.c > 0.0 && self.c <= 2.0) {
            return Err(SlabError::invalid(format!("b coefficient must lie in (0, 2], got {}", self.c)));
        }
        if let Some(b) = self.b {
            if b == 0 || b > n1 {
                return Err(SlabError::invalid(format!("slab width must satisfy 1 ≤ b ≤ n1 = {n1}, got {b}")));
            }
        }
        if self.threads == Some(0) {
            return Err(SlabError::invalid("thread count must be positive"));
        }
        Ok(())
    }

    /// Slab width used for an `n1 × n2` grid.
    pub fn resolve_b(&self, n1: usize, n2: usize) -> usize {
        self.b.unwrap_or_else(|| choose_b(n1, n2, self.c))
    }

    /// Whether HBS compression is used at slab width `b`.
    pub fn uses_hbs(&self, n2: usize, b: usize) -> bool {
        match self.compression {
            CompressionMode::Dense => false,
            CompressionMode::Hbs => true,
            CompressionMode::Auto => n2 >= 512 && b >= 16,
        }
    }
}

/// Slab width `clamp(round₁₀(c·n₂^{2/3}), 10, n₁/2)`.
///
/// Grids too narrow for the lower bound get `max(n₁/2, 1)`.
pub fn choose_b(n1: usize, n2: usize, c: f64) -> usize {
    let raw = c * (n2 as f64).powf(2.0 / 3.0);
    let rounded = ((raw / 10.0).round() * 10.0) as usize;
    rounded.max(10).min((n1 / 2).max(1))
}

/// Runs `f` on a dedicated pool when a thread count is given.
fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| SlabError::invalid(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Wall-clock seconds of the two factorization stages.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FactorTimings {
    pub stage1_s: f64,
    pub stage2_s: f64,
}

/// Stored scalars of each component.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageReport {
    pub stage1_scalars: usize,
    pub stage2_scalars: usize,
}

impl StorageReport {
    pub fn total_scalars(&self) -> usize {
        self.stage1_scalars + self.stage2_scalars
    }

    pub fn total_bytes(&self) -> usize {
        self.total_scalars() * std::mem::size_of::<f64>()
    }
}

/// Immutable factorization, reusable for any number of solves.
#[derive(Debug)]
pub struct Factorization {
    config: SolverConfig,
    b: usize,
    stage_one: StageOne,
    sweep: SweepFactor,
    timings: FactorTimings,
    hbs_max_rank: usize,
    hbs_used: bool,
}

/// Partitions, factors the strips, forms the reduced system and sweeps it.
pub fn factorize(matrix: &CsrMatrix, n1: usize, n2: usize, config: &SolverConfig) -> Result<Factorization> {
    config.validate(n1)?;
    if matrix.nrows() != n1 * n2 {
        return Err(SlabError::DimensionMismatch {
            context: "factorize",
            expected: n1 * n2,
            actual: matrix.nrows(),
        });
    }
    let b = config.resolve_b(n1, n2);
    let hbs_used = config.uses_hbs(n2, b);
    let compression = if hbs_used {
        let mut s = HbsSettings::new(HbsConfig {
            seed: config.seed,
            ..config.hbs.clone()
        });
        s.r_max = config.hbs_max_rank;
        Compression::Hbs(s)
    } else {
        Compression::Dense
    };
    with_threads(config.threads, || {
        let t0 = Instant::now();
        let part = partition(n1, n2, b)?;
        let stage_one = StageOne::new(matrix, part)?.with_sign_fault(config.sign_fault);
        let reduced = stage_one.build_reduced(&compression)?;
        let stage1_s = t0.elapsed().as_secs_f64();
        let hbs_max_rank = reduced.hbs_max_rank();
        let t1 = Instant::now();
        let sweep = sweep_build(reduced.blocks)?;
        let stage2_s = t1.elapsed().as_secs_f64();
        info!(
            "factorized {n1}×{n2} with b = {b} ({}): stage one {stage1_s:.3}s, stage two {stage2_s:.3}s",
            if hbs_used { "hbs" } else { "dense" }
        );
        Ok(Factorization {
            config: config.clone(),
            b,
            stage_one,
            sweep,
            timings: FactorTimings { stage1_s, stage2_s },
            hbs_max_rank,
            hbs_used,
        })
    })?
}

impl Factorization {
    pub fn b(&self) -> usize {
        self.b
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn stage_one(&self) -> &StageOne {
        &self.stage_one
    }

    pub fn sweep(&self) -> &SweepFactor {
        &self.sweep
    }

    pub fn timings(&self) -> FactorTimings {
        self.timings
    }

    pub fn hbs_max_rank(&self) -> usize {
        self.hbs_max_rank
    }

    pub fn hbs_used(&self) -> bool {
        self.hbs_used
    }

    pub fn n(&self) -> usize {
        self.stage_one.partition().n()
    }

    pub fn storage(&self) -> StorageReport {
        StorageReport {
            stage1_scalars: self.stage_one.stored_scalars(),
            stage2_scalars: self.sweep.stored_scalars(),
        }
    }

    /// Solves for every column of `f` in one pass.
    pub fn solve_many(&self, f: &Mat) -> Result<Mat> {
        if f.rows() != self.n() {
            return Err(SlabError::DimensionMismatch {
                context: "solve",
                expected: self.n(),
                actual: f.rows(),
            });
        }
        with_threads(self.config.threads, || {
            let reduced = self.stage_one.reduce_rhs(f)?;
            let u_iface = self.sweep.sweep_solve(&reduced)?;
            self.stage_one.recover_interiors(&u_iface, f)
        })?
    }

    pub fn solve(&self, f: &[f64]) -> Result<Vec<f64>> {
        Ok(self.solve_many(&Mat::column(f))?.into_vec())
    }
}

/// Benchmark problem families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    /// Laplace equation with a logarithmic-potential exact solution.
    Poisson,
    /// Constant-coefficient Helmholtz with a Bessel exact solution.
    HelmholtzConst,
    /// Variable-coefficient Helmholtz with unit load (no exact solution).
    HelmholtzVarcoef,
}

/// Wavenumber given directly or as grid points per wavelength.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wavenumber {
    Kappa(f64),
    Ppw(f64),
}

/// A concrete benchmark problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSetup {
    pub kind: ProblemKind,
    pub n1: usize,
    pub n2: usize,
    pub wavenumber: Option<Wavenumber>,
}

impl ProblemSetup {
    pub fn poisson(n1: usize, n2: usize) -> Self {
        Self {
            kind: ProblemKind::Poisson,
            n1,
            n2,
            wavenumber: None,
        }
    }

    pub fn helmholtz(n1: usize, n2: usize, wavenumber: Wavenumber) -> Self {
        Self {
            kind: ProblemKind::HelmholtzConst,
            n1,
            n2,
            wavenumber: Some(wavenumber),
        }
    }

    pub fn helmholtz_varcoef(n1: usize, n2: usize, wavenumber: Wavenumber) -> Self {
        Self {
            kind: ProblemKind::HelmholtzVarcoef,
            n1,
            n2,
            wavenumber: Some(wavenumber),
        }
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n2 as f64 + 1.0)
    }

    pub fn kappa(&self) -> f64 {
        match self.wavenumber {
            None => 0.0,
            Some(Wavenumber::Kappa(k)) => k,
            Some(Wavenumber::Ppw(p)) => kappa_from_ppw(p, self.h()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, self.wavenumber) {
            (ProblemKind::Poisson, Some(_)) => {
                return Err(SlabError::invalid("poisson problems take no wavenumber"));
            }
            (ProblemKind::HelmholtzConst | ProblemKind::HelmholtzVarcoef, None) => {
                return Err(SlabError::invalid("helmholtz problems need exactly one of ppw or kappa"));
            }
            (_, Some(Wavenumber::Ppw(p))) if !(p > 0.0 && p.is_finite()) => {
                return Err(SlabError::invalid(format!("points per wavelength must be positive, got {p}")));
            }
            _ => {}
        }
        self.spec().validate()
    }

    pub fn spec(&self) -> ProblemSpec {
        match self.kind {
            ProblemKind::Poisson => ProblemSpec::poisson_manufactured(self.n1, self.n2),
            ProblemKind::HelmholtzConst => ProblemSpec::helmholtz_manufactured(self.n1, self.n2, self.kappa()),
            ProblemKind::HelmholtzVarcoef => ProblemSpec::helmholtz_varcoef(self.n1, self.n2, self.kappa()),
        }
    }

    /// Exact solution at the unknowns, where one is known.
    pub fn true_solution(&self) -> Result<Option<Vec<f64>>> {
        let spec = self.spec();
        let kappa = self.kappa();
        let eval = |f: &dyn Fn(f64, f64) -> Result<f64>| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(spec.n());
            for c in 0..spec.n1 {
                for r in 0..spec.n2 {
                    let (x, y) = spec.node(c, r);
                    out.push(f(x, y)?);
                }
            }
            Ok(out)
        };
        Ok(match self.kind {
            ProblemKind::Poisson => Some(eval(&true_solution_poisson)?),
            ProblemKind::HelmholtzConst => Some(eval(&|x, y| true_solution_helmholtz(x, y, kappa))?),
            ProblemKind::HelmholtzVarcoef => None,
        })
    }
}

/// Column names of the report table, in order.
pub const REPORT_COLUMNS: [&str; 13] = [
    "N",
    "n1",
    "n2",
    "b",
    "kappa",
    "T_factor_stage1_s",
    "T_factor_stage2_s",
    "T_solve_s",
    "M_factor_scalars",
    "relerr_res",
    "relerr_true",
    "hbs_max_rank",
    "seed",
];

/// One row of the report table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    #[serde(rename = "N")]
    pub n: usize,
    pub n1: usize,
    pub n2: usize,
    pub b: usize,
    pub kappa: f64,
    #[serde(rename = "T_factor_stage1_s")]
    pub t_factor_stage1_s: f64,
    #[serde(rename = "T_factor_stage2_s")]
    pub t_factor_stage2_s: f64,
    #[serde(rename = "T_solve_s")]
    pub t_solve_s: f64,
    #[serde(rename = "M_factor_scalars")]
    pub m_factor_scalars: usize,
    pub relerr_res: f64,
    /// Absent when the problem has no exact solution.
    pub relerr_true: Option<f64>,
    pub hbs_max_rank: usize,
    pub seed: u64,
}

impl SolveReport {
    /// Table cells in [`REPORT_COLUMNS`] order.
    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            self.n1.to_string(),
            self.n2.to_string(),
            self.b.to_string(),
            self.kappa.to_string(),
            self.t_factor_stage1_s.to_string(),
            self.t_factor_stage2_s.to_string(),
            self.t_solve_s.to_string(),
            self.m_factor_scalars.to_string(),
            self.relerr_res.to_string(),
            self.relerr_true.map(|v| v.to_string()).unwrap_or_default(),
            self.hbs_max_rank.to_string(),
            self.seed.to_string(),
        ]
    }

    /// The record with the wall-clock columns blanked out.
    pub fn csv_record_without_timings(&self) -> Vec<String> {
        let mut r = self.csv_record();
        r[5..8].iter_mut().for_each(String::clear);
        r
    }
}

/// Result of an end-to-end run.
#[derive(Debug)]
pub struct SolveOutcome {
    pub report: SolveReport,
    pub errors: ErrorReport,
    pub storage: StorageReport,
    pub solution: Vec<f64>,
}

/// Assembles, factors and solves one problem.
pub fn solve_problem(setup: &ProblemSetup, config: &SolverConfig) -> Result<SolveOutcome> {
    setup.validate()?;
    let system = assemble_fd5(&setup.spec())?;
    let truth = setup.true_solution()?;
    solve_system(&system, truth.as_deref(), setup.kappa(), config)
}

/// Factors and solves an assembled system, reporting against `truth` if given.
pub fn solve_system(
    system: &SparseSystem,
    truth: Option<&[f64]>,
    kappa: f64,
    config: &SolverConfig,
) -> Result<SolveOutcome> {
    let fact = factorize(&system.matrix, system.n1, system.n2, config)?;
    let t = Instant::now();
    let u = fact.solve(&system.rhs)?;
    let t_solve_s = t.elapsed().as_secs_f64();
    let zeros;
    let reference = match truth {
        Some(t) => t,
        None => {
            zeros = vec![0.0; system.n()];
            &zeros
        }
    };
    let errors = error_report(system, &u, reference)?;
    let storage = fact.storage();
    let timings = fact.timings();
    let report = SolveReport {
        n: system.n(),
        n1: system.n1,
        n2: system.n2,
        b: fact.b(),
        kappa,
        t_factor_stage1_s: timings.stage1_s,
        t_factor_stage2_s: timings.stage2_s,
        t_solve_s,
        m_factor_scalars: storage.total_scalars(),
        relerr_res: errors.relerr_res,
        relerr_true: truth.map(|_| errors.relerr_true),
        hbs_max_rank: fact.hbs_max_rank(),
        seed: config.seed,
    };
    Ok(SolveOutcome {
        report,
        errors,
        storage,
        solution: u,
    })
}

/// One benchmark row: either a report or the failure that prevented it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub setup: ProblemSetup,
    pub report: Option<SolveReport>,
    /// `ok` or an error message.
    pub status: String,
}

impl BenchRow {
    /// Table cells in [`REPORT_COLUMNS`] order plus the status column.
    pub fn csv_record(&self, config: &SolverConfig) -> Vec<String> {
        let mut r = match &self.report {
            Some(rep) => rep.csv_record(),
            None => {
                let s = &self.setup;
                let mut r = vec![String::new(); REPORT_COLUMNS.len()];
                r[0] = (s.n1 * s.n2).to_string();
                r[1] = s.n1.to_string();
                r[2] = s.n2.to_string();
                r[3] = config.resolve_b(s.n1, s.n2).to_string();
                r[4] = s.kappa().to_string();
                r[12] = config.seed.to_string();
                r
            }
        };
        r.push(self.status.clone());
        r
    }
}

/// Runs every setup in order; failures are recorded and the sweep continues.
/// `on_row` sees each row as soon as it completes.
pub fn benchmark(
    setups: &[ProblemSetup],
    config: &SolverConfig,
    mut on_row: impl FnMut(&BenchRow) -> Result<()>,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(setups.len());
    for s in setups {
        let row = match solve_problem(s, config) {
            Ok(out) => BenchRow {
                setup: *s,
                report: Some(out.report),
                status: "ok".into(),
            },
            Err(e) => BenchRow {
                setup: *s,
                report: None,
                status: format!("error: {e}"),
            },
        };
        on_row(&row)?;
        rows.push(row);
    }
    Ok(rows)
}

/// CSV writer that flushes after every row.
pub struct CsvSink<W: Write> {
    writer: csv::Writer<W>,
}

impl<W: Write> CsvSink<W> {
    /// Writes the header (report columns, plus `status` if requested).
    pub fn new(inner: W, with_status: bool) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(inner);
        let mut header: Vec<&str> = REPORT_COLUMNS.to_vec();
        if with_status {
            header.push("status");
        }
        writer.write_record(&header).map_err(csv_err)?;
        writer.flush()?;
        Ok(Self { writer })
    }

    pub fn write(&mut self, record: &[String]) -> Result<()> {
        self.writer.write_record(record).map_err(csv_err)?;
        self.writer.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> SlabError {
    SlabError::Io(std::io::Error::other(e))
}
