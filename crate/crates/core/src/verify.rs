//! Self-check suites comparing the solver with the brute-force oracles.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::driver::{factorize, ProblemSetup, SolverConfig, Wavenumber};
use crate::error::Result;
use crate::hbs::HbsConfig;
use crate::linalg::Mat;
use crate::oracle::{
    dense_full_solve, dense_reduced_matrix, dense_schur_block, rank_property_check, rel_inf_error, separator_factors,
};
use crate::problem::assemble_fd5;
use crate::stage_one::{partition, Compression, HbsSettings, Side, StageOne};

/// Check names, as reported.
pub const ELIMINATION_EXACTNESS: &str = "elimination-exactness";
pub const RANK_PROPERTY: &str = "rank-property";
pub const SEPARATOR_FACTORS: &str = "separator-factors";
pub const SCHUR_BLOCK_CROSS_CHECK: &str = "schur-block-cross-check";
pub const HBS_AGREEMENT: &str = "hbs-agreement";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerifyLevel {
    Quick,
    Full,
}

/// Outcome of one named check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

/// Options for [`run_verify`].
#[derive(Clone, Copy, Debug, Default)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Test hook: runs the solver with a sign-flipped Schur correction.
    pub sign_fault: bool,
}

/// Worst observed value against a threshold.
struct Tally {
    worst: f64,
    at: String,
    failures: Vec<String>,
}

impl Tally {
    fn new() -> Self {
        Self {
            worst: 0.0,
            at: String::new(),
            failures: Vec::new(),
        }
    }

    fn record(&mut self, value: f64, limit: f64, label: String) {
        if !(value <= limit) {
            self.failures.push(format!("{label}: {value:.3e} > {limit:.0e}"));
        }
        if value > self.worst || value.is_nan() {
            self.worst = value;
            self.at = label;
        }
    }

    fn fail(&mut self, label: String) {
        self.failures.push(label);
    }

    fn outcome(self, name: &str, t: Instant) -> CheckOutcome {
        let passed = self.failures.is_empty();
        let detail = if passed {
            format!("worst {:.3e} ({})", self.worst, self.at)
        } else {
            self.failures.join("; ")
        };
        CheckOutcome {
            name: name.into(),
            passed,
            detail,
            seconds: t.elapsed().as_secs_f64(),
        }
    }
}

/// SlabLU solution against dense LU, relative ∞-norm ≤ 1e-10.
pub fn check_elimination_exactness(grids: &[usize], widths: &[usize], opts: VerifyOptions) -> CheckOutcome {
    let t = Instant::now();
    let mut tally = Tally::new();
    for &n in grids {
        for setup in [ProblemSetup::poisson(n, n), ProblemSetup::helmholtz(n, n, Wavenumber::Ppw(15.0))] {
            for &b in widths {
                let label = format!("{:?} {n}×{n} b={b}", setup.kind);
                let run = || -> Result<f64> {
                    let sys = assemble_fd5(&setup.spec())?;
                    let reference = dense_full_solve(&sys)?;
                    let cfg = SolverConfig {
                        sign_fault: opts.sign_fault,
                        ..SolverConfig::default().with_b(b).with_seed(opts.seed)
                    };
                    let fact = factorize(&sys.matrix, n, n, &cfg)?;
                    Ok(rel_inf_error(&fact.solve(&sys.rhs)?, &reference))
                };
                match run() {
                    Ok(e) => tally.record(e, 1e-10, label),
                    Err(e) => tally.fail(format!("{label}: {e}")),
                }
            }
        }
    }
    tally.outcome(ELIMINATION_EXACTNESS, t)
}

/// Four contiguous far-field splits of an `n`-point interface.
pub fn standard_splits(n: usize) -> Vec<Vec<usize>> {
    vec![
        (0..n / 4).collect(),
        (n / 4..3 * n / 4).collect(),
        (3 * n / 8..5 * n / 8).collect(),
        (n / 2..n).collect(),
    ]
}

/// Off-diagonal ranks of single-strip Schur complements are at most `2b`.
pub fn check_rank_property(n: usize, widths: &[usize], setups: &[ProblemSetup]) -> CheckOutcome {
    let t = Instant::now();
    let mut tally = Tally::new();
    for setup in setups {
        let matrix = match assemble_fd5(&setup.spec()) {
            Ok(s) => s.matrix,
            Err(e) => {
                tally.fail(format!("{:?}: {e}", setup.kind));
                continue;
            }
        };
        for &b in widths {
            for jb in standard_splits(n) {
                let label = format!("{:?} b={b} B={}..{}", setup.kind, jb[0], jb[jb.len() - 1] + 1);
                let res = partition(n, n, b).and_then(|p| rank_property_check(&matrix, &p, 0, Side::Right, &jb, 1e-10));
                match res {
                    Ok(r) if r.pass => tally.record(r.rank_bf.max(r.rank_fb) as f64 / r.bound as f64, 1.0, label),
                    Ok(r) => tally.fail(format!(
                        "{label}: ranks {}/{} > {} (eliminated part alone {}/{})",
                        r.rank_bf, r.rank_fb, r.bound, r.schur_rank_bf, r.schur_rank_fb
                    )),
                    Err(e) => tally.fail(format!("{label}: {e}")),
                }
            }
        }
    }
    tally.outcome(RANK_PROPERTY, t)
}

/// `T[F,B] = A[F,B] − X·Y` with separator factors of width exactly `2b`.
pub fn check_separator_factors(n: usize, b: usize, splits: &[Vec<usize>]) -> CheckOutcome {
    let t = Instant::now();
    let mut tally = Tally::new();
    for setup in [ProblemSetup::poisson(n, n), ProblemSetup::helmholtz(n, n, Wavenumber::Ppw(15.0))] {
        let res = assemble_fd5(&setup.spec()).and_then(|s| Ok((s.matrix, partition(n, n, b)?)));
        let (matrix, part) = match res {
            Ok(v) => v,
            Err(e) => {
                tally.fail(format!("{:?}: {e}", setup.kind));
                continue;
            }
        };
        for jb in splits {
            let label = format!("{:?} B={}..{}", setup.kind, jb[0], jb[jb.len() - 1] + 1);
            match separator_factors(&matrix, &part, 1, Side::Left, jb) {
                Ok(f) if f.x.cols() != 2 * b || f.y.rows() != 2 * b => {
                    tally.fail(format!("{label}: factor widths {}/{} ≠ {}", f.x.cols(), f.y.rows(), 2 * b))
                }
                Ok(f) => tally.record(f.residual, 1e-11, label),
                Err(e) => tally.fail(format!("{label}: {e}")),
            }
        }
    }
    tally.outcome(SEPARATOR_FACTORS, t)
}

/// Identity applies of the reduced blocks against from-scratch dense elimination.
pub fn check_schur_block_cross(n: usize, b: usize, opts: VerifyOptions) -> CheckOutcome {
    let t = Instant::now();
    let mut tally = Tally::new();
    for setup in [ProblemSetup::poisson(n, n), ProblemSetup::helmholtz_varcoef(n, n, Wavenumber::Kappa(9.0))] {
        let label = format!("{:?} {n}×{n} b={b}", setup.kind);
        let run = || -> Result<f64> {
            let matrix = assemble_fd5(&setup.spec())?.matrix;
            let part = partition(n, n, b)?;
            let exact = dense_reduced_matrix(&matrix, &part)?;
            let stage = StageOne::new(&matrix, part)?.with_sign_fault(opts.sign_fault);
            let m = stage.num_interfaces();
            let mut worst: f64 = 0.0;
            for j in 0..m {
                for k in j.saturating_sub(1)..(j + 2).min(m) {
                    let got = dense_schur_block(&stage, j, k)?;
                    let ex = exact.block(j * n..(j + 1) * n, k * n..(k + 1) * n);
                    worst = worst.max(got.sub(&ex).norm_fro() / ex.norm_fro());
                }
            }
            Ok(worst)
        };
        match run() {
            Ok(e) => tally.record(e, 1e-12, label),
            Err(e) => tally.fail(format!("{label}: {e}")),
        }
    }
    tally.outcome(SCHUR_BLOCK_CROSS_CHECK, t)
}

/// Result of comparing compressed and dense reduced blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct HbsAgreement {
    /// Largest relative Frobenius error over all reduced blocks.
    pub max_block_error: f64,
    /// Largest per-group operator products in either mode, over all strips.
    pub max_products: usize,
    /// Working rank at which the products were counted.
    pub working_rank: usize,
    pub max_rank: usize,
}

/// Compresses every strip of an `n × n` problem and compares with dense blocks.
pub fn hbs_agreement(setup: &ProblemSetup, b: usize, seed: u64) -> Result<HbsAgreement> {
    let n = setup.n1;
    let matrix = assemble_fd5(&setup.spec())?.matrix;
    let stage = StageOne::new(&matrix, partition(n, setup.n2, b)?)?;
    let dense = stage.build_reduced(&Compression::Dense)?;
    let settings = HbsSettings::new(HbsConfig {
        leaf_size: 16,
        seed,
        ..HbsConfig::default()
    });
    let hbs = stage.build_reduced(&Compression::Hbs(settings))?;
    let rel = |a: &Mat, b: &Mat| a.sub(b).norm_fro() / b.norm_fro();
    let (h, d) = (&hbs.blocks, &dense.blocks);
    let max_block_error = h
        .diag
        .iter()
        .zip(&d.diag)
        .chain(h.sup.iter().zip(&d.sup))
        .chain(h.sub.iter().zip(&d.sub))
        .map(|(x, y)| rel(x, y))
        .fold(0.0, f64::max);
    let mut max_products = 0;
    let mut working_rank = 0;
    for c in &hbs.compression {
        let s = c.stats();
        let p = s.normal_products.max(s.adjoint_products);
        if p >= max_products {
            max_products = p;
            working_rank = s.working_rank;
        }
    }
    Ok(HbsAgreement {
        max_block_error,
        max_products,
        working_rank,
        max_rank: hbs.hbs_max_rank(),
    })
}

/// Compressed reduced blocks match dense ones within the sample budget.
pub fn check_hbs_agreement(n: usize, b: usize, seed: u64) -> CheckOutcome {
    let t = Instant::now();
    let mut tally = Tally::new();
    for setup in [ProblemSetup::poisson(n, n), ProblemSetup::helmholtz(n, n, Wavenumber::Ppw(15.0))] {
        let label = format!("{:?} {n}×{n} b={b}", setup.kind);
        match hbs_agreement(&setup, b, seed) {
            Ok(a) if a.max_products > 4 * a.working_rank + 16 => tally.fail(format!(
                "{label}: {} products exceed 4·{}+16",
                a.max_products, a.working_rank
            )),
            Ok(a) => tally.record(a.max_block_error, 1e-10, label),
            Err(e) => tally.fail(format!("{label}: {e}")),
        }
    }
    tally.outcome(HBS_AGREEMENT, t)
}

/// Runs the suite; `Full` adds larger grids and the rank sweep over
/// `b ∈ {2, 4, 8}` for three problem families.
pub fn run_verify(level: VerifyLevel, opts: VerifyOptions) -> Vec<CheckOutcome> {
    let full = level == VerifyLevel::Full;
    let grids: &[usize] = if full { &[32, 48] } else { &[32] };
    let rank_widths: &[usize] = if full { &[2, 4, 8] } else { &[4] };
    let rank_setups = if full {
        vec![
            ProblemSetup::poisson(64, 64),
            ProblemSetup::helmholtz(64, 64, Wavenumber::Ppw(20.0)),
            ProblemSetup::helmholtz_varcoef(64, 64, Wavenumber::Ppw(20.0)),
        ]
    } else {
        vec![ProblemSetup::poisson(64, 64)]
    };
    let sep_n = if full { 48 } else { 32 };
    let splits: Vec<Vec<usize>> = standard_splits(sep_n).into_iter().take(3).collect();
    vec![
        check_elimination_exactness(grids, &[3, 4, 8], opts),
        check_rank_property(64, rank_widths, &rank_setups),
        check_separator_factors(sep_n, 4, &splits),
        check_schur_block_cross(if full { 32 } else { 20 }, 4, opts),
        check_hbs_agreement(64, 4, opts.seed),
    ]
}
