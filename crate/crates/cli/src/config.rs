//! Run configuration files.
//!
//! A config is a single flat JSON object:
//!
//! | key           | meaning                                                     |
//! |---------------|-------------------------------------------------------------|
//! | `problem`     | `poisson`, `helmholtz_const` or `helmholtz_varcoef`         |
//! | `n1`, `n2`    | grid size (`n2` defaults to `n1`)                           |
//! | `sizes`       | bench only: list of square grid sizes, instead of `n1`/`n2` |
//! | `ppw`/`kappa` | Helmholtz only, exactly one                                 |
//! | `b`/`c`       | slab width, or coefficient of the width heuristic; at most one |
//! | `compression` | `auto` (default), `dense` or `hbs`                          |
//! | `seed`        | random seed (default 0)                                     |
//! | `output`      | report path (default: standard output)                      |
//! | `format`      | `csv` (default) or `json`                                   |
//! | `threads`     | worker threads (default: all cores)                         |

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use slablu::driver::{
    CompressionMode, ProblemKind, ProblemSetup, SolverConfig, Wavenumber, DEFAULT_B_COEFFICIENT,
};

use crate::CliError;

/// Report encoding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Contents of a config file. Unknown keys are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Option<ProblemKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n1: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n2: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ppw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    pub compression: Option<CompressionMode>,
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("malformed config: {e}")))
    }

    /// Applies overrides and fills every default, so that the result
    /// reproduces the run when saved and reloaded.
    pub fn resolve(mut self, over: &Overrides) -> Result<Self, CliError> {
        if over.output.is_some() {
            self.output.clone_from(&over.output);
        }
        self.format = over.format.or(self.format).or(Some(Format::Csv));
        self.seed = over.seed.or(self.seed).or(Some(0));
        self.threads = over.threads.or(self.threads);
        self.compression = self.compression.or(Some(CompressionMode::Auto));

        let problem = self.problem.ok_or_else(|| CliError::Config("missing key `problem`".into()))?;
        match (problem, self.ppw, self.kappa) {
            (ProblemKind::Poisson, None, None) => {}
            (ProblemKind::Poisson, _, _) => {
                return Err(CliError::Config("poisson takes neither `ppw` nor `kappa`".into()));
            }
            (_, Some(_), Some(_)) => {
                return Err(CliError::Config("set exactly one of `ppw` and `kappa`, not both".into()));
            }
            (_, None, None) => return Err(CliError::Config("helmholtz needs one of `ppw` or `kappa`".into())),
            _ => {}
        }
        match (self.b, self.c) {
            (Some(_), Some(_)) => return Err(CliError::Config("set at most one of `b` and `c`".into())),
            (None, None) => self.c = Some(DEFAULT_B_COEFFICIENT),
            _ => {}
        }
        if self.sizes.is_some() && (self.n1.is_some() || self.n2.is_some()) {
            return Err(CliError::Config("use either `sizes` or `n1`/`n2`".into()));
        }
        if let Some(n1) = self.n1 {
            self.n2 = Some(self.n2.unwrap_or(n1));
        } else if self.n2.is_some() {
            return Err(CliError::Config("`n2` given without `n1`".into()));
        }
        if self.threads == Some(0) {
            return Err(CliError::Config("`threads` must be positive".into()));
        }
        Ok(self)
    }

    fn wavenumber(&self) -> Option<Wavenumber> {
        match (self.ppw, self.kappa) {
            (Some(p), _) => Some(Wavenumber::Ppw(p)),
            (_, Some(k)) => Some(Wavenumber::Kappa(k)),
            _ => None,
        }
    }

    fn setup(&self, n1: usize, n2: usize) -> ProblemSetup {
        let kind = self.problem.unwrap_or(ProblemKind::Poisson);
        ProblemSetup {
            kind,
            n1,
            n2,
            wavenumber: self.wavenumber(),
        }
    }

    /// Problems to run: the `sizes` sweep, or the single `n1 × n2` grid.
    /// Call on a resolved config.
    pub fn setups(&self) -> Result<Vec<ProblemSetup>, CliError> {
        let setups: Vec<ProblemSetup> = match (&self.sizes, self.n1, self.n2) {
            (Some(sizes), _, _) => sizes.iter().map(|&n| self.setup(n, n)).collect(),
            (None, Some(n1), Some(n2)) => vec![self.setup(n1, n2)],
            _ => return Err(CliError::Config("missing grid size: give `n1` (and `n2`) or `sizes`".into())),
        };
        if setups.is_empty() {
            return Err(CliError::Config("`sizes` must not be empty".into()));
        }
        for s in &setups {
            s.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(setups)
    }

    /// Solver parameters of a resolved config.
    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            b: self.b,
            c: self.c.unwrap_or(DEFAULT_B_COEFFICIENT),
            compression: self.compression.unwrap_or_default(),
            seed: self.seed.unwrap_or(0),
            threads: self.threads,
            ..SolverConfig::default()
        }
    }

    /// Checks the solver parameters against every grid of the run.
    pub fn validate_solver(&self, setups: &[ProblemSetup]) -> Result<(), CliError> {
        let solver = self.solver();
        for s in setups {
            solver.validate(s.n1).map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }
}
