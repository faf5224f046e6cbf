//! Dense and banded linear-algebra kernels.

mod banded;
mod dense;
mod lu;
mod qr;
mod svd;

use serde::{Deserialize, Serialize};

pub use banded::{BandedLu, BandedMatrix};
pub use dense::{dot, gemm, mul, norm2, Mat, Op};
pub use lu::{dense_lu, DenseLu};
pub(crate) use lu::solve_upper;
pub use qr::{pivoted_qr, PivotedQr, Qr};
pub use svd::{numerical_rank, singular_values};

/// Whether a factorization solves with the matrix or with its transpose.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolveMode {
    Normal,
    Adjoint,
}

/// Factors a band matrix; see [`BandedLu::factor`].
pub fn banded_lu(a: BandedMatrix) -> crate::error::Result<BandedLu> {
    BandedLu::factor(a)
}
