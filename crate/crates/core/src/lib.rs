//! Two-level sparse direct solver for five-point finite-difference
//! discretizations of elliptic problems on rectangles.

pub mod driver;
pub mod error;
pub mod hbs;
pub mod linalg;
pub mod oracle;
pub mod problem;
pub mod stage_one;
pub mod stage_two;
pub mod verify;

pub use error::{Result, SlabError};
