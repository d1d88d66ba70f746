//! Finite-dimensional calculus for linear relations (multivalued linear
//! operators) over ℂ: subspace arithmetic, relation algebra, quantitative
//! metrics, chain computations and a randomized stability laboratory.

pub mod chains;
pub mod error;
pub mod io;
pub mod lab;
pub mod linalg;
pub mod metrics;
pub mod relation;
pub mod subspace;
pub mod suites;
pub mod verdict;

pub use chains::Nu;
pub use error::{Error, Result};
pub use linalg::{c64, CMatrix, CVector, C64};
pub use relation::LinearRelation;
pub use subspace::Subspace;
pub use verdict::{Audit, Verdict};
