//! Exact matrix-rigidity and probabilistic-rank experiments for the
//! Walsh-Hadamard family and threshold-circuit matrices.
//!
//! Everything runs over a prime field `F_p` or over the rationals with exact
//! arithmetic. Low-rank objects are kept as explicit sums of outer products
//! ([`FactoredMatrix`]) and only materialized on request, under a
//! configurable entry [`Budget`].

pub mod bits;
pub mod budget;
pub mod error;
pub mod factored;
pub mod field;
pub mod hadamard;
pub mod interp;
pub mod matrix;
pub mod oracles;
pub mod pipelines;
pub mod poly;
pub mod reductions;
pub mod sampler;
pub mod seed;

pub use budget::Budget;
pub use error::{Error, Result};
pub use factored::{EntryOracle, FactoredMatrix, Term};
pub use field::{FieldSpec, Scalar};
pub use matrix::DenseMatrix;
pub use poly::{Monomial, SparseMultilinearPoly};
