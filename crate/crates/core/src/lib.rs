//! Worst-case expectation bounds over ambiguity sets of probability distributions.
//!
//! The crate computes
//!
//! ```text
//! sup  E[f(θ)]   over distributions D with   E[g(θ)] ⪯ 0,  E[h(θ)] = 0,  θ ∈ Θ a.s.
//! ```
//!
//! when `f` is a pointwise maximum of concave pieces, every `gᵢ` is a pointwise
//! minimum of convex pieces, `h` is affine and `Θ` is a finite union of convex
//! sets. Such a problem is equivalent to a finite convex program over one
//! weighted Dirac mass per combination of pieces ("mass cell"), written in
//! perspective form. The pipeline is
//!
//! 1. [`model`]: describe the problem with [`atoms`],
//! 2. [`reduce`]: enumerate mass cells and perspective terms,
//! 3. [`conic`]: compile to a standard-form cone program,
//! 4. [`solver`]: interior-point solve,
//! 5. [`reduce::recover_distribution`] and [`duality`]: extremal distribution
//!    and a Lagrange certificate of the bound.
//!
//! [`oracle`] holds independent cross-checks (grid LP, closed forms),
//! [`paramlp`] turns optimal values of parameterized LPs into piecewise-concave
//! objectives and [`apps`] builds the worked problems.

// `!(x < y)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apps;
pub mod atoms;
pub mod cones;
pub mod conic;
pub mod duality;
pub mod error;
pub mod extended;
mod linalg;
pub mod model;
pub mod oracle;
pub mod paramlp;
pub mod pipeline;
pub mod reduce;
pub mod solver;

pub use error::{OuqError, Result};
pub use extended::ExtReal;
