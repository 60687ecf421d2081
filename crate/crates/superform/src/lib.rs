//! Pointwise exterior algebra of super forms on `R^n x R^n`, metric structure
//! induced by a positive `(1,1)`-form, grid-discretized differential operators,
//! and weighted least-norm solvers for the equation `d alpha = beta`.
//!
//! A *super form* is a differential form in the anticommuting generators
//! `dx_1, ..., dx_n, dxi_1, ..., dxi_n` whose coefficients depend on `x` only.
//! A `(p,q)`-form carries `p` factors from the `dx` family and `q` from the
//! `dxi` family. The crate is organized in layers:
//!
//! - [`algebra`]: exact monomial arithmetic — wedge products, the involution
//!   `J`, and the `Theta` basis. Coefficients are `f64` but basis manipulation
//!   uses only signed integer arithmetic, so identities at this layer are exact.
//! - [`metric`]: pointwise inner products under an SPD coefficient matrix,
//!   the Hodge star from its defining relation, the Lefschetz operators `L`
//!   and `Lambda`, and the primitive decomposition.
//! - [`bridge`]: the dictionary between super forms and complex `(p,q)`-forms,
//!   with every conversion constant checked.
//! - [`grid`], [`field`], [`weight`], [`calculus`]: sampled form fields on a
//!   rectangular grid, the operators `d`, `d#`, their twisted versions and
//!   exact discrete adjoints, the two weighted Laplacians, and the curvature
//!   commutator that relates them.
//! - [`solver`]: minimal-norm solution of `d alpha = beta` by conjugate
//!   gradients on the normal equations, with certified estimate constants.
//! - [`legendre`]: the discrete Legendre-Fenchel transform, gradient-map
//!   pullbacks, and the homogeneous-weight solve pipeline.
//!
//! The accompanying guide in `book/` walks through the same material with
//! runnable examples; `superform-cli` drives the verification suites from the
//! command line.

pub mod algebra;
pub mod bridge;
pub mod calculus;
pub mod error;
pub mod field;
pub mod grid;
pub mod legendre;
pub mod metric;
pub mod report;
pub mod sampling;
pub mod sff;
pub mod solver;
pub mod sum;
pub mod weight;

// pub use algebra::{GradedForm, MonomialKey, MultiIndex, PointForm};
// pub use error::{Error, Result};
// pub use field::FormField;
// pub use grid::{Boundary, Grid};
// pub use metric::MetricPoint;
// pub use weight::{MetricField, Weight, WeightField};
