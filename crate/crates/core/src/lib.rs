//! Finite-precision construction of a hypercyclic operator `T = V + R` on a
//! closed subspace of `L₂(𝕋)`, with `V` unitary and `R` of rank at most two,
//! together with numerical verification of the identities it rests on.
//!
//! Layers, bottom-up:
//!
//! * [`angle`], [`laurent`], [`grid`], [`conjugate`]: exact circle points,
//!   Laurent polynomials, quadrature and the conjugate-function integral.
//! * [`lacunary`], [`belov`]: the lacunary series `γ`, `ψ`, their Hölder
//!   certificates and an exact checker for the level-set hypotheses.
//! * [`cantor`]: certified cover of `γ⁻¹(i)` and the nested-interval set `K`.
//! * [`eigenfield`]: `g`, `g₁`, `h`, `h_λ` and the identity checks.
//! * [`galerkin`], [`decomp`]: the finite model on `span{h_λ}` and the
//!   unitary-plus-finite-rank splittings.
//! * [`orbit`]: orbit statistics used as finite-dimensional surrogates.

pub mod angle;
pub mod belov;
pub mod cantor;
pub mod conjugate;
pub mod decomp;
pub mod eigenfield;
pub mod error;
pub mod exec;
pub mod galerkin;
pub mod grid;
pub mod lacunary;
pub mod laurent;
pub mod linalg;
pub mod orbit;
pub mod quad;

pub use angle::BinaryAngle;
pub use error::{Error, Result};
pub use exec::Execution;
pub use grid::{Grid, GridFunction};
pub use laurent::LaurentPoly;
