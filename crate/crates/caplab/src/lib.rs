//! Numerical laboratory for extension operators on spherical caps.
//!
//! The crate discretizes the cap `Γ = {x ∈ S^d : |x'| ≤ 1/2}` of the unit
//! sphere, evaluates the extension operator `f ↦ ∫ e^{i(x·ξ' + t ξ_{d+1})} f dσ`
//! by direct oscillatory quadrature, and builds the machinery needed to
//! experiment with sharp-constant questions at desk scale:
//!
//! - [`geometry`]: caps, maximal separated nets, rescaled coordinate maps,
//!   dyadic cubes and the off-diagonal Whitney pairing.
//! - [`quadrature`]: surface grids with the graph-coordinate Jacobian,
//!   truncated space-time lattices, `L^p` norms with explicit tails.
//! - [`extension`]: the extension operator, the free Schrödinger propagator,
//!   the Gaussian closed form, the cap rescaling factorization, and an
//!   autoconvolution (Plancherel) route to even-exponent norms.
//! - [`refinement`]: cap-localized `X_{p,q}` norms, the cap-concentration
//!   functional, and bilinear interaction decay between distant caps.
//! - [`decomposition`]: the two-stage profile decomposition with planted
//!   sequence generators and orthogonality reports.
//! - [`constants`]: ascent estimation of the sphere constant, the Gaussian
//!   Strichartz constant, the concentration curve, and the comparison report.
//! - [`cli`]: batch orchestration with JSON/CSV artifacts.
//!
//! Everything is deterministic: grids, nets, and random corpora are driven by
//! explicit seeds, and all reductions use a fixed summation order.

pub mod cli;
pub mod constants;
pub mod decomposition;
pub mod error;
pub mod extension;
pub mod geometry;
pub mod quadrature;
pub mod refinement;
pub mod report;
pub mod util;

pub use error::{Error, Result};
