//! Normalized Ricci flow on closed surfaces carrying conical singularities.
//!
//! The background metric is a fixed cone metric that is exactly flat near each
//! tip; the evolving metric is a conformal factor `e^{2u}` over it.  The crate
//! provides the discrete geometry (1D radial profiles and intrinsic
//! triangulations), the lumped finite-volume Laplacian, linear parabolic and
//! Poisson solvers on the full surface and on tip-truncated subdomains, the
//! semi-implicit flow stepper, and the potential-function diagnostics used to
//! certify runs.

pub mod cg;
pub mod diagnostics;
pub mod field;
pub mod flow;
pub mod geometry;
pub mod linear_parabolic;
pub mod operators;
pub mod poisson;
pub mod presets;
pub mod util;

mod error;

pub use error::{Error, Result};
pub use field::{Field, MetricTag};
pub use geometry::{ConeDivisor, RadialSurface, Surface, TriSurface};
