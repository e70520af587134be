//! Discrete background geometries: closed cone surfaces as either 1D radial
//! profiles (surfaces of revolution) or intrinsic triangulations.
//!
//! Both carry the same derived data: a lumped finite-volume Laplacian,
//! a smooth background curvature field `ktilde` with `K = 0` exactly at cone
//! tips (all singular curvature lives in the cone structure), node distances
//! to the nearest tip, and the weighted Euler number that drives the flow's
//! normalization.

pub mod mesh_io;
mod radial;
mod tri;

pub use radial::{build_football, build_football_with_flat, RadialSurface, DEFAULT_FLAT_FRACTION};
pub use tri::{build_doubled_polygon, build_flat_torus, PolygonGeometry, TriSurface};

use crate::{Error, Result};

/// A formal sum of cone points with orders `beta > -1`, `beta != 0`.
/// Order `beta` means cone angle `2 pi (1 + beta)`.
#[derive(Debug, Clone, Default)]
pub struct ConeDivisor {
    entries: Vec<(usize, f64)>,
}

impl ConeDivisor {
    pub fn new(mut entries: Vec<(usize, f64)>) -> Result<Self> {
        entries.sort_by_key(|e| e.0);
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::InvalidDivisor(format!(
                    "vertex {} listed twice",
                    pair[0].0
                )));
            }
        }
        for &(v, beta) in &entries {
            if !beta.is_finite() || beta <= -1.0 {
                return Err(Error::InvalidDivisor(format!(
                    "order {beta} at vertex {v} is not > -1"
                )));
            }
            if beta == 0.0 {
                return Err(Error::InvalidDivisor(format!(
                    "order 0 at vertex {v}: a cone point must have angle != 2 pi"
                )));
            }
        }
        Ok(ConeDivisor { entries })
    }

    pub fn empty() -> Self {
        ConeDivisor::default()
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn total_order(&self) -> f64 {
        crate::util::comp_sum(self.entries.iter().map(|e| e.1))
    }

    /// All orders strictly negative (sharp cones).  Vacuously true when empty.
    pub fn all_orders_negative(&self) -> bool {
        self.entries.iter().all(|&(_, b)| b < 0.0)
    }
}

/// Euler number of the pair (genus-g surface, divisor): `2 - 2g + sum beta_i`.
pub fn euler_number(genus: u32, divisor: &ConeDivisor) -> f64 {
    2.0 - 2.0 * genus as f64 + divisor.total_order()
}

/// Construction-chart coordinates of a node, kept so that presets can define
/// smooth initial data.  `side` distinguishes the two copies of a doubled
/// polygon.  Not persisted by the mesh file format.
#[derive(Debug, Clone, Copy)]
pub struct ChartPos {
    pub side: u8,
    pub x: f64,
    pub y: f64,
}

/// A closed discrete cone surface of either kind.
#[derive(Debug, Clone)]
pub enum Surface {
    Radial(RadialSurface),
    Tri(TriSurface),
}

impl Surface {
    pub fn node_count(&self) -> usize {
        match self {
            Surface::Radial(s) => s.node_count(),
            Surface::Tri(s) => s.node_count(),
        }
    }

    pub fn stencil(&self) -> &crate::operators::LaplacianStencil {
        match self {
            Surface::Radial(s) => s.stencil(),
            Surface::Tri(s) => s.stencil(),
        }
    }

    pub fn areas(&self) -> &[f64] {
        self.stencil().areas()
    }

    /// Smooth background curvature; zero exactly at cone tips.
    pub fn ktilde(&self) -> &[f64] {
        match self {
            Surface::Radial(s) => s.ktilde(),
            Surface::Tri(s) => s.ktilde(),
        }
    }

    /// Euler number weighted by the divisor, `chi(S) + sum beta_i`.
    pub fn chi_tilde(&self) -> f64 {
        match self {
            Surface::Radial(s) => s.chi_tilde(),
            Surface::Tri(s) => s.chi_tilde(),
        }
    }

    /// Cone points as `(node id, order)`.
    pub fn cones(&self) -> &[(usize, f64)] {
        match self {
            Surface::Radial(s) => s.cones(),
            Surface::Tri(s) => s.cones(),
        }
    }

    /// Background distance from each node to the nearest cone tip
    /// (infinite when the divisor is empty).
    pub fn tip_distance(&self) -> &[f64] {
        match self {
            Surface::Radial(s) => s.tip_distance(),
            Surface::Tri(s) => s.tip_distance(),
        }
    }

    /// Smallest resolved length: the grid spacing or the shortest edge.
    pub fn grid_scale(&self) -> f64 {
        match self {
            Surface::Radial(s) => s.drho(),
            Surface::Tri(s) => s.min_edge(),
        }
    }

    pub fn total_area(&self) -> f64 {
        self.stencil().total_area()
    }

    pub fn grad_sq_background(&self, u: &[f64]) -> Vec<f64> {
        match self {
            Surface::Radial(s) => s.grad_sq_background(u),
            Surface::Tri(s) => s.grad_sq_background(u),
        }
    }

    pub fn positions(&self) -> Option<&[ChartPos]> {
        match self {
            Surface::Radial(_) => None,
            Surface::Tri(s) => s.positions(),
        }
    }

    pub fn is_tip(&self, node: usize) -> bool {
        self.cones().iter().any(|&(v, _)| v == node)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euler_number_examples() {
        // four half-angle cones on the sphere cancel the round contribution
        let d = ConeDivisor::new(vec![(0, -0.5), (1, -0.5), (2, -0.5), (3, -0.5)]).unwrap();
        assert_eq!(euler_number(0, &d), 0.0);

        let empty = ConeDivisor::empty();
        assert_eq!(euler_number(1, &empty), 0.0);

        let d = ConeDivisor::new(vec![(0, -0.75), (1, -0.75), (2, -0.75)]).unwrap();
        assert!((euler_number(0, &d) - (-0.25)).abs() < 1e-15);
    }

    #[test]
    fn divisor_rejects_bad_orders() {
        assert!(ConeDivisor::new(vec![(0, -1.0)]).is_err());
        assert!(ConeDivisor::new(vec![(0, -1.5)]).is_err());
        assert!(ConeDivisor::new(vec![(0, 0.0)]).is_err());
        assert!(ConeDivisor::new(vec![(0, -0.5), (0, -0.5)]).is_err());
        assert!(ConeDivisor::new(vec![(0, 1.0)]).is_ok());
    }
}
