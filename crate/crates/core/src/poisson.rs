//! Poisson solves on closed cone surfaces.
//!
//! `Lap u = f` on a closed surface is solvable exactly when `f` integrates to
//! zero, and then `u` is unique up to a constant.  The same holds in a
//! conformal metric `e^{2 u0} g` with the measure reweighted.  Both solvers
//! reject data that is not mean-zero and return the mean-zero representative.
//!
//! Strongly sharp tips can be traded for mild ones: an `m`-fold cover of a
//! radial profile multiplies the profile by `m` and maps tip order `beta` to
//! `m (1 + beta) - 1`.  The discrete systems scale uniformly under this map,
//! so solutions of radially symmetric problems pass through covers unchanged;
//! tests use that as a consistency oracle.

use crate::cg;
use crate::geometry::{RadialSurface, Surface};
use crate::util::comp_sum;
use crate::{Error, Result};

/// Relative CG tolerance used by the solvers here.
pub const POISSON_TOL: f64 = 1e-11;

/// Relative tolerance on the compatibility integral of the data.
pub const MEAN_ZERO_TOL: f64 = 1e-8;

fn measure(surface: &Surface, conformal: Option<&[f64]>) -> Vec<f64> {
    let areas = surface.areas();
    match conformal {
        None => areas.to_vec(),
        Some(u0) => areas
            .iter()
            .zip(u0)
            .map(|(a, u)| a * (2.0 * u).exp())
            .collect(),
    }
}

/// Subtract the weighted mean of `u`: afterwards `sum_i m_i u_i = 0` with
/// `m_i = A_i e^{2 u0_i}` (plain areas when no conformal factor is given).
pub fn project_mean_zero(surface: &Surface, u: &mut [f64], conformal: Option<&[f64]>) {
    let m = measure(surface, conformal);
    let total = comp_sum(m.iter().copied());
    let mean = comp_sum(u.iter().zip(&m).map(|(u, m)| u * m)) / total;
    for v in u.iter_mut() {
        *v -= mean;
    }
}

fn solve_with_measure(
    surface: &Surface,
    m: &[f64],
    f: &[f64],
    warm: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let n = surface.node_count();
    assert_eq!(f.len(), n, "data length");
    let integral = comp_sum(f.iter().zip(m).map(|(f, m)| f * m));
    let scale = comp_sum(f.iter().zip(m).map(|(f, m)| f.abs() * m));
    let tol = MEAN_ZERO_TOL * scale.max(f64::MIN_POSITIVE);
    if integral.abs() > tol {
        return Err(Error::NotMeanZero { integral, tol });
    }
    // Lap u = f reads L_w u = -m f in weight form.  The compatibility defect
    // just bounded is pure roundoff; sweep it into the deflated complement so
    // CG sees an exactly balanced right side.
    let mut b: Vec<f64> = f.iter().zip(m).map(|(f, m)| -f * m).collect();
    let shift = comp_sum(b.iter().copied()) / n as f64;
    for v in b.iter_mut() {
        *v -= shift;
    }
    let diag = vec![0.0; n];
    let sys = cg::System {
        stencil: surface.stencil(),
        diag: &diag,
        scale: 1.0,
        deflate_constants: true,
    };
    let (x, _) = cg::solve(&sys, &b, warm, POISSON_TOL)?;
    Ok(x)
}

/// Solve `Lap u = f` in the background metric.  Returns `u` with
/// `integral(u) = 0`; `warm` seeds the iteration.
pub fn solve_poisson(surface: &Surface, f: &[f64], warm: Option<&[f64]>) -> Result<Vec<f64>> {
    let m = measure(surface, None);
    let mut u = solve_with_measure(surface, &m, f, warm)?;
    project_mean_zero(surface, &mut u, None);
    Ok(u)
}

/// Solve `e^{-2 u0} Lap u = f`, the Poisson problem in the metric
/// `e^{2 u0} g`.  Data must be mean-zero against `A_i e^{2 u0_i}`; the
/// solution comes back mean-zero in that same measure.
pub fn solve_poisson_conformal(
    surface: &Surface,
    u0: &[f64],
    f: &[f64],
    warm: Option<&[f64]>,
) -> Result<Vec<f64>> {
    assert_eq!(u0.len(), surface.node_count(), "conformal factor length");
    let m = measure(surface, Some(u0));
    let mut u = solve_with_measure(surface, &m, f, warm)?;
    project_mean_zero(surface, &mut u, Some(u0));
    Ok(u)
}

/// Sup of the pointwise background `|grad u|^2` over the nodes within
/// `radius` of a cone tip.  Zero when no node qualifies.  Refining the mesh
/// should not inflate this for solutions with bounded gradient; regularity
/// checks compare it across resolutions.
pub fn gradient_probe(surface: &Surface, u: &[f64], radius: f64) -> f64 {
    let g = surface.grad_sq_background(u);
    let dist = surface.tip_distance();
    g.iter()
        .zip(dist)
        .filter(|&(_, d)| *d <= radius)
        .fold(0.0_f64, |m, (&v, _)| m.max(v))
}

/// The `m`-fold cover of a radial profile: same parameter interval, profile
/// scaled by `m`, tip order `beta` mapped to `m (1 + beta) - 1`.  Edge
/// weights and areas all scale by `m`, so the cover is again a valid surface
/// and its Laplacian is the base Laplacian times `m` in weight form.
pub fn mfold_cover(base: &RadialSurface, m: u32) -> Result<RadialSurface> {
    if m == 0 {
        return Err(Error::InvalidArgument("cover degree must be >= 1".into()));
    }
    let mf = m as f64;
    let profile: Vec<f64> = base.profile().iter().map(|&h| mf * h).collect();
    let (b1, b2) = base.tip_orders();
    let orders = (mf * (1.0 + b1) - 1.0, mf * (1.0 + b2) - 1.0);
    RadialSurface::from_profile(profile, orders, base.length(), base.flat_len())
}

/// Degree of the cover that lands tip order `beta` in `(-1/2, 0]`, the range
/// where the Laplacian's tip behavior is mildest.  Sharp orders (`beta < 0`)
/// always admit one; smooth or blunt tips return None (covers only open the
/// angle further).
pub fn flattening_cover_order(beta: f64) -> Option<u32> {
    if !(beta > -1.0 && beta < 0.0) {
        return None;
    }
    let x = 1.0 / (1.0 + beta);
    if !(x >= 1.0) || x > 1e9 {
        return None;
    }
    Some((x.floor() as u32).max(1))
}
