//! Certification quantities for flow runs: curvature of the flowing metric,
//! the potential function and its exact-identity residual, the Harnack-style
//! field `H`, and the fits used to classify long-time behavior.
//!
//! The potential `f` solves `Lap_g0 f0 = R0 - r` at start and then evolves by
//! `df/dt = Lap_g f + r f` alongside the flow.  Two exact consequences are
//! worth testing because discretization only perturbs them at O(dt):
//! the identity `Lap_g f = R - r` propagates from t = 0, and when `r = 0`
//! the conformal factor is slaved to the potential, `2u(t) - 2u(0) = f0 - f(t)`.

use crate::geometry::Surface;
use crate::linear_parabolic::{step_linear, LinearProblem};
use crate::operators::gradient_magnitude_sq;
use crate::poisson::solve_poisson_conformal;
use crate::util::{linear_fit, sup_norm};
use crate::Result;

/// Gauss curvature of `e^{2u} g`: `K = e^{-2u} (Ktilde - Lap u)`.
pub fn gauss_curvature(surface: &Surface, u: &[f64]) -> Vec<f64> {
    let lap = surface.stencil().apply(u);
    surface
        .ktilde()
        .iter()
        .zip(&lap)
        .zip(u)
        .map(|((kt, l), ui)| (-2.0 * ui).exp() * (kt - l))
        .collect()
}

/// Scalar curvature `R = 2 K`.
pub fn scalar_curvature(surface: &Surface, u: &[f64]) -> Vec<f64> {
    gauss_curvature(surface, u)
        .into_iter()
        .map(|k| 2.0 * k)
        .collect()
}

/// The potential function marched alongside a flow.
#[derive(Debug, Clone)]
pub struct PotentialTrack {
    f0: Vec<f64>,
    f: Vec<f64>,
}

impl PotentialTrack {
    /// Solve `Lap_{g(0)} f0 = R(0) - r`.  The data is mean-zero in the
    /// initial flowing measure exactly when `r` is the mean of `R(0)`.
    pub fn init(surface: &Surface, u0: &[f64], r: f64) -> Result<Self> {
        let rhs: Vec<f64> = scalar_curvature(surface, u0)
            .into_iter()
            .map(|ri| ri - r)
            .collect();
        let f0 = solve_poisson_conformal(surface, u0, &rhs, None)?;
        Ok(PotentialTrack {
            f: f0.clone(),
            f0,
        })
    }

    /// One implicit step of `df/dt = a Lap f + r f` with the same frozen
    /// diffusion coefficient `a = e^{-2 u}` the flow step used.
    pub fn step(&mut self, surface: &Surface, a_frozen: &[f64], r: f64, dt: f64) -> Result<()> {
        let n = self.f.len();
        let b = vec![r; n];
        let src = vec![0.0; n];
        let p = LinearProblem {
            stencil: surface.stencil(),
            a: a_frozen,
            b: &b,
            f: &src,
        };
        self.f = step_linear(&p, &self.f, dt, 1.0, None)?;
        Ok(())
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    pub fn f0(&self) -> &[f64] {
        &self.f0
    }

    /// `sup | e^{-2u} Lap f - (R - r) |`.  Zero at start up to solver
    /// tolerance; stays O(dt) along the discrete flow because both sides obey
    /// the same evolution equation.
    pub fn identity_residual(&self, surface: &Surface, u: &[f64], r: f64) -> f64 {
        let lap = surface.stencil().apply(&self.f);
        let rr = scalar_curvature(surface, u);
        (0..u.len())
            .map(|i| ((-2.0 * u[i]).exp() * lap[i] - (rr[i] - r)).abs())
            .fold(0.0_f64, f64::max)
    }

    /// Residual of the flat-limit slaving `2(u - u0) = f0 - f`; meaningful
    /// only for `r = 0` flows.
    pub fn flat_limit_residual(&self, u0: &[f64], u: &[f64]) -> f64 {
        (0..u.len())
            .map(|i| (2.0 * (u[i] - u0[i]) - (self.f0[i] - self.f[i])).abs())
            .fold(0.0_f64, f64::max)
    }
}

/// `H = R - r + |grad f|^2_g`, the quantity whose maximum is driven by
/// `e^{r t}`.  The gradient square is measured in the flowing metric.
pub fn h_field(surface: &Surface, u: &[f64], f: &[f64], r: f64) -> Vec<f64> {
    let rr = scalar_curvature(surface, u);
    let g = gradient_magnitude_sq(surface, f, Some(u));
    rr.iter().zip(&g).map(|(ri, gi)| ri - r + gi).collect()
}

/// Whether the `sup H <= e^{rt} sup H(0)` bound is expected for this surface:
/// every cone must have angle below 2 pi (sharp), since wider cones admit no
/// maximum-principle barrier at the tips.
pub fn h_bound_applies(surface: &Surface) -> bool {
    surface.cones().iter().all(|&(_, beta)| beta < 0.0)
}

/// Fit `y ~ C e^{rate t}` on the samples with `y > floor`; returns
/// `(rate, r_squared)`.  None when fewer than 3 samples survive the floor or
/// the fit degenerates.
pub fn exponential_rate(ts: &[f64], ys: &[f64], floor: f64) -> Option<(f64, f64)> {
    let mut xs = Vec::new();
    let mut ls = Vec::new();
    for (&t, &y) in ts.iter().zip(ys) {
        if y > floor {
            xs.push(t);
            ls.push(y.ln());
        }
    }
    let (_, rate, r2) = linear_fit(&xs, &ls)?;
    Some((rate, r2))
}

/// Sample of a time series at `t` by linear interpolation; None outside the
/// covered interval.  `ts` must be increasing.
pub fn value_at(ts: &[f64], ys: &[f64], t: f64) -> Option<f64> {
    if ts.len() != ys.len() || ts.is_empty() {
        return None;
    }
    if t < ts[0] || t > *ts.last().unwrap() {
        return None;
    }
    let idx = ts.partition_point(|&s| s < t);
    if idx == 0 {
        return Some(ys[0]);
    }
    if idx == ts.len() {
        return Some(*ys.last().unwrap());
    }
    let (t0, t1) = (ts[idx - 1], ts[idx]);
    let (y0, y1) = (ys[idx - 1], ys[idx]);
    if t1 == t0 {
        return Some(y1);
    }
    Some(y0 + (y1 - y0) * (t - t0) / (t1 - t0))
}

/// Residual of the curvature evolution `dR/dt = Lap_g R + R (R - r)` between
/// two consecutive states, sup over nodes at background distance at least
/// `exclude_radius` from every tip (the innermost ring sees pure
/// discretization wobble).  O(dt + h^2) for smooth flows.
pub fn curvature_evolution_residual(
    surface: &Surface,
    u_prev: &[f64],
    u_next: &[f64],
    r: f64,
    dt: f64,
    exclude_radius: f64,
) -> f64 {
    let r_prev = scalar_curvature(surface, u_prev);
    let r_next = scalar_curvature(surface, u_next);
    let lap = surface.stencil().apply(&r_next);
    let dist = surface.tip_distance();
    let mut sup = 0.0_f64;
    for i in 0..u_prev.len() {
        if dist[i] < exclude_radius {
            continue;
        }
        let lhs = (r_next[i] - r_prev[i]) / dt;
        let rhs = (-2.0 * u_next[i]).exp() * lap[i] + r_next[i] * (r_next[i] - r);
        sup = sup.max((lhs - rhs).abs());
    }
    sup
}

/// Convenience: sup norm of `R - r` for steady-state detection in reports.
pub fn sup_r_minus_r(surface: &Surface, u: &[f64], r: f64) -> f64 {
    let rr = scalar_curvature(surface, u);
    sup_norm(&rr.iter().map(|x| x - r).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_doubled_polygon, build_flat_torus, PolygonGeometry};
    use crate::util::comp_sum;

    #[test]
    fn curvature_of_constant_factor_rescales() {
        let s = Surface::Tri(
            build_doubled_polygon(&[0.25, 0.25, 0.25], PolygonGeometry::Hyperbolic, 12).unwrap(),
        );
        let c = 0.3;
        let u = vec![c; s.node_count()];
        let k = gauss_curvature(&s, &u);
        let scale = (-2.0 * c).exp();
        for (ki, kt) in k.iter().zip(s.ktilde()) {
            assert!((ki - scale * kt).abs() < 1e-12);
        }
    }

    #[test]
    fn potential_init_satisfies_the_identity() {
        let s = Surface::Tri(build_flat_torus(12, 10, 1.0, 1.3).unwrap());
        let tau = 2.0 * std::f64::consts::PI;
        let u0: Vec<f64> = (0..s.node_count())
            .map(|v| 0.05 * (tau * (v % 12) as f64 / 12.0).cos())
            .collect();
        // r = mean of R in the flowing measure
        let rr = scalar_curvature(&s, &u0);
        let vol = comp_sum(
            s.areas()
                .iter()
                .zip(&u0)
                .map(|(a, ui)| a * (2.0 * ui).exp()),
        );
        let r = comp_sum(
            rr.iter()
                .zip(s.areas())
                .zip(&u0)
                .map(|((ri, a), ui)| ri * a * (2.0 * ui).exp()),
        ) / vol;
        let track = PotentialTrack::init(&s, &u0, r).unwrap();
        let res = track.identity_residual(&s, &u0, r);
        assert!(res < 1e-8, "identity residual at init: {res:.3e}");
    }

    #[test]
    fn h_bound_gate_reads_the_divisor() {
        let sharp = Surface::Tri(
            build_doubled_polygon(&[0.25, 0.25, 0.25], PolygonGeometry::Hyperbolic, 4).unwrap(),
        );
        assert!(h_bound_applies(&sharp));
        let torus = Surface::Tri(build_flat_torus(4, 4, 1.0, 1.0).unwrap());
        assert!(h_bound_applies(&torus));
        let blunt = Surface::Radial(
            crate::geometry::build_football_with_flat(1.0, -0.5, 32, 1.0, 0.2).unwrap(),
        );
        assert!(!h_bound_applies(&blunt));
    }

    #[test]
    fn exponential_fit_recovers_a_planted_rate() {
        let ts: Vec<f64> = (0..40).map(|i| 0.25 * i as f64).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 3.0 * (-1.7 * t).exp()).collect();
        let (rate, r2) = exponential_rate(&ts, &ys, 1e-300).unwrap();
        assert!((rate + 1.7).abs() < 1e-9);
        assert!(r2 > 0.999999);
    }

    #[test]
    fn value_at_interpolates() {
        let ts = [0.0, 1.0, 3.0];
        let ys = [2.0, 4.0, 0.0];
        assert_eq!(value_at(&ts, &ys, 0.5), Some(3.0));
        assert_eq!(value_at(&ts, &ys, 2.0), Some(2.0));
        assert_eq!(value_at(&ts, &ys, 3.0), Some(0.0));
        assert_eq!(value_at(&ts, &ys, 3.1), None);
    }
}
