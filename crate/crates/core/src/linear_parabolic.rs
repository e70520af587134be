//! Linear parabolic equations `du/dt = a Lap u + b u + f` with node-wise
//! coefficients, stepped by the theta scheme on a stencil (the full surface
//! or a tip truncation).
//!
//! The diffusion coefficient `a > 0` makes the operator self-adjoint against
//! the measure `A_i / a_i`, which is where the energy estimate lives.  The
//! C0 estimates hold because the implicit part of the step is an M-matrix:
//! `(A_i (1 - dt theta b_i) / a_i) v_i + dt theta (L_w v)_i`, diagonally
//! dominant with nonpositive off-diagonal whenever the pivot
//! `1 - dt theta b_i` stays positive.

use crate::cg;
use crate::operators::{truncate, LaplacianStencil};
use crate::util::{comp_sum, max_of};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LinearProblem<'a> {
    pub stencil: &'a LaplacianStencil,
    /// Diffusion coefficient per node, finite and > 0.
    pub a: &'a [f64],
    /// Reaction coefficient per node.
    pub b: &'a [f64],
    /// Source per node.
    pub f: &'a [f64],
}

impl LinearProblem<'_> {
    fn validate(&self) -> Result<()> {
        let n = self.stencil.node_count();
        if self.a.len() != n || self.b.len() != n || self.f.len() != n {
            return Err(Error::InvalidArgument(format!(
                "coefficient lengths ({}, {}, {}) do not match {n} nodes",
                self.a.len(),
                self.b.len(),
                self.f.len()
            )));
        }
        for (i, &ai) in self.a.iter().enumerate() {
            if !(ai.is_finite() && ai > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "diffusion coefficient {ai} at node {i} is not positive"
                )));
            }
        }
        if self.b.iter().chain(self.f).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "linear problem coefficients".into(),
            });
        }
        Ok(())
    }
}

/// One theta-scheme step of size `dt`.  `theta` in [1/2, 1]: 1 is implicit
/// Euler (unconditionally max-principle-safe), 1/2 is Crank-Nicolson
/// (second order).  Fails with `ReactionTooStiff` when a pivot
/// `1 - dt theta b_i` drops below 1e-8.
pub fn step_linear(
    p: &LinearProblem,
    u: &[f64],
    dt: f64,
    theta: f64,
    warm: Option<&[f64]>,
) -> Result<Vec<f64>> {
    p.validate()?;
    let n = p.stencil.node_count();
    assert_eq!(u.len(), n, "state length");
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad step size {dt}")));
    }
    if !(0.5..=1.0).contains(&theta) {
        return Err(Error::InvalidArgument(format!(
            "theta {theta} outside [1/2, 1]"
        )));
    }

    let areas = p.stencil.areas();
    let mut diag = vec![0.0; n];
    for i in 0..n {
        let pivot = 1.0 - dt * theta * p.b[i];
        if pivot <= 1e-8 {
            return Err(Error::ReactionTooStiff { node: i, pivot });
        }
        diag[i] = areas[i] * pivot / p.a[i];
    }

    // right side: (u + dt (1-theta)(a Lap u + b u) + dt f) * A / a
    let mut rhs = vec![0.0; n];
    if theta < 1.0 {
        p.stencil.apply_into(u, &mut rhs);
    }
    for i in 0..n {
        let explicit = if theta < 1.0 {
            dt * (1.0 - theta) * (p.a[i] * rhs[i] + p.b[i] * u[i])
        } else {
            0.0
        };
        rhs[i] = (u[i] + explicit + dt * p.f[i]) * areas[i] / p.a[i];
    }

    let sys = cg::System {
        stencil: p.stencil,
        diag: &diag,
        scale: dt * theta,
        deflate_constants: false,
    };
    let (v, _) = cg::solve(&sys, &rhs, warm.or(Some(u)), 1e-11)?;
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            context: format!("linear step output, node {i}"),
        });
    }
    Ok(v)
}

/// March `steps` equal steps, warm-starting each solve from the last state.
pub fn run_linear(
    p: &LinearProblem,
    u0: &[f64],
    dt: f64,
    steps: usize,
    theta: f64,
) -> Result<Vec<f64>> {
    let mut u = u0.to_vec();
    for _ in 0..steps {
        u = step_linear(p, &u, dt, theta, None)?;
    }
    Ok(u)
}

/// A priori bound on `sup |u(t) - u(0)|`: the time derivative
/// `v = a Lap u + b u + f` follows the homogeneous equation with reaction
/// `b`, so `sup |v(t)| <= e^{C1 t} C2` with `C1 = max b` and
/// `C2 = sup |a Lap u0 + b u0 + f|`.  Integrating gives
/// `C2 (e^{C1 t} - 1) / C1`.
pub fn c0_drift_bound(p: &LinearProblem, u0: &[f64], t: f64) -> f64 {
    let lap = p.stencil.apply(u0);
    let c2 = (0..u0.len())
        .map(|i| (p.a[i] * lap[i] + p.b[i] * u0[i] + p.f[i]).abs())
        .fold(0.0_f64, f64::max);
    let c1 = max_of(p.b);
    let growth = if c1.abs() < 1e-300 {
        t
    } else {
        (c1 * t).exp_m1() / c1
    };
    c2 * growth
}

/// Energy `½ sum_i (A_i / a_i) u_i²`, the norm the operator is symmetric in.
pub fn weighted_energy(p: &LinearProblem, u: &[f64]) -> f64 {
    0.5 * comp_sum(
        u.iter()
            .enumerate()
            .map(|(i, &ui)| p.stencil.areas()[i] / p.a[i] * ui * ui),
    )
}

/// Per-step energy inequality for the implicit step `u -> v`:
/// `E(v) (1 - dt C1) <= E(u) + dt C2` with `C1 = 2 max(b) + 1` and
/// `C2 = ½ sum (A/a) f²`.  Returns `(lhs, rhs)`; callers assert
/// `lhs <= rhs` up to solver tolerance.  Nothing is proven when
/// `dt C1 >= 1` (the lhs goes nonpositive and the check is vacuous).
pub fn energy_step_bound(p: &LinearProblem, u_old: &[f64], u_new: &[f64], dt: f64) -> (f64, f64) {
    let c1 = 2.0 * max_of(p.b) + 1.0;
    let c2 = 0.5
        * comp_sum(
            p.f.iter()
                .enumerate()
                .map(|(i, &fi)| p.stencil.areas()[i] / p.a[i] * fi * fi),
        );
    let lhs = weighted_energy(p, u_new) * (1.0 - dt * c1);
    let rhs = weighted_energy(p, u_old) + dt * c2;
    (lhs, rhs)
}

/// Error of the truncated problem against the full-surface solution, for a
/// ladder of truncation levels.
#[derive(Debug, Clone, Copy)]
pub struct SkReport {
    pub k: i32,
    pub radius: f64,
    pub active_nodes: usize,
    /// `sup` over the active nodes of |truncated - full| at the final time.
    pub sup_diff: f64,
    /// `sup` over this level's active nodes of |this level - next level| at
    /// the final time; None on the last level of the ladder.
    pub sup_diff_next: Option<f64>,
}

/// Run the same linear problem on the full surface and on each truncation
/// `S_k` (disks of radius `2^-k` removed around the tips, Neumann closure),
/// and report the final-time deviation on the surviving nodes.  As `k` grows
/// the removed disks shrink and the deviations should fall toward solver
/// tolerance; that exhaustion is the evidence that the closed-surface
/// solution is the limit of the truncated ones.
#[allow(clippy::too_many_arguments)]
pub fn solve_sk_sequence(
    surface: &crate::geometry::Surface,
    a: &[f64],
    b: &[f64],
    f: &[f64],
    u0: &[f64],
    dt: f64,
    steps: usize,
    theta: f64,
    ks: &[i32],
) -> Result<Vec<SkReport>> {
    let full_problem = LinearProblem {
        stencil: surface.stencil(),
        a,
        b,
        f,
    };
    let full = run_linear(&full_problem, u0, dt, steps, theta)?;
    let mut out: Vec<SkReport> = Vec::with_capacity(ks.len());
    let mut prev: Option<(crate::operators::Truncation, Vec<f64>)> = None;
    for &k in ks {
        let tr = truncate(surface, k)?;
        let (la, lb, lf, lu) = (
            tr.restrict(a),
            tr.restrict(b),
            tr.restrict(f),
            tr.restrict(u0),
        );
        let p = LinearProblem {
            stencil: &tr.stencil,
            a: &la,
            b: &lb,
            f: &lf,
        };
        let local = run_linear(&p, &lu, dt, steps, theta)?;
        // consecutive-level gap, on the previous (coarser) active set; the
        // active sets nest as long as the ladder is increasing in k
        if let (Some((ptr, pu)), Some(last)) = (&prev, out.last_mut()) {
            let mut g = 0.0_f64;
            for (loc, &glob) in ptr.active.iter().enumerate() {
                if let Some(here) = tr.index_of[glob] {
                    g = g.max((pu[loc] - local[here]).abs());
                }
            }
            last.sup_diff_next = Some(g);
        }
        out.push(SkReport {
            k,
            radius: tr.radius,
            active_nodes: tr.active.len(),
            sup_diff: tr.sup_diff_against_full(&local, &full),
            sup_diff_next: None,
        });
        prev = Some((tr, local));
    }
    Ok(out)
}

/// Closed-form solution at time `t` of the comparison equation
/// `dh/ds = h (2h - r)`, the scalar shadow of the curvature evolution.
/// For `g = 1/h`: `dg/ds = -2 + r g`, a linear equation.  Solutions with
/// `h(0) > max(0, r/2)` escape to infinity in finite time; that surfaces as
/// `OdeBlowup` when the escape happens before `t`.
pub fn comparison_ode(h0: f64, r: f64, t: f64) -> Result<f64> {
    assert!(t >= 0.0 && t.is_finite());
    assert!(h0.is_finite() && r.is_finite());
    if h0 == 0.0 {
        return Ok(0.0);
    }
    let g0 = 1.0 / h0;
    let g_at = |s: f64| -> f64 {
        if r == 0.0 {
            g0 - 2.0 * s
        } else {
            (g0 - 2.0 / r) * (r * s).exp() + 2.0 / r
        }
    };
    let g = g_at(t);
    if h0 > 0.0 && g <= 0.0 {
        // g is monotone, so the first root is the escape time
        let t_escape = if r == 0.0 {
            g0 / 2.0
        } else {
            ((2.0 / r) / (2.0 / r - g0)).ln() / r
        };
        return Err(Error::OdeBlowup { t_escape });
    }
    Ok(1.0 / g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_flat_torus, build_football_with_flat, Surface};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn torus_mode(nx: usize, ny: usize, lx: f64, ly: f64) -> (Surface, Vec<f64>, f64) {
        let s = Surface::Tri(build_flat_torus(nx, ny, lx, ly).unwrap());
        let hx = lx / nx as f64;
        let mu = (2.0 - 2.0 * (2.0 * std::f64::consts::PI / nx as f64).cos()) / (hx * hx);
        let mode: Vec<f64> = (0..s.node_count())
            .map(|v| (2.0 * std::f64::consts::PI * (v % nx) as f64 / nx as f64).cos())
            .collect();
        (s, mode, mu)
    }

    #[test]
    fn implicit_euler_damps_an_eigenmode_exactly() {
        let (s, mode, mu) = torus_mode(16, 12, 2.0, 1.5);
        let n = s.node_count();
        let (a, b, f) = (vec![1.0; n], vec![0.0; n], vec![0.0; n]);
        let p = LinearProblem {
            stencil: s.stencil(),
            a: &a,
            b: &b,
            f: &f,
        };
        let dt = 0.01;
        let steps = 5;
        let u = run_linear(&p, &mode, dt, steps, 1.0).unwrap();
        let factor = (1.0 + dt * mu).powi(-(steps as i32));
        let err = u
            .iter()
            .zip(&mode)
            .map(|(ui, mi)| (ui - factor * mi).abs())
            .fold(0.0_f64, f64::max);
        assert!(err < 1e-9, "deviation from exact mode damping: {err:.3e}");
    }

    #[test]
    fn crank_nicolson_is_second_order_in_time() {
        // unit-size cells keep mu small so mu * dt sits in the asymptotic
        // regime instead of deep in the decayed tail
        let (s, mode, mu) = torus_mode(12, 10, 12.0, 10.0);
        let n = s.node_count();
        let (a, b, f) = (vec![1.0; n], vec![0.0; n], vec![0.0; n]);
        let p = LinearProblem {
            stencil: s.stencil(),
            a: &a,
            b: &b,
            f: &f,
        };
        let t_end = 2.0;
        let exact = (-mu * t_end).exp();
        let mut errs = Vec::new();
        for steps in [10usize, 20] {
            let u = run_linear(&p, &mode, t_end / steps as f64, steps, 0.5).unwrap();
            let err = u
                .iter()
                .zip(&mode)
                .map(|(ui, mi)| (ui - exact * mi).abs())
                .fold(0.0_f64, f64::max);
            errs.push(err);
        }
        let ratio = errs[0] / errs[1];
        assert!(
            (3.3..4.7).contains(&ratio),
            "dt-halving ratio {ratio:.2}, errors {errs:?}"
        );
    }

    #[test]
    fn constant_source_integrates_exactly() {
        let (s, _, _) = torus_mode(8, 8, 1.0, 1.0);
        let n = s.node_count();
        let a: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * (i % 3) as f64).collect();
        let (b, f) = (vec![0.0; n], vec![0.7; n]);
        let p = LinearProblem {
            stencil: s.stencil(),
            a: &a,
            b: &b,
            f: &f,
        };
        let u0 = vec![0.25; n];
        let u = run_linear(&p, &u0, 0.05, 8, 1.0).unwrap();
        for &v in &u {
            assert!((v - (0.25 + 0.4 * 0.7)).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn stiff_reaction_is_rejected() {
        let (s, mode, _) = torus_mode(6, 6, 1.0, 1.0);
        let n = s.node_count();
        let (a, f) = (vec![1.0; n], vec![0.0; n]);
        let b = vec![250.0; n];
        let p = LinearProblem {
            stencil: s.stencil(),
            a: &a,
            b: &b,
            f: &f,
        };
        let r = step_linear(&p, &mode, 0.01, 1.0, None);
        assert!(matches!(r, Err(Error::ReactionTooStiff { .. })), "{r:?}");
    }

    #[test]
    fn truncation_errors_shrink_as_the_holes_close() {
        let base = build_football_with_flat(-0.5, -0.5, 256, 1.0, 0.2).unwrap();
        let s = Surface::Radial(base.clone());
        let n = s.node_count();
        let u0: Vec<f64> = (0..n)
            .map(|i| 0.01 * (std::f64::consts::PI * base.rho(i)).cos())
            .collect();
        let (a, b, f) = (vec![1.0; n], vec![0.0; n], vec![0.0; n]);
        let reports =
            solve_sk_sequence(&s, &a, &b, &f, &u0, 1e-3, 20, 1.0, &[3, 5, 7]).unwrap();
        assert_eq!(reports.len(), 3);
        for w in reports.windows(2) {
            assert!(
                w[1].sup_diff < w[0].sup_diff,
                "k={} gave {:.3e}, k={} gave {:.3e}",
                w[0].k,
                w[0].sup_diff,
                w[1].k,
                w[1].sup_diff
            );
        }
        assert!(reports[2].sup_diff < 1e-5, "{:.3e}", reports[2].sup_diff);
    }

    #[test]
    fn comparison_ode_matches_a_step_halved_integrator() {
        // reference: classical RK4 with halving until two runs agree
        let rk4 = |h0: f64, r: f64, t: f64| -> Option<f64> {
            let rhs = |h: f64| h * (2.0 * h - r);
            let run = |steps: usize| -> Option<f64> {
                let dt = t / steps as f64;
                let mut h = h0;
                for _ in 0..steps {
                    let k1 = rhs(h);
                    let k2 = rhs(h + 0.5 * dt * k1);
                    let k3 = rhs(h + 0.5 * dt * k2);
                    let k4 = rhs(h + dt * k3);
                    h += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                    if !h.is_finite() || h.abs() > 1e12 {
                        return None;
                    }
                }
                Some(h)
            };
            let mut steps = 64;
            let mut prev = run(steps)?;
            for _ in 0..16 {
                steps *= 2;
                let next = run(steps)?;
                if (next - prev).abs() <= 1e-9 * (1.0 + next.abs()) {
                    return Some(next);
                }
                prev = next;
            }
            Some(prev)
        };

        // note: with r < 0 every h0 > 0 sits above the unstable equilibrium
        // r / 2 and escapes, so the bounded negative-r cases start at h0 <= 0
        for &(h0, r, t) in &[
            (-0.5, -2.0, 1.0),
            (-1.0, -2.0, 2.0),
            (0.3, 1.0, 1.5),
            (-0.2, 0.0, 3.0),
            (0.1, 0.0, 2.0),
            (0.4, 2.0, 0.5),
        ] {
            let closed = comparison_ode(h0, r, t).unwrap();
            let reference = rk4(h0, r, t).expect("reference escaped unexpectedly");
            assert!(
                (closed - reference).abs() < 1e-7 * (1.0 + reference.abs()),
                "(h0={h0}, r={r}, t={t}): closed {closed} vs rk4 {reference}"
            );
        }

        // blowup: h0 above the unstable equilibrium r/2
        let r = comparison_ode(2.0, 1.0, 3.0);
        match r {
            Err(Error::OdeBlowup { t_escape }) => {
                assert!(t_escape > 0.0 && t_escape < 3.0);
                assert!(rk4(2.0, 1.0, t_escape * 1.05).is_none());
            }
            other => panic!("expected blowup, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn implicit_steps_respect_the_max_principle(seed in 0u64..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (s, _, _) = torus_mode(7, 6, 1.0, 1.0);
            let n = s.node_count();
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..3.0)).collect();
            let (b, f) = (vec![0.0; n], vec![0.0; n]);
            let u0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p = LinearProblem { stencil: s.stencil(), a: &a, b: &b, f: &f };
            let u = step_linear(&p, &u0, rng.gen_range(0.001..0.5), 1.0, None).unwrap();
            let (lo, hi) = (crate::util::min_of(&u0), crate::util::max_of(&u0));
            for &v in &u {
                prop_assert!(v >= lo - 1e-8 && v <= hi + 1e-8, "{v} outside [{lo}, {hi}]");
            }
        }

        #[test]
        fn drift_and_energy_bounds_hold(seed in 0u64..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (s, _, _) = torus_mode(6, 5, 1.0, 1.2);
            let n = s.node_count();
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let u0: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.3..0.3)).collect();
            let p = LinearProblem { stencil: s.stencil(), a: &a, b: &b, f: &f };
            let dt = 0.01;
            let steps = 20;
            let mut u = u0.clone();
            for _ in 0..steps {
                let next = step_linear(&p, &u, dt, 1.0, None).unwrap();
                let (lhs, rhs) = energy_step_bound(&p, &u, &next, dt);
                prop_assert!(lhs <= rhs * (1.0 + 1e-8) + 1e-12, "energy step: {lhs} vs {rhs}");
                u = next;
            }
            let t = dt * steps as f64;
            let drift = u.iter().zip(&u0).map(|(x, y)| (x - y).abs()).fold(0.0_f64, f64::max);
            // implicit-Euler amplification exceeds e^{C1 t} by O(dt), hence the headroom
            let bound = c0_drift_bound(&p, &u0, t);
            prop_assert!(drift <= bound * 1.1 + 1e-9, "drift {drift} vs bound {bound}");
        }
    }
}
