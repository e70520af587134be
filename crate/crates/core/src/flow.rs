//! The normalized conformal flow `du/dt = e^{-2u} Lap u + r/2 - e^{-2u} Ktilde`
//! on a fixed background cone surface, stepped semi-implicitly: the diffusion
//! coefficient `a = e^{-2u}` freezes at the step start, the Laplacian goes
//! implicit, and the normalization `r = 4 pi chi_tilde / V(0)` is a constant
//! fixed at initialization.
//!
//! Two discrete identities hold exactly along every run and the log records
//! their residuals: total curvature `sum A_i (Ktilde_i - Lap u_i)` never
//! moves (zero row sums), and the volume is conserved up to O(dt) per unit
//! time because its continuous-time derivative vanishes identically.

use std::sync::Arc;

use crate::diagnostics::{gauss_curvature, PotentialTrack};
use crate::geometry::Surface;
use crate::linear_parabolic::{step_linear, LinearProblem};
use crate::operators::gradient_magnitude_sq;
use crate::util::{comp_sum, sup_diff};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct FlowParams {
    /// Target time step; halved transiently when a step moves `u` too far.
    pub dt: f64,
    /// Per-step sup-norm change of `u` that triggers halving.
    pub max_change: f64,
    /// March the potential function alongside the flow.
    pub track_potential: bool,
    /// Log every n-th accepted step (the final state is always logged).
    pub sample_stride: usize,
    /// Rescale `u` after each step so the volume returns to `V(0)` exactly.
    /// Off by default: the drift is itself a convergence diagnostic.
    pub renormalize_volume: bool,
    /// Declare blowup when `sup |K|` exceeds this scale times `1 + |r|`.
    /// The default sits far above every constant-curvature target, so a
    /// trip is unambiguous.
    pub blowup_threshold: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            dt: 1e-3,
            max_change: 0.1,
            track_potential: true,
            sample_stride: 1,
            renormalize_volume: false,
            blowup_threshold: 1e6,
        }
    }
}

impl FlowParams {
    fn k_cap(&self, r: f64) -> f64 {
        self.blowup_threshold * (1.0 + r.abs())
    }
}

/// One logged instant.  Potential columns are NaN when tracking is off.
#[derive(Debug, Clone, Copy)]
pub struct Sample {
    pub t: f64,
    pub volume: f64,
    /// `integral of K dV - 2 pi chi_tilde`: exact-conservation residual.
    pub gb_residual: f64,
    pub sup_k: f64,
    pub inf_k: f64,
    pub sup_r_minus_r: f64,
    pub sup_h: f64,
    pub sup_gradf_sq: f64,
    pub energy_u: f64,
    /// `integral of (Lap u)^2 dA`, a background H2 proxy.
    pub energy_lap_u: f64,
    pub sup_dudt: f64,
    pub potential_residual: f64,
    pub dt_used: f64,
}

impl Sample {
    pub const CSV_HEADER: &'static str = "t,volume,gb_residual,sup_K,inf_K,sup_R_minus_r,\
         sup_H,sup_gradf2,energy_u,energy_lap_u,sup_dudt,potential_identity_residual,dt_used";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.t,
            self.volume,
            self.gb_residual,
            self.sup_k,
            self.inf_k,
            self.sup_r_minus_r,
            self.sup_h,
            self.sup_gradf_sq,
            self.energy_u,
            self.energy_lap_u,
            self.sup_dudt,
            self.potential_residual,
            self.dt_used,
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunLog {
    pub samples: Vec<Sample>,
}

impl RunLog {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn column(&self, pick: impl Fn(&Sample) -> f64) -> Vec<f64> {
        self.samples.iter().map(pick).collect()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }
}

#[derive(Debug, Clone, Copy)]
pub enum StopRule {
    AtTime(f64),
    /// Stop when `sup |du/dt| = sup |K - r/2|` drops under `tol`; give up at
    /// `t_max`.
    Steady { tol: f64, t_max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    TimeReached,
    SteadyState,
    /// A `Steady` rule ran out its time cap without settling.
    TimeCapped,
    /// Curvature crossed the blowup threshold; the log keeps the last state
    /// before the trip.  Expected on positive-total-curvature runs.
    Blowup,
}

#[derive(Debug, Clone)]
pub struct FlowState {
    surface: Arc<Surface>,
    params: FlowParams,
    u: Vec<f64>,
    t: f64,
    r: f64,
    v0: f64,
    /// Curvature of the current state, refreshed after every accepted step.
    k: Vec<f64>,
    dt_next: f64,
    potential: Option<PotentialTrack>,
    u0: Vec<f64>,
    steps_accepted: usize,
}

pub fn init_flow(surface: Arc<Surface>, u0: Vec<f64>, params: FlowParams) -> Result<FlowState> {
    let n = surface.node_count();
    if u0.len() != n {
        return Err(Error::InvalidArgument(format!(
            "initial data has {} entries for {n} nodes",
            u0.len()
        )));
    }
    if let Some(i) = u0.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: format!("initial conformal factor, node {i}"),
        });
    }
    if !(params.dt > 0.0 && params.dt.is_finite()) || params.sample_stride == 0 {
        return Err(Error::InvalidArgument(
            "flow parameters need dt > 0 and sample_stride >= 1".into(),
        ));
    }
    let v0 = comp_sum(
        surface
            .areas()
            .iter()
            .zip(&u0)
            .map(|(a, ui)| a * (2.0 * ui).exp()),
    );
    let r = 4.0 * std::f64::consts::PI * surface.chi_tilde() / v0;
    let k = gauss_curvature(&surface, &u0);
    let sup_k = k.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if sup_k > params.k_cap(r) {
        return Err(Error::Blowup {
            t: 0.0,
            sup_k,
            threshold: params.k_cap(r),
        });
    }
    let potential = if params.track_potential {
        Some(PotentialTrack::init(&surface, &u0, r)?)
    } else {
        None
    };
    Ok(FlowState {
        surface,
        params,
        u: u0.clone(),
        t: 0.0,
        r,
        v0,
        k,
        dt_next: params.dt,
        potential,
        u0,
        steps_accepted: 0,
    })
}

impl FlowState {
    pub fn surface(&self) -> &Arc<Surface> {
        &self.surface
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn u_initial(&self) -> &[f64] {
        &self.u0
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// The fixed normalization constant `4 pi chi_tilde / V(0)`.
    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }

    pub fn volume(&self) -> f64 {
        comp_sum(
            self.surface
                .areas()
                .iter()
                .zip(&self.u)
                .map(|(a, ui)| a * (2.0 * ui).exp()),
        )
    }

    pub fn curvature(&self) -> &[f64] {
        &self.k
    }

    pub fn potential(&self) -> Option<&PotentialTrack> {
        self.potential.as_ref()
    }

    /// `sup |du/dt|` of the current state: the flow writes `du/dt = r/2 - K`.
    pub fn sup_dudt(&self) -> f64 {
        self.k
            .iter()
            .fold(0.0_f64, |m, &ki| m.max((self.r / 2.0 - ki).abs()))
    }

    /// Shift `u` by a constant so the volume returns to `V(0)`; the cached
    /// curvature rescales exactly.  The potential is left alone, so heavy use
    /// shows up in the identity residual.
    pub fn renormalize_volume(&mut self) {
        let c = 0.5 * (self.v0 / self.volume()).ln();
        for ui in self.u.iter_mut() {
            *ui += c;
        }
        let scale = (-2.0 * c).exp();
        for ki in self.k.iter_mut() {
            *ki *= scale;
        }
    }

    /// Advance one accepted step of size at most `dt_cap`, halving on
    /// overlarge moves.  Returns the step actually taken.
    pub fn step(&mut self, dt_cap: f64) -> Result<f64> {
        let n = self.surface.node_count();
        let mut dt = self.dt_next.min(dt_cap);
        let dt_floor = self.params.dt * 2.0_f64.powi(-26);
        let a: Vec<f64> = self.u.iter().map(|ui| (-2.0 * ui).exp()).collect();
        let b = vec![0.0; n];
        let src: Vec<f64> = a
            .iter()
            .zip(self.surface.ktilde())
            .map(|(ai, kt)| self.r / 2.0 - ai * kt)
            .collect();
        let p = LinearProblem {
            stencil: self.surface.stencil(),
            a: &a,
            b: &b,
            f: &src,
        };
        loop {
            if dt < dt_floor {
                return Err(Error::StepsizeCollapse { t: self.t, dt });
            }
            let v = step_linear(&p, &self.u, dt, 1.0, None)?;
            let change = sup_diff(&v, &self.u);
            if change > self.params.max_change {
                dt *= 0.5;
                continue;
            }
            if let Some(track) = &mut self.potential {
                track.step(&self.surface, &a, self.r, dt)?;
            }
            self.u = v;
            self.t += dt;
            self.steps_accepted += 1;
            if self.params.renormalize_volume {
                self.k = gauss_curvature(&self.surface, &self.u);
                self.renormalize_volume();
            } else {
                self.k = gauss_curvature(&self.surface, &self.u);
            }
            let sup_k = self.k.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            let threshold = self.params.k_cap(self.r);
            if sup_k > threshold {
                return Err(Error::Blowup {
                    t: self.t,
                    sup_k,
                    threshold,
                });
            }
            // recover toward the target step only after comfortable moves
            self.dt_next = if change < 0.25 * self.params.max_change {
                (dt * 2.0).min(self.params.dt)
            } else {
                dt
            };
            return Ok(dt);
        }
    }

    fn push_sample(&self, log: &mut RunLog, dt_used: f64) {
        let areas = self.surface.areas();
        let two_pi_chi = 2.0 * std::f64::consts::PI * self.surface.chi_tilde();
        // A_i e^{2u} K_i = A_i (Ktilde_i - Lap u_i): the exactly conserved sum
        let gb = comp_sum(
            (0..self.u.len()).map(|i| areas[i] * (2.0 * self.u[i]).exp() * self.k[i]),
        ) - two_pi_chi;
        let sup_k = self.k.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let inf_k = self.k.iter().fold(f64::INFINITY, |m, &x| m.min(x));
        let sup_rr = self
            .k
            .iter()
            .fold(0.0_f64, |m, &ki| m.max((2.0 * ki - self.r).abs()));
        // Lap u = Ktilde - K e^{2u}, so the H2 proxy needs no extra apply
        let energy_lap = comp_sum((0..self.u.len()).map(|i| {
            let lap = self.surface.ktilde()[i] - self.k[i] * (2.0 * self.u[i]).exp();
            areas[i] * lap * lap
        }));
        let (sup_h, sup_g, pot_res) = match &self.potential {
            Some(track) => {
                let g = gradient_magnitude_sq(&self.surface, track.f(), Some(&self.u));
                let mut sup_h = f64::NEG_INFINITY;
                let mut sup_g = 0.0_f64;
                for (i, &gi) in g.iter().enumerate() {
                    sup_h = sup_h.max(2.0 * self.k[i] - self.r + gi);
                    sup_g = sup_g.max(gi);
                }
                (
                    sup_h,
                    sup_g,
                    track.identity_residual(&self.surface, &self.u, self.r),
                )
            }
            None => (f64::NAN, f64::NAN, f64::NAN),
        };
        log.samples.push(Sample {
            t: self.t,
            volume: self.volume(),
            gb_residual: gb,
            sup_k,
            inf_k,
            sup_r_minus_r: sup_rr,
            sup_h,
            sup_gradf_sq: sup_g,
            energy_u: self.surface.stencil().dirichlet_energy(&self.u),
            energy_lap_u: energy_lap,
            sup_dudt: self.sup_dudt(),
            potential_residual: pot_res,
            dt_used,
        });
    }

    pub fn run_until(&mut self, rule: StopRule) -> Result<(RunLog, StopReason)> {
        let mut log = RunLog::default();
        self.push_sample(&mut log, 0.0);
        let mut last_logged = self.steps_accepted;
        let reason = loop {
            let cap = match rule {
                StopRule::AtTime(t_end) => {
                    if self.t >= t_end - 1e-12 * t_end.abs().max(1.0) {
                        break StopReason::TimeReached;
                    }
                    t_end - self.t
                }
                StopRule::Steady { tol, t_max } => {
                    if self.sup_dudt() < tol {
                        break StopReason::SteadyState;
                    }
                    if self.t >= t_max - 1e-12 * t_max.abs().max(1.0) {
                        break StopReason::TimeCapped;
                    }
                    t_max - self.t
                }
            };
            let dt_used = match self.step(cap) {
                Ok(dt) => dt,
                // the state already advanced when the trip fired, so log it
                // and report the trip as an outcome, not an error
                Err(Error::Blowup { .. }) => {
                    self.push_sample(&mut log, self.dt_next);
                    return Ok((log, StopReason::Blowup));
                }
                Err(e) => return Err(e),
            };
            if self.steps_accepted % self.params.sample_stride == 0 {
                self.push_sample(&mut log, dt_used);
                last_logged = self.steps_accepted;
            }
        };
        if last_logged != self.steps_accepted {
            self.push_sample(&mut log, self.dt_next);
        }
        Ok((log, reason))
    }
}

/// Flow two nearby initial states to `t_end` and report the sup gap at the
/// start and the end.  Continuous uniqueness says the gap cannot jump; the
/// discrete flow inherits that up to O(dt).
pub fn uniqueness_probe(
    surface: &Arc<Surface>,
    u0: &[f64],
    delta: &[f64],
    params: FlowParams,
    t_end: f64,
) -> Result<(f64, f64)> {
    let perturbed: Vec<f64> = u0.iter().zip(delta).map(|(a, d)| a + d).collect();
    let mut s1 = init_flow(Arc::clone(surface), u0.to_vec(), params)?;
    let mut s2 = init_flow(Arc::clone(surface), perturbed, params)?;
    let g0 = sup_diff(s1.u(), s2.u());
    s1.run_until(StopRule::AtTime(t_end))?;
    s2.run_until(StopRule::AtTime(t_end))?;
    Ok((g0, sup_diff(s1.u(), s2.u())))
}

/// The local fixed-point construction of the flow: iterate the linear
/// parabolic solve with coefficients frozen along the previous iterate's
/// trajectory until the whole trajectory stops moving.
#[derive(Debug, Clone)]
pub struct PicardReport {
    pub horizon: f64,
    pub steps: usize,
    /// Trajectory sup-gaps between consecutive iterates.
    pub gaps: Vec<f64>,
    /// States at `0, dt, ..., steps * dt` of the converged iterate.
    pub trajectory: Vec<Vec<f64>>,
}

pub fn picard_local_solve(
    surface: &Surface,
    u0: &[f64],
    dt: f64,
    steps: usize,
    tol: f64,
) -> Result<PicardReport> {
    assert!(steps >= 1 && dt > 0.0 && tol > 0.0);
    let n = surface.node_count();
    assert_eq!(u0.len(), n);
    let v0 = comp_sum(
        surface
            .areas()
            .iter()
            .zip(u0)
            .map(|(a, ui)| a * (2.0 * ui).exp()),
    );
    let r = 4.0 * std::f64::consts::PI * surface.chi_tilde() / v0;
    let horizon = dt * steps as f64;

    let mut prev: Vec<Vec<f64>> = vec![u0.to_vec(); steps + 1];
    let mut gaps: Vec<f64> = Vec::new();
    let b = vec![0.0; n];
    for _ in 0..60 {
        let mut next: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
        next.push(u0.to_vec());
        for s in 0..steps {
            let a: Vec<f64> = prev[s].iter().map(|ui| (-2.0 * ui).exp()).collect();
            let src: Vec<f64> = a
                .iter()
                .zip(surface.ktilde())
                .map(|(ai, kt)| r / 2.0 - ai * kt)
                .collect();
            let p = LinearProblem {
                stencil: surface.stencil(),
                a: &a,
                b: &b,
                f: &src,
            };
            let state = step_linear(&p, &next[s], dt, 1.0, Some(&prev[s + 1]))?;
            next.push(state);
        }
        let gap = prev
            .iter()
            .zip(&next)
            .map(|(p, q)| sup_diff(p, q))
            .fold(0.0_f64, f64::max);
        gaps.push(gap);
        prev = next;
        if gap < tol {
            return Ok(PicardReport {
                horizon,
                steps,
                gaps,
                trajectory: prev,
            });
        }
        let m = gaps.len();
        if m >= 4 && (m - 3..m).all(|i| gaps[i] >= gaps[i - 1]) {
            return Err(Error::NonContraction {
                horizon,
                ratios: gaps
                    .windows(2)
                    .rev()
                    .take(3)
                    .map(|w| w[1] / w[0])
                    .collect(),
            });
        }
    }
    Err(Error::NonContraction {
        horizon,
        ratios: gaps
            .windows(2)
            .rev()
            .take(3)
            .map(|w| w[1] / w[0])
            .collect(),
    })
}

/// Shrink the horizon until the fixed-point iteration contracts; the largest
/// horizon tried that works comes back with its report.
pub fn picard_horizon_search(
    surface: &Surface,
    u0: &[f64],
    dt: f64,
    t_start: f64,
    tol: f64,
) -> Result<(f64, PicardReport)> {
    let mut horizon = t_start;
    loop {
        let steps = ((horizon / dt).round() as usize).max(1);
        match picard_local_solve(surface, u0, dt, steps, tol) {
            Ok(rep) => return Ok((dt * steps as f64, rep)),
            Err(Error::NonContraction { .. }) if steps > 1 => {
                horizon *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
}
