//! Run artifacts: the machine-readable summary with its invariant verdicts,
//! plus the CSV tables and the mesh snapshot.
//!
//! Every invariant the solver is supposed to maintain gets a verdict in
//! `summary.json`, and a verdict is never absent: when a check does not
//! apply to the run at hand it says so explicitly instead of disappearing.
//! All numbers in the files are written with 17 significant digits so that
//! a re-run with the same config reproduces them byte for byte.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use coneflow::diagnostics::{exponential_rate, h_bound_applies};
use coneflow::flow::{FlowState, RunLog, Sample, StopReason};
use coneflow::geometry::{mesh_io, Surface};
use coneflow::linear_parabolic::comparison_ode;
use serde::Serialize;

/// Scale for the conserved-integral residual: `1e-10 (1 + |2 pi chi|)`.
const GB_SCALE: f64 = 1e-10;
/// Volume drift cap per unit time, in units of dt (first-order scheme).
const VOLUME_DRIFT_SCALE: f64 = 10.0;
/// Slack for the pointwise curvature barrier, times `1 + |barrier|`.
const BARRIER_TOL: f64 = 1e-2;
/// Slack for the `sup H` envelope, times `1 + |sup H(0)|`.
const H_ENVELOPE_TOL: f64 = 1e-2;
/// Potential identity residual cap at dt = 1e-3; scales linearly above.
const POTENTIAL_TOL: f64 = 5e-2;
const POTENTIAL_REF_DT: f64 = 1e-3;
/// Energies may grow to this multiple of their initial value.
const ENERGY_CAP: f64 = 10.0;
/// Initial energies below this are treated as zero; a multiplicative cap
/// against zero certifies nothing.
const ENERGY_FLOOR: f64 = 1e-14;
/// Wiggle allowed in the post-transient decay of `sup |R - r|`.
const DECAY_SLACK_SCALE: f64 = 1e-9;

#[derive(Serialize)]
pub struct Verdict {
    /// "pass", "fail", or "not_applicable".
    pub status: &'static str,
    /// Worst observed value of whatever the note says was measured.
    pub value: Option<f64>,
    pub note: String,
}

impl Verdict {
    fn judged(pass: bool, value: f64, note: String) -> Verdict {
        Verdict {
            status: if pass { "pass" } else { "fail" },
            value: Some(value).filter(|v| v.is_finite()),
            note,
        }
    }

    fn not_applicable(note: String) -> Verdict {
        Verdict {
            status: "not_applicable",
            value: None,
            note,
        }
    }
}

#[derive(Serialize)]
pub struct Verdicts {
    pub gauss_bonnet: Verdict,
    pub volume_drift: Verdict,
    pub lower_curvature_barrier: Verdict,
    pub energy_bounded: Verdict,
    pub h_envelope: Verdict,
    pub potential_identity: Verdict,
    pub negativity_preserved: Verdict,
}

#[derive(Serialize)]
pub struct Summary {
    pub scenario: String,
    pub nodes: usize,
    pub chi: f64,
    pub r: f64,
    pub termination: &'static str,
    pub t_final: f64,
    pub samples: usize,
    pub volume_initial: f64,
    pub volume_final: f64,
    pub final_sup_abs_k: f64,
    pub final_sup_r_minus_r: f64,
    pub final_sup_dudt: f64,
    /// Fitted exponential rate of `sup |R - r|` over the final half of the
    /// run; reported only when the fit is negative with `R^2 >= 0.99`.
    pub decay_rate: Option<f64>,
    pub decay_fit_r2: Option<f64>,
    pub claim_scope: &'static str,
    pub verdicts: Verdicts,
}

pub fn reason_str(reason: StopReason) -> &'static str {
    match reason {
        StopReason::TimeReached => "time-reached",
        StopReason::SteadyState => "steady-state",
        StopReason::TimeCapped => "time-capped",
        StopReason::Blowup => "blowup",
    }
}

pub fn build_summary(
    name: &str,
    surface: &Surface,
    log: &RunLog,
    reason: StopReason,
    r: f64,
    dt: f64,
    tracked: bool,
) -> Summary {
    let chi = surface.chi_tilde();
    let first = &log.samples[0];
    let last = log.last().expect("a run log always has the entry sample");

    let (decay_rate, decay_fit_r2) = fit_decay(log);
    let claim_scope = if chi < -1e-12 {
        "constant curvature (chi < 0)"
    } else if chi > 1e-12 {
        "no convergence claim (chi > 0)"
    } else {
        "flat limit (chi = 0)"
    };

    Summary {
        scenario: name.to_string(),
        nodes: surface.node_count(),
        chi,
        r,
        termination: reason_str(reason),
        t_final: last.t,
        samples: log.samples.len(),
        volume_initial: first.volume,
        volume_final: last.volume,
        final_sup_abs_k: last.sup_k.abs().max(last.inf_k.abs()),
        final_sup_r_minus_r: last.sup_r_minus_r,
        final_sup_dudt: last.sup_dudt,
        decay_rate,
        decay_fit_r2,
        claim_scope,
        verdicts: Verdicts {
            gauss_bonnet: gauss_bonnet(log, chi),
            volume_drift: volume_drift(log, dt),
            lower_curvature_barrier: lower_curvature_barrier(log, r),
            energy_bounded: energy_bounded(log),
            h_envelope: h_envelope(log, surface, r, tracked),
            potential_identity: potential_identity(log, dt, tracked),
            negativity_preserved: negativity_preserved(log, r),
        },
    }
}

/// Rate of `sup |R - r|` over the final half of the samples.  Both fields
/// stay unset unless the fit is a convincing decay.
fn fit_decay(log: &RunLog) -> (Option<f64>, Option<f64>) {
    let n = log.samples.len();
    if n < 8 {
        return (None, None);
    }
    let ts = log.times();
    let ys = log.column(|s| s.sup_r_minus_r);
    match exponential_rate(&ts[n / 2..], &ys[n / 2..], 1e-16) {
        Some((rate, r2)) if rate < 0.0 && r2 >= 0.99 => (Some(rate), Some(r2)),
        _ => (None, None),
    }
}

fn gauss_bonnet(log: &RunLog, chi: f64) -> Verdict {
    let allow = GB_SCALE * (1.0 + (2.0 * std::f64::consts::PI * chi).abs());
    let worst = log
        .samples
        .iter()
        .map(|s| s.gb_residual.abs())
        .fold(0.0_f64, f64::max);
    Verdict::judged(
        worst <= allow,
        worst,
        format!("max |integral K dV - 2 pi chi| = {worst:.3e}, allowed {allow:.3e}"),
    )
}

fn volume_drift(log: &RunLog, dt: f64) -> Verdict {
    let v0 = log.samples[0].volume;
    let worst = log
        .samples
        .iter()
        .map(|s| (s.volume / v0 - 1.0).abs())
        .fold(0.0_f64, f64::max);
    let t_final = log.last().unwrap().t;
    let cap = VOLUME_DRIFT_SCALE * dt * (1.0 + t_final);
    Verdict::judged(
        worst <= cap,
        worst,
        format!("max relative volume drift {worst:.3e}, first-order cap {cap:.3e}"),
    )
}

/// `inf K` must stay above the scalar comparison solution started from the
/// initial minimum.  Samples after the comparison solution escapes to
/// infinity (possible only when it starts positive) are unconstrained.
fn lower_curvature_barrier(log: &RunLog, r: f64) -> Verdict {
    let h0 = log.samples[0].inf_k;
    let mut min_margin = f64::INFINITY;
    let mut checked = 0usize;
    for s in &log.samples {
        match comparison_ode(h0, r, s.t) {
            Ok(h) => {
                min_margin = min_margin.min(s.inf_k - h + BARRIER_TOL * (1.0 + h.abs()));
                checked += 1;
            }
            Err(_) => break,
        }
    }
    Verdict::judged(
        min_margin >= 0.0,
        min_margin,
        format!("min margin of inf K over the barrier across {checked} samples; started at {h0:.3e}"),
    )
}

fn energy_bounded(log: &RunLog) -> Verdict {
    let e0_u = log.samples[0].energy_u;
    let e0_l = log.samples[0].energy_lap_u;
    if e0_u < ENERGY_FLOOR && e0_l < ENERGY_FLOOR {
        return Verdict::not_applicable(
            "initial energies are zero; a multiplicative cap certifies nothing".to_string(),
        );
    }
    let ratio = |e0: f64, peak: f64| if e0 < ENERGY_FLOOR { None } else { Some(peak / e0) };
    let peak_u = log.samples.iter().map(|s| s.energy_u).fold(0.0_f64, f64::max);
    let peak_l = log
        .samples
        .iter()
        .map(|s| s.energy_lap_u)
        .fold(0.0_f64, f64::max);
    let checked = [ratio(e0_u, peak_u), ratio(e0_l, peak_l)];
    let worst = checked.iter().flatten().fold(0.0_f64, |a, &b| a.max(b));
    let mut note = format!("max energy over its initial value {worst:.3e}, cap {ENERGY_CAP}");
    if checked[0].is_none() {
        note.push_str("; gradient energy skipped (initial value at zero)");
    }
    if checked[1].is_none() {
        note.push_str("; laplacian energy skipped (initial value at zero)");
    }
    Verdict::judged(worst <= ENERGY_CAP, worst, note)
}

fn h_envelope(log: &RunLog, surface: &Surface, r: f64, tracked: bool) -> Verdict {
    if !tracked {
        return Verdict::not_applicable(
            "potential tracking is off, so sup H is not logged".to_string(),
        );
    }
    if !h_bound_applies(surface) {
        return Verdict::not_applicable(
            "a cone of angle 2 pi or more is present; the pointwise sup H comparison does not apply"
                .to_string(),
        );
    }
    let h0 = log.samples[0].sup_h;
    let slack = H_ENVELOPE_TOL * (1.0 + h0.abs());
    let min_margin = log
        .samples
        .iter()
        .map(|s| (r * s.t).exp() * h0 + slack - s.sup_h)
        .fold(f64::INFINITY, f64::min);
    Verdict::judged(
        min_margin >= 0.0,
        min_margin,
        format!("min margin of sup H under e^(r t) sup H(0) + slack; started at {h0:.3e}"),
    )
}

fn potential_identity(log: &RunLog, dt: f64, tracked: bool) -> Verdict {
    if !tracked {
        return Verdict::not_applicable("potential tracking is off".to_string());
    }
    let worst = log
        .samples
        .iter()
        .map(|s| s.potential_residual)
        .fold(0.0_f64, f64::max);
    let cap = POTENTIAL_TOL * (dt / POTENTIAL_REF_DT).max(1.0);
    Verdict::judged(
        worst <= cap,
        worst,
        format!("max |conformal Lap f - (R - r)| = {worst:.3e}, cap {cap:.3e}"),
    )
}

/// When the initial curvature is negative everywhere it must stay negative,
/// and `sup |R - r|` must decay monotonically once the initial transient
/// (first halving of its starting value) has passed.
fn negativity_preserved(log: &RunLog, r: f64) -> Verdict {
    let k0 = log.samples[0].sup_k;
    if k0 >= 0.0 {
        return Verdict::not_applicable(format!(
            "initial sup K = {k0:.3e} is not negative; nothing to preserve"
        ));
    }
    let all_negative = log.samples.iter().all(|s| s.sup_k < 0.0);
    let ys = log.column(|s| s.sup_r_minus_r);
    let slack = DECAY_SLACK_SCALE * (1.0 + r.abs());
    let settle = if ys[0] <= slack {
        Some(0)
    } else {
        ys.iter().position(|&y| y <= 0.5 * ys[0])
    };
    match settle {
        Some(start) if start + 1 < ys.len() => {
            let worst_rise = ys[start..]
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::NEG_INFINITY, f64::max);
            Verdict::judged(
                all_negative && worst_rise <= slack,
                worst_rise,
                format!(
                    "sup K stayed negative: {all_negative}; worst rise of sup |R - r| after the transient {worst_rise:.3e}, slack {slack:.3e}"
                ),
            )
        }
        _ => Verdict::judged(
            all_negative,
            k0,
            format!(
                "sup K stayed negative: {all_negative}; sup |R - r| still in its transient at the final sample"
            ),
        ),
    }
}

/// Write the full artifact set; returns the paths in write order.
pub fn write_run_artifacts(
    dir: &Path,
    summary: &Summary,
    st: &FlowState,
    log: &RunLog,
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let mut ts = String::with_capacity(64 * (log.samples.len() + 1));
    ts.push_str(Sample::CSV_HEADER);
    ts.push('\n');
    for s in &log.samples {
        ts.push_str(&s.csv_row());
        ts.push('\n');
    }
    written.push(write_file(dir, "timeseries.csv", &ts)?);

    let u = st.u();
    let k = st.curvature();
    let f = st.potential().map(|p| p.f());
    let mut state = String::from("node,u,K,R,f\n");
    for i in 0..u.len() {
        let fi = f.map_or(f64::NAN, |xs| xs[i]);
        state.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            i,
            u[i],
            k[i],
            2.0 * k[i],
            fi
        ));
    }
    written.push(write_file(dir, "final_state.csv", &state)?);

    match st.surface().as_ref() {
        Surface::Tri(t) => {
            let text = mesh_io::write_tri_mesh(t).map_err(io::Error::other)?;
            written.push(write_file(dir, "mesh.conemesh", &text)?);
        }
        Surface::Radial(rs) => {
            let areas = st.surface().areas();
            let kt = st.surface().ktilde();
            let mut prof = String::from("node,rho,area,Ktilde\n");
            for i in 0..u.len() {
                prof.push_str(&format!(
                    "{},{:.16e},{:.16e},{:.16e}\n",
                    i,
                    rs.rho(i),
                    areas[i],
                    kt[i]
                ));
            }
            written.push(write_file(dir, "profile.csv", &prof)?);
        }
    }

    let json = serde_json::to_string_pretty(summary).map_err(io::Error::other)?;
    written.push(write_file(dir, "summary.json", &format!("{json}\n"))?);
    Ok(written)
}

fn write_file(dir: &Path, name: &str, text: &str) -> io::Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, text)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: f64, sup_k: f64, sup_r_minus_r: f64) -> Sample {
        Sample {
            t,
            volume: 1.0,
            gb_residual: 0.0,
            sup_k,
            inf_k: -1.0,
            sup_r_minus_r,
            sup_h: 0.0,
            sup_gradf_sq: 0.0,
            energy_u: 1.0,
            energy_lap_u: 1.0,
            sup_dudt: 0.0,
            potential_residual: 0.0,
            dt_used: 1e-3,
        }
    }

    fn log_of(samples: Vec<Sample>) -> RunLog {
        RunLog { samples }
    }

    #[test]
    fn negativity_passes_on_monotone_decay() {
        let log = log_of(vec![
            sample(0.0, -0.5, 1.0),
            sample(0.1, -0.6, 0.7),
            sample(0.2, -0.7, 0.4),
            sample(0.3, -0.8, 0.2),
            sample(0.4, -0.9, 0.1),
        ]);
        let v = negativity_preserved(&log, -2.0);
        assert_eq!(v.status, "pass", "{}", v.note);
    }

    #[test]
    fn negativity_fails_on_a_post_transient_rise() {
        let log = log_of(vec![
            sample(0.0, -0.5, 1.0),
            sample(0.1, -0.6, 0.4),
            sample(0.2, -0.7, 0.5),
            sample(0.3, -0.8, 0.3),
        ]);
        assert_eq!(negativity_preserved(&log, -2.0).status, "fail");
    }

    #[test]
    fn negativity_fails_when_the_sign_is_lost() {
        let log = log_of(vec![
            sample(0.0, -0.5, 1.0),
            sample(0.1, 0.1, 0.4),
            sample(0.2, -0.7, 0.3),
        ]);
        assert_eq!(negativity_preserved(&log, -2.0).status, "fail");
    }

    #[test]
    fn negativity_does_not_apply_from_nonnegative_data() {
        let log = log_of(vec![sample(0.0, 0.3, 1.0), sample(0.1, 0.2, 0.5)]);
        assert_eq!(negativity_preserved(&log, 0.0).status, "not_applicable");
    }

    #[test]
    fn barrier_stops_checking_once_the_scalar_solution_escapes() {
        // inf K starts at 1 with r = 0, so the scalar solution reaches
        // infinity at t = 0.5; the sample beyond that is unconstrained.
        let mut s0 = sample(0.0, 1.0, 1.0);
        s0.inf_k = 1.0;
        let mut s1 = sample(0.4, 1.0, 1.0);
        s1.inf_k = 6.0;
        let mut s2 = sample(10.0, 1.0, 1.0);
        s2.inf_k = -5.0;
        let v = lower_curvature_barrier(&log_of(vec![s0, s1, s2]), 0.0);
        assert_eq!(v.status, "pass", "{}", v.note);
        assert!(v.note.contains("2 samples"), "{}", v.note);
    }

    #[test]
    fn barrier_catches_a_dip_below_the_scalar_solution() {
        // r < 0 from inf K = -1: the solution rises toward r/2; a state
        // pinned far below it must fail.
        let mut s1 = sample(2.0, -0.5, 1.0);
        s1.inf_k = -40.0;
        let v = lower_curvature_barrier(&log_of(vec![sample(0.0, -0.5, 1.0), s1]), -2.0);
        assert_eq!(v.status, "fail", "{}", v.note);
    }

    #[test]
    fn energy_cap_is_not_applied_against_zero() {
        let mut s0 = sample(0.0, -0.5, 1.0);
        s0.energy_u = 0.0;
        s0.energy_lap_u = 0.0;
        let mut s1 = sample(0.1, -0.5, 0.5);
        s1.energy_u = 3.0;
        s1.energy_lap_u = 9.0;
        assert_eq!(energy_bounded(&log_of(vec![s0, s1])).status, "not_applicable");
    }

    #[test]
    fn volume_drift_fails_beyond_the_first_order_cap() {
        let mut s1 = sample(1.0, -0.5, 1.0);
        s1.volume = 1.5;
        let v = volume_drift(&log_of(vec![sample(0.0, -0.5, 1.0), s1]), 1e-3);
        assert_eq!(v.status, "fail");
        assert_eq!(v.value, Some(0.5));
    }
}
