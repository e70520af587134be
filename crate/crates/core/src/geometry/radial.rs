//! Rotationally symmetric cone surfaces, discretized along the radial
//! coordinate.
//!
//! The metric is `d rho^2 + h(rho)^2 d theta^2` on `rho in [0, L]` with tips
//! at both ends; rotationally symmetric functions live on a uniform rho grid,
//! so the sphere becomes a 1D problem.  The profile is exactly conical
//! (`h = (1 + beta) rho`) on a declared run at each end, which makes the
//! background curvature vanish identically near the tips and turns the tip
//! node into an ordinary finite-volume cell of radius `drho / 2`.

use std::f64::consts::PI;

use crate::operators::LaplacianStencil;
use crate::util::{comp_sum, smoothstep5};
use crate::{Error, Result};

pub const DEFAULT_FLAT_FRACTION: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct RadialSurface {
    length: f64,
    intervals: usize,
    drho: f64,
    profile: Vec<f64>,
    tip_orders: (f64, f64),
    flat_len: f64,
    stencil: LaplacianStencil,
    ktilde: Vec<f64>,
    tip_distance: Vec<f64>,
    chi_tilde: f64,
    cones: Vec<(usize, f64)>,
}

impl RadialSurface {
    /// Build from explicit profile samples `h(i * drho)`, `i = 0..=n`.
    ///
    /// Requirements: `n >= 16`, tips pinned to zero, `h > 0` in the interior,
    /// and `h` exactly conical with slopes `1 + beta` out to `flat_len >=
    /// 2 drho` from each end.  The conical run is what keeps the discrete
    /// background curvature exactly zero at and near the tips.
    pub fn from_profile(
        profile: Vec<f64>,
        tip_orders: (f64, f64),
        length: f64,
        flat_len: f64,
    ) -> Result<Self> {
        let n = profile.len().saturating_sub(1);
        if n < 16 {
            return Err(Error::DegenerateProfile(format!(
                "need at least 16 grid cells, got {n}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::DegenerateProfile(format!("bad length {length}")));
        }
        let (b1, b2) = tip_orders;
        for b in [b1, b2] {
            if !(b.is_finite() && b > -1.0) {
                return Err(Error::InvalidDivisor(format!("tip order {b} is not > -1")));
            }
        }
        let drho = length / n as f64;
        if !(flat_len >= 2.0 * drho * (1.0 - 1e-12)) {
            return Err(Error::DegenerateProfile(format!(
                "flat run {flat_len:.3e} must cover at least two cells ({:.3e})",
                2.0 * drho
            )));
        }
        if profile[0] != 0.0 || profile[n] != 0.0 {
            return Err(Error::DegenerateProfile(
                "profile must vanish exactly at both tips".into(),
            ));
        }
        for (i, &h) in profile.iter().enumerate().take(n).skip(1) {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::DegenerateProfile(format!(
                    "profile is not positive at node {i}: h = {h}"
                )));
            }
        }
        let s1 = 1.0 + b1;
        let s2 = 1.0 + b2;
        let cone_tol = 1e-12 * length * s1.max(s2).max(1.0);
        for i in 0..=n {
            let rho = i as f64 * drho;
            let ell = (n - i) as f64 * drho;
            if rho <= flat_len * (1.0 + 1e-12) && (profile[i] - s1 * rho).abs() > cone_tol {
                return Err(Error::DegenerateProfile(format!(
                    "profile is not conical at node {i} inside the declared flat run"
                )));
            }
            if ell <= flat_len * (1.0 + 1e-12) && (profile[i] - s2 * ell).abs() > cone_tol {
                return Err(Error::DegenerateProfile(format!(
                    "profile is not conical at node {i} inside the declared flat run"
                )));
            }
        }

        // Lumped cell areas: trapezoid over the half-cells with midpoint
        // values h_{i +- 1/2} = (h_i + h_{i +- 1}) / 2.  Exact for the conical
        // tip cells.
        let mut areas = vec![0.0; n + 1];
        areas[0] = 2.0 * PI * (drho / 8.0) * (3.0 * profile[0] + profile[1]);
        areas[n] = 2.0 * PI * (drho / 8.0) * (3.0 * profile[n] + profile[n - 1]);
        for i in 1..n {
            areas[i] =
                2.0 * PI * (drho / 8.0) * (profile[i - 1] + 6.0 * profile[i] + profile[i + 1]);
        }

        // Curvature by flux differences of h': the cell integrals of
        // -h''/h * dA = -2 pi dh' telescope, so the total curvature is exactly
        // 2 pi (2 + b1 + b2) with the boundary slopes supplied by the cones.
        let flux: Vec<f64> = (0..n)
            .map(|i| (profile[i + 1] - profile[i]) / drho)
            .collect();
        let mut kta = vec![0.0; n + 1];
        kta[0] = -2.0 * PI * (flux[0] - s1);
        kta[n] = -2.0 * PI * (-s2 - flux[n - 1]);
        for i in 1..n {
            kta[i] = -2.0 * PI * (flux[i] - flux[i - 1]);
        }
        // The conical run makes the tip entries vanish up to roundoff; pin
        // them to exactly zero (tips carry no smooth curvature by contract).
        for tip in [0, n] {
            if kta[tip].abs() > 1e-9 * (1.0 + s1.max(s2)) {
                return Err(Error::DegenerateProfile(format!(
                    "tip node {tip} carries smooth curvature {:.3e}",
                    kta[tip] / areas[tip]
                )));
            }
            kta[tip] = 0.0;
        }
        let ktilde: Vec<f64> = kta.iter().zip(&areas).map(|(k, a)| k / a).collect();

        let chi_tilde = 2.0 + b1 + b2;
        let gb = comp_sum(kta.iter().copied());
        let target = 2.0 * PI * chi_tilde;
        if (gb - target).abs() > 1e-10 * (1.0 + target.abs()) {
            return Err(Error::MeshConstruction(format!(
                "total curvature {gb:.15e} misses 2 pi chi = {target:.15e}"
            )));
        }

        let edges: Vec<(usize, usize, f64)> = (0..n)
            .map(|i| (i, i + 1, PI * (profile[i] + profile[i + 1]) / drho))
            .collect();
        let stencil = LaplacianStencil::from_edges(n + 1, &edges, areas)?;

        let tip_distance: Vec<f64> = (0..=n)
            .map(|i| (i as f64 * drho).min((n - i) as f64 * drho))
            .collect();
        let mut cones = Vec::new();
        if b1 != 0.0 {
            cones.push((0, b1));
        }
        if b2 != 0.0 {
            cones.push((n, b2));
        }

        Ok(RadialSurface {
            length,
            intervals: n,
            drho,
            profile,
            tip_orders,
            flat_len,
            stencil,
            ktilde,
            tip_distance,
            chi_tilde,
            cones,
        })
    }

    pub fn node_count(&self) -> usize {
        self.intervals + 1
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn drho(&self) -> f64 {
        self.drho
    }

    pub fn rho(&self, node: usize) -> f64 {
        node as f64 * self.drho
    }

    pub fn profile(&self) -> &[f64] {
        &self.profile
    }

    pub fn tip_orders(&self) -> (f64, f64) {
        self.tip_orders
    }

    pub fn flat_len(&self) -> f64 {
        self.flat_len
    }

    pub fn stencil(&self) -> &LaplacianStencil {
        &self.stencil
    }

    pub fn ktilde(&self) -> &[f64] {
        &self.ktilde
    }

    pub fn chi_tilde(&self) -> f64 {
        self.chi_tilde
    }

    pub fn cones(&self) -> &[(usize, f64)] {
        &self.cones
    }

    pub fn tip_distance(&self) -> &[f64] {
        &self.tip_distance
    }

    /// Segment-wise `(u')^2` averaged to nodes with segment-area weights;
    /// tip nodes take their single incident segment.
    pub fn grad_sq_background(&self, u: &[f64]) -> Vec<f64> {
        let n = self.intervals;
        debug_assert_eq!(u.len(), n + 1);
        let seg_g: Vec<f64> = (0..n)
            .map(|s| {
                let d = (u[s + 1] - u[s]) / self.drho;
                d * d
            })
            .collect();
        let seg_a: Vec<f64> = (0..n)
            .map(|s| PI * (self.profile[s] + self.profile[s + 1]) * self.drho)
            .collect();
        let mut out = vec![0.0; n + 1];
        out[0] = seg_g[0];
        out[n] = seg_g[n - 1];
        for i in 1..n {
            out[i] = (seg_a[i - 1] * seg_g[i - 1] + seg_a[i] * seg_g[i])
                / (seg_a[i - 1] + seg_a[i]);
        }
        out
    }
}

/// Two-tip surface of revolution with orders `beta1` at `rho = 0` and `beta2`
/// at `rho = length`, conical on the outer `flat_fraction` of the interval at
/// each end and blended by a quintic ramp in between.  `n` must be even and
/// at least 16; when `beta1 == beta2` the profile is mirror symmetric
/// bitwise.
pub fn build_football_with_flat(
    beta1: f64,
    beta2: f64,
    n: usize,
    length: f64,
    flat_fraction: f64,
) -> Result<RadialSurface> {
    for b in [beta1, beta2] {
        if !(b.is_finite() && b > -1.0) {
            return Err(Error::InvalidDivisor(format!("tip order {b} is not > -1")));
        }
    }
    if n < 16 || n % 2 != 0 {
        return Err(Error::DegenerateProfile(format!(
            "grid size {n} must be even and >= 16"
        )));
    }
    if !(0.05..=0.45).contains(&flat_fraction) {
        return Err(Error::DegenerateProfile(format!(
            "flat fraction {flat_fraction} outside [0.05, 0.45]"
        )));
    }
    if !(length.is_finite() && length > 0.0) {
        return Err(Error::DegenerateProfile(format!("bad length {length}")));
    }
    let drho = length / n as f64;
    let i_flat = ((n as f64) * flat_fraction).round() as usize;
    let i_flat = i_flat.max(2);
    if 2 * i_flat >= n {
        return Err(Error::DegenerateProfile(
            "flat runs overlap; lower the flat fraction or refine".into(),
        ));
    }
    let s1 = 1.0 + beta1;
    let s2 = 1.0 + beta2;
    // Value at node i measured from the left tip with slopes (a, b).
    let blend = |a: f64, b: f64, i: usize| -> f64 {
        let rho = i as f64 * drho;
        if i <= i_flat {
            return a * rho;
        }
        let ell = (n - i) as f64 * drho;
        let tau = (i - i_flat) as f64 / (n - 2 * i_flat) as f64;
        let s = smoothstep5(tau);
        (1.0 - s) * (a * rho) + s * (b * ell)
    };
    let mut profile = vec![0.0; n + 1];
    for i in 0..=n {
        // evaluate the right half through the mirrored formula so that equal
        // tip orders give a bitwise mirror-symmetric profile
        profile[i] = if i <= n / 2 {
            blend(s1, s2, i)
        } else {
            blend(s2, s1, n - i)
        };
    }
    profile[0] = 0.0;
    profile[n] = 0.0;
    RadialSurface::from_profile(profile, (beta1, beta2), length, i_flat as f64 * drho)
}

/// `build_football_with_flat` with the standard 20% conical run.
pub fn build_football(beta1: f64, beta2: f64, n: usize, length: f64) -> Result<RadialSurface> {
    build_football_with_flat(beta1, beta2, n, length, DEFAULT_FLAT_FRACTION)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn total_curvature(s: &RadialSurface) -> f64 {
        comp_sum(
            s.ktilde()
                .iter()
                .zip(s.stencil().areas())
                .map(|(k, a)| k * a),
        )
    }

    #[test]
    fn football_total_curvature_matches_tip_orders() {
        for (b1, b2, n) in [
            (-0.5, -0.5, 64),
            (-0.5, -0.25, 128),
            (0.5, -0.5, 64),
            (2.0, 1.0, 256),
        ] {
            let s = build_football(b1, b2, n, 1.0).unwrap();
            let target = 2.0 * PI * (2.0 + b1 + b2);
            let got = total_curvature(&s);
            assert!(
                (got - target).abs() <= 1e-10 * (1.0 + target.abs()),
                "b1={b1} b2={b2}: {got} vs {target}"
            );
            assert_eq!(s.chi_tilde(), 2.0 + b1 + b2);
        }
    }

    #[test]
    fn smooth_poles_give_round_total() {
        // beta = 0 at both ends: an ordinary surface of revolution, total
        // curvature 4 pi, and no cone points in the divisor.
        let s = build_football(0.0, 0.0, 512, 1.0).unwrap();
        assert!((total_curvature(&s) - 4.0 * PI).abs() < 1e-10 * (1.0 + 4.0 * PI));
        assert!(s.cones().is_empty());
    }

    #[test]
    fn quadrature_oracle_second_difference() {
        // independent curvature estimate: K = -h''/h by centered differences,
        // integrated with node-area weights.  Agrees with the built field to
        // O(drho^2) away from exact cancellation regions.
        let n = 2048;
        let s = build_football(-0.5, -0.5, n, 1.0).unwrap();
        let h = s.profile();
        let d = s.drho();
        let mut total = 0.0;
        for i in 1..n {
            let hpp = (h[i + 1] - 2.0 * h[i] + h[i - 1]) / (d * d);
            total += -hpp / h[i] * s.stencil().areas()[i];
        }
        let target = 2.0 * PI * (2.0 - 1.0);
        assert!(
            (total - target).abs() < 1e-4 * target.abs(),
            "{total} vs {target}"
        );
    }

    #[test]
    fn tips_and_flat_run_carry_no_curvature() {
        let n = 128;
        let s = build_football(-0.5, -0.75, n, 2.0).unwrap();
        let i_flat = (n as f64 * DEFAULT_FLAT_FRACTION).round() as usize;
        // the node at exactly i_flat reads one flux from the blend region, so
        // exact zeros hold strictly inside the conical run
        for i in 0..i_flat {
            assert_eq!(s.ktilde()[i], 0.0, "node {i}");
            assert_eq!(s.ktilde()[n - i], 0.0, "node {}", n - i);
        }
        assert!(s.ktilde()[i_flat] != 0.0 && s.ktilde()[n - i_flat] != 0.0);
    }

    #[test]
    fn mirror_symmetry_for_equal_orders() {
        let n = 90;
        let s = build_football(-0.3, -0.3, n, 1.7).unwrap();
        for i in 0..=n {
            assert_eq!(s.profile()[i], s.profile()[n - i], "node {i}");
        }
    }

    #[test]
    fn cylinder_insert_is_flat() {
        // hand-built profile: cone, quintic ramp up to a constant waist,
        // mirrored.  The constant run must report exactly zero curvature.
        let n = 200usize;
        let length = 2.0;
        let drho = length / n as f64;
        let beta = -0.5;
        let slope = 1.0 + beta;
        let i_flat = 20usize;
        let i_waist = 60usize;
        let waist = slope * (i_waist as f64 * drho);
        let mut h = vec![0.0; n + 1];
        for i in 0..=n {
            let j = i.min(n - i);
            let rho = j as f64 * drho;
            h[i] = if j <= i_flat {
                slope * rho
            } else if j < i_waist {
                let tau = (j - i_flat) as f64 / (i_waist - i_flat) as f64;
                let s = smoothstep5(tau);
                (1.0 - s) * slope * rho + s * waist
            } else {
                waist
            };
        }
        let s =
            RadialSurface::from_profile(h, (beta, beta), length, i_flat as f64 * drho).unwrap();
        for i in (i_waist + 1)..(n - i_waist) {
            assert_eq!(s.ktilde()[i], 0.0, "waist node {i}");
        }
        let target = 2.0 * PI * (2.0 + 2.0 * beta);
        assert!((total_curvature(&s) - target).abs() <= 1e-10 * (1.0 + target.abs()));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(build_football(-1.0, -0.5, 64, 1.0).is_err());
        assert!(build_football(-0.5, -0.5, 10, 1.0).is_err());
        assert!(build_football(-0.5, -0.5, 65, 1.0).is_err());
        // degenerate: profile forced non-positive in the middle
        let n = 32;
        let drho = 1.0 / n as f64;
        let mut h: Vec<f64> = (0..=n)
            .map(|i| 0.5 * (i.min(n - i)) as f64 * drho)
            .collect();
        h[n / 2] = 0.0;
        assert!(RadialSurface::from_profile(h, (-0.5, -0.5), 1.0, 4.0 * drho).is_err());
    }

    #[test]
    fn laplacian_consistency_at_tip() {
        // smooth radial quadratic: u = rho^2 near the tip has Laplacian 4
        // in the cone chart, independent of the cone order.
        for beta in [-0.5, -0.75, 0.5] {
            let n = 4096;
            let s = build_football(beta, beta, n, 1.0).unwrap();
            let u: Vec<f64> = (0..=n).map(|i| s.rho(i).powi(2)).collect();
            let lap = s.stencil().apply(&u);
            assert!((lap[0] - 4.0).abs() < 1e-6, "beta={beta}: {}", lap[0]);
        }
    }
}
