//! Named scenarios: a background surface plus seeded smooth initial data.
//! Each preset draws its perturbation in the construction chart it owns, so
//! the same (preset, seed, amplitude) triple always reproduces the same run.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{
    build_doubled_polygon, build_flat_torus, build_football_with_flat, PolygonGeometry, Surface,
};
use crate::util::sup_norm;
use crate::Result;

#[derive(Debug, Clone)]
pub struct Preset {
    pub name: String,
    pub surface: Arc<Surface>,
    pub u0: Vec<f64>,
}

/// C2 bump with compact support: `(1 - s^2)^3` on |s| < 1.
fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        let t = 1.0 - s * s;
        t * t * t
    }
}

/// Rescale to hit the requested sup norm exactly (no-op on the zero field).
fn normalize(mut v: Vec<f64>, amplitude: f64) -> Vec<f64> {
    let sup = sup_norm(&v);
    if sup > 0.0 {
        let c = amplitude / sup;
        for x in v.iter_mut() {
            *x *= c;
        }
    }
    v
}

/// Sum of planar bumps evaluated on the chart coordinates, ignoring which
/// side of a doubled polygon a node lies on: mirror-symmetric data stays
/// smooth across the seam.
fn chart_bumps(surface: &Surface, amplitude: f64, seed: u64) -> Vec<f64> {
    let n = surface.node_count();
    if amplitude == 0.0 {
        return vec![0.0; n];
    }
    let pos = surface
        .positions()
        .expect("chart perturbations need node positions");
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in pos {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    let diag = (x1 - x0).hypot(y1 - y0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bumps: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            let cx = x0 + (x1 - x0) * rng.gen_range(0.25..0.75);
            let cy = y0 + (y1 - y0) * rng.gen_range(0.25..0.75);
            let w = diag * rng.gen_range(0.15..0.35);
            let a = rng.gen_range(-1.0..1.0_f64);
            (cx, cy, w, a)
        })
        .collect();
    let raw: Vec<f64> = pos
        .iter()
        .map(|p| {
            bumps
                .iter()
                .map(|&(cx, cy, w, a)| a * bump((p.x - cx).hypot(p.y - cy) / w))
                .sum()
        })
        .collect();
    normalize(raw, amplitude)
}

/// The doubled unit square: four cone points of order -1/2 (angle pi),
/// Euler number zero, so the flow drives it to a flat cone metric.
pub fn pillowcase(resolution: usize, amplitude: f64, seed: u64) -> Result<Preset> {
    let s = build_doubled_polygon(&[0.5, 0.5, 0.5, 0.5], PolygonGeometry::Euclidean, resolution)?;
    let surface = Arc::new(Surface::Tri(s));
    let u0 = chart_bumps(&surface, amplitude, seed);
    Ok(Preset {
        name: format!("pillowcase-{resolution}"),
        surface,
        u0,
    })
}

/// Doubled hyperbolic triangle with angles `pi alpha_i`.  Negative Euler
/// number; the flow settles at constant negative curvature.
pub fn hyperbolic_triangle(
    alphas: [f64; 3],
    resolution: usize,
    amplitude: f64,
    seed: u64,
) -> Result<Preset> {
    let s = build_doubled_polygon(&alphas, PolygonGeometry::Hyperbolic, resolution)?;
    let surface = Arc::new(Surface::Tri(s));
    let u0 = chart_bumps(&surface, amplitude, seed);
    Ok(Preset {
        name: format!(
            "hyperbolic-triangle-{}-{}-{}-{resolution}",
            alphas[0], alphas[1], alphas[2]
        ),
        surface,
        u0,
    })
}

/// Surface of revolution with two tips; the perturbation is a sum of radial
/// bumps supported away from the endpoints of the profile.
pub fn football(
    beta1: f64,
    beta2: f64,
    intervals: usize,
    length: f64,
    amplitude: f64,
    seed: u64,
) -> Result<Preset> {
    let s = build_football_with_flat(beta1, beta2, intervals, length, 0.2)?;
    let rho: Vec<f64> = (0..=intervals).map(|i| s.rho(i)).collect();
    let surface = Arc::new(Surface::Radial(s));
    let u0 = if amplitude == 0.0 {
        vec![0.0; surface.node_count()]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bumps: Vec<(f64, f64, f64)> = (0..4)
            .map(|_| {
                let c = length * rng.gen_range(0.2..0.8);
                let w = length * rng.gen_range(0.1..0.25);
                let a = rng.gen_range(-1.0..1.0_f64);
                (c, w, a)
            })
            .collect();
        let raw: Vec<f64> = rho
            .iter()
            .map(|&r| bumps.iter().map(|&(c, w, a)| a * bump((r - c) / w)).sum())
            .collect();
        normalize(raw, amplitude)
    };
    Ok(Preset {
        name: format!("football-{beta1}-{beta2}-{intervals}"),
        surface,
        u0,
    })
}

/// Flat torus with a perturbation built from a few low periodic modes, so the
/// data is smooth across the identifications by construction.
pub fn flat_torus(
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    amplitude: f64,
    seed: u64,
) -> Result<Preset> {
    let s = build_flat_torus(nx, ny, lx, ly)?;
    let surface = Arc::new(Surface::Tri(s));
    let n = surface.node_count();
    let u0 = if amplitude == 0.0 {
        vec![0.0; n]
    } else {
        let tau = 2.0 * std::f64::consts::PI;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modes: Vec<(f64, f64, f64, f64)> = (0..4)
            .map(|_| {
                let kx = rng.gen_range(-2i32..=2) as f64;
                let ky = rng.gen_range(-2i32..=2) as f64;
                let phase = rng.gen_range(0.0..tau);
                let a = rng.gen_range(-1.0..1.0_f64);
                (kx, ky, phase, a)
            })
            .collect();
        let raw: Vec<f64> = (0..n)
            .map(|v| {
                let fx = (v % nx) as f64 / nx as f64;
                let fy = (v / nx) as f64 / ny as f64;
                modes
                    .iter()
                    .map(|&(kx, ky, phase, a)| a * (tau * (kx * fx + ky * fy) + phase).cos())
                    .sum()
            })
            .collect();
        normalize(raw, amplitude)
    };
    Ok(Preset {
        name: format!("torus-{nx}x{ny}"),
        surface,
        u0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn pillowcase_perturbation_is_side_independent() {
        let p = pillowcase(8, 0.3, 42).unwrap();
        assert_eq!(p.surface.cones().len(), 4);
        assert!(p.surface.chi_tilde().abs() < 1e-12);
        assert!((sup_norm(&p.u0) - 0.3).abs() < 1e-12);

        // group nodes by chart point; front/back copies must agree exactly
        let pos = p.surface.positions().unwrap();
        let mut by_point: BTreeMap<(u64, u64), Vec<usize>> = BTreeMap::new();
        for (i, q) in pos.iter().enumerate() {
            by_point
                .entry((q.x.to_bits(), q.y.to_bits()))
                .or_default()
                .push(i);
        }
        let mut pairs = 0;
        for ids in by_point.values() {
            if ids.len() == 2 {
                assert_eq!(p.u0[ids[0]].to_bits(), p.u0[ids[1]].to_bits());
                pairs += 1;
            }
        }
        assert!(pairs > 10, "expected many interior front/back pairs");
    }

    #[test]
    fn presets_are_deterministic() {
        let a = pillowcase(6, 0.2, 5).unwrap();
        let b = pillowcase(6, 0.2, 5).unwrap();
        assert_eq!(a.u0, b.u0);
        let c = pillowcase(6, 0.2, 6).unwrap();
        assert!(crate::util::sup_diff(&a.u0, &c.u0) > 0.0);

        let t1 = flat_torus(8, 6, 1.0, 1.0, 0.1, 3).unwrap();
        let t2 = flat_torus(8, 6, 1.0, 1.0, 0.1, 3).unwrap();
        assert_eq!(t1.u0, t2.u0);
    }

    #[test]
    fn zero_amplitude_means_zero_data() {
        let p = football(-0.5, -0.75, 64, 1.0, 0.0, 9).unwrap();
        assert!(p.u0.iter().all(|&v| v == 0.0));
        let t = hyperbolic_triangle([0.25, 0.25, 0.25], 6, 0.0, 1).unwrap();
        assert!(t.u0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn football_perturbation_hits_its_amplitude() {
        let p = football(-0.5, -0.5, 128, 1.0, 0.05, 17).unwrap();
        assert!((sup_norm(&p.u0) - 0.05).abs() < 1e-14);
    }
}
