//! Small numeric helpers shared across modules.

/// Neumaier-compensated sum.  Conservation checks (Gauss-Bonnet, volume) sit
/// at 1e-10 tolerances on meshes with thousands of nodes, so plain summation
/// drift is worth suppressing.
pub fn comp_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut s = 0.0_f64;
    let mut c = 0.0_f64;
    for x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

/// Quintic smoothstep: C^2 transition with vanishing first and second
/// derivatives at both ends, and s(1-t) = 1 - s(t).
pub fn smoothstep5(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn max_of(v: &[f64]) -> f64 {
    v.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x))
}

pub fn min_of(v: &[f64]) -> f64 {
    v.iter().fold(f64::INFINITY, |m, &x| m.min(x))
}

/// Ordinary least squares fit of y = a + b x; returns (a, b, r_squared).
/// r_squared is 1 for a perfect fit and 0 when the fit explains nothing;
/// degenerate inputs (fewer than 3 points, zero variance) return None.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = comp_sum(xs.iter().copied()) / n;
    let my = comp_sum(ys.iter().copied()) / n;
    let sxx = comp_sum(xs.iter().map(|x| (x - mx) * (x - mx)));
    let sxy = comp_sum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)));
    let syy = comp_sum(ys.iter().map(|y| (y - my) * (y - my)));
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = (sxy * sxy) / (sxx * syy);
    Some((a, b, r2))
}
