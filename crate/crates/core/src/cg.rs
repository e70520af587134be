//! Preconditioned conjugate gradients for the symmetric positive systems the
//! solvers assemble: `(D + s L_w) x = b` with `D` a nonnegative diagonal and
//! `L_w` the weight Laplacian of a stencil.  When `D = 0` the matrix has the
//! constant vector in its kernel; `deflate_constants` restricts the iteration
//! to the complement, which requires the right side to sum to zero.

use crate::operators::LaplacianStencil;
use crate::util::{comp_sum, sup_norm};
use crate::{Error, Result};

pub struct System<'a> {
    pub stencil: &'a LaplacianStencil,
    /// Diagonal term per node, added to `scale * L_w`.  All entries >= 0.
    pub diag: &'a [f64],
    /// Multiplier on the weight Laplacian.  >= 0.
    pub scale: f64,
    /// Project the constant vector out of the iteration.  Only valid when
    /// `diag` vanishes identically, i.e. the system is a pure Laplacian.
    pub deflate_constants: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct Report {
    pub iters: usize,
    /// Final `||r||_2 / ||b||_2`.
    pub residual_rel: f64,
    /// Final `sup_i |r_i| / M_i` with `M` the Jacobi diagonal, in solution units.
    pub residual_sup_scaled: f64,
}

fn apply(sys: &System, p: &[f64], out: &mut [f64]) {
    sys.stencil.weight_laplacian_into(p, out);
    for i in 0..p.len() {
        out[i] = sys.diag[i] * p[i] + sys.scale * out[i];
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    comp_sum(a.iter().zip(b).map(|(x, y)| x * y))
}

fn project_mean(v: &mut [f64]) {
    let m = comp_sum(v.iter().copied()) / v.len() as f64;
    for x in v.iter_mut() {
        *x -= m;
    }
}

/// Solve `(D + s L_w) x = b` to relative tolerance `tol` (both in the global
/// l2 sense and per node in solution units).  `warm` seeds the iteration.
pub fn solve(sys: &System, b: &[f64], warm: Option<&[f64]>, tol: f64) -> Result<(Vec<f64>, Report)> {
    let n = sys.stencil.node_count();
    assert_eq!(b.len(), n, "right side length");
    assert_eq!(sys.diag.len(), n, "diagonal length");
    assert!(sys.scale >= 0.0 && sys.scale.is_finite());
    assert!(tol > 0.0);
    if sys.deflate_constants {
        if sys.diag.iter().any(|&d| d != 0.0) {
            return Err(Error::InvalidArgument(
                "constant deflation requires a vanishing diagonal term".into(),
            ));
        }
        let total = comp_sum(b.iter().copied());
        let scale_b = comp_sum(b.iter().map(|x| x.abs())).max(f64::MIN_POSITIVE);
        if total.abs() > 1e-9 * scale_b {
            return Err(Error::NotMeanZero {
                integral: total,
                tol: 1e-9 * scale_b,
            });
        }
    } else if let Some(i) = sys.diag.iter().position(|&d| !(d >= 0.0) || !d.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "diagonal entry {i} is {}, need finite and >= 0",
            sys.diag[i]
        )));
    }

    // Jacobi diagonal; floored so an exact zero (lone deflated node) cannot
    // poison the preconditioner.
    let mut jacobi = vec![0.0; n];
    let wd = sys.stencil.weight_diag();
    let mut mmax: f64 = 0.0;
    for i in 0..n {
        jacobi[i] = sys.diag[i] + sys.scale * wd[i];
        mmax = mmax.max(jacobi[i]);
    }
    let floor = mmax.max(f64::MIN_POSITIVE) * 1e-14;
    let mut mmin = f64::INFINITY;
    for m in jacobi.iter_mut() {
        *m = m.max(floor);
        mmin = mmin.min(*m);
    }
    let diag_ratio = mmax / mmin;

    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok((
            vec![0.0; n],
            Report {
                iters: 0,
                residual_rel: 0.0,
                residual_sup_scaled: 0.0,
            },
        ));
    }

    let mut x = match warm {
        Some(w) => {
            assert_eq!(w.len(), n, "warm start length");
            w.to_vec()
        }
        None => vec![0.0; n],
    };
    if sys.deflate_constants {
        project_mean(&mut x);
    }

    let mut r = vec![0.0; n];
    apply(sys, &x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    if sys.deflate_constants {
        project_mean(&mut r);
    }

    let converged = |r: &[f64], x: &[f64]| -> Option<(f64, f64)> {
        let rel = dot(r, r).sqrt() / bnorm;
        let xs = 1.0 + sup_norm(x);
        let sup = r
            .iter()
            .zip(&jacobi)
            .map(|(ri, m)| ri.abs() / m)
            .fold(0.0f64, f64::max);
        if rel <= tol && sup <= tol * xs {
            Some((rel, sup))
        } else {
            None
        }
    };

    if let Some((rel, sup)) = converged(&r, &x) {
        return Ok((
            x,
            Report {
                iters: 0,
                residual_rel: rel,
                residual_sup_scaled: sup,
            },
        ));
    }

    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut rho_prev = 0.0;
    let cap = 10 * n + 100;
    for iter in 1..=cap {
        for i in 0..n {
            z[i] = r[i] / jacobi[i];
        }
        if sys.deflate_constants {
            project_mean(&mut z);
        }
        let rho = dot(&r, &z);
        if !(rho > 0.0) {
            return Err(Error::CgStalled {
                iters: iter,
                residual: dot(&r, &r).sqrt() / bnorm,
                diag_ratio,
            });
        }
        if iter == 1 {
            p.copy_from_slice(&z);
        } else {
            let beta = rho / rho_prev;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        rho_prev = rho;
        apply(sys, &p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(Error::CgStalled {
                iters: iter,
                residual: dot(&r, &r).sqrt() / bnorm,
                diag_ratio,
            });
        }
        let alpha = rho / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        if sys.deflate_constants {
            project_mean(&mut r);
        }
        if let Some((rel, sup)) = converged(&r, &x) {
            return Ok((
                x,
                Report {
                    iters: iter,
                    residual_rel: rel,
                    residual_sup_scaled: sup,
                },
            ));
        }
    }
    Err(Error::CgStalled {
        iters: cap,
        residual: dot(&r, &r).sqrt() / bnorm,
        diag_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_flat_torus;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn path_stencil(n: usize, weights: &[f64]) -> LaplacianStencil {
        let edges: Vec<(usize, usize, f64)> = weights
            .iter()
            .enumerate()
            .map(|(i, &w)| (i, i + 1, w))
            .collect();
        LaplacianStencil::from_edges(n, &edges, vec![1.0; n]).unwrap()
    }

    /// Dense solve by Gaussian elimination with partial pivoting; the oracle
    /// for small systems.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            let d = a[col][col];
            assert!(d.abs() > 1e-14, "oracle matrix is singular");
            for row in col + 1..n {
                let f = a[row][col] / d;
                if f == 0.0 {
                    continue;
                }
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for col in (0..n).rev() {
            let mut s = b[col];
            for k in col + 1..n {
                s -= a[col][k] * x[k];
            }
            x[col] = s / a[col][col];
        }
        x
    }

    fn dense_matrix(sys: &System) -> Vec<Vec<f64>> {
        let n = sys.stencil.node_count();
        let mut a = vec![vec![0.0; n]; n];
        let wd = sys.stencil.weight_diag();
        for i in 0..n {
            a[i][i] = sys.diag[i] + sys.scale * wd[i];
            for (j, w) in sys.stencil.neighbors(i) {
                a[i][j] -= sys.scale * w;
            }
        }
        a
    }

    #[test]
    fn diagonal_system_converges_immediately() {
        let st = path_stencil(5, &[1.0, 2.0, 3.0, 4.0]);
        let diag = vec![2.0; 5];
        let sys = System {
            stencil: &st,
            diag: &diag,
            scale: 0.0,
            deflate_constants: false,
        };
        let b = vec![2.0, -4.0, 6.0, 0.0, 1.0];
        let (x, rep) = solve(&sys, &b, None, 1e-12).unwrap();
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi / 2.0).abs() < 1e-12);
        }
        assert!(rep.iters <= 2, "iters = {}", rep.iters);
    }

    #[test]
    fn matches_dense_oracle_on_a_mesh_system() {
        let s = build_flat_torus(6, 5, 1.3, 0.9).unwrap();
        let n = s.node_count();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let diag: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sys = System {
            stencil: s.stencil(),
            diag: &diag,
            scale: 0.7,
            deflate_constants: false,
        };
        let (x, _) = solve(&sys, &b, None, 1e-12).unwrap();
        let oracle = dense_solve(dense_matrix(&sys), b.clone());
        let err = x
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-9, "sup deviation from dense solve: {err:.3e}");
    }

    #[test]
    fn deflated_solve_recovers_a_torus_eigenmode() {
        let (nx, ny) = (16usize, 12usize);
        let (lx, ly) = (2.0, 1.5);
        let s = build_flat_torus(nx, ny, lx, ly).unwrap();
        let hx = lx / nx as f64;
        let mu = (2.0 - 2.0 * (2.0 * std::f64::consts::PI / nx as f64).cos()) / (hx * hx);
        let mode: Vec<f64> = (0..s.node_count())
            .map(|v| {
                let i = v % nx;
                (2.0 * std::f64::consts::PI * i as f64 / nx as f64).cos()
            })
            .collect();
        // L_w mode = mu * A * mode, so this right side reproduces the mode.
        let areas = s.stencil().areas();
        let b: Vec<f64> = mode.iter().zip(areas).map(|(m, a)| mu * a * m).collect();
        let diag = vec![0.0; s.node_count()];
        let sys = System {
            stencil: s.stencil(),
            diag: &diag,
            scale: 1.0,
            deflate_constants: true,
        };
        let (x, _) = solve(&sys, &b, None, 1e-12).unwrap();
        let err = x
            .iter()
            .zip(&mode)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-8, "sup deviation from eigenmode: {err:.3e}");
    }

    #[test]
    fn warm_start_cannot_hurt_convergence() {
        let s = build_flat_torus(10, 10, 1.0, 1.0).unwrap();
        let n = s.node_count();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let diag: Vec<f64> = (0..n).map(|_| rng.gen_range(0.9..1.1)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sys = System {
            stencil: s.stencil(),
            diag: &diag,
            scale: 1.0,
            deflate_constants: false,
        };
        let (x, cold) = solve(&sys, &b, None, 1e-10).unwrap();
        let b2: Vec<f64> = b.iter().map(|v| v * 1.001).collect();
        let (_, warm) = solve(&sys, &b2, Some(&x), 1e-10).unwrap();
        assert!(
            warm.iters <= cold.iters,
            "warm {} vs cold {}",
            warm.iters,
            cold.iters
        );
    }

    #[test]
    fn deflation_rejects_unbalanced_right_sides() {
        let st = path_stencil(4, &[1.0, 1.0, 1.0]);
        let diag = vec![0.0; 4];
        let sys = System {
            stencil: &st,
            diag: &diag,
            scale: 1.0,
            deflate_constants: true,
        };
        let r = solve(&sys, &[1.0, 0.0, 0.0, 0.0], None, 1e-10);
        assert!(matches!(r, Err(Error::NotMeanZero { .. })));
    }

    proptest! {
        #[test]
        fn random_path_systems_satisfy_both_stop_criteria(
            seed in 0u64..500,
            n in 3usize..40,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let weights: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(0.1..10.0)).collect();
            let st = path_stencil(n, &weights);
            let diag: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..5.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let sys = System { stencil: &st, diag: &diag, scale: 1.0, deflate_constants: false };
            let tol = 1e-10;
            let (x, rep) = solve(&sys, &b, None, tol).unwrap();
            // recompute the residual independently
            let mut ax = vec![0.0; n];
            st.weight_laplacian_into(&x, &mut ax);
            let mut r2 = 0.0;
            let mut sup = 0.0f64;
            let wd = st.weight_diag();
            for i in 0..n {
                let r = b[i] - (diag[i] * x[i] + ax[i]);
                r2 += r * r;
                sup = sup.max(r.abs() / (diag[i] + wd[i]));
            }
            let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(r2.sqrt() / bn <= tol * 1.01, "l2 criterion violated");
            prop_assert!(sup <= tol * (1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs()))) * 1.01);
            prop_assert!(rep.iters <= 10 * n + 100);
        }
    }
}
