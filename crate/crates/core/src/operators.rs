//! The lumped finite-volume Laplacian and the operators built on it.
//!
//! The stencil stores symmetric nonnegative edge weights `w_ij` and lumped
//! node areas `A_i`.  Everything downstream leans on two exact discrete
//! identities: `sum_i A_i (Lap u)_i = 0` (zero row sums plus symmetry) and
//! `sum_i A_i u_i (Lap u)_i = -dirichlet_energy(u)` (integration by parts).

use std::collections::BTreeMap;

use crate::geometry::Surface;
use crate::util::comp_sum;
use crate::{Error, Result};

/// Sparse symmetric Laplacian in CSR form.  `weights` holds the off-diagonal
/// coupling `w_ij >= 0`; `diag[i] = sum_j w_ij`, so rows of the weight matrix
/// sum to zero by construction.
#[derive(Debug, Clone)]
pub struct LaplacianStencil {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
    diag: Vec<f64>,
    areas: Vec<f64>,
}

impl LaplacianStencil {
    /// Assemble from an unordered edge list `(i, j, w)`.  Duplicate edges are
    /// summed.  Weights in `[-1e-12 * wmax, 0)` are clamped to zero (cotangent
    /// roundoff at right angles); anything more negative is rejected, since a
    /// negative coupling breaks the maximum principle.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)], areas: Vec<f64>) -> Result<Self> {
        if areas.len() != n {
            return Err(Error::MeshConstruction(format!(
                "area vector length {} does not match node count {}",
                areas.len(),
                n
            )));
        }
        for (i, &a) in areas.iter().enumerate() {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::MeshConstruction(format!(
                    "non-positive lumped area {a} at node {i}"
                )));
            }
        }
        let wmax = edges.iter().fold(0.0_f64, |m, &(_, _, w)| m.max(w.abs()));
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(i, j, w) in edges {
            if i == j || i >= n || j >= n {
                return Err(Error::MeshConstruction(format!(
                    "bad edge ({i}, {j}) for {n} nodes"
                )));
            }
            if !w.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("stencil weight on edge ({i}, {j})"),
                });
            }
            let key = (i.min(j), i.max(j));
            *acc.entry(key).or_insert(0.0) += w;
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (&(i, j), &w) in &acc {
            let w = if w < 0.0 {
                if w < -1e-12 * wmax.max(1.0) {
                    return Err(Error::MeshConstruction(format!(
                        "negative stencil weight {w:.3e} on edge ({i}, {j}); mesh is not Delaunay"
                    )));
                }
                0.0
            } else {
                w
            };
            rows[i].push((j, w));
            rows[j].push((i, w));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut weights = Vec::new();
        let mut diag = vec![0.0; n];
        row_ptr.push(0);
        for (i, row) in rows.iter().enumerate() {
            // rows come out sorted by column because the accumulator is ordered
            for &(j, w) in row {
                cols.push(j);
                weights.push(w);
                diag[i] += w;
            }
            row_ptr.push(cols.len());
        }
        Ok(LaplacianStencil {
            n,
            row_ptr,
            cols,
            weights,
            diag,
            areas,
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn total_area(&self) -> f64 {
        comp_sum(self.areas.iter().copied())
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.cols[k], self.weights[k]))
    }

    pub fn weight_diag(&self) -> &[f64] {
        &self.diag
    }

    /// Positive semidefinite graph form: `(Lw x)_i = diag_i x_i - sum_j w_ij x_j`.
    /// The geometric Laplacian is `(Lap x)_i = -(Lw x)_i / A_i`.
    pub fn weight_laplacian_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(out.len(), self.n);
        for i in 0..self.n {
            let mut s = self.diag[i] * x[i];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s -= self.weights[k] * x[self.cols[k]];
            }
            out[i] = s;
        }
    }

    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        self.weight_laplacian_into(u, out);
        for i in 0..self.n {
            out[i] = -out[i] / self.areas[i];
        }
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.apply_into(u, &mut out);
        out
    }

    /// `sum_i A_i u_i`.
    pub fn integral(&self, u: &[f64]) -> f64 {
        comp_sum(u.iter().zip(&self.areas).map(|(u, a)| u * a))
    }

    /// Dirichlet energy `sum_{edges} w_ij (u_i - u_j)^2`; every CSR entry
    /// covers each unordered edge twice, hence the half.
    pub fn dirichlet_energy(&self, u: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.n);
        let terms = (0..self.n).flat_map(|i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| {
                let d = u[i] - u[self.cols[k]];
                0.5 * self.weights[k] * d * d
            })
        });
        comp_sum(terms)
    }

    /// Bilinear Dirichlet form `sum_{edges} w_ij (x_i - x_j)(y_i - y_j)`.
    pub fn dirichlet_form(&self, x: &[f64], y: &[f64]) -> f64 {
        let terms = (0..self.n).flat_map(|i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| {
                let j = self.cols[k];
                0.5 * self.weights[k] * (x[i] - x[j]) * (y[i] - y[j])
            })
        });
        comp_sum(terms)
    }

    /// Connectivity of the positive-weight graph (zero-weight entries do not
    /// couple nodes and are ignored).
    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1usize;
        while let Some(i) = stack.pop() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.weights[k] > 0.0 && !seen[self.cols[k]] {
                    seen[self.cols[k]] = true;
                    count += 1;
                    stack.push(self.cols[k]);
                }
            }
        }
        count == self.n
    }
}

/// Geometric Laplacian of `u` in the background metric.
pub fn laplacian_apply(stencil: &LaplacianStencil, u: &[f64]) -> Vec<f64> {
    stencil.apply(u)
}

/// Dirichlet energy of `u`.  Conformally invariant: it is the same number in
/// the background and in any flowing metric `e^{2u0} g`.
pub fn dirichlet_energy(stencil: &LaplacianStencil, u: &[f64]) -> f64 {
    stencil.dirichlet_energy(u)
}

/// Pointwise `|grad u|^2` lumped to nodes.  Computed per element (triangle or
/// radial segment) from the linear interpolant and area-averaged; tip nodes
/// get the max over incident elements instead, since the average would dilute
/// a genuinely unbounded gradient there.  With `conformal = Some(u0)` the
/// square is measured in the metric `e^{2 u0} g` (scales by `e^{-2 u0}`).
pub fn gradient_magnitude_sq(
    surface: &Surface,
    u: &[f64],
    conformal: Option<&[f64]>,
) -> Vec<f64> {
    let mut g = surface.grad_sq_background(u);
    if let Some(u0) = conformal {
        for (gi, &c) in g.iter_mut().zip(u0) {
            *gi *= (-2.0 * c).exp();
        }
    }
    g
}

/// A tip-truncated subdomain: the nodes at background distance >= `radius`
/// from every cone tip, with the Laplacian closed by reflection (edges across
/// the cut are dropped, so boundary rows still sum to zero: a discrete
/// homogeneous Neumann condition).
#[derive(Debug, Clone)]
pub struct Truncation {
    pub level: i32,
    pub radius: f64,
    /// Sorted global node ids of the active set.
    pub active: Vec<usize>,
    /// Global id -> local index.
    pub index_of: Vec<Option<usize>>,
    /// Local flag: node lost at least one neighbor to the cut.
    pub boundary: Vec<bool>,
    pub stencil: LaplacianStencil,
}

impl Truncation {
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.active.iter().map(|&g| full[g]).collect()
    }

    /// Sup over the active set of |a - b| where `a` is local and `b` global.
    pub fn sup_diff_against_full(&self, local: &[f64], full: &[f64]) -> f64 {
        self.active
            .iter()
            .zip(local)
            .fold(0.0_f64, |m, (&g, &v)| m.max((v - full[g]).abs()))
    }
}

/// Remove the open disks of radius `2^-k` around every cone tip.
///
/// Fails if the radius dips below twice the grid scale (the cut would not be
/// resolved) or if the remaining graph is disconnected.
pub fn truncate(surface: &Surface, k: i32) -> Result<Truncation> {
    let radius = (0.5_f64).powi(k);
    let spacing = surface.grid_scale();
    if radius < 2.0 * spacing {
        return Err(Error::TruncationTooFine {
            k,
            radius,
            spacing,
        });
    }
    if surface.cones().is_empty() {
        return Err(Error::InvalidArgument(
            "truncation requires at least one cone tip".into(),
        ));
    }
    let dist = surface.tip_distance();
    let full = surface.stencil();
    let n = full.node_count();
    let active: Vec<usize> = (0..n).filter(|&i| dist[i] >= radius).collect();
    if active.is_empty() {
        return Err(Error::MeshConstruction(format!(
            "truncation level {k} removes every node"
        )));
    }
    let mut index_of = vec![None; n];
    for (loc, &g) in active.iter().enumerate() {
        index_of[g] = Some(loc);
    }
    let mut edges = Vec::new();
    let mut boundary = vec![false; active.len()];
    for (loc, &g) in active.iter().enumerate() {
        for (nbr, w) in full.neighbors(g) {
            match index_of[nbr] {
                Some(nloc) => {
                    if g < nbr {
                        edges.push((loc, nloc, w));
                    }
                }
                None => boundary[loc] = true,
            }
        }
    }
    let areas: Vec<f64> = active.iter().map(|&g| full.areas()[g]).collect();
    let stencil = LaplacianStencil::from_edges(active.len(), &edges, areas)?;
    if !stencil.is_connected() {
        return Err(Error::MeshConstruction(format!(
            "truncation level {k} disconnects the surface"
        )));
    }
    Ok(Truncation {
        level: k,
        radius,
        active,
        index_of,
        boundary,
        stencil,
    })
}
