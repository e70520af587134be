//! Intrinsic triangulations: closed piecewise-flat surfaces given by a
//! triangle list with edge lengths.  Nothing is embedded; weights, areas and
//! curvature all derive from the lengths alone.
//!
//! Edge lengths follow the opposite-vertex convention: `lengths[t][e]` is the
//! length of the edge of triangle `t` not touching vertex `tris[t][e]`.
//!
//! Construction runs intrinsic edge flips until every interior edge satisfies
//! the local Delaunay condition (nonnegative cotangent weight).  Flips retile
//! the same piecewise-flat surface, so vertex angles, areas and curvature are
//! untouched; only the stencil sparsity changes.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, BTreeMap, VecDeque};
use std::f64::consts::PI;

use crate::geometry::{ChartPos, ConeDivisor};
use crate::operators::LaplacianStencil;
use crate::util::comp_sum;
use crate::{Error, Result};

/// Stable Heron area from the three side lengths.
fn tri_area(a: f64, b: f64, c: f64) -> f64 {
    let mut s = [a, b, c];
    s.sort_by(f64::total_cmp);
    let (c, b, a) = (s[0], s[1], s[2]);
    let t = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c));
    0.25 * t.max(0.0).sqrt()
}

/// Angle between the sides of lengths `b` and `c`, opposite side `a`.
fn angle_from(b: f64, c: f64, a: f64) -> f64 {
    (((b * b + c * c) - a * a) / (2.0 * b * c)).clamp(-1.0, 1.0).acos()
}

/// Corner angles, one per vertex slot.  The largest angle is recovered as
/// `pi - (other two)`, so the three angles sum to pi exactly; summed defects
/// then hit `2 pi chi` at roundoff level instead of drifting with mesh size.
fn tri_angles(l: &[f64; 3]) -> [f64; 3] {
    let imax = if l[0] >= l[1] && l[0] >= l[2] {
        0
    } else if l[1] >= l[2] {
        1
    } else {
        2
    };
    let mut ang = [0.0; 3];
    let mut partial = 0.0;
    for i in 0..3 {
        if i != imax {
            ang[i] = angle_from(l[(i + 1) % 3], l[(i + 2) % 3], l[i]);
            partial += ang[i];
        }
    }
    ang[imax] = PI - partial;
    ang
}

/// Cotangent of the corner angle at vertex slot `i`.
fn cot_at(l: &[f64; 3], i: usize) -> f64 {
    let a = l[i];
    let b = l[(i + 1) % 3];
    let c = l[(i + 2) % 3];
    ((b * b + c * c) - a * a) / (4.0 * tri_area(a, b, c))
}

/// Mutable triangle complex with slot-level gluing, used only during
/// construction.  `glue[t][e]` names the triangle slot glued to edge `e` of
/// triangle `t`; tracking adjacency per slot keeps parallel edges (two
/// distinct edges joining the same vertex pair, which flips can create)
/// unambiguous.
struct Complex {
    tris: Vec<[usize; 3]>,
    lens: Vec<[f64; 3]>,
    glue: Vec<[(usize, usize); 3]>,
}

impl Complex {
    fn build_glue(tris: &[[usize; 3]], lens: &[[f64; 3]]) -> Result<Vec<[(usize, usize); 3]>> {
        let mut slots: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
        for (t, tri) in tris.iter().enumerate() {
            for e in 0..3 {
                let u = tri[(e + 1) % 3];
                let v = tri[(e + 2) % 3];
                slots.entry((u.min(v), u.max(v))).or_default().push((t, e));
            }
        }
        let mut glue = vec![[(usize::MAX, usize::MAX); 3]; tris.len()];
        for ((u, v), list) in &slots {
            if list.len() != 2 {
                return Err(Error::MeshConstruction(format!(
                    "edge ({u}, {v}) borders {} triangle(s), expected exactly 2 on a closed surface",
                    list.len()
                )));
            }
            let (t1, e1) = list[0];
            let (t2, e2) = list[1];
            let (l1, l2) = (lens[t1][e1], lens[t2][e2]);
            if (l1 - l2).abs() > 1e-9 * l1.max(l2).max(1.0) {
                return Err(Error::MeshConstruction(format!(
                    "edge ({u}, {v}) has mismatched lengths {l1} and {l2}"
                )));
            }
            glue[t1][e1] = (t2, e2);
            glue[t2][e2] = (t1, e1);
        }
        Ok(glue)
    }

    /// Lawson flipping: process edges until every cotangent weight is
    /// nonnegative (up to -1e-12).  Returns the flip count.
    fn make_delaunay(&mut self) -> Result<usize> {
        let mut queue: VecDeque<(usize, usize)> = (0..self.tris.len())
            .flat_map(|t| (0..3).map(move |e| (t, e)))
            .collect();
        let mut flips = 0usize;
        let mut pops = 0usize;
        let flip_cap = 60 * self.tris.len().max(8);
        let pop_cap = 40 * flip_cap;
        while let Some((t, e)) = queue.pop_front() {
            pops += 1;
            if pops > pop_cap {
                return Err(Error::MeshConstruction(
                    "edge flipping did not settle; mesh is likely degenerate".into(),
                ));
            }
            let (t2, e2) = self.glue[t][e];
            if cot_at(&self.lens[t], e) + cot_at(&self.lens[t2], e2) >= -1e-12 {
                continue;
            }
            if let Some(outer) = self.flip(t, e) {
                flips += 1;
                if flips > flip_cap {
                    return Err(Error::MeshConstruction(
                        "edge flipping exceeded its budget; mesh is likely degenerate".into(),
                    ));
                }
                queue.extend(outer);
            }
        }
        Ok(flips)
    }

    /// Flip the edge at slot `(t1, e1)`.  Returns the four outer edge slots
    /// (to be re-examined) or None when the edge cannot be flipped.
    fn flip(&mut self, t1: usize, e1: usize) -> Option<[(usize, usize); 4]> {
        let (t2, e2) = self.glue[t1][e1];
        if t1 == t2 {
            return None;
        }
        let k = self.tris[t1][e1];
        let l = self.tris[t2][e2];
        if k == l {
            return None;
        }
        let u = self.tris[t1][(e1 + 1) % 3];
        let v = self.tris[t1][(e1 + 2) % 3];
        let c = self.lens[t1][e1]; // |uv|, shared
        let vk = self.lens[t1][(e1 + 1) % 3]; // opposite u
        let uk = self.lens[t1][(e1 + 2) % 3]; // opposite v
        let w1 = self.tris[t2][(e2 + 1) % 3];
        debug_assert!(w1 == u || w1 == v);
        // slot holding |ul| is the one opposite v, and vice versa
        let (slot_ul, slot_vl) = if w1 == u {
            ((e2 + 2) % 3, (e2 + 1) % 3)
        } else {
            ((e2 + 1) % 3, (e2 + 2) % 3)
        };
        let ul = self.lens[t2][slot_ul];
        let vl = self.lens[t2][slot_vl];

        // Unfold the two triangles into the plane across the shared edge:
        // u at the origin, v at (c, 0), k above the axis, l below.
        let a1 = angle_from(c, uk, vk);
        let a2 = angle_from(c, ul, vl);
        let (kx, ky) = (uk * a1.cos(), uk * a1.sin());
        let (lx, ly) = (ul * a2.cos(), -(ul * a2.sin()));
        let denom = ky - ly;
        if !(denom > 0.0) {
            return None;
        }
        // the new edge k-l must cross the old one strictly between u and v
        let x0 = kx + (lx - kx) * ky / denom;
        if !(x0 > 1e-12 * c && x0 < c * (1.0 - 1e-12)) {
            return None;
        }
        let d = (kx - lx).hypot(ky - ly);
        if !(tri_area(ul, d, uk) > 0.0 && tri_area(vk, d, vl) > 0.0) {
            return None;
        }

        // replacement triangles: t1 <- [k, u, l], t2 <- [l, v, k]
        let old_slots = [
            (t1, (e1 + 1) % 3), // |vk|
            (t1, (e1 + 2) % 3), // |uk|
            (t2, slot_ul),      // |ul|
            (t2, slot_vl),      // |vl|
        ];
        let new_slots = [(t2, 0), (t1, 2), (t1, 0), (t2, 2)];
        let partners: Vec<(usize, usize)> = old_slots.iter().map(|&(t, e)| self.glue[t][e]).collect();
        self.tris[t1] = [k, u, l];
        self.lens[t1] = [ul, d, uk];
        self.tris[t2] = [l, v, k];
        self.lens[t2] = [vk, d, vl];
        self.glue[t1][1] = (t2, 1);
        self.glue[t2][1] = (t1, 1);
        for i in 0..4 {
            // a partner that is itself one of the four moved slots must be
            // chased through the renaming
            let p = match old_slots.iter().position(|&s| s == partners[i]) {
                Some(j) => new_slots[j],
                None => partners[i],
            };
            let (nt, ne) = new_slots[i];
            self.glue[nt][ne] = p;
            self.glue[p.0][p.1] = (nt, ne);
        }
        Some(new_slots)
    }
}

fn shortest_to_sources(adj: &[Vec<(usize, f64)>], sources: &[usize]) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = BinaryHeap::new();
    for &s in sources {
        dist[s] = 0.0;
        heap.push(Reverse((0, s)));
    }
    while let Some(Reverse((bits, v))) = heap.pop() {
        let d = f64::from_bits(bits);
        if d > dist[v] {
            continue;
        }
        for &(w, len) in &adj[v] {
            let nd = d + len;
            if nd < dist[w] {
                dist[w] = nd;
                heap.push(Reverse((nd.to_bits(), w)));
            }
        }
    }
    dist
}

#[derive(Debug, Clone)]
pub struct TriSurface {
    node_count: usize,
    tris: Vec<[usize; 3]>,
    lens: Vec<[f64; 3]>,
    glue: Vec<[(usize, usize); 3]>,
    stencil: LaplacianStencil,
    ktilde: Vec<f64>,
    theta: Vec<f64>,
    cones: Vec<(usize, f64)>,
    chi: i64,
    chi_tilde: f64,
    tip_distance: Vec<f64>,
    min_edge: f64,
    positions: Option<Vec<ChartPos>>,
    flips: usize,
}

impl TriSurface {
    /// Assemble a closed surface from raw parts, inferring triangle adjacency
    /// from shared vertex pairs.  Every pair must then carry at most one
    /// edge; meshes with parallel edges (a doubled polygon has them wherever
    /// an interior edge joins two seam vertices) need `from_parts_glued`.
    /// The input need not be Delaunay; edges are flipped here.  Cone vertices
    /// must have total angle `2 pi (1 + beta)` to within 1e-8 by
    /// construction.
    pub fn from_parts(
        node_count: usize,
        tris: Vec<[usize; 3]>,
        lens: Vec<[f64; 3]>,
        divisor: &ConeDivisor,
        positions: Option<Vec<ChartPos>>,
    ) -> Result<Self> {
        Self::validate_parts(node_count, &tris, &lens, divisor, positions.as_deref())?;
        let glue = Complex::build_glue(&tris, &lens)?;
        Self::assemble(node_count, tris, lens, glue, divisor, positions)
    }

    /// `from_parts` with the triangle adjacency given explicitly:
    /// `glue[t][e]` is the slot glued to edge `e` of triangle `t`.  The glue
    /// must be an involution between slots whose vertex pairs and lengths
    /// agree; nothing else is inferred, so parallel edges are fine.
    pub fn from_parts_glued(
        node_count: usize,
        tris: Vec<[usize; 3]>,
        lens: Vec<[f64; 3]>,
        glue: Vec<[(usize, usize); 3]>,
        divisor: &ConeDivisor,
        positions: Option<Vec<ChartPos>>,
    ) -> Result<Self> {
        Self::validate_parts(node_count, &tris, &lens, divisor, positions.as_deref())?;
        Self::validate_glue(&tris, &lens, &glue)?;
        Self::assemble(node_count, tris, lens, glue, divisor, positions)
    }

    fn validate_parts(
        node_count: usize,
        tris: &[[usize; 3]],
        lens: &[[f64; 3]],
        divisor: &ConeDivisor,
        positions: Option<&[ChartPos]>,
    ) -> Result<()> {
        if tris.is_empty() {
            return Err(Error::MeshConstruction("no triangles".into()));
        }
        if tris.len() != lens.len() {
            return Err(Error::MeshConstruction(format!(
                "{} triangles but {} length triples",
                tris.len(),
                lens.len()
            )));
        }
        if let Some(p) = positions {
            if p.len() != node_count {
                return Err(Error::MeshConstruction(format!(
                    "{} positions for {} nodes",
                    p.len(),
                    node_count
                )));
            }
        }
        for &(v, _) in divisor.entries() {
            if v >= node_count {
                return Err(Error::InvalidDivisor(format!(
                    "cone vertex {v} out of range for {node_count} nodes"
                )));
            }
        }
        for (t, (tri, l)) in tris.iter().zip(lens).enumerate() {
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::MeshConstruction(format!(
                    "triangle {t} has repeated vertices {tri:?}"
                )));
            }
            for &v in tri {
                if v >= node_count {
                    return Err(Error::MeshConstruction(format!(
                        "triangle {t} references vertex {v} of {node_count}"
                    )));
                }
            }
            for &x in l {
                if !(x.is_finite() && x > 0.0) {
                    return Err(Error::MeshConstruction(format!(
                        "triangle {t} has a non-positive edge length {x}"
                    )));
                }
            }
            let mut s = *l;
            s.sort_by(f64::total_cmp);
            if s[0] + s[1] - s[2] <= 1e-12 * s[2] {
                return Err(Error::TriangleInequality {
                    tri: t,
                    a: l[0],
                    b: l[1],
                    c: l[2],
                });
            }
        }
        Ok(())
    }

    fn validate_glue(
        tris: &[[usize; 3]],
        lens: &[[f64; 3]],
        glue: &[[(usize, usize); 3]],
    ) -> Result<()> {
        if glue.len() != tris.len() {
            return Err(Error::MeshConstruction(format!(
                "{} glue rows for {} triangles",
                glue.len(),
                tris.len()
            )));
        }
        for (t, row) in glue.iter().enumerate() {
            for (e, &(t2, e2)) in row.iter().enumerate() {
                if t2 >= tris.len() || e2 >= 3 {
                    return Err(Error::MeshConstruction(format!(
                        "slot ({t}, {e}) glued to out-of-range slot ({t2}, {e2})"
                    )));
                }
                if (t2, e2) == (t, e) {
                    return Err(Error::MeshConstruction(format!(
                        "slot ({t}, {e}) glued to itself"
                    )));
                }
                if glue[t2][e2] != (t, e) {
                    return Err(Error::MeshConstruction(format!(
                        "gluing is not involutive at slot ({t}, {e})"
                    )));
                }
                let here = edge_key(tris[t][(e + 1) % 3], tris[t][(e + 2) % 3]);
                let there = edge_key(tris[t2][(e2 + 1) % 3], tris[t2][(e2 + 2) % 3]);
                if here != there {
                    return Err(Error::MeshConstruction(format!(
                        "slots ({t}, {e}) and ({t2}, {e2}) are glued but join \
                         different vertex pairs {here:?} and {there:?}"
                    )));
                }
                let (l1, l2) = (lens[t][e], lens[t2][e2]);
                if (l1 - l2).abs() > 1e-9 * l1.max(l2).max(1.0) {
                    return Err(Error::MeshConstruction(format!(
                        "glued slots ({t}, {e}) and ({t2}, {e2}) have mismatched \
                         lengths {l1} and {l2}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn assemble(
        node_count: usize,
        tris: Vec<[usize; 3]>,
        lens: Vec<[f64; 3]>,
        glue: Vec<[(usize, usize); 3]>,
        divisor: &ConeDivisor,
        positions: Option<Vec<ChartPos>>,
    ) -> Result<Self> {
        let mut cx = Complex { tris, lens, glue };
        let flips = cx.make_delaunay()?;
        let Complex { tris, lens, glue } = cx;

        let tri_areas: Vec<f64> = lens.iter().map(|l| tri_area(l[0], l[1], l[2])).collect();
        let mut areas = vec![0.0; node_count];
        for (tri, &a) in tris.iter().zip(&tri_areas) {
            for &v in tri {
                areas[v] += a / 3.0;
            }
        }
        let mut theta = vec![0.0; node_count];
        for (tri, l) in tris.iter().zip(&lens) {
            let ang = tri_angles(l);
            for c in 0..3 {
                theta[tri[c]] += ang[c];
            }
        }
        for (v, &a) in areas.iter().enumerate() {
            if !(a > 0.0) {
                return Err(Error::MeshConstruction(format!(
                    "vertex {v} has no incident triangle"
                )));
            }
        }

        // V - E + F with E = 3F/2
        let chi = node_count as i64 - tris.len() as i64 / 2;
        let defect_sum = comp_sum((0..node_count).map(|v| 2.0 * PI - theta[v]));
        let target = 2.0 * PI * chi as f64;
        if (defect_sum - target).abs() > 1e-9 * (1.0 + target.abs()) {
            return Err(Error::MeshConstruction(format!(
                "angle defects sum to {defect_sum:.15e}, expected 2 pi chi = {target:.15e}"
            )));
        }

        let cones: Vec<(usize, f64)> = divisor.entries().to_vec();
        let mut ktilde: Vec<f64> = (0..node_count)
            .map(|v| (2.0 * PI - theta[v]) / areas[v])
            .collect();
        for &(v, beta) in &cones {
            let want = 2.0 * PI * (1.0 + beta);
            if (theta[v] - want).abs() > 1e-8 {
                return Err(Error::MeshConstruction(format!(
                    "cone vertex {v} has total angle {:.12} but order {beta} requires {want:.12}",
                    theta[v]
                )));
            }
            ktilde[v] = 0.0;
        }
        let chi_tilde = chi as f64 + divisor.total_order();

        let mut edges = Vec::with_capacity(3 * tris.len() / 2);
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); node_count];
        for (t, tri) in tris.iter().enumerate() {
            for e in 0..3 {
                let (t2, e2) = glue[t][e];
                if (t, e) > (t2, e2) {
                    continue;
                }
                let u = tri[(e + 1) % 3];
                let v = tri[(e + 2) % 3];
                let w = 0.5 * (cot_at(&lens[t], e) + cot_at(&lens[t2], e2));
                edges.push((u, v, w));
                adj[u].push((v, lens[t][e]));
                adj[v].push((u, lens[t][e]));
            }
        }
        let stencil = LaplacianStencil::from_edges(node_count, &edges, areas)?;
        if !stencil.is_connected() {
            return Err(Error::MeshConstruction("surface is not connected".into()));
        }

        let sources: Vec<usize> = cones.iter().map(|&(v, _)| v).collect();
        let tip_distance = shortest_to_sources(&adj, &sources);
        let min_edge = lens
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min);

        Ok(TriSurface {
            node_count,
            tris,
            lens,
            glue,
            stencil,
            ktilde,
            theta,
            cones,
            chi,
            chi_tilde,
            tip_distance,
            min_edge,
            positions,
            flips,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn tri_count(&self) -> usize {
        self.tris.len()
    }

    pub fn tris(&self) -> &[[usize; 3]] {
        &self.tris
    }

    pub fn tri_lengths(&self) -> &[[f64; 3]] {
        &self.lens
    }

    /// Slot-level adjacency: `gluing()[t][e]` is the triangle slot glued to
    /// edge `e` of triangle `t` (post-flip state).
    pub fn gluing(&self) -> &[[(usize, usize); 3]] {
        &self.glue
    }

    pub fn stencil(&self) -> &LaplacianStencil {
        &self.stencil
    }

    pub fn ktilde(&self) -> &[f64] {
        &self.ktilde
    }

    /// Total corner angle at each vertex.
    pub fn vertex_angle_sums(&self) -> &[f64] {
        &self.theta
    }

    pub fn cones(&self) -> &[(usize, f64)] {
        &self.cones
    }

    pub fn euler_char(&self) -> i64 {
        self.chi
    }

    pub fn chi_tilde(&self) -> f64 {
        self.chi_tilde
    }

    pub fn tip_distance(&self) -> &[f64] {
        &self.tip_distance
    }

    pub fn min_edge(&self) -> f64 {
        self.min_edge
    }

    pub fn positions(&self) -> Option<&[ChartPos]> {
        self.positions.as_deref()
    }

    /// Delaunay flips performed during construction.
    pub fn flip_count(&self) -> usize {
        self.flips
    }

    /// Per-triangle `|grad u|^2` of the linear interpolant, area-averaged to
    /// nodes; cone vertices take the max over their fan instead.
    pub fn grad_sq_background(&self, u: &[f64]) -> Vec<f64> {
        debug_assert_eq!(u.len(), self.node_count);
        let mut num = vec![0.0; self.node_count];
        let mut den = vec![0.0; self.node_count];
        let mut mx = vec![0.0; self.node_count];
        for (tri, l) in self.tris.iter().zip(&self.lens) {
            let a = tri_area(l[0], l[1], l[2]);
            let mut e_t = 0.0;
            for c in 0..3 {
                let du = u[tri[(c + 1) % 3]] - u[tri[(c + 2) % 3]];
                e_t += cot_at(l, c) * du * du;
            }
            // integral of |grad u|^2 over the triangle equals e_t / 2
            let g = (e_t / (2.0 * a)).max(0.0);
            for &v in tri {
                num[v] += (a / 3.0) * g;
                den[v] += a / 3.0;
                if g > mx[v] {
                    mx[v] = g;
                }
            }
        }
        let mut out: Vec<f64> = num.iter().zip(&den).map(|(n, d)| n / d).collect();
        for &(v, _) in &self.cones {
            out[v] = mx[v];
        }
        out
    }
}

/// Flat torus `[0, lx] x [0, ly]` with periodic identifications, on an
/// `nx * ny` grid (both at least 3) with every square split along its
/// southwest-northeast diagonal.  Vertex ids are row-major with x fastest:
/// node `(i, j)` is `j * nx + i`.
pub fn build_flat_torus(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<TriSurface> {
    if nx < 3 || ny < 3 {
        return Err(Error::InvalidArgument(format!(
            "torus grid {nx} x {ny} must be at least 3 x 3"
        )));
    }
    for l in [lx, ly] {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::InvalidArgument(format!("bad torus side {l}")));
        }
    }
    let hx = lx / nx as f64;
    let hy = ly / ny as f64;
    let diag = hx.hypot(hy);
    let id = |i: usize, j: usize| (j % ny) * nx + (i % nx);
    let mut tris = Vec::with_capacity(2 * nx * ny);
    let mut lens = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let a = id(i, j);
            let b = id(i + 1, j);
            let c = id(i, j + 1);
            let d = id(i + 1, j + 1);
            tris.push([a, b, d]);
            lens.push([hy, diag, hx]);
            tris.push([a, d, c]);
            lens.push([hx, hy, diag]);
        }
    }
    TriSurface::from_parts(nx * ny, tris, lens, &ConeDivisor::empty(), None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolygonGeometry {
    Euclidean,
    Hyperbolic,
}

/// Double of a polygon across its boundary: two mirror copies glued side to
/// side, producing a sphere whose corners become cone points of order
/// `alpha - 1` (interior angle `pi alpha` at each corner).
///
/// Supported shapes: any triangle, Euclidean (`sum alpha = 1`) or hyperbolic
/// (`sum alpha < 1`); and the Euclidean unit square (`alpha = 1/2` four
/// times).  `resolution` subdivides each polygon side into that many
/// segments.
pub fn build_doubled_polygon(
    angles: &[f64],
    geometry: PolygonGeometry,
    resolution: usize,
) -> Result<TriSurface> {
    for &a in angles {
        if !(a.is_finite() && a > 0.0 && a < 1.0) {
            return Err(Error::UnrealizableAngles(format!(
                "interior angle fraction {a} is outside (0, 1)"
            )));
        }
    }
    let sum: f64 = angles.iter().sum();
    match (angles.len(), geometry) {
        (3, PolygonGeometry::Euclidean) => {
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::UnrealizableAngles(format!(
                    "flat triangle angles must sum to pi; fractions sum to {sum}"
                )));
            }
            if resolution < 3 {
                return Err(Error::InvalidArgument(
                    "triangle resolution must be at least 3".into(),
                ));
            }
            double_triangle([angles[0], angles[1], angles[2]], geometry, resolution)
        }
        (3, PolygonGeometry::Hyperbolic) => {
            if sum >= 1.0 - 1e-9 {
                return Err(Error::UnrealizableAngles(format!(
                    "hyperbolic triangle needs angle sum < pi; fractions sum to {sum}"
                )));
            }
            if resolution < 3 {
                return Err(Error::InvalidArgument(
                    "triangle resolution must be at least 3".into(),
                ));
            }
            double_triangle([angles[0], angles[1], angles[2]], geometry, resolution)
        }
        (4, PolygonGeometry::Euclidean)
            if angles.iter().all(|&a| (a - 0.5).abs() <= 1e-12) =>
        {
            if resolution < 2 {
                return Err(Error::InvalidArgument(
                    "square resolution must be at least 2".into(),
                ));
            }
            double_square(resolution)
        }
        _ => Err(Error::InvalidArgument(
            "supported doubled polygons: any triangle, or the square with four right angles"
                .into(),
        )),
    }
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Rescale the fan around a polygon corner so the recomputed corner angle is
/// exactly `gamma`: each fan triangle keeps its two corner-adjacent lengths
/// and gets the opposite edge re-solved from the law of cosines at its share
/// of the target angle.
fn fix_corner(
    length: &mut BTreeMap<(usize, usize), f64>,
    front_tris: &[[usize; 3]],
    corner: usize,
    gamma: f64,
) {
    let fan: Vec<[usize; 2]> = front_tris
        .iter()
        .filter(|t| t.contains(&corner))
        .map(|t| {
            let others: Vec<usize> = t.iter().copied().filter(|&v| v != corner).collect();
            [others[0], others[1]]
        })
        .collect();
    let angles: Vec<f64> = fan
        .iter()
        .map(|o| {
            let a = length[&edge_key(corner, o[0])];
            let b = length[&edge_key(corner, o[1])];
            let opp = length[&edge_key(o[0], o[1])];
            angle_from(a, b, opp)
        })
        .collect();
    let total: f64 = angles.iter().sum();
    for (o, ang) in fan.iter().zip(&angles) {
        let a = length[&edge_key(corner, o[0])];
        let b = length[&edge_key(corner, o[1])];
        let share = gamma * (ang / total);
        let l2 = a * a + b * b - 2.0 * a * b * share.cos();
        length.insert(edge_key(o[0], o[1]), l2.sqrt());
    }
}

/// Glue two copies of a triangulated polygon along the shared boundary.
///
/// The adjacency is written out explicitly rather than inferred from vertex
/// pairs, because the doubling makes pairs ambiguous: an interior edge whose
/// endpoints both lie on the seam (the diagonal cutting across a corner cell)
/// exists once per sheet, so four triangle slots share one vertex pair.
fn double_mesh(
    front_count: usize,
    is_boundary: &[bool],
    front_tris: &[[usize; 3]],
    length: &BTreeMap<(usize, usize), f64>,
    corners: &[(usize, f64)],
    chart: &[(f64, f64)],
) -> Result<TriSurface> {
    let mut positions: Vec<ChartPos> = (0..front_count)
        .map(|i| ChartPos {
            side: 0,
            x: chart[i].0,
            y: chart[i].1,
        })
        .collect();
    let mut back_id = vec![usize::MAX; front_count];
    let mut next = front_count;
    for i in 0..front_count {
        if is_boundary[i] {
            back_id[i] = i;
        } else {
            back_id[i] = next;
            next += 1;
            positions.push(ChartPos {
                side: 1,
                x: chart[i].0,
                y: chart[i].1,
            });
        }
    }
    let mut tris = Vec::with_capacity(2 * front_tris.len());
    let mut lens = Vec::with_capacity(2 * front_tris.len());
    for t in front_tris {
        let l = [
            length[&edge_key(t[1], t[2])],
            length[&edge_key(t[2], t[0])],
            length[&edge_key(t[0], t[1])],
        ];
        tris.push(*t);
        lens.push(l);
        // mirror copy with swapped orientation; lengths follow their edges
        tris.push([back_id[t[0]], back_id[t[2]], back_id[t[1]]]);
        lens.push([l[0], l[2], l[1]]);
    }

    // front triangle i sits at 2i, its mirror at 2i + 1; swapping slots 1 and
    // 2 of the mirror sends each front edge slot to its mirrored slot
    let sig = |e: usize| [0usize, 2, 1][e];
    let mut front_slots: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
    for (i, t) in front_tris.iter().enumerate() {
        for e in 0..3 {
            let key = edge_key(t[(e + 1) % 3], t[(e + 2) % 3]);
            front_slots.entry(key).or_default().push((i, e));
        }
    }
    let mut glue = vec![[(usize::MAX, usize::MAX); 3]; tris.len()];
    for (key, slots) in &front_slots {
        match slots[..] {
            // polygon boundary: seam between a front triangle and its mirror
            [(i, e)] => {
                debug_assert!(is_boundary[key.0] && is_boundary[key.1]);
                glue[2 * i][e] = (2 * i + 1, sig(e));
                glue[2 * i + 1][sig(e)] = (2 * i, e);
            }
            // interior: pair within the sheet, mirrored on the back
            [(i, e), (j, f)] => {
                glue[2 * i][e] = (2 * j, f);
                glue[2 * j][f] = (2 * i, e);
                glue[2 * i + 1][sig(e)] = (2 * j + 1, sig(f));
                glue[2 * j + 1][sig(f)] = (2 * i + 1, sig(e));
            }
            _ => {
                return Err(Error::MeshConstruction(format!(
                    "polygon edge {key:?} borders {} triangles",
                    slots.len()
                )));
            }
        }
    }

    let divisor = ConeDivisor::new(corners.to_vec())?;
    TriSurface::from_parts_glued(next, tris, lens, glue, &divisor, Some(positions))
}

fn mink(p: [f64; 3], q: [f64; 3]) -> f64 {
    p[0] * q[0] + p[1] * q[1] - p[2] * q[2]
}

fn hyp_normalize(p: [f64; 3]) -> [f64; 3] {
    let s = (-mink(p, p)).sqrt();
    [p[0] / s, p[1] / s, p[2] / s]
}

fn hyp_dist(p: [f64; 3], q: [f64; 3]) -> f64 {
    (-mink(p, q)).max(1.0).acosh()
}

fn double_triangle(al: [f64; 3], geometry: PolygonGeometry, n: usize) -> Result<TriSurface> {
    let hyper = matches!(geometry, PolygonGeometry::Hyperbolic);
    let aa = [PI * al[0], PI * al[1], PI * al[2]];
    // triangle vertices in the model space; third coordinate unused when flat
    let (v0, v1, v2) = if hyper {
        // angles determine the sides; vertices sit on the unit hyperboloid
        let cosh_side = |k: usize| {
            let i = (k + 1) % 3;
            let j = (k + 2) % 3;
            (aa[k].cos() + aa[i].cos() * aa[j].cos()) / (aa[i].sin() * aa[j].sin())
        };
        let b = cosh_side(1).acosh(); // side v0-v2
        let c = cosh_side(2).acosh(); // side v0-v1
        (
            [0.0, 0.0, 1.0],
            [c.sinh(), 0.0, c.cosh()],
            [b.sinh() * aa[0].cos(), b.sinh() * aa[0].sin(), b.cosh()],
        )
    } else {
        // law of sines with unit circumdiameter
        let b = aa[1].sin();
        let c = aa[2].sin();
        (
            [0.0, 0.0, 0.0],
            [c, 0.0, 0.0],
            [b * aa[0].cos(), b * aa[0].sin(), 0.0],
        )
    };

    // row start of the triangular index grid; q * (2n + 3 - q) is even, and
    // this form avoids the q = 0 underflow of the q * (q - 1) / 2 spelling
    let offset = |q: usize| q * (2 * n + 3 - q) / 2;
    let id = |p: usize, q: usize| offset(q) + p;
    let front_count = (n + 1) * (n + 2) / 2;
    let mut pts = Vec::with_capacity(front_count);
    let mut chart = Vec::with_capacity(front_count);
    let mut is_boundary = Vec::with_capacity(front_count);
    for q in 0..=n {
        for p in 0..=(n - q) {
            let (w0, w1, w2) = ((n - p - q) as f64, p as f64, q as f64);
            let raw = [
                w0 * v0[0] + w1 * v1[0] + w2 * v2[0],
                w0 * v0[1] + w1 * v1[1] + w2 * v2[1],
                w0 * v0[2] + w1 * v1[2] + w2 * v2[2],
            ];
            let pt = if hyper {
                hyp_normalize(raw)
            } else {
                let inv = 1.0 / n as f64;
                [raw[0] * inv, raw[1] * inv, 0.0]
            };
            chart.push(if hyper {
                // Poincare disk coordinates
                (pt[0] / (1.0 + pt[2]), pt[1] / (1.0 + pt[2]))
            } else {
                (pt[0], pt[1])
            });
            pts.push(pt);
            is_boundary.push(p == 0 || q == 0 || p + q == n);
        }
    }
    let dist = |a: usize, b: usize| {
        if hyper {
            hyp_dist(pts[a], pts[b])
        } else {
            (pts[a][0] - pts[b][0]).hypot(pts[a][1] - pts[b][1])
        }
    };

    let mut front_tris: Vec<[usize; 3]> = Vec::with_capacity(n * n);
    for q in 0..n {
        for p in 0..(n - q) {
            front_tris.push([id(p, q), id(p + 1, q), id(p, q + 1)]);
            if p + q + 2 <= n {
                front_tris.push([id(p + 1, q), id(p + 1, q + 1), id(p, q + 1)]);
            }
        }
    }
    let mut length: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for t in &front_tris {
        for e in 0..3 {
            let u = t[(e + 1) % 3];
            let v = t[(e + 2) % 3];
            length
                .entry(edge_key(u, v))
                .or_insert_with(|| dist(u, v));
        }
    }
    let corner_ids = [id(0, 0), id(n, 0), id(0, n)];
    for (c, &cid) in corner_ids.iter().enumerate() {
        fix_corner(&mut length, &front_tris, cid, aa[c]);
    }
    let corners: Vec<(usize, f64)> = corner_ids
        .iter()
        .zip(&al)
        .map(|(&cid, &a)| (cid, a - 1.0))
        .collect();
    double_mesh(
        front_count,
        &is_boundary,
        &front_tris,
        &length,
        &corners,
        &chart,
    )
}

fn double_square(n: usize) -> Result<TriSurface> {
    let h = 1.0 / n as f64;
    let diag = h.hypot(h);
    let id = |p: usize, q: usize| q * (n + 1) + p;
    let front_count = (n + 1) * (n + 1);
    let mut front_tris = Vec::with_capacity(2 * n * n);
    let mut length: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for q in 0..n {
        for p in 0..n {
            let a = id(p, q);
            let b = id(p + 1, q);
            let c = id(p, q + 1);
            let d = id(p + 1, q + 1);
            front_tris.push([a, b, d]);
            front_tris.push([a, d, c]);
            length.insert(edge_key(a, b), h);
            length.insert(edge_key(c, d), h);
            length.insert(edge_key(a, c), h);
            length.insert(edge_key(b, d), h);
            length.insert(edge_key(a, d), diag);
        }
    }
    let corner_ids = [id(0, 0), id(n, 0), id(0, n), id(n, n)];
    for &cid in &corner_ids {
        fix_corner(&mut length, &front_tris, cid, PI / 2.0);
    }
    let corners: Vec<(usize, f64)> = corner_ids.iter().map(|&cid| (cid, -0.5)).collect();
    let mut is_boundary = vec![false; front_count];
    let mut chart = Vec::with_capacity(front_count);
    for q in 0..=n {
        for p in 0..=n {
            is_boundary[id(p, q)] = p == 0 || p == n || q == 0 || q == n;
            chart.push((p as f64 * h, q as f64 * h));
        }
    }
    double_mesh(
        front_count,
        &is_boundary,
        &front_tris,
        &length,
        &corners,
        &chart,
    )
}
