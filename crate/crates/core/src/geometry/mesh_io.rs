//! Plain-text exchange format for triangulated cone surfaces.
//!
//! ```text
//! conemesh 1
//! nodes <count>
//! cones <count>
//! <vertex> <order>          (one line per cone)
//! triangles <count>
//! <a> <b> <c> <l0> <l1> <l2> <t0>:<e0> <t1>:<e1> <t2>:<e2>
//! ```
//!
//! Each triangle row lists its vertices, the edge lengths opposite each
//! vertex, and the glued triangle slot for each edge in the same order.
//! Adjacency is explicit because vertex pairs do not determine it: a doubled
//! polygon carries two distinct edges between seam vertices wherever an
//! interior edge has both endpoints on the seam.
//!
//! Blank lines and `#` comments are allowed anywhere.  Floats are written in
//! shortest round-trip form, so a save/load cycle reproduces the surface
//! bitwise.  Chart positions are construction data and are not persisted.

use std::fmt::Write as _;
use std::path::Path;

use crate::geometry::{ConeDivisor, TriSurface};
use crate::{Error, Result};

pub fn write_tri_mesh(surface: &TriSurface) -> Result<String> {
    let mut out = String::new();
    out.push_str("conemesh 1\n");
    let _ = writeln!(out, "nodes {}", surface.node_count());
    let _ = writeln!(out, "cones {}", surface.cones().len());
    for &(v, beta) in surface.cones() {
        let _ = writeln!(out, "{v} {beta}");
    }
    let _ = writeln!(out, "triangles {}", surface.tri_count());
    for ((tri, l), g) in surface
        .tris()
        .iter()
        .zip(surface.tri_lengths())
        .zip(surface.gluing())
    {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {}:{} {}:{} {}:{}",
            tri[0], tri[1], tri[2], l[0], l[1], l[2], g[0].0, g[0].1, g[1].0, g[1].1, g[2].0,
            g[2].1
        );
    }
    Ok(out)
}

pub fn save_tri_mesh(surface: &TriSurface, path: &Path) -> Result<()> {
    let text = write_tri_mesh(surface)?;
    std::fs::write(path, text)?;
    Ok(())
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate(),
        }
    }

    /// Next significant line as (1-based number, trimmed content).
    fn next_content(&mut self) -> Option<(usize, &'a str)> {
        for (idx, raw) in self.inner.by_ref() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            return Some((idx + 1, line));
        }
        None
    }
}

fn bad(line: usize, msg: impl Into<String>) -> Error {
    Error::MeshFormat {
        line,
        msg: msg.into(),
    }
}

fn expect_counted<'a>(
    lines: &mut Lines<'a>,
    keyword: &str,
) -> Result<(usize, usize)> {
    let (no, line) = lines
        .next_content()
        .ok_or_else(|| bad(0, format!("missing '{keyword} <count>' line")))?;
    let mut parts = line.split_whitespace();
    match (parts.next(), parts.next(), parts.next()) {
        (Some(k), Some(count), None) if k == keyword => {
            let count: usize = count
                .parse()
                .map_err(|_| bad(no, format!("bad {keyword} count '{count}'")))?;
            Ok((no, count))
        }
        _ => Err(bad(no, format!("expected '{keyword} <count>', got '{line}'"))),
    }
}

fn parse_slot(no: usize, token: &str) -> Result<(usize, usize)> {
    let (t, e) = token
        .split_once(':')
        .ok_or_else(|| bad(no, format!("expected '<tri>:<edge>', got '{token}'")))?;
    let t: usize = t
        .parse()
        .map_err(|_| bad(no, format!("bad glue triangle '{t}'")))?;
    let e: usize = e
        .parse()
        .map_err(|_| bad(no, format!("bad glue edge '{e}'")))?;
    Ok((t, e))
}

pub fn parse_tri_mesh(text: &str) -> Result<TriSurface> {
    let mut lines = Lines::new(text);
    let (no, header) = lines
        .next_content()
        .ok_or_else(|| bad(0, "empty mesh file"))?;
    if header != "conemesh 1" {
        return Err(bad(no, format!("expected header 'conemesh 1', got '{header}'")));
    }
    let (_, nodes) = expect_counted(&mut lines, "nodes")?;
    let (_, cone_count) = expect_counted(&mut lines, "cones")?;
    let mut cones = Vec::with_capacity(cone_count);
    for _ in 0..cone_count {
        let (no, line) = lines
            .next_content()
            .ok_or_else(|| bad(0, "file ends inside the cone list"))?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(bad(no, format!("expected '<vertex> <order>', got '{line}'")));
        }
        let v: usize = parts[0]
            .parse()
            .map_err(|_| bad(no, format!("bad cone vertex '{}'", parts[0])))?;
        let beta: f64 = parts[1]
            .parse()
            .map_err(|_| bad(no, format!("bad cone order '{}'", parts[1])))?;
        cones.push((v, beta));
    }
    let (_, tri_count) = expect_counted(&mut lines, "triangles")?;
    let mut tris = Vec::with_capacity(tri_count);
    let mut lens = Vec::with_capacity(tri_count);
    let mut glue = Vec::with_capacity(tri_count);
    for _ in 0..tri_count {
        let (no, line) = lines
            .next_content()
            .ok_or_else(|| bad(0, "file ends inside the triangle list"))?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 9 {
            return Err(bad(
                no,
                format!(
                    "expected '<a> <b> <c> <l0> <l1> <l2> <t0>:<e0> <t1>:<e1> <t2>:<e2>', \
                     got '{line}'"
                ),
            ));
        }
        let mut tri = [0usize; 3];
        for (slot, p) in tri.iter_mut().zip(&parts[..3]) {
            *slot = p
                .parse()
                .map_err(|_| bad(no, format!("bad vertex id '{p}'")))?;
        }
        let mut l = [0.0f64; 3];
        for (slot, p) in l.iter_mut().zip(&parts[3..6]) {
            *slot = p
                .parse()
                .map_err(|_| bad(no, format!("bad edge length '{p}'")))?;
        }
        let mut g = [(0usize, 0usize); 3];
        for (slot, p) in g.iter_mut().zip(&parts[6..]) {
            *slot = parse_slot(no, p)?;
        }
        tris.push(tri);
        lens.push(l);
        glue.push(g);
    }
    if let Some((no, line)) = lines.next_content() {
        return Err(bad(no, format!("trailing content '{line}'")));
    }
    let divisor = ConeDivisor::new(cones)?;
    TriSurface::from_parts_glued(nodes, tris, lens, glue, &divisor, None)
}

pub fn load_tri_mesh(path: &Path) -> Result<TriSurface> {
    let text = std::fs::read_to_string(path)?;
    parse_tri_mesh(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_doubled_polygon, PolygonGeometry};

    #[test]
    fn round_trip_is_bitwise() {
        let s = build_doubled_polygon(&[0.25, 0.25, 0.25], PolygonGeometry::Hyperbolic, 6)
            .unwrap();
        let text = write_tri_mesh(&s).unwrap();
        let r = parse_tri_mesh(&text).unwrap();
        assert_eq!(s.node_count(), r.node_count());
        assert_eq!(s.tris(), r.tris());
        assert_eq!(s.tri_lengths(), r.tri_lengths());
        assert_eq!(s.gluing(), r.gluing());
        assert_eq!(s.cones(), r.cones());
        assert_eq!(s.ktilde(), r.ktilde());
        for v in 0..s.node_count() {
            let a: Vec<(usize, f64)> = s.stencil().neighbors(v).collect();
            let b: Vec<(usize, f64)> = r.stencil().neighbors(v).collect();
            assert_eq!(a, b, "stencil row {v}");
        }
        // second generation text identical byte for byte
        assert_eq!(text, write_tri_mesh(&r).unwrap());
    }

    #[test]
    fn reads_a_handwritten_mesh() {
        // doubled equilateral triangle: a three-vertex sphere whose vertices
        // carry the full curvature as smooth defects
        let text = "conemesh 1\nnodes 3\ncones 0\ntriangles 2\n\
                    0 1 2 1 1 1 1:0 1:2 1:1\n\
                    0 2 1 1 1 1 0:0 0:2 0:1\n";
        let s = parse_tri_mesh(text).unwrap();
        assert_eq!(s.euler_char(), 2);
        assert_eq!(s.tri_count(), 2);
    }

    #[test]
    fn reports_line_numbers() {
        let r = parse_tri_mesh("conemesh 2\n");
        assert!(matches!(r, Err(Error::MeshFormat { line: 1, .. })));

        let text = "# comment\nconemesh 1\nnodes 3\ncones 0\ntriangles 2\n\
                    0 1 2 1 1 1 1:0 1:2 1:1\n\
                    0 2 1 1 x 1 0:0 0:2 0:1\n";
        let r = parse_tri_mesh(text);
        assert!(matches!(r, Err(Error::MeshFormat { line: 7, .. })), "{r:?}");

        let r = parse_tri_mesh("conemesh 1\nnodes 3\ncones 0\ntriangles 5\n");
        assert!(matches!(r, Err(Error::MeshFormat { .. })));
    }

    #[test]
    fn rejects_inconsistent_glue() {
        // glue points both slots of an edge at the same partner slot
        let text = "conemesh 1\nnodes 3\ncones 0\ntriangles 2\n\
                    0 1 2 1 1 1 1:0 1:2 1:1\n\
                    0 2 1 1 1 1 0:0 0:1 0:2\n";
        let r = parse_tri_mesh(text);
        assert!(matches!(r, Err(Error::MeshConstruction(_))), "{r:?}");
    }
}
