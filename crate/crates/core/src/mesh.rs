//! Conforming triangular meshes of rectangular domains.
//!
//! Meshes are built from a structured grid whose cells are split into two
//! triangles each, with the split diagonal alternating by cell parity. An
//! optional seeded jitter displaces interior vertices to emulate unstructured
//! meshes while keeping the rectangle's boundary exact. The builder guarantees
//! a maximum edge length of `1.5 * target_h`, shrinking the grid spacing when
//! jitter would otherwise stretch diagonals past that bound.
//!
//! The text format is line oriented:
//!
//! ```text
//! trimesh v1 <nv> <nt> <nb>
//! x1 x2          (nv vertex lines)
//! i j k          (nt triangle lines, 0-based, counter-clockwise)
//! i j            (nb boundary-edge lines)
//! ```
//!
//! Comment lines starting with `#` may appear after the header; the builder
//! records the pipeline configuration hash as `# config <hex>`.

use crate::error::{Error, Result};
use crate::geom::{signed_area_x2, Point2, Rect};
use crate::scalar::Scalar;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// A conforming triangle mesh of a rectangular domain.
#[derive(Debug, Clone)]
pub struct TriMesh<T> {
    /// Vertex coordinates.
    pub vertices: Vec<Point2<T>>,
    /// Triangles as vertex index triples, counter-clockwise.
    pub triangles: Vec<[usize; 3]>,
    /// Undirected boundary edges as vertex index pairs.
    pub boundary_edges: Vec<[usize; 2]>,
    /// The meshed rectangle.
    pub domain: Rect<T>,
}

impl<T: Scalar> TriMesh<T> {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Area of triangle `t`.
    pub fn triangle_area(&self, t: usize) -> T {
        let [a, b, c] = self.triangles[t];
        signed_area_x2(self.vertices[a], self.vertices[b], self.vertices[c]) / T::of(2.0)
    }

    /// Shortest edge length over all triangles.
    pub fn min_edge_length(&self) -> T {
        self.edge_length_fold(T::infinity(), |acc, l| acc.min(l))
    }

    /// Longest edge length over all triangles.
    pub fn max_edge_length(&self) -> T {
        self.edge_length_fold(T::zero(), |acc, l| acc.max(l))
    }

    fn edge_length_fold(&self, init: T, f: impl Fn(T, T) -> T) -> T {
        let mut acc = init;
        for tri in &self.triangles {
            for e in 0..3 {
                let p = self.vertices[tri[e]];
                let q = self.vertices[tri[(e + 1) % 3]];
                acc = f(acc, p.dist(q));
            }
        }
        acc
    }

    /// Checks the structural invariants: finite vertices, positive triangle
    /// areas, edge conformity (interior edges shared by exactly two triangles,
    /// boundary edges by exactly one), and boundary edges covering the
    /// rectangle's perimeter.
    pub fn validate(&self) -> Result<()> {
        if self.vertices.is_empty() || self.triangles.is_empty() {
            return Err(Error::invalid("mesh", "empty vertex or triangle list"));
        }
        for (i, v) in self.vertices.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Numeric(format!("non-finite vertex {i}")));
            }
        }
        let nv = self.vertices.len();
        let mut edge_count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for &i in tri {
                if i >= nv {
                    return Err(Error::invalid("mesh", format!("triangle {t} references vertex {i} out of range")));
                }
            }
            let area2 = signed_area_x2(
                self.vertices[tri[0]],
                self.vertices[tri[1]],
                self.vertices[tri[2]],
            );
            if area2 <= T::zero() {
                return Err(Error::Numeric(format!(
                    "triangle {t} has non-positive area {:e}",
                    area2.to_f64_lossy() / 2.0
                )));
            }
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                *edge_count.entry(key).or_insert(0) += 1;
            }
        }
        let mut boundary_set: BTreeMap<(usize, usize), ()> = BTreeMap::new();
        for &[a, b] in &self.boundary_edges {
            if a >= nv || b >= nv || a == b {
                return Err(Error::invalid("mesh", "invalid boundary edge"));
            }
            boundary_set.insert((a.min(b), a.max(b)), ());
        }
        if boundary_set.len() != self.boundary_edges.len() {
            return Err(Error::invalid("mesh", "duplicate boundary edge"));
        }
        for (edge, count) in &edge_count {
            let on_boundary = boundary_set.contains_key(edge);
            match (count, on_boundary) {
                (1, true) | (2, false) => {}
                (1, false) => {
                    return Err(Error::invalid(
                        "mesh",
                        format!("edge {edge:?} borders one triangle but is not marked boundary"),
                    ))
                }
                (2, true) => {
                    return Err(Error::invalid(
                        "mesh",
                        format!("interior edge {edge:?} marked as boundary"),
                    ))
                }
                _ => {
                    return Err(Error::invalid(
                        "mesh",
                        format!("edge {edge:?} shared by {count} triangles"),
                    ))
                }
            }
        }
        for key in boundary_set.keys() {
            if !edge_count.contains_key(key) {
                return Err(Error::invalid("mesh", format!("boundary edge {key:?} not in any triangle")));
            }
        }
        // Boundary edges must lie on the rectangle's boundary and tile its perimeter.
        let tol = T::of(1e-9) * (self.domain.width() + self.domain.height());
        let mut perim = T::zero();
        for &[a, b] in &self.boundary_edges {
            let (p, q) = (self.vertices[a], self.vertices[b]);
            let on_side = (p.x - self.domain.xmin).abs() <= tol && (q.x - self.domain.xmin).abs() <= tol
                || (p.x - self.domain.xmax).abs() <= tol && (q.x - self.domain.xmax).abs() <= tol
                || (p.y - self.domain.ymin).abs() <= tol && (q.y - self.domain.ymin).abs() <= tol
                || (p.y - self.domain.ymax).abs() <= tol && (q.y - self.domain.ymax).abs() <= tol;
            if !on_side {
                return Err(Error::invalid("mesh", "boundary edge off the domain boundary"));
            }
            perim += p.dist(q);
        }
        let rel = ((perim - self.domain.perimeter()) / self.domain.perimeter()).abs();
        if rel > T::of(1e-10) {
            return Err(Error::Numeric(format!(
                "boundary edges cover {:e} of perimeter {:e}",
                perim.to_f64_lossy(),
                self.domain.perimeter().to_f64_lossy()
            )));
        }
        Ok(())
    }

    /// Writes the mesh in `trimesh v1` text form. When `config_hash` is given
    /// it is recorded as a `# config <hex>` comment after the header.
    pub fn write_to<W: Write>(&self, mut w: W, config_hash: Option<u64>) -> Result<()> {
        writeln!(
            w,
            "trimesh v1 {} {} {}",
            self.vertices.len(),
            self.triangles.len(),
            self.boundary_edges.len()
        )?;
        if let Some(h) = config_hash {
            writeln!(w, "# config {h:016x}")?;
        }
        for v in &self.vertices {
            writeln!(w, "{} {}", v.x.to_f64_lossy(), v.y.to_f64_lossy())?;
        }
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        for e in &self.boundary_edges {
            writeln!(w, "{} {}", e[0], e[1])?;
        }
        Ok(())
    }

    /// Parses a `trimesh v1` stream. Returns the mesh and the config hash if
    /// one was recorded.
    pub fn read_from<R: BufRead>(r: R, origin: &str) -> Result<(Self, Option<u64>)> {
        let fail = |reason: &str| Error::format(origin, reason);
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| fail("empty file"))??;
        let head: Vec<&str> = header.split_whitespace().collect();
        if head.len() != 5 || head[0] != "trimesh" || head[1] != "v1" {
            return Err(fail("expected header `trimesh v1 <nv> <nt> <nb>`"));
        }
        let parse_count = |s: &str| s.parse::<usize>().map_err(|_| fail("bad count in header"));
        let (nv, nt, nb) = (parse_count(head[2])?, parse_count(head[3])?, parse_count(head[4])?);
        let mut config_hash = None;
        let mut data_lines = Vec::with_capacity(nv + nt + nb);
        for line in lines {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('#') {
                let toks: Vec<&str> = rest.split_whitespace().collect();
                if toks.len() == 2 && toks[0] == "config" {
                    config_hash = Some(
                        u64::from_str_radix(toks[1], 16).map_err(|_| fail("bad config hash"))?,
                    );
                }
                continue;
            }
            data_lines.push(trimmed.to_string());
        }
        if data_lines.len() != nv + nt + nb {
            return Err(fail(&format!(
                "expected {} data lines, found {}",
                nv + nt + nb,
                data_lines.len()
            )));
        }
        let mut vertices = Vec::with_capacity(nv);
        for line in &data_lines[..nv] {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 2 {
                return Err(fail("vertex line must hold two coordinates"));
            }
            let x: f64 = toks[0].parse().map_err(|_| fail("bad vertex coordinate"))?;
            let y: f64 = toks[1].parse().map_err(|_| fail("bad vertex coordinate"))?;
            vertices.push(Point2::new(T::of(x), T::of(y)));
        }
        let parse_idx =
            |s: &str| s.parse::<usize>().map_err(|_| fail("bad vertex index"));
        let mut triangles = Vec::with_capacity(nt);
        for line in &data_lines[nv..nv + nt] {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(fail("triangle line must hold three indices"));
            }
            triangles.push([parse_idx(toks[0])?, parse_idx(toks[1])?, parse_idx(toks[2])?]);
        }
        let mut boundary_edges = Vec::with_capacity(nb);
        for line in &data_lines[nv + nt..] {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 2 {
                return Err(fail("boundary edge line must hold two indices"));
            }
            boundary_edges.push([parse_idx(toks[0])?, parse_idx(toks[1])?]);
        }
        let (mut xmin, mut xmax) = (T::infinity(), T::neg_infinity());
        let (mut ymin, mut ymax) = (T::infinity(), T::neg_infinity());
        for v in &vertices {
            xmin = xmin.min(v.x);
            xmax = xmax.max(v.x);
            ymin = ymin.min(v.y);
            ymax = ymax.max(v.y);
        }
        let mesh = TriMesh {
            vertices,
            triangles,
            boundary_edges,
            domain: Rect::new(xmin, xmax, ymin, ymax),
        };
        Ok((mesh, config_hash))
    }

    /// Writes the mesh to `path`.
    pub fn save(&self, path: impl AsRef<Path>, config_hash: Option<u64>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_to(BufWriter::new(file), config_hash)
    }

    /// Loads a mesh from `path`, checking the recorded config hash when
    /// `expected_hash` is given.
    pub fn load(path: impl AsRef<Path>, expected_hash: Option<u64>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        let (mesh, found) = Self::read_from(BufReader::new(file), &path.display().to_string())?;
        if let (Some(expected), Some(found)) = (expected_hash, found) {
            if expected != found {
                return Err(Error::ConfigHashMismatch {
                    path: path.display().to_string(),
                    found,
                    expected,
                });
            }
        }
        Ok(mesh)
    }
}

/// Builds a conforming triangulation of `domain` with edges no longer than
/// `1.5 * target_h`. `jitter` in `[0, 0.3]` displaces interior vertices by up
/// to that fraction of the local grid spacing (half-spacing per coordinate),
/// deterministically from `seed`; boundary vertices stay put.
pub fn build_rect_mesh<T: Scalar>(
    domain: Rect<T>,
    target_h: T,
    jitter: T,
    seed: u64,
) -> Result<TriMesh<T>> {
    if !domain.is_valid() {
        return Err(Error::invalid("domain", "rectangle must have positive extent"));
    }
    if !(target_h > T::zero()) || !target_h.is_finite() {
        return Err(Error::invalid("target_h", "mesh size must be positive and finite"));
    }
    if jitter < T::zero() || jitter > T::of(0.3) {
        return Err(Error::invalid("jitter", "jitter fraction must lie in [0, 0.3]"));
    }
    // Cap the spacing so even jittered diagonals respect the edge-length bound:
    // the longest possible edge is sqrt(hx^2 + hy^2) * (1 + jitter).
    let cap = target_h * (T::of(1.5) / (T::SQRT_2() * (T::one() + jitter))).min(T::one());
    let nx = (domain.width() / cap).ceil().to_f64_lossy() as usize;
    let ny = (domain.height() / cap).ceil().to_f64_lossy() as usize;
    let (nx, ny) = (nx.max(1), ny.max(1));
    let hx = domain.width() / T::of(nx as f64);
    let hy = domain.height() / T::of(ny as f64);

    let idx = |ix: usize, iy: usize| iy * (nx + 1) + ix;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for iy in 0..=ny {
        for ix in 0..=nx {
            // Corners exact so the boundary tiles the rectangle without drift.
            let x = if ix == nx {
                domain.xmax
            } else {
                domain.xmin + T::of(ix as f64) * hx
            };
            let y = if iy == ny {
                domain.ymax
            } else {
                domain.ymin + T::of(iy as f64) * hy
            };
            vertices.push(Point2::new(x, y));
        }
    }
    if jitter > T::zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half = T::of(0.5);
        for iy in 1..ny {
            for ix in 1..nx {
                let dx = (T::standard_uniform::<ChaCha8Rng>(&mut rng) * T::of(2.0) - T::one())
                    * jitter
                    * hx
                    * half;
                let dy = (T::standard_uniform::<ChaCha8Rng>(&mut rng) * T::of(2.0) - T::one())
                    * jitter
                    * hy
                    * half;
                let v = &mut vertices[idx(ix, iy)];
                v.x += dx;
                v.y += dy;
            }
        }
    }

    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let (v00, v10) = (idx(ix, iy), idx(ix + 1, iy));
            let (v01, v11) = (idx(ix, iy + 1), idx(ix + 1, iy + 1));
            if (ix + iy) % 2 == 0 {
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            } else {
                triangles.push([v00, v10, v01]);
                triangles.push([v10, v11, v01]);
            }
        }
    }

    let mut boundary_edges = Vec::with_capacity(2 * (nx + ny));
    for ix in 0..nx {
        boundary_edges.push([idx(ix, 0), idx(ix + 1, 0)]);
        boundary_edges.push([idx(ix, ny), idx(ix + 1, ny)]);
    }
    for iy in 0..ny {
        boundary_edges.push([idx(0, iy), idx(0, iy + 1)]);
        boundary_edges.push([idx(nx, iy), idx(nx, iy + 1)]);
    }

    let mesh = TriMesh {
        vertices,
        triangles,
        boundary_edges,
        domain,
    };
    mesh.validate()?;
    let max_edge = mesh.max_edge_length();
    if max_edge > T::of(1.5) * target_h {
        return Err(Error::Numeric(format!(
            "max edge {:e} exceeds 1.5 * target_h",
            max_edge.to_f64_lossy()
        )));
    }
    Ok(mesh)
}
