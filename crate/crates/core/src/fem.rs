//! P1 finite element assembly on triangle meshes.
//!
//! Linear Lagrange elements give the classic closed forms used here:
//!
//! * element mass `(area/12) * [[2,1,1],[1,2,1],[1,1,2]]`,
//! * element stiffness `K_ij = (b_i b_j + c_i c_j) / (4 area)` with
//!   `b_i = y_j - y_k`, `c_i = x_k - x_j` (cyclic),
//! * boundary-edge mass `(len/6) * [[2,1],[1,2]]`.
//!
//! Point sources are represented by nodal interpolation of the mollifier
//! `delta_eps(x) = eps^2 / (pi^2 (x1^2 + eps^2)(x2^2 + eps^2))`, a product of
//! two Cauchy kernels with unit integral over the plane; receivers by the
//! barycentric interpolation weights of the containing triangle.

use crate::error::{Error, Result};
use crate::geom::{signed_area_x2, Point2};
use crate::mesh::TriMesh;
use crate::scalar::Scalar;
use crate::sparse::{SparseSymMatrix, SymCooBuilder};

/// The three matrices of the semidiscrete wave equation.
#[derive(Debug, Clone)]
pub struct FemMatrices<T> {
    /// Interior mass matrix `M`.
    pub mass: SparseSymMatrix<T>,
    /// Stiffness matrix `K` (Dirichlet energy).
    pub stiffness: SparseSymMatrix<T>,
    /// Boundary mass matrix `S` from the absorbing boundary term.
    pub surface_mass: SparseSymMatrix<T>,
}

/// Assembles mass, stiffness, and surface mass in one sweep.
pub fn assemble_all<T: Scalar>(mesh: &TriMesh<T>) -> Result<FemMatrices<T>> {
    Ok(FemMatrices {
        mass: assemble_mass(mesh)?,
        stiffness: assemble_stiffness(mesh)?,
        surface_mass: assemble_surface_mass(mesh)?,
    })
}

/// Consistent P1 mass matrix.
pub fn assemble_mass<T: Scalar>(mesh: &TriMesh<T>) -> Result<SparseSymMatrix<T>> {
    let mut b = SymCooBuilder::new(mesh.num_vertices());
    let twelfth = T::one() / T::of(12.0);
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let area = triangle_area_checked(mesh, t)?;
        let off = area * twelfth;
        let diag = off * T::of(2.0);
        for i in 0..3 {
            b.add(tri[i], tri[i], diag);
            for j in i + 1..3 {
                b.add(tri[i], tri[j], off);
            }
        }
    }
    Ok(b.build())
}

/// P1 stiffness matrix.
pub fn assemble_stiffness<T: Scalar>(mesh: &TriMesh<T>) -> Result<SparseSymMatrix<T>> {
    let mut bld = SymCooBuilder::new(mesh.num_vertices());
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let area = triangle_area_checked(mesh, t)?;
        let p: [Point2<T>; 3] = [
            mesh.vertices[tri[0]],
            mesh.vertices[tri[1]],
            mesh.vertices[tri[2]],
        ];
        // Gradient coefficients of the barycentric basis.
        let b = [p[1].y - p[2].y, p[2].y - p[0].y, p[0].y - p[1].y];
        let c = [p[2].x - p[1].x, p[0].x - p[2].x, p[1].x - p[0].x];
        let quarter_area_inv = T::one() / (T::of(4.0) * area);
        for i in 0..3 {
            for j in i..3 {
                let v = (b[i] * b[j] + c[i] * c[j]) * quarter_area_inv;
                bld.add(tri[i], tri[j], v);
            }
        }
    }
    Ok(bld.build())
}

/// Boundary mass matrix over the marked boundary edges; zero elsewhere.
pub fn assemble_surface_mass<T: Scalar>(mesh: &TriMesh<T>) -> Result<SparseSymMatrix<T>> {
    let mut b = SymCooBuilder::new(mesh.num_vertices());
    let sixth = T::one() / T::of(6.0);
    for &[i, j] in &mesh.boundary_edges {
        let len = mesh.vertices[i].dist(mesh.vertices[j]);
        if !(len > T::zero()) {
            return Err(Error::Numeric(format!("degenerate boundary edge ({i}, {j})")));
        }
        let off = len * sixth;
        let diag = off * T::of(2.0);
        b.add(i, i, diag);
        b.add(j, j, diag);
        b.add(i, j, off);
    }
    Ok(b.build())
}

fn triangle_area_checked<T: Scalar>(mesh: &TriMesh<T>, t: usize) -> Result<T> {
    let area = mesh.triangle_area(t);
    if !(area > T::zero()) || !area.is_finite() {
        return Err(Error::Numeric(format!(
            "triangle {t} has non-positive area {:e}",
            area.to_f64_lossy()
        )));
    }
    Ok(area)
}

/// Nodal interpolation of the mollified point source centered at `center`.
///
/// The mollifier peaks at `1 / (pi^2 eps^2)` and integrates to one over the
/// plane; over a bounded domain its integral is the product of two arctan
/// differences (see [`mollifier_domain_integral`]).
pub fn mollified_delta<T: Scalar>(
    mesh: &TriMesh<T>,
    center: Point2<T>,
    epsilon: T,
) -> Result<Vec<T>> {
    if !(epsilon > T::zero()) || !epsilon.is_finite() {
        return Err(Error::invalid("epsilon", "mollifier width must be positive"));
    }
    if !center.is_finite() {
        return Err(Error::invalid("center", "source position must be finite"));
    }
    let eps2 = epsilon * epsilon;
    let pi2 = T::PI() * T::PI();
    Ok(mesh
        .vertices
        .iter()
        .map(|&v| {
            let dx = v.x - center.x;
            let dy = v.y - center.y;
            eps2 / (pi2 * (dx * dx + eps2) * (dy * dy + eps2))
        })
        .collect())
}

/// Exact integral of the mollifier over the mesh's rectangular domain.
pub fn mollifier_domain_integral<T: Scalar>(mesh: &TriMesh<T>, center: Point2<T>, epsilon: T) -> T {
    let d = &mesh.domain;
    let span = |lo: T, hi: T, c: T| (((hi - c) / epsilon).atan() - ((lo - c) / epsilon).atan()) / T::PI();
    span(d.xmin, d.xmax, center.x) * span(d.ymin, d.ymax, center.y)
}

/// Barycentric interpolation weights of `point` in its containing triangle.
///
/// Returns the three `(vertex, weight)` pairs; weights are non-negative and
/// sum to one. When the point sits on a shared edge or vertex, the triangle
/// with the lowest index wins, making the choice deterministic.
pub fn receiver_weights<T: Scalar>(
    mesh: &TriMesh<T>,
    point: Point2<T>,
) -> Result<[(usize, T); 3]> {
    if !point.is_finite() {
        return Err(Error::invalid("point", "receiver position must be finite"));
    }
    let tol = T::of(1e-12)
        * (mesh.domain.width() + mesh.domain.height()).max(T::one());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let a = mesh.vertices[tri[0]];
        let b = mesh.vertices[tri[1]];
        let c = mesh.vertices[tri[2]];
        let area2 = signed_area_x2(a, b, c);
        let la = signed_area_x2(point, b, c) / area2;
        let lb = signed_area_x2(a, point, c) / area2;
        let lc = T::one() - la - lb;
        if la >= -tol && lb >= -tol && lc >= -tol {
            let _ = t;
            return Ok([(tri[0], la), (tri[1], lb), (tri[2], lc)]);
        }
    }
    Err(Error::OutOfDomain {
        x: point.x.to_f64_lossy(),
        y: point.y.to_f64_lossy(),
    })
}

/// Dense receiver vector `d` with the three interpolation weights scattered
/// into a length-`n` vector.
pub fn receiver_vector<T: Scalar>(mesh: &TriMesh<T>, point: Point2<T>) -> Result<Vec<T>> {
    let w = receiver_weights(mesh, point)?;
    let mut d = vec![T::zero(); mesh.num_vertices()];
    for (i, wi) in w {
        d[i] += wi;
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rect;
    use crate::mesh::build_rect_mesh;
    use ndarray::Array2;

    /// A single unit right triangle, built by hand (bypasses rectangle-specific
    /// validation on purpose).
    fn unit_right_triangle() -> TriMesh<f64> {
        TriMesh {
            vertices: vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(0.0, 1.0),
            ],
            triangles: vec![[0, 1, 2]],
            boundary_edges: vec![[0, 1], [1, 2], [2, 0]],
            domain: Rect::unit(),
        }
    }

    #[test]
    fn element_mass_matches_closed_form() {
        // area 1/2 -> (1/24) * [[2,1,1],[1,2,1],[1,1,2]]
        let m = assemble_mass(&unit_right_triangle()).unwrap();
        let e = 1.0 / 24.0;
        let want = [[2.0 * e, e, e], [e, 2.0 * e, e], [e, e, 2.0 * e]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((m.entry(i, j) - want[i][j]).abs() < 1e-15, "({i},{j})");
            }
        }
    }

    #[test]
    fn element_stiffness_matches_closed_form() {
        // (1/2) * [[2,-1,-1],[-1,1,0],[-1,0,1]]
        let k = assemble_stiffness(&unit_right_triangle()).unwrap();
        let want = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k.entry(i, j) - want[i][j]).abs() < 1e-15, "({i},{j})");
            }
        }
    }

    #[test]
    fn surface_mass_matches_closed_form() {
        let s = assemble_surface_mass(&unit_right_triangle()).unwrap();
        // Edge (0,1) has length 1: contributes 1/3 diagonal, 1/6 off-diagonal.
        // Vertex 1 also borders the hypotenuse of length sqrt(2).
        let r2 = std::f64::consts::SQRT_2;
        assert!((s.entry(0, 1) - 1.0 / 6.0).abs() < 1e-15);
        assert!((s.entry(1, 1) - (1.0 / 3.0 + r2 / 3.0)).abs() < 1e-15);
        assert!((s.entry(1, 2) - r2 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn stiffness_annihilates_constants() {
        let mesh = build_rect_mesh::<f64>(Rect::new(0.0, 2.0, 0.0, 1.0), 0.3, 0.2, 9).unwrap();
        let k = assemble_stiffness(&mesh).unwrap();
        let ones = vec![1.0; mesh.num_vertices()];
        let r = k.apply(&ones);
        let max = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max <= 1e-12, "K * 1 = {max:e}");
    }

    #[test]
    fn mass_sums_to_area_and_surface_to_perimeter() {
        let mesh = build_rect_mesh::<f64>(Rect::new(0.0, 3.0, 0.0, 2.0), 0.4, 0.25, 3).unwrap();
        let m = assemble_mass(&mesh).unwrap();
        let s = assemble_surface_mass(&mesh).unwrap();
        assert!(((m.sum_entries() - 6.0) / 6.0).abs() < 1e-10);
        assert!(((s.sum_entries() - 10.0) / 10.0).abs() < 1e-10);
    }

    #[test]
    fn mass_is_positive_definite() {
        let mesh = build_rect_mesh(Rect::unit(), 0.12, 0.2, 4).unwrap();
        let n = mesh.num_vertices();
        assert!(n <= 200, "keep the dense eigencheck small (n = {n})");
        let m = assemble_mass(&mesh).unwrap();
        let mut dense = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                dense[[i, j]] = m.entry(i, j);
            }
        }
        let (w, _) = crate::dense::jacobi_eigh(&dense).unwrap();
        assert!(w[0] > 0.0, "smallest mass eigenvalue {:e}", w[0]);
    }

    #[test]
    fn galerkin_energy_converges_second_order() {
        // v^T K v for the interpolant of sin(pi x) sin(pi y) on the unit square
        // approaches pi^2 / 2 at second order in h.
        let exact = std::f64::consts::PI * std::f64::consts::PI / 2.0;
        let mut errs = Vec::new();
        for &n in &[8usize, 16, 32] {
            let mesh = build_rect_mesh(Rect::unit(), 1.0 / n as f64, 0.0, 0).unwrap();
            let k = assemble_stiffness(&mesh).unwrap();
            let v: Vec<f64> = mesh
                .vertices
                .iter()
                .map(|p| (std::f64::consts::PI * p.x).sin() * (std::f64::consts::PI * p.y).sin())
                .collect();
            errs.push((k.bilinear(&v, &v) - exact).abs());
        }
        assert!(errs[1] < errs[0] / 3.0, "errors {errs:?}");
        assert!(errs[2] < errs[1] / 3.0, "errors {errs:?}");
    }

    #[test]
    fn mollifier_peak_and_domain_integral() {
        let mesh = build_rect_mesh(Rect::new(0.0, 10.0, 0.0, 10.0), 0.25, 0.0, 0).unwrap();
        let eps = 0.5;
        let center = Point2::new(5.0, 5.0);
        let d = mollified_delta(&mesh, center, eps).unwrap();
        // A grid node sits exactly at the center: value 1 / (pi eps)^2.
        let peak = 1.0 / (std::f64::consts::PI * std::f64::consts::PI * eps * eps);
        let got_peak = d.iter().cloned().fold(0.0f64, f64::max);
        assert!((got_peak - peak).abs() < 1e-12, "peak {got_peak} vs {peak}");
        // Mass-weighted sum approximates the exact domain integral.
        let m = assemble_mass(&mesh).unwrap();
        let ones = vec![1.0; mesh.num_vertices()];
        let quad = m.bilinear(&ones, &d);
        let exact = mollifier_domain_integral(&mesh, center, eps);
        assert!(
            ((quad - exact) / exact).abs() < 0.02,
            "quadrature {quad} vs analytic {exact}"
        );
        // Heavy Cauchy tails: the domain integral is well below one here.
        assert!(exact < 0.95 && exact > 0.5, "domain integral {exact}");
    }

    #[test]
    fn mollifier_rejects_bad_width() {
        let mesh = unit_right_triangle();
        assert!(mollified_delta(&mesh, Point2::new(0.2, 0.2), 0.0).is_err());
        assert!(mollified_delta(&mesh, Point2::new(0.2, 0.2), -1.0).is_err());
    }

    #[test]
    fn receiver_weights_reproduce_affine_functions() {
        let mesh = build_rect_mesh(Rect::new(0.0, 2.0, 0.0, 2.0), 0.4, 0.2, 8).unwrap();
        let p = Point2::new(1.37, 0.41);
        let w = receiver_weights(&mesh, p).unwrap();
        let sum: f64 = w.iter().map(|&(_, wi)| wi).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        let x: f64 = w.iter().map(|&(i, wi)| wi * mesh.vertices[i].x).sum();
        let y: f64 = w.iter().map(|&(i, wi)| wi * mesh.vertices[i].y).sum();
        assert!((x - p.x).abs() < 1e-12);
        assert!((y - p.y).abs() < 1e-12);
        for &(_, wi) in &w {
            assert!(wi >= -1e-12);
        }
    }

    #[test]
    fn receiver_on_shared_edge_picks_lowest_triangle() {
        let mesh = build_rect_mesh(Rect::unit(), 1.0, 0.0, 0).unwrap();
        // The diagonal edge is shared by both triangles; the query point sits on it.
        let p = Point2::new(0.5, 0.5);
        let w = receiver_weights(&mesh, p).unwrap();
        let tri0: Vec<usize> = mesh.triangles[0].to_vec();
        for &(i, _) in &w {
            assert!(tri0.contains(&i), "expected triangle 0's vertices, got vertex {i}");
        }
    }

    #[test]
    fn receiver_outside_domain_errors() {
        let mesh = build_rect_mesh(Rect::unit(), 0.5, 0.0, 0).unwrap();
        match receiver_weights(&mesh, Point2::new(1.5, 0.5)) {
            Err(Error::OutOfDomain { .. }) => {}
            other => panic!("expected OutOfDomain, got {other:?}"),
        }
    }
}
