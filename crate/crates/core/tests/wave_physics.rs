//! Physical sanity checks for the FEM leapfrog solver: discrete energy
//! conservation, absorbing-boundary dissipation, source-receiver reciprocity,
//! and second-order temporal self-convergence.

use wavejam::fem::{assemble_all, mollified_delta, receiver_vector, FemMatrices};
use wavejam::geom::{Point2, Rect};
use wavejam::mesh::build_rect_mesh;
use wavejam::sparse::SparseSymMatrix;
use wavejam::wave::{
    build_step_operators, energy_trace, leapfrog_solve, Signal, SourcePath, SourceTerm, TimeGrid,
};

/// A short smooth burst: `sin^4` pulse that is identically zero outside
/// `[0, t_end]` and has three vanishing derivatives at both ends.
fn burst(t: f64, t_end: f64) -> f64 {
    if t <= 0.0 || t >= t_end {
        0.0
    } else {
        (std::f64::consts::PI * t / t_end).sin().powi(4)
    }
}

#[test]
fn undamped_leapfrog_conserves_discrete_energy() {
    let mesh = build_rect_mesh(Rect::unit(), 0.2, 0.0, 0).unwrap();
    let matrices = assemble_all(&mesh).unwrap();
    // Drop the boundary term: pure second-order dynamics conserve the
    // staggered energy  E = |du|_M^2 / (2 dt^2) + (c^2/2) u_k^T K u_{k-1}.
    let undamped = FemMatrices {
        mass: matrices.mass.clone(),
        stiffness: matrices.stiffness.clone(),
        surface_mass: SparseSymMatrix::zeros(mesh.num_vertices()),
    };
    let grid = TimeGrid::new(0.05, 200).unwrap();
    let ops = build_step_operators(&mesh, &undamped, 1.0, grid).unwrap();
    let src = SourceTerm::build(
        &mesh,
        &matrices.mass,
        &SourcePath::Static(Point2::new(0.4, 0.55)),
        0.3,
        grid,
    )
    .unwrap();
    let quiet = SourceTerm::from_static_load(vec![0.0; mesh.num_vertices()]);
    let f = Signal::from_fn(grid, |t: f64| burst(t, 1.0));
    let g = Signal::zeros(grid);
    let d = receiver_vector(&mesh, Point2::new(0.7, 0.3)).unwrap();
    let out = leapfrog_solve(&ops, &src, &f, &quiet, &g, &d, true).unwrap();
    let history = out.history.unwrap();
    let energy = energy_trace(&undamped, 1.0, grid.dt, &history);
    // The source is inert from step 21 on; energy must be constant afterwards.
    let settled = &energy[25..];
    let e0 = settled[0];
    assert!(e0 > 0.0, "wave carries no energy");
    for (i, &e) in settled.iter().enumerate() {
        assert!(
            ((e - e0) / e0).abs() <= 1e-10,
            "energy drifts at settled step {i}: {e:e} vs {e0:e}"
        );
    }
}

#[test]
fn absorbing_boundary_dissipates_energy() {
    let mesh = build_rect_mesh(Rect::unit(), 0.2, 0.0, 0).unwrap();
    let matrices = assemble_all(&mesh).unwrap();
    let grid = TimeGrid::new(0.05, 400).unwrap();
    let ops = build_step_operators(&mesh, &matrices, 1.0, grid).unwrap();
    let src = SourceTerm::build(
        &mesh,
        &matrices.mass,
        &SourcePath::Static(Point2::new(0.5, 0.5)),
        0.3,
        grid,
    )
    .unwrap();
    let quiet = SourceTerm::from_static_load(vec![0.0; mesh.num_vertices()]);
    let f = Signal::from_fn(grid, |t: f64| burst(t, 1.0));
    let g = Signal::zeros(grid);
    let d = receiver_vector(&mesh, Point2::new(0.7, 0.3)).unwrap();
    let out = leapfrog_solve(&ops, &src, &f, &quiet, &g, &d, true).unwrap();
    let energy = energy_trace(&matrices, 1.0, grid.dt, &out.history.unwrap());
    let peak = energy.iter().cloned().fold(0.0f64, f64::max);
    // Twenty domain crossings later, the absorbing boundary must have
    // swallowed most of the burst.
    let tail = energy.iter().rev().take(20).cloned().fold(0.0f64, f64::max);
    assert!(peak > 0.0);
    assert!(
        tail < 0.1 * peak,
        "late energy {tail:e} is not small against peak {peak:e}"
    );
    // And it must decay monotonically: the boundary term only removes energy,
    // so growth beyond roundoff (relative to the peak) means a sign error.
    let after_burst = energy[25..].windows(2).all(|w| w[1] <= w[0] + 1e-12 * peak);
    assert!(after_burst, "energy grew with the source off");
}

/// All three step matrices are symmetric, so the map from a load vector to a
/// sampling functional is symmetric too: driving with `M delta_a` and sampling
/// with the interpolation weights at `b` equals driving with the raw weight
/// vector at `b` and sampling with `(M delta_a)^T u`.
#[test]
fn source_receiver_reciprocity_holds_exactly() {
    let mesh = build_rect_mesh(Rect::unit(), 0.2, 0.1, 17).unwrap();
    let matrices = assemble_all(&mesh).unwrap();
    let grid = TimeGrid::new(0.04, 150).unwrap();
    let ops = build_step_operators(&mesh, &matrices, 1.0, grid).unwrap();
    let quiet = SourceTerm::from_static_load(vec![0.0; mesh.num_vertices()]);
    let g = Signal::zeros(grid);
    let f = Signal::from_fn(grid, |t: f64| burst(t, 2.0));

    let a = Point2::new(0.3, 0.65);
    let b = Point2::new(0.75, 0.25);
    let m_delta_a = matrices.mass.apply(&mollified_delta(&mesh, a, 0.3).unwrap());
    let weights_b = receiver_vector(&mesh, b).unwrap();

    let fwd = leapfrog_solve(
        &ops,
        &SourceTerm::from_static_load(m_delta_a.clone()),
        &f,
        &quiet,
        &g,
        &weights_b,
        false,
    )
    .unwrap();
    let rev = leapfrog_solve(
        &ops,
        &SourceTerm::from_static_load(weights_b),
        &f,
        &quiet,
        &g,
        &m_delta_a,
        false,
    )
    .unwrap();

    let scale = fwd
        .trace
        .samples
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-300);
    for (k, (x, y)) in fwd.trace.samples.iter().zip(&rev.trace.samples).enumerate() {
        assert!(
            (x - y).abs() <= 1e-11 * scale,
            "reciprocity broken at step {k}: {x:e} vs {y:e}"
        );
    }
    assert!(scale > 1e-12, "trace is numerically silent");
}

#[test]
fn receiver_trace_self_converges_at_second_order() {
    let mesh = build_rect_mesh(Rect::unit(), 0.25, 0.1, 7).unwrap();
    let matrices = assemble_all(&mesh).unwrap();
    let src_point = Point2::new(0.35, 0.6);
    let recv = receiver_vector(&mesh, Point2::new(0.7, 0.35)).unwrap();
    let total_time = 1.2;
    let quiet = SourceTerm::from_static_load(vec![0.0; mesh.num_vertices()]);

    let run = |num_steps: usize| -> Vec<f64> {
        let dt = total_time / num_steps as f64;
        let grid = TimeGrid::new(dt, num_steps).unwrap();
        let ops = build_step_operators(&mesh, &matrices, 1.0, grid).unwrap();
        let src = SourceTerm::build(
            &mesh,
            &matrices.mass,
            &SourcePath::Static(src_point),
            0.35,
            grid,
        )
        .unwrap();
        let f = Signal::from_fn(grid, |t: f64| burst(t, 0.8));
        let g = Signal::zeros(grid);
        leapfrog_solve(&ops, &src, &f, &quiet, &g, &recv, false)
            .unwrap()
            .trace
            .samples
    };

    // Nested step counts share sample times: coarse k aligns with fine 2k.
    let coarse = run(60);
    let medium = run(120);
    let fine = run(240);
    let diff = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .enumerate()
            .map(|(k, &v)| (v - b[2 * k]).abs())
            .fold(0.0, f64::max)
    };
    let e1 = diff(&coarse, &medium);
    let e2 = diff(&medium, &fine);
    assert!(e2 < e1, "refinement must reduce the self-difference");
    let order = (e1 / e2).log2();
    assert!(
        (1.6..=2.4).contains(&order),
        "observed temporal order {order:.3} (e1 {e1:e}, e2 {e2:e})"
    );
}
