//! Time discretization of the damped acoustic wave equation.
//!
//! The semidiscrete system `M u'' + c S u' + c^2 K u = M q(t)` is advanced by
//! the centered leapfrog scheme
//!
//! ```text
//! A- = M - (c dt / 2) S
//! A0 = c^2 dt^2 K - 2 M
//! A+ = M + (c dt / 2) S
//! A+ u^{k+1} = -A0 u^k - A- u^{k-1} + dt^2 M q(t_k)
//! ```
//!
//! with `u^0 = u^1 = 0` for quiescent starts. `A+` is symmetric positive
//! definite, so one Cholesky factorization serves every step. The receiver
//! trace is `s_k = d^T u^k`.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fem::{mollified_delta, FemMatrices};
use crate::geom::Point2;
use crate::mesh::TriMesh;
use crate::scalar::Scalar;
use crate::solver::{CholeskyFactor, Ordering};
use crate::sparse::SparseSymMatrix;

/// Uniform time grid with `num_steps` intervals of length `dt`.
///
/// Sample `k` lives at `t_k = k dt` for `k = 0..=num_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<T> {
    pub dt: T,
    pub num_steps: usize,
}

impl<T: Scalar> TimeGrid<T> {
    pub fn new(dt: T, num_steps: usize) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::invalid("dt", "time step must be positive and finite"));
        }
        if num_steps < 2 {
            return Err(Error::invalid("num_steps", "need at least two steps"));
        }
        Ok(Self { dt, num_steps })
    }

    /// Number of samples, `num_steps + 1`.
    pub fn num_samples(&self) -> usize {
        self.num_steps + 1
    }

    pub fn final_time(&self) -> T {
        self.dt * T::of(self.num_steps as f64)
    }

    pub fn time(&self, k: usize) -> T {
        self.dt * T::of(k as f64)
    }
}

/// A sampled scalar signal on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal<T> {
    pub dt: T,
    pub samples: Vec<T>,
}

impl<T: Scalar> Signal<T> {
    pub fn new(dt: T, samples: Vec<T>) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::invalid("dt", "time step must be positive and finite"));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("signal contains non-finite samples".into()));
        }
        Ok(Self { dt, samples })
    }

    pub fn zeros(grid: TimeGrid<T>) -> Self {
        Self {
            dt: grid.dt,
            samples: vec![T::zero(); grid.num_samples()],
        }
    }

    /// Samples `f(t_k)` over the grid.
    pub fn from_fn(grid: TimeGrid<T>, f: impl Fn(T) -> T) -> Self {
        Self {
            dt: grid.dt,
            samples: (0..grid.num_samples()).map(|k| f(grid.time(k))).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn max_abs(&self) -> T {
        self.samples
            .iter()
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Writes `t,value` CSV rows with a header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t_s,value")?;
        for (k, v) in self.samples.iter().enumerate() {
            writeln!(w, "{},{}", self.dt * T::of(k as f64), v)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(BufWriter::new(f))
    }

    pub fn read_csv<R: Read>(r: R, path: &Path) -> Result<Self> {
        let reader = BufReader::new(r);
        let bad = |reason: &str| Error::format(path, reason);
        let mut times = Vec::new();
        let mut samples: Vec<T> = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if lineno == 0 {
                if line != "t_s,value" {
                    return Err(bad("expected header `t_s,value`"));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let (t, v) = line
                .split_once(',')
                .ok_or_else(|| bad("expected two comma-separated fields"))?;
            let t: f64 = t.trim().parse().map_err(|_| bad("bad time value"))?;
            let v: f64 = v.trim().parse().map_err(|_| bad("bad sample value"))?;
            times.push(t);
            samples.push(T::of(v));
        }
        if samples.len() < 2 {
            return Err(bad("need at least two samples"));
        }
        let dt = times[1] - times[0];
        if !(dt > 0.0) {
            return Err(bad("time column must be strictly increasing"));
        }
        for (k, &t) in times.iter().enumerate() {
            let want = dt * k as f64;
            if (t - want).abs() > 1e-9 * dt.max(1.0) {
                return Err(bad("time column is not uniformly spaced from zero"));
            }
        }
        Signal::new(T::of(dt), samples)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(f, path)
    }
}

/// Source trajectory: either fixed in space or repositioned every sample.
#[derive(Debug, Clone)]
pub enum SourcePath<T> {
    Static(Point2<T>),
    /// One position per time sample (`num_steps + 1` entries).
    PerStep(Vec<Point2<T>>),
}

impl<T: Scalar> SourcePath<T> {
    pub fn is_static(&self) -> bool {
        matches!(self, SourcePath::Static(_))
    }

    pub fn position_at(&self, k: usize) -> Point2<T> {
        match self {
            SourcePath::Static(p) => *p,
            SourcePath::PerStep(ps) => ps[k],
        }
    }
}

/// Nodal load vectors `M delta(x - x_src(t_k))` for a source path.
#[derive(Debug, Clone)]
pub struct SourceTerm<T> {
    loads: Loads<T>,
}

#[derive(Debug, Clone)]
enum Loads<T> {
    Static(Vec<T>),
    PerStep(Vec<Vec<T>>),
}

impl<T: Scalar> SourceTerm<T> {
    /// Interpolates the mollifier at each (needed) position and premultiplies
    /// by the mass matrix.
    pub fn build(
        mesh: &TriMesh<T>,
        mass: &SparseSymMatrix<T>,
        path: &SourcePath<T>,
        epsilon: T,
        grid: TimeGrid<T>,
    ) -> Result<Self> {
        let loads = match path {
            SourcePath::Static(p) => Loads::Static(mass.apply(&mollified_delta(mesh, *p, epsilon)?)),
            SourcePath::PerStep(ps) => {
                if ps.len() != grid.num_samples() {
                    return Err(Error::invalid(
                        "path",
                        "per-step source needs one position per time sample",
                    ));
                }
                Loads::PerStep(
                    ps.iter()
                        .map(|&p| Ok(mass.apply(&mollified_delta(mesh, p, epsilon)?)))
                        .collect::<Result<_>>()?,
                )
            }
        };
        Ok(Self { loads })
    }

    /// Builds directly from an explicit static load vector. Used by tests that
    /// inject non-mollified loads (e.g. bare interpolation weights).
    pub fn from_static_load(load: Vec<T>) -> Self {
        Self {
            loads: Loads::Static(load),
        }
    }

    pub fn is_static(&self) -> bool {
        matches!(self.loads, Loads::Static(_))
    }

    pub fn load_at(&self, k: usize) -> &[T] {
        match &self.loads {
            Loads::Static(v) => v,
            Loads::PerStep(vs) => &vs[k],
        }
    }

    pub fn num_dofs(&self) -> usize {
        match &self.loads {
            Loads::Static(v) => v.len(),
            Loads::PerStep(vs) => vs.first().map_or(0, Vec::len),
        }
    }
}

/// The three leapfrog step matrices plus the factorization of `A+`.
pub struct StepOperators<T> {
    pub a_minus: SparseSymMatrix<T>,
    pub a_zero: SparseSymMatrix<T>,
    pub a_plus: SparseSymMatrix<T>,
    pub c: T,
    pub dt: T,
    factor: CholeskyFactor<T>,
}

impl<T: Scalar> StepOperators<T> {
    /// Forms the step matrices from already-assembled FEM matrices and
    /// factorizes `A+`. Exactly one factorization happens here.
    pub fn from_matrices(matrices: &FemMatrices<T>, c: T, dt: T) -> Result<Self> {
        if !(c > T::zero()) || !c.is_finite() {
            return Err(Error::invalid("c", "wave speed must be positive"));
        }
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::invalid("dt", "time step must be positive"));
        }
        let half = T::of(0.5);
        let two = T::of(2.0);
        let a_minus = SparseSymMatrix::lin_comb(
            T::one(),
            &matrices.mass,
            -(c * dt * half),
            &matrices.surface_mass,
        )?;
        let a_plus = SparseSymMatrix::lin_comb(
            T::one(),
            &matrices.mass,
            c * dt * half,
            &matrices.surface_mass,
        )?;
        let a_zero = SparseSymMatrix::lin_comb(
            c * c * dt * dt,
            &matrices.stiffness,
            -two,
            &matrices.mass,
        )?;
        let factor = CholeskyFactor::factor(&a_plus, Ordering::ReverseCuthillMcKee)?;
        Ok(Self {
            a_minus,
            a_zero,
            a_plus,
            c,
            dt,
            factor,
        })
    }

    pub fn num_dofs(&self) -> usize {
        self.a_plus.n()
    }

    /// One triangular-solve pair with the cached factorization.
    pub fn solve_a_plus(&self, rhs: &[T]) -> Vec<T> {
        self.factor.solve(rhs)
    }
}

/// Largest provably stable time step for the consistent-mass leapfrog scheme.
///
/// The undamped scheme is stable iff `dt <= 2 / omega_max` with
/// `omega_max^2 = c^2 lambda_max(K, M)`, and by the Rayleigh-quotient mediant
/// bound the global generalized eigenvalue never exceeds the worst per-element
/// one: `lambda_max(K, M) <= max_e lambda_max(K_e, M_e)`. Each element pair is
/// 3x3 with `K_e` singular along constants, so the two nonzero eigenvalues of
/// `M_e^{-1} K_e` come from a quadratic in closed form. On a uniform right
/// triangle with legs `h` this evaluates to `lambda_max = 36 / h^2`, i.e.
/// `dt_max = h / (3 c)` — markedly tighter than the lumped-mass folklore
/// `h / (c sqrt(2))`. The boundary damping term only dissipates, so the bound
/// carries over to the damped scheme unchanged.
pub fn cfl_estimate<T: Scalar>(mesh: &TriMesh<T>, c: T) -> T {
    let twelve = T::of(12.0);
    let quarter = T::of(0.25);
    let mut lambda_max = T::zero();
    for t in 0..mesh.num_triangles() {
        let [i0, i1, i2] = mesh.triangles[t];
        let p = [mesh.vertices[i0], mesh.vertices[i1], mesh.vertices[i2]];
        let b = [p[1].y - p[2].y, p[2].y - p[0].y, p[0].y - p[1].y];
        let cc = [p[2].x - p[1].x, p[0].x - p[2].x, p[1].x - p[0].x];
        let area = crate::geom::signed_area_x2(p[0], p[1], p[2]) * T::of(0.5);
        let inv4a = T::one() / (T::of(4.0) * area);
        // K_e[i][j] = (b_i b_j + c_i c_j) / (4A); M_e = (A/12) (I + 1 1^T).
        // B = M_e^{-1} K_e = (12/A) (I - 1 1^T / 4) K_e; constants are in the
        // kernel, so lambda_max solves l^2 - tr(B) l + sigma2(B) = 0.
        let mut ke = [[T::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                ke[i][j] = (b[i] * b[j] + cc[i] * cc[j]) * inv4a;
            }
        }
        let col_sum = |j: usize| ke[0][j] + ke[1][j] + ke[2][j];
        let mut bm = [[T::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                bm[i][j] = (twelve / area) * (ke[i][j] - quarter * col_sum(j));
            }
        }
        let tr = bm[0][0] + bm[1][1] + bm[2][2];
        let sigma2 = bm[0][0] * bm[1][1] - bm[0][1] * bm[1][0]
            + bm[0][0] * bm[2][2]
            - bm[0][2] * bm[2][0]
            + bm[1][1] * bm[2][2]
            - bm[1][2] * bm[2][1];
        let disc = (tr * tr - T::of(4.0) * sigma2).max(T::zero()).sqrt();
        let lam = (tr + disc) * T::of(0.5);
        lambda_max = lambda_max.max(lam);
    }
    if lambda_max <= T::zero() {
        return T::zero();
    }
    T::of(2.0) / (c * lambda_max.sqrt())
}

/// Builds step operators from a mesh, enforcing the CFL bound.
pub fn build_step_operators<T: Scalar>(
    mesh: &TriMesh<T>,
    matrices: &FemMatrices<T>,
    c: T,
    grid: TimeGrid<T>,
) -> Result<StepOperators<T>> {
    let dt_max = cfl_estimate(mesh, c);
    if grid.dt > dt_max {
        return Err(Error::invalid(
            "dt",
            &format!(
                "time step {:e} exceeds the CFL bound {:e}",
                grid.dt.to_f64_lossy(),
                dt_max.to_f64_lossy()
            ),
        ));
    }
    StepOperators::from_matrices(matrices, c, grid.dt)
}

/// Low-level leapfrog driver with caller-supplied initial states and loads.
///
/// `load(k, buf)` must add `dt^2 M q(t_k)` into `buf`; `on_state(k, u)` sees
/// every state from `u^0` through `u^K` in order. Runs exactly
/// `num_steps - 1` triangular solves.
pub fn leapfrog_run<T: Scalar>(
    ops: &StepOperators<T>,
    u0: Vec<T>,
    u1: Vec<T>,
    num_steps: usize,
    mut load: impl FnMut(usize, &mut [T]),
    mut on_state: impl FnMut(usize, &[T]),
) -> Result<()> {
    let n = ops.num_dofs();
    if u0.len() != n || u1.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "initial states have lengths {} and {}, operators expect {}",
            u0.len(),
            u1.len(),
            n
        )));
    }
    if num_steps < 2 {
        return Err(Error::invalid("num_steps", "need at least two steps"));
    }
    let mut u_prev = u0;
    let mut u_curr = u1;
    on_state(0, &u_prev);
    on_state(1, &u_curr);
    let mut rhs = vec![T::zero(); n];
    for k in 1..num_steps {
        // rhs = -A0 u^k - A- u^{k-1} + dt^2 M q(t_k)
        ops.a_zero.matvec(&u_curr, &mut rhs);
        for v in rhs.iter_mut() {
            *v = -*v;
        }
        ops.a_minus.apply_sub_into(&u_prev, &mut rhs);
        load(k, &mut rhs);
        let u_next = ops.solve_a_plus(&rhs);
        on_state(k + 1, &u_next);
        u_prev = u_curr;
        u_curr = u_next;
    }
    Ok(())
}

/// Result of a forward leapfrog simulation.
pub struct LeapfrogResult<T> {
    /// Receiver trace `s_k = d^T u^k`, `num_steps + 1` samples.
    pub trace: Signal<T>,
    /// Full field history `u^0..u^K` when requested.
    pub history: Option<Vec<Vec<T>>>,
}

/// Quiescent-start forward simulation with interferer and intruder sources.
///
/// Both driving signals must carry `num_steps + 1` samples on the operator's
/// grid; sample `k` of each signal scales its source load at time `t_k`.
pub fn leapfrog_solve<T: Scalar>(
    ops: &StepOperators<T>,
    interferer: &SourceTerm<T>,
    f: &Signal<T>,
    intruder: &SourceTerm<T>,
    g: &Signal<T>,
    receiver: &[T],
    keep_history: bool,
) -> Result<LeapfrogResult<T>> {
    let n = ops.num_dofs();
    let num_steps = f.len().checked_sub(1).filter(|&k| k >= 2).ok_or_else(|| {
        Error::invalid("f", "driving signal needs at least three samples")
    })?;
    if g.len() != f.len() {
        return Err(Error::ShapeMismatch(format!(
            "interferer signal has {} samples, intruder {}",
            f.len(),
            g.len()
        )));
    }
    if f.dt != ops.dt || g.dt != ops.dt {
        return Err(Error::ShapeMismatch(
            "driving signals must share the operator time step".into(),
        ));
    }
    if receiver.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "receiver vector has length {}, expected {}",
            receiver.len(),
            n
        )));
    }
    if interferer.num_dofs() != n || intruder.num_dofs() != n {
        return Err(Error::ShapeMismatch("source loads do not match the mesh".into()));
    }
    let dt2 = ops.dt * ops.dt;
    let mut trace = vec![T::zero(); num_steps + 1];
    let mut history = keep_history.then(Vec::new);
    leapfrog_run(
        ops,
        vec![T::zero(); n],
        vec![T::zero(); n],
        num_steps,
        |k, rhs| {
            let fk = f.samples[k];
            if fk != T::zero() {
                for (r, &l) in rhs.iter_mut().zip(interferer.load_at(k)) {
                    *r += dt2 * fk * l;
                }
            }
            let gk = g.samples[k];
            if gk != T::zero() {
                for (r, &l) in rhs.iter_mut().zip(intruder.load_at(k)) {
                    *r += dt2 * gk * l;
                }
            }
        },
        |k, u| {
            trace[k] = dot(receiver, u);
            if let Some(h) = history.as_mut() {
                h.push(u.to_vec());
            }
        },
    )?;
    Ok(LeapfrogResult {
        trace: Signal {
            dt: ops.dt,
            samples: trace,
        },
        history,
    })
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Discrete energy `E^k` of a recorded history, for `k = 1..=K`:
/// kinetic part from the backward difference, potential part from the
/// symmetrized stiffness product.
pub fn energy_trace<T: Scalar>(
    matrices: &FemMatrices<T>,
    c: T,
    dt: T,
    history: &[Vec<T>],
) -> Vec<T> {
    let half = T::of(0.5);
    let mut out = Vec::with_capacity(history.len().saturating_sub(1));
    let mut diff = vec![T::zero(); history.first().map_or(0, Vec::len)];
    for k in 1..history.len() {
        for ((d, &a), &b) in diff.iter_mut().zip(&history[k]).zip(&history[k - 1]) {
            *d = a - b;
        }
        let kinetic = half * matrices.mass.bilinear(&diff, &diff) / (dt * dt);
        let potential =
            half * c * c * matrices.stiffness.bilinear(&history[k], &history[k - 1]);
        out.push(kinetic + potential);
    }
    out
}

const FIELD_MAGIC: &[u8; 5] = b"WFLD1";

/// Writes a field history as a `WFLD1` binary: magic, node count (u64 LE),
/// step count (u64 LE), config hash (u64 LE), then step-major f64 LE data.
pub fn write_field_history<T: Scalar, W: Write>(
    mut w: W,
    history: &[Vec<T>],
    config_hash: u64,
) -> Result<()> {
    let nodes = history.first().map_or(0, Vec::len) as u64;
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&nodes.to_le_bytes())?;
    w.write_all(&(history.len() as u64).to_le_bytes())?;
    w.write_all(&config_hash.to_le_bytes())?;
    for step in history {
        for v in step {
            w.write_all(&v.to_f64_lossy().to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_field_history<T: Scalar>(
    path: &Path,
    history: &[Vec<T>],
    config_hash: u64,
) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_field_history(BufWriter::new(f), history, config_hash)
}

/// Reads a `WFLD1` binary; returns the history and its stored config hash.
pub fn read_field_history<T: Scalar, R: Read>(
    mut r: R,
    path: &Path,
) -> Result<(Vec<Vec<T>>, u64)> {
    let bad = |reason: &str| Error::format(path, reason);
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != FIELD_MAGIC {
        return Err(bad("bad magic, expected WFLD1"));
    }
    let mut u = [0u8; 8];
    r.read_exact(&mut u).map_err(|_| bad("truncated header"))?;
    let nodes = u64::from_le_bytes(u) as usize;
    r.read_exact(&mut u).map_err(|_| bad("truncated header"))?;
    let steps = u64::from_le_bytes(u) as usize;
    r.read_exact(&mut u).map_err(|_| bad("truncated header"))?;
    let hash = u64::from_le_bytes(u);
    if nodes.checked_mul(steps).is_none() || nodes * steps > (1 << 32) {
        return Err(bad("unreasonable field dimensions"));
    }
    let mut history = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut step = Vec::with_capacity(nodes);
        for _ in 0..nodes {
            r.read_exact(&mut u).map_err(|_| bad("truncated data"))?;
            step.push(T::of(f64::from_le_bytes(u)));
        }
        history.push(step);
    }
    Ok((history, hash))
}

pub fn load_field_history<T: Scalar>(path: &Path) -> Result<(Vec<Vec<T>>, u64)> {
    let f = std::fs::File::open(path)?;
    read_field_history(BufReader::new(f), path)
}
