//! Precomputed receiver Green operator for the leapfrog scheme.
//!
//! Because the step recursion is linear with constant matrices, the map from a
//! source signal to the receiver trace is linear and lower-triangular in time.
//! Its entries come from a *single* adjoint recursion seeded by the receiver
//! vector rather than from one forward solve per basis signal:
//!
//! ```text
//! A+ y_1 = d
//! A+ y_2 = -A0 y_1
//! A+ y_m = -A0 y_{m-1} - A- y_{m-2}      (3 <= m <= K-1)
//! ```
//!
//! which costs one factorization plus `K - 1` back-substitutions. For a static
//! source with load `M delta`, the trace of a unit impulse at sample `j >= 1`
//! is the kernel `h_m = dt^2 y_m^T (M delta)` evaluated at `m = k - j`, so
//!
//! ```text
//! s_k = sum_{j=1}^{k-1} h_{k-j} f_j ,        s_0 = s_1 = 0.
//! ```
//!
//! Sample `f_0` never enters the recursion (the first forcing the scheme sees
//! is at `t_1`), so column 0 of the dense Jacobian is zero and columns
//! `1..K-1` are active, each delayed one step below the diagonal. Moving
//! sources break time invariance; the dense form stores
//! `G[k][j] = dt^2 y_{k-j}^T (M delta^j)` instead.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::wave::{Signal, SourceTerm, StepOperators};

/// Adjoint state columns `y_1 .. y_{K-1}`, each of length `n`.
pub struct AdjointColumn<T> {
    pub dt: T,
    pub num_steps: usize,
    /// `columns[m - 1]` holds `y_m`.
    pub columns: Vec<Vec<T>>,
}

/// Runs the adjoint recursion, storing every column.
///
/// Costs exactly `num_steps - 1` triangular solves against the factorization
/// cached in `ops` (no new factorization).
pub fn precompute_adjoint_column<T: Scalar>(
    ops: &StepOperators<T>,
    receiver: &[T],
    num_steps: usize,
) -> Result<AdjointColumn<T>> {
    let mut columns = Vec::with_capacity(num_steps.saturating_sub(1));
    adjoint_recursion(ops, receiver, num_steps, |_, y| columns.push(y.to_vec()))?;
    Ok(AdjointColumn {
        dt: ops.dt,
        num_steps,
        columns,
    })
}

/// Streams the adjoint recursion, handing each `y_m` to `on_column(m, y)`
/// without storing the history. Same solve count as the stored variant.
pub fn adjoint_recursion<T: Scalar>(
    ops: &StepOperators<T>,
    receiver: &[T],
    num_steps: usize,
    mut on_column: impl FnMut(usize, &[T]),
) -> Result<()> {
    let n = ops.num_dofs();
    if receiver.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "receiver vector has length {}, operators expect {}",
            receiver.len(),
            n
        )));
    }
    if num_steps < 2 {
        return Err(Error::invalid("num_steps", "need at least two steps"));
    }
    let mut y_prev2: Vec<T> = Vec::new(); // y_{m-2}
    let mut y_prev1: Vec<T> = Vec::new(); // y_{m-1}
    let mut rhs = vec![T::zero(); n];
    for m in 1..num_steps {
        match m {
            1 => rhs.copy_from_slice(receiver),
            2 => {
                ops.a_zero.matvec(&y_prev1, &mut rhs);
                for v in rhs.iter_mut() {
                    *v = -*v;
                }
            }
            _ => {
                ops.a_zero.matvec(&y_prev1, &mut rhs);
                for v in rhs.iter_mut() {
                    *v = -*v;
                }
                ops.a_minus.apply_sub_into(&y_prev2, &mut rhs);
            }
        }
        let y = ops.solve_a_plus(&rhs);
        on_column(m, &y);
        y_prev2 = std::mem::replace(&mut y_prev1, y);
    }
    Ok(())
}

/// How a Green operator stores its action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreenMode {
    /// Time-invariant kernel `h_1 .. h_{K-1}` (static sources only).
    Kernel,
    /// Full `(K+1) x (K+1)` lower-triangular matrix (moving sources too).
    Dense,
}

#[derive(Debug, Clone)]
enum GreenData<T> {
    Kernel(Vec<T>),
    Dense(Array2<T>),
}

/// Linear map from a source signal to the receiver trace.
#[derive(Debug, Clone)]
pub struct GreenOperator<T> {
    pub dt: T,
    pub num_steps: usize,
    data: GreenData<T>,
}

/// Builds a Green operator from stored adjoint columns and a source term.
pub fn build_green<T: Scalar>(
    adj: &AdjointColumn<T>,
    source: &SourceTerm<T>,
    mode: GreenMode,
) -> Result<GreenOperator<T>> {
    let k_steps = adj.num_steps;
    if adj.columns.len() != k_steps - 1 {
        return Err(Error::ShapeMismatch(format!(
            "adjoint column count {} does not match {} steps",
            adj.columns.len(),
            k_steps
        )));
    }
    let dt2 = adj.dt * adj.dt;
    match mode {
        GreenMode::Kernel => {
            if !source.is_static() {
                return Err(Error::invalid(
                    "mode",
                    "kernel mode requires a static source; use dense mode",
                ));
            }
            let load = source.load_at(0);
            let kernel = adj
                .columns
                .iter()
                .map(|y| dt2 * dot(y, load))
                .collect();
            Ok(GreenOperator {
                dt: adj.dt,
                num_steps: k_steps,
                data: GreenData::Kernel(kernel),
            })
        }
        GreenMode::Dense => {
            let size = k_steps + 1;
            let mut g = Array2::zeros((size, size));
            for k in 2..=k_steps {
                for j in 1..k {
                    g[[k, j]] = dt2 * dot(&adj.columns[k - j - 1], source.load_at(j));
                }
            }
            Ok(GreenOperator {
                dt: adj.dt,
                num_steps: k_steps,
                data: GreenData::Dense(g),
            })
        }
    }
}

/// Streams one adjoint recursion into several kernels at once: entry `i` of
/// the result is the kernel for static load `loads[i]`. This keeps the
/// precompute memory footprint at two state vectors regardless of `K`.
pub fn precompute_green_kernels<T: Scalar>(
    ops: &StepOperators<T>,
    receiver: &[T],
    loads: &[&[T]],
    num_steps: usize,
) -> Result<Vec<GreenOperator<T>>> {
    let n = ops.num_dofs();
    for l in loads {
        if l.len() != n {
            return Err(Error::ShapeMismatch("load length does not match mesh".into()));
        }
    }
    let dt2 = ops.dt * ops.dt;
    let mut kernels: Vec<Vec<T>> = loads
        .iter()
        .map(|_| Vec::with_capacity(num_steps - 1))
        .collect();
    adjoint_recursion(ops, receiver, num_steps, |_, y| {
        for (kern, load) in kernels.iter_mut().zip(loads) {
            kern.push(dt2 * dot(y, load));
        }
    })?;
    Ok(kernels
        .into_iter()
        .map(|kernel| GreenOperator {
            dt: ops.dt,
            num_steps,
            data: GreenData::Kernel(kernel),
        })
        .collect())
}

impl<T: Scalar> GreenOperator<T> {
    pub fn mode(&self) -> GreenMode {
        match self.data {
            GreenData::Kernel(_) => GreenMode::Kernel,
            GreenData::Dense(_) => GreenMode::Dense,
        }
    }

    /// Number of time samples `K + 1` on both axes.
    pub fn num_samples(&self) -> usize {
        self.num_steps + 1
    }

    /// Convolution kernel `h_1..h_{K-1}` (kernel mode only).
    pub fn kernel(&self) -> Option<&[T]> {
        match &self.data {
            GreenData::Kernel(h) => Some(h),
            GreenData::Dense(_) => None,
        }
    }

    /// Applies the operator: `s = G f`. No sparse solves happen here.
    pub fn apply(&self, f: &Signal<T>) -> Result<Signal<T>> {
        if f.len() != self.num_samples() {
            return Err(Error::ShapeMismatch(format!(
                "signal has {} samples, operator expects {}",
                f.len(),
                self.num_samples()
            )));
        }
        let mut s = vec![T::zero(); self.num_samples()];
        match &self.data {
            GreenData::Kernel(h) => {
                for k in 2..=self.num_steps {
                    let mut acc = T::zero();
                    // s_k = sum_{m=1}^{k-1} h_m f_{k-m}; f_0 is never touched.
                    for m in 1..k {
                        acc += h[m - 1] * f.samples[k - m];
                    }
                    s[k] = acc;
                }
            }
            GreenData::Dense(g) => {
                for k in 2..=self.num_steps {
                    let mut acc = T::zero();
                    for j in 1..k {
                        acc += g[[k, j]] * f.samples[j];
                    }
                    s[k] = acc;
                }
            }
        }
        Ok(Signal {
            dt: self.dt,
            samples: s,
        })
    }

    /// Transposed application `G^T w`, the pullback of a trace gradient onto
    /// the source signal. Entry 0 and entry `K` are always zero.
    pub fn correlate(&self, w: &[T]) -> Result<Vec<T>> {
        if w.len() != self.num_samples() {
            return Err(Error::ShapeMismatch(format!(
                "cotangent has {} samples, operator expects {}",
                w.len(),
                self.num_samples()
            )));
        }
        let mut out = vec![T::zero(); self.num_samples()];
        match &self.data {
            GreenData::Kernel(h) => {
                for (j, o) in out.iter_mut().enumerate().take(self.num_steps).skip(1) {
                    let mut acc = T::zero();
                    for m in 1..=(self.num_steps - j).min(h.len()) {
                        acc += h[m - 1] * w[j + m];
                    }
                    *o = acc;
                }
            }
            GreenData::Dense(g) => {
                for (j, o) in out.iter_mut().enumerate().take(self.num_steps).skip(1) {
                    let mut acc = T::zero();
                    for (k, &wk) in w.iter().enumerate().skip(j + 1) {
                        acc += g[[k, j]] * wk;
                    }
                    *o = acc;
                }
            }
        }
        Ok(out)
    }

    /// Materializes the full Jacobian `ds/df` as a dense matrix.
    pub fn jacobian(&self) -> Array2<T> {
        let size = self.num_samples();
        match &self.data {
            GreenData::Dense(g) => g.clone(),
            GreenData::Kernel(h) => {
                let mut g = Array2::zeros((size, size));
                for k in 2..size {
                    for j in 1..k {
                        g[[k, j]] = h[k - j - 1];
                    }
                }
                g
            }
        }
    }
}

const GREEN_MAGIC: &[u8; 5] = b"WGRN1";

/// Source slot tags stored in `WGRN1` headers.
pub mod source_tag {
    pub const INTERFERER: u8 = 0;
    pub const INTRUDER: u8 = 1;
    pub const OTHER: u8 = 255;
}

impl<T: Scalar> GreenOperator<T> {
    /// `WGRN1` binary: magic, mode (u8), source tag (u8), dt (f64 LE),
    /// step count (u64 LE), config hash (u64 LE), then the payload
    /// (`K-1` kernel values or the `(K+1)^2` dense matrix row-major).
    pub fn write_to<W: Write>(&self, mut w: W, tag: u8, config_hash: u64) -> Result<()> {
        w.write_all(GREEN_MAGIC)?;
        let mode = match self.data {
            GreenData::Kernel(_) => 0u8,
            GreenData::Dense(_) => 1u8,
        };
        w.write_all(&[mode, tag])?;
        w.write_all(&self.dt.to_f64_lossy().to_le_bytes())?;
        w.write_all(&(self.num_steps as u64).to_le_bytes())?;
        w.write_all(&config_hash.to_le_bytes())?;
        match &self.data {
            GreenData::Kernel(h) => {
                for v in h {
                    w.write_all(&v.to_f64_lossy().to_le_bytes())?;
                }
            }
            GreenData::Dense(g) => {
                for v in g.iter() {
                    w.write_all(&v.to_f64_lossy().to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>, tag: u8, config_hash: u64) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path)?;
        self.write_to(BufWriter::new(f), tag, config_hash)
    }

    /// Reads a `WGRN1` binary; returns the operator, its source tag, and the
    /// stored config hash.
    pub fn read_from<R: Read>(mut r: R, path: &Path) -> Result<(Self, u8, u64)> {
        let bad = |reason: &str| Error::format(path, reason);
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != GREEN_MAGIC {
            return Err(bad("bad magic, expected WGRN1"));
        }
        let mut two = [0u8; 2];
        r.read_exact(&mut two).map_err(|_| bad("truncated header"))?;
        let [mode, tag] = two;
        let mut eight = [0u8; 8];
        r.read_exact(&mut eight).map_err(|_| bad("truncated header"))?;
        let dt = f64::from_le_bytes(eight);
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(bad("non-positive time step"));
        }
        r.read_exact(&mut eight).map_err(|_| bad("truncated header"))?;
        let num_steps = u64::from_le_bytes(eight) as usize;
        if !(2..=(1 << 24)).contains(&num_steps) {
            return Err(bad("unreasonable step count"));
        }
        r.read_exact(&mut eight).map_err(|_| bad("truncated header"))?;
        let hash = u64::from_le_bytes(eight);
        let mut read_f64s = |count: usize| -> Result<Vec<T>> {
            let mut out = Vec::with_capacity(count);
            let mut b = [0u8; 8];
            for _ in 0..count {
                r.read_exact(&mut b).map_err(|_| bad("truncated data"))?;
                out.push(T::of(f64::from_le_bytes(b)));
            }
            Ok(out)
        };
        let data = match mode {
            0 => GreenData::Kernel(read_f64s(num_steps - 1)?),
            1 => {
                let size = num_steps + 1;
                let flat = read_f64s(size * size)?;
                GreenData::Dense(
                    Array2::from_shape_vec((size, size), flat)
                        .map_err(|_| bad("dense payload shape"))?,
                )
            }
            _ => return Err(bad("unknown mode byte")),
        };
        Ok((
            GreenOperator {
                dt: T::of(dt),
                num_steps,
                data,
            },
            tag,
            hash,
        ))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, u8, u64)> {
        let path = path.as_ref();
        let f = std::fs::File::open(path)?;
        Self::read_from(BufReader::new(f), path)
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_all, receiver_vector};
    use crate::geom::{Point2, Rect};
    use crate::mesh::build_rect_mesh;
    use crate::solver::SolverCounters;
    use crate::wave::{leapfrog_solve, SourcePath, TimeGrid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Fixture {
        ops: StepOperators<f64>,
        src: SourceTerm<f64>,
        quiet: SourceTerm<f64>,
        receiver: Vec<f64>,
        grid: TimeGrid<f64>,
    }

    fn fixture(num_steps: usize) -> Fixture {
        let mesh = build_rect_mesh(Rect::unit(), 0.2, 0.15, 11).unwrap();
        let matrices = assemble_all(&mesh).unwrap();
        let grid = TimeGrid::new(0.035, num_steps).unwrap();
        let ops = crate::wave::build_step_operators(&mesh, &matrices, 1.0, grid).unwrap();
        let src = SourceTerm::build(
            &mesh,
            &matrices.mass,
            &SourcePath::Static(Point2::new(0.25, 0.3)),
            0.4,
            grid,
        )
        .unwrap();
        let quiet = SourceTerm::from_static_load(vec![0.0; mesh.num_vertices()]);
        let receiver = receiver_vector(&mesh, Point2::new(0.75, 0.7)).unwrap();
        Fixture {
            ops,
            src,
            quiet,
            receiver,
            grid,
        }
    }

    fn random_signal(grid: TimeGrid<f64>, seed: u64) -> Signal<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Signal {
            dt: grid.dt,
            samples: (0..grid.num_samples()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }

    #[test]
    fn kernel_apply_matches_naive_leapfrog() {
        let fx = fixture(60);
        let adj = precompute_adjoint_column(&fx.ops, &fx.receiver, fx.grid.num_steps).unwrap();
        let green = build_green(&adj, &fx.src, GreenMode::Kernel).unwrap();
        for seed in 0..3 {
            let f = random_signal(fx.grid, seed);
            let fast = green.apply(&f).unwrap();
            let naive = leapfrog_solve(
                &fx.ops,
                &fx.src,
                &f,
                &fx.quiet,
                &Signal::zeros(fx.grid),
                &fx.receiver,
                false,
            )
            .unwrap()
            .trace;
            let scale = naive.max_abs().max(1e-30);
            for (a, b) in fast.samples.iter().zip(&naive.samples) {
                assert!(
                    (a - b).abs() / scale < 1e-10,
                    "seed {seed}: {a} vs {b} (scale {scale})"
                );
            }
        }
    }

    #[test]
    fn first_adjoint_column_matches_dense_solve() {
        let fx = fixture(8);
        let adj = precompute_adjoint_column(&fx.ops, &fx.receiver, fx.grid.num_steps).unwrap();
        let n = fx.ops.num_dofs();
        let mut a_plus = ndarray::Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                a_plus[[i, j]] = fx.ops.a_plus.entry(i, j);
            }
        }
        let rhs = ndarray::Array1::from_vec(fx.receiver.clone());
        let y1 = crate::dense::lu_solve(&a_plus, &rhs).unwrap();
        for i in 0..n {
            assert!((adj.columns[0][i] - y1[i]).abs() < 1e-11);
        }
    }

    #[test]
    fn block_toeplitz_identity_holds() {
        // With K = 5 the stored columns satisfy the block-Toeplitz system
        // row by row: A+ y_r + A0 y_{r-1} + A- y_{r-2} = (d if r == 1 else 0).
        let fx = fixture(5);
        let k = fx.grid.num_steps;
        let adj = precompute_adjoint_column(&fx.ops, &fx.receiver, k).unwrap();
        let n = fx.ops.num_dofs();
        for r in 1..k {
            let mut acc = vec![0.0; n];
            let mut add = |mat: &crate::sparse::SparseSymMatrix<f64>, col: Option<usize>| {
                if let Some(col) = col.filter(|c| (1..k).contains(c)) {
                    let prod = mat.apply(&adj.columns[col - 1]);
                    for (a, p) in acc.iter_mut().zip(prod) {
                        *a += p;
                    }
                }
            };
            add(&fx.ops.a_plus, Some(r));
            add(&fx.ops.a_zero, r.checked_sub(1));
            add(&fx.ops.a_minus, r.checked_sub(2));
            let want: Vec<f64> = if r == 1 {
                fx.receiver.clone()
            } else {
                vec![0.0; n]
            };
            for (a, w) in acc.iter().zip(&want) {
                assert!((a - w).abs() < 1e-10, "block row {r}");
            }
        }
    }

    #[test]
    fn dense_and_kernel_modes_agree_for_static_sources() {
        let fx = fixture(40);
        let adj = precompute_adjoint_column(&fx.ops, &fx.receiver, fx.grid.num_steps).unwrap();
        let kern = build_green(&adj, &fx.src, GreenMode::Kernel).unwrap();
        let dense = build_green(&adj, &fx.src, GreenMode::Dense).unwrap();
        let f = random_signal(fx.grid, 7);
        let a = kern.apply(&f).unwrap();
        let b = dense.apply(&f).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_apply_and_causality() {
        let fx = fixture(20);
        let adj = precompute_adjoint_column(&fx.ops, &fx.receiver, fx.grid.num_steps).unwrap();
        let green = build_green(&adj, &fx.src, GreenMode::Kernel).unwrap();
        let g = green.jacobian();
        let f = random_signal(fx.grid, 3);
        let s = green.apply(&f).unwrap();
        let fv = ndarray::Array1::from_vec(f.samples.clone());
        let gs = g.dot(&fv);
        for (a, b) in s.samples.iter().zip(gs.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        // Causality: zero at or above the diagonal, zero rows 0..1, zero column 0.
        let size = green.num_samples();
        for k in 0..size {
            for j in 0..size {
                if j >= k || k < 2 || j < 1 {
                    assert_eq!(g[[k, j]], 0.0, "expected zero at ({k},{j})");
                }
            }
        }
        // The first subdiagonal carries the kernel head: nonzero delay of one step.
        assert!(g[[2, 1]] != 0.0);
    }

    #[test]
    fn impulse_response_reproduces_kernel() {
        let fx = fixture(30);
        let adj = precompute_adjoint_column(&fx.ops, &fx.receiver, fx.grid.num_steps).unwrap();
        let green = build_green(&adj, &fx.src, GreenMode::Kernel).unwrap();
        let h = green.kernel().unwrap().to_vec();
        let j = 4usize;
        let mut f = Signal::zeros(fx.grid);
        f.samples[j] = 1.0;
        let s = green.apply(&f).unwrap();
        for k in 0..s.len() {
            let want = if k > j { h.get(k - j - 1).copied().unwrap_or(0.0) } else { 0.0 };
            assert!((s.samples[k] - want).abs() < 1e-14, "k = {k}");
        }
    }

    #[test]
    fn correlate_is_the_transpose() {
        let fx = fixture(25);
        let adj = precompute_adjoint_column(&fx.ops, &fx.receiver, fx.grid.num_steps).unwrap();
        for mode in [GreenMode::Kernel, GreenMode::Dense] {
            let green = build_green(&adj, &fx.src, mode).unwrap();
            let f = random_signal(fx.grid, 21);
            let w = random_signal(fx.grid, 22);
            let gf = green.apply(&f).unwrap();
            let gtw = green.correlate(&w.samples).unwrap();
            let lhs: f64 = gf.samples.iter().zip(&w.samples).map(|(a, b)| a * b).sum();
            let rhs: f64 = f.samples.iter().zip(&gtw).map(|(a, b)| a * b).sum();
            assert!(
                (lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1.0),
                "{mode:?}: {lhs} vs {rhs}"
            );
            assert_eq!(gtw[0], 0.0);
            assert_eq!(gtw[fx.grid.num_steps], 0.0);
        }
    }

    #[test]
    fn moving_source_dense_matches_naive() {
        let mesh = build_rect_mesh(Rect::unit(), 0.2, 0.0, 0).unwrap();
        let matrices = assemble_all(&mesh).unwrap();
        let grid = TimeGrid::new(0.05, 30).unwrap();
        let ops = crate::wave::build_step_operators(&mesh, &matrices, 1.0, grid).unwrap();
        // The source walks along a diagonal while emitting.
        let path: Vec<Point2<f64>> = (0..grid.num_samples())
            .map(|k| {
                let a = k as f64 / grid.num_steps as f64;
                Point2::new(0.2 + 0.5 * a, 0.3 + 0.3 * a)
            })
            .collect();
        let src = SourceTerm::build(
            &mesh,
            &matrices.mass,
            &SourcePath::PerStep(path),
            0.4,
            grid,
        )
        .unwrap();
        let quiet = SourceTerm::from_static_load(vec![0.0; mesh.num_vertices()]);
        let receiver = receiver_vector(&mesh, Point2::new(0.8, 0.8)).unwrap();
        let adj = precompute_adjoint_column(&ops, &receiver, grid.num_steps).unwrap();
        assert!(build_green(&adj, &src, GreenMode::Kernel).is_err());
        let green = build_green(&adj, &src, GreenMode::Dense).unwrap();
        let f = random_signal(grid, 5);
        let fast = green.apply(&f).unwrap();
        let naive = leapfrog_solve(&ops, &src, &f, &quiet, &Signal::zeros(grid), &receiver, false)
            .unwrap()
            .trace;
        let scale = naive.max_abs().max(1e-30);
        for (a, b) in fast.samples.iter().zip(&naive.samples) {
            assert!((a - b).abs() / scale < 1e-10);
        }
    }

    #[test]
    fn streaming_kernels_match_stored_columns() {
        let fx = fixture(35);
        let adj = precompute_adjoint_column(&fx.ops, &fx.receiver, fx.grid.num_steps).unwrap();
        let stored = build_green(&adj, &fx.src, GreenMode::Kernel).unwrap();
        let streamed = precompute_green_kernels(
            &fx.ops,
            &fx.receiver,
            &[fx.src.load_at(0)],
            fx.grid.num_steps,
        )
        .unwrap();
        assert_eq!(stored.kernel().unwrap(), streamed[0].kernel().unwrap());
    }

    #[test]
    fn precompute_costs_one_factorization_and_k_minus_one_solves() {
        let mesh = build_rect_mesh(Rect::unit(), 0.2, 0.0, 0).unwrap();
        let matrices = assemble_all(&mesh).unwrap();
        let grid = TimeGrid::new(0.05, 50).unwrap();
        let before = SolverCounters::snapshot();
        let ops = crate::wave::build_step_operators(&mesh, &matrices, 1.0, grid).unwrap();
        let receiver = receiver_vector(&mesh, Point2::new(0.6, 0.4)).unwrap();
        let src = SourceTerm::build(
            &mesh,
            &matrices.mass,
            &SourcePath::Static(Point2::new(0.3, 0.7)),
            0.4,
            grid,
        )
        .unwrap();
        let _greens = precompute_green_kernels(
            &ops,
            &receiver,
            &[src.load_at(0), &receiver],
            grid.num_steps,
        )
        .unwrap();
        let delta = SolverCounters::snapshot().since(&before);
        assert_eq!(delta.factorizations, 1);
        assert_eq!(delta.triangular_solves, grid.num_steps as u64 - 1);
        assert_eq!(delta.cg_solves, 0);
    }

    #[test]
    fn green_file_round_trips() {
        let fx = fixture(12);
        let adj = precompute_adjoint_column(&fx.ops, &fx.receiver, fx.grid.num_steps).unwrap();
        for mode in [GreenMode::Kernel, GreenMode::Dense] {
            let green = build_green(&adj, &fx.src, mode).unwrap();
            let mut buf = Vec::new();
            green.write_to(&mut buf, source_tag::INTERFERER, 0xABCD).unwrap();
            let (back, tag, hash) =
                GreenOperator::<f64>::read_from(&buf[..], Path::new("mem")).unwrap();
            assert_eq!(tag, source_tag::INTERFERER);
            assert_eq!(hash, 0xABCD);
            assert_eq!(back.mode(), mode);
            assert_eq!(back.dt, green.dt);
            let f = random_signal(fx.grid, 9);
            assert_eq!(
                back.apply(&f).unwrap().samples,
                green.apply(&f).unwrap().samples
            );
        }
        let garbage = b"WGRNX rest";
        assert!(GreenOperator::<f64>::read_from(&garbage[..], Path::new("mem")).is_err());
    }
}
