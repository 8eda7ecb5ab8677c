//! Sparse symmetric positive definite solves.
//!
//! The direct path is an envelope (skyline) Cholesky factorization under a
//! reverse Cuthill-McKee ordering: factor once, then reuse the triangular
//! factors for every right-hand side of the time loop. A Jacobi-preconditioned
//! conjugate-gradient fallback covers meshes too large to factor.
//!
//! Process-wide counters record every factorization, triangular solve, and CG
//! solve so callers can assert the cost structure of a pipeline stage (e.g.
//! that precompute performs exactly one factorization plus K-1
//! back-substitutions, and that attack iterations perform none at all).

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparse::SparseSymMatrix;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

static FACTOR_COUNT: AtomicU64 = AtomicU64::new(0);
static TRIANGULAR_SOLVE_COUNT: AtomicU64 = AtomicU64::new(0);
static CG_SOLVE_COUNT: AtomicU64 = AtomicU64::new(0);

/// Number of sparse Cholesky factorizations performed by this process.
pub fn factor_count() -> u64 {
    FACTOR_COUNT.load(AtomicOrdering::Relaxed)
}

/// Number of sparse triangular solve pairs (forward + backward) performed.
pub fn triangular_solve_count() -> u64 {
    TRIANGULAR_SOLVE_COUNT.load(AtomicOrdering::Relaxed)
}

/// Number of conjugate-gradient solves performed.
pub fn cg_solve_count() -> u64 {
    CG_SOLVE_COUNT.load(AtomicOrdering::Relaxed)
}

/// Snapshot of all solver counters, for before/after deltas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverCounters {
    pub factorizations: u64,
    pub triangular_solves: u64,
    pub cg_solves: u64,
}

impl SolverCounters {
    pub fn snapshot() -> Self {
        SolverCounters {
            factorizations: factor_count(),
            triangular_solves: triangular_solve_count(),
            cg_solves: cg_solve_count(),
        }
    }

    /// Counter increments since `earlier`.
    pub fn since(&self, earlier: &SolverCounters) -> SolverCounters {
        SolverCounters {
            factorizations: self.factorizations - earlier.factorizations,
            triangular_solves: self.triangular_solves - earlier.triangular_solves,
            cg_solves: self.cg_solves - earlier.cg_solves,
        }
    }
}

/// Row ordering applied before factorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ordering {
    /// Keep the matrix ordering as assembled.
    Natural,
    /// Reverse Cuthill-McKee bandwidth reduction.
    #[default]
    ReverseCuthillMcKee,
}

/// Computes a reverse Cuthill-McKee permutation (`perm[new] = old`) from the
/// symmetric sparsity pattern. Deterministic: BFS starts at the minimum-degree
/// vertex of each component and visits neighbors in (degree, index) order.
pub fn rcm_ordering<T: Scalar>(a: &SparseSymMatrix<T>) -> Vec<usize> {
    let n = a.n();
    let degree = |i: usize| a.row_indices(i).len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree(i), i));
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut nbrs: Vec<usize> = a
                .row_indices(u)
                .iter()
                .copied()
                .filter(|&v| v != u && !visited[v])
                .collect();
            nbrs.sort_by_key(|&v| (degree(v), v));
            for v in nbrs {
                if !visited[v] {
                    visited[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    order.reverse();
    order
}

/// Envelope Cholesky factorization `P A P^T = L L^T`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor<T> {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// First stored column of each (permuted) row.
    first_col: Vec<usize>,
    /// Offset of each row's packed storage.
    row_ptr: Vec<usize>,
    /// Packed rows `[first_col[i] ..= i]` of `L`.
    data: Vec<T>,
}

impl<T: Scalar> CholeskyFactor<T> {
    /// Factors an SPD matrix. Fails with a numeric error when a non-positive
    /// pivot reveals the matrix as not positive definite.
    pub fn factor(a: &SparseSymMatrix<T>, ordering: Ordering) -> Result<Self> {
        let n = a.n();
        if n == 0 {
            return Err(Error::invalid("matrix", "cannot factor an empty matrix"));
        }
        let perm = match ordering {
            Ordering::Natural => (0..n).collect::<Vec<_>>(),
            Ordering::ReverseCuthillMcKee => rcm_ordering(a),
        };
        let mut iperm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        // Envelope: row i stores columns [first_col[i] ..= i] in permuted indexing.
        let mut first_col: Vec<usize> = (0..n).collect();
        for i_new in 0..n {
            for &j_old in a.row_indices(perm[i_new]) {
                let j_new = iperm[j_old];
                if j_new < i_new {
                    first_col[i_new] = first_col[i_new].min(j_new);
                }
            }
        }
        let mut row_ptr = vec![0usize; n + 1];
        for i in 0..n {
            row_ptr[i + 1] = row_ptr[i] + (i - first_col[i] + 1);
        }
        let mut data = vec![T::zero(); row_ptr[n]];
        for i_new in 0..n {
            let old = perm[i_new];
            for &j_old in a.row_indices(old) {
                let j_new = iperm[j_old];
                if j_new <= i_new {
                    let slot = row_ptr[i_new] + (j_new - first_col[i_new]);
                    data[slot] = a.entry(old, j_old);
                }
            }
        }
        // In-place envelope factorization.
        for i in 0..n {
            let fi = first_col[i];
            for j in fi..i {
                let fj = first_col[j];
                let lo = fi.max(fj);
                let mut s = data[row_ptr[i] + (j - fi)];
                for k in lo..j {
                    s -= data[row_ptr[i] + (k - fi)] * data[row_ptr[j] + (k - fj)];
                }
                let djj = data[row_ptr[j] + (j - fj)];
                data[row_ptr[i] + (j - fi)] = s / djj;
            }
            let mut s = data[row_ptr[i] + (i - fi)];
            for k in fi..i {
                let l = data[row_ptr[i] + (k - fi)];
                s -= l * l;
            }
            if !(s > T::zero()) || !s.is_finite() {
                return Err(Error::Numeric(format!(
                    "matrix is not positive definite (pivot {:e} at row {i})",
                    s.to_f64_lossy()
                )));
            }
            data[row_ptr[i] + (i - fi)] = s.sqrt();
        }
        FACTOR_COUNT.fetch_add(1, AtomicOrdering::Relaxed);
        Ok(CholeskyFactor {
            n,
            perm,
            first_col,
            row_ptr,
            data,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored entries of the factor (envelope size), a fill-in diagnostic.
    pub fn envelope_len(&self) -> usize {
        self.data.len()
    }

    /// Solves `A x = b` by one forward and one backward substitution.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        assert_eq!(b.len(), self.n, "solve dimension mismatch");
        let mut y = vec![T::zero(); self.n];
        for i in 0..self.n {
            y[i] = b[self.perm[i]];
        }
        // L y' = P b
        for i in 0..self.n {
            let fi = self.first_col[i];
            let mut s = y[i];
            for k in fi..i {
                s -= self.data[self.row_ptr[i] + (k - fi)] * y[k];
            }
            y[i] = s / self.data[self.row_ptr[i] + (i - fi)];
        }
        // L^T x' = y', processed by rows of L in reverse with scatter updates.
        for i in (0..self.n).rev() {
            let fi = self.first_col[i];
            let xi = y[i] / self.data[self.row_ptr[i] + (i - fi)];
            y[i] = xi;
            for k in fi..i {
                let upd = self.data[self.row_ptr[i] + (k - fi)] * xi;
                y[k] = y[k] - upd;
            }
        }
        let mut x = vec![T::zero(); self.n];
        for i in 0..self.n {
            x[self.perm[i]] = y[i];
        }
        TRIANGULAR_SOLVE_COUNT.fetch_add(1, AtomicOrdering::Relaxed);
        x
    }
}

/// Jacobi-preconditioned conjugate gradients to relative residual `tol_rel`.
///
/// Fallback for meshes too large to factor directly; counted separately from
/// triangular solves.
pub fn cg_solve<T: Scalar>(
    a: &SparseSymMatrix<T>,
    b: &[T],
    tol_rel: T,
    max_iters: usize,
) -> Result<Vec<T>> {
    let n = a.n();
    if b.len() != n {
        return Err(Error::ShapeMismatch("cg_solve rhs dimension mismatch".into()));
    }
    let dot = |u: &[T], v: &[T]| u.iter().zip(v).fold(T::zero(), |acc, (&x, &y)| acc + x * y);
    let norm_b = dot(b, b).sqrt();
    if norm_b == T::zero() {
        CG_SOLVE_COUNT.fetch_add(1, AtomicOrdering::Relaxed);
        return Ok(vec![T::zero(); n]);
    }
    let inv_diag: Vec<T> = (0..n)
        .map(|i| {
            let d = a.entry(i, i);
            if d > T::zero() {
                T::one() / d
            } else {
                T::one()
            }
        })
        .collect();
    let mut x = vec![T::zero(); n];
    let mut r = b.to_vec();
    let mut z: Vec<T> = r.iter().zip(&inv_diag).map(|(&ri, &di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![T::zero(); n];
    for _ in 0..max_iters {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return Err(Error::Numeric("cg_solve found non-positive curvature".into()));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= tol_rel * norm_b {
            CG_SOLVE_COUNT.fetch_add(1, AtomicOrdering::Relaxed);
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Numeric(format!(
        "cg_solve did not reach relative residual {:e} in {max_iters} iterations",
        tol_rel.to_f64_lossy()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::SymCooBuilder;
    use ndarray::{Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> SparseSymMatrix<f64> {
        // Diagonally dominant band matrix: SPD by Gershgorin.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = SymCooBuilder::new(n);
        for i in 0..n {
            b.add(i, i, 4.0 + rng.gen_range(0.0..1.0));
            for off in 1..=3usize {
                if i + off < n {
                    b.add(i, i + off, rng.gen_range(-0.4..0.4));
                }
            }
        }
        b.build()
    }

    fn to_dense(a: &SparseSymMatrix<f64>) -> Array2<f64> {
        let n = a.n();
        let mut d = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                d[[i, j]] = a.entry(i, j);
            }
        }
        d
    }

    #[test]
    fn skyline_matches_dense_lu() {
        for seed in 0..4u64 {
            let a = random_spd(40, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let b: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let chol = CholeskyFactor::factor(&a, Ordering::ReverseCuthillMcKee).unwrap();
            let x = chol.solve(&b);
            let dense = to_dense(&a);
            let xd = crate::dense::lu_solve(&dense, &Array1::from_vec(b.clone())).unwrap();
            for i in 0..40 {
                assert!((x[i] - xd[i]).abs() < 1e-10, "mismatch at {i}");
            }
        }
    }

    #[test]
    fn natural_ordering_also_correct() {
        let a = random_spd(25, 9);
        let b: Vec<f64> = (0..25).map(|i| (i as f64).sin()).collect();
        let x1 = CholeskyFactor::factor(&a, Ordering::Natural).unwrap().solve(&b);
        let x2 = CholeskyFactor::factor(&a, Ordering::ReverseCuthillMcKee)
            .unwrap()
            .solve(&b);
        for i in 0..25 {
            assert!((x1[i] - x2[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn rcm_shrinks_envelope_of_scrambled_band() {
        // Scramble a band matrix; RCM should recover a small envelope.
        let n = 60;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        let mut b = SymCooBuilder::new(n);
        for i in 0..n {
            b.add(perm[i], perm[i], 5.0);
            if i + 1 < n {
                b.add(perm[i], perm[i + 1], -1.0);
            }
        }
        let a = b.build();
        let nat = CholeskyFactor::factor(&a, Ordering::Natural).unwrap();
        let rcm = CholeskyFactor::factor(&a, Ordering::ReverseCuthillMcKee).unwrap();
        assert!(
            rcm.envelope_len() < nat.envelope_len(),
            "rcm {} vs natural {}",
            rcm.envelope_len(),
            nat.envelope_len()
        );
        assert!(rcm.envelope_len() <= 2 * n, "tridiagonal envelope expected");
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let mut b = SymCooBuilder::new(2);
        b.add(0, 0, 1.0);
        b.add(0, 1, 2.0);
        b.add(1, 1, 1.0);
        let a = b.build();
        assert!(CholeskyFactor::factor(&a, Ordering::Natural).is_err());
    }

    #[test]
    fn cg_agrees_with_direct() {
        let a = random_spd(50, 2);
        let b: Vec<f64> = (0..50).map(|i| ((i * 7 % 13) as f64) - 6.0).collect();
        let direct = CholeskyFactor::factor(&a, Ordering::ReverseCuthillMcKee)
            .unwrap()
            .solve(&b);
        let iterative = cg_solve(&a, &b, 1e-12, 1000).unwrap();
        for i in 0..50 {
            assert!((direct[i] - iterative[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn counters_track_factor_and_solve_events() {
        let a = random_spd(10, 77);
        let before = SolverCounters::snapshot();
        let chol = CholeskyFactor::factor(&a, Ordering::ReverseCuthillMcKee).unwrap();
        let b = vec![1.0; 10];
        let _ = chol.solve(&b);
        let _ = chol.solve(&b);
        let _ = cg_solve(&a, &b, 1e-10, 100).unwrap();
        let delta = SolverCounters::snapshot().since(&before);
        assert_eq!(delta.factorizations, 1);
        assert_eq!(delta.triangular_solves, 2);
        assert_eq!(delta.cg_solves, 1);
    }
}
