//! Small dense linear algebra: pivoted LU solves, a cyclic Jacobi symmetric
//! eigensolver, and Householder-based completion of an orthonormal set.
//!
//! These routines back the null-space construction and serve as oracles for
//! the sparse solver; problem sizes stay in the hundreds-to-thousands range,
//! where the simple O(n^3) algorithms are entirely adequate.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use ndarray::{Array1, Array2};

/// Solves `A x = b` by partial-pivoted LU elimination. `A` is consumed as a copy.
pub fn lu_solve<T: Scalar>(a: &Array2<T>, b: &Array1<T>) -> Result<Array1<T>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "lu_solve on {}x{} matrix with rhs of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let mut m = a.clone();
    let mut x = b.clone();
    for col in 0..n {
        let mut pivot = col;
        let mut best = m[[col, col]].abs();
        for r in col + 1..n {
            if m[[r, col]].abs() > best {
                best = m[[r, col]].abs();
                pivot = r;
            }
        }
        if best == T::zero() || !best.is_finite() {
            return Err(Error::Numeric("singular matrix in lu_solve".into()));
        }
        if pivot != col {
            for c in 0..n {
                let tmp = m[[col, c]];
                m[[col, c]] = m[[pivot, c]];
                m[[pivot, c]] = tmp;
            }
            x.swap(col, pivot);
        }
        for r in col + 1..n {
            let factor = m[[r, col]] / m[[col, col]];
            if factor == T::zero() {
                continue;
            }
            for c in col..n {
                let upd = m[[col, c]] * factor;
                m[[r, c]] = m[[r, c]] - upd;
            }
            let upd = x[col] * factor;
            x[r] = x[r] - upd;
        }
    }
    for r in (0..n).rev() {
        let mut acc = x[r];
        for c in r + 1..n {
            acc = acc - m[[r, c]] * x[c];
        }
        x[r] = acc / m[[r, r]];
    }
    Ok(x)
}

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as the
/// columns of an orthogonal matrix `V` with `A = V diag(w) V^T`.
pub fn jacobi_eigh<T: Scalar>(a: &Array2<T>) -> Result<(Array1<T>, Array2<T>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::ShapeMismatch("jacobi_eigh needs a square matrix".into()));
    }
    let mut sym_err = T::zero();
    for i in 0..n {
        for j in i + 1..n {
            sym_err = sym_err.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    let scale = a.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    if sym_err > T::of(1e-10) * scale.max(T::one()) {
        return Err(Error::Numeric("jacobi_eigh input is not symmetric".into()));
    }
    let mut m = a.clone();
    let mut v = Array2::<T>::eye(n);
    if n <= 1 {
        let w = Array1::from_iter((0..n).map(|i| m[[i, i]]));
        return Ok((w, v));
    }
    let off_norm = |m: &Array2<T>| {
        let mut s = T::zero();
        for i in 0..n {
            for j in i + 1..n {
                s += m[[i, j]] * m[[i, j]];
            }
        }
        s.sqrt()
    };
    let frob = {
        let mut s = T::zero();
        for x in m.iter() {
            s += *x * *x;
        }
        s.sqrt()
    };
    let tol = T::epsilon() * frob.max(T::min_positive_value());
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        if off_norm(&m) <= tol {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq.abs() <= tol / T::of(n as f64) {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let tau = (aqq - app) / (T::of(2.0) * apq);
                let t = if tau >= T::zero() {
                    T::one() / (tau + (T::one() + tau * tau).sqrt())
                } else {
                    -T::one() / (-tau + (T::one() + tau * tau).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    if off_norm(&m) > T::of(1e3) * tol.max(T::min_positive_value()) {
        return Err(Error::Numeric("jacobi_eigh failed to converge".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<T> = (0..n).map(|i| m[[i, i]]).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).expect("finite eigenvalues"));
    let w = Array1::from_iter(order.iter().map(|&i| diag[i]));
    let mut vs = Array2::<T>::zeros((n, n));
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            vs[[r, new_col]] = v[[r, old_col]];
        }
    }
    Ok((w, vs))
}

/// Completes the orthonormal columns of `v` (n x k, k <= n) to a full basis and
/// returns the `n x (n - k)` complement: columns orthonormal and orthogonal to
/// every column of `v`.
///
/// Implemented as a full Householder QR of `v`: the reflectors triangularize
/// `v`, and applying them in reverse to the trailing identity columns yields
/// the complement.
pub fn orthonormal_complement<T: Scalar>(v: &Array2<T>) -> Result<Array2<T>> {
    let n = v.nrows();
    let k = v.ncols();
    if k > n {
        return Err(Error::ShapeMismatch(format!(
            "cannot complement {k} columns in dimension {n}"
        )));
    }
    // Householder vectors stored in-place below the triangularized columns.
    let mut m = v.clone();
    let mut betas = Vec::with_capacity(k);
    for col in 0..k {
        let mut norm = T::zero();
        for r in col..n {
            norm += m[[r, col]] * m[[r, col]];
        }
        let norm = norm.sqrt();
        if norm == T::zero() {
            return Err(Error::Numeric(
                "orthonormal_complement given linearly dependent columns".into(),
            ));
        }
        let alpha = if m[[col, col]] >= T::zero() { -norm } else { norm };
        let mut vnorm2 = T::zero();
        m[[col, col]] = m[[col, col]] - alpha;
        for r in col..n {
            vnorm2 += m[[r, col]] * m[[r, col]];
        }
        let beta = if vnorm2 == T::zero() {
            T::zero()
        } else {
            T::of(2.0) / vnorm2
        };
        betas.push(beta);
        for c in col + 1..k {
            let mut dot = T::zero();
            for r in col..n {
                dot += m[[r, col]] * m[[r, c]];
            }
            let f = beta * dot;
            for r in col..n {
                let upd = m[[r, col]] * f;
                m[[r, c]] = m[[r, c]] - upd;
            }
        }
    }
    // complement column j = Q e_{k+j} = H_1 ... H_k e_{k+j}, applied in reverse.
    let mut out = Array2::<T>::zeros((n, n - k));
    for j in 0..n - k {
        let mut e = vec![T::zero(); n];
        e[k + j] = T::one();
        for col in (0..k).rev() {
            let mut dot = T::zero();
            for r in col..n {
                dot += m[[r, col]] * e[r];
            }
            let f = betas[col] * dot;
            for r in col..n {
                e[r] = e[r] - m[[r, col]] * f;
            }
        }
        for r in 0..n {
            out[[r, j]] = e[r];
        }
    }
    Ok(out)
}
