//! Sparse symmetric matrices in upper-triangle storage.
//!
//! Assembly accumulates duplicate entries through a deterministic builder
//! (sorted map), after which the matrix is frozen: the upper triangle is kept
//! for persistence and a full-pattern CSR is derived for matrix-vector
//! products. The text format is:
//!
//! ```text
//! spsym v1 <n> <nnz>
//! i j value        (nnz lines, i <= j, 0-based)
//! ```

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// Accumulating builder for a symmetric sparse matrix.
#[derive(Debug, Clone)]
pub struct SymCooBuilder<T> {
    n: usize,
    entries: BTreeMap<(usize, usize), T>,
}

impl<T: Scalar> SymCooBuilder<T> {
    pub fn new(n: usize) -> Self {
        SymCooBuilder {
            n,
            entries: BTreeMap::new(),
        }
    }

    /// Adds `value` at `(i, j)`; symmetric, so only the upper triangle is kept.
    /// Duplicate additions accumulate.
    pub fn add(&mut self, i: usize, j: usize, value: T) {
        debug_assert!(i < self.n && j < self.n, "index out of range");
        let key = (i.min(j), i.max(j));
        *self.entries.entry(key).or_insert_with(T::zero) += value;
    }

    /// Freezes the builder, dropping exact zeros.
    pub fn build(self) -> SparseSymMatrix<T> {
        let upper: Vec<(usize, usize, T)> = self
            .entries
            .into_iter()
            .filter(|&(_, v)| v != T::zero())
            .map(|((i, j), v)| (i, j, v))
            .collect();
        SparseSymMatrix::from_upper(self.n, upper)
    }
}

/// Immutable sparse symmetric matrix.
#[derive(Debug, Clone)]
pub struct SparseSymMatrix<T> {
    n: usize,
    /// Upper-triangle entries `(i, j, value)` with `i <= j`, sorted by `(i, j)`.
    upper: Vec<(usize, usize, T)>,
    /// Full-pattern CSR used for products.
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SparseSymMatrix<T> {
    fn from_upper(n: usize, upper: Vec<(usize, usize, T)>) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(i, j, _) in &upper {
            counts[i + 1] += 1;
            if i != j {
                counts[j + 1] += 1;
            }
        }
        for k in 0..n {
            counts[k + 1] += counts[k];
        }
        let row_ptr = counts.clone();
        let nnz = row_ptr[n];
        let mut col_idx = vec![0usize; nnz];
        let mut values = vec![T::zero(); nnz];
        let mut cursor = row_ptr.clone();
        for &(i, j, v) in &upper {
            col_idx[cursor[i]] = j;
            values[cursor[i]] = v;
            cursor[i] += 1;
            if i != j {
                col_idx[cursor[j]] = i;
                values[cursor[j]] = v;
                cursor[j] += 1;
            }
        }
        // Rows come out sorted by construction for i <= j entries followed by
        // mirrored ones; normalize ordering per row for binary search.
        let mut mat = SparseSymMatrix {
            n,
            upper,
            row_ptr,
            col_idx,
            values,
        };
        mat.sort_rows();
        mat
    }

    fn sort_rows(&mut self) {
        for i in 0..self.n {
            let lo = self.row_ptr[i];
            let hi = self.row_ptr[i + 1];
            let mut row: Vec<(usize, T)> = (lo..hi).map(|k| (self.col_idx[k], self.values[k])).collect();
            row.sort_by_key(|&(c, _)| c);
            for (off, (c, v)) in row.into_iter().enumerate() {
                self.col_idx[lo + off] = c;
                self.values[lo + off] = v;
            }
        }
    }

    /// Zero matrix of dimension `n`.
    pub fn zeros(n: usize) -> Self {
        SparseSymMatrix::from_upper(n, Vec::new())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored upper-triangle entries.
    pub fn nnz_upper(&self) -> usize {
        self.upper.len()
    }

    /// Stored upper-triangle entries `(i, j, value)` with `i <= j`.
    pub fn upper_entries(&self) -> &[(usize, usize, T)] {
        &self.upper
    }

    /// Value at `(i, j)`; zero when the entry is not stored.
    pub fn entry(&self, i: usize, j: usize) -> T {
        assert!(i < self.n && j < self.n, "index out of range");
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(k) => self.values[lo + k],
            Err(_) => T::zero(),
        }
    }

    /// Column indices adjacent to row `i` (full pattern, sorted).
    pub fn row_indices(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.n, "matvec dimension mismatch");
        assert_eq!(y.len(), self.n, "matvec dimension mismatch");
        for i in 0..self.n {
            let mut acc = T::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    /// `A x` into a fresh vector.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        self.matvec(x, &mut y);
        y
    }

    /// `y -= A x`, reusing the caller's buffer.
    pub fn apply_sub_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.n, "matvec dimension mismatch");
        assert_eq!(y.len(), self.n, "matvec dimension mismatch");
        for i in 0..self.n {
            let mut acc = T::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] -= acc;
        }
    }

    /// Quadratic form `v^T A w`.
    pub fn bilinear(&self, v: &[T], w: &[T]) -> T {
        let aw = self.apply(w);
        v.iter().zip(&aw).fold(T::zero(), |acc, (&a, &b)| acc + a * b)
    }

    /// Sum of all matrix entries (both triangles).
    pub fn sum_entries(&self) -> T {
        let mut s = T::zero();
        for &(i, j, v) in &self.upper {
            s += if i == j { v } else { T::of(2.0) * v };
        }
        s
    }

    /// `alpha * A + beta * B` over the union pattern.
    pub fn lin_comb(alpha: T, a: &Self, beta: T, b: &Self) -> Result<Self> {
        if a.n != b.n {
            return Err(Error::ShapeMismatch(format!(
                "lin_comb of {}x{} and {}x{} matrices",
                a.n, a.n, b.n, b.n
            )));
        }
        let mut entries: BTreeMap<(usize, usize), T> = BTreeMap::new();
        for &(i, j, v) in &a.upper {
            *entries.entry((i, j)).or_insert_with(T::zero) += alpha * v;
        }
        for &(i, j, v) in &b.upper {
            *entries.entry((i, j)).or_insert_with(T::zero) += beta * v;
        }
        let upper = entries
            .into_iter()
            .filter(|&(_, v)| v != T::zero())
            .map(|((i, j), v)| (i, j, v))
            .collect();
        Ok(SparseSymMatrix::from_upper(a.n, upper))
    }

    /// `alpha * A`.
    pub fn scaled(&self, alpha: T) -> Self {
        let upper = self.upper.iter().map(|&(i, j, v)| (i, j, alpha * v)).collect();
        SparseSymMatrix::from_upper(self.n, upper)
    }

    /// Writes the matrix in `spsym v1` text form.
    pub fn write_to<W: Write>(&self, mut w: W, config_hash: Option<u64>) -> Result<()> {
        writeln!(w, "spsym v1 {} {}", self.n, self.upper.len())?;
        if let Some(h) = config_hash {
            writeln!(w, "# config {h:016x}")?;
        }
        for &(i, j, v) in &self.upper {
            writeln!(w, "{} {} {}", i, j, v.to_f64_lossy())?;
        }
        Ok(())
    }

    /// Parses an `spsym v1` stream.
    pub fn read_from<R: BufRead>(r: R, origin: &str) -> Result<(Self, Option<u64>)> {
        let fail = |reason: &str| Error::format(origin, reason);
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| fail("empty file"))??;
        let head: Vec<&str> = header.split_whitespace().collect();
        if head.len() != 4 || head[0] != "spsym" || head[1] != "v1" {
            return Err(fail("expected header `spsym v1 <n> <nnz>`"));
        }
        let n: usize = head[2].parse().map_err(|_| fail("bad dimension"))?;
        let nnz: usize = head[3].parse().map_err(|_| fail("bad entry count"))?;
        let mut config_hash = None;
        let mut builder = SymCooBuilder::new(n);
        let mut seen = 0usize;
        for line in lines {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('#') {
                let toks: Vec<&str> = rest.split_whitespace().collect();
                if toks.len() == 2 && toks[0] == "config" {
                    config_hash =
                        Some(u64::from_str_radix(toks[1], 16).map_err(|_| fail("bad config hash"))?);
                }
                continue;
            }
            let toks: Vec<&str> = trimmed.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(fail("entry line must hold `i j value`"));
            }
            let i: usize = toks[0].parse().map_err(|_| fail("bad row index"))?;
            let j: usize = toks[1].parse().map_err(|_| fail("bad column index"))?;
            let v: f64 = toks[2].parse().map_err(|_| fail("bad value"))?;
            if i > j {
                return Err(fail("entries must satisfy i <= j"));
            }
            if j >= n {
                return Err(fail("index out of range"));
            }
            builder.add(i, j, T::of(v));
            seen += 1;
        }
        if seen != nnz {
            return Err(fail(&format!("expected {nnz} entries, found {seen}")));
        }
        Ok((builder.build(), config_hash))
    }

    pub fn save(&self, path: impl AsRef<Path>, config_hash: Option<u64>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_to(BufWriter::new(file), config_hash)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, Option<u64>)> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        Self::read_from(BufReader::new(file), &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SparseSymMatrix<f64> {
        // [[4, 1, 0], [1, 3, 2], [0, 2, 5]]
        let mut b = SymCooBuilder::new(3);
        b.add(0, 0, 4.0);
        b.add(1, 0, 0.5); // accumulates with the mirrored add below
        b.add(0, 1, 0.5);
        b.add(1, 1, 3.0);
        b.add(1, 2, 2.0);
        b.add(2, 2, 5.0);
        b.build()
    }

    #[test]
    fn builder_accumulates_and_orders() {
        let m = sample();
        assert_eq!(m.n(), 3);
        assert_eq!(m.nnz_upper(), 5);
        assert_eq!(m.entry(0, 1), 1.0);
        assert_eq!(m.entry(1, 0), 1.0);
        assert_eq!(m.entry(0, 2), 0.0);
        assert_eq!(m.entry(2, 2), 5.0);
    }

    #[test]
    fn matvec_matches_dense_arithmetic() {
        let m = sample();
        let y = m.apply(&[1.0, -1.0, 2.0]);
        assert_eq!(y, vec![3.0, 2.0, 8.0]);
    }

    #[test]
    fn bilinear_form_is_symmetric() {
        let m = sample();
        let v = [0.3, -1.2, 0.7];
        let w = [2.0, 0.5, -0.25];
        let a = m.bilinear(&v, &w);
        let b = m.bilinear(&w, &v);
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn sum_entries_counts_both_triangles() {
        let m = sample();
        assert_eq!(m.sum_entries(), 4.0 + 3.0 + 5.0 + 2.0 * (1.0 + 2.0));
    }

    #[test]
    fn lin_comb_matches_entrywise_arithmetic() {
        let m = sample();
        let c = SparseSymMatrix::lin_comb(2.0, &m, -1.0, &m).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(c.entry(i, j), m.entry(i, j));
            }
        }
        let z = SparseSymMatrix::lin_comb(1.0, &m, -1.0, &m).unwrap();
        assert_eq!(z.nnz_upper(), 0);
        let mismatched = SparseSymMatrix::<f64>::zeros(2);
        assert!(SparseSymMatrix::lin_comb(1.0, &m, 1.0, &mismatched).is_err());
    }

    #[test]
    fn text_round_trip() {
        let m = sample();
        let mut buf = Vec::new();
        m.write_to(&mut buf, Some(7)).unwrap();
        let (back, hash) = SparseSymMatrix::<f64>::read_from(buf.as_slice(), "mem").unwrap();
        assert_eq!(hash, Some(7));
        assert_eq!(back.n(), m.n());
        assert_eq!(back.upper_entries(), m.upper_entries());
    }

    #[test]
    fn rejects_lower_triangle_entries() {
        let text = "spsym v1 2 1\n1 0 3.0\n";
        assert!(SparseSymMatrix::<f64>::read_from(text.as_bytes(), "mem").is_err());
    }
}
