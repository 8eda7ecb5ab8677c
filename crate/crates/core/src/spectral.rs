//! Short-time Fourier analysis, dB spectrograms, and the band-constraint
//! projector.
//!
//! A trace of `S = K + 1` samples is cut into `M = ceil(max(S - W, 0) / H) + 1`
//! windows of length `W` at hop `H`, each tapered by the Hann window
//! `w(k) = 1/2 - 1/2 cos(2 pi k / (W - 1))` and correlated against `L`
//! uniformly spaced (possibly fractional) frequency bins `omega in [0, W/2]`:
//!
//! ```text
//! z[l][m] = sum_k w(k) s[mH + k] exp(-i 2 pi k omega_l / W)
//! ```
//!
//! Power is reported in decibels with a hard floor. Every map here ships with
//! its vector-Jacobian product so gradients can flow from a spectrogram loss
//! back to the time samples analytically.
//!
//! The projector onto signals invisible to a set of disallowed rows is built
//! from the real stacking of those STFT rows: an eigendecomposition of the
//! smaller Gram matrix yields the row space, and a Householder complement
//! yields an orthonormal null-space basis `N` with `P = N N^T`.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use num_complex::Complex;

use crate::dense::{jacobi_eigh, orthonormal_complement};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Hann window of the given length (two or more taps).
pub fn hann<T: Scalar>(len: usize) -> Vec<T> {
    assert!(len >= 2, "hann window needs at least two taps");
    let half = T::of(0.5);
    let denom = T::of((len - 1) as f64);
    (0..len)
        .map(|k| half - half * (T::of(2.0) * T::PI() * T::of(k as f64) / denom).cos())
        .collect()
}

/// Precomputed STFT geometry: window, hop, frequency rows, and the tapered
/// phasor table reused by the forward map, the adjoint, and the projector.
#[derive(Debug, Clone)]
pub struct StftPlan<T> {
    pub window_len: usize,
    pub hop: usize,
    pub num_freqs: usize,
    pub num_samples: usize,
    pub num_windows: usize,
    pub dt: T,
    /// Frequency rows in bin units, uniform over `[0, W/2]`.
    pub freq_bins: Vec<T>,
    window: Vec<T>,
    /// `q[l][k] = w(k) exp(-i 2 pi k omega_l / W)`.
    q: Vec<Vec<Complex<T>>>,
}

impl<T: Scalar> StftPlan<T> {
    pub fn new(
        window_len: usize,
        hop: usize,
        num_freqs: usize,
        num_samples: usize,
        dt: T,
    ) -> Result<Self> {
        if window_len < 2 {
            return Err(Error::invalid("window_len", "need at least two taps"));
        }
        if hop == 0 || hop > window_len {
            return Err(Error::invalid("hop", "hop must be in 1..=window_len"));
        }
        if num_freqs == 0 {
            return Err(Error::invalid("num_freqs", "need at least one frequency row"));
        }
        if num_samples == 0 {
            return Err(Error::invalid("num_samples", "need at least one sample"));
        }
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::invalid("dt", "sample spacing must be positive"));
        }
        let nyquist_bin = T::of(window_len as f64) / T::of(2.0);
        let freq_bins: Vec<T> = if num_freqs == 1 {
            vec![T::zero()]
        } else {
            let step = nyquist_bin / T::of((num_freqs - 1) as f64);
            (0..num_freqs).map(|l| step * T::of(l as f64)).collect()
        };
        let window: Vec<T> = hann(window_len);
        let two_pi_over_w = T::of(2.0) * T::PI() / T::of(window_len as f64);
        let q = freq_bins
            .iter()
            .map(|&omega| {
                window
                    .iter()
                    .enumerate()
                    .map(|(k, &wk)| {
                        let theta = two_pi_over_w * T::of(k as f64) * omega;
                        Complex::new(wk * theta.cos(), -(wk * theta.sin()))
                    })
                    .collect()
            })
            .collect();
        let num_windows = num_samples.saturating_sub(window_len).div_ceil(hop) + 1;
        Ok(Self {
            window_len,
            hop,
            num_freqs,
            num_samples,
            num_windows,
            dt,
            freq_bins,
            window,
            q,
        })
    }

    pub fn window(&self) -> &[T] {
        &self.window
    }

    /// Physical frequency of row `l` in Hz: `omega_l / (W dt)`.
    pub fn freq_hz(&self, l: usize) -> T {
        self.freq_bins[l] / (T::of(self.window_len as f64) * self.dt)
    }

    /// Dense complex analysis matrix (`L * M` rows, one per `(l, m)` pair with
    /// `l` major), mostly useful for small oracles.
    pub fn materialize(&self) -> Array2<Complex<T>> {
        let mut f = Array2::zeros((self.num_freqs * self.num_windows, self.num_samples));
        for l in 0..self.num_freqs {
            for m in 0..self.num_windows {
                let row = l * self.num_windows + m;
                let off = m * self.hop;
                for k in 0..self.window_len {
                    if off + k < self.num_samples {
                        f[[row, off + k]] = self.q[l][k];
                    }
                }
            }
        }
        f
    }
}

/// Forward STFT: `L x M` complex coefficients.
pub fn stft<T: Scalar>(plan: &StftPlan<T>, samples: &[T]) -> Result<Array2<Complex<T>>> {
    if samples.len() != plan.num_samples {
        return Err(Error::ShapeMismatch(format!(
            "signal has {} samples, plan expects {}",
            samples.len(),
            plan.num_samples
        )));
    }
    let mut z = Array2::zeros((plan.num_freqs, plan.num_windows));
    for l in 0..plan.num_freqs {
        let q = &plan.q[l];
        for m in 0..plan.num_windows {
            let off = m * plan.hop;
            let take = plan.window_len.min(plan.num_samples - off.min(plan.num_samples));
            let mut acc = Complex::new(T::zero(), T::zero());
            for (k, &s) in samples[off..off + take].iter().enumerate() {
                acc += q[k] * s;
            }
            z[[l, m]] = acc;
        }
    }
    Ok(z)
}

/// Adjoint of [`stft`] under the real pairing
/// `J = sum Re(conj(z) * cot)`: returns `dJ/ds`.
pub fn stft_adjoint<T: Scalar>(
    plan: &StftPlan<T>,
    cotangent: &Array2<Complex<T>>,
) -> Result<Vec<T>> {
    if cotangent.dim() != (plan.num_freqs, plan.num_windows) {
        return Err(Error::ShapeMismatch(format!(
            "cotangent is {:?}, plan expects ({}, {})",
            cotangent.dim(),
            plan.num_freqs,
            plan.num_windows
        )));
    }
    let mut grad = vec![T::zero(); plan.num_samples];
    for l in 0..plan.num_freqs {
        let q = &plan.q[l];
        for m in 0..plan.num_windows {
            let cot = cotangent[[l, m]];
            if cot.re == T::zero() && cot.im == T::zero() {
                continue;
            }
            let off = m * plan.hop;
            let take = plan.window_len.min(plan.num_samples - off.min(plan.num_samples));
            for k in 0..take {
                // Re(conj(q) * cot)
                grad[off + k] += q[k].re * cot.re + q[k].im * cot.im;
            }
        }
    }
    Ok(grad)
}

/// Power in dB with a hard floor: `10 log10(max(|z|^2, 10^(floor/10)))`.
pub fn power_db<T: Scalar>(z: &Array2<Complex<T>>, floor_db: T) -> Array2<T> {
    let floor_pow = T::of(10.0).powf(floor_db / T::of(10.0));
    let ten = T::of(10.0);
    z.map(|v| {
        let p = v.norm_sqr();
        if p > floor_pow {
            ten * p.log10()
        } else {
            floor_db
        }
    })
}

/// VJP of [`power_db`]: maps an upstream gradient on the dB image to a complex
/// cotangent on `z`. Entries at or below the floor are dead and get zero.
pub fn power_db_vjp<T: Scalar>(
    z: &Array2<Complex<T>>,
    upstream: &Array2<T>,
    floor_db: T,
) -> Result<Array2<Complex<T>>> {
    if z.dim() != upstream.dim() {
        return Err(Error::ShapeMismatch(format!(
            "power grid {:?} vs upstream {:?}",
            z.dim(),
            upstream.dim()
        )));
    }
    let floor_pow = T::of(10.0).powf(floor_db / T::of(10.0));
    let scale = T::of(20.0) / T::of(10.0f64.ln());
    let mut cot = Array2::zeros(z.dim());
    for ((i, j), v) in z.indexed_iter() {
        let p = v.norm_sqr();
        if p > floor_pow {
            let coeff = upstream[[i, j]] * scale / p;
            cot[[i, j]] = Complex::new(coeff * v.re, coeff * v.im);
        }
    }
    Ok(cot)
}

/// dB spectrogram of a trace: `power_db(stft(s))`.
pub fn spectrogram_db<T: Scalar>(
    plan: &StftPlan<T>,
    samples: &[T],
    floor_db: T,
) -> Result<Array2<T>> {
    Ok(power_db(&stft(plan, samples)?, floor_db))
}

/// VJP of the spectrogram pipeline at coefficients `z` (which may include an
/// additive offset): pulls an upstream dB gradient back to the time samples.
pub fn spectrogram_vjp<T: Scalar>(
    plan: &StftPlan<T>,
    z: &Array2<Complex<T>>,
    upstream: &Array2<T>,
    floor_db: T,
) -> Result<Vec<T>> {
    stft_adjoint(plan, &power_db_vjp(z, upstream, floor_db)?)
}

/// A set of disallowed spectrogram rows (frequencies the interference must
/// avoid exciting).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BandSelector {
    disallowed: Vec<usize>,
}

impl BandSelector {
    /// Marks the given rows as disallowed. Rows are deduplicated and sorted.
    pub fn from_rows(num_freqs: usize, rows: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut disallowed: Vec<usize> = rows.into_iter().collect();
        disallowed.sort_unstable();
        disallowed.dedup();
        if disallowed.iter().any(|&r| r >= num_freqs) {
            return Err(Error::invalid("rows", "selector row out of range"));
        }
        Ok(Self { disallowed })
    }

    /// Disallows every row whose physical frequency lies outside
    /// `[low_hz, high_hz]`.
    pub fn from_allowed_hz<T: Scalar>(plan: &StftPlan<T>, low_hz: T, high_hz: T) -> Result<Self> {
        if !(low_hz <= high_hz) {
            return Err(Error::invalid("band", "low edge above high edge"));
        }
        let rows = (0..plan.num_freqs)
            .filter(|&l| {
                let f = plan.freq_hz(l);
                f < low_hz || f > high_hz
            })
            .collect::<Vec<_>>();
        Self::from_rows(plan.num_freqs, rows)
    }

    pub fn disallowed_rows(&self) -> &[usize] {
        &self.disallowed
    }

    pub fn is_empty(&self) -> bool {
        self.disallowed.is_empty()
    }

    pub fn num_disallowed(&self) -> usize {
        self.disallowed.len()
    }
}

/// Euclidean norm of the disallowed STFT rows applied to a time signal:
/// `|| F_sel f ||_2`. Zero (to roundoff) exactly when `f` is feasible.
pub fn selector_residual<T: Scalar>(
    plan: &StftPlan<T>,
    selector: &BandSelector,
    samples: &[T],
) -> Result<T> {
    let z = stft(plan, samples)?;
    let mut acc = T::zero();
    for &l in selector.disallowed_rows() {
        for m in 0..plan.num_windows {
            acc += z[[l, m]].norm_sqr();
        }
    }
    Ok(acc.sqrt())
}

/// Orthonormal basis `N` of the null space of the disallowed rows; the
/// feasible projector is `P = N N^T`.
#[derive(Debug, Clone)]
pub struct NullspaceProjector<T> {
    /// `num_samples x rank` orthonormal basis.
    basis: Array2<T>,
}

impl<T: Scalar> NullspaceProjector<T> {
    pub fn num_samples(&self) -> usize {
        self.basis.nrows()
    }

    /// Dimension of the feasible subspace.
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &Array2<T> {
        &self.basis
    }

    /// Reduced coordinates `zeta = N^T f`.
    pub fn reduce(&self, f: &[T]) -> Result<Vec<T>> {
        if f.len() != self.num_samples() {
            return Err(Error::ShapeMismatch(format!(
                "vector has length {}, projector expects {}",
                f.len(),
                self.num_samples()
            )));
        }
        let fv = Array1::from_vec(f.to_vec());
        Ok(self.basis.t().dot(&fv).to_vec())
    }

    /// Expands reduced coordinates back: `f = N zeta`.
    pub fn expand(&self, zeta: &[T]) -> Result<Vec<T>> {
        if zeta.len() != self.rank() {
            return Err(Error::ShapeMismatch(format!(
                "coordinates have length {}, rank is {}",
                zeta.len(),
                self.rank()
            )));
        }
        let zv = Array1::from_vec(zeta.to_vec());
        Ok(self.basis.dot(&zv).to_vec())
    }

    /// Orthogonal projection `P f = N (N^T f)`.
    pub fn project(&self, f: &[T]) -> Result<Vec<T>> {
        let zeta = self.reduce(f)?;
        self.expand(&zeta)
    }
}

/// Builds the feasible-subspace projector for a band selector.
///
/// The disallowed STFT rows are replicated across every window and stacked as
/// real equations (real and imaginary parts separately). The row space comes
/// from an eigendecomposition of the smaller Gram matrix; its orthogonal
/// complement, computed by Householder reflections, is the feasible basis.
/// Singular values below `tol` times the largest count as zero.
pub fn build_projector<T: Scalar>(
    plan: &StftPlan<T>,
    selector: &BandSelector,
    tol: T,
) -> Result<NullspaceProjector<T>> {
    let s = plan.num_samples;
    if selector.is_empty() {
        return Ok(NullspaceProjector {
            basis: Array2::eye(s),
        });
    }
    let p = selector.num_disallowed();
    let rows = 2 * p * plan.num_windows;
    let mut a = Array2::<T>::zeros((rows, s));
    for m in 0..plan.num_windows {
        let off = m * plan.hop;
        let take = plan.window_len.min(s - off.min(s));
        for (si, &l) in selector.disallowed_rows().iter().enumerate() {
            let base = 2 * (m * p + si);
            for k in 0..take {
                a[[base, off + k]] = plan.q[l][k].re;
                a[[base + 1, off + k]] = plan.q[l][k].im;
            }
        }
    }
    let row_space = if rows <= s {
        // Gram of the rows: A A^T, eigenvectors U give left singular vectors.
        let gram = a.dot(&a.t());
        let (lam, u) = jacobi_eigh(&gram)?;
        let sigma: Vec<T> = lam.iter().map(|&v| v.max(T::zero()).sqrt()).collect();
        let sigma_max = sigma.last().copied().unwrap_or(T::zero());
        if sigma_max == T::zero() {
            return Ok(NullspaceProjector {
                basis: Array2::eye(s),
            });
        }
        let keep: Vec<usize> = (0..rows)
            .filter(|&i| sigma[i] > tol * sigma_max)
            .collect();
        let mut v = Array2::<T>::zeros((s, keep.len()));
        let at = a.t();
        for (col, &i) in keep.iter().enumerate() {
            let ui = u.column(i);
            let vi = at.dot(&ui);
            let inv = T::one() / sigma[i];
            for r in 0..s {
                v[[r, col]] = vi[r] * inv;
            }
        }
        v
    } else {
        // Gram of the columns: A^T A; null directions are its small-eigenvalue
        // eigenvectors, so the feasible basis falls out directly.
        let gram = a.t().dot(&a);
        let (lam, u) = jacobi_eigh(&gram)?;
        let sigma: Vec<T> = lam.iter().map(|&v| v.max(T::zero()).sqrt()).collect();
        let sigma_max = sigma.last().copied().unwrap_or(T::zero());
        if sigma_max == T::zero() {
            return Ok(NullspaceProjector {
                basis: Array2::eye(s),
            });
        }
        let keep: Vec<usize> = (0..s).filter(|&i| sigma[i] <= tol * sigma_max).collect();
        if keep.is_empty() {
            return Err(Error::EmptyNullSpace);
        }
        let mut n = Array2::<T>::zeros((s, keep.len()));
        for (col, &i) in keep.iter().enumerate() {
            for r in 0..s {
                n[[r, col]] = u[[r, i]];
            }
        }
        return Ok(NullspaceProjector { basis: n });
    };
    if row_space.ncols() >= s {
        return Err(Error::EmptyNullSpace);
    }
    let basis = orthonormal_complement(&row_space)?;
    if basis.ncols() == 0 {
        return Err(Error::EmptyNullSpace);
    }
    Ok(NullspaceProjector { basis })
}

const PROJECTOR_MAGIC: &[u8; 5] = b"WPRJ1";

impl<T: Scalar> NullspaceProjector<T> {
    /// `WPRJ1` binary: magic, sample count (u64 LE), rank (u64 LE), config
    /// hash (u64 LE), then the basis column-major as f64 LE.
    pub fn write_to<W: Write>(&self, mut w: W, config_hash: u64) -> Result<()> {
        w.write_all(PROJECTOR_MAGIC)?;
        w.write_all(&(self.num_samples() as u64).to_le_bytes())?;
        w.write_all(&(self.rank() as u64).to_le_bytes())?;
        w.write_all(&config_hash.to_le_bytes())?;
        for col in self.basis.columns() {
            for v in col {
                w.write_all(&v.to_f64_lossy().to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>, config_hash: u64) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path)?;
        self.write_to(BufWriter::new(f), config_hash)
    }

    pub fn read_from<R: Read>(mut r: R, path: &Path) -> Result<(Self, u64)> {
        let bad = |reason: &str| Error::format(path, reason);
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != PROJECTOR_MAGIC {
            return Err(bad("bad magic, expected WPRJ1"));
        }
        let mut eight = [0u8; 8];
        r.read_exact(&mut eight).map_err(|_| bad("truncated header"))?;
        let samples = u64::from_le_bytes(eight) as usize;
        r.read_exact(&mut eight).map_err(|_| bad("truncated header"))?;
        let rank = u64::from_le_bytes(eight) as usize;
        r.read_exact(&mut eight).map_err(|_| bad("truncated header"))?;
        let hash = u64::from_le_bytes(eight);
        if samples == 0 || rank > samples || samples.saturating_mul(rank) > (1 << 28) {
            return Err(bad("unreasonable projector dimensions"));
        }
        let mut basis = Array2::zeros((samples, rank));
        for c in 0..rank {
            for r_i in 0..samples {
                r.read_exact(&mut eight).map_err(|_| bad("truncated data"))?;
                basis[[r_i, c]] = T::of(f64::from_le_bytes(eight));
            }
        }
        Ok((NullspaceProjector { basis }, hash))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, u64)> {
        let path = path.as_ref();
        let f = std::fs::File::open(path)?;
        Self::read_from(BufReader::new(f), path)
    }
}

/// Writes a dB spectrogram as a binary `P5` PGM image. Columns are windows,
/// rows are frequencies with the highest row at the top, and gray maps
/// `[floor_db, max]` onto `[0, 255]`.
pub fn write_spectrogram_pgm<T: Scalar, W: Write>(
    mut w: W,
    spec: &Array2<T>,
    floor_db: T,
) -> Result<()> {
    let (l, m) = spec.dim();
    if l == 0 || m == 0 {
        return Err(Error::ShapeMismatch("empty spectrogram".into()));
    }
    let max = spec.iter().cloned().fold(floor_db, T::max);
    let range = max - floor_db;
    writeln!(w, "P5\n{m} {l}\n255")?;
    let mut bytes = Vec::with_capacity(l * m);
    for row in (0..l).rev() {
        for col in 0..m {
            let v = if range > T::zero() {
                ((spec[[row, col]] - floor_db) / range * T::of(255.0))
                    .round()
                    .to_f64_lossy()
                    .clamp(0.0, 255.0) as u8
            } else {
                0
            };
            bytes.push(v);
        }
    }
    w.write_all(&bytes)?;
    Ok(())
}

pub fn save_spectrogram_pgm<T: Scalar>(
    path: impl AsRef<Path>,
    spec: &Array2<T>,
    floor_db: T,
) -> Result<()> {
    let f = std::fs::File::create(path.as_ref())?;
    write_spectrogram_pgm(BufWriter::new(f), spec, floor_db)
}

/// Writes a dB spectrogram as `freq_index,window_index,db` CSV rows.
pub fn write_spectrogram_csv<T: Scalar, W: Write>(mut w: W, spec: &Array2<T>) -> Result<()> {
    writeln!(w, "freq_index,window_index,db")?;
    for ((l, m), v) in spec.indexed_iter() {
        writeln!(w, "{l},{m},{v}")?;
    }
    Ok(())
}

pub fn save_spectrogram_csv<T: Scalar>(path: impl AsRef<Path>, spec: &Array2<T>) -> Result<()> {
    let f = std::fs::File::create(path.as_ref())?;
    write_spectrogram_csv(BufWriter::new(f), spec)
}

/// Reads a dB spectrogram written by [`write_spectrogram_csv`]. The grid is
/// inferred from the indices present; every cell must appear exactly once.
pub fn read_spectrogram_csv<T: Scalar, R: std::io::BufRead>(
    r: R,
    path: &Path,
) -> Result<Array2<T>> {
    let bad = |reason: String| Error::format(path, reason);
    let mut triples: Vec<(usize, usize, T)> = Vec::new();
    let (mut max_l, mut max_m) = (0usize, 0usize);
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if i == 0 {
            if line != "freq_index,window_index,db" {
                return Err(bad(format!("unexpected header {line:?}")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let mut cells = line.split(',');
        let mut next = |what: &str| {
            cells
                .next()
                .ok_or_else(|| bad(format!("line {}: missing {what}", i + 1)))
        };
        let l: usize = next("freq index")?
            .parse()
            .map_err(|_| bad(format!("line {}: bad freq index", i + 1)))?;
        let m: usize = next("window index")?
            .parse()
            .map_err(|_| bad(format!("line {}: bad window index", i + 1)))?;
        let v: f64 = next("value")?
            .parse()
            .map_err(|_| bad(format!("line {}: bad value", i + 1)))?;
        if cells.next().is_some() {
            return Err(bad(format!("line {}: too many fields", i + 1)));
        }
        max_l = max_l.max(l);
        max_m = max_m.max(m);
        triples.push((l, m, T::of(v)));
    }
    if triples.is_empty() {
        return Err(bad("no data rows".into()));
    }
    let (rows, cols) = (max_l + 1, max_m + 1);
    if triples.len() != rows * cols {
        return Err(bad(format!(
            "{} cells for a {rows}x{cols} grid",
            triples.len()
        )));
    }
    let mut seen = vec![false; rows * cols];
    let mut spec = Array2::zeros((rows, cols));
    for (l, m, v) in triples {
        if std::mem::replace(&mut seen[l * cols + m], true) {
            return Err(bad(format!("duplicate cell ({l}, {m})")));
        }
        spec[[l, m]] = v;
    }
    Ok(spec)
}

pub fn load_spectrogram_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<Array2<T>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path)?;
    read_spectrogram_csv(BufReader::new(f), path)
}
