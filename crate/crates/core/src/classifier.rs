//! Compact convolutional classifier over dB spectrograms.
//!
//! Architecture, applied to a normalized `L x M` image:
//!
//! 1. conv 3x3, 8 filters, zero-padded "same", leaky ReLU (0.01),
//! 2. 2x2 max pool, stride 2, floor crop,
//! 3. conv 3x3, 16 filters, leaky ReLU,
//! 4. feature head: global average pool, or a time-axis average that keeps
//!    frequency rows,
//! 5. dense layer to one logit, sigmoid probability.
//!
//! The probability is clamped away from 0 and 1 before the cross-entropy so
//! losses stay finite, while the logit gradient uses the exact stable form
//! `sigma(z) - y` (computed as `-sigma(-z)` for positive labels). That keeps
//! the gradient finite and nonzero even deep in saturation, which the attack
//! relies on. Everything is written directly against ndarray — forward and
//! backward passes are exact, no autodiff involved.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Array3, Array4};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seeds::derive_seed;

const C1: usize = 8;
const C2: usize = 16;
const KS: usize = 3;
const LEAK: f64 = 0.01;

/// Labeled training/evaluation example.
#[derive(Debug, Clone)]
pub struct Example<T> {
    pub spec: Array2<T>,
    /// `true` marks the malicious (low-frequency) class.
    pub label: bool,
}

/// Feature head between the last convolution and the dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Mean over both spatial axes: one feature per channel.
    GlobalAverage,
    /// Mean over the time axis only: one feature per channel and frequency row.
    TimeAverage,
}

impl Head {
    pub fn tag(self) -> u8 {
        match self {
            Head::GlobalAverage => 0,
            Head::TimeAverage => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Head::GlobalAverage),
            1 => Some(Head::TimeAverage),
            _ => None,
        }
    }
}

/// All trainable parameters plus the input normalization constants.
#[derive(Debug, Clone)]
pub struct ModelParams<T> {
    pub head: Head,
    pub input_rows: usize,
    pub input_cols: usize,
    pub norm_shift: T,
    pub norm_scale: T,
    pub conv1_w: Array4<T>,
    pub conv1_b: Array1<T>,
    pub conv2_w: Array4<T>,
    pub conv2_b: Array1<T>,
    pub dense_w: Array1<T>,
    pub dense_b: T,
}

/// Parameter-shaped gradient bundle.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub conv1_w: Array4<T>,
    pub conv1_b: Array1<T>,
    pub conv2_w: Array4<T>,
    pub conv2_b: Array1<T>,
    pub dense_w: Array1<T>,
    pub dense_b: T,
}

impl<T: Scalar> Gradients<T> {
    fn zeros_like(p: &ModelParams<T>) -> Self {
        Self {
            conv1_w: Array4::zeros(p.conv1_w.raw_dim()),
            conv1_b: Array1::zeros(p.conv1_b.raw_dim()),
            conv2_w: Array4::zeros(p.conv2_w.raw_dim()),
            conv2_b: Array1::zeros(p.conv2_b.raw_dim()),
            dense_w: Array1::zeros(p.dense_w.raw_dim()),
            dense_b: T::zero(),
        }
    }

    fn accumulate(&mut self, other: &Self) {
        self.conv1_w += &other.conv1_w;
        self.conv1_b += &other.conv1_b;
        self.conv2_w += &other.conv2_w;
        self.conv2_b += &other.conv2_b;
        self.dense_w += &other.dense_w;
        self.dense_b += other.dense_b;
    }

    fn scale(&mut self, s: T) {
        self.conv1_w.mapv_inplace(|v| v * s);
        self.conv1_b.mapv_inplace(|v| v * s);
        self.conv2_w.mapv_inplace(|v| v * s);
        self.conv2_b.mapv_inplace(|v| v * s);
        self.dense_w.mapv_inplace(|v| v * s);
        self.dense_b *= s;
    }
}

/// Clamp bound keeping probabilities strictly inside (0, 1) at any precision.
fn prob_eps<T: Scalar>() -> T {
    T::of(1e-12).max(T::of(32.0) * T::epsilon())
}

fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Binary cross entropy with the clamped probability.
pub fn bce_loss<T: Scalar>(prob: T, label: bool) -> T {
    let eps = prob_eps::<T>();
    let p = prob.max(eps).min(T::one() - eps);
    if label {
        -p.ln()
    } else {
        -(T::one() - p).ln()
    }
}

/// Classifier output for one example.
#[derive(Debug, Clone, Copy)]
pub struct Prediction<T> {
    pub logit: T,
    /// Clamped probability of the malicious class.
    pub prob: T,
}

impl<T: Scalar> Prediction<T> {
    /// Malicious iff the probability clears one half; exact ties go benign.
    pub fn is_malicious(&self) -> bool {
        self.prob > T::of(0.5)
    }
}

struct ForwardCache<T> {
    x_norm: Array3<T>,
    z1: Array3<T>,
    a1: Array3<T>,
    pooled: Array3<T>,
    argmax: Array3<usize>,
    z2: Array3<T>,
    a2: Array3<T>,
    features: Array1<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// Uniform Kaiming-style init, `U(+-sqrt(3 / fan_in))`, zero biases.
    pub fn init(input_rows: usize, input_cols: usize, head: Head, seed: u64) -> Result<Self> {
        if input_rows < 4 || input_cols < 4 {
            return Err(Error::invalid("input", "spectrogram smaller than 4x4"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let uniform = |fan_in: usize| {
            let bound = (T::of(3.0) / T::of(fan_in as f64)).sqrt();
            move |rng: &mut ChaCha8Rng| {
                let u = T::standard_uniform(rng);
                (u + u - T::one()) * bound
            }
        };
        let rows2 = input_rows / 2;
        let dense_len = match head {
            Head::GlobalAverage => C2,
            Head::TimeAverage => C2 * rows2,
        };
        let draw1 = uniform(KS * KS);
        let conv1_w = Array4::from_shape_simple_fn((C1, 1, KS, KS), || draw1(&mut rng));
        let draw2 = uniform(C1 * KS * KS);
        let conv2_w = Array4::from_shape_simple_fn((C2, C1, KS, KS), || draw2(&mut rng));
        let draw3 = uniform(dense_len);
        let dense_w = Array1::from_shape_simple_fn(dense_len, || draw3(&mut rng));
        Ok(Self {
            head,
            input_rows,
            input_cols,
            norm_shift: T::zero(),
            norm_scale: T::one(),
            conv1_w,
            conv1_b: Array1::zeros(C1),
            conv2_w,
            conv2_b: Array1::zeros(C2),
            dense_w,
            dense_b: T::zero(),
        })
    }

    fn check_input(&self, x: &Array2<T>) -> Result<()> {
        if x.dim() != (self.input_rows, self.input_cols) {
            return Err(Error::ShapeMismatch(format!(
                "input is {:?}, model expects ({}, {})",
                x.dim(),
                self.input_rows,
                self.input_cols
            )));
        }
        Ok(())
    }

    fn forward_cached(&self, x: &Array2<T>) -> Result<(Prediction<T>, ForwardCache<T>)> {
        self.check_input(x)?;
        let inv_scale = T::one() / self.norm_scale;
        let mut x_norm = Array3::zeros((1, self.input_rows, self.input_cols));
        for ((i, j), v) in x.indexed_iter() {
            x_norm[[0, i, j]] = (*v - self.norm_shift) * inv_scale;
        }
        let z1 = conv_same(&x_norm, &self.conv1_w, &self.conv1_b);
        let a1 = z1.map(|&v| leaky(v));
        let (pooled, argmax) = max_pool(&a1);
        let z2 = conv_same(&pooled, &self.conv2_w, &self.conv2_b);
        let a2 = z2.map(|&v| leaky(v));
        let features = self.head_features(&a2);
        if features.len() != self.dense_w.len() {
            return Err(Error::ShapeMismatch(format!(
                "head produced {} features, dense layer expects {}",
                features.len(),
                self.dense_w.len()
            )));
        }
        let logit = self.dense_w.dot(&features) + self.dense_b;
        let eps = prob_eps::<T>();
        let prob = sigmoid(logit).max(eps).min(T::one() - eps);
        Ok((
            Prediction { logit, prob },
            ForwardCache {
                x_norm,
                z1,
                a1,
                pooled,
                argmax,
                z2,
                a2,
                features,
            },
        ))
    }

    /// Probability and logit for one spectrogram.
    pub fn forward(&self, x: &Array2<T>) -> Result<Prediction<T>> {
        Ok(self.forward_cached(x)?.0)
    }

    fn head_features(&self, a2: &Array3<T>) -> Array1<T> {
        let (c, rows, cols) = a2.dim();
        match self.head {
            Head::GlobalAverage => {
                let denom = T::of((rows * cols) as f64);
                Array1::from_iter((0..c).map(|ch| {
                    let mut acc = T::zero();
                    for i in 0..rows {
                        for j in 0..cols {
                            acc += a2[[ch, i, j]];
                        }
                    }
                    acc / denom
                }))
            }
            Head::TimeAverage => {
                let denom = T::of(cols as f64);
                let mut out = Array1::zeros(c * rows);
                for ch in 0..c {
                    for i in 0..rows {
                        let mut acc = T::zero();
                        for j in 0..cols {
                            acc += a2[[ch, i, j]];
                        }
                        out[ch * rows + i] = acc / denom;
                    }
                }
                out
            }
        }
    }

    /// Loss, prediction, parameter gradients, and the input gradient for one
    /// labeled example.
    pub fn backward(
        &self,
        x: &Array2<T>,
        label: bool,
    ) -> Result<(T, Prediction<T>, Gradients<T>, Array2<T>)> {
        let (pred, cache) = self.forward_cached(x)?;
        let loss = bce_loss(pred.prob, label);
        // dL/dlogit = sigma(z) - y, in the form that never underflows to zero.
        let dlogit = if label {
            -sigmoid(-pred.logit)
        } else {
            sigmoid(pred.logit)
        };
        let mut grads = Gradients::zeros_like(self);
        grads.dense_b = dlogit;
        for (g, &f) in grads.dense_w.iter_mut().zip(cache.features.iter()) {
            *g = dlogit * f;
        }
        // Back through the head into a2.
        let (c2, rows2, cols2) = cache.a2.dim();
        let mut da2 = Array3::zeros((c2, rows2, cols2));
        match self.head {
            Head::GlobalAverage => {
                let denom = T::of((rows2 * cols2) as f64);
                for ch in 0..c2 {
                    let g = dlogit * self.dense_w[ch] / denom;
                    for i in 0..rows2 {
                        for j in 0..cols2 {
                            da2[[ch, i, j]] = g;
                        }
                    }
                }
            }
            Head::TimeAverage => {
                let denom = T::of(cols2 as f64);
                for ch in 0..c2 {
                    for i in 0..rows2 {
                        let g = dlogit * self.dense_w[ch * rows2 + i] / denom;
                        for j in 0..cols2 {
                            da2[[ch, i, j]] = g;
                        }
                    }
                }
            }
        }
        let dz2 = leaky_backward(&cache.z2, &da2);
        let (dpooled, dw2, db2) = conv_same_backward(&cache.pooled, &self.conv2_w, &dz2);
        grads.conv2_w = dw2;
        grads.conv2_b = db2;
        let da1 = max_pool_backward(cache.a1.dim(), &cache.argmax, &dpooled);
        let dz1 = leaky_backward(&cache.z1, &da1);
        let (dx_norm, dw1, db1) = conv_same_backward(&cache.x_norm, &self.conv1_w, &dz1);
        grads.conv1_w = dw1;
        grads.conv1_b = db1;
        let inv_scale = T::one() / self.norm_scale;
        let mut input_grad = Array2::zeros((self.input_rows, self.input_cols));
        for ((i, j), g) in input_grad.indexed_iter_mut() {
            *g = dx_norm[[0, i, j]] * inv_scale;
        }
        Ok((loss, pred, grads, input_grad))
    }
}

fn leaky<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        T::of(LEAK) * v
    }
}

fn leaky_backward<T: Scalar>(z: &Array3<T>, upstream: &Array3<T>) -> Array3<T> {
    let mut out = upstream.clone();
    for (o, &zi) in out.iter_mut().zip(z.iter()) {
        if zi <= T::zero() {
            *o *= T::of(LEAK);
        }
    }
    out
}

/// Zero-padded "same" 3x3 convolution over channel-major images.
fn conv_same<T: Scalar>(x: &Array3<T>, w: &Array4<T>, b: &Array1<T>) -> Array3<T> {
    let (cin, rows, cols) = x.dim();
    let (cout, cin_w, kh, kw) = w.dim();
    debug_assert_eq!(cin, cin_w);
    let pad_i = kh / 2;
    let pad_j = kw / 2;
    let mut out = Array3::zeros((cout, rows, cols));
    for o in 0..cout {
        let bias = b[o];
        for i in 0..rows {
            for j in 0..cols {
                let mut acc = bias;
                for c in 0..cin {
                    for di in 0..kh {
                        let ii = i + di;
                        if ii < pad_i || ii - pad_i >= rows {
                            continue;
                        }
                        let ii = ii - pad_i;
                        for dj in 0..kw {
                            let jj = j + dj;
                            if jj < pad_j || jj - pad_j >= cols {
                                continue;
                            }
                            acc += w[[o, c, di, dj]] * x[[c, ii, jj - pad_j]];
                        }
                    }
                }
                out[[o, i, j]] = acc;
            }
        }
    }
    out
}

/// Gradients of [`conv_same`]: input, weight, and bias cotangents.
fn conv_same_backward<T: Scalar>(
    x: &Array3<T>,
    w: &Array4<T>,
    delta: &Array3<T>,
) -> (Array3<T>, Array4<T>, Array1<T>) {
    let (cin, rows, cols) = x.dim();
    let (cout, _, kh, kw) = w.dim();
    let pad_i = kh / 2;
    let pad_j = kw / 2;
    let mut dx = Array3::zeros((cin, rows, cols));
    let mut dw = Array4::zeros(w.raw_dim());
    let mut db = Array1::zeros(cout);
    for o in 0..cout {
        for i in 0..rows {
            for j in 0..cols {
                let d = delta[[o, i, j]];
                if d == T::zero() {
                    continue;
                }
                db[o] += d;
                for c in 0..cin {
                    for di in 0..kh {
                        let ii = i + di;
                        if ii < pad_i || ii - pad_i >= rows {
                            continue;
                        }
                        let ii = ii - pad_i;
                        for dj in 0..kw {
                            let jj = j + dj;
                            if jj < pad_j || jj - pad_j >= cols {
                                continue;
                            }
                            let jj = jj - pad_j;
                            dw[[o, c, di, dj]] += d * x[[c, ii, jj]];
                            dx[[c, ii, jj]] += d * w[[o, c, di, dj]];
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

/// 2x2 max pool with stride 2 and floor cropping; records flat argmax indices
/// (first maximum in scan order wins ties).
fn max_pool<T: Scalar>(x: &Array3<T>) -> (Array3<T>, Array3<usize>) {
    let (c, rows, cols) = x.dim();
    let (orows, ocols) = (rows / 2, cols / 2);
    let mut out = Array3::zeros((c, orows, ocols));
    let mut arg = Array3::zeros((c, orows, ocols));
    for ch in 0..c {
        for i in 0..orows {
            for j in 0..ocols {
                let mut best = x[[ch, 2 * i, 2 * j]];
                let mut best_idx = 2 * i * cols + 2 * j;
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let v = x[[ch, 2 * i + di, 2 * j + dj]];
                    if v > best {
                        best = v;
                        best_idx = (2 * i + di) * cols + 2 * j + dj;
                    }
                }
                out[[ch, i, j]] = best;
                arg[[ch, i, j]] = best_idx;
            }
        }
    }
    (out, arg)
}

fn max_pool_backward<T: Scalar>(
    input_dim: (usize, usize, usize),
    argmax: &Array3<usize>,
    upstream: &Array3<T>,
) -> Array3<T> {
    let (_, _, cols) = input_dim;
    let mut dx = Array3::zeros(input_dim);
    for ((ch, i, j), &idx) in argmax.indexed_iter() {
        dx[[ch, idx / cols, idx % cols]] += upstream[[ch, i, j]];
    }
    dx
}

/// One line of the training log.
#[derive(Debug, Clone, Copy)]
pub struct EpochLog<T> {
    pub epoch: usize,
    pub train_loss: T,
    pub test_loss: T,
    pub test_accuracy: T,
}

/// Training hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct TrainConfig<T> {
    pub head: Head,
    pub learning_rate: T,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without a new best test loss.
    pub patience: usize,
}

/// Aggregate evaluation over a labeled set.
#[derive(Debug, Clone, Copy)]
pub struct EvalReport<T> {
    pub count: usize,
    pub correct: usize,
    pub accuracy: T,
    pub mean_loss: T,
    pub true_pos: usize,
    pub true_neg: usize,
    pub false_pos: usize,
    pub false_neg: usize,
}

pub fn evaluate<T: Scalar>(params: &ModelParams<T>, set: &[Example<T>]) -> Result<EvalReport<T>> {
    if set.is_empty() {
        return Err(Error::DegenerateDataset("evaluation set is empty".into()));
    }
    let mut report = EvalReport {
        count: set.len(),
        correct: 0,
        accuracy: T::zero(),
        mean_loss: T::zero(),
        true_pos: 0,
        true_neg: 0,
        false_pos: 0,
        false_neg: 0,
    };
    let mut loss_acc = T::zero();
    for ex in set {
        let pred = params.forward(&ex.spec)?;
        loss_acc += bce_loss(pred.prob, ex.label);
        match (ex.label, pred.is_malicious()) {
            (true, true) => {
                report.true_pos += 1;
                report.correct += 1;
            }
            (false, false) => {
                report.true_neg += 1;
                report.correct += 1;
            }
            (true, false) => report.false_neg += 1,
            (false, true) => report.false_pos += 1,
        }
    }
    report.mean_loss = loss_acc / T::of(set.len() as f64);
    report.accuracy = T::of(report.correct as f64) / T::of(set.len() as f64);
    Ok(report)
}

fn check_two_classes<T>(set: &[Example<T>], name: &str) -> Result<()> {
    let pos = set.iter().filter(|e| e.label).count();
    if pos == 0 || pos == set.len() {
        return Err(Error::DegenerateDataset(format!(
            "{name} set has a single class ({pos} of {} positive)",
            set.len()
        )));
    }
    Ok(())
}

/// Normalization constants (mean and standard deviation over all pixels of
/// the set, with a floor on the deviation).
pub fn normalization_stats<T: Scalar>(set: &[Example<T>]) -> (T, T) {
    let mut count = 0usize;
    let mut mean = T::zero();
    for ex in set {
        for &v in ex.spec.iter() {
            mean += v;
            count += 1;
        }
    }
    let n = T::of(count.max(1) as f64);
    mean /= n;
    let mut var = T::zero();
    for ex in set {
        for &v in ex.spec.iter() {
            let d = v - mean;
            var += d * d;
        }
    }
    let std = (var / n).sqrt().max(T::of(1e-6));
    (mean, std)
}

/// Minibatch SGD with per-epoch reshuffling and early stopping on test loss.
/// Returns the best-on-test parameters and the per-epoch log.
pub fn train<T: Scalar>(
    train_set: &[Example<T>],
    test_set: &[Example<T>],
    cfg: &TrainConfig<T>,
    seed: u64,
) -> Result<(ModelParams<T>, Vec<EpochLog<T>>)> {
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::DegenerateDataset("empty train or test set".into()));
    }
    check_two_classes(train_set, "train")?;
    check_two_classes(test_set, "test")?;
    if cfg.batch_size == 0 || cfg.max_epochs == 0 {
        return Err(Error::invalid("train", "batch size and epochs must be positive"));
    }
    let (rows, cols) = train_set[0].spec.dim();
    let mut params = ModelParams::init(rows, cols, cfg.head, derive_seed(seed, &[0]))?;
    let (shift, scale) = normalization_stats(train_set);
    params.norm_shift = shift;
    params.norm_scale = scale;

    let mut best = params.clone();
    let mut best_loss = T::infinity();
    let mut since_best = 0usize;
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..cfg.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1, epoch as u64]));
        order.shuffle(&mut rng);
        let mut train_loss = T::zero();
        for chunk in order.chunks(cfg.batch_size) {
            let mut batch = Gradients::zeros_like(&params);
            for &idx in chunk {
                let ex = &train_set[idx];
                let (loss, _, grads, _) = params.backward(&ex.spec, ex.label)?;
                train_loss += loss;
                batch.accumulate(&grads);
            }
            batch.scale(cfg.learning_rate / T::of(chunk.len() as f64));
            params.conv1_w -= &batch.conv1_w;
            params.conv1_b -= &batch.conv1_b;
            params.conv2_w -= &batch.conv2_w;
            params.conv2_b -= &batch.conv2_b;
            params.dense_w -= &batch.dense_w;
            params.dense_b -= batch.dense_b;
        }
        train_loss /= T::of(train_set.len() as f64);
        let report = evaluate(&params, test_set)?;
        log.push(EpochLog {
            epoch,
            train_loss,
            test_loss: report.mean_loss,
            test_accuracy: report.accuracy,
        });
        if report.mean_loss < best_loss {
            best_loss = report.mean_loss;
            best = params.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > cfg.patience {
                break;
            }
        }
    }
    Ok((best, log))
}

const NET_MAGIC: &[u8; 5] = b"WNET1";

impl<T: Scalar> ModelParams<T> {
    /// `WNET1` binary: magic, head tag (u8), rows/cols (u64 LE), config hash
    /// (u64 LE), normalization shift and scale (f64 LE), then each tensor as
    /// a dimension count, the dimensions, and f64 LE data in standard order.
    pub fn write_to<W: Write>(&self, mut w: W, config_hash: u64) -> Result<()> {
        w.write_all(NET_MAGIC)?;
        w.write_all(&[self.head.tag()])?;
        w.write_all(&(self.input_rows as u64).to_le_bytes())?;
        w.write_all(&(self.input_cols as u64).to_le_bytes())?;
        w.write_all(&config_hash.to_le_bytes())?;
        w.write_all(&self.norm_shift.to_f64_lossy().to_le_bytes())?;
        w.write_all(&self.norm_scale.to_f64_lossy().to_le_bytes())?;
        let write_tensor = |w: &mut W, dims: &[usize], data: &mut dyn Iterator<Item = T>| {
            w.write_all(&[dims.len() as u8])?;
            for &d in dims {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in data {
                w.write_all(&v.to_f64_lossy().to_le_bytes())?;
            }
            std::io::Result::Ok(())
        };
        let d1 = self.conv1_w.dim();
        write_tensor(
            &mut w,
            &[d1.0, d1.1, d1.2, d1.3],
            &mut self.conv1_w.iter().cloned(),
        )?;
        write_tensor(&mut w, &[self.conv1_b.len()], &mut self.conv1_b.iter().cloned())?;
        let d2 = self.conv2_w.dim();
        write_tensor(
            &mut w,
            &[d2.0, d2.1, d2.2, d2.3],
            &mut self.conv2_w.iter().cloned(),
        )?;
        write_tensor(&mut w, &[self.conv2_b.len()], &mut self.conv2_b.iter().cloned())?;
        write_tensor(&mut w, &[self.dense_w.len()], &mut self.dense_w.iter().cloned())?;
        w.write_all(&self.dense_b.to_f64_lossy().to_le_bytes())?;
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
        if &magic != NET_MAGIC {
            return Err(bad("bad magic, expected WNET1"));
        }
        let mut one = [0u8; 1];
        r.read_exact(&mut one).map_err(|_| bad("truncated header"))?;
        let head = Head::from_tag(one[0]).ok_or_else(|| bad("unknown head tag"))?;
        let mut eight = [0u8; 8];
        let mut read_u64 = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut eight).map_err(|_| bad("truncated header"))?;
            Ok(u64::from_le_bytes(eight))
        };
        let input_rows = read_u64(&mut r)? as usize;
        let input_cols = read_u64(&mut r)? as usize;
        let hash = read_u64(&mut r)?;
        let mut f64buf = [0u8; 8];
        let mut read_f64 = |r: &mut R| -> Result<f64> {
            r.read_exact(&mut f64buf).map_err(|_| bad("truncated data"))?;
            Ok(f64::from_le_bytes(f64buf))
        };
        let norm_shift = T::of(read_f64(&mut r)?);
        let norm_scale = T::of(read_f64(&mut r)?);
        if !(norm_scale.to_f64_lossy() > 0.0) {
            return Err(bad("non-positive normalization scale"));
        }
        let read_tensor = |r: &mut R, want_ndim: usize| -> Result<(Vec<usize>, Vec<T>)> {
            let mut b = [0u8; 1];
            r.read_exact(&mut b).map_err(|_| bad("truncated tensor header"))?;
            if b[0] as usize != want_ndim {
                return Err(bad("unexpected tensor rank"));
            }
            let mut dims = Vec::with_capacity(want_ndim);
            let mut total = 1usize;
            for _ in 0..want_ndim {
                let mut d = [0u8; 8];
                r.read_exact(&mut d).map_err(|_| bad("truncated tensor header"))?;
                let d = u64::from_le_bytes(d) as usize;
                total = total
                    .checked_mul(d)
                    .filter(|&t| t <= (1 << 26))
                    .ok_or_else(|| bad("unreasonable tensor size"))?;
                dims.push(d);
            }
            let mut data = Vec::with_capacity(total);
            let mut v = [0u8; 8];
            for _ in 0..total {
                r.read_exact(&mut v).map_err(|_| bad("truncated tensor data"))?;
                data.push(T::of(f64::from_le_bytes(v)));
            }
            Ok((dims, data))
        };
        let (d1, conv1_w) = read_tensor(&mut r, 4)?;
        let (b1, conv1_b) = read_tensor(&mut r, 1)?;
        let (d2, conv2_w) = read_tensor(&mut r, 4)?;
        let (b2, conv2_b) = read_tensor(&mut r, 1)?;
        let (dw, dense_w) = read_tensor(&mut r, 1)?;
        let dense_b = T::of(read_f64(&mut r)?);
        if d1[0] != b1[0] || d2[0] != b2[0] || d1[0] != d2[1] || d1[1] != 1 {
            return Err(bad("inconsistent layer shapes"));
        }
        let params = ModelParams {
            head,
            input_rows,
            input_cols,
            norm_shift,
            norm_scale,
            conv1_w: Array4::from_shape_vec((d1[0], d1[1], d1[2], d1[3]), conv1_w)
                .map_err(|_| bad("conv1 shape"))?,
            conv1_b: Array1::from_vec(conv1_b),
            conv2_w: Array4::from_shape_vec((d2[0], d2[1], d2[2], d2[3]), conv2_w)
                .map_err(|_| bad("conv2 shape"))?,
            conv2_b: Array1::from_vec(conv2_b),
            dense_w: Array1::from_vec(dense_w),
            dense_b,
        };
        let rows2 = params.input_rows / 2;
        let want = match params.head {
            Head::GlobalAverage => d2[0],
            Head::TimeAverage => d2[0] * rows2,
        };
        if dw[0] != want {
            return Err(bad("dense layer does not match the head"));
        }
        Ok((params, hash))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, u64)> {
        let path = path.as_ref();
        let f = std::fs::File::open(path)?;
        Self::read_from(BufReader::new(f), path)
    }
}
