//! Adversarial interference synthesis.
//!
//! The attacked observation is the dB spectrogram of
//! `s = G_i f + G_s g` plus a fixed STFT-domain noise realization, fed to the
//! trained classifier. The attack maximizes the classifier's cross-entropy
//! against the true label over interferer signals `f` constrained to the
//! feasible subspace (`f = N zeta`), using analytic gradients end to end:
//!
//! ```text
//! dJ/df = G_i^T  *  stft_adjoint( power_db_vjp( classifier input grad ) )
//! ```
//!
//! Every objective and gradient evaluation runs entirely on the precomputed
//! Green kernels — zero sparse solves. A PDE-level adjoint oracle
//! ([`adjoint_gradient_oracle`]) recomputes the same gradient with two time
//! loops over the factored system for cross-checking.

use ndarray::Array2;
use num_complex::Complex;

use crate::classifier::{bce_loss, ModelParams, Prediction};
use crate::error::{Error, Result};
use crate::green::GreenOperator;
use crate::scalar::Scalar;
use crate::spectral::{power_db, spectrogram_vjp, NullspaceProjector, StftPlan};
use crate::wave::{leapfrog_solve, Signal, SourceTerm, StepOperators};

/// One attack instance: operators, model, intruder signal, label, and the
/// frozen noise realization of the observation under attack.
pub struct AttackProblem<'a, T> {
    green_interferer: &'a GreenOperator<T>,
    plan: &'a StftPlan<T>,
    model: &'a ModelParams<T>,
    /// True label of the intruder example.
    pub label: bool,
    noise: Option<Array2<Complex<T>>>,
    floor_db: T,
    clean_trace: Signal<T>,
}

impl<'a, T: Scalar> AttackProblem<'a, T> {
    /// Assembles a problem, precomputing the intruder's clean receiver trace
    /// `G_s g` once.
    pub fn new(
        green_interferer: &'a GreenOperator<T>,
        green_intruder: &GreenOperator<T>,
        intruder_signal: &Signal<T>,
        plan: &'a StftPlan<T>,
        model: &'a ModelParams<T>,
        label: bool,
        noise: Option<Array2<Complex<T>>>,
        floor_db: T,
    ) -> Result<Self> {
        if green_interferer.num_samples() != green_intruder.num_samples()
            || green_interferer.dt != green_intruder.dt
        {
            return Err(Error::ShapeMismatch(
                "interferer and intruder Green operators disagree on the grid".into(),
            ));
        }
        if plan.num_samples != green_interferer.num_samples() {
            return Err(Error::ShapeMismatch(format!(
                "analysis plan expects {} samples, Green operator yields {}",
                plan.num_samples,
                green_interferer.num_samples()
            )));
        }
        if let Some(n) = &noise {
            if n.dim() != (plan.num_freqs, plan.num_windows) {
                return Err(Error::ShapeMismatch("noise grid does not match the plan".into()));
            }
        }
        if model.input_rows != plan.num_freqs || model.input_cols != plan.num_windows {
            return Err(Error::ShapeMismatch(format!(
                "model expects {}x{}, plan produces {}x{}",
                model.input_rows, model.input_cols, plan.num_freqs, plan.num_windows
            )));
        }
        let clean_trace = green_intruder.apply(intruder_signal)?;
        Ok(Self {
            green_interferer,
            plan,
            model,
            label,
            noise,
            floor_db,
            clean_trace,
        })
    }

    pub fn num_samples(&self) -> usize {
        self.clean_trace.len()
    }

    /// The observed receiver trace for interference `f` (before analysis).
    pub fn combined_trace(&self, f: &Signal<T>) -> Result<Signal<T>> {
        let mut s = self.green_interferer.apply(f)?;
        for (a, &b) in s.samples.iter_mut().zip(&self.clean_trace.samples) {
            *a += b;
        }
        Ok(s)
    }

    /// The observed (noise-corrupted) STFT coefficients for a trace.
    fn observed_coeffs(&self, trace: &Signal<T>) -> Result<Array2<Complex<T>>> {
        let mut z = crate::spectral::stft(self.plan, &trace.samples)?;
        if let Some(eta) = &self.noise {
            z += eta;
        }
        Ok(z)
    }

    /// Loss and trace-space gradient `dJ/ds` at a given receiver trace.
    /// Shared by the kernel-space gradient and the PDE-level oracle.
    pub fn loss_and_trace_gradient(
        &self,
        trace: &Signal<T>,
    ) -> Result<(T, Prediction<T>, Vec<T>)> {
        let z = self.observed_coeffs(trace)?;
        let spec_db = power_db(&z, self.floor_db);
        let (loss, pred, _, input_grad) = self.model.backward(&spec_db, self.label)?;
        // Ascent on the loss: upstream is dJ/d(dB image) directly.
        let ds = spectrogram_vjp(self.plan, &z, &input_grad, self.floor_db)?;
        Ok((loss, pred, ds))
    }

    /// Objective value (classifier loss) and prediction, no solves.
    pub fn objective(&self, f: &Signal<T>) -> Result<(T, Prediction<T>)> {
        let trace = self.combined_trace(f)?;
        let z = self.observed_coeffs(&trace)?;
        let spec_db = power_db(&z, self.floor_db);
        let pred = self.model.forward(&spec_db)?;
        Ok((bce_loss(pred.prob, self.label), pred))
    }

    /// Objective, prediction, and full-coordinate gradient `dJ/df`, no solves.
    pub fn gradient(&self, f: &Signal<T>) -> Result<(T, Prediction<T>, Vec<T>)> {
        let trace = self.combined_trace(f)?;
        let (loss, pred, ds) = self.loss_and_trace_gradient(&trace)?;
        let df = self.green_interferer.correlate(&ds)?;
        Ok((loss, pred, df))
    }

    /// The prediction flips when it disagrees with the true label.
    pub fn misclassified(&self, pred: &Prediction<T>) -> bool {
        pred.is_malicious() != self.label
    }
}

/// PDE-level gradient oracle: forward leapfrog for the trace, then one
/// time-reversed adjoint sweep, with `dJ/df_j = dt^2 lambda^{j+1} . (M delta_j)`.
/// Costs exactly `2 (K - 1)` triangular solves and zero factorizations.
pub fn adjoint_gradient_oracle<T: Scalar>(
    problem: &AttackProblem<'_, T>,
    ops: &StepOperators<T>,
    interferer: &SourceTerm<T>,
    f: &Signal<T>,
    intruder: &SourceTerm<T>,
    g: &Signal<T>,
    receiver: &[T],
) -> Result<(T, Vec<T>)> {
    let forward = leapfrog_solve(ops, interferer, f, intruder, g, receiver, false)?;
    let (loss, _, w) = problem.loss_and_trace_gradient(&forward.trace)?;
    let num_steps = f.len() - 1;
    let n = ops.num_dofs();
    let dt2 = ops.dt * ops.dt;
    let mut grad = vec![T::zero(); num_steps + 1];
    // lambda^{k} for k = K down to 2, rolling two states.
    let mut lam_next: Vec<T> = Vec::new(); // lambda^{k+1}
    let mut lam_next2: Vec<T> = Vec::new(); // lambda^{k+2}
    let mut rhs = vec![T::zero(); n];
    for k in (2..=num_steps).rev() {
        for (r, &d) in rhs.iter_mut().zip(receiver) {
            *r = w[k] * d;
        }
        if !lam_next.is_empty() {
            ops.a_zero.apply_sub_into(&lam_next, &mut rhs);
        }
        if !lam_next2.is_empty() {
            ops.a_minus.apply_sub_into(&lam_next2, &mut rhs);
        }
        let lam = ops.solve_a_plus(&rhs);
        // Source sample j = k - 1 pairs with lambda^{j+1} = lambda^k.
        grad[k - 1] = dt2 * dot(&lam, interferer.load_at(k - 1));
        lam_next2 = std::mem::replace(&mut lam_next, lam);
    }
    Ok((loss, grad))
}

/// How iterates move through the feasible subspace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateRule {
    /// L-BFGS ascent in reduced coordinates `zeta` with `f = N zeta`.
    ReducedLbfgs,
    /// Steepest ascent along the projected gradient `P dJ/df`.
    ProjectedGradient,
}

/// Attack loop controls.
#[derive(Debug, Clone, Copy)]
pub struct AttackConfig<T> {
    pub update: UpdateRule,
    pub max_iters: usize,
    /// Run the misclassification check every this many accepted steps.
    pub check_every: usize,
    /// L-BFGS history length.
    pub memory: usize,
    /// Armijo sufficient-increase constant.
    pub c1: T,
    /// Backtracking contraction factor.
    pub contraction: T,
    /// Initial trial step of every line search.
    pub init_step: T,
    pub max_backtracks: usize,
}

impl<T: Scalar> Default for AttackConfig<T> {
    fn default() -> Self {
        Self {
            update: UpdateRule::ReducedLbfgs,
            max_iters: 100,
            check_every: 10,
            memory: 10,
            c1: T::of(1e-4),
            contraction: T::of(0.5),
            init_step: T::one(),
            max_backtracks: 60,
        }
    }
}

/// Result of one attack run.
#[derive(Debug, Clone)]
pub struct AttackOutcome<T> {
    /// Synthesized interference in full coordinates.
    pub f_star: Signal<T>,
    /// Accepted ascent steps taken.
    pub iterations: usize,
    /// Whether the classifier now disagrees with the true label.
    pub success: bool,
    /// Malicious-class probability of the unperturbed observation.
    pub clean_prob: T,
    /// Malicious-class probability at `f_star`.
    pub adv_prob: T,
    /// Objective value after every accepted step (non-decreasing).
    pub objective_history: Vec<T>,
}

impl<T: Scalar> AttackOutcome<T> {
    /// `max |f*| / max |g|` against a reference signal.
    pub fn amplitude_ratio(&self, reference: &Signal<T>) -> T {
        let denom = reference.max_abs();
        if denom == T::zero() {
            T::infinity()
        } else {
            self.f_star.max_abs() / denom
        }
    }
}

/// Maximizes the classifier loss over the feasible subspace.
///
/// Starts from `f = 0`, checks the prediction before the first step, and
/// stops as soon as a scheduled check observes misclassification, the step
/// limit is reached, or the line search stalls.
pub fn run_attack<T: Scalar>(
    problem: &AttackProblem<'_, T>,
    projector: &NullspaceProjector<T>,
    cfg: &AttackConfig<T>,
) -> Result<AttackOutcome<T>> {
    if projector.num_samples() != problem.num_samples() {
        return Err(Error::ShapeMismatch(format!(
            "projector spans {} samples, problem has {}",
            projector.num_samples(),
            problem.num_samples()
        )));
    }
    let dt = problem.clean_trace.dt;
    let expand_signal = |zeta: &[T]| -> Result<Signal<T>> {
        Ok(Signal {
            dt,
            samples: projector.expand(zeta)?,
        })
    };
    let r = projector.rank();
    let mut zeta = vec![T::zero(); r];
    let mut f = expand_signal(&zeta)?;
    let (mut j_curr, clean_pred) = problem.objective(&f)?;
    let clean_prob = clean_pred.prob;
    let mut adv_prob = clean_prob;
    let mut history = vec![j_curr];
    if problem.misclassified(&clean_pred) {
        return Ok(AttackOutcome {
            f_star: f,
            iterations: 0,
            success: true,
            clean_prob,
            adv_prob,
            objective_history: history,
        });
    }

    // Minimize phi = -J in reduced coordinates.
    let reduce_grad = |f: &Signal<T>| -> Result<(T, Prediction<T>, Vec<T>)> {
        let (j, pred, df) = problem.gradient(f)?;
        let mut gz = projector.reduce(&df)?;
        for v in gz.iter_mut() {
            *v = -*v;
        }
        Ok((j, pred, gz))
    };

    let (_, _, mut grad) = reduce_grad(&f)?;
    let mut pairs: std::collections::VecDeque<(Vec<T>, Vec<T>, T)> =
        std::collections::VecDeque::new();
    let mut success = false;
    let mut iterations = 0usize;
    let grad_floor = T::of(1e-14);

    while iterations < cfg.max_iters {
        let gnorm = norm(&grad);
        if gnorm <= grad_floor {
            break;
        }
        // Search direction on phi.
        let dir = match cfg.update {
            UpdateRule::ReducedLbfgs => two_loop_direction(&pairs, &grad),
            UpdateRule::ProjectedGradient => grad.iter().map(|&g| -g).collect(),
        };
        let slope = dot(&dir, &grad);
        let dir = if slope >= T::zero() {
            // Not a descent direction for phi (stale curvature): fall back.
            pairs.clear();
            grad.iter().map(|&g| -g).collect::<Vec<T>>()
        } else {
            dir
        };
        let slope = dot(&dir, &grad);

        // Armijo backtracking on phi(zeta) = -J.
        let mut alpha = cfg.init_step;
        let mut accepted = None;
        for _ in 0..cfg.max_backtracks {
            let trial: Vec<T> = zeta
                .iter()
                .zip(&dir)
                .map(|(&z, &d)| z + alpha * d)
                .collect();
            let f_trial = expand_signal(&trial)?;
            let (j_trial, pred) = problem.objective(&f_trial)?;
            let phi_curr = -j_curr;
            let phi_trial = -j_trial;
            if phi_trial <= phi_curr + cfg.c1 * alpha * slope {
                accepted = Some((trial, f_trial, j_trial, pred));
                break;
            }
            alpha *= cfg.contraction;
        }
        let Some((z_new, f_new, j_new, pred)) = accepted else {
            break; // line search stalled; return the best iterate so far
        };
        let (_, _, grad_new) = reduce_grad(&f_new)?;
        if cfg.update == UpdateRule::ReducedLbfgs {
            let s: Vec<T> = z_new.iter().zip(&zeta).map(|(&a, &b)| a - b).collect();
            let y: Vec<T> = grad_new.iter().zip(&grad).map(|(&a, &b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > T::of(1e-10) * norm(&s) * norm(&y) {
                if pairs.len() == cfg.memory {
                    pairs.pop_front();
                }
                pairs.push_back((s, y, sy));
            }
        }
        zeta = z_new;
        f = f_new;
        j_curr = j_new;
        grad = grad_new;
        adv_prob = pred.prob;
        iterations += 1;
        history.push(j_curr);
        let due = cfg.check_every != 0 && iterations % cfg.check_every == 0;
        if due && problem.misclassified(&pred) {
            success = true;
            break;
        }
    }
    // Final check regardless of schedule.
    if !success {
        let (_, pred) = problem.objective(&f)?;
        adv_prob = pred.prob;
        success = problem.misclassified(&pred);
    }
    Ok(AttackOutcome {
        f_star: f,
        iterations,
        success,
        clean_prob,
        adv_prob,
        objective_history: history,
    })
}

/// Standard L-BFGS two-loop recursion for the descent direction on phi.
fn two_loop_direction<T: Scalar>(
    pairs: &std::collections::VecDeque<(Vec<T>, Vec<T>, T)>,
    grad: &[T],
) -> Vec<T> {
    let mut q: Vec<T> = grad.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, sy) in pairs.iter().rev() {
        let rho = T::one() / *sy;
        let a = rho * dot(s, &q);
        for (qi, &yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push((a, rho));
    }
    if let Some((_, y, sy)) = pairs.back() {
        let yy = dot(y, y);
        if yy > T::zero() {
            let gamma = *sy / yy;
            for qi in q.iter_mut() {
                *qi *= gamma;
            }
        }
    }
    for ((s, y, _), &(a, rho)) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, &si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    for v in q.iter_mut() {
        *v = -*v;
    }
    q
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}
