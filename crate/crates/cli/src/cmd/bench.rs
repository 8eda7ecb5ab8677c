//! `wavejam bench` — wall-clock comparison of the precomputed shortcut
//! against naive PDE evaluation for the attack objective and its gradient.

use std::fmt::Write as _;
use std::time::Instant;

use wavejam::seeds::splitmix64;
use wavejam::{
    adjoint_gradient_oracle, bce_loss, derive_seed, leapfrog_solve, spectrogram_db, AttackProblem,
    Signal, SolverCounters,
};

use crate::artifacts::{load_green, load_mesh, load_model, load_projector, GreenKind, OutDir};
use crate::config::Config;
use crate::error::{io_at, CliError, Result};

/// Mean and median in milliseconds.
fn stats_ms(times: &[f64]) -> (f64, f64) {
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2] * 1e3;
    let mean = times.iter().sum::<f64>() / times.len() as f64 * 1e3;
    (mean, median)
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

fn time_loop(
    reps: usize,
    mut body: impl FnMut() -> Result<()>,
) -> Result<(Vec<f64>, SolverCounters)> {
    let before = SolverCounters::snapshot();
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        body()?;
        times.push(t.elapsed().as_secs_f64());
    }
    Ok((times, SolverCounters::snapshot().since(&before)))
}

pub fn run(cfg: &Config, out: &OutDir) -> Result<()> {
    let hash = cfg.hash();
    let mesh = load_mesh(out, hash)?;
    let green_i = load_green(out, GreenKind::Interferer, hash)?;
    let green_s = load_green(out, GreenKind::Intruder, hash)?;
    let projector = load_projector(out, hash)?;
    let model = load_model(out, hash)?;
    let grid = cfg.time_grid()?;
    let plan = cfg.stft_plan()?;
    let scene = super::build_scene(cfg, &mesh)?;

    let freqs = cfg.frequencies_hz();
    let freq = freqs[freqs.len() / 2];
    let label = cfg.label_of(freq);
    let g = super::tone(cfg, grid, freq);
    let problem = AttackProblem::new(
        &green_i,
        &green_s,
        &g,
        &plan,
        &model,
        label,
        None,
        cfg.floor_db,
    )?;

    // A deterministic in-band interference sample to evaluate at.
    let mut state = derive_seed(cfg.seed, &[3]);
    let zeta: Vec<f64> = (0..projector.rank())
        .map(|_| {
            state = splitmix64(state);
            (state >> 11) as f64 / (1u64 << 52) as f64 - 1.0
        })
        .collect();
    let raw = projector.expand(&zeta)?;
    let target = 0.3 * super::rms(&g.samples);
    let scale = target / super::rms(&raw).max(1e-300);
    let f = Signal {
        dt: grid.dt,
        samples: raw.into_iter().map(|v| v * scale).collect(),
    };

    let naive_objective = || -> Result<f64> {
        let run = leapfrog_solve(
            &scene.ops,
            &scene.interferer,
            &f,
            &scene.intruder,
            &g,
            &scene.receiver,
            false,
        )?;
        let spec = spectrogram_db(&plan, &run.trace.samples, cfg.floor_db)?;
        Ok(bce_loss(model.forward(&spec)?.prob, label))
    };
    let naive_gradient = || -> Result<(f64, Vec<f64>)> {
        Ok(adjoint_gradient_oracle(
            &problem,
            &scene.ops,
            &scene.interferer,
            &f,
            &scene.intruder,
            &g,
            &scene.receiver,
        )?)
    };

    // Agreement check before timing anything.
    let j_naive = naive_objective()?;
    let (j_short, _) = problem.objective(&f)?;
    let dj = (j_naive - j_short).abs() / j_naive.abs().max(1.0);
    let (_, grad_oracle) = naive_gradient()?;
    let (_, _, grad_short) = problem.gradient(&f)?;
    let dg = rel_err(&grad_short, &grad_oracle);
    if dj > 1e-9 || dg > 1e-6 {
        return Err(CliError::Core(wavejam::Error::Numeric(format!(
            "shortcut and naive evaluations disagree (objective {dj:.3e}, gradient {dg:.3e})"
        ))));
    }

    let reps = cfg.bench_reps;
    let (t_obj_naive, c_obj_naive) = time_loop(reps, || naive_objective().map(drop))?;
    let (t_obj_short, c_obj_short) = time_loop(reps, || Ok(problem.objective(&f).map(drop)?))?;
    let (t_grad_naive, c_grad_naive) = time_loop(reps, || naive_gradient().map(drop))?;
    let (t_grad_short, c_grad_short) = time_loop(reps, || Ok(problem.gradient(&f).map(drop)?))?;

    let (obj_naive_mean, obj_naive_med) = stats_ms(&t_obj_naive);
    let (obj_short_mean, obj_short_med) = stats_ms(&t_obj_short);
    let (grad_naive_mean, grad_naive_med) = stats_ms(&t_grad_naive);
    let (grad_short_mean, grad_short_med) = stats_ms(&t_grad_short);
    let obj_speedup = obj_naive_med / obj_short_med;
    let grad_speedup = grad_naive_med / grad_short_med;

    let mut csv = String::from(
        "operation,implementation,reps,mean_ms,median_ms,speedup,factorizations,triangular_solves\n",
    );
    let rows = [
        ("objective", "naive", obj_naive_mean, obj_naive_med, 1.0, &c_obj_naive),
        ("objective", "shortcut", obj_short_mean, obj_short_med, obj_speedup, &c_obj_short),
        ("gradient", "naive", grad_naive_mean, grad_naive_med, 1.0, &c_grad_naive),
        ("gradient", "shortcut", grad_short_mean, grad_short_med, grad_speedup, &c_grad_short),
    ];
    for (op, imp, mean, median, speedup, c) in rows {
        writeln!(
            csv,
            "{op},{imp},{reps},{mean},{median},{speedup},{},{}",
            c.factorizations, c.triangular_solves
        )
        .expect("string writes cannot fail");
    }
    std::fs::write(out.bench(), &csv).map_err(io_at(out.bench()))?;

    println!("agreement: objective rel err {dj:.2e}, gradient rel err {dg:.2e}");
    println!(
        "objective: naive {:.2} ms ({} solves/rep), shortcut {:.3} ms ({} solves) -> {:.1}x",
        obj_naive_med,
        c_obj_naive.triangular_solves / reps as u64,
        obj_short_med,
        c_obj_short.triangular_solves,
        obj_speedup
    );
    println!(
        "gradient:  naive {:.2} ms ({} solves/rep), shortcut {:.3} ms ({} solves) -> {:.1}x",
        grad_naive_med,
        c_grad_naive.triangular_solves / reps as u64,
        grad_short_med,
        c_grad_short.triangular_solves,
        grad_speedup
    );
    println!("wrote {}", out.bench().display());
    Ok(())
}
