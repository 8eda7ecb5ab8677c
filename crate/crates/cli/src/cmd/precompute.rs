//! `wavejam precompute` — receiver Green kernels for both sources from one
//! adjoint sweep, plus the band-constraint projector.

use std::fmt::Write as _;
use std::time::Instant;

use wavejam::green::source_tag;
use wavejam::{build_projector, precompute_green_kernels, BandSelector, SolverCounters};

use crate::artifacts::{load_mesh, OutDir};
use crate::config::Config;
use crate::error::{io_at, Result};

pub fn run(cfg: &Config, out: &OutDir) -> Result<()> {
    let hash = cfg.hash();
    let mesh = load_mesh(out, hash)?;
    let grid = cfg.time_grid()?;

    let before = SolverCounters::snapshot();
    let t_scene = Instant::now();
    let scene = super::build_scene(cfg, &mesh)?;
    let scene_secs = t_scene.elapsed().as_secs_f64();

    let t_sweep = Instant::now();
    let kernels = precompute_green_kernels(
        &scene.ops,
        &scene.receiver,
        &[scene.interferer.load_at(0), scene.intruder.load_at(0)],
        grid.num_steps,
    )?;
    let sweep_secs = t_sweep.elapsed().as_secs_f64();
    let spent = SolverCounters::snapshot().since(&before);

    let mut kernels = kernels.into_iter();
    let (green_i, green_s) = match (kernels.next(), kernels.next()) {
        (Some(a), Some(b)) => (a, b),
        _ => unreachable!("two loads produce two kernels"),
    };
    green_i.save(out.green_interferer(), source_tag::INTERFERER, hash)?;
    green_s.save(out.green_intruder(), source_tag::INTRUDER, hash)?;

    let plan = cfg.stft_plan()?;
    let selector = BandSelector::from_allowed_hz(&plan, cfg.band_low_hz, cfg.band_high_hz)?;
    let t_proj = Instant::now();
    let projector = build_projector(&plan, &selector, cfg.projector_tol)?;
    let proj_secs = t_proj.elapsed().as_secs_f64();
    projector.save(out.projector(), hash)?;

    let mut log = String::new();
    writeln!(log, "config_hash = {hash:#018x}").unwrap();
    writeln!(log, "num_steps = {}", grid.num_steps).unwrap();
    writeln!(log, "factorizations = {}", spent.factorizations).unwrap();
    writeln!(log, "triangular_solves = {}", spent.triangular_solves).unwrap();
    writeln!(log, "cg_solves = {}", spent.cg_solves).unwrap();
    writeln!(log, "assembly_seconds = {scene_secs}").unwrap();
    writeln!(log, "adjoint_sweep_seconds = {sweep_secs}").unwrap();
    writeln!(log, "projector_seconds = {proj_secs}").unwrap();
    writeln!(log, "plan_rows = {}", plan.num_freqs).unwrap();
    writeln!(log, "plan_windows = {}", plan.num_windows).unwrap();
    writeln!(log, "disallowed_rows = {}", selector.num_disallowed()).unwrap();
    writeln!(log, "projector_rank = {}", projector.rank()).unwrap();
    std::fs::write(out.precompute_log(), &log).map_err(io_at(out.precompute_log()))?;

    println!(
        "green kernels: {} steps from one adjoint sweep ({} factorization, {} back-substitutions, {})",
        grid.num_steps,
        spent.factorizations,
        spent.triangular_solves,
        super::fmt_secs(sweep_secs)
    );
    println!(
        "projector: {} of {} dimensions feasible ({} disallowed rows, {})",
        projector.rank(),
        plan.num_samples,
        selector.num_disallowed(),
        super::fmt_secs(proj_secs)
    );
    println!(
        "wrote {}, {}, {}",
        out.green_interferer().display(),
        out.green_intruder().display(),
        out.projector().display()
    );
    Ok(())
}
