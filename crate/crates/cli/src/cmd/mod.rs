//! One module per pipeline verb, plus the helpers they share.

pub mod attack;
pub mod bench;
pub mod evaluate;
pub mod gendata;
pub mod mesh;
pub mod precompute;
pub mod train;

use wavejam::{
    assemble_all, build_step_operators, receiver_vector, Point2, Signal, SourcePath, SourceTerm,
    StepOperators, TimeGrid, TriMesh,
};

use crate::config::Config;
use crate::error::Result;

/// The intruder (or reference) tone at one ladder frequency.
pub(crate) fn tone(cfg: &Config, grid: TimeGrid<f64>, freq_hz: f64) -> Signal<f64> {
    let omega = 2.0 * std::f64::consts::PI * freq_hz;
    let amp = cfg.source_amplitude;
    Signal::from_fn(grid, |t| amp * (omega * t).sin())
}

/// Everything the time stepper needs, assembled from a mesh and the config.
pub(crate) struct Scene {
    pub ops: StepOperators<f64>,
    pub interferer: SourceTerm<f64>,
    pub intruder: SourceTerm<f64>,
    pub receiver: Vec<f64>,
}

pub(crate) fn build_scene(cfg: &Config, mesh: &TriMesh<f64>) -> Result<Scene> {
    let matrices = assemble_all(mesh)?;
    let grid = cfg.time_grid()?;
    let ops = build_step_operators(mesh, &matrices, cfg.wave_speed_m_per_s, grid)?;
    let interferer = SourceTerm::build(
        mesh,
        &matrices.mass,
        &SourcePath::Static(Point2::new(cfg.interferer_x_m, cfg.interferer_y_m)),
        cfg.source_radius_m,
        grid,
    )?;
    let intruder = SourceTerm::build(
        mesh,
        &matrices.mass,
        &SourcePath::Static(Point2::new(cfg.intruder_x_m, cfg.intruder_y_m)),
        cfg.source_radius_m,
        grid,
    )?;
    let receiver = receiver_vector(mesh, Point2::new(cfg.receiver_x_m, cfg.receiver_y_m))?;
    Ok(Scene {
        ops,
        interferer,
        intruder,
        receiver,
    })
}

pub(crate) fn rms(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    (samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64).sqrt()
}

/// `12.3 ms` / `1.84 s` style durations for log lines.
pub(crate) fn fmt_secs(seconds: f64) -> String {
    if seconds < 1.0 {
        format!("{:.1} ms", seconds * 1e3)
    } else {
        format!("{seconds:.2} s")
    }
}
