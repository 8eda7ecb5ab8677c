//! `wavejam mesh` — build the jittered triangulation and persist it.

use wavejam::{build_rect_mesh, cfl_estimate, derive_seed};

use crate::artifacts::OutDir;
use crate::config::Config;
use crate::error::{CliError, Result};

pub fn run(cfg: &Config, out: &OutDir) -> Result<()> {
    out.ensure_root()?;
    let mesh = build_rect_mesh(
        cfg.domain(),
        cfg.mesh_h_m,
        cfg.mesh_jitter_frac,
        derive_seed(cfg.seed, &[0]),
    )?;
    let bound = cfl_estimate(&mesh, cfg.wave_speed_m_per_s);
    if !(cfg.time_step_s < bound) {
        return Err(CliError::config(format!(
            "time_step_s {} is not below the stability bound {bound:.6e} of this mesh; \
             shrink the step or coarsen the mesh",
            cfg.time_step_s
        )));
    }
    mesh.save(out.mesh(), Some(cfg.hash()))?;
    println!(
        "mesh: {} vertices, {} triangles over {} x {} m",
        mesh.num_vertices(),
        mesh.num_triangles(),
        cfg.domain_width_m,
        cfg.domain_height_m
    );
    println!(
        "edges: {:.4} .. {:.4} m (target h {})",
        mesh.min_edge_length(),
        mesh.max_edge_length(),
        cfg.mesh_h_m
    );
    println!(
        "stability: dt {:.6e} s under the bound {:.6e} s ({:.0}% margin)",
        cfg.time_step_s,
        bound,
        (1.0 - cfg.time_step_s / bound) * 100.0
    );
    println!("wrote {}", out.mesh().display());
    Ok(())
}
