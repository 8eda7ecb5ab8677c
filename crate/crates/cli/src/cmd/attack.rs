//! `wavejam attack` — synthesize band-constrained interference against every
//! validation example and report the flips.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use wavejam::noise::{noise_stft_realization, NoiseSpec};
use wavejam::{
    band_rms, power_db, run_attack, save_spectrogram_pgm, selector_residual, stft, AttackProblem,
    BandSelector, Signal,
};

use crate::artifacts::{
    load_green, load_model, load_projector, read_manifest, GreenKind, OutDir, Split,
};
use crate::config::Config;
use crate::error::{io_at, CliError, Result};

/// One line of `attacks/report.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub id: usize,
    pub frequency_hz: f64,
    pub label: bool,
    pub clean_prob: f64,
    pub initially_correct: bool,
    pub adv_prob: f64,
    pub iterations: usize,
    pub flipped: bool,
    pub amplitude_ratio: f64,
    pub residual: f64,
}

const REPORT_HEADER: &str = "id,frequency_hz,label,clean_prob,initially_correct,adv_prob,\
iterations,flipped,amplitude_ratio,residual";

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::MissingArtifact {
                path: path.to_path_buf(),
                hint: "run `wavejam attack` with the same --out directory first".into(),
            }
        } else {
            (io_at(path))(e)
        }
    })?;
    let bad = |line: usize, msg: String| {
        CliError::Core(wavejam::Error::format(path, format!("line {line}: {msg}")))
    };
    let flag = |line: usize, s: &str| match s {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(bad(line, format!("bad flag {other:?}"))),
    };
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != REPORT_HEADER {
                return Err(bad(1, format!("unexpected header {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let c: Vec<&str> = line.split(',').collect();
        if c.len() != 10 {
            return Err(bad(i + 1, format!("expected 10 fields, got {}", c.len())));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse().map_err(|_| bad(i + 1, format!("bad {what}")))
        };
        rows.push(ReportRow {
            id: c[0].parse().map_err(|_| bad(i + 1, "bad id".into()))?,
            frequency_hz: num(c[1], "frequency")?,
            label: flag(i + 1, c[2])?,
            clean_prob: num(c[3], "clean probability")?,
            initially_correct: flag(i + 1, c[4])?,
            adv_prob: num(c[5], "adversarial probability")?,
            iterations: c[6].parse().map_err(|_| bad(i + 1, "bad iterations".into()))?,
            flipped: flag(i + 1, c[7])?,
            amplitude_ratio: num(c[8], "amplitude ratio")?,
            residual: num(c[9], "residual")?,
        });
    }
    Ok(rows)
}

fn write_signal_csv(path: &Path, f: &Signal<f64>) -> Result<()> {
    let mut text = String::from("sample_index,time_s,value\n");
    for (k, v) in f.samples.iter().enumerate() {
        writeln!(text, "{},{},{}", k, f.dt * k as f64, v).expect("string writes cannot fail");
    }
    std::fs::write(path, text).map_err(io_at(path))
}

pub fn run(cfg: &Config, out: &OutDir) -> Result<()> {
    let hash = cfg.hash();
    let green_i = load_green(out, GreenKind::Interferer, hash)?;
    let green_s = load_green(out, GreenKind::Intruder, hash)?;
    let projector = load_projector(out, hash)?;
    let model = load_model(out, hash)?;
    let rows = read_manifest(out)?;
    let grid = cfg.time_grid()?;
    let plan = cfg.stft_plan()?;
    let selector = BandSelector::from_allowed_hz(&plan, cfg.band_low_hz, cfg.band_high_hz)?;
    let attack_cfg = cfg.attack_config();
    std::fs::create_dir_all(out.attacks_dir()).map_err(io_at(out.attacks_dir()))?;

    let val: Vec<_> = rows.iter().filter(|r| r.split == Split::Val).collect();
    let mut report = String::from(REPORT_HEADER);
    report.push('\n');
    let (mut attacked, mut flipped, mut iter_sum, mut ratio_sum) = (0usize, 0usize, 0usize, 0.0);
    let started = Instant::now();
    for r in &val {
        let g = super::tone(cfg, grid, r.frequency_hz);
        let clean_trace = green_s.apply(&g)?;
        let z = stft(&plan, &clean_trace.samples)?;
        let noise_spec = NoiseSpec::from_band_rms(cfg.noise_kappa, &band_rms(&z))?;
        // The frozen per-example noise is regenerated from its manifest seed.
        let eta = noise_stft_realization((plan.num_freqs, plan.num_windows), &noise_spec, r.seed)?;
        let problem = AttackProblem::new(
            &green_i,
            &green_s,
            &g,
            &plan,
            &model,
            r.label,
            Some(eta.clone()),
            cfg.floor_db,
        )?;
        let outcome = run_attack(&problem, &projector, &attack_cfg)?;
        let initially_correct = (outcome.clean_prob > 0.5) == r.label;
        let ratio = outcome.amplitude_ratio(&g);
        // Reported relative to the total spectral energy of the interference
        // itself, so scale drops out.
        let z_star = stft(&plan, &outcome.f_star.samples)?;
        let total = z_star.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let residual =
            selector_residual(&plan, &selector, &outcome.f_star.samples)? / total.max(1e-300);
        if initially_correct {
            attacked += 1;
            if outcome.success {
                flipped += 1;
                iter_sum += outcome.iterations;
                ratio_sum += ratio;
            }
        }
        writeln!(
            report,
            "{},{},{},{},{},{},{},{},{},{}",
            r.id,
            r.frequency_hz,
            u8::from(r.label),
            outcome.clean_prob,
            u8::from(initially_correct),
            outcome.adv_prob,
            outcome.iterations,
            u8::from(outcome.success),
            ratio,
            residual
        )
        .expect("string writes cannot fail");

        write_signal_csv(
            &out.attacks_dir().join(format!("f_star_{:04}.csv", r.id)),
            &outcome.f_star,
        )?;
        let before_db = power_db(&(&z + &eta), cfg.floor_db);
        save_spectrogram_pgm(
            out.attacks_dir().join(format!("before_{:04}.pgm", r.id)),
            &before_db,
            cfg.floor_db,
        )?;
        let adv_trace = problem.combined_trace(&outcome.f_star)?;
        let after_db = power_db(&(&stft(&plan, &adv_trace.samples)? + &eta), cfg.floor_db);
        save_spectrogram_pgm(
            out.attacks_dir().join(format!("after_{:04}.pgm", r.id)),
            &after_db,
            cfg.floor_db,
        )?;
    }
    std::fs::write(out.attack_report(), &report).map_err(io_at(out.attack_report()))?;

    let elapsed = started.elapsed().as_secs_f64();
    println!(
        "attacked {attacked} of {} validation examples (the rest start misclassified)",
        val.len()
    );
    if attacked > 0 {
        println!(
            "flipped {flipped} ({:.1}%), mean {:.1} iterations, mean amplitude ratio {:.3}",
            100.0 * flipped as f64 / attacked as f64,
            if flipped > 0 { iter_sum as f64 / flipped as f64 } else { 0.0 },
            if flipped > 0 { ratio_sum / flipped as f64 } else { 0.0 }
        );
    }
    println!(
        "wrote {} and per-example artifacts in {} ({})",
        out.attack_report().display(),
        out.attacks_dir().display(),
        super::fmt_secs(elapsed)
    );
    Ok(())
}
