//! `wavejam gendata` — synthesize the labeled spectrogram dataset.

use ndarray::Array2;
use num_complex::Complex;

use wavejam::noise::NoiseSpec;
use wavejam::{band_rms, corrupt_stft, derive_seed, power_db, save_spectrogram_csv, stft};

use crate::artifacts::{load_green, write_manifest, GreenKind, ManifestRow, OutDir, Split};
use crate::config::Config;
use crate::error::{io_at, CliError, Result};

pub fn run(cfg: &Config, out: &OutDir) -> Result<()> {
    let hash = cfg.hash();
    let green_s = load_green(out, GreenKind::Intruder, hash)?;
    let grid = cfg.time_grid()?;
    let plan = cfg.stft_plan()?;
    let freqs = cfg.frequencies_hz();
    let malicious = freqs.iter().filter(|&&f| cfg.label_of(f)).count();
    if malicious == 0 || malicious == freqs.len() {
        return Err(CliError::Core(wavejam::Error::DegenerateDataset(format!(
            "all {} ladder frequencies fall on one side of label_threshold_hz = {}",
            freqs.len(),
            cfg.label_threshold_hz
        ))));
    }

    // Clean spectra depend only on the frequency; compute each once.
    let mut clean: Vec<Option<(Array2<Complex<f64>>, NoiseSpec<f64>)>> = vec![None; freqs.len()];
    let mut rows: Vec<ManifestRow> = Vec::new();
    let mut id = 0usize;
    for split in Split::ALL {
        let dir = out.split_dir(split);
        std::fs::create_dir_all(&dir).map_err(io_at(&dir))?;
        let per_freq = match split {
            Split::Train => cfg.train_per_freq,
            Split::Test => cfg.test_per_freq,
            Split::Val => cfg.val_per_freq,
        };
        for (fi, &freq) in freqs.iter().enumerate() {
            if clean[fi].is_none() {
                let g = super::tone(cfg, grid, freq);
                let trace = green_s.apply(&g)?;
                let z = stft(&plan, &trace.samples)?;
                let spec = NoiseSpec::from_band_rms(cfg.noise_kappa, &band_rms(&z))?;
                clean[fi] = Some((z, spec));
            }
            let (z, noise_spec) = clean[fi].as_ref().expect("filled above");
            for e in 0..per_freq {
                let seed = derive_seed(cfg.seed, &[1, split.index(), fi as u64, e as u64]);
                let corrupted = corrupt_stft(z, noise_spec, seed)?;
                let db = power_db(&corrupted, cfg.floor_db);
                let rel = format!("dataset/{}/ex_{:04}.csv", split.as_str(), id);
                save_spectrogram_csv(out.root().join(&rel), &db)?;
                rows.push(ManifestRow {
                    id,
                    split,
                    frequency_hz: freq,
                    label: cfg.label_of(freq),
                    seed,
                    path: rel,
                });
                id += 1;
            }
        }
    }
    write_manifest(&out.manifest(), &rows)?;

    for split in Split::ALL {
        let of = |want: bool| {
            rows.iter()
                .filter(|r| r.split == split && r.label == want)
                .count()
        };
        println!(
            "{}: {} examples ({} malicious, {} benign)",
            split.as_str(),
            of(true) + of(false),
            of(true),
            of(false)
        );
    }
    println!(
        "{} frequencies from {} to {} Hz; wrote {}",
        freqs.len(),
        cfg.freq_min_hz,
        cfg.freq_max_hz,
        out.manifest().display()
    );
    Ok(())
}
