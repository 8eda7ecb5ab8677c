//! `wavejam train` — fit the spectrogram classifier on the generated dataset.

use std::fmt::Write as _;
use std::time::Instant;

use wavejam::classifier::Example;
use wavejam::{derive_seed, load_spectrogram_csv, train};

use crate::artifacts::{read_manifest, ManifestRow, OutDir, Split};
use crate::config::Config;
use crate::error::{io_at, Result};

/// Loads every example of one split as labeled spectrograms.
pub(crate) fn load_split(
    out: &OutDir,
    rows: &[ManifestRow],
    split: Split,
) -> Result<Vec<Example<f64>>> {
    rows.iter()
        .filter(|r| r.split == split)
        .map(|r| {
            let spec = load_spectrogram_csv(out.root().join(&r.path))?;
            Ok(Example {
                spec,
                label: r.label,
            })
        })
        .collect()
}

pub fn run(cfg: &Config, out: &OutDir) -> Result<()> {
    let hash = cfg.hash();
    let rows = read_manifest(out)?;
    let train_set = load_split(out, &rows, Split::Train)?;
    let test_set = load_split(out, &rows, Split::Test)?;

    let started = Instant::now();
    let (model, log) = train(
        &train_set,
        &test_set,
        &cfg.train_config(),
        derive_seed(cfg.seed, &[2]),
    )?;
    let elapsed = started.elapsed().as_secs_f64();
    model.save(out.model(), hash)?;

    let mut csv = String::from("epoch,train_loss,test_loss,test_accuracy\n");
    for l in &log {
        writeln!(
            csv,
            "{},{},{},{}",
            l.epoch, l.train_loss, l.test_loss, l.test_accuracy
        )
        .expect("string writes cannot fail");
    }
    std::fs::write(out.train_log(), &csv).map_err(io_at(out.train_log()))?;

    let best = log
        .iter()
        .min_by(|a, b| a.test_loss.total_cmp(&b.test_loss))
        .expect("training logs at least one epoch");
    println!(
        "trained on {} examples against {} held out: {} epochs in {}",
        train_set.len(),
        test_set.len(),
        log.len(),
        super::fmt_secs(elapsed)
    );
    println!(
        "best epoch {}: test loss {:.4}, test accuracy {:.1}%",
        best.epoch,
        best.test_loss,
        best.test_accuracy * 100.0
    );
    println!("wrote {} and {}", out.model().display(), out.train_log().display());
    Ok(())
}
