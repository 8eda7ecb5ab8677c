//! `wavejam evaluate` — accuracy tables for the trained model, clean and (if
//! an attack report exists) after interference.

use std::fmt::Write as _;

use wavejam::evaluate;

use crate::artifacts::{load_model, read_manifest, OutDir, Split};
use crate::cmd::train::load_split;
use crate::config::Config;
use crate::error::{io_at, Result};

pub fn run(cfg: &Config, out: &OutDir) -> Result<()> {
    let model = load_model(out, cfg.hash())?;
    let rows = read_manifest(out)?;

    let mut csv =
        String::from("split,count,correct,accuracy,mean_loss,true_pos,true_neg,false_pos,false_neg\n");
    println!("clean accuracy:");
    for split in Split::ALL {
        let set = load_split(out, &rows, split)?;
        let rep = evaluate(&model, &set)?;
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            split.as_str(),
            rep.count,
            rep.correct,
            rep.accuracy,
            rep.mean_loss,
            rep.true_pos,
            rep.true_neg,
            rep.false_pos,
            rep.false_neg
        )
        .expect("string writes cannot fail");
        println!(
            "  {:<5} {:>4} examples  {:>5.1}%  (tp {} tn {} fp {} fn {})",
            split.as_str(),
            rep.count,
            rep.accuracy * 100.0,
            rep.true_pos,
            rep.true_neg,
            rep.false_pos,
            rep.false_neg
        );
    }
    std::fs::write(out.evaluation(), &csv).map_err(io_at(out.evaluation()))?;
    println!("wrote {}", out.evaluation().display());

    let report_path = out.attack_report();
    if report_path.exists() {
        let report = super::attack::read_report(&report_path)?;
        let correct_before = report.iter().filter(|r| r.initially_correct).count();
        let flipped = report
            .iter()
            .filter(|r| r.initially_correct && r.flipped)
            .count();
        let correct_after = correct_before - flipped;
        println!("after interference (validation split):");
        println!(
            "  {} of {} initially correct were flipped ({:.1}%)",
            flipped,
            correct_before,
            if correct_before > 0 {
                100.0 * flipped as f64 / correct_before as f64
            } else {
                0.0
            }
        );
        println!(
            "  accuracy {:.1}% -> {:.1}%",
            100.0 * correct_before as f64 / report.len() as f64,
            100.0 * correct_after as f64 / report.len() as f64
        );
    }
    Ok(())
}
