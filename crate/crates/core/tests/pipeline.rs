//! End-to-end miniature of the whole experiment: mesh, Green precompute,
//! dataset synthesis, training, and a constrained attack — plus binary
//! artifact round-trips through a temp directory.

use num_complex::Complex;
use tempfile::tempdir;

use wavejam::classifier::{evaluate, train, Example, Head, ModelParams, TrainConfig};
use wavejam::fem::{assemble_all, receiver_vector};
use wavejam::geom::{Point2, Rect};
use wavejam::green::{build_green, precompute_adjoint_column, source_tag, GreenMode, GreenOperator};
use wavejam::mesh::build_rect_mesh;
use wavejam::noise::{band_rms, corrupt_stft, NoiseSpec};
use wavejam::seeds::derive_seed;
use wavejam::solver::SolverCounters;
use wavejam::spectral::{
    build_projector, power_db, selector_residual, stft, BandSelector, NullspaceProjector, StftPlan,
};
use wavejam::wave::{build_step_operators, Signal, SourcePath, SourceTerm, TimeGrid};
use wavejam::{run_attack, AttackConfig, AttackProblem};

const ROOT_SEED: u64 = 421;
const KAPPA: f64 = 0.1;
const FLOOR_DB: f64 = -120.0;
/// Source strength; keeps receiver spectrograms well above the dB floor.
const SOURCE_AMP: f64 = 1e6;

struct Rig {
    grid: TimeGrid<f64>,
    green_i: GreenOperator<f64>,
    green_s: GreenOperator<f64>,
    plan: StftPlan<f64>,
    projector: NullspaceProjector<f64>,
    selector: BandSelector,
}

fn build_rig() -> Rig {
    let domain = Rect::new(0.0, 10.0, 0.0, 10.0);
    let mesh = build_rect_mesh(domain, 1.0, 0.1, derive_seed(ROOT_SEED, &[0])).unwrap();
    let matrices = assemble_all(&mesh).unwrap();
    let grid = TimeGrid::new(3.5e-4, 320).unwrap();
    let before = SolverCounters::snapshot();
    let ops = build_step_operators(&mesh, &matrices, 625.0, grid).unwrap();
    let interferer = SourceTerm::build(
        &mesh,
        &matrices.mass,
        &SourcePath::Static(Point2::new(1.0, 7.0)),
        2.0,
        grid,
    )
    .unwrap();
    let intruder = SourceTerm::build(
        &mesh,
        &matrices.mass,
        &SourcePath::Static(Point2::new(3.0, 3.0)),
        2.0,
        grid,
    )
    .unwrap();
    let receiver = receiver_vector(&mesh, Point2::new(7.5, 2.5)).unwrap();
    let adj = precompute_adjoint_column(&ops, &receiver, grid.num_steps).unwrap();
    let green_i = build_green(&adj, &interferer, GreenMode::Kernel).unwrap();
    let green_s = build_green(&adj, &intruder, GreenMode::Kernel).unwrap();
    let spent = SolverCounters::snapshot().since(&before);
    assert_eq!(spent.factorizations, 1, "precompute must factor exactly once");
    assert_eq!(
        spent.triangular_solves,
        grid.num_steps as u64 - 1,
        "precompute must back-substitute exactly K - 1 times"
    );

    let plan = StftPlan::new(32, 32, 17, grid.num_samples(), grid.dt).unwrap();
    let selector = BandSelector::from_allowed_hz(&plan, 125.0, 6000.0).unwrap();
    let projector = build_projector(&plan, &selector, 1e-10).unwrap();
    Rig {
        grid,
        green_i,
        green_s,
        plan,
        projector,
        selector,
    }
}

/// Clean STFT, its per-example corruption, and the labeled example.
fn synth_example(
    rig: &Rig,
    freq_hz: f64,
    noise_seed: u64,
) -> (Example<f64>, Signal<f64>, ndarray::Array2<Complex<f64>>) {
    let omega = 2.0 * std::f64::consts::PI * freq_hz;
    let g = Signal::from_fn(rig.grid, |t: f64| SOURCE_AMP * (omega * t).sin());
    let clean = rig.green_s.apply(&g).unwrap();
    let z = stft(&rig.plan, &clean.samples).unwrap();
    let spec = NoiseSpec::from_band_rms(KAPPA, &band_rms(&z)).unwrap();
    let corrupted = corrupt_stft(&z, &spec, noise_seed).unwrap();
    let eta = &corrupted - &z;
    let label = freq_hz <= 500.0;
    (
        Example {
            spec: power_db(&corrupted, FLOOR_DB),
            label,
        },
        g,
        eta,
    )
}

fn synth_split(rig: &Rig, split: u64, per_freq: usize) -> Vec<Example<f64>> {
    let mut out = Vec::new();
    for (fi, freq) in [250.0, 750.0].into_iter().enumerate() {
        for e in 0..per_freq {
            let seed = derive_seed(ROOT_SEED, &[1, split, fi as u64, e as u64]);
            out.push(synth_example(rig, freq, seed).0);
        }
    }
    out
}

#[test]
fn mini_experiment_trains_and_attacks() {
    let rig = build_rig();
    let train_set = synth_split(&rig, 0, 8);
    let test_set = synth_split(&rig, 1, 3);
    let val_set = synth_split(&rig, 2, 3);

    let cfg = TrainConfig {
        head: Head::TimeAverage,
        learning_rate: 0.1,
        batch_size: 8,
        max_epochs: 60,
        patience: 15,
    };
    let (model, log) = train(&train_set, &test_set, &cfg, derive_seed(ROOT_SEED, &[2])).unwrap();
    assert!(!log.is_empty());
    let val_report = evaluate(&model, &val_set).unwrap();
    assert!(
        val_report.accuracy >= 0.9,
        "mini classifier only reached {:.3} validation accuracy",
        val_report.accuracy
    );

    // Attack the first correctly classified malicious validation example.
    let (example, g, eta) = synth_example(&rig, 250.0, derive_seed(ROOT_SEED, &[1, 2, 0, 0]));
    let pred = model.forward(&example.spec).unwrap();
    assert!(pred.is_malicious(), "picked example must start correctly classified");
    let problem = AttackProblem::new(
        &rig.green_i,
        &rig.green_s,
        &g,
        &rig.plan,
        &model,
        true,
        Some(eta),
        FLOOR_DB,
    )
    .unwrap();

    let before = SolverCounters::snapshot();
    let outcome = run_attack(&problem, &rig.projector, &AttackConfig::default()).unwrap();
    let spent = SolverCounters::snapshot().since(&before);
    assert_eq!(spent.factorizations, 0, "attack must not factor");
    assert_eq!(spent.triangular_solves, 0, "attack must not solve");

    assert!(outcome.success, "attack failed: adv prob {:.4}", outcome.adv_prob);
    assert!(outcome.adv_prob < 0.5 && outcome.clean_prob > 0.5);
    assert!(
        outcome.objective_history.windows(2).all(|w| w[1] >= w[0]),
        "objective history must be non-decreasing"
    );
    // The synthesized interference stays inside the allowed band.
    let resid = selector_residual(&rig.plan, &rig.selector, &outcome.f_star.samples).unwrap();
    let fnorm = outcome
        .f_star
        .samples
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    assert!(fnorm > 0.0);
    assert!(resid <= 1e-8 * fnorm, "off-band residual {resid:e} vs norm {fnorm:e}");
}

#[test]
fn artifacts_round_trip_through_files() {
    let rig = build_rig();
    let dir = tempdir().unwrap();
    let hash = 0x00c0_ffee_u64;

    let green_path = dir.path().join("green_i.wgrn");
    rig.green_i
        .save(&green_path, source_tag::INTERFERER, hash)
        .unwrap();
    let (green_back, tag, h) = GreenOperator::<f64>::load(&green_path).unwrap();
    assert_eq!(tag, source_tag::INTERFERER);
    assert_eq!(h, hash);
    assert_eq!(green_back.kernel().unwrap(), rig.green_i.kernel().unwrap());

    let proj_path = dir.path().join("band.wprj");
    rig.projector.save(&proj_path, hash).unwrap();
    let (proj_back, h) = NullspaceProjector::<f64>::load(&proj_path).unwrap();
    assert_eq!(h, hash);
    assert_eq!(proj_back.basis(), rig.projector.basis());

    let train_set = synth_split(&rig, 0, 4);
    let test_set = synth_split(&rig, 1, 2);
    let cfg = TrainConfig {
        head: Head::TimeAverage,
        learning_rate: 0.1,
        batch_size: 4,
        max_epochs: 5,
        patience: 5,
    };
    let (model, _) = train(&train_set, &test_set, &cfg, 99).unwrap();
    let net_path = dir.path().join("model.wnet");
    model.save(&net_path, hash).unwrap();
    let (model_back, h) = ModelParams::<f64>::load(&net_path).unwrap();
    assert_eq!(h, hash);
    let x = &train_set[0].spec;
    let a = model.forward(x).unwrap();
    let b = model_back.forward(x).unwrap();
    assert_eq!(a.logit, b.logit, "loaded model must reproduce logits bitwise");
}
