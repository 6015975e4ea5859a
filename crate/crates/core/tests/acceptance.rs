//! Acceptance suite. Each test prints one `PASS`/`FAIL` line with the measured
//! values to stderr, then asserts.
//!
//! Run with `cargo test --release -p magma --test acceptance`.

use std::io::Write;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use magma::diagnostics::EIGEN_FLOOR;
use magma::harness::verify::{
    descent_audit_min_slack, prop1_exactness, quadratic_gradient_error, remainder_exponent,
    skip_unbiasedness, transformer_gradient_error, PAIRS, UNBIASED_TOL,
};
use magma::harness::{run_experiment, sweep, ExperimentConfig, ProblemConfig, SweepGrid, SweepRow, SweepTable};
use magma::optim::{BaseOptimizerConfig, MaskMode, MaskWrapperConfig};
use magma::problems::{Arrangement, IclConfig, QuadraticSpec, Tail};

const LR_GRID: [f64; 5] = [1e-4, 5e-4, 1e-3, 5e-3, 1e-2];
const SEEDS: std::ops::Range<u64> = 0..10;
const QUADRATIC_STEPS: usize = 2000;
const ICL_STEPS: usize = 5000;
const ICL_BATCH: usize = 32;

fn report(id: u32, name: &str, pass: bool, detail: String, started: Instant) -> bool {
    let verdict = if pass { "PASS" } else { "FAIL" };
    // Written to the raw handle so the line shows without `--nocapture`.
    let line = format!("criterion {id:>2} {verdict} {name}: {detail} [{:.1}s]\n", started.elapsed().as_secs_f64());
    let _ = std::io::stderr().write_all(line.as_bytes());
    pass
}

fn fmt_row(r: &SweepRow) -> String {
    format!("{:.4e} @ lr {:e}", r.score(), r.learning_rate)
}

/// AdamW with and without Magma over the learning-rate grid on both quadratics.
fn quadratic_sweep() -> &'static SweepTable {
    static TABLE: OnceLock<SweepTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let template = ExperimentConfig::new(
            ProblemConfig::Quadratic(QuadraticSpec::benchmark(Arrangement::Heterogeneous, 0)),
            BaseOptimizerConfig::adamw(1e-3, 0.0),
            QUADRATIC_STEPS,
        )
        .with_wrapper(MaskWrapperConfig::magma(2.0))
        .with_seeds(SEEDS);
        let grid = SweepGrid {
            learning_rate: LR_GRID.to_vec(),
            mode: vec![MaskMode::None, MaskMode::Magma],
            arrangement: vec![Arrangement::Homogeneous, Arrangement::Heterogeneous],
            ..SweepGrid::default()
        };
        sweep(&template, &grid).expect("quadratic sweep")
    })
}

fn best(table: &SweepTable, mode: MaskMode, arrangement: Arrangement) -> &SweepRow {
    table
        .best(|r| r.status == "ok" && r.mode == mode && r.arrangement == Some(arrangement))
        .expect("non-empty cell set")
}

#[test]
fn c01_masked_loss_matches_regularizer_exactly() {
    let t = Instant::now();
    let worst = prop1_exactness(0).unwrap();
    let pass = worst <= 1e-10;
    let detail = format!("max |enum - formula|/(1+|l|) = {worst:.3e} over {PAIRS} pairs x 3 p x 2 problems");
    assert!(report(1, "masked-loss regularizer exactness", pass, detail, t));
}

#[test]
fn c02_remainder_is_cubic() {
    let t = Instant::now();
    let slope = remainder_exponent(0.01).unwrap();
    let pass = (2.7..=3.3).contains(&slope);
    assert!(report(2, "remainder order", pass, format!("fitted exponent {slope:.4}"), t));
}

#[test]
fn c03_skip_update_is_unbiased() {
    let t = Instant::now();
    let worst = skip_unbiasedness().unwrap();
    let pass = worst <= UNBIASED_TOL;
    let detail = format!("max relative deviation {worst:.3e} (tolerance {UNBIASED_TOL:.3e})");
    assert!(report(3, "skip-update unbiasedness", pass, detail, t));
}

#[test]
fn c04_gradients_match_finite_differences() {
    let t = Instant::now();
    let quad = quadratic_gradient_error().unwrap();
    let lt = transformer_gradient_error(PAIRS).unwrap();
    let pass = quad <= 1e-6 && lt <= 1e-5;
    let detail = format!("quadratic {quad:.3e} (<= 1e-6), transformer {lt:.3e} (<= 1e-5)");
    assert!(report(4, "gradient oracles", pass, detail, t));
}

#[test]
fn c05_descent_inequality_holds_every_step() {
    let t = Instant::now();
    let slack = descent_audit_min_slack(1000).unwrap();
    let pass = slack >= -1e-8;
    assert!(report(5, "descent audit", pass, format!("min slack {slack:.3e}"), t));
}

#[test]
fn c06_magma_beats_adamw_on_heterogeneous_quadratic() {
    let t = Instant::now();
    let table = quadratic_sweep();
    let het_adam = best(table, MaskMode::None, Arrangement::Heterogeneous);
    let het_magma = best(table, MaskMode::Magma, Arrangement::Heterogeneous);
    let hom_adam = best(table, MaskMode::None, Arrangement::Homogeneous);
    let hom_magma = best(table, MaskMode::Magma, Arrangement::Homogeneous);
    let ordered = het_magma.score() < het_adam.score();
    let ratio = hom_adam.score().max(hom_magma.score()) / hom_adam.score().min(hom_magma.score());
    let comparable = ratio < 2.0;
    let detail = format!(
        "heterogeneous adamw {} vs magma {} ({}); homogeneous adamw {} vs magma {} (ratio {ratio:.3e}, < 2)",
        fmt_row(het_adam),
        fmt_row(het_magma),
        if ordered { "ordered" } else { "not ordered" },
        fmt_row(hom_adam),
        fmt_row(hom_magma),
    );
    assert!(report(6, "heterogeneous quadratic ordering", ordered && comparable, detail, t));
}

fn icl_template(tail: Tail) -> ExperimentConfig {
    let mut icl = IclConfig::new(tail);
    icl.batch_size = ICL_BATCH;
    let mut cfg = ExperimentConfig::new(ProblemConfig::Icl(icl), BaseOptimizerConfig::adam(1e-3), ICL_STEPS)
        .with_wrapper(MaskWrapperConfig::magma(2.0))
        .with_seeds(SEEDS);
    cfg.trace_stride = 500;
    cfg
}

/// Pooled robust condition numbers along the trajectories of `cfg`.
fn median_condition(cfg: &ExperimentConfig, lr: f64, mode: MaskMode) -> f64 {
    let mut cfg = cfg.clone();
    cfg.optimizer.learning_rate = lr;
    cfg.wrapper.mode = mode;
    cfg.diagnostics.condition_number = true;
    cfg.diagnostics.condition_stride = 500;
    cfg.diagnostics.hessian_batch = 64;
    let mut values: Vec<f64> = SEEDS
        .flat_map(|s| run_experiment(&cfg, s).expect("icl run").trace.records)
        .filter_map(|r| r.condition_number)
        .collect();
    values.sort_by(f64::total_cmp);
    values[values.len() / 2]
}

#[test]
fn c07_magma_beats_adam_under_heavy_tails() {
    let t = Instant::now();
    let grid = SweepGrid {
        learning_rate: LR_GRID.to_vec(),
        mode: vec![MaskMode::None, MaskMode::Magma],
        tail: vec![Tail::Light, Tail::Heavy],
        ..SweepGrid::default()
    };
    let template = icl_template(Tail::Heavy);
    let table = sweep(&template, &grid).expect("icl sweep");
    let pick = |mode, tail| {
        table
            .best(|r| r.status == "ok" && r.mode == mode && r.tail == Some(tail))
            .expect("non-empty cell set")
    };
    let (heavy_adam, heavy_magma) = (pick(MaskMode::None, Tail::Heavy), pick(MaskMode::Magma, Tail::Heavy));
    let (light_adam, light_magma) = (pick(MaskMode::None, Tail::Light), pick(MaskMode::Magma, Tail::Light));
    let ordered = heavy_magma.score() < heavy_adam.score();
    let ratio = light_adam.score().max(light_magma.score()) / light_adam.score().min(light_magma.score());
    let comparable = ratio < 1.5;
    let cond_adam = median_condition(&template, heavy_adam.learning_rate, MaskMode::None);
    let cond_magma = median_condition(&template, heavy_magma.learning_rate, MaskMode::Magma);
    let conditioned = cond_magma <= cond_adam;
    // A median at or below the eigenvalue floor pins the ratio to 1/floor.
    let pinned = (1.0 - 1e-9) / EIGEN_FLOOR;
    let floored = if cond_adam >= pinned && cond_magma >= pinned { " (both at the eigenvalue floor)" } else { "" };
    let detail = format!(
        "heavy adam {} vs magma {}; light adam {} vs magma {} (ratio {ratio:.3}, < 1.5); \
         heavy median condition adam {cond_adam:.4e} vs magma {cond_magma:.4e}{floored}",
        fmt_row(heavy_adam),
        fmt_row(heavy_magma),
        fmt_row(light_adam),
        fmt_row(light_magma),
    );
    assert!(report(7, "heavy-tailed icl ordering", ordered && comparable && conditioned, detail, t));
}

#[test]
fn c08_sparse_moments_are_worse() {
    let t = Instant::now();
    let lr = best(quadratic_sweep(), MaskMode::Magma, Arrangement::Heterogeneous).learning_rate;
    let template = ExperimentConfig::new(
        ProblemConfig::Quadratic(QuadraticSpec::benchmark(Arrangement::Heterogeneous, 0)),
        BaseOptimizerConfig::adamw(lr, 0.0),
        QUADRATIC_STEPS,
    )
    .with_wrapper(MaskWrapperConfig::magma(2.0))
    .with_seeds(SEEDS);
    let grid = SweepGrid { dense_moments: vec![true, false], ..SweepGrid::default() };
    let table = sweep(&template, &grid).expect("moment sweep");
    let dense = table.best(|r| r.dense_moments).unwrap();
    let sparse = table.best(|r| !r.dense_moments).unwrap();
    let pass = sparse.score() > dense.score() || sparse.diverged_runs >= 1;
    let detail = format!(
        "lr {lr:e}: dense {:.4e}, sparse {:.4e}, sparse diverged {}/10",
        dense.score(),
        sparse.score(),
        sparse.diverged_runs,
    );
    assert!(report(8, "dense-moment ablation", pass, detail, t));
}

#[test]
fn c09_magma_tolerates_larger_learning_rates() {
    let t = Instant::now();
    let table = quadratic_sweep();
    let largest = |mode| {
        table
            .rows
            .iter()
            .filter(|r| r.mode == mode && r.arrangement == Some(Arrangement::Heterogeneous) && r.is_stable())
            .map(|r| r.learning_rate)
            .fold(0.0, f64::max)
    };
    let (adam, magma) = (largest(MaskMode::None), largest(MaskMode::Magma));
    let pass = magma >= adam && magma > 0.0;
    let detail = format!("largest stable lr adamw {adam:e}, magma {magma:e}");
    assert!(report(9, "learning-rate robustness", pass, detail, t));
}

#[test]
fn c10_cli_is_deterministic_and_verify_passes() {
    let t = Instant::now();
    let bin = env!("CARGO_BIN_EXE_magma");
    let cfg = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/quadratic_magma.json");
    let dir = tempfile::tempdir().unwrap();
    let mut traces = Vec::new();
    for name in ["first", "second"] {
        let out = dir.path().join(name);
        let status = Command::new(bin)
            .args(["run", "--seed", "7", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap()
            .status;
        assert!(status.success());
        traces.push(std::fs::read(out.join("trace_seed7.csv")).unwrap());
    }
    let identical = traces[0] == traces[1] && !traces[0].is_empty();
    let verify = Command::new(bin).arg("verify").output().unwrap();
    let verified = verify.status.code() == Some(0);
    let detail = format!(
        "traces {} ({} bytes); verify exit {:?}",
        if identical { "byte-identical" } else { "differ" },
        traces[0].len(),
        verify.status.code(),
    );
    assert!(report(10, "determinism", identical && verified, detail, t));
}
