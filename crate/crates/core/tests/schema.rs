//! The shipped JSON schema and example configs stay in step with the config types.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde_json::Value;

use magma::harness::{ExperimentConfig, ProblemConfig, SweepGrid};
use magma::optim::{BaseOptimizerConfig, MaskMode, MaskWrapperConfig};
use magma::problems::{Arrangement, IclConfig, QuadraticSpec, Tail};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn schema() -> Value {
    let text = std::fs::read_to_string(root().join("docs/config.schema.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn keys(v: &Value) -> BTreeSet<String> {
    v.as_object().unwrap().keys().cloned().collect()
}

fn schema_keys(def: &Value) -> BTreeSet<String> {
    keys(&def["properties"])
}

#[test]
fn schema_properties_match_serialized_configs() {
    let s = schema();
    let defs = &s["$defs"];

    let mut cfg = ExperimentConfig::new(
        ProblemConfig::Quadratic(QuadraticSpec::benchmark(Arrangement::Heterogeneous, 0)),
        BaseOptimizerConfig::adamw(1e-3, 0.0),
        10,
    )
    .with_wrapper(MaskWrapperConfig::new(MaskMode::Magma));
    cfg.wrapper.fixed_scale = Some(0.5);
    let v = serde_json::to_value(&cfg).unwrap();
    assert_eq!(keys(&v), schema_keys(&s));
    assert_eq!(keys(&v["problem"]["quadratic"]), schema_keys(&defs["quadratic"]));
    assert_eq!(keys(&v["optimizer"]), schema_keys(&defs["optimizer"]));
    assert_eq!(keys(&v["wrapper"]), schema_keys(&defs["wrapper"]));
    assert_eq!(keys(&v["diagnostics"]), schema_keys(&defs["diagnostics"]));

    let icl = serde_json::to_value(ProblemConfig::Icl(IclConfig::new(Tail::Heavy))).unwrap();
    assert_eq!(keys(&icl["icl"]), schema_keys(&defs["icl"]));

    let grid = SweepGrid { seeds: Some(vec![0]), ..SweepGrid::default() };
    assert_eq!(keys(&serde_json::to_value(&grid).unwrap()), schema_keys(&defs["sweep_grid"]));
}

#[test]
fn shipped_configs_load() {
    let mut seen = 0;
    for entry in std::fs::read_dir(root().join("configs")).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if name.starts_with("grid_") {
            let grid = SweepGrid::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(!grid.expand(&ExperimentConfig::load(root().join("configs/quadratic_magma.json")).unwrap()).unwrap().is_empty());
        } else {
            ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        seen += 1;
    }
    assert!(seen >= 6);
}
