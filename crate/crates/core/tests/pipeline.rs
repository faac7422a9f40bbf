use std::fs;
use std::path::Path;

use moisture_core::grid::read_ascii_grid;
use moisture_core::models::FeatureMode;
use moisture_core::pipeline::{
    load_config, run_pipeline, FineSpec, Method, PipelineConfig, RetentionRule, RetentionSetting,
};
use moisture_core::synth::{make_scenario, write_scenario, ScenarioParams};

fn small_scenario(dir: &Path, seed: u64) -> PipelineConfig {
    let params = ScenarioParams {
        seed,
        fine_shape: (40, 40),
        coarse_factor: 4,
        n_covariates: 4,
        ..ScenarioParams::default()
    };
    write_scenario(&make_scenario(&params).unwrap(), dir).unwrap();
    load_config(dir.join("config.json")).unwrap()
}

fn prediction_bytes(cfg: &PipelineConfig) -> Vec<u8> {
    run_pipeline(cfg).unwrap();
    fs::read(cfg.output_dir.join("prediction.asc")).unwrap()
}

#[test]
fn nearest_neighbour_at_coarse_resolution_reproduces_observed() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_scenario(dir.path(), 3);
    cfg.k = Some(1);
    cfg.fine = FineSpec::Refine(1);
    cfg.region = None;
    cfg.output_dir = dir.path().join("out");
    let out = run_pipeline(&cfg).unwrap();
    let observed = read_ascii_grid(dir.path().join("observed.asc")).unwrap();
    for (r, c, v) in observed.data_cells() {
        assert_eq!(out.prediction.value(r, c), Some(v));
    }
    assert_eq!(out.report.rmse, Some(0.0));
}

#[test]
fn full_pca_does_not_change_coordinate_knn() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_scenario(dir.path(), 4);
    cfg.feature_space = Some(FeatureMode::Coords);
    cfg.output_dir = dir.path().join("plain");
    let plain = prediction_bytes(&cfg);
    cfg.pca = true;
    cfg.pca_retention = RetentionSetting::Rule(RetentionRule::All);
    cfg.output_dir = dir.path().join("pca");
    assert_eq!(prediction_bytes(&cfg), plain);
    assert!(cfg.output_dir.join("pca.csv").exists());
}

#[test]
fn manifest_config_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_scenario(dir.path(), 5);
    cfg.method = Method::Rf;
    cfg.ntree = 30;
    cfg.seed = 11;
    cfg.output_dir = dir.path().join("first");
    let first = run_pipeline(&cfg).unwrap();
    let mut again: PipelineConfig =
        serde_json::from_value(first.manifest["config"].clone()).unwrap();
    assert_eq!(again, cfg);
    again.output_dir = dir.path().join("second");
    let second = run_pipeline(&again).unwrap();
    assert_eq!(first.prediction, second.prediction);
    for name in ["prediction.asc", "forest.txt", "metrics.txt"] {
        assert_eq!(
            fs::read(cfg.output_dir.join(name)).unwrap(),
            fs::read(again.output_dir.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn training_set_grows_with_buffer() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_scenario(dir.path(), 6);
    let mut last = 0;
    for (i, km) in [0.0, 20.0, 60.0, 200.0].into_iter().enumerate() {
        cfg.buffer_km = km;
        cfg.output_dir = dir.path().join(format!("b{i}"));
        let out = run_pipeline(&cfg).unwrap();
        assert!(out.training_size >= last, "buffer {km}");
        last = out.training_size;
    }
    let observed = read_ascii_grid(dir.path().join("observed.asc")).unwrap();
    assert_eq!(last, observed.data_count());
}

#[test]
fn constant_local_model_matches_knn() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_scenario(dir.path(), 7);
    cfg.k = Some(8);
    cfg.feature_space = Some(FeatureMode::Coords);
    cfg.output_dir = dir.path().join("knn");
    let knn = prediction_bytes(&cfg);
    cfg.method = Method::Hyppo;
    cfg.max_degree = 0;
    cfg.output_dir = dir.path().join("hyppo");
    assert_eq!(prediction_bytes(&cfg), knn);
}
