use std::path::Path;

use fedrank::config::{validate_scenario, ScenarioConfig};

#[test]
fn shipped_default_matches_builtin() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    let loaded = ScenarioConfig::load(&path, &[]).unwrap();
    assert_eq!(loaded, ScenarioConfig::default_scenario());
    validate_scenario(loaded).unwrap();
}

#[test]
fn tdrive_paths_resolve_against_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = validate_scenario(ScenarioConfig::default_scenario()).unwrap();
    let zones: Vec<_> = scenario.rsus.iter().map(|r| r.zone).collect();
    let trajs = fedrank::mobility::synth_trajectories(12, &zones, 9, &Default::default());
    fedrank::mobility::write_tdrive(&trajs, &dir.path().join("taxi"), fedrank::cli::TDRIVE_EPOCH).unwrap();
    let mut c = ScenarioConfig::default_scenario();
    c.mobility.source = fedrank::config::TrajectorySource::Tdrive { path: "taxi".into() };
    let file = dir.path().join("s.toml");
    std::fs::write(&file, c.to_toml().unwrap()).unwrap();
    let loaded = ScenarioConfig::load(&file, &[]).unwrap();
    let v = validate_scenario(loaded).unwrap();
    assert_eq!(v.vehicles.len(), 12);
}
