//! Keeps the checked-in experiment configs in sync with the scenario
//! builders. Regenerate with HARBOR_REGEN_CONFIGS=1.

use std::path::PathBuf;

use harbor_core::experiments::{
    bidder_count_sweep, competition_ladder, matched_items_sweep, persona_impact, tom_settings,
    ExperimentFile,
};

fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .parent()
        .and_then(|p| p.parent())
        .expect("workspace root")
        .to_path_buf()
}

#[test]
fn shipped_experiment_configs_match_builders() {
    let catalog = PathBuf::from("assets/catalog.json");
    let families: Vec<(&str, ExperimentFile)> = vec![
        ("persona_impact.json", persona_impact(catalog.clone())),
        ("competition_ladder.json", competition_ladder(catalog.clone())),
        ("matched_items_sweep.json", matched_items_sweep(catalog.clone())),
        ("bidder_count_sweep.json", bidder_count_sweep(catalog.clone())),
        ("tom_settings.json", tom_settings(catalog)),
    ];
    let regen = std::env::var("HARBOR_REGEN_CONFIGS").is_ok();
    for (file, experiment) in families {
        let path = repo_root().join("experiments").join(file);
        let expected = format!(
            "{}\n",
            serde_json::to_string_pretty(&experiment).expect("config serializes")
        );
        if regen {
            std::fs::write(&path, &expected).expect("write config");
        }
        let actual = std::fs::read_to_string(&path)
            .unwrap_or_else(|e| panic!("missing shipped config {file}: {e}"));
        assert_eq!(actual, expected, "{file} drifted from its builder");
        let parsed: ExperimentFile = serde_json::from_str(&actual).expect("config parses");
        assert_eq!(parsed, experiment);
    }
}
