//! Every stage on the bundled fixtures into one directory tree, then a
//! check of the manifests.
//!
//! ```text
//! cargo run --example pipeline [-- OUT_DIR]
//! ```

use std::path::PathBuf;

use regiostat::report::{cmd_pipeline, validate_bundle, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("regiostat-pipeline"));
    let cfg = PipelineConfig {
        panel: Some(fixtures.join("panel.csv")),
        geometry: Some(fixtures.join("regions.geojson")),
        model: Some(fixtures.join("model.json")),
        permutations: 999,
        bootstrap: Some(1000),
        out: out.clone(),
        ..PipelineConfig::default()
    };
    let report = cmd_pipeline(&cfg)?;
    for s in &report.stages {
        println!("{:<16} {:?}", s.stage, s.status);
    }
    let problems = validate_bundle(&out)?;
    println!("{} in {}; {} manifest problems", if report.completed { "complete" } else { "incomplete" }, out.display(), problems.len());
    Ok(())
}
