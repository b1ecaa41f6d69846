//! Regenerate the bundled fixtures in `crates/core/fixtures/`.
//!
//! ```text
//! cargo run --example generate_fixture [-- <dir>]
//! ```

use std::fs;
use std::path::PathBuf;

use regiostat::panel::write_panel;
use regiostat::synthetic;
use regiostat::weights::{save_gal, GalHeader};
use regiostat::PathModel;
use serde_json::json;

const ROWS: usize = 8;
const COLS: usize = 11;
const SEED: u64 = 2024;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    fs::create_dir_all(&dir)?;

    // 88 municipalities in 7 microregions, 2009-2018, PIB not yet published for 2018
    let panel = synthetic::regional_panel(ROWS, COLS, 2009..=2018, SEED);
    let mut csv = Vec::new();
    write_panel(&panel, &mut csv, b',')?;
    fs::write(dir.join("panel.csv"), csv)?;

    let geo = synthetic::grid_geojson(ROWS, COLS);
    fs::write(dir.join("regions.geojson"), serde_json::to_string_pretty(&geo)? + "\n")?;

    let mut gal = Vec::new();
    let header = GalHeader {
        layer: Some("regions".into()),
        id_variable: Some("code".into()),
    };
    save_gal(&synthetic::grid_weights(ROWS, COLS, true), &header, &mut gal)?;
    fs::write(dir.join("regions.gal"), gal)?;

    let grid = synthetic::grid_geojson(3, 3);
    fs::write(dir.join("grid3x3.geojson"), serde_json::to_string_pretty(&grid)? + "\n")?;

    let mut model = serde_json::to_value(PathModel::default_regional())?;
    model["config"] = json!({"tolerance": 1e-7, "max_iterations": 300, "omission_distance": 7});
    fs::write(dir.join("model.json"), serde_json::to_string_pretty(&model)? + "\n")?;

    println!(
        "wrote {} regions x {} indicators x {} years to {}",
        panel.regions().len(),
        panel.indicators().len(),
        panel.years().len(),
        dir.display()
    );
    Ok(())
}
