//! Global Moran's I with a permutation test and univariate LISA clusters,
//! merged back onto the polygons.
//!
//! ```text
//! cargo run --example moran_and_lisa [-- INDICATOR YEAR]
//! ```

use std::fs::{self, File};
use std::io::BufReader;
use std::path::PathBuf;

use regiostat::autocorr::{lisa_classify, merge_geojson, moran_permutation};
use regiostat::panel::{load_panel, standardize, PanelSchema};
use regiostat::rng::stage_seed;
use regiostat::weights::{load_geojson, queen_contiguity};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let indicator = args.next().unwrap_or_else(|| "TIC".into());
    let year: i32 = args.next().map_or(Ok(2009), |y| y.parse())?;

    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let z = standardize(&load_panel(File::open(dir.join("panel.csv"))?, &PanelSchema::default())?)?;
    let regions = load_geojson(BufReader::new(File::open(dir.join("regions.geojson"))?), "code")?;
    let weights = queen_contiguity(&regions)?;

    let codes: Vec<String> = z.regions().iter().map(|r| r.code.clone()).collect();
    let order = weights.align(&codes)?;
    let column = z.column(&indicator, year)?;
    let values: Vec<f64> = order.iter().map(|&r| column[r].unwrap_or(f64::NAN)).collect();

    let slice = format!("{indicator}/{year}");
    let g = moran_permutation(&values, &weights, 9999, stage_seed(stage_seed(42, "moran"), &slice))?;
    println!(
        "{indicator} {year}: I = {:.4}, E[I] = {:.4}, pseudo p = {:.4} ({} permutations)",
        g.i,
        g.expected,
        g.pseudo_p.unwrap_or(f64::NAN),
        g.n_permutations
    );

    let thresholds = [0.05, 0.01, 0.001];
    let lisa = lisa_classify(&values, &weights, 9999, stage_seed(stage_seed(42, "lisa"), &slice), &thresholds)?;
    let mut counts = std::collections::BTreeMap::new();
    for r in &lisa.records {
        let key = match (r.quadrant, r.pseudo_p) {
            (Some(q), Some(p)) if p <= 0.05 => format!("{q:?}"),
            _ => "ns".into(),
        };
        *counts.entry(key).or_insert(0) += 1;
    }
    println!("clusters at p <= 0.05: {counts:?}");

    let geo: serde_json::Value = serde_json::from_reader(BufReader::new(File::open(dir.join("regions.geojson"))?))?;
    let out = std::env::temp_dir().join(format!("lisa_{indicator}_{year}.geojson"));
    fs::write(&out, serde_json::to_string(&merge_geojson(&geo, "code", &lisa))?)?;
    println!("map written to {}", out.display());
    Ok(())
}
