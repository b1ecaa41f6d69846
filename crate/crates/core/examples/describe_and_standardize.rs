//! Descriptive statistics, per indicator-year z-scores, the 75th percentile
//! split and the microregion table for the bundled panel.
//!
//! ```text
//! cargo run --example describe_and_standardize [-- panel.csv]
//! ```

use std::fs::File;
use std::path::PathBuf;

use regiostat::panel::{self, load_panel, PanelSchema, RegionRowMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/panel.csv"));
    let raw = load_panel(File::open(&path)?, &PanelSchema::default())?;
    println!(
        "{} regions, {} indicators, {} years: {} of {} cells observed",
        raw.regions().len(),
        raw.indicators().len(),
        raw.years().len(),
        raw.observed_cells(),
        raw.total_cells()
    );

    println!("\n{:<8} {:>6} {:>12} {:>12} {:>12} {:>12}", "", "year", "mean", "sd", "min", "max");
    for ind in raw.indicators() {
        for &year in [raw.years()[0], *raw.years().last().unwrap()].iter() {
            match panel::describe(&raw, ind, year) {
                Ok(s) => println!("{ind:<8} {year:>6} {:>12.3} {:>12.3} {:>12.3} {:>12.3}", s.mean, s.sd, s.min, s.max),
                Err(e) => println!("{ind:<8} {year:>6} {e}"),
            }
        }
    }

    let z = panel::standardize(&raw)?;
    let year = raw.years()[0];
    let tic = z.column("TIC", year)?;
    let top = tic
        .iter()
        .enumerate()
        .filter_map(|(r, v)| v.map(|v| (r, v)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    println!("\nhighest TIC z-score in {year}: {} at {:.3}", raw.regions()[top.0].code, top.1);

    let split = panel::classify_percentile(&raw, "TIC", year, 75.0)?;
    println!("TIC {year}: {} regions above the 75th percentile ({:.3})", split.above.len(), split.threshold);

    let table = panel::microregion_table(&raw, "TIC", RegionRowMode::Capital)?;
    println!("\nTIC z-score of each microregion seat");
    for row in &table.rows {
        let first = row.values.first().copied().flatten().map_or("-".into(), |v| format!("{v:.3}"));
        let last = row.values.last().copied().flatten().map_or("-".into(), |v| format!("{v:.3}"));
        println!("  {:<6} {:<6} {first:>8} .. {last:>8}", row.microregion, row.region.as_deref().unwrap_or("-"));
    }
    Ok(())
}
