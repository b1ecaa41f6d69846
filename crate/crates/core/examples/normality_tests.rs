//! Shapiro-Wilk and Ryan-Joiner on every indicator-year of the panel.
//!
//! ```text
//! cargo run --example normality_tests
//! ```

use std::fs::File;
use std::path::PathBuf;

use regiostat::normality::{ryan_joiner, shapiro_wilk};
use regiostat::panel::{load_panel, PanelSchema};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/panel.csv");
    let raw = load_panel(File::open(path)?, &PanelSchema::default())?;
    let alpha = 0.05;
    println!("{:<8} {:>5} {:>4}  {:>7} {:>10}  {:>7} {:>10}", "", "year", "n", "W", "p", "RJ", "p");
    let mut rejected = 0;
    let mut total = 0;
    for ind in raw.indicators() {
        for &year in raw.years() {
            let values = raw.cross_section(ind, year)?.values;
            if values.is_empty() {
                continue;
            }
            let (sw, rj) = (shapiro_wilk(&values, alpha), ryan_joiner(&values, alpha));
            match (sw, rj) {
                (Ok(sw), Ok(rj)) => {
                    total += 1;
                    rejected += usize::from(sw.decision == regiostat::normality::Decision::RejectNormality);
                    println!(
                        "{ind:<8} {year:>5} {:>4}  {:>7.4} {:>10}  {:>7.4} {:>10}",
                        sw.n,
                        sw.statistic,
                        sw.p_display(),
                        rj.statistic,
                        rj.p_display()
                    );
                }
                (Err(e), _) | (_, Err(e)) => println!("{ind:<8} {year:>5} {e}"),
            }
        }
    }
    println!("\nShapiro-Wilk rejects normality at {alpha} in {rejected} of {total} cross-sections");
    Ok(())
}
