//! Bivariate LISA: does a region's technology index sit next to high
//! output per capita?
//!
//! ```text
//! cargo run --example bivariate_lisa [-- X Y YEAR]
//! ```

use std::fs::File;
use std::path::PathBuf;

use regiostat::autocorr::bivariate_local_moran;
use regiostat::panel::{load_panel, standardize, PanelSchema};
use regiostat::rng::stage_seed;
use regiostat::synthetic;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let x_name = args.next().unwrap_or_else(|| "TIC".into());
    let y_name = args.next().unwrap_or_else(|| "PIB".into());
    let year: i32 = args.next().map_or(Ok(2017), |y| y.parse())?;

    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let z = standardize(&load_panel(File::open(dir.join("panel.csv"))?, &PanelSchema::default())?)?;
    // the bundled panel lies on an 8 x 11 lattice
    let weights = synthetic::grid_weights(8, 11, true);
    let codes: Vec<String> = z.regions().iter().map(|r| r.code.clone()).collect();
    let order = weights.align(&codes)?;
    let pick = |name: &str| -> Result<Vec<f64>, Box<dyn std::error::Error>> {
        let col = z.column(name, year)?;
        Ok(order.iter().map(|&r| col[r].unwrap_or(f64::NAN)).collect())
    };
    let (x, y) = (pick(&x_name)?, pick(&y_name)?);

    let seed = stage_seed(stage_seed(42, "lisa"), &format!("{x_name}~{y_name}/{year}"));
    let result = bivariate_local_moran(&x, &y, &weights, 9999, seed, &[0.05, 0.01, 0.001])?;
    println!("{x_name} against lagged {y_name}, {year}: {} regions", result.n_used);
    for r in result.records.iter().filter(|r| r.pseudo_p.is_some_and(|p| p <= 0.01)) {
        println!(
            "  {:<6} I = {:>7.3}  p = {:.4}  {:?}  {}",
            r.id,
            r.local_i.unwrap_or(f64::NAN),
            r.pseudo_p.unwrap(),
            r.quadrant.unwrap(),
            r.significance.label()
        );
    }
    Ok(())
}
