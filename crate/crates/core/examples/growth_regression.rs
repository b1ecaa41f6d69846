//! Simple regressions by microregion and a Cobb-Douglas production function
//! fitted to output per capita.
//!
//! ```text
//! cargo run --example growth_regression
//! ```

use std::fs::File;
use std::path::PathBuf;

use regiostat::growth::{cobb_douglas_eval, cobb_douglas_fit, group_ols, p_display, Grouping};
use regiostat::panel::{derive_ratio, load_panel, standardize, PanelSchema};
use regiostat::CobbDouglasMode;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/panel.csv");
    let raw = load_panel(File::open(path)?, &PanelSchema::default())?;
    let z = standardize(&raw)?;

    let pairs = [("IUPP".to_string(), "TIC".to_string())];
    let years = raw.years().to_vec();
    println!("IUPP -> TIC by microregion (first year)");
    for r in group_ols(&z, Grouping::Microregion, &pairs, &years)?.iter().filter(|r| r.year == years[0]) {
        match (r.slope, r.r_squared, r.p_value) {
            (Some(b), Some(r2), Some(p)) => println!("  {:<6} n={:>3} slope={b:>7.3} R²={r2:.3} p={}", r.group, r.n, p_display(p)),
            _ => println!("  {:<6} {}", r.group, r.reason.as_deref().unwrap_or("")),
        }
    }

    let with_y = derive_ratio(&raw, "PIB", "POB", "PIB_per_POB")?;
    let (mut y, mut a, mut k) = (Vec::new(), Vec::new(), Vec::new());
    for &year in with_y.years() {
        let (cy, ca, ck) = (
            with_y.column("PIB_per_POB", year)?,
            with_y.column("TIC", year)?,
            with_y.column("IUPP", year)?,
        );
        for r in 0..cy.len() {
            if let (Some(yv), Some(av), Some(kv)) = (cy[r], ca[r], ck[r]) {
                if yv > 0.0 && av > 0.0 && kv > 0.0 {
                    y.push(yv);
                    a.push(av);
                    k.push(kv);
                }
            }
        }
    }
    let fit = cobb_douglas_fit(&y, &a, &k)?;
    println!(
        "\nCobb-Douglas on {} region-years: alpha = {:.4}, scale = {:.4}, R² = {:.3}, unconstrained returns to scale = {:.3}",
        fit.n, fit.alpha, fit.scale, fit.r_squared, fit.unconstrained.returns_to_scale
    );
    let alpha = fit.alpha.clamp(0.0, 1.0);
    for mode in [CobbDouglasMode::Canonical, CobbDouglasMode::Product, CobbDouglasMode::AsPublished] {
        let out = cobb_douglas_eval(&a[..3], &k[..3], alpha, mode)?;
        println!("  {mode:?}: {:.4?}", out);
    }
    Ok(())
}
