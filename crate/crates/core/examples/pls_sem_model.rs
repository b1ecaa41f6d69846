//! Reflective PLS path model: loadings, reliability, discriminant validity,
//! VIF, bootstrap significance and blindfolded Q².
//!
//! ```text
//! cargo run --example pls_sem_model
//! ```

use regiostat::pls::{
    blindfold_q2, bootstrap_paths, discriminant_validity, fit_pls, measurement_quality, structural_collinearity, FitConfig,
};
use regiostat::synthetic;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (model, data) = synthetic::regional_model_data(400, 11);
    let cfg = FitConfig::default();
    let est = fit_pls(&model, &data, &cfg)?;
    println!("converged in {} iterations on {} rows", est.iterations, est.n_observations);

    println!("\nouter loadings");
    for i in &est.indicators {
        println!("  {:<4} {:<8} {:>6.3}", i.construct, i.indicator, i.loading);
    }

    println!("\nreliability      alpha     CR    AVE");
    for c in measurement_quality(&est, &data)?.constructs {
        println!("  {:<12} {:>7.3} {:>6.3} {:>6.3}", c.construct, c.cronbach_alpha, c.composite_reliability, c.ave);
    }

    let dv = discriminant_validity(&est, &data)?;
    println!("\nHTMT");
    for (i, row) in dv.htmt.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| v.map_or("   -  ".into(), |v| format!("{v:>6.3}"))).collect();
        println!("  {:<4} {}", dv.constructs[i], cells.join(" "));
    }

    for v in structural_collinearity(&model, &est) {
        println!("VIF {} -> {}: {:?}", v.predictor, v.endogenous, v.vif);
    }

    let boot = bootstrap_paths(&model, &data, &est, 5000, 42, &cfg)?;
    println!("\npath           beta     se      t        95% CI");
    for e in &boot.edges {
        println!(
            "  {:>3} -> {:<4} {:>6.3} {:>6.3} {:>7.2}  [{:.3}, {:.3}]",
            e.from, e.to, e.original, e.std_error, e.t, e.ci_low, e.ci_high
        );
    }
    for r in &est.r_squared {
        println!("R² {} = {:.3}", r.construct, r.r_squared);
    }
    for q in blindfold_q2(&model, &data, 7, &cfg)? {
        println!("Q² {} = {:.3}", q.construct, q.q2);
    }
    Ok(())
}
