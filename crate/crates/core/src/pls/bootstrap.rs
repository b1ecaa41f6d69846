//! Bootstrap inference for path coefficients.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{fit_inner, FitConfig, PathEstimates, PathModel, PlsData, PlsError, Result};
use crate::{rng, stats};

pub const MIN_RESAMPLES: usize = 500;
/// Redraws allowed for a single resample before giving up.
const MAX_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapEdge {
    pub from: String,
    pub to: String,
    pub original: f64,
    pub mean: f64,
    pub std_error: f64,
    pub t: f64,
    /// Two-tailed, t reference with `B - 1` degrees of freedom.
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapReport {
    pub resamples: usize,
    pub seed: u64,
    /// Resamples that failed to fit and were drawn again.
    pub redrawn: usize,
    pub confidence: f64,
    pub edges: Vec<BootstrapEdge>,
}

/// Resample observations with replacement `resamples` times, refit, and
/// summarize each path coefficient.
///
/// Each resample's constructs are sign-aligned with `original` by the sign of
/// the dot product of their loadings, so arbitrary score flips do not
/// inflate the standard errors.
pub fn bootstrap_paths(
    model: &PathModel,
    data: &PlsData,
    original: &PathEstimates,
    resamples: usize,
    seed: u64,
    config: &FitConfig,
) -> Result<BootstrapReport> {
    if resamples < MIN_RESAMPLES {
        return Err(PlsError::InvalidParameter(format!(
            "bootstrap needs at least {MIN_RESAMPLES} resamples, got {resamples}"
        )));
    }
    let n = data.n();
    let draws: Vec<(Vec<f64>, usize)> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            for attempt in 0..MAX_ATTEMPTS {
                let mut r = rng::stream(seed, attempt as u64, b as u64);
                let rows: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
                let Ok(fit) = fit_inner(model, &data.select_rows(&rows), config) else {
                    continue;
                };
                let est = fit.estimates;
                let sign: Vec<f64> = est
                    .constructs
                    .iter()
                    .map(|c| {
                        let dot: f64 = est
                            .loadings_of(c)
                            .iter()
                            .zip(original.loadings_of(c))
                            .map(|(a, b)| a * b)
                            .sum();
                        if dot < 0.0 {
                            -1.0
                        } else {
                            1.0
                        }
                    })
                    .collect();
                let betas = original
                    .paths
                    .iter()
                    .map(|p| {
                        let from = est.constructs.iter().position(|c| *c == p.from).expect("construct");
                        let to = est.constructs.iter().position(|c| *c == p.to).expect("construct");
                        est.beta(&p.from, &p.to).expect("same model") * sign[from] * sign[to]
                    })
                    .collect();
                return Ok((betas, attempt));
            }
            Err(PlsError::Resampling {
                draw: b,
                failures: MAX_ATTEMPTS,
            })
        })
        .collect::<Result<_>>()?;

    let redrawn = draws.iter().map(|d| d.1).sum();
    let df = (resamples - 1) as f64;
    let confidence = 0.95;
    let edges = original
        .paths
        .iter()
        .enumerate()
        .map(|(e, p)| {
            let sample: Vec<f64> = draws.iter().map(|d| d.0[e]).collect();
            let se = stats::sample_sd(&sample);
            let t = p.beta / se;
            let sorted = stats::sorted(&sample);
            let tail = (1.0 - confidence) / 2.0;
            BootstrapEdge {
                from: p.from.clone(),
                to: p.to.clone(),
                original: p.beta,
                mean: stats::mean(&sample),
                std_error: se,
                t,
                p_value: stats::t_two_tailed(t, df),
                ci_low: stats::quantile_type7_sorted(&sorted, tail),
                ci_high: stats::quantile_type7_sorted(&sorted, 1.0 - tail),
            }
        })
        .collect();
    Ok(BootstrapReport {
        resamples,
        seed,
        redrawn,
        confidence,
        edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pls::fit_pls;
    use crate::synthetic;

    #[test]
    fn strong_path_is_significant_and_deterministic() {
        let (model, data) = synthetic::two_construct(200, &[0.9, 0.8, 0.7], 0.6, 4);
        let cfg = FitConfig::default();
        let est = fit_pls(&model, &data, &cfg).unwrap();
        let a = bootstrap_paths(&model, &data, &est, 500, 17, &cfg).unwrap();
        let b = bootstrap_paths(&model, &data, &est, 500, 17, &cfg).unwrap();
        assert_eq!(a, b);
        let e = &a.edges[0];
        assert!(e.t > 5.0 && e.p_value < 1e-6);
        assert!(e.ci_low < e.original && e.original < e.ci_high);
    }

    #[test]
    fn too_few_resamples() {
        let (model, data) = synthetic::two_construct(50, &[0.9, 0.8, 0.7], 0.6, 4);
        let est = fit_pls(&model, &data, &FitConfig::default()).unwrap();
        assert!(matches!(
            bootstrap_paths(&model, &data, &est, 100, 1, &FitConfig::default()),
            Err(PlsError::InvalidParameter(_))
        ));
    }

    #[test]
    fn two_sided_critical_value_at_4999_df() {
        // the conventional 1.960 cut-off
        assert!((stats::t_two_tailed(1.960, 4999.0) - 0.05).abs() < 2e-4);
    }
}
