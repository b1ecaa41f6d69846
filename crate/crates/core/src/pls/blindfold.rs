//! Stone-Geisser Q² by blindfolding (cross-validated redundancy).

use nalgebra::DMatrix;
use serde::Serialize;

use super::{column_mean_sd, fit_inner, FitConfig, PathModel, PlsData, PlsError, Result};

pub const DEFAULT_OMISSION_DISTANCE: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Q2Entry {
    pub construct: String,
    pub sso: f64,
    pub sse: f64,
    pub q2: f64,
    /// `q2 > 0`.
    pub predictive_relevance: bool,
}

/// Q² = 1 - SSE/SSO for each endogenous construct.
///
/// Cells of the construct's indicator block are numbered column by column
/// (`column * n + row`); round `d` omits every cell whose number is `d` mod
/// `D`, replaces it by its column mean, refits the model and predicts the
/// omitted cells from the predecessor scores through the path coefficients
/// and loadings. Errors are accumulated on the standardized scale of the
/// complete data.
pub fn blindfold_q2(model: &PathModel, data: &PlsData, omission_distance: usize, config: &FitConfig) -> Result<Vec<Q2Entry>> {
    let n = data.n();
    let d = omission_distance;
    if d < 2 {
        return Err(PlsError::InvalidParameter(format!("omission distance {d} must be at least 2")));
    }
    if n.is_multiple_of(d) {
        return Err(PlsError::InvalidParameter(format!(
            "omission distance {d} divides n = {n}; use {} or {}",
            d - 1,
            d + 1
        )));
    }
    let full = fit_inner(model, data, config)?;
    let mut out = Vec::new();
    for j in model.endogenous() {
        let block = &full.blocks[j];
        let preds = model.predecessors(j);
        let stats: Vec<(f64, f64)> = block
            .iter()
            .map(|&c| column_mean_sd(data.matrix().column(c).iter().copied()))
            .collect();
        let z = |r: usize, k: usize| (data.matrix()[(r, block[k])] - stats[k].0) / stats[k].1;
        let (mut sse, mut sso) = (0.0, 0.0);
        for round in 0..d {
            let omitted = |r: usize, k: usize| (k * n + r) % d == round;
            let mut x: DMatrix<f64> = data.matrix().clone();
            for (k, &c) in block.iter().enumerate() {
                let kept: Vec<f64> = (0..n).filter(|&r| !omitted(r, k)).map(|r| x[(r, c)]).collect();
                let fill = kept.iter().sum::<f64>() / kept.len() as f64;
                for r in (0..n).filter(|&r| omitted(r, k)) {
                    x[(r, c)] = fill;
                }
            }
            let fit = fit_inner(model, &data.with_matrix(x.clone()), config)?;
            let est = &fit.estimates;
            let name = &model.constructs()[j].name;
            let loadings = est.loadings_of(name);
            let betas: Vec<f64> = preds
                .iter()
                .map(|&p| est.beta(&model.constructs()[p].name, name).expect("edge"))
                .collect();
            for (k, &c) in block.iter().enumerate() {
                let (m_mod, sd_mod) = column_mean_sd(x.column(c).iter().copied());
                for r in (0..n).filter(|&r| omitted(r, k)) {
                    let y_hat: f64 = preds
                        .iter()
                        .zip(&betas)
                        .map(|(&p, b)| b * est.scores[(r, p)])
                        .sum();
                    let x_hat = m_mod + sd_mod * loadings[k] * y_hat;
                    let z_hat = (x_hat - stats[k].0) / stats[k].1;
                    let z_obs = z(r, k);
                    sse += (z_obs - z_hat).powi(2);
                    sso += z_obs * z_obs;
                }
            }
        }
        let q2 = 1.0 - sse / sso;
        out.push(Q2Entry {
            construct: model.constructs()[j].name.clone(),
            sso,
            sse,
            q2,
            predictive_relevance: q2 > 0.0,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    #[test]
    fn omission_distance_must_not_divide_n() {
        let (model, data) = synthetic::two_construct(70, &[0.9, 0.8, 0.7], 0.6, 1);
        assert!(matches!(
            blindfold_q2(&model, &data, 7, &FitConfig::default()),
            Err(PlsError::InvalidParameter(m)) if m.contains("6 or 8")
        ));
    }

    #[test]
    fn noiseless_relation_tends_to_perfect_prediction() {
        // Mean imputation shrinks each prediction by about 1 - 1/D, so a
        // noiseless relation loses a term of order 1/D² and approaches 1 as D grows.
        let (model, data) = synthetic::single_indicator_chain(101, 1.0, 2);
        let q7 = blindfold_q2(&model, &data, 7, &FitConfig::default()).unwrap()[0].q2;
        let q25 = blindfold_q2(&model, &data, 25, &FitConfig::default()).unwrap()[0].q2;
        assert!(q7 > 0.95, "{q7}");
        assert!(q25 > 0.99 && q25 > q7, "{q25}");
    }

    #[test]
    fn predictive_model_is_relevant() {
        let (model, data) = synthetic::two_construct(199, &[0.9, 0.8, 0.7], 0.6, 3);
        let q = blindfold_q2(&model, &data, 7, &FitConfig::default()).unwrap();
        assert_eq!(q.len(), 1);
        assert!(q[0].predictive_relevance);
    }
}
