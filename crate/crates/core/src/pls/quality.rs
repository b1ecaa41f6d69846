//! Measurement and structural diagnostics for a fitted path model.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{solve_correlation, standardize_columns, PathEstimates, PathModel, PlsData, Result};

/// Conventional cut-offs.
pub const RELIABILITY_MIN: f64 = 0.7;
pub const AVE_MIN: f64 = 0.5;
pub const VIF_MAX: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstructQuality {
    pub construct: String,
    pub n_indicators: usize,
    pub cronbach_alpha: f64,
    pub composite_reliability: f64,
    pub ave: f64,
    pub alpha_ok: bool,
    pub cr_ok: bool,
    pub ave_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityReport {
    pub constructs: Vec<ConstructQuality>,
}

/// Standardized Cronbach's alpha from the mean inter-item correlation.
pub fn cronbach_alpha(k: usize, mean_r: f64) -> f64 {
    if k < 2 {
        return 1.0;
    }
    let k = k as f64;
    k * mean_r / (1.0 + (k - 1.0) * mean_r)
}

/// `(Σλ)² / ((Σλ)² + Σ(1 - λ²))`.
pub fn composite_reliability(loadings: &[f64]) -> f64 {
    let s: f64 = loadings.iter().sum();
    let err: f64 = loadings.iter().map(|l| 1.0 - l * l).sum();
    s * s / (s * s + err)
}

pub fn ave(loadings: &[f64]) -> f64 {
    loadings.iter().map(|l| l * l).sum::<f64>() / loadings.len() as f64
}

fn block_columns(estimates: &PathEstimates, data: &PlsData, construct: &str) -> Result<Vec<usize>> {
    estimates
        .indicators
        .iter()
        .filter(|i| i.construct == construct)
        .map(|i| data.column_index(&i.indicator))
        .collect()
}

fn correlation_matrix(z: &DMatrix<f64>) -> DMatrix<f64> {
    z.transpose() * z / (z.nrows() as f64 - 1.0)
}

fn mean_offdiag(r: &DMatrix<f64>, absolute: bool) -> f64 {
    let k = r.nrows();
    let mut total = 0.0;
    for a in 0..k {
        for b in 0..a {
            total += if absolute { r[(a, b)].abs() } else { r[(a, b)] };
        }
    }
    total / (k * (k - 1) / 2) as f64
}

/// Alpha, composite reliability and AVE per construct. Single-indicator
/// blocks report 1 for all three.
pub fn measurement_quality(estimates: &PathEstimates, data: &PlsData) -> Result<QualityReport> {
    let mut constructs = Vec::new();
    for name in &estimates.constructs {
        let cols = block_columns(estimates, data, name)?;
        let loadings = estimates.loadings_of(name);
        let k = cols.len();
        let (alpha, cr, ave) = if k == 1 {
            (1.0, 1.0, 1.0)
        } else {
            let r = correlation_matrix(&standardize_columns(data, &cols)?);
            (
                cronbach_alpha(k, mean_offdiag(&r, false)),
                composite_reliability(&loadings),
                ave(&loadings),
            )
        };
        constructs.push(ConstructQuality {
            construct: name.clone(),
            n_indicators: k,
            cronbach_alpha: alpha,
            composite_reliability: cr,
            ave,
            alpha_ok: alpha >= RELIABILITY_MIN,
            cr_ok: cr >= RELIABILITY_MIN,
            ave_ok: ave >= AVE_MIN,
        });
    }
    Ok(QualityReport { constructs })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscriminantValidity {
    pub constructs: Vec<String>,
    /// Lower triangle (`htmt[a][b]` for `b < a`), `None` elsewhere.
    pub htmt: Vec<Vec<Option<f64>>>,
    /// Diagonal √AVE, off-diagonal latent score correlations.
    pub fornell_larcker: Vec<Vec<f64>>,
    /// √AVE of each construct exceeds its correlations with all others.
    pub fornell_larcker_ok: Vec<bool>,
}

/// Heterotrait-monotrait ratios (absolute indicator correlations) and the
/// Fornell-Larcker table.
pub fn discriminant_validity(estimates: &PathEstimates, data: &PlsData) -> Result<DiscriminantValidity> {
    let names = &estimates.constructs;
    let k = names.len();
    let blocks: Vec<Vec<usize>> = names
        .iter()
        .map(|c| block_columns(estimates, data, c))
        .collect::<Result<_>>()?;
    let all: Vec<usize> = blocks.iter().flatten().copied().collect();
    let r = correlation_matrix(&standardize_columns(data, &all)?);
    // position of each block's columns inside `all`
    let mut offsets = Vec::with_capacity(k);
    let mut at = 0;
    for b in &blocks {
        offsets.push((at..at + b.len()).collect::<Vec<_>>());
        at += b.len();
    }
    let monotrait: Vec<f64> = offsets
        .iter()
        .map(|idx| {
            if idx.len() < 2 {
                1.0
            } else {
                let sub = DMatrix::from_fn(idx.len(), idx.len(), |a, b| r[(idx[a], idx[b])]);
                mean_offdiag(&sub, true)
            }
        })
        .collect();
    let mut htmt = vec![vec![None; k]; k];
    for a in 0..k {
        for b in 0..a {
            let mut total = 0.0;
            for &i in &offsets[a] {
                for &j in &offsets[b] {
                    total += r[(i, j)].abs();
                }
            }
            let hetero = total / (offsets[a].len() * offsets[b].len()) as f64;
            htmt[a][b] = Some(hetero / (monotrait[a] * monotrait[b]).sqrt());
        }
    }

    let quality = measurement_quality(estimates, data)?;
    let s = &estimates.scores;
    let lv = correlation_matrix(s);
    let fl = DMatrix::from_fn(k, k, |a, b| {
        if a == b {
            quality.constructs[a].ave.sqrt()
        } else {
            lv[(a, b)]
        }
    });
    let fornell_larcker_ok = (0..k)
        .map(|a| (0..k).filter(|&b| b != a).all(|b| fl[(a, a)] > fl[(a, b)].abs()))
        .collect();
    Ok(DiscriminantValidity {
        constructs: names.clone(),
        htmt,
        fornell_larcker: (0..k).map(|a| (0..k).map(|b| fl[(a, b)]).collect()).collect(),
        fornell_larcker_ok,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VifEntry {
    pub endogenous: String,
    pub predictor: String,
    /// `None` when the predictor is perfectly collinear with the others.
    pub vif: Option<f64>,
    pub overflow: bool,
    pub above_threshold: bool,
}

/// VIF of each predictor within each endogenous construct's predictor set.
pub fn structural_collinearity(model: &PathModel, estimates: &PathEstimates) -> Vec<VifEntry> {
    let s = &estimates.scores;
    let corr = correlation_matrix(s);
    let mut out = Vec::new();
    for j in model.endogenous() {
        let preds = model.predecessors(j);
        for (a, &p) in preds.iter().enumerate() {
            let others: Vec<usize> = preds.iter().enumerate().filter(|(b, _)| *b != a).map(|(_, &o)| o).collect();
            let vif = if others.is_empty() {
                Some(1.0)
            } else {
                let r_oo = DMatrix::from_fn(others.len(), others.len(), |x, y| corr[(others[x], others[y])]);
                let r_op = DVector::from_fn(others.len(), |x, _| corr[(others[x], p)]);
                solve_correlation(&r_oo, &r_op).and_then(|b| {
                    let r2 = r_op.dot(&b);
                    (r2 < 1.0 - 1e-12).then(|| 1.0 / (1.0 - r2))
                })
            };
            out.push(VifEntry {
                endogenous: model.constructs()[j].name.clone(),
                predictor: model.constructs()[p].name.clone(),
                vif,
                overflow: vif.is_none(),
                above_threshold: vif.is_none_or(|v| v > VIF_MAX),
            });
        }
    }
    out
}
