//! Cobb-Douglas growth function and group-wise simple regressions.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel::{PanelDataset, PanelError};
use crate::stats;

#[derive(Debug, Error)]
pub enum GrowthError {
    #[error("observation {index}: {reason}")]
    Domain { index: usize, reason: String },
    #[error("elasticity {0} outside [0, 1]")]
    InvalidAlpha(f64),
    #[error("inputs have different lengths ({0} and {1})")]
    Alignment(usize, usize),
    #[error("{n} observations, need at least {needed}")]
    Insufficient { n: usize, needed: usize },
    #[error("rank deficient design: {0}")]
    Rank(String),
    #[error("response has zero variance")]
    DegenerateResponse,
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GrowthError>;

/// Which form of the production function to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CobbDouglasMode {
    /// `Y = K^α · A^(1-α)`.
    #[default]
    Canonical,
    /// `Y = A · K`.
    Product,
    /// `Y = A^K`.
    AsPublished,
}

impl std::str::FromStr for CobbDouglasMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "canonical" => Ok(Self::Canonical),
            "product" => Ok(Self::Product),
            "as_published" | "as-published" => Ok(Self::AsPublished),
            other => Err(format!("unknown Cobb-Douglas mode `{other}`")),
        }
    }
}

fn cobb_douglas_one(a: f64, k: f64, alpha: f64, mode: CobbDouglasMode, index: usize) -> Result<f64> {
    let domain = |reason: &str| {
        Err(GrowthError::Domain {
            index,
            reason: reason.to_string(),
        })
    };
    if !a.is_finite() || !k.is_finite() {
        return domain("non-finite input");
    }
    match mode {
        CobbDouglasMode::Canonical => {
            if a <= 0.0 || k <= 0.0 {
                return domain("canonical form needs A > 0 and K > 0");
            }
            Ok(k.powf(alpha) * a.powf(1.0 - alpha))
        }
        CobbDouglasMode::Product => Ok(a * k),
        CobbDouglasMode::AsPublished => {
            if a <= 0.0 {
                return domain("A^K needs A > 0");
            }
            Ok(a.powf(k))
        }
    }
}

/// Evaluate the production function elementwise over aligned `A` and `K`.
pub fn cobb_douglas_eval(a: &[f64], k: &[f64], alpha: f64, mode: CobbDouglasMode) -> Result<Vec<f64>> {
    if a.len() != k.len() {
        return Err(GrowthError::Alignment(a.len(), k.len()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(GrowthError::InvalidAlpha(alpha));
    }
    a.iter()
        .zip(k)
        .enumerate()
        .map(|(i, (&a, &k))| cobb_douglas_one(a, k, alpha, mode, i))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnconstrainedFit {
    pub intercept: f64,
    pub coef_k: f64,
    pub coef_a: f64,
    /// `coef_k + coef_a`; 1 under constant returns to scale.
    pub returns_to_scale: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CobbDouglasFit {
    pub n: usize,
    pub alpha: f64,
    /// `exp(intercept)`.
    pub scale: f64,
    pub intercept: f64,
    /// Of the constrained regression `ln(Y/A)` on `ln(K/A)`.
    pub r_squared: f64,
    pub residual_sd: f64,
    pub max_abs_residual: f64,
    pub unconstrained: UnconstrainedFit,
}

impl CobbDouglasFit {
    /// `scale · K^α · A^(1-α)`.
    pub fn predict(&self, a: &[f64], k: &[f64]) -> Result<Vec<f64>> {
        let alpha = self.alpha.clamp(0.0, 1.0);
        Ok(cobb_douglas_eval(a, k, alpha, CobbDouglasMode::Canonical)?
            .into_iter()
            .map(|y| self.scale * y)
            .collect())
    }
}

/// Log-linear least squares for `Y = s · K^α · A^(1-α)`.
///
/// The constrained fit regresses `ln(Y/A)` on `ln(K/A)`; the unconstrained
/// fit regresses `ln Y` on `ln K` and `ln A` separately.
pub fn cobb_douglas_fit(y: &[f64], a: &[f64], k: &[f64]) -> Result<CobbDouglasFit> {
    let n = y.len();
    if a.len() != n || k.len() != n {
        return Err(GrowthError::Alignment(n, a.len().max(k.len())));
    }
    if n < 3 {
        return Err(GrowthError::Insufficient { n, needed: 3 });
    }
    for i in 0..n {
        if !(y[i] > 0.0 && a[i] > 0.0 && k[i] > 0.0) || !(y[i].is_finite() && a[i].is_finite() && k[i].is_finite()) {
            return Err(GrowthError::Domain {
                index: i,
                reason: String::from("Y, A and K must be positive and finite"),
            });
        }
    }
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let la: Vec<f64> = a.iter().map(|v| v.ln()).collect();
    let lk: Vec<f64> = k.iter().map(|v| v.ln()).collect();

    let lhs: Vec<f64> = ly.iter().zip(&la).map(|(y, a)| y - a).collect();
    let rhs: Vec<f64> = lk.iter().zip(&la).map(|(k, a)| k - a).collect();
    let constrained = simple_ols(&rhs, &lhs).map_err(|e| match e {
        GrowthError::Rank(_) => GrowthError::Rank(String::from("ln(K/A) is constant")),
        other => other,
    });
    let constrained = match constrained {
        Err(GrowthError::DegenerateResponse) => None,
        other => Some(other?),
    };
    let (alpha, intercept, r2) = match &constrained {
        Some(f) => (f.slope, f.intercept, f.r_squared),
        // ln(Y/A) constant: exact fit with alpha = 0
        None => (0.0, stats::mean(&lhs), 1.0),
    };
    let resid: Vec<f64> = lhs.iter().zip(&rhs).map(|(l, r)| l - intercept - alpha * r).collect();
    let rss: f64 = resid.iter().map(|e| e * e).sum();

    let unconstrained = unconstrained_fit(&ly, &lk, &la)?;
    Ok(CobbDouglasFit {
        n,
        alpha,
        scale: intercept.exp(),
        intercept,
        r_squared: r2,
        residual_sd: (rss / (n as f64 - 2.0)).sqrt(),
        max_abs_residual: resid.iter().fold(0.0, |m, e| m.max(e.abs())),
        unconstrained,
    })
}

fn unconstrained_fit(ly: &[f64], lk: &[f64], la: &[f64]) -> Result<UnconstrainedFit> {
    let n = ly.len();
    if n < 4 {
        return Err(GrowthError::Insufficient { n, needed: 4 });
    }
    let rk = stats::pearson(lk, la);
    let vk = stats::sample_variance(lk);
    let va = stats::sample_variance(la);
    if vk == 0.0 || va == 0.0 || !rk.is_finite() || rk * rk > 1.0 - 1e-12 {
        return Err(GrowthError::Rank(String::from("ln K and ln A are collinear")));
    }
    let x = DMatrix::from_fn(n, 3, |r, c| match c {
        0 => 1.0,
        1 => lk[r],
        _ => la[r],
    });
    let yv = DVector::from_column_slice(ly);
    let beta = x
        .clone()
        .svd(true, true)
        .solve(&yv, 1e-12)
        .map_err(|e| GrowthError::Rank(e.to_string()))?;
    let fitted = &x * &beta;
    let my = stats::mean(ly);
    let rss: f64 = (0..n).map(|i| (ly[i] - fitted[i]).powi(2)).sum();
    let tss: f64 = ly.iter().map(|v| (v - my) * (v - my)).sum();
    Ok(UnconstrainedFit {
        intercept: beta[0],
        coef_k: beta[1],
        coef_a: beta[2],
        returns_to_scale: beta[1] + beta[2],
        r_squared: if tss > 0.0 { 1.0 - rss / tss } else { 1.0 },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub n: usize,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_se: f64,
    pub t: f64,
    /// Two-tailed, t reference with `n - 2` degrees of freedom.
    pub p_value: f64,
}

/// Simple least squares of `y` on `x`.
pub fn simple_ols(x: &[f64], y: &[f64]) -> Result<OlsFit> {
    let n = x.len();
    if y.len() != n {
        return Err(GrowthError::Alignment(n, y.len()));
    }
    if n < 3 {
        return Err(GrowthError::Insufficient { n, needed: 3 });
    }
    let mx = stats::mean(x);
    let my = stats::mean(y);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(GrowthError::Rank(String::from("predictor has zero variance")));
    }
    if syy == 0.0 {
        return Err(GrowthError::DegenerateResponse);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = (sxy * sxy / (sxx * syy)).min(1.0);
    let rss = (syy - slope * sxy).max(0.0);
    let df = n as f64 - 2.0;
    let slope_se = (rss / df / sxx).sqrt();
    let t = if slope_se == 0.0 {
        f64::INFINITY.copysign(slope)
    } else {
        slope / slope_se
    };
    Ok(OlsFit {
        n,
        slope,
        intercept,
        r_squared,
        slope_se,
        t,
        p_value: stats::t_two_tailed(t, df),
    })
}

/// p-values under this bound print as `<1e-15`.
pub const P_FLOOR: f64 = 1e-15;

pub fn p_display(p: f64) -> String {
    if p < P_FLOOR {
        String::from("<1e-15")
    } else {
        stats::display3(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    #[default]
    Microregion,
    /// All regions as one group.
    Whole,
}

pub const WHOLE_GROUP: &str = "all";

/// One (group, predictor, response, year) regression. Slices that fail the
/// preconditions carry a `reason` and no estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub group: String,
    pub predictor: String,
    pub response: String,
    pub year: i32,
    pub n: usize,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub r_squared: Option<f64>,
    pub p_value: Option<f64>,
    pub reason: Option<String>,
}

/// Simple OLS per group, indicator pair and year over regions with both
/// values present. Output is sorted by group, pair and year.
pub fn group_ols(
    dataset: &PanelDataset,
    grouping: Grouping,
    pairs: &[(String, String)],
    years: &[i32],
) -> Result<Vec<RegressionReport>> {
    let groups: Vec<String> = match grouping {
        Grouping::Microregion => dataset.microregions(),
        Grouping::Whole => vec![WHOLE_GROUP.to_string()],
    };
    let mut slices = Vec::new();
    for (p, r) in pairs {
        for &year in years {
            let xs = dataset.column(p, year)?;
            let ys = dataset.column(r, year)?;
            for g in &groups {
                slices.push((g.clone(), p.clone(), r.clone(), year, xs.clone(), ys.clone()));
            }
        }
    }
    let mut out: Vec<RegressionReport> = slices
        .into_par_iter()
        .map(|(group, predictor, response, year, xs, ys)| {
            let (x, y): (Vec<f64>, Vec<f64>) = dataset
                .regions()
                .iter()
                .enumerate()
                .filter(|(_, reg)| grouping == Grouping::Whole || reg.microregion == group)
                .filter_map(|(i, _)| Some((xs[i]?, ys[i]?)))
                .unzip();
            let n = x.len();
            let mut report = RegressionReport {
                group,
                predictor,
                response,
                year,
                n,
                slope: None,
                intercept: None,
                r_squared: None,
                p_value: None,
                reason: None,
            };
            match simple_ols(&x, &y) {
                Ok(fit) => {
                    report.slope = Some(fit.slope);
                    report.intercept = Some(fit.intercept);
                    report.r_squared = Some(fit.r_squared);
                    report.p_value = Some(fit.p_value);
                }
                Err(e) => report.reason = Some(e.to_string()),
            }
            report
        })
        .collect();
    out.sort_by(|a, b| {
        (&a.group, &a.predictor, &a.response, a.year).cmp(&(&b.group, &b.predictor, &b.response, b.year))
    });
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:?}"))
}

/// CSV with full-precision values plus three-decimal display columns.
pub fn write_regressions_csv<W: Write>(reports: &[RegressionReport], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let io = |e: csv::Error| GrowthError::Io(std::io::Error::other(e.to_string()));
    w.write_record([
        "group",
        "pair",
        "year",
        "n",
        "slope",
        "intercept",
        "r_squared",
        "p_value",
        "r_squared_display",
        "p_display",
        "reason",
    ])
    .map_err(io)?;
    for r in reports {
        w.write_record([
            r.group.clone(),
            format!("{}----{}", r.predictor, r.response),
            r.year.to_string(),
            r.n.to_string(),
            opt(r.slope),
            opt(r.intercept),
            opt(r.r_squared),
            opt(r.p_value),
            r.r_squared.map_or_else(String::new, stats::display3),
            r.p_value.map_or_else(String::new, p_display),
            r.reason.clone().unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
