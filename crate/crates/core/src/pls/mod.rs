//! Reflective PLS path modeling.
//!
//! [`fit_pls`] runs the PLS algorithm with Mode A outer weights and the path
//! weighting inner scheme on standardized indicators. The evaluation battery
//! lives in [`quality`], [`bootstrap`] and [`blindfold`].

pub mod blindfold;
pub mod bootstrap;
pub mod quality;

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use blindfold::{blindfold_q2, Q2Entry};
pub use bootstrap::{bootstrap_paths, BootstrapEdge, BootstrapReport};
pub use quality::{
    discriminant_validity, measurement_quality, structural_collinearity, DiscriminantValidity,
    QualityReport, VifEntry,
};

#[derive(Debug, Error, PartialEq)]
pub enum PlsError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("indicator `{0}` not found in data")]
    UnknownIndicator(String),
    #[error("missing or non-finite value at row {row}, column {column}")]
    MissingValue { row: usize, column: String },
    #[error("indicator `{0}` has zero variance")]
    DegenerateIndicator(String),
    #[error("{n} observations, need more than {needed}")]
    InsufficientObservations { n: usize, needed: usize },
    #[error("no convergence after {iterations} iterations (last change {:e})", trace.last().copied().unwrap_or(f64::NAN))]
    Convergence { iterations: usize, trace: Vec<f64> },
    #[error("singular predictor set for `{0}`")]
    Rank(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{failures} consecutive failed resamples for draw {draw}")]
    Resampling { draw: usize, failures: usize },
}

pub type Result<T> = std::result::Result<T, PlsError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Construct {
    pub name: String,
    pub indicators: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
}

/// Latent constructs with reflective indicator blocks and directed
/// structural edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PathModel {
    constructs: Vec<Construct>,
    edges: Vec<Edge>,
    #[serde(skip)]
    edge_index: Vec<(usize, usize)>,
}

#[derive(Deserialize)]
struct RawModel {
    constructs: Vec<Construct>,
    edges: Vec<Edge>,
}

impl<'de> Deserialize<'de> for PathModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawModel::deserialize(d)?;
        PathModel::new(raw.constructs, raw.edges).map_err(serde::de::Error::custom)
    }
}

impl PathModel {
    pub fn new(constructs: Vec<Construct>, edges: Vec<Edge>) -> Result<Self> {
        let invalid = |m: String| Err(PlsError::InvalidModel(m));
        let mut names = HashMap::new();
        for (k, c) in constructs.iter().enumerate() {
            if names.insert(c.name.clone(), k).is_some() {
                return invalid(format!("duplicate construct {}", c.name));
            }
            if c.indicators.is_empty() {
                return invalid(format!("construct {} has no indicators", c.name));
            }
        }
        let mut owner: HashMap<&str, &str> = HashMap::new();
        for c in &constructs {
            for i in &c.indicators {
                if let Some(prev) = owner.insert(i, &c.name) {
                    return invalid(format!("indicator {i} belongs to both {prev} and {}", c.name));
                }
            }
        }
        let mut edge_index = Vec::with_capacity(edges.len());
        for e in &edges {
            let (Some(&a), Some(&b)) = (names.get(&e.from), names.get(&e.to)) else {
                return invalid(format!("edge {} -> {} names an unknown construct", e.from, e.to));
            };
            if a == b {
                return invalid(format!("self-loop on {}", e.from));
            }
            if edge_index.contains(&(a, b)) {
                return invalid(format!("duplicate edge {} -> {}", e.from, e.to));
            }
            edge_index.push((a, b));
        }
        // Kahn's algorithm for acyclicity
        let k = constructs.len();
        let mut indegree = vec![0usize; k];
        for &(_, b) in &edge_index {
            indegree[b] += 1;
        }
        let mut queue: Vec<usize> = (0..k).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(i) = queue.pop() {
            seen += 1;
            for &(a, b) in &edge_index {
                if a == i {
                    indegree[b] -= 1;
                    if indegree[b] == 0 {
                        queue.push(b);
                    }
                }
            }
        }
        if seen != k {
            return invalid(String::from("structural model has a cycle"));
        }
        Ok(Self {
            constructs,
            edges,
            edge_index,
        })
    }

    /// Digital activity model: knowledge (CE) drives digital activity (AED),
    /// which drives human settlement (AHU) and growth (CER).
    pub fn default_regional() -> Self {
        let c = |name: &str, ind: &[&str]| Construct {
            name: name.into(),
            indicators: ind.iter().map(|s| s.to_string()).collect(),
        };
        let e = |from: &str, to: &str| Edge {
            from: from.into(),
            to: to.into(),
        };
        Self::new(
            vec![
                c("CE", &["IUPP", "DCNT", "FUNDEB"]),
                c("AED", &["TIC", "CBO"]),
                c("AHU", &["POB"]),
                c("CER", &["PIB"]),
            ],
            vec![e("CE", "AED"), e("AED", "AHU"), e("AED", "CER")],
        )
        .expect("valid built-in model")
    }

    pub fn constructs(&self) -> &[Construct] {
        &self.constructs
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn indicators(&self) -> impl Iterator<Item = &str> {
        self.constructs.iter().flat_map(|c| c.indicators.iter().map(String::as_str))
    }

    fn predecessors(&self, k: usize) -> Vec<usize> {
        self.edge_index.iter().filter(|e| e.1 == k).map(|e| e.0).collect()
    }

    fn successors(&self, k: usize) -> Vec<usize> {
        self.edge_index.iter().filter(|e| e.0 == k).map(|e| e.1).collect()
    }

    /// Constructs with at least one incoming edge, in declaration order.
    pub fn endogenous(&self) -> Vec<usize> {
        (0..self.constructs.len())
            .filter(|&k| !self.predecessors(k).is_empty())
            .collect()
    }

    pub fn construct_index(&self, name: &str) -> Option<usize> {
        self.constructs.iter().position(|c| c.name == name)
    }
}

/// Observations × indicators, with column names.
#[derive(Debug, Clone, PartialEq)]
pub struct PlsData {
    names: Vec<String>,
    x: DMatrix<f64>,
}

impl PlsData {
    pub fn new(names: Vec<String>, x: DMatrix<f64>) -> Result<Self> {
        if names.len() != x.ncols() {
            return Err(PlsError::InvalidParameter(format!(
                "{} names for {} columns",
                names.len(),
                x.ncols()
            )));
        }
        Ok(Self { names, x })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| PlsError::UnknownIndicator(name.to_string()))
    }

    /// Rows picked by `rows` (with repetition).
    pub fn select_rows(&self, rows: &[usize]) -> PlsData {
        let x = DMatrix::from_fn(rows.len(), self.x.ncols(), |r, c| self.x[(rows[r], c)]);
        PlsData {
            names: self.names.clone(),
            x,
        }
    }

    pub(crate) fn with_matrix(&self, x: DMatrix<f64>) -> PlsData {
        PlsData {
            names: self.names.clone(),
            x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-7,
            max_iterations: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorEstimate {
    pub indicator: String,
    pub construct: String,
    pub weight: f64,
    pub loading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathCoefficient {
    pub from: String,
    pub to: String,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructR2 {
    pub construct: String,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathEstimates {
    pub constructs: Vec<String>,
    pub indicators: Vec<IndicatorEstimate>,
    pub paths: Vec<PathCoefficient>,
    pub r_squared: Vec<ConstructR2>,
    pub iterations: usize,
    pub n_observations: usize,
    /// Latent scores, observations × constructs, unit variance.
    #[serde(skip)]
    pub scores: DMatrix<f64>,
}

impl PathEstimates {
    pub fn beta(&self, from: &str, to: &str) -> Option<f64> {
        self.paths.iter().find(|p| p.from == from && p.to == to).map(|p| p.beta)
    }

    pub fn loadings_of(&self, construct: &str) -> Vec<f64> {
        self.indicators
            .iter()
            .filter(|i| i.construct == construct)
            .map(|i| i.loading)
            .collect()
    }
}

pub(crate) fn column_mean_sd(col: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = col.clone().count() as f64;
    let mean = col.clone().sum::<f64>() / n;
    let var = col.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Z-score every column (sample sd). Errors name the offending column.
pub(crate) fn standardize_columns(data: &PlsData, columns: &[usize]) -> Result<DMatrix<f64>> {
    let n = data.n();
    let mut out = DMatrix::zeros(n, columns.len());
    for (k, &c) in columns.iter().enumerate() {
        let col = data.x.column(c);
        if let Some(r) = col.iter().position(|v| !v.is_finite()) {
            return Err(PlsError::MissingValue {
                row: r,
                column: data.names[c].clone(),
            });
        }
        let (mean, sd) = column_mean_sd(col.iter().copied());
        if sd.is_nan() || sd <= 0.0 || sd < 1e-12 * mean.abs() {
            return Err(PlsError::DegenerateIndicator(data.names[c].clone()));
        }
        for r in 0..n {
            out[(r, k)] = (col[r] - mean) / sd;
        }
    }
    Ok(out)
}

fn unit_variance(v: &mut DVector<f64>) {
    let n = v.len() as f64;
    let mean = v.mean();
    v.add_scalar_mut(-mean);
    let sd = (v.norm_squared() / (n - 1.0)).sqrt();
    *v /= sd;
}

/// Correlation of two unit-variance, zero-mean vectors.
fn corr_std(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(b) / (a.len() as f64 - 1.0)
}

/// `R_pp⁻¹ r_py` by Cholesky; `None` when `R_pp` is numerically singular.
pub(crate) fn solve_correlation(r_pp: &DMatrix<f64>, r_py: &DVector<f64>) -> Option<DVector<f64>> {
    let chol = r_pp.clone().cholesky()?;
    let l = chol.l();
    if l.diagonal().iter().any(|d| d * d < 1e-12) {
        return None;
    }
    Some(chol.solve(r_py))
}

pub(crate) struct Fitted {
    pub estimates: PathEstimates,
    pub blocks: Vec<Vec<usize>>,
}

fn resolve_blocks(model: &PathModel, data: &PlsData) -> Result<Vec<Vec<usize>>> {
    model
        .constructs
        .iter()
        .map(|c| c.indicators.iter().map(|i| data.column_index(i)).collect())
        .collect()
}

pub(crate) fn fit_inner(model: &PathModel, data: &PlsData, config: &FitConfig) -> Result<Fitted> {
    let blocks = resolve_blocks(model, data)?;
    let n = data.n();
    let max_block = blocks.iter().map(Vec::len).max().unwrap_or(0);
    if n <= max_block.max(2) {
        return Err(PlsError::InsufficientObservations {
            n,
            needed: max_block.max(2),
        });
    }
    let xs: Vec<DMatrix<f64>> = blocks
        .iter()
        .map(|b| standardize_columns(data, b))
        .collect::<Result<_>>()?;
    let k = blocks.len();
    let preds: Vec<Vec<usize>> = (0..k).map(|j| model.predecessors(j)).collect();
    let succs: Vec<Vec<usize>> = (0..k).map(|j| model.successors(j)).collect();

    let scores_of = |w: &[DVector<f64>]| -> Vec<DVector<f64>> {
        xs.iter()
            .zip(w)
            .map(|(x, w)| {
                let mut y = x * w;
                unit_variance(&mut y);
                y
            })
            .collect()
    };

    let mut weights: Vec<DVector<f64>> = blocks.iter().map(|b| DVector::from_element(b.len(), 1.0)).collect();
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let y = scores_of(&weights);
        let mut next = Vec::with_capacity(k);
        for j in 0..k {
            let mut z = DVector::zeros(n);
            for &s in &succs[j] {
                z += &y[s] * corr_std(&y[j], &y[s]);
            }
            if !preds[j].is_empty() {
                let p = &preds[j];
                let r_pp = DMatrix::from_fn(p.len(), p.len(), |a, b| corr_std(&y[p[a]], &y[p[b]]));
                let r_py = DVector::from_fn(p.len(), |a, _| corr_std(&y[p[a]], &y[j]));
                let b = solve_correlation(&r_pp, &r_py)
                    .ok_or_else(|| PlsError::Rank(model.constructs[j].name.clone()))?;
                for (a, &pi) in p.iter().enumerate() {
                    z += &y[pi] * b[a];
                }
            }
            if succs[j].is_empty() && preds[j].is_empty() {
                z = y[j].clone();
            }
            // Mode A: covariances of indicators with the inner proxy
            let mut w = xs[j].transpose() * &z / (n as f64 - 1.0);
            let sd = {
                let yy = &xs[j] * &w;
                (yy.norm_squared() / (n as f64 - 1.0)).sqrt()
            };
            if sd.is_nan() || sd <= 0.0 {
                return Err(PlsError::Rank(model.constructs[j].name.clone()));
            }
            w /= sd;
            next.push(w);
        }
        let change = weights
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max);
        trace.push(change);
        weights = next;
        if change < config.tolerance {
            break;
        }
        if iterations >= config.max_iterations {
            return Err(PlsError::Convergence { iterations, trace });
        }
    }

    let mut y = scores_of(&weights);
    let mut indicators = Vec::new();
    for j in 0..k {
        let mut loadings: Vec<f64> = (0..blocks[j].len())
            .map(|c| corr_std(&xs[j].column(c).into_owned(), &y[j]))
            .collect();
        let dominant = loadings
            .iter()
            .copied()
            .max_by(|a, b| a.abs().partial_cmp(&b.abs()).expect("finite loadings"))
            .unwrap_or(1.0);
        if dominant < 0.0 {
            weights[j].neg_mut();
            y[j].neg_mut();
            loadings.iter_mut().for_each(|l| *l = -*l);
        }
        for (c, &col) in blocks[j].iter().enumerate() {
            indicators.push(IndicatorEstimate {
                indicator: data.names[col].clone(),
                construct: model.constructs[j].name.clone(),
                weight: weights[j][c],
                loading: loadings[c],
            });
        }
    }

    let mut paths = Vec::new();
    let mut r_squared = Vec::new();
    for j in 0..k {
        let p = &preds[j];
        if p.is_empty() {
            continue;
        }
        let r_pp = DMatrix::from_fn(p.len(), p.len(), |a, b| corr_std(&y[p[a]], &y[p[b]]));
        let r_py = DVector::from_fn(p.len(), |a, _| corr_std(&y[p[a]], &y[j]));
        let beta =
            solve_correlation(&r_pp, &r_py).ok_or_else(|| PlsError::Rank(model.constructs[j].name.clone()))?;
        for (a, &pi) in p.iter().enumerate() {
            paths.push(PathCoefficient {
                from: model.constructs[pi].name.clone(),
                to: model.constructs[j].name.clone(),
                beta: beta[a],
            });
        }
        r_squared.push(ConstructR2 {
            construct: model.constructs[j].name.clone(),
            r_squared: r_py.dot(&beta).clamp(0.0, 1.0),
        });
    }
    // report paths in model edge order
    paths.sort_by_key(|p| {
        model
            .edges
            .iter()
            .position(|e| e.from == p.from && e.to == p.to)
            .expect("edge")
    });

    let scores = DMatrix::from_fn(n, k, |r, j| y[j][r]);
    Ok(Fitted {
        estimates: PathEstimates {
            constructs: model.constructs.iter().map(|c| c.name.clone()).collect(),
            indicators,
            paths,
            r_squared,
            iterations,
            n_observations: n,
            scores,
        },
        blocks,
    })
}

/// Estimate loadings, path coefficients, R² and latent scores.
pub fn fit_pls(model: &PathModel, data: &PlsData, config: &FitConfig) -> Result<PathEstimates> {
    fit_inner(model, data, config).map(|f| f.estimates)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::stats;
    use crate::synthetic;

    #[test]
    fn rejects_cycles_and_shared_indicators() {
        let c = |n: &str, i: &str| Construct {
            name: n.into(),
            indicators: vec![i.into()],
        };
        let e = |a: &str, b: &str| Edge {
            from: a.into(),
            to: b.into(),
        };
        assert!(PathModel::new(vec![c("A", "x"), c("B", "y")], vec![e("A", "B"), e("B", "A")]).is_err());
        assert!(PathModel::new(vec![c("A", "x"), c("B", "x")], vec![e("A", "B")]).is_err());
        assert!(PathModel::new(vec![c("A", "x")], vec![e("A", "Z")]).is_err());
        assert!(PathModel::new(vec![c("A", "x"), c("B", "y")], vec![e("A", "B")]).is_ok());
    }

    #[test]
    fn model_json_round_trip() {
        let m = PathModel::default_regional();
        let text = serde_json::to_string(&m).unwrap();
        let back: PathModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(m.endogenous().len(), 3);
    }

    #[test]
    fn single_indicator_model_reduces_to_correlations() {
        let (model, data) = synthetic::single_indicator_chain(300, 0.5, 11);
        let est = fit_pls(&model, &data, &FitConfig::default()).unwrap();
        let x = data.matrix();
        let col = |c: usize| x.column(c).iter().copied().collect::<Vec<_>>();
        let r = stats::pearson(&col(0), &col(1));
        assert!((est.beta("A", "B").unwrap() - r).abs() < 1e-10);
        assert!((est.r_squared[0].r_squared - r * r).abs() < 1e-10);
        assert!(est.indicators.iter().all(|i| (i.loading - 1.0).abs() < 1e-12));
    }

    #[test]
    fn scores_have_unit_variance_and_loadings_are_bounded() {
        let (model, data) = synthetic::two_construct(400, &[0.9, 0.8, 0.7], 0.6, 5);
        let est = fit_pls(&model, &data, &FitConfig::default()).unwrap();
        for j in 0..est.scores.ncols() {
            let col: Vec<f64> = est.scores.column(j).iter().copied().collect();
            assert!((stats::sample_variance(&col) - 1.0).abs() < 1e-9);
        }
        assert!(est.indicators.iter().all(|i| i.loading.abs() <= 1.0 + 1e-6));
        assert!(est.indicators.iter().all(|i| i.loading > 0.0));
    }

    #[test]
    fn rescaling_an_indicator_changes_nothing() {
        let (model, data) = synthetic::two_construct(200, &[0.9, 0.8, 0.7], 0.6, 8);
        let a = fit_pls(&model, &data, &FitConfig::default()).unwrap();
        let mut x = data.matrix().clone();
        x.column_mut(1).iter_mut().for_each(|v| *v = *v * 10.0 + 3.0);
        let b = fit_pls(&model, &data.with_matrix(x), &FitConfig::default()).unwrap();
        assert!((a.paths[0].beta - b.paths[0].beta).abs() < 1e-9);
    }

    #[test]
    fn missing_and_constant_columns_are_rejected() {
        let (model, data) = synthetic::two_construct(50, &[0.9, 0.8, 0.7], 0.6, 1);
        let mut x = data.matrix().clone();
        x[(3, 2)] = f64::NAN;
        assert!(matches!(
            fit_pls(&model, &data.with_matrix(x), &FitConfig::default()),
            Err(PlsError::MissingValue { row: 3, .. })
        ));
        let mut x = data.matrix().clone();
        x.column_mut(0).fill(1.0);
        assert!(matches!(
            fit_pls(&model, &data.with_matrix(x), &FitConfig::default()),
            Err(PlsError::DegenerateIndicator(_))
        ));
    }

    #[test]
    fn iteration_cap_reports_trace() {
        let (model, data) = synthetic::two_construct(100, &[0.9, 0.8, 0.7], 0.6, 2);
        let cfg = FitConfig {
            tolerance: 0.0,
            max_iterations: 3,
        };
        match fit_pls(&model, &data, &cfg) {
            Err(PlsError::Convergence { iterations, trace }) => {
                assert_eq!(iterations, 3);
                assert_eq!(trace.len(), 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn collinear_predictors_raise_rank_error() {
        let c = |n: &str, i: &str| Construct {
            name: n.into(),
            indicators: vec![i.into()],
        };
        let e = |a: &str, b: &str| Edge {
            from: a.into(),
            to: b.into(),
        };
        let model = PathModel::new(vec![c("A", "a"), c("B", "b"), c("C", "c")], vec![e("A", "C"), e("B", "C")]).unwrap();
        let n = 30;
        let x = DMatrix::from_fn(n, 3, |r, col| {
            let t = r as f64;
            match col {
                0 => t,
                1 => 2.0 * t + 1.0,
                _ => (t * 0.7).sin(),
            }
        });
        let data = PlsData::new(vec!["a".into(), "b".into(), "c".into()], x).unwrap();
        assert!(matches!(fit_pls(&model, &data, &FitConfig::default()), Err(PlsError::Rank(_))));
    }
}
