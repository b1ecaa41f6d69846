//! Global, local and bivariate Moran statistics with permutation inference.
//!
//! All statistics use row-standardized weights (binary input is standardized
//! on the fly). Isolates are left out of `n`, the mean and the second moment,
//! and get no local statistic.
//!
//! Permutation draws come from [`crate::rng::stream`], one stream per region
//! (stream 0 for the global test) and one counter per permutation, so
//! results depend only on the inputs and the seed.

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::{json, Value};
use thiserror::Error;

use crate::rng;
use crate::stats;
use crate::weights::SpatialWeights;

#[derive(Debug, Error, PartialEq)]
pub enum AutocorrError {
    #[error("{values} values for {regions} regions")]
    Alignment { values: usize, regions: usize },
    #[error("non-finite value for region {0}")]
    NonFinite(String),
    #[error("need at least 3 non-isolate regions, have {0}")]
    TooFewRegions(usize),
    #[error("values are constant over the non-isolate regions")]
    Degenerate,
    #[error("need at least 99 permutations, got {0}")]
    TooFewPermutations(usize),
    #[error("significance thresholds must be non-empty and inside (0, 1)")]
    InvalidThresholds,
    #[error("region {0} has more neighbors than other active regions")]
    Overconnected(String),
}

pub type Result<T> = std::result::Result<T, AutocorrError>;

pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.05, 0.01, 0.001];
pub const MIN_PERMUTATIONS: usize = 99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoranGlobal {
    pub i: f64,
    /// `-1 / (n - 1)`.
    pub expected: f64,
    pub n_used: usize,
    pub isolates: Vec<String>,
    pub pseudo_p: Option<f64>,
    pub n_permutations: usize,
    pub seed: Option<u64>,
    /// Observed I standardized by the permutation mean and sd.
    pub z_sim: Option<f64>,
}

/// Moran scatterplot quadrant of `(z_i, lag_i)`. A zero deviation or lag
/// counts as low.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quadrant {
    HH,
    LL,
    LH,
    HL,
}

impl Quadrant {
    pub fn of(z: f64, lag: f64) -> Self {
        match (z > 0.0, lag > 0.0) {
            (true, true) => Quadrant::HH,
            (true, false) => Quadrant::HL,
            (false, true) => Quadrant::LH,
            (false, false) => Quadrant::LL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Significance {
    NotSignificant,
    /// Pseudo p at or below this threshold (the tightest one passed).
    Below(f64),
    Isolate,
}

impl Significance {
    /// Tightest threshold `t` with `p <= t`, else not significant.
    pub fn classify(p: f64, thresholds: &[f64]) -> Self {
        thresholds
            .iter()
            .copied()
            .filter(|&t| p <= t)
            .min_by(|a, b| a.partial_cmp(b).expect("finite thresholds"))
            .map_or(Significance::NotSignificant, Significance::Below)
    }

    pub fn label(&self) -> String {
        match self {
            Significance::NotSignificant => String::from("ns"),
            Significance::Isolate => String::from("isolate"),
            Significance::Below(t) => {
                let s = t.to_string();
                format!("p<{}", s.strip_prefix('0').unwrap_or(&s))
            }
        }
    }
}

impl Serialize for Significance {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LisaKind {
    Univariate,
    Bivariate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalRecord {
    pub id: String,
    /// Standardized value (of x for bivariate results); `None` for isolates.
    pub z: Option<f64>,
    /// Spatial lag of the standardized values (of y for bivariate results).
    pub lag: Option<f64>,
    pub local_i: Option<f64>,
    pub quadrant: Option<Quadrant>,
    pub pseudo_p: Option<f64>,
    pub significance: Significance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LisaResult {
    pub kind: LisaKind,
    pub n_used: usize,
    pub n_permutations: usize,
    pub seed: u64,
    pub thresholds: Vec<f64>,
    pub records: Vec<LocalRecord>,
}

/// Deviations from the mean over active (non-isolate) regions.
struct Centered {
    weights: SpatialWeights,
    active: Vec<usize>,
    /// Position of each region in `active`, `usize::MAX` for isolates.
    position: Vec<usize>,
    z: Vec<f64>,
    m2: f64,
}

impl Centered {
    fn n(&self) -> usize {
        self.active.len()
    }

    fn lag(&self, z: &[f64]) -> Vec<f64> {
        self.weights.lag(z)
    }
}

fn center(values: &[f64], weights: &SpatialWeights) -> Result<Centered> {
    if values.len() != weights.n() {
        return Err(AutocorrError::Alignment {
            values: values.len(),
            regions: weights.n(),
        });
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(AutocorrError::NonFinite(weights.ids()[i].clone()));
    }
    let weights = if weights.is_standardized() {
        weights.clone()
    } else {
        weights.row_standardize()
    };
    let active: Vec<usize> = (0..weights.n()).filter(|&i| !weights.is_isolate(i)).collect();
    if active.len() < 3 {
        return Err(AutocorrError::TooFewRegions(active.len()));
    }
    let mut position = vec![usize::MAX; weights.n()];
    for (k, &i) in active.iter().enumerate() {
        position[i] = k;
    }
    let mean = active.iter().map(|&i| values[i]).sum::<f64>() / active.len() as f64;
    let z: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let scale = active.iter().map(|&i| values[i].abs()).fold(0.0, f64::max);
    if active.iter().all(|&i| z[i].abs() <= 1e-12 * scale) {
        return Err(AutocorrError::Degenerate);
    }
    let m2 = active.iter().map(|&i| z[i] * z[i]).sum::<f64>() / active.len() as f64;
    Ok(Centered {
        weights,
        active,
        position,
        z,
        m2,
    })
}

fn moran_i(c: &Centered, z: &[f64]) -> f64 {
    let lag = c.lag(z);
    let num: f64 = c.active.iter().map(|&i| z[i] * lag[i]).sum();
    let den: f64 = c.active.iter().map(|&i| z[i] * z[i]).sum();
    num / den
}

fn isolate_ids(c: &Centered) -> Vec<String> {
    c.weights.isolates().into_iter().map(|i| c.weights.ids()[i].clone()).collect()
}

/// Global Moran's I, `Σ_i z_i lag_i / Σ_i z_i²` over non-isolates.
pub fn global_moran(values: &[f64], weights: &SpatialWeights) -> Result<MoranGlobal> {
    let c = center(values, weights)?;
    let n = c.n();
    Ok(MoranGlobal {
        i: moran_i(&c, &c.z),
        expected: -1.0 / (n as f64 - 1.0),
        n_used: n,
        isolates: isolate_ids(&c),
        pseudo_p: None,
        n_permutations: 0,
        seed: None,
        z_sim: None,
    })
}

/// Global Moran's I with a two-sided permutation test: values are relabeled
/// across the non-isolate regions, and a permutation is as extreme as the
/// observation when `|I - E[I]| >= |I_obs - E[I]|`.
pub fn moran_permutation(
    values: &[f64],
    weights: &SpatialWeights,
    n_permutations: usize,
    seed: u64,
) -> Result<MoranGlobal> {
    if n_permutations < MIN_PERMUTATIONS {
        return Err(AutocorrError::TooFewPermutations(n_permutations));
    }
    let c = center(values, weights)?;
    let n = c.n();
    let observed = moran_i(&c, &c.z);
    let expected = -1.0 / (n as f64 - 1.0);
    let active_z: Vec<f64> = c.active.iter().map(|&i| c.z[i]).collect();
    let sims: Vec<f64> = (0..n_permutations as u64)
        .into_par_iter()
        .map_init(
            || (active_z.clone(), c.z.clone()),
            |(shuffled, z), p| {
                shuffled.copy_from_slice(&active_z);
                shuffled.shuffle(&mut rng::stream(seed, 0, p));
                for (k, &i) in c.active.iter().enumerate() {
                    z[i] = shuffled[k];
                }
                moran_i(&c, z)
            },
        )
        .collect();
    let threshold = (observed - expected).abs();
    let extreme = sims.iter().filter(|&&s| (s - expected).abs() >= threshold).count();
    let sd = stats::sample_sd(&sims);
    Ok(MoranGlobal {
        i: observed,
        expected,
        n_used: n,
        isolates: isolate_ids(&c),
        pseudo_p: Some((extreme + 1) as f64 / (n_permutations + 1) as f64),
        n_permutations,
        seed: Some(seed),
        z_sim: (sd > 0.0).then(|| (observed - stats::mean(&sims)) / sd),
    })
}

/// Local Moran `I_i = z_i lag_i / m2` with `m2 = Σ z² / n`; `None` for isolates.
/// The values sum to `n · I`.
pub fn local_moran(values: &[f64], weights: &SpatialWeights) -> Result<Vec<Option<f64>>> {
    let c = center(values, weights)?;
    let lag = c.lag(&c.z);
    Ok((0..c.weights.n())
        .map(|i| (c.position[i] != usize::MAX).then(|| c.z[i] * lag[i] / c.m2))
        .collect())
}

fn check_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() || thresholds.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
        return Err(AutocorrError::InvalidThresholds);
    }
    Ok(())
}

/// Conditional permutation for every active region: `x_i` stays fixed and
/// its neighbors' `y` values are drawn without replacement from the other
/// `n - 1` active regions. `scale` converts `zx_i · lag` into the statistic.
#[allow(clippy::too_many_arguments)]
fn conditional_permutation(
    cx: &Centered,
    zy_active: &[f64],
    zy_self: &[f64],
    scale: f64,
    observed: &[f64],
    n_permutations: usize,
    seed: u64,
) -> Result<Vec<Option<f64>>> {
    let n = cx.n();
    for &i in &cx.active {
        if cx.weights.cardinality(i) > n - 1 {
            return Err(AutocorrError::Overconnected(cx.weights.ids()[i].clone()));
        }
    }
    let total_y: f64 = zy_active.iter().sum();
    Ok((0..cx.weights.n())
        .into_par_iter()
        .map(|i| {
            let k = cx.position[i];
            if k == usize::MAX {
                return None;
            }
            let row = cx.weights.neighbors(i);
            let w_sum: f64 = row.iter().map(|&(_, w)| w).sum();
            let zx = cx.z[i];
            // mean of the other regions' y deviations, times the row sum
            let expected = zx * (total_y - zy_self[i]) / (n as f64 - 1.0) * w_sum * scale;
            let threshold = (observed[i] - expected).abs();
            let mut extreme = 0usize;
            for p in 0..n_permutations as u64 {
                let mut r = rng::stream(seed, i as u64 + 1, p);
                let draw = index::sample(&mut r, n - 1, row.len());
                let lag: f64 = draw
                    .iter()
                    .zip(row)
                    .map(|(d, &(_, w))| w * zy_active[if d >= k { d + 1 } else { d }])
                    .sum();
                if (zx * lag * scale - expected).abs() >= threshold {
                    extreme += 1;
                }
            }
            Some((extreme + 1) as f64 / (n_permutations + 1) as f64)
        })
        .collect())
}

fn assemble(
    kind: LisaKind,
    c: &Centered,
    z_out: &[f64],
    lag_out: &[f64],
    local: &[f64],
    pseudo_p: Vec<Option<f64>>,
    n_permutations: usize,
    seed: u64,
    thresholds: &[f64],
) -> LisaResult {
    let records = (0..c.weights.n())
        .map(|i| {
            let id = c.weights.ids()[i].clone();
            match pseudo_p[i] {
                None => LocalRecord {
                    id,
                    z: None,
                    lag: None,
                    local_i: None,
                    quadrant: None,
                    pseudo_p: None,
                    significance: Significance::Isolate,
                },
                Some(p) => LocalRecord {
                    id,
                    z: Some(z_out[i]),
                    lag: Some(lag_out[i]),
                    local_i: Some(local[i]),
                    quadrant: Some(Quadrant::of(z_out[i], lag_out[i])),
                    pseudo_p: Some(p),
                    significance: Significance::classify(p, thresholds),
                },
            }
        })
        .collect();
    LisaResult {
        kind,
        n_used: c.n(),
        n_permutations,
        seed,
        thresholds: thresholds.to_vec(),
        records,
    }
}

/// Local Moran with conditional-permutation pseudo p-values (two-sided around
/// the conditional expectation), scatterplot quadrants and significance
/// classes.
pub fn lisa_classify(
    values: &[f64],
    weights: &SpatialWeights,
    n_permutations: usize,
    seed: u64,
    thresholds: &[f64],
) -> Result<LisaResult> {
    if n_permutations < MIN_PERMUTATIONS {
        return Err(AutocorrError::TooFewPermutations(n_permutations));
    }
    check_thresholds(thresholds)?;
    let c = center(values, weights)?;
    let lag = c.lag(&c.z);
    let local: Vec<f64> = (0..c.weights.n()).map(|i| c.z[i] * lag[i] / c.m2).collect();
    let z_active: Vec<f64> = c.active.iter().map(|&i| c.z[i]).collect();
    let p = conditional_permutation(&c, &z_active, &c.z, 1.0 / c.m2, &local, n_permutations, seed)?;
    let sd = c.m2.sqrt();
    let z_std: Vec<f64> = c.z.iter().map(|v| v / sd).collect();
    let lag_std: Vec<f64> = lag.iter().map(|v| v / sd).collect();
    Ok(assemble(
        LisaKind::Univariate,
        &c,
        &z_std,
        &lag_std,
        &local,
        p,
        n_permutations,
        seed,
        thresholds,
    ))
}

/// Bivariate local Moran `zx_i · lag(zy)_i / sqrt(m2x · m2y)`; with `y = x`
/// this is [`local_moran`]. The permutation keeps `x_i` and draws the
/// neighbors' `y` values from the other regions.
pub fn bivariate_local_moran(
    x: &[f64],
    y: &[f64],
    weights: &SpatialWeights,
    n_permutations: usize,
    seed: u64,
    thresholds: &[f64],
) -> Result<LisaResult> {
    if n_permutations < MIN_PERMUTATIONS {
        return Err(AutocorrError::TooFewPermutations(n_permutations));
    }
    check_thresholds(thresholds)?;
    let cx = center(x, weights)?;
    let cy = center(y, weights)?;
    let lag_y = cy.lag(&cy.z);
    let scale = 1.0 / (cx.m2 * cy.m2).sqrt();
    let local: Vec<f64> = (0..cx.weights.n()).map(|i| cx.z[i] * lag_y[i] * scale).collect();
    let zy_active: Vec<f64> = cy.active.iter().map(|&i| cy.z[i]).collect();
    let p = conditional_permutation(&cx, &zy_active, &cy.z, scale, &local, n_permutations, seed)?;
    let (sx, sy) = (cx.m2.sqrt(), cy.m2.sqrt());
    let zx_std: Vec<f64> = cx.z.iter().map(|v| v / sx).collect();
    let lag_std: Vec<f64> = lag_y.iter().map(|v| v / sy).collect();
    Ok(assemble(
        LisaKind::Bivariate,
        &cx,
        &zx_std,
        &lag_std,
        &local,
        p,
        n_permutations,
        seed,
        thresholds,
    ))
}

/// Re-bucket every region of a LISA result against `thresholds`.
pub fn significance_map(result: &LisaResult, thresholds: &[f64]) -> Result<Vec<(String, Significance)>> {
    check_thresholds(thresholds)?;
    Ok(result
        .records
        .iter()
        .map(|r| {
            let class = match r.pseudo_p {
                Some(p) => Significance::classify(p, thresholds),
                None => Significance::Isolate,
            };
            (r.id.clone(), class)
        })
        .collect())
}

/// Copy LISA fields onto the matching features of a GeoJSON
/// FeatureCollection (`lisa_i`, `lisa_p`, `lisa_quadrant`, `lisa_class`).
/// Features whose id is not in the result are left untouched.
pub fn merge_geojson(collection: &Value, id_property: &str, result: &LisaResult) -> Value {
    let mut out = collection.clone();
    if let Some(features) = out.get_mut("features").and_then(Value::as_array_mut) {
        for feature in features {
            let id = match feature.get("properties").and_then(|p| p.get(id_property)) {
                Some(Value::String(s)) => s.clone(),
                Some(Value::Number(n)) => n.as_i64().map_or_else(|| n.to_string(), |i| i.to_string()),
                _ => continue,
            };
            let Some(record) = result.records.iter().find(|r| r.id == id) else {
                continue;
            };
            if let Some(props) = feature.get_mut("properties").and_then(Value::as_object_mut) {
                props.insert("lisa_i".into(), json!(record.local_i));
                props.insert("lisa_p".into(), json!(record.pseudo_p));
                props.insert("lisa_quadrant".into(), json!(record.quadrant));
                props.insert("lisa_class".into(), json!(record.significance.label()));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(n: usize) -> SpatialWeights {
        let ids = (0..n).map(|i| i.to_string()).collect();
        let adj = (0..n).map(|i| vec![(i + n - 1) % n, (i + 1) % n]).collect();
        SpatialWeights::from_adjacency(ids, adj).unwrap()
    }

    #[test]
    fn alternating_cycle_is_perfectly_negative() {
        let w = ring(4);
        let x = [1.0, -1.0, 1.0, -1.0];
        assert_eq!(global_moran(&x, &w).unwrap().i, -1.0);
        assert!(local_moran(&x, &w).unwrap().iter().all(|v| *v == Some(-1.0)));
    }

    #[test]
    fn two_region_pair() {
        let w = SpatialWeights::from_adjacency(
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            vec![vec![1], vec![0], vec![3], vec![2]],
        )
        .unwrap();
        // two disjoint pairs with opposite deviations within each pair
        let g = global_moran(&[3.0, 7.0, 2.0, 8.0], &w).unwrap();
        assert!((g.i + 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_values_are_degenerate() {
        assert_eq!(global_moran(&[2.5; 4], &ring(4)), Err(AutocorrError::Degenerate));
        assert_eq!(
            global_moran(&[1.0, 2.0], &ring(4)),
            Err(AutocorrError::Alignment { values: 2, regions: 4 })
        );
    }

    #[test]
    fn isolates_are_missing() {
        let w = SpatialWeights::from_adjacency(
            (0..5).map(|i| i.to_string()).collect(),
            vec![vec![1, 3], vec![0, 2], vec![1, 3], vec![0, 2], vec![]],
        )
        .unwrap();
        let x = [1.0, 4.0, 2.0, 8.0, 100.0];
        let local = local_moran(&x, &w).unwrap();
        assert_eq!(local[4], None);
        let g = global_moran(&x, &w).unwrap();
        assert_eq!(g.n_used, 4);
        assert_eq!(g.isolates, vec!["4"]);
        let sum: f64 = local.iter().flatten().sum();
        assert!((sum - 4.0 * g.i).abs() < 1e-12);
    }

    #[test]
    fn significance_buckets() {
        let t = DEFAULT_THRESHOLDS;
        assert_eq!(Significance::classify(0.012, &t).label(), "p<.05");
        assert_eq!(Significance::classify(0.009, &t).label(), "p<.01");
        assert_eq!(Significance::classify(0.0005, &t).label(), "p<.001");
        assert_eq!(Significance::classify(0.20, &t).label(), "ns");
    }

    #[test]
    fn quadrants() {
        assert_eq!(Quadrant::of(1.0, 1.0), Quadrant::HH);
        assert_eq!(Quadrant::of(-1.0, -1.0), Quadrant::LL);
        assert_eq!(Quadrant::of(-1.0, 1.0), Quadrant::LH);
        assert_eq!(Quadrant::of(1.0, -1.0), Quadrant::HL);
        assert_eq!(Quadrant::of(0.0, 0.0), Quadrant::LL);
    }

    #[test]
    fn high_region_ringed_by_low_is_high_low() {
        // star: hub 0 linked to 6 leaves on a cycle
        let n = 7;
        let mut adj: Vec<Vec<usize>> = vec![(1..n).collect()];
        for i in 1..n {
            let prev = if i == 1 { n - 1 } else { i - 1 };
            let next = if i == n - 1 { 1 } else { i + 1 };
            adj.push(vec![0, prev, next]);
        }
        let w = SpatialWeights::from_adjacency((0..n).map(|i| i.to_string()).collect(), adj).unwrap();
        let x = [10.0, 1.0, 1.2, 0.9, 1.1, 1.0, 0.8];
        let r = lisa_classify(&x, &w, 99, 1, &DEFAULT_THRESHOLDS).unwrap();
        assert_eq!(r.records[0].quadrant, Some(Quadrant::HL));
    }

    #[test]
    fn minimum_p_is_one_over_m_plus_one() {
        let w = ring(20);
        let x: Vec<f64> = (0..20).map(|i| if i < 10 { 1.0 } else { 0.0 } + 0.01 * i as f64).collect();
        let g = moran_permutation(&x, &w, 199, 3).unwrap();
        assert!(g.pseudo_p.unwrap() >= 1.0 / 200.0);
        assert_eq!(g.n_permutations, 199);
        assert!(matches!(
            moran_permutation(&x, &w, 50, 3),
            Err(AutocorrError::TooFewPermutations(50))
        ));
    }

    #[test]
    fn bivariate_with_itself_is_univariate() {
        let w = ring(12);
        let x: Vec<f64> = (0..12).map(|i| ((i * 7) % 5) as f64 + 0.3 * i as f64).collect();
        let uni = lisa_classify(&x, &w, 199, 9, &DEFAULT_THRESHOLDS).unwrap();
        let bi = bivariate_local_moran(&x, &x, &w, 199, 9, &DEFAULT_THRESHOLDS).unwrap();
        for (a, b) in uni.records.iter().zip(&bi.records) {
            assert!((a.local_i.unwrap() - b.local_i.unwrap()).abs() < 1e-12);
            assert_eq!(a.pseudo_p, b.pseudo_p);
            assert_eq!(a.quadrant, b.quadrant);
        }
    }

    #[test]
    fn geojson_merge() {
        let w = ring(4);
        let r = lisa_classify(&[1.0, 2.0, 3.0, 5.0], &w, 99, 1, &DEFAULT_THRESHOLDS).unwrap();
        let fc = json!({"type": "FeatureCollection", "features": [
            {"type": "Feature", "properties": {"id": 2}, "geometry": null}
        ]});
        let out = merge_geojson(&fc, "id", &r);
        let props = &out["features"][0]["properties"];
        assert_eq!(props["lisa_i"], json!(r.records[2].local_i));
        assert!(props["lisa_class"].is_string());
    }
}
