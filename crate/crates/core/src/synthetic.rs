//! Seeded synthetic inputs: lattice geometry and weights, a municipal-style
//! panel, and data drawn from known reflective path models.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Value};

use crate::panel::{PanelDataset, RegionId};
use crate::pls::{Construct, Edge, PathModel, PlsData};
use crate::rng;
use crate::weights::{Polygon, RegionGeometry, SpatialWeights};

/// Region code of lattice cell `(row, col)`.
pub fn cell_id(cols: usize, row: usize, col: usize) -> String {
    format!("M{:03}", row * cols + col)
}

/// Unit squares on a `rows × cols` lattice, row-major.
pub fn grid_geometry(rows: usize, cols: usize) -> Vec<RegionGeometry> {
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let (x, y) = (c as f64, r as f64);
            out.push(RegionGeometry {
                id: cell_id(cols, r, c),
                polygons: vec![Polygon::rect(x, y, x + 1.0, y + 1.0)],
            });
        }
    }
    out
}

/// Lattice contiguity computed directly (queen or rook), binary.
pub fn grid_weights(rows: usize, cols: usize, queen: bool) -> SpatialWeights {
    let mut adj = vec![Vec::new(); rows * cols];
    for r in 0..rows as isize {
        for c in 0..cols as isize {
            for dr in -1..=1isize {
                for dc in -1..=1isize {
                    if (dr, dc) == (0, 0) || (!queen && dr != 0 && dc != 0) {
                        continue;
                    }
                    let (rr, cc) = (r + dr, c + dc);
                    if rr >= 0 && cc >= 0 && rr < rows as isize && cc < cols as isize {
                        adj[(r as usize) * cols + c as usize].push(rr as usize * cols + cc as usize);
                    }
                }
            }
        }
    }
    let ids = (0..rows * cols).map(|i| cell_id(cols, i / cols, i % cols)).collect();
    SpatialWeights::from_adjacency(ids, adj).expect("lattice weights are valid")
}

/// The lattice as a GeoJSON FeatureCollection with a `code` property.
pub fn grid_geojson(rows: usize, cols: usize) -> Value {
    let features: Vec<Value> = grid_geometry(rows, cols)
        .into_iter()
        .map(|g| {
            let ring: Vec<[f64; 2]> = g.polygons[0]
                .exterior
                .iter()
                .copied()
                .chain(std::iter::once(g.polygons[0].exterior[0]))
                .collect();
            json!({
                "type": "Feature",
                "properties": {"code": g.id},
                "geometry": {"type": "Polygon", "coordinates": [ring]},
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

/// Two value blocks (left half high, right half low) plus small noise.
pub fn two_block_surface(rows: usize, cols: usize, noise: f64, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, 0, 0);
    (0..rows * cols)
        .map(|i| {
            let base = if i % cols < cols / 2 { 10.0 } else { 0.0 };
            base + noise * r.sample::<f64, _>(StandardNormal)
        })
        .collect()
}

pub fn normal_vector(n: usize, seed: u64, counter: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, 0, counter);
    (0..n).map(|_| r.sample(StandardNormal)).collect()
}

pub const PANEL_INDICATORS: [&str; 7] = ["TIC", "CBO", "POB", "IUPP", "DCNT", "FUNDEB", "PIB"];

/// Municipal-style panel on a `rows × cols` lattice.
///
/// Columns are split into 7 microregions (the first cell of each is its
/// capital). A smooth spatial field drives knowledge (IUPP, DCNT, FUNDEB),
/// which drives digital activity (TIC, CBO), which drives population (POB)
/// and output (PIB). PIB is missing in the final year.
pub fn regional_panel(rows: usize, cols: usize, years: std::ops::RangeInclusive<i32>, seed: u64) -> PanelDataset {
    let groups = 7.min(cols);
    let regions: Vec<RegionId> = (0..rows * cols)
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            let g = c * groups / cols;
            let first_col = (0..cols).find(|&cc| cc * groups / cols == g).expect("group column");
            RegionId {
                code: cell_id(cols, r, c),
                name: format!("Municipio {i}"),
                microregion: format!("MR{}", g + 1),
                capital: r == 0 && c == first_col,
            }
        })
        .collect();
    let years: Vec<i32> = years.collect();
    let last_year = *years.last().expect("at least one year");
    let mut d = PanelDataset::new(
        regions,
        PANEL_INDICATORS.iter().map(|s| s.to_string()).collect(),
        years.clone(),
    )
    .expect("valid panel");
    let mut base = rng::stream(seed, 1, 0);
    let field: Vec<f64> = (0..rows * cols)
        .map(|i| {
            let (r, c) = ((i / cols) as f64, (i % cols) as f64);
            (r / 3.0).sin() + (c / 4.0).cos() + 0.4 * base.sample::<f64, _>(StandardNormal)
        })
        .collect();
    for (y, &year) in years.iter().enumerate() {
        let mut r = rng::stream(seed, 2, y as u64);
        let mut e = || r.sample::<f64, _>(StandardNormal);
        let growth = 0.04 * y as f64;
        for (i, &u) in field.iter().enumerate() {
            let ce = u + 0.3 * e();
            let aed = 0.8 * ce + 0.4 * e();
            let ahu = 0.7 * aed + 0.5 * e();
            let cer = 0.7 * aed + 0.5 * e();
            let pob = 2.0e4 * (0.6 * ahu + growth * 0.2 + 0.1 * e()).exp();
            let values = [
                300.0 * (0.5 * aed + growth + 0.15 * e()).exp(),
                40.0 * (0.5 * aed + growth + 0.15 * e()).exp(),
                pob,
                100.0 * (0.3 * ce + 0.1 * e()).exp(),
                50.0 * (0.3 * ce + 0.1 * e()).exp(),
                1.0e6 * (0.3 * ce + growth + 0.1 * e()).exp(),
                pob * 1.5e4 * (0.4 * cer + growth + 0.1 * e()).exp(),
            ];
            for (k, v) in values.iter().enumerate() {
                let missing = PANEL_INDICATORS[k] == "PIB" && year == last_year;
                d.set(i, k, y, (!missing).then_some(*v));
            }
        }
    }
    d
}

/// `A → B`, one indicator each, `b = beta·a + sqrt(1 - beta²)·e`.
pub fn single_indicator_chain(n: usize, beta: f64, seed: u64) -> (PathModel, PlsData) {
    let model = PathModel::new(
        vec![
            Construct {
                name: "A".into(),
                indicators: vec!["a".into()],
            },
            Construct {
                name: "B".into(),
                indicators: vec!["b".into()],
            },
        ],
        vec![Edge {
            from: "A".into(),
            to: "B".into(),
        }],
    )
    .expect("valid model");
    let mut r = rng::stream(seed, 0, 0);
    let resid = (1.0 - beta * beta).max(0.0).sqrt();
    let mut x = DMatrix::zeros(n, 2);
    for i in 0..n {
        let a: f64 = r.sample(StandardNormal);
        let e: f64 = r.sample(StandardNormal);
        x[(i, 0)] = a;
        x[(i, 1)] = beta * a + resid * e;
    }
    (model, PlsData::new(vec!["a".into(), "b".into()], x).expect("shape"))
}

/// `X → Y` with reflective blocks `x1..xk`, `y1..yk` sharing `loadings`.
pub fn two_construct(n: usize, loadings: &[f64], beta: f64, seed: u64) -> (PathModel, PlsData) {
    let k = loadings.len();
    let xs: Vec<String> = (1..=k).map(|i| format!("x{i}")).collect();
    let ys: Vec<String> = (1..=k).map(|i| format!("y{i}")).collect();
    let model = PathModel::new(
        vec![
            Construct {
                name: "X".into(),
                indicators: xs.clone(),
            },
            Construct {
                name: "Y".into(),
                indicators: ys.clone(),
            },
        ],
        vec![Edge {
            from: "X".into(),
            to: "Y".into(),
        }],
    )
    .expect("valid model");
    let mut r = rng::stream(seed, 0, 0);
    let mut x = DMatrix::zeros(n, 2 * k);
    for i in 0..n {
        let xi: f64 = r.sample(StandardNormal);
        let eta = beta * xi + (1.0 - beta * beta).sqrt() * r.sample::<f64, _>(StandardNormal);
        for (c, &l) in loadings.iter().enumerate() {
            let u = (1.0 - l * l).sqrt();
            x[(i, c)] = l * xi + u * r.sample::<f64, _>(StandardNormal);
            x[(i, k + c)] = l * eta + u * r.sample::<f64, _>(StandardNormal);
        }
    }
    let names = xs.into_iter().chain(ys).collect();
    (model, PlsData::new(names, x).expect("shape"))
}

/// Data for [`PathModel::default_regional`] with strong structural paths
/// (knowledge → digital activity → population and output).
pub fn regional_model_data(n: usize, seed: u64) -> (PathModel, PlsData) {
    let model = PathModel::default_regional();
    let mut r = rng::stream(seed, 0, 0);
    let names: Vec<String> = model.indicators().map(String::from).collect();
    let mut x = DMatrix::zeros(n, names.len());
    let mut e = || r.sample::<f64, _>(StandardNormal);
    for i in 0..n {
        let ce = e();
        let aed = 0.95 * ce + 0.31 * e();
        let ahu = 0.9 * aed + 0.43 * e();
        let cer = 0.95 * aed + 0.31 * e();
        let row = [
            0.9 * ce + 0.44 * e(),
            0.85 * ce + 0.53 * e(),
            0.8 * ce + 0.6 * e(),
            0.92 * aed + 0.39 * e(),
            0.88 * aed + 0.47 * e(),
            ahu,
            cer,
        ];
        for (c, v) in row.iter().enumerate() {
            x[(i, c)] = *v;
        }
    }
    (model, PlsData::new(names, x).expect("shape"))
}
