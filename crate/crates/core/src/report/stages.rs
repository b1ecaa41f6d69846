//! Per-command computations. Each returns the files it wants written.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{to_json, CommandError, PipelineConfig, StageOutput, DEFAULT_BOOTSTRAP};
use crate::autocorr::{self, AutocorrError, LisaResult};
use crate::growth::{self, GrowthError, Grouping};
use crate::normality::{self, NormalityResult};
use crate::panel::{self, PanelDataset, PanelError, PanelSchema, RegionRowMode};
use crate::pls::{self, FitConfig, PathModel, PlsData, PlsError};
use crate::rng::stage_seed;
use crate::stats::display3;
use crate::weights::{self, GalHeader, SpatialWeights, WeightsError};

/// Offending identifiers carried by a module error.
trait Identify: Display {
    fn identifiers(&self) -> Vec<String>;
}

impl Identify for PanelError {
    fn identifiers(&self) -> Vec<String> {
        match self {
            PanelError::Parse { line, .. } | PanelError::NonFinite { line, .. } => vec![format!("line={line}")],
            PanelError::MissingColumn(c) => vec![format!("column={c}")],
            PanelError::Conflict {
                line,
                region,
                indicator,
                year,
            } => vec![
                format!("line={line}"),
                format!("region={region}"),
                format!("indicator={indicator}"),
                format!("year={year}"),
            ],
            PanelError::RegionConflict { line, region } | PanelError::EmptyMicroregion { line, region } => {
                vec![format!("line={line}"), format!("region={region}")]
            }
            PanelError::InsufficientData { indicator, year, .. } | PanelError::DegenerateScale { indicator, year } => {
                vec![format!("indicator={indicator}"), format!("year={year}")]
            }
            PanelError::UnknownIndicator(i) | PanelError::DuplicateIndicator(i) => vec![format!("indicator={i}")],
            PanelError::UnknownYear(y) => vec![format!("year={y}")],
            PanelError::NoCapital(m) => vec![format!("microregion={m}")],
            PanelError::InvalidCut(_) | PanelError::Invalid(_) | PanelError::Io(_) => vec![],
        }
    }
}

impl Identify for WeightsError {
    fn identifiers(&self) -> Vec<String> {
        match self {
            WeightsError::InvalidRing { region, .. } | WeightsError::EmptyGeometry(region) => {
                vec![format!("region={region}")]
            }
            WeightsError::Format { line, .. } => vec![format!("line={line}")],
            WeightsError::UnknownNeighbor { line, id } => vec![format!("line={line}"), format!("region={id}")],
            WeightsError::Invalid(_) | WeightsError::Io(_) => vec![],
        }
    }
}

impl Identify for AutocorrError {
    fn identifiers(&self) -> Vec<String> {
        match self {
            AutocorrError::NonFinite(r) | AutocorrError::Overconnected(r) => vec![format!("region={r}")],
            _ => vec![],
        }
    }
}

impl Identify for PlsError {
    fn identifiers(&self) -> Vec<String> {
        match self {
            PlsError::UnknownIndicator(i) | PlsError::DegenerateIndicator(i) => vec![format!("indicator={i}")],
            PlsError::MissingValue { row, column } => vec![format!("row={row}"), format!("indicator={column}")],
            PlsError::Rank(c) => vec![format!("construct={c}")],
            PlsError::Resampling { draw, .. } => vec![format!("draw={draw}")],
            _ => vec![],
        }
    }
}

impl Identify for GrowthError {
    fn identifiers(&self) -> Vec<String> {
        match self {
            GrowthError::Domain { index, .. } => vec![format!("observation={index}")],
            GrowthError::Panel(e) => e.identifiers(),
            _ => vec![],
        }
    }
}

fn fail<E: Identify>(module: &'static str, operation: &'static str) -> impl Fn(E) -> CommandError {
    move |e| CommandError::input(module, operation, e.to_string(), e.identifiers())
}

fn with_context<E: Identify>(
    module: &'static str,
    operation: &'static str,
    context: Vec<String>,
) -> impl Fn(E) -> CommandError {
    move |e| {
        let mut ids = context.clone();
        ids.extend(e.identifiers());
        CommandError::input(module, operation, e.to_string(), ids)
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>, CommandError> {
    fs::read(path).map_err(|e| {
        CommandError::input("cli_report", "read_input", e.to_string(), vec![format!("path={}", path.display())])
    })
}

fn missing_input(operation: &str, flag: &str) -> CommandError {
    CommandError::input(
        "cli_report",
        operation,
        format!("no {flag} given"),
        vec![format!("flag={flag}")],
    )
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>, CommandError> {
    let internal = |e: csv::Error| CommandError::internal("cli_report", "serialize", e.to_string(), vec![]);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(internal)?;
    for row in rows {
        w.write_record(&row).map_err(internal)?;
    }
    w.into_inner()
        .map_err(|e| CommandError::internal("cli_report", "serialize", e.to_string(), vec![]))
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else {
        String::new()
    }
}

fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}

fn opt_display(v: Option<f64>) -> String {
    v.map_or_else(String::new, display3)
}

/// Loaded inputs shared by the stages of one run.
#[derive(Default)]
pub struct Inputs {
    panel: Option<(PathBuf, PanelDataset)>,
    standardized: Option<PanelDataset>,
    weights: Option<LoadedWeights>,
}

struct LoadedWeights {
    weights: SpatialWeights,
    header: GalHeader,
    geojson: Option<Value>,
    source: PathBuf,
}

impl Inputs {
    fn panel(&mut self, cfg: &PipelineConfig) -> Result<(&PanelDataset, PathBuf), CommandError> {
        if self.panel.is_none() {
            let path = cfg.panel.clone().ok_or_else(|| missing_input("load_panel", "--input"))?;
            let bytes = read_input(&path)?;
            let mut schema = PanelSchema::default();
            if path.extension().is_some_and(|e| e == "tsv") {
                schema.delimiter = b'\t';
            }
            let ds = panel::load_panel(&bytes[..], &schema)
                .map_err(with_context("panel_core", "load_panel", vec![format!("path={}", path.display())]))?;
            self.panel = Some((path, ds));
        }
        let (path, ds) = self.panel.as_ref().expect("loaded");
        Ok((ds, path.clone()))
    }

    fn standardized(&mut self, cfg: &PipelineConfig) -> Result<(&PanelDataset, PathBuf), CommandError> {
        let (_, path) = self.panel(cfg)?;
        if self.standardized.is_none() {
            let raw = &self.panel.as_ref().expect("loaded").1;
            let z = panel::standardize(raw).map_err(fail("panel_core", "standardize"))?;
            self.standardized = Some(z);
        }
        Ok((self.standardized.as_ref().expect("computed"), path))
    }

    fn weights(&mut self, cfg: &PipelineConfig) -> Result<&LoadedWeights, CommandError> {
        if self.weights.is_none() {
            let loaded = if let Some(path) = &cfg.geometry {
                let bytes = read_input(path)?;
                let ctx = vec![format!("path={}", path.display())];
                let regions = weights::load_geojson(&bytes[..], &cfg.id_property)
                    .map_err(with_context("spatial_weights", "load_geojson", ctx.clone()))?;
                let w = weights::queen_contiguity(&regions)
                    .map_err(with_context("spatial_weights", "queen_contiguity", ctx))?;
                let geojson: Value = serde_json::from_slice(&bytes).expect("parsed above");
                LoadedWeights {
                    weights: w,
                    header: GalHeader {
                        layer: path.file_stem().map(|s| s.to_string_lossy().into_owned()),
                        id_variable: Some(cfg.id_property.clone()),
                    },
                    geojson: Some(geojson),
                    source: path.clone(),
                }
            } else if let Some(path) = &cfg.gal {
                let bytes = read_input(path)?;
                let (w, header) = weights::load_gal(&bytes[..]).map_err(with_context(
                    "spatial_weights",
                    "load_gal",
                    vec![format!("path={}", path.display())],
                ))?;
                LoadedWeights {
                    weights: w,
                    header,
                    geojson: None,
                    source: path.clone(),
                }
            } else {
                return Err(missing_input("weights", "--geometry or --gal"));
            };
            self.weights = Some(loaded);
        }
        Ok(self.weights.as_ref().expect("loaded"))
    }
}

fn with_seed<T: Serialize>(seed: u64, body: T) -> Value {
    json!({"seed": seed, "results": body})
}

/// Years in which `indicator` has at least one observation.
fn observed_years(ds: &PanelDataset, indicator: &str) -> Vec<i32> {
    ds.years()
        .iter()
        .copied()
        .filter(|&y| ds.cross_section(indicator, y).is_ok_and(|c| !c.values.is_empty()))
        .collect()
}

fn first_and_last(years: &[i32]) -> Vec<i32> {
    match (years.first(), years.last()) {
        (Some(&a), Some(&b)) if a != b => vec![a, b],
        (Some(&a), _) => vec![a],
        _ => vec![],
    }
}

pub(crate) fn describe(cfg: &PipelineConfig, inputs: &mut Inputs) -> Result<StageOutput, CommandError> {
    let (ds, path) = inputs.panel(cfg)?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for ind in ds.indicators() {
        for &year in ds.years() {
            match panel::describe(ds, ind, year) {
                Ok(s) => {
                    rows.push(vec![
                        ind.clone(),
                        year.to_string(),
                        s.n.to_string(),
                        num(s.mean),
                        num(s.sd),
                        num(s.variance),
                        num(s.coef_var),
                        num(s.min),
                        num(s.median),
                        num(s.max),
                        num(s.range),
                        format!("{:.3}", s.mean),
                        format!("{:.3}", s.sd),
                        String::new(),
                    ]);
                    records.push(json!({"indicator": ind, "year": year, "stats": s}));
                }
                Err(e @ PanelError::InsufficientData { .. }) => {
                    let n = ds.cross_section(ind, year).map_or(0, |c| c.values.len());
                    let mut row = vec![ind.clone(), year.to_string(), n.to_string()];
                    row.extend(std::iter::repeat_n(String::new(), 10));
                    row.push(e.to_string());
                    rows.push(row);
                    records.push(json!({"indicator": ind, "year": year, "reason": e.to_string()}));
                }
                Err(e) => return Err(fail("panel_core", "describe")(e)),
            }
        }
    }
    let describe_csv = csv_bytes(
        &[
            "indicator",
            "year",
            "n",
            "mean",
            "sd",
            "variance",
            "coef_var",
            "min",
            "median",
            "max",
            "range",
            "mean_display",
            "sd_display",
            "reason",
        ],
        rows,
    )?;

    let mut pct_rows = Vec::new();
    let mut pct_records = Vec::new();
    for ind in ds.indicators() {
        let Some(&year) = observed_years(ds, ind).last() else {
            continue;
        };
        match panel::classify_percentile(ds, ind, year, cfg.percentile_cut) {
            Ok(c) => {
                for l in &c.labels {
                    pct_rows.push(vec![
                        ind.clone(),
                        year.to_string(),
                        num(c.cut),
                        num(c.threshold),
                        l.region.clone(),
                        num(l.value),
                        serde_json::to_value(l.class).expect("enum").as_str().unwrap_or_default().to_string(),
                    ]);
                }
                pct_records.push(json!({"indicator": ind, "year": year, "classes": c}));
            }
            Err(e @ PanelError::InsufficientData { .. }) => {
                pct_records.push(json!({"indicator": ind, "year": year, "reason": e.to_string()}));
            }
            Err(e) => return Err(fail("panel_core", "classify_percentile")(e)),
        }
    }
    let pct_csv = csv_bytes(
        &["indicator", "year", "cut", "threshold", "region", "value", "class"],
        pct_rows,
    )?;

    let mut micro_rows = Vec::new();
    let mut micro_tables = Vec::new();
    for ind in ds.indicators() {
        let table = match panel::microregion_table(ds, ind, RegionRowMode::Capital) {
            Err(PanelError::NoCapital(_)) => panel::microregion_table(ds, ind, RegionRowMode::Aggregate),
            other => other,
        };
        let table = match table {
            Ok(t) => t,
            // a cross-section with one value or zero spread has no z-scores
            Err(PanelError::DegenerateScale { .. }) => continue,
            Err(e) => return Err(fail("panel_core", "microregion_table")(e)),
        };
        let mode = serde_json::to_value(table.mode).expect("enum");
        for row in &table.rows {
            for (year, v) in table.years.iter().zip(&row.values) {
                micro_rows.push(vec![
                    ind.clone(),
                    mode.as_str().unwrap_or_default().to_string(),
                    row.microregion.clone(),
                    row.region.clone().unwrap_or_default(),
                    year.to_string(),
                    opt_num(*v),
                    opt_display(*v),
                ]);
            }
        }
        micro_tables.push(table);
    }
    let micro_csv = csv_bytes(
        &["indicator", "mode", "microregion", "region", "year", "z", "z_display"],
        micro_rows,
    )?;

    let body = json!({
        "panel": ds.manifest(),
        "descriptive": records,
        "percentiles": pct_records,
        "microregions": micro_tables,
    });
    Ok(StageOutput {
        files: vec![
            ("describe.csv".into(), describe_csv),
            ("percentiles.csv".into(), pct_csv),
            ("microregions.csv".into(), micro_csv),
            ("describe.json".into(), to_json(&with_seed(cfg.seed, body))?),
        ],
        inputs: vec![path],
        seeds: BTreeMap::new(),
    })
}

pub(crate) fn standardize(cfg: &PipelineConfig, inputs: &mut Inputs) -> Result<StageOutput, CommandError> {
    let (z, path) = inputs.standardized(cfg)?;
    let mut table = Vec::new();
    panel::write_panel(z, &mut table, b',').map_err(fail("panel_core", "write_panel"))?;
    let manifest = to_json(&with_seed(cfg.seed, z.manifest()))?;
    Ok(StageOutput {
        files: vec![
            ("standardized.csv".into(), table),
            ("standardized.json".into(), manifest),
        ],
        inputs: vec![path],
        seeds: BTreeMap::new(),
    })
}

pub(crate) fn normality(cfg: &PipelineConfig, inputs: &mut Inputs) -> Result<StageOutput, CommandError> {
    let (ds, path) = inputs.panel(cfg)?;
    let alpha = cfg.test_alpha();
    let mut rows = Vec::new();
    let mut records = Vec::new();
    type Test = fn(&[f64], f64) -> Result<NormalityResult, normality::NormalityError>;
    let tests: [(&str, Test); 2] = [
        ("shapiro_wilk", normality::shapiro_wilk),
        ("ryan_joiner", normality::ryan_joiner),
    ];
    for ind in ds.indicators() {
        for &year in ds.years() {
            let cs = ds.cross_section(ind, year).map_err(fail("panel_core", "cross_section"))?;
            for (name, test) in tests {
                match test(&cs.values, alpha) {
                    Ok(r) => {
                        let decision = serde_json::to_value(r.decision).expect("enum");
                        rows.push(vec![
                            ind.clone(),
                            year.to_string(),
                            name.into(),
                            r.n.to_string(),
                            num(r.statistic),
                            num(r.p_value),
                            format!("{:.3}", r.statistic),
                            r.p_display(),
                            num(r.alpha),
                            decision.as_str().unwrap_or_default().to_string(),
                            String::new(),
                        ]);
                        records.push(json!({"indicator": ind, "year": year, "result": r}));
                    }
                    Err(e) => {
                        let mut row = vec![ind.clone(), year.to_string(), name.into(), cs.values.len().to_string()];
                        row.extend(std::iter::repeat_n(String::new(), 4));
                        row.push(num(alpha));
                        row.push(String::new());
                        row.push(e.to_string());
                        rows.push(row);
                        records.push(json!({"indicator": ind, "year": year, "test": name, "reason": e.to_string()}));
                    }
                }
            }
        }
    }
    let table = csv_bytes(
        &[
            "indicator",
            "year",
            "test",
            "n",
            "statistic",
            "p_value",
            "statistic_display",
            "p_display",
            "alpha",
            "decision",
            "reason",
        ],
        rows,
    )?;
    Ok(StageOutput {
        files: vec![
            ("normality.csv".into(), table),
            ("normality.json".into(), to_json(&with_seed(cfg.seed, records))?),
        ],
        inputs: vec![path],
        seeds: BTreeMap::new(),
    })
}

pub(crate) fn weights(cfg: &PipelineConfig, inputs: &mut Inputs) -> Result<StageOutput, CommandError> {
    let lw = inputs.weights(cfg)?;
    let summary = weights::connectivity_summary(&lw.weights);
    let mut gal = Vec::new();
    weights::save_gal(&lw.weights, &lw.header, &mut gal)
        .map_err(|e| CommandError::internal("spatial_weights", "save_gal", e.to_string(), vec![]))?;
    let hist = csv_bytes(
        &["neighbors", "count", "percent", "percent_display"],
        summary
            .histogram
            .iter()
            .map(|b| {
                vec![
                    b.neighbors.to_string(),
                    b.count.to_string(),
                    num(b.percent),
                    format!("{:.2}", b.percent),
                ]
            })
            .collect(),
    )?;
    let per_region = csv_bytes(
        &["region", "neighbors", "neighbor_ids"],
        (0..lw.weights.n())
            .map(|i| {
                let ids: Vec<&str> = lw
                    .weights
                    .neighbors(i)
                    .iter()
                    .map(|&(j, _)| lw.weights.ids()[j].as_str())
                    .collect();
                vec![lw.weights.ids()[i].clone(), ids.len().to_string(), ids.join(" ")]
            })
            .collect(),
    )?;
    Ok(StageOutput {
        files: vec![
            ("connectivity.json".into(), to_json(&with_seed(cfg.seed, &summary))?),
            ("cardinality.csv".into(), hist),
            ("neighbors.csv".into(), per_region),
            ("weights.gal".into(), gal),
        ],
        inputs: vec![lw.source.clone()],
        seeds: BTreeMap::new(),
    })
}

/// Values of the regions observed in both `x` and `y` (or just `x`), with the
/// weights restricted to those regions.
fn aligned(
    ds: &PanelDataset,
    w: &SpatialWeights,
    x: &str,
    y: Option<&str>,
    year: i32,
) -> Result<(Vec<f64>, Vec<f64>, SpatialWeights), CommandError> {
    let context = || {
        let mut ids = vec![format!("indicator={x}"), format!("year={year}")];
        if let Some(y) = y {
            ids.push(format!("indicator={y}"));
        }
        ids
    };
    let xs = ds.column(x, year).map_err(fail("panel_core", "cross_section"))?;
    let ys = ds.column(y.unwrap_or(x), year).map_err(fail("panel_core", "cross_section"))?;
    let mut codes = Vec::new();
    let (mut vx, mut vy) = (Vec::new(), Vec::new());
    for (r, region) in ds.regions().iter().enumerate() {
        if let (Some(a), Some(b)) = (xs[r], ys[r]) {
            codes.push(region.code.clone());
            vx.push(a);
            vy.push(b);
        }
    }
    let idx = w
        .align(&codes)
        .map_err(with_context("spatial_weights", "align", context()))?;
    let sub = w
        .subset(&idx)
        .map_err(with_context("spatial_weights", "subset", context()))?;
    Ok((vx, vy, sub))
}

/// Slice-level failures that leave a reason row instead of stopping the run.
fn is_data_shape(e: &AutocorrError) -> bool {
    matches!(e, AutocorrError::TooFewRegions(_) | AutocorrError::Degenerate)
}

pub(crate) fn moran(cfg: &PipelineConfig, inputs: &mut Inputs) -> Result<StageOutput, CommandError> {
    let w = inputs.weights(cfg)?.weights.clone();
    let w_source = inputs.weights(cfg)?.source.clone();
    let (ds, path) = inputs.panel(cfg)?;
    let base = stage_seed(cfg.seed, "moran");
    let mut seeds = BTreeMap::new();
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for ind in ds.indicators() {
        for &year in ds.years() {
            let (values, _, sub) = aligned(ds, &w, ind, None, year)?;
            let slice = format!("{ind}/{year}");
            let seed = stage_seed(base, &slice);
            seeds.insert(format!("moran/{slice}"), seed);
            match autocorr::moran_permutation(&values, &sub, cfg.permutations, seed) {
                Ok(m) => {
                    rows.push(vec![
                        ind.clone(),
                        year.to_string(),
                        m.n_used.to_string(),
                        num(m.i),
                        num(m.expected),
                        opt_num(m.z_sim),
                        opt_num(m.pseudo_p),
                        format!("{:.3}", m.i),
                        opt_display(m.pseudo_p),
                        m.n_permutations.to_string(),
                        seed.to_string(),
                        m.isolates.join(" "),
                        String::new(),
                    ]);
                    records.push(json!({"indicator": ind, "year": year, "moran": m}));
                }
                Err(e) if is_data_shape(&e) => {
                    let mut row = vec![ind.clone(), year.to_string(), values.len().to_string()];
                    row.extend(std::iter::repeat_n(String::new(), 6));
                    row.push(cfg.permutations.to_string());
                    row.push(seed.to_string());
                    row.push(String::new());
                    row.push(e.to_string());
                    rows.push(row);
                    records.push(json!({"indicator": ind, "year": year, "seed": seed, "reason": e.to_string()}));
                }
                Err(e) => {
                    return Err(with_context(
                        "spatial_autocorr",
                        "moran_permutation",
                        vec![format!("indicator={ind}"), format!("year={year}")],
                    )(e))
                }
            }
        }
    }
    let table = csv_bytes(
        &[
            "indicator",
            "year",
            "n",
            "moran_i",
            "expected",
            "z_sim",
            "pseudo_p",
            "moran_i_display",
            "p_display",
            "permutations",
            "seed",
            "isolates",
            "reason",
        ],
        rows,
    )?;
    Ok(StageOutput {
        files: vec![
            ("moran.csv".into(), table),
            ("moran.json".into(), to_json(&with_seed(cfg.seed, records))?),
        ],
        inputs: vec![path, w_source],
        seeds,
    })
}

#[derive(Serialize)]
struct LisaRun {
    x: String,
    y: Option<String>,
    year: i32,
    #[serde(flatten)]
    outcome: LisaOutcome,
}

#[derive(Serialize)]
#[serde(untagged)]
enum LisaOutcome {
    Done { result: LisaResult },
    Skipped { seed: u64, reason: String },
}

pub(crate) fn lisa(cfg: &PipelineConfig, inputs: &mut Inputs) -> Result<StageOutput, CommandError> {
    let lw = inputs.weights(cfg)?;
    let (w, geojson, w_source) = (lw.weights.clone(), lw.geojson.clone(), lw.source.clone());
    let (ds, path) = inputs.panel(cfg)?;
    for (a, b) in &cfg.pairs {
        for i in [a, b] {
            ds.indicator_index(i).map_err(fail("panel_core", "bivariate_pairs"))?;
        }
    }
    let base = stage_seed(cfg.seed, "lisa");
    let mut seeds = BTreeMap::new();

    let mut jobs: Vec<(String, Option<String>, i32)> = Vec::new();
    for ind in ds.indicators() {
        for year in first_and_last(&observed_years(ds, ind)) {
            jobs.push((ind.clone(), None, year));
        }
    }
    for (x, y) in &cfg.pairs {
        let ox = observed_years(ds, x);
        let both: Vec<i32> = observed_years(ds, y).into_iter().filter(|v| ox.contains(v)).collect();
        if let Some(&year) = both.last() {
            jobs.push((x.clone(), Some(y.clone()), year));
        }
    }

    let mut runs = Vec::new();
    let mut rows = Vec::new();
    let mut files = Vec::new();
    for (x, y, year) in jobs {
        let slice = match &y {
            None => format!("{x}/{year}"),
            Some(y) => format!("{x}~{y}/{year}"),
        };
        let seed = stage_seed(base, &slice);
        seeds.insert(format!("lisa/{slice}"), seed);
        let (vx, vy, sub) = aligned(ds, &w, &x, y.as_deref(), year)?;
        let result = match &y {
            None => autocorr::lisa_classify(&vx, &sub, cfg.permutations, seed, &cfg.alpha),
            Some(_) => autocorr::bivariate_local_moran(&vx, &vy, &sub, cfg.permutations, seed, &cfg.alpha),
        };
        let result = match result {
            Ok(r) => r,
            Err(e) if is_data_shape(&e) => {
                runs.push(LisaRun {
                    x,
                    y,
                    year,
                    outcome: LisaOutcome::Skipped {
                        seed,
                        reason: e.to_string(),
                    },
                });
                continue;
            }
            Err(e) => {
                let mut ctx = vec![format!("indicator={x}"), format!("year={year}")];
                ctx.extend(y.iter().map(|y| format!("indicator={y}")));
                return Err(with_context("spatial_autocorr", "lisa_classify", ctx)(e));
            }
        };
        let kind = if y.is_some() { "bivariate" } else { "univariate" };
        for rec in &result.records {
            rows.push(vec![
                kind.into(),
                x.clone(),
                y.clone().unwrap_or_default(),
                year.to_string(),
                rec.id.clone(),
                opt_num(rec.z),
                opt_num(rec.lag),
                opt_num(rec.local_i),
                rec.quadrant
                    .map(|q| serde_json::to_value(q).expect("enum").as_str().unwrap_or_default().to_string())
                    .unwrap_or_default(),
                opt_num(rec.pseudo_p),
                opt_display(rec.pseudo_p),
                rec.significance.label(),
                seed.to_string(),
            ]);
        }
        if let Some(g) = &geojson {
            let merged = autocorr::merge_geojson(g, &cfg.id_property, &result);
            let name = match &y {
                None => format!("lisa_{x}_{year}.geojson"),
                Some(y) => format!("lisa_{x}_{y}_{year}.geojson"),
            };
            files.push((name, to_json(&merged)?));
        }
        runs.push(LisaRun {
            x,
            y,
            year,
            outcome: LisaOutcome::Done { result },
        });
    }
    let table = csv_bytes(
        &[
            "kind",
            "x",
            "y",
            "year",
            "region",
            "z",
            "lag",
            "local_i",
            "quadrant",
            "pseudo_p",
            "p_display",
            "class",
            "seed",
        ],
        rows,
    )?;
    let mut out = vec![
        ("lisa.csv".into(), table),
        ("lisa.json".into(), to_json(&with_seed(cfg.seed, runs))?),
    ];
    out.extend(files);
    Ok(StageOutput {
        files: out,
        inputs: vec![path, w_source],
        seeds,
    })
}

/// Optional `config` section of a model file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFileConfig {
    tolerance: Option<f64>,
    max_iterations: Option<usize>,
    bootstrap: Option<usize>,
    omission_distance: Option<usize>,
}

fn load_model(cfg: &PipelineConfig) -> Result<(PathModel, ModelFileConfig, Option<PathBuf>), CommandError> {
    let Some(path) = &cfg.model else {
        return Ok((PathModel::default_regional(), ModelFileConfig::default(), None));
    };
    let bytes = read_input(path)?;
    let err = |e: String| {
        CommandError::input("pls_sem", "load_model", e, vec![format!("path={}", path.display())])
    };
    let value: Value = serde_json::from_slice(&bytes).map_err(|e| err(e.to_string()))?;
    let model = PathModel::deserialize(&value).map_err(|e| err(e.to_string()))?;
    let file_cfg = match value.get("config") {
        Some(c) => ModelFileConfig::deserialize(c).map_err(|e| {
            let hint = if c.get("seed").is_some() {
                "; the seed is taken from --seed"
            } else {
                ""
            };
            err(format!("{e}{hint}"))
        })?,
        None => ModelFileConfig::default(),
    };
    Ok((model, file_cfg, Some(path.clone())))
}

/// Pooled region-year rows with every model indicator present.
/// Region-year rows with every indicator observed; one year only when `year` is set.
fn pooled(ds: &PanelDataset, model: &PathModel, year: Option<i32>) -> Result<(PlsData, usize), CommandError> {
    let names: Vec<String> = model.indicators().map(String::from).collect();
    let idx: Vec<usize> = names
        .iter()
        .map(|n| ds.indicator_index(n))
        .collect::<Result<_, _>>()
        .map_err(fail("pls_sem", "pool_observations"))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let years = match year {
        Some(y) => vec![ds.year_index(y).map_err(fail("pls_sem", "pool_observations"))?],
        None => (0..ds.years().len()).collect(),
    };
    let mut dropped = 0;
    for y in years {
        for r in 0..ds.regions().len() {
            match idx.iter().map(|&i| ds.get(r, i, y)).collect::<Option<Vec<f64>>>() {
                Some(row) => rows.push(row),
                None => dropped += 1,
            }
        }
    }
    let x = DMatrix::from_fn(rows.len(), names.len(), |r, c| rows[r][c]);
    let data = PlsData::new(names, x).map_err(fail("pls_sem", "pool_observations"))?;
    Ok((data, dropped))
}

pub(crate) fn plssem(cfg: &PipelineConfig, inputs: &mut Inputs) -> Result<StageOutput, CommandError> {
    let (model, file_cfg, model_path) = load_model(cfg)?;
    let (z, path) = inputs.standardized(cfg)?;
    let (data, dropped) = pooled(z, &model, cfg.pls_year)?;
    let mut fit = FitConfig::default();
    if let Some(t) = file_cfg.tolerance {
        fit.tolerance = t;
    }
    if let Some(m) = file_cfg.max_iterations {
        fit.max_iterations = m;
    }
    let resamples = cfg.bootstrap.or(file_cfg.bootstrap).unwrap_or(DEFAULT_BOOTSTRAP);
    let distance = cfg
        .omission_distance
        .or(file_cfg.omission_distance)
        .unwrap_or(pls::blindfold::DEFAULT_OMISSION_DISTANCE);
    let seed = stage_seed(cfg.seed, "plssem");
    let est = pls::fit_pls(&model, &data, &fit).map_err(fail("pls_sem", "fit_pls"))?;
    let quality = pls::measurement_quality(&est, &data).map_err(fail("pls_sem", "measurement_quality"))?;
    let discriminant = if model.constructs().len() >= 2 {
        Some(pls::discriminant_validity(&est, &data).map_err(fail("pls_sem", "discriminant_validity"))?)
    } else {
        None
    };
    let vif = pls::structural_collinearity(&model, &est);
    let boot = pls::bootstrap_paths(&model, &data, &est, resamples, seed, &fit)
        .map_err(fail("pls_sem", "bootstrap_paths"))?;
    let q2 = pls::blindfold_q2(&model, &data, distance, &fit).map_err(fail("pls_sem", "blindfold_q2"))?;

    let loadings = csv_bytes(
        &["construct", "indicator", "weight", "loading", "loading_display"],
        est.indicators
            .iter()
            .map(|i| {
                vec![
                    i.construct.clone(),
                    i.indicator.clone(),
                    num(i.weight),
                    num(i.loading),
                    display3(i.loading),
                ]
            })
            .collect(),
    )?;
    let reliability = csv_bytes(
        &[
            "construct",
            "indicators",
            "cronbach_alpha",
            "composite_reliability",
            "ave",
            "alpha_display",
            "cr_display",
            "ave_display",
            "alpha_ok",
            "cr_ok",
            "ave_ok",
        ],
        quality
            .constructs
            .iter()
            .map(|c| {
                vec![
                    c.construct.clone(),
                    c.n_indicators.to_string(),
                    num(c.cronbach_alpha),
                    num(c.composite_reliability),
                    num(c.ave),
                    display3(c.cronbach_alpha),
                    display3(c.composite_reliability),
                    display3(c.ave),
                    c.alpha_ok.to_string(),
                    c.cr_ok.to_string(),
                    c.ave_ok.to_string(),
                ]
            })
            .collect(),
    )?;
    let vif_csv = csv_bytes(
        &["endogenous", "predictor", "vif", "vif_display", "above_threshold"],
        vif.iter()
            .map(|v| {
                vec![
                    v.endogenous.clone(),
                    v.predictor.clone(),
                    opt_num(v.vif),
                    v.vif.map_or_else(|| String::from("inf"), display3),
                    v.above_threshold.to_string(),
                ]
            })
            .collect(),
    )?;
    let mut htmt_rows = Vec::new();
    if let Some(d) = &discriminant {
        for (a, row) in d.htmt.iter().enumerate() {
            for (b, v) in row.iter().enumerate() {
                if let Some(v) = v {
                    htmt_rows.push(vec![
                        d.constructs[a].clone(),
                        d.constructs[b].clone(),
                        num(*v),
                        display3(*v),
                        num(d.fornell_larcker[a][b]),
                    ]);
                }
            }
        }
    }
    let htmt = csv_bytes(&["construct", "other", "htmt", "htmt_display", "latent_correlation"], htmt_rows)?;
    let q2_csv = csv_bytes(
        &["construct", "sso", "sse", "q2", "q2_display", "predictive_relevance"],
        q2.iter()
            .map(|q| {
                vec![
                    q.construct.clone(),
                    num(q.sso),
                    num(q.sse),
                    num(q.q2),
                    display3(q.q2),
                    q.predictive_relevance.to_string(),
                ]
            })
            .collect(),
    )?;
    let r2 = |c: &str| est.r_squared.iter().find(|r| r.construct == c).map(|r| r.r_squared);
    let paths = csv_bytes(
        &[
            "from",
            "to",
            "beta",
            "mean",
            "std_error",
            "t",
            "p_value",
            "ci_low",
            "ci_high",
            "r_squared",
            "beta_display",
            "t_display",
            "p_display",
            "r_squared_display",
        ],
        boot.edges
            .iter()
            .map(|e| {
                vec![
                    e.from.clone(),
                    e.to.clone(),
                    num(e.original),
                    num(e.mean),
                    num(e.std_error),
                    num(e.t),
                    num(e.p_value),
                    num(e.ci_low),
                    num(e.ci_high),
                    opt_num(r2(&e.to)),
                    display3(e.original),
                    format!("{:.3}", e.t),
                    growth::p_display(e.p_value),
                    opt_display(r2(&e.to)),
                ]
            })
            .collect(),
    )?;
    let body = json!({
        "stage_seed": seed,
        "observations": cfg.pls_year.map_or_else(|| json!("pooled region-years"), |y| json!({ "year": y })),
        "n_observations": data.n(),
        "incomplete_rows_dropped": dropped,
        "fit": fit,
        "omission_distance": distance,
        "model": model,
        "estimates": est,
        "reliability": quality,
        "collinearity": vif,
        "discriminant_validity": discriminant,
        "bootstrap": boot,
        "q2": q2,
    });
    let mut inputs_used = vec![path];
    inputs_used.extend(model_path);
    Ok(StageOutput {
        files: vec![
            ("pls_loadings.csv".into(), loadings),
            ("pls_reliability.csv".into(), reliability),
            ("pls_vif.csv".into(), vif_csv),
            ("pls_htmt.csv".into(), htmt),
            ("pls_q2.csv".into(), q2_csv),
            ("pls_paths.csv".into(), paths),
            ("plssem.json".into(), to_json(&with_seed(cfg.seed, body))?),
        ],
        inputs: inputs_used,
        seeds: BTreeMap::from([("plssem".to_string(), seed)]),
    })
}

pub(crate) fn regress(cfg: &PipelineConfig, inputs: &mut Inputs) -> Result<StageOutput, CommandError> {
    let (z, path) = inputs.standardized(cfg)?;
    let years = z.years().to_vec();
    let mut reports = growth::group_ols(z, Grouping::Microregion, &cfg.pairs, &years)
        .map_err(fail("growth_regression", "group_ols"))?;
    reports.extend(
        growth::group_ols(z, Grouping::Whole, &cfg.whole_pairs, &years)
            .map_err(fail("growth_regression", "group_ols"))?,
    );
    let mut table = Vec::new();
    growth::write_regressions_csv(&reports, &mut table)
        .map_err(|e| CommandError::internal("growth_regression", "write_regressions_csv", e.to_string(), vec![]))?;
    Ok(StageOutput {
        files: vec![
            ("regressions.csv".into(), table),
            ("regressions.json".into(), to_json(&with_seed(cfg.seed, &reports))?),
        ],
        inputs: vec![path],
        seeds: BTreeMap::new(),
    })
}

pub(crate) fn growth(cfg: &PipelineConfig, inputs: &mut Inputs) -> Result<StageOutput, CommandError> {
    let (ds, path) = inputs.panel(cfg)?;
    let spec = &cfg.growth;
    let y_name = match &spec.per {
        Some(per) => format!("{}_per_{}", spec.output, per),
        None => spec.output.clone(),
    };
    let owned;
    let ds = match &spec.per {
        Some(per) => {
            owned = panel::derive_ratio(ds, &spec.output, per, &y_name).map_err(fail("panel_core", "derive_ratio"))?;
            &owned
        }
        None => ds,
    };
    let idx = |name: &str| ds.indicator_index(name).map_err(fail("growth_regression", "cobb_douglas_fit"));
    let (iy, ia, ik) = (idx(&y_name)?, idx(&spec.technology)?, idx(&spec.knowledge)?);
    let mut obs = Vec::new();
    let mut excluded = 0usize;
    for (yi, &year) in ds.years().iter().enumerate() {
        for (r, region) in ds.regions().iter().enumerate() {
            match (ds.get(r, iy, yi), ds.get(r, ia, yi), ds.get(r, ik, yi)) {
                (Some(y), Some(a), Some(k)) if y > 0.0 && a > 0.0 && k > 0.0 => {
                    obs.push((region.code.clone(), year, y, a, k))
                }
                _ => excluded += 1,
            }
        }
    }
    let ys: Vec<f64> = obs.iter().map(|o| o.2).collect();
    let a: Vec<f64> = obs.iter().map(|o| o.3).collect();
    let k: Vec<f64> = obs.iter().map(|o| o.4).collect();
    let fit = growth::cobb_douglas_fit(&ys, &a, &k).map_err(fail("growth_regression", "cobb_douglas_fit"))?;
    let fitted = fit.predict(&a, &k).map_err(fail("growth_regression", "predict"))?;
    let alpha = fit.alpha.clamp(0.0, 1.0);
    let rows = obs
        .iter()
        .enumerate()
        .map(|(i, (code, year, y, a, k))| {
            let evaluated = growth::cobb_douglas_eval(&[*a], &[*k], alpha, cfg.mode).map(|v| v[0]);
            let (value, note) = match evaluated {
                Ok(v) if v.is_finite() => (num(v), String::new()),
                Ok(_) => (String::new(), String::from("overflow")),
                Err(e) => (String::new(), e.to_string()),
            };
            vec![
                code.clone(),
                year.to_string(),
                num(*y),
                num(*a),
                num(*k),
                num(fitted[i]),
                value,
                note,
            ]
        })
        .collect();
    let table = csv_bytes(
        &["region", "year", "y", "a", "k", "y_fitted", "y_mode", "note"],
        rows,
    )?;
    let body = json!({
        "y": y_name,
        "a": spec.technology,
        "k": spec.knowledge,
        "mode": cfg.mode,
        "alpha_used": alpha,
        "observations_excluded": excluded,
        "fit": fit,
    });
    Ok(StageOutput {
        files: vec![
            ("growth.csv".into(), table),
            ("growth.json".into(), to_json(&with_seed(cfg.seed, body))?),
        ],
        inputs: vec![path],
        seeds: BTreeMap::new(),
    })
}
