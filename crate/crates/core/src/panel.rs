//! Municipal panel data: ingest, description, standardization and slicing.
//!
//! A [`PanelDataset`] is a dense region × indicator × year grid in which every
//! cell is either a finite value or explicitly missing. Cross-sections (one
//! indicator in one year, over all regions) are the unit of description and
//! standardization; missing cells are skipped, never imputed.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats;

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: duplicate cell (region {region}, indicator {indicator}, year {year})")]
    Conflict {
        line: u64,
        region: String,
        indicator: String,
        year: i32,
    },
    #[error("line {line}: region {region} redeclared with different name, microregion or capital flag")]
    RegionConflict { line: u64, region: String },
    #[error("line {line}: non-finite value `{value}`")]
    NonFinite { line: u64, value: String },
    #[error("line {line}: region {region} has an empty microregion")]
    EmptyMicroregion { line: u64, region: String },
    #[error("{indicator} {year}: {n} observed values, need at least {needed}")]
    InsufficientData {
        indicator: String,
        year: i32,
        n: usize,
        needed: usize,
    },
    #[error("{indicator} {year}: zero standard deviation, cannot standardize")]
    DegenerateScale { indicator: String, year: i32 },
    #[error("unknown indicator `{0}`")]
    UnknownIndicator(String),
    #[error("unknown year {0}")]
    UnknownYear(i32),
    #[error("indicator `{0}` already exists")]
    DuplicateIndicator(String),
    #[error("percentile cut {0} outside [0, 100]")]
    InvalidCut(f64),
    #[error("microregion {0} has no capital region flagged")]
    NoCapital(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PanelError>;

/// A spatial unit (municipality) and its grouping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionId {
    pub code: String,
    pub name: String,
    pub microregion: String,
    /// Seat municipality of its microregion.
    #[serde(default)]
    pub capital: bool,
}

/// Region × indicator × year grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    regions: Vec<RegionId>,
    indicators: Vec<String>,
    years: Vec<i32>,
    values: Vec<Option<f64>>,
}

/// Observed values of one indicator-year, with the regions they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSection {
    pub regions: Vec<usize>,
    pub values: Vec<f64>,
}

impl PanelDataset {
    /// Empty (all-missing) grid. Years are sorted; duplicate codes rejected.
    pub fn new(regions: Vec<RegionId>, indicators: Vec<String>, mut years: Vec<i32>) -> Result<Self> {
        let mut seen = HashMap::new();
        for r in &regions {
            if r.microregion.is_empty() {
                return Err(PanelError::Invalid(format!("region {} has an empty microregion", r.code)));
            }
            if seen.insert(r.code.as_str(), ()).is_some() {
                return Err(PanelError::Invalid(format!("duplicate region code {}", r.code)));
            }
        }
        let mut seen = HashMap::new();
        for i in &indicators {
            if seen.insert(i.as_str(), ()).is_some() {
                return Err(PanelError::DuplicateIndicator(i.clone()));
            }
        }
        years.sort_unstable();
        if years.windows(2).any(|w| w[0] == w[1]) {
            return Err(PanelError::Invalid(String::from("duplicate year")));
        }
        let len = regions.len() * indicators.len() * years.len();
        Ok(Self {
            regions,
            indicators,
            years,
            values: vec![None; len],
        })
    }

    pub fn regions(&self) -> &[RegionId] {
        &self.regions
    }

    pub fn indicators(&self) -> &[String] {
        &self.indicators
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn region_index(&self, code: &str) -> Option<usize> {
        self.regions.iter().position(|r| r.code == code)
    }

    pub fn indicator_index(&self, indicator: &str) -> Result<usize> {
        self.indicators
            .iter()
            .position(|i| i == indicator)
            .ok_or_else(|| PanelError::UnknownIndicator(indicator.to_string()))
    }

    pub fn year_index(&self, year: i32) -> Result<usize> {
        self.years
            .binary_search(&year)
            .map_err(|_| PanelError::UnknownYear(year))
    }

    fn offset(&self, region: usize, indicator: usize, year: usize) -> usize {
        (region * self.indicators.len() + indicator) * self.years.len() + year
    }

    pub fn get(&self, region: usize, indicator: usize, year: usize) -> Option<f64> {
        self.values[self.offset(region, indicator, year)]
    }

    /// Set a cell. Non-finite values are stored as missing.
    pub fn set(&mut self, region: usize, indicator: usize, year: usize, value: Option<f64>) {
        let off = self.offset(region, indicator, year);
        self.values[off] = value.filter(|v| v.is_finite());
    }

    pub fn total_cells(&self) -> usize {
        self.values.len()
    }

    pub fn observed_cells(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// Values of one indicator-year aligned with [`regions`](Self::regions).
    pub fn column(&self, indicator: &str, year: i32) -> Result<Vec<Option<f64>>> {
        let i = self.indicator_index(indicator)?;
        let y = self.year_index(year)?;
        Ok((0..self.regions.len()).map(|r| self.get(r, i, y)).collect())
    }

    pub fn cross_section(&self, indicator: &str, year: i32) -> Result<CrossSection> {
        let column = self.column(indicator, year)?;
        let mut regions = Vec::new();
        let mut values = Vec::new();
        for (r, v) in column.into_iter().enumerate() {
            if let Some(v) = v {
                regions.push(r);
                values.push(v);
            }
        }
        Ok(CrossSection { regions, values })
    }

    /// Distinct microregions in order of first appearance.
    pub fn microregions(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.regions {
            if !out.contains(&r.microregion) {
                out.push(r.microregion.clone());
            }
        }
        out
    }

    pub fn manifest(&self) -> PanelManifest {
        PanelManifest {
            regions: self.regions.clone(),
            indicators: self.indicators.clone(),
            years: self.years.clone(),
            total_cells: self.total_cells(),
            observed_cells: self.observed_cells(),
        }
    }
}

/// JSON sidecar describing a serialized dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelManifest {
    pub regions: Vec<RegionId>,
    pub indicators: Vec<String>,
    pub years: Vec<i32>,
    pub total_cells: usize,
    pub observed_cells: usize,
}

/// Column mapping for long-format input.
#[derive(Debug, Clone)]
pub struct PanelSchema {
    pub delimiter: u8,
    pub region_code: String,
    pub region_name: String,
    pub microregion: String,
    pub indicator: String,
    pub year: String,
    pub value: String,
    /// Optional boolean column (`1`/`true`/`yes`) marking microregion seats.
    pub capital: Option<String>,
}

impl Default for PanelSchema {
    fn default() -> Self {
        Self {
            delimiter: b',',
            region_code: "region_code".into(),
            region_name: "region_name".into(),
            microregion: "microregion".into(),
            indicator: "indicator".into(),
            year: "year".into(),
            value: "value".into(),
            capital: Some("capital".into()),
        }
    }
}

const MISSING_TOKENS: [&str; 4] = ["", "NA", "na", "."];

fn parse_flag(s: &str) -> bool {
    matches!(s.trim().to_ascii_lowercase().as_str(), "1" | "true" | "yes" | "y")
}

/// Read a long-format panel (`region_code, region_name, microregion,
/// indicator, year, value` plus optional `capital`).
pub fn load_panel<R: Read>(source: R, schema: &PanelSchema) -> Result<PanelDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| PanelError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PanelError::MissingColumn(name.to_string()))
    };
    let c_code = col(&schema.region_code)?;
    let c_name = col(&schema.region_name)?;
    let c_micro = col(&schema.microregion)?;
    let c_ind = col(&schema.indicator)?;
    let c_year = col(&schema.year)?;
    let c_value = col(&schema.value)?;
    let c_capital = schema
        .capital
        .as_deref()
        .and_then(|name| headers.iter().position(|h| h == name));

    struct Row {
        line: u64,
        region: usize,
        indicator: usize,
        year: i32,
        value: Option<f64>,
    }

    let mut regions: Vec<RegionId> = Vec::new();
    let mut region_lookup: HashMap<String, usize> = HashMap::new();
    let mut indicators: Vec<String> = Vec::new();
    let mut indicator_lookup: HashMap<String, usize> = HashMap::new();
    let mut rows = Vec::new();

    for record in reader.records() {
        let record = record.map_err(|e| PanelError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |c: usize| record.get(c).unwrap_or("");
        let code = field(c_code);
        if code.is_empty() {
            return Err(PanelError::Parse {
                line,
                message: String::from("empty region code"),
            });
        }
        let region = RegionId {
            code: code.to_string(),
            name: field(c_name).to_string(),
            microregion: field(c_micro).to_string(),
            capital: c_capital.map(|c| parse_flag(field(c))).unwrap_or(false),
        };
        if region.microregion.is_empty() {
            return Err(PanelError::EmptyMicroregion {
                line,
                region: region.code,
            });
        }
        let region_idx = match region_lookup.get(code) {
            Some(&idx) => {
                if regions[idx] != region {
                    return Err(PanelError::RegionConflict {
                        line,
                        region: region.code,
                    });
                }
                idx
            }
            None => {
                regions.push(region);
                region_lookup.insert(code.to_string(), regions.len() - 1);
                regions.len() - 1
            }
        };
        let indicator = field(c_ind);
        if indicator.is_empty() {
            return Err(PanelError::Parse {
                line,
                message: String::from("empty indicator code"),
            });
        }
        let indicator_idx = *indicator_lookup.entry(indicator.to_string()).or_insert_with(|| {
            indicators.push(indicator.to_string());
            indicators.len() - 1
        });
        let year: i32 = field(c_year).parse().map_err(|_| PanelError::Parse {
            line,
            message: format!("invalid year `{}`", field(c_year)),
        })?;
        let raw = field(c_value);
        let value = if MISSING_TOKENS.contains(&raw) {
            None
        } else {
            let v: f64 = raw.parse().map_err(|_| PanelError::Parse {
                line,
                message: format!("invalid value `{raw}`"),
            })?;
            if !v.is_finite() {
                return Err(PanelError::NonFinite {
                    line,
                    value: raw.to_string(),
                });
            }
            Some(v)
        };
        rows.push(Row {
            line,
            region: region_idx,
            indicator: indicator_idx,
            year,
            value,
        });
    }

    let mut years: Vec<i32> = rows.iter().map(|r| r.year).collect();
    years.sort_unstable();
    years.dedup();
    let mut dataset = PanelDataset::new(regions, indicators, years)?;
    let mut filled = vec![false; dataset.total_cells()];
    for row in rows {
        let y = dataset.year_index(row.year)?;
        let off = dataset.offset(row.region, row.indicator, y);
        if filled[off] {
            return Err(PanelError::Conflict {
                line: row.line,
                region: dataset.regions[row.region].code.clone(),
                indicator: dataset.indicators[row.indicator].clone(),
                year: row.year,
            });
        }
        filled[off] = true;
        dataset.values[off] = row.value;
    }
    Ok(dataset)
}

/// Write the dataset back in long format. Every cell is written; missing
/// cells as `NA`, values in shortest round-trip notation.
pub fn write_panel<W: Write>(dataset: &PanelDataset, sink: W, delimiter: u8) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().delimiter(delimiter).from_writer(sink);
    let csv_err = |e: csv::Error| PanelError::Io(std::io::Error::other(e.to_string()));
    writer
        .write_record([
            "region_code",
            "region_name",
            "microregion",
            "capital",
            "indicator",
            "year",
            "value",
        ])
        .map_err(csv_err)?;
    for (r, region) in dataset.regions.iter().enumerate() {
        for (i, indicator) in dataset.indicators.iter().enumerate() {
            for (y, year) in dataset.years.iter().enumerate() {
                let value = dataset
                    .get(r, i, y)
                    .map_or_else(|| String::from("NA"), |v| format!("{v:?}"));
                writer
                    .write_record([
                        region.code.as_str(),
                        region.name.as_str(),
                        region.microregion.as_str(),
                        if region.capital { "1" } else { "0" },
                        indicator.as_str(),
                        &year.to_string(),
                        &value,
                    ])
                    .map_err(csv_err)?;
            }
        }
    }
    writer.flush()?;
    Ok(())
}

/// Descriptive statistics of one cross-section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub sd: f64,
    pub variance: f64,
    /// Coefficient of variation in percent.
    pub coef_var: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub range: f64,
}

impl DescriptiveStats {
    /// `None` for fewer than two values.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.len() < 2 {
            return None;
        }
        let sorted = stats::sorted(values);
        let mean = stats::mean(values);
        let variance = stats::sample_variance(values);
        let sd = variance.sqrt();
        let coef_var = if sd == 0.0 { 0.0 } else { 100.0 * sd / mean };
        let min = sorted[0];
        let max = sorted[sorted.len() - 1];
        Some(Self {
            n: values.len(),
            mean,
            sd,
            variance,
            coef_var,
            min,
            median: stats::median_sorted(&sorted),
            max,
            range: max - min,
        })
    }
}

pub fn describe(dataset: &PanelDataset, indicator: &str, year: i32) -> Result<DescriptiveStats> {
    let cs = dataset.cross_section(indicator, year)?;
    DescriptiveStats::from_values(&cs.values).ok_or(PanelError::InsufficientData {
        indicator: indicator.to_string(),
        year,
        n: cs.values.len(),
        needed: 2,
    })
}

/// `(x - mean) / sd` with the sample standard deviation; `None` if sd is zero
/// or fewer than two values are given.
pub fn z_scores(values: &[f64]) -> Option<Vec<f64>> {
    if values.len() < 2 {
        return None;
    }
    let m = stats::mean(values);
    let sd = stats::sample_sd(values);
    if sd == 0.0 || !sd.is_finite() {
        return None;
    }
    Some(values.iter().map(|v| (v - m) / sd).collect())
}

/// Standardize every indicator-year cross-section over its observed regions.
///
/// Cross-sections with no observations stay missing; any other cross-section
/// whose standard deviation is zero (or undefined) is an error.
pub fn standardize(dataset: &PanelDataset) -> Result<PanelDataset> {
    let mut out = dataset.clone();
    for (i, indicator) in dataset.indicators.iter().enumerate() {
        for (y, &year) in dataset.years.iter().enumerate() {
            let cs = dataset.cross_section(indicator, year)?;
            if cs.values.is_empty() {
                continue;
            }
            let z = z_scores(&cs.values).ok_or_else(|| PanelError::DegenerateScale {
                indicator: indicator.clone(),
                year,
            })?;
            for (r, v) in cs.regions.iter().zip(z) {
                out.set(*r, i, y, Some(v));
            }
        }
    }
    Ok(out)
}

/// Append `numerator / denominator` as a new indicator (for example GDP per
/// capita from GDP and population). Cells with a missing operand or a zero
/// denominator are missing.
pub fn derive_ratio(
    dataset: &PanelDataset,
    numerator: &str,
    denominator: &str,
    name: &str,
) -> Result<PanelDataset> {
    let num = dataset.indicator_index(numerator)?;
    let den = dataset.indicator_index(denominator)?;
    if dataset.indicators.iter().any(|i| i == name) {
        return Err(PanelError::DuplicateIndicator(name.to_string()));
    }
    let mut indicators = dataset.indicators.clone();
    indicators.push(name.to_string());
    let mut out = PanelDataset::new(dataset.regions.clone(), indicators, dataset.years.clone())?;
    let new_idx = out.indicators.len() - 1;
    for r in 0..dataset.regions.len() {
        for y in 0..dataset.years.len() {
            for i in 0..dataset.indicators.len() {
                out.set(r, i, y, dataset.get(r, i, y));
            }
            let ratio = match (dataset.get(r, num, y), dataset.get(r, den, y)) {
                (Some(a), Some(b)) if b != 0.0 => Some(a / b),
                _ => None,
            };
            out.set(r, new_idx, y, ratio);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PercentileClass {
    Above,
    Below,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionClass {
    pub region: String,
    pub value: f64,
    pub class: PercentileClass,
}

/// Two-class choropleth split of a cross-section at a percentile cut.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileClasses {
    pub indicator: String,
    pub year: i32,
    pub cut: f64,
    pub threshold: f64,
    pub labels: Vec<RegionClass>,
    /// Region codes strictly above the threshold, highest value first.
    pub above: Vec<String>,
}

/// Label each observed region `above` if its value is strictly greater than
/// the `cut`-th percentile (type 7 interpolation), `below` otherwise.
pub fn classify_percentile(
    dataset: &PanelDataset,
    indicator: &str,
    year: i32,
    cut: f64,
) -> Result<PercentileClasses> {
    if !(0.0..=100.0).contains(&cut) {
        return Err(PanelError::InvalidCut(cut));
    }
    let cs = dataset.cross_section(indicator, year)?;
    if cs.values.len() < 4 {
        return Err(PanelError::InsufficientData {
            indicator: indicator.to_string(),
            year,
            n: cs.values.len(),
            needed: 4,
        });
    }
    let sorted = stats::sorted(&cs.values);
    let threshold = stats::quantile_type7_sorted(&sorted, cut / 100.0);
    let labels: Vec<RegionClass> = cs
        .regions
        .iter()
        .zip(&cs.values)
        .map(|(&r, &v)| RegionClass {
            region: dataset.regions[r].code.clone(),
            value: v,
            class: if v > threshold {
                PercentileClass::Above
            } else {
                PercentileClass::Below
            },
        })
        .collect();
    let mut above: Vec<&RegionClass> = labels
        .iter()
        .filter(|l| l.class == PercentileClass::Above)
        .collect();
    // stable sort keeps dataset order among ties
    above.sort_by(|a, b| b.value.partial_cmp(&a.value).expect("finite"));
    let above = above.into_iter().map(|l| l.region.clone()).collect();
    Ok(PercentileClasses {
        indicator: indicator.to_string(),
        year,
        cut,
        threshold,
        labels,
        above,
    })
}

/// How a microregion row of a standardized table is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionRowMode {
    /// z-score of the microregion's capital municipality.
    #[default]
    Capital,
    /// Microregion totals standardized across microregions.
    Aggregate,
}

/// Microregion × year table of standardized values for one indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroregionTable {
    pub indicator: String,
    pub mode: RegionRowMode,
    pub years: Vec<i32>,
    pub rows: Vec<MicroregionRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroregionRow {
    pub microregion: String,
    /// Capital region code in capital mode.
    pub region: Option<String>,
    pub values: Vec<Option<f64>>,
}

pub fn microregion_table(
    raw: &PanelDataset,
    indicator: &str,
    mode: RegionRowMode,
) -> Result<MicroregionTable> {
    let ind = raw.indicator_index(indicator)?;
    let groups = raw.microregions();
    let rows = match mode {
        RegionRowMode::Capital => {
            let z = standardize(raw)?;
            groups
                .iter()
                .map(|g| {
                    let r = raw
                        .regions
                        .iter()
                        .position(|reg| &reg.microregion == g && reg.capital)
                        .ok_or_else(|| PanelError::NoCapital(g.clone()))?;
                    Ok(MicroregionRow {
                        microregion: g.clone(),
                        region: Some(raw.regions[r].code.clone()),
                        values: (0..raw.years.len()).map(|y| z.get(r, ind, y)).collect(),
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        RegionRowMode::Aggregate => {
            let mut table = vec![vec![None; raw.years.len()]; groups.len()];
            for y in 0..raw.years.len() {
                let mut totals = vec![0.0; groups.len()];
                let mut counts = vec![0usize; groups.len()];
                for (r, region) in raw.regions.iter().enumerate() {
                    if let Some(v) = raw.get(r, ind, y) {
                        let g = groups.iter().position(|g| g == &region.microregion).expect("group");
                        totals[g] += v;
                        counts[g] += 1;
                    }
                }
                let observed: Vec<usize> = (0..groups.len()).filter(|&g| counts[g] > 0).collect();
                let vals: Vec<f64> = observed.iter().map(|&g| totals[g]).collect();
                if let Some(z) = z_scores(&vals) {
                    for (&g, v) in observed.iter().zip(z) {
                        table[g][y] = Some(v);
                    }
                }
            }
            groups
                .iter()
                .zip(table)
                .map(|(g, values)| MicroregionRow {
                    microregion: g.clone(),
                    region: None,
                    values,
                })
                .collect()
        }
    };
    Ok(MicroregionTable {
        indicator: indicator.to_string(),
        mode,
        years: raw.years.clone(),
        rows,
    })
}
