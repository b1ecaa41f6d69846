//! Contiguity spatial weights.
//!
//! Weights are built binary from polygons ([`queen_contiguity`],
//! [`rook_contiguity`]) or read from GAL files, then row-standardized for
//! Moran analysis. Regions without neighbors (isolates) are kept and flagged.

mod gal;
mod geometry;

pub use gal::{load_gal, save_gal, GalHeader};
pub use geometry::{
    load_geojson, queen_contiguity, rook_contiguity, Point, Polygon, RegionGeometry, Ring,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("region {region}: invalid ring: {reason}")]
    InvalidRing { region: String, reason: String },
    #[error("region {0} has empty geometry")]
    EmptyGeometry(String),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("line {line}: unknown neighbor id `{id}`")]
    UnknownNeighbor { line: usize, id: String },
    #[error("invalid weights: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sparse neighbor lists with per-link weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialWeights {
    ids: Vec<String>,
    neighbors: Vec<Vec<(usize, f64)>>,
    standardized: bool,
}

impl SpatialWeights {
    /// Validates indices, duplicate ids, self-links, repeated links and
    /// weights (finite, positive).
    pub fn new(
        ids: Vec<String>,
        neighbors: Vec<Vec<(usize, f64)>>,
        standardized: bool,
    ) -> Result<Self, WeightsError> {
        let n = ids.len();
        if neighbors.len() != n {
            return Err(WeightsError::Invalid(format!(
                "{} ids but {} neighbor rows",
                n,
                neighbors.len()
            )));
        }
        let mut sorted_ids: Vec<&String> = ids.iter().collect();
        sorted_ids.sort();
        if let Some(w) = sorted_ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(WeightsError::Invalid(format!("duplicate region id {}", w[0])));
        }
        for (i, row) in neighbors.iter().enumerate() {
            let mut seen = vec![false; n];
            for &(j, w) in row {
                if j >= n {
                    return Err(WeightsError::Invalid(format!("{}: neighbor index {j} out of range", ids[i])));
                }
                if j == i {
                    return Err(WeightsError::Invalid(format!("{}: self-link", ids[i])));
                }
                if std::mem::replace(&mut seen[j], true) {
                    return Err(WeightsError::Invalid(format!("{}: repeated neighbor {}", ids[i], ids[j])));
                }
                if !(w.is_finite() && w > 0.0) {
                    return Err(WeightsError::Invalid(format!("{}: weight {w}", ids[i])));
                }
            }
        }
        Ok(Self {
            ids,
            neighbors,
            standardized,
        })
    }

    /// Binary weights from neighbor index lists.
    pub fn from_adjacency(ids: Vec<String>, adjacency: Vec<Vec<usize>>) -> Result<Self, WeightsError> {
        let neighbors = adjacency
            .into_iter()
            .map(|row| row.into_iter().map(|j| (j, 1.0)).collect())
            .collect();
        Self::new(ids, neighbors, false)
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    pub fn cardinality(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn is_isolate(&self, i: usize) -> bool {
        self.neighbors[i].is_empty()
    }

    pub fn isolates(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.is_isolate(i)).collect()
    }

    pub fn n_links(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }

    /// `j ∈ N(i) ⇔ i ∈ N(j)`.
    pub fn is_symmetric(&self) -> bool {
        self.neighbors.iter().enumerate().all(|(i, row)| {
            row.iter()
                .all(|&(j, _)| self.neighbors[j].iter().any(|&(k, _)| k == i))
        })
    }

    /// `Σ_j w_ij x_j` for every region (0 for isolates).
    pub fn lag(&self, values: &[f64]) -> Vec<f64> {
        self.neighbors
            .iter()
            .map(|row| row.iter().map(|&(j, w)| w * values[j]).sum())
            .collect()
    }

    /// Each non-isolate row divided by its sum; isolates stay empty.
    pub fn row_standardize(&self) -> SpatialWeights {
        let neighbors = self
            .neighbors
            .iter()
            .map(|row| {
                let total: f64 = row.iter().map(|&(_, w)| w).sum();
                row.iter().map(|&(j, w)| (j, w / total)).collect()
            })
            .collect();
        SpatialWeights {
            ids: self.ids.clone(),
            neighbors,
            standardized: true,
        }
    }

    /// Weights restricted to the regions in `keep` (in that order). Links to
    /// dropped regions disappear; standardized input is re-standardized.
    pub fn subset(&self, keep: &[usize]) -> Result<SpatialWeights, WeightsError> {
        let mut position = vec![usize::MAX; self.n()];
        for (new, &old) in keep.iter().enumerate() {
            if old >= self.n() {
                return Err(WeightsError::Invalid(format!("index {old} out of range")));
            }
            position[old] = new;
        }
        let neighbors: Vec<Vec<(usize, f64)>> = keep
            .iter()
            .map(|&old| {
                self.neighbors[old]
                    .iter()
                    .filter(|&&(j, _)| position[j] != usize::MAX)
                    .map(|&(j, w)| (position[j], w))
                    .collect()
            })
            .collect();
        let ids = keep.iter().map(|&i| self.ids[i].clone()).collect();
        let out = SpatialWeights::new(ids, neighbors, false)?;
        Ok(if self.standardized {
            out.row_standardize()
        } else {
            out
        })
    }

    /// Index of each of `codes` in this weights object.
    pub fn align(&self, codes: &[String]) -> Result<Vec<usize>, WeightsError> {
        codes
            .iter()
            .map(|c| {
                self.ids
                    .iter()
                    .position(|id| id == c)
                    .ok_or_else(|| WeightsError::Invalid(format!("region {c} not in weights")))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardinalityBin {
    pub neighbors: usize,
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivitySummary {
    pub n_regions: usize,
    pub n_links: usize,
    /// Smallest neighbor count among non-isolates (0 if every region is one).
    pub min_neighbors: usize,
    pub max_neighbors: usize,
    /// Over all regions, isolates included.
    pub mean_neighbors: f64,
    pub median_neighbors: f64,
    /// Links over n², in percent.
    pub pct_nonzero: f64,
    pub symmetric: bool,
    pub isolates: Vec<String>,
    pub histogram: Vec<CardinalityBin>,
}

pub fn connectivity_summary(weights: &SpatialWeights) -> ConnectivitySummary {
    let n = weights.n();
    let card: Vec<usize> = (0..n).map(|i| weights.cardinality(i)).collect();
    let links = weights.n_links();
    let as_f64: Vec<f64> = card.iter().map(|&c| c as f64).collect();
    let (mean, median, pct) = if n == 0 {
        (0.0, 0.0, 0.0)
    } else {
        (
            links as f64 / n as f64,
            stats::median_sorted(&stats::sorted(&as_f64)),
            100.0 * links as f64 / (n as f64 * n as f64),
        )
    };
    let max = card.iter().copied().max().unwrap_or(0);
    let min = card.iter().copied().filter(|&c| c > 0).min().unwrap_or(0);
    let histogram = (0..=max)
        .filter_map(|k| {
            let count = card.iter().filter(|&&c| c == k).count();
            (count > 0).then(|| CardinalityBin {
                neighbors: k,
                count,
                percent: 100.0 * count as f64 / n as f64,
            })
        })
        .collect();
    ConnectivitySummary {
        n_regions: n,
        n_links: links,
        min_neighbors: min,
        max_neighbors: max,
        mean_neighbors: mean,
        median_neighbors: median,
        pct_nonzero: pct,
        symmetric: weights.is_symmetric(),
        isolates: weights.isolates().into_iter().map(|i| weights.ids[i].clone()).collect(),
        histogram,
    }
}
