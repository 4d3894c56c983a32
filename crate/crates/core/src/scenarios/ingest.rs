//! Numeric CSV ingestion for user-supplied regression datasets.

use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub target: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// Fisher-Yates shuffle of the rows.
    pub fn shuffle(&mut self, rng: &mut RngStream) {
        for i in (1..self.len()).rev() {
            let j = rng.index(i + 1);
            self.features.swap(i, j);
            self.target.swap(i, j);
        }
    }

    /// Splits off the first `ceil(fraction * n)` rows as a warm-up set and
    /// min-max scales the remainder with the warm-up ranges. Constant
    /// warm-up columns are only shifted.
    pub fn warmup_split(&self, fraction: f64) -> Result<(Dataset, Dataset)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::InvalidParameter(format!("fraction = {fraction} outside (0, 1)")));
        }
        let n_warm = ((fraction * self.len() as f64).ceil() as usize).max(1);
        if n_warm >= self.len() {
            return Err(Error::InsufficientSamples {
                needed: n_warm + 1,
                got: self.len(),
            });
        }
        let warm = Dataset {
            features: self.features[..n_warm].to_vec(),
            target: self.target[..n_warm].to_vec(),
        };
        let range = |vals: &mut dyn Iterator<Item = f64>| {
            vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        let scale = |v: f64, (lo, hi): (f64, f64)| if hi > lo { (v - lo) / (hi - lo) } else { v - lo };
        let feat_ranges: Vec<(f64, f64)> = (0..self.n_features())
            .map(|j| range(&mut warm.features.iter().map(|r| r[j])))
            .collect();
        let target_range = range(&mut warm.target.iter().copied());
        let rest = Dataset {
            features: self.features[n_warm..]
                .iter()
                .map(|r| r.iter().zip(&feat_ranges).map(|(&v, &fr)| scale(v, fr)).collect())
                .collect(),
            target: self.target[n_warm..].iter().map(|&v| scale(v, target_range)).collect(),
        };
        Ok((warm, rest))
    }
}

/// Reads a numeric CSV. A first row that fails to parse is treated as a
/// header. `target_col` may be negative to count from the end.
pub fn load_csv(path: &Path, target_col: isize) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
    let mut features = Vec::new();
    let mut target = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(|s| s.trim().parse::<f64>()).collect();
        let row = match parsed {
            Ok(r) => r,
            Err(_) if i == 0 => continue,
            Err(e) => {
                return Err(Error::InvalidParameter(format!("{} row {}: {e}", path.display(), i + 1)));
            }
        };
        let width = row.len() as isize;
        let col = if target_col < 0 { width + target_col } else { target_col };
        if !(0..width).contains(&col) || width < 2 {
            return Err(Error::InvalidParameter(format!("target column {target_col} out of range")));
        }
        let col = col as usize;
        target.push(row[col]);
        features.push(row.iter().enumerate().filter(|&(j, _)| j != col).map(|(_, &v)| v).collect::<Vec<_>>());
    }
    if let Some(w) = features.first().map(Vec::len) {
        if features.iter().any(|r| r.len() != w) {
            return Err(Error::InvalidParameter("ragged CSV rows".into()));
        }
    }
    Ok(Dataset { features, target })
}
