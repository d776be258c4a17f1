use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::sharing::PrgSeed;

/// Binary classification data with features min-max scaled to [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    /// Row-major, `rows x dim`.
    pub features: Vec<f64>,
    pub labels: Vec<u8>,
    pub dim: usize,
    /// Per-feature `(min, max)` before scaling.
    pub normalization: Vec<(f64, f64)>,
}

impl Dataset {
    /// Scales raw features column by column. Constant columns become 0.
    pub fn from_raw(name: &str, raw: Vec<f64>, labels: Vec<u8>, dim: usize) -> Result<Self> {
        if dim == 0 || raw.len() != labels.len() * dim {
            return Err(Error::Dataset(format!("{} values for {} rows of width {dim}", raw.len(), labels.len())));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Dataset(format!("label {bad} is not binary")));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dataset("non-finite feature value".into()));
        }
        let rows = labels.len();
        let mut normalization = Vec::with_capacity(dim);
        for c in 0..dim {
            let col = (0..rows).map(|r| raw[r * dim + c]);
            let lo = col.clone().fold(f64::INFINITY, f64::min);
            let hi = col.fold(f64::NEG_INFINITY, f64::max);
            normalization.push((lo, hi));
        }
        let features = raw
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let (lo, hi) = normalization[i % dim];
                if hi > lo {
                    (v - lo) / (hi - lo)
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Dataset { name: name.to_string(), features, labels, dim, normalization })
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.features[r * self.dim..(r + 1) * self.dim]
    }

    /// Feature matrix with an optional trailing constant-1 column.
    pub fn design(&self, bias: bool) -> Vec<f64> {
        let w = self.dim + bias as usize;
        let mut out = Vec::with_capacity(self.rows() * w);
        for r in 0..self.rows() {
            out.extend_from_slice(self.row(r));
            if bias {
                out.push(1.0);
            }
        }
        out
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            features: rows.iter().flat_map(|&r| self.row(r).iter().copied()).collect(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            dim: self.dim,
            normalization: self.normalization.clone(),
        }
    }

    /// Seeded split into `(train, eval)`; `fraction` of the rows go to eval.
    pub fn split(&self, fraction: f64, seed: &PrgSeed) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::Config(format!("holdout fraction {fraction} is outside [0, 1)")));
        }
        let mut idx: Vec<usize> = (0..self.rows()).collect();
        idx.shuffle(&mut seed.rng());
        let k = (fraction * self.rows() as f64).ceil() as usize;
        let (eval, train) = idx.split_at(k);
        Ok((self.subset(train), self.subset(eval)))
    }
}

/// Reads a numeric CSV with a header row. The label column defaults to the
/// last one.
pub fn load_csv(path: &Path, label_column: Option<&str>) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let label_idx = match label_column {
        Some(name) => headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Dataset(format!("no column named {name:?}")))?,
        None => headers.len().checked_sub(1).ok_or_else(|| Error::Dataset("empty header".into()))?,
    };
    let dim = headers.len() - 1;
    let mut raw = Vec::new();
    let mut labels = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != headers.len() {
            return Err(Error::Dataset(format!("row {} has {} fields", line + 2, rec.len())));
        }
        for (i, field) in rec.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Dataset(format!("row {}: {field:?} is not a number", line + 2)))?;
            if i == label_idx {
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Dataset(format!("row {}: label {v} is not binary", line + 2)));
                }
                labels.push(v as u8);
            } else {
                raw.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::Dataset(format!("{} has no rows", path.display())));
    }
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Dataset::from_raw(&name, raw, labels, dim)
}

/// Rank-based AUC; tied scores count one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Dataset("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // average ranks over tie groups
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64 * avg;
        i = j + 1;
    }
    let pos = pos as f64;
    Ok((rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg as f64))
}
