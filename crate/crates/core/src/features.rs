//! Fixed-length per-utterance feature vectors and the feature CSV format.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::embedding::LayerId;
use crate::error::{Error, Result};

/// Which representation a feature vector holds.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum FeatureSetId {
    /// 40 time-averaged MFCCs.
    Mfcc40,
    /// 88 eGeMAPSv02 functionals from an external extractor.
    Egemaps88,
    /// Mean-pooled wav2vec 2.0 layer output.
    W2v2(LayerId),
    /// Any other representation (synthetic cohorts, user features).
    Custom(String),
}

impl FeatureSetId {
    /// Declared dimension, when the set fixes one.
    pub fn declared_dim(&self) -> Option<usize> {
        match self {
            FeatureSetId::Mfcc40 => Some(40),
            FeatureSetId::Egemaps88 => Some(88),
            _ => None,
        }
    }
}

impl fmt::Display for FeatureSetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureSetId::Mfcc40 => f.write_str("mfcc40"),
            FeatureSetId::Egemaps88 => f.write_str("egemaps88"),
            FeatureSetId::W2v2(layer) => write!(f, "w2v2-{layer}"),
            FeatureSetId::Custom(name) => f.write_str(name),
        }
    }
}

impl FromStr for FeatureSetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mfcc40" => Ok(FeatureSetId::Mfcc40),
            "egemaps88" => Ok(FeatureSetId::Egemaps88),
            _ => {
                if let Some(rest) = s.strip_prefix("w2v2-") {
                    return Ok(FeatureSetId::W2v2(rest.parse()?));
                }
                if s.is_empty() || s.contains(|c: char| c.is_whitespace() || c == ',') {
                    return Err(Error::Config(format!("invalid feature set id '{s}'")));
                }
                Ok(FeatureSetId::Custom(s.to_string()))
            }
        }
    }
}

impl From<FeatureSetId> for String {
    fn from(id: FeatureSetId) -> String {
        id.to_string()
    }
}

impl TryFrom<String> for FeatureSetId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// One utterance's fixed-length representation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub utterance_id: String,
    pub feature_set: FeatureSetId,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(
        utterance_id: impl Into<String>,
        feature_set: FeatureSetId,
        values: Vec<f64>,
    ) -> Result<Self> {
        let utterance_id = utterance_id.into();
        if let Some(dim) = feature_set.declared_dim() {
            if values.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: format!("{feature_set} vector for '{utterance_id}'"),
                    expected: dim,
                    found: values.len(),
                });
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("features of '{utterance_id}'")));
        }
        Ok(Self {
            utterance_id,
            feature_set,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Column means of an `n_frames × dim` matrix.
///
/// Each column is summed in sorted order, so the result is bit-identical
/// under any permutation of the rows.
pub fn column_means(matrix: &Array2<f64>) -> Result<Vec<f64>> {
    let n = matrix.nrows();
    if n == 0 || matrix.ncols() == 0 {
        return Err(Error::InvalidData("cannot pool an empty matrix".into()));
    }
    let mut column = Vec::with_capacity(n);
    Ok(matrix
        .columns()
        .into_iter()
        .map(|col| {
            column.clear();
            column.extend(col.iter().copied());
            column.sort_by(f64::total_cmp);
            neumaier_sum(&column) / n as f64
        })
        .collect())
}

fn neumaier_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Features of a cohort keyed by utterance id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub feature_set: FeatureSetId,
    pub dim: usize,
    rows: BTreeMap<String, Vec<f64>>,
}

impl FeatureTable {
    pub fn from_vectors(feature_set: FeatureSetId, vectors: Vec<FeatureVector>) -> Result<Self> {
        let mut rows = BTreeMap::new();
        let mut dim = None;
        for v in vectors {
            if v.feature_set != feature_set {
                return Err(Error::InvalidData(format!(
                    "utterance '{}' has feature set {} but the table holds {}",
                    v.utterance_id, v.feature_set, feature_set
                )));
            }
            match dim {
                None => dim = Some(v.dim()),
                Some(d) if d != v.dim() => {
                    return Err(Error::DimensionMismatch {
                        context: format!("features of '{}'", v.utterance_id),
                        expected: d,
                        found: v.dim(),
                    })
                }
                _ => {}
            }
            if rows.insert(v.utterance_id.clone(), v.values).is_some() {
                return Err(Error::InvalidData(format!(
                    "duplicate utterance_id '{}'",
                    v.utterance_id
                )));
            }
        }
        Ok(Self {
            dim: dim.or(feature_set.declared_dim()).unwrap_or(0),
            feature_set,
            rows,
        })
    }

    pub fn get(&self, utterance_id: &str) -> Option<&[f64]> {
        self.rows.get(utterance_id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.rows.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

/// Reads a feature CSV (`utterance_id, f1..f_dim`, header mandatory).
///
/// A file holding only the header yields an empty list.
pub fn ingest_feature_csv(
    path: &Path,
    expected_dim: usize,
    feature_set: FeatureSetId,
) -> Result<Vec<FeatureVector>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    if headers.get(0).map(str::trim) != Some("utterance_id") {
        return Err(Error::csv(path, "first header column must be 'utterance_id'"));
    }
    if headers.len() != expected_dim + 1 {
        return Err(Error::DimensionMismatch {
            context: format!("{} header", path.display()),
            expected: expected_dim,
            found: headers.len().saturating_sub(1),
        });
    }

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let row = i + 2; // 1-based, header is line 1
        let id = record.get(0).unwrap_or("").trim().to_string();
        if record.len() != expected_dim + 1 {
            return Err(Error::DimensionMismatch {
                context: format!("{} row {row} ('{id}')", path.display()),
                expected: expected_dim,
                found: record.len().saturating_sub(1),
            });
        }
        if !seen.insert(id.clone()) {
            return Err(Error::csv(
                path,
                format!("row {row}: duplicate utterance_id '{id}'"),
            ));
        }
        let values = record
            .iter()
            .skip(1)
            .enumerate()
            .map(|(j, cell)| {
                cell.trim().parse::<f64>().map_err(|_| {
                    Error::csv(
                        path,
                        format!("row {row} column f{}: non-numeric cell '{cell}'", j + 1),
                    )
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(FeatureVector::new(id, feature_set.clone(), values)?);
    }
    Ok(out)
}

/// Writes vectors in the same CSV layout [`ingest_feature_csv`] reads.
pub fn write_feature_csv(path: &Path, vectors: &[FeatureVector], dim: usize) -> Result<()> {
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = String::from("utterance_id");
    for j in 1..=dim {
        buf.push_str(&format!(",f{j}"));
    }
    buf.push('\n');
    for v in vectors {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch {
                context: format!("writing '{}'", v.utterance_id),
                expected: dim,
                found: v.dim(),
            });
        }
        buf.push_str(&csv_field(&v.utterance_id));
        for x in &v.values {
            buf.push(',');
            buf.push_str(&x.to_string());
        }
        buf.push('\n');
    }
    file.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))
}

/// RFC-4180 quoting for a single field.
pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
