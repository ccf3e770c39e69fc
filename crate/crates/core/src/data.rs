//! Dataset ingestion and preprocessing: CSV loading, one-hot encoding of
//! categorical features, standardization of numeric features and seeded
//! train/test splitting.
//!
//! A [`FeatureSchema`] ties every encoded column back to the original
//! feature it came from, which the abstract domain needs in order to know
//! which columns form a one-hot group.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub mod synth;

/// A numeric feature and the encoded column it occupies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericFeature {
    pub name: String,
    pub column: usize,
}

/// A categorical feature expanded to one column per category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalGroup {
    pub name: String,
    /// Category names, in declared order.
    pub categories: Vec<String>,
    /// Encoded column indexes, one per category, aligned with `categories`.
    pub columns: Vec<usize>,
}

/// Metadata linking encoded columns to the original features.
///
/// The encoded columns of all numeric features and categorical groups
/// partition `0..dimension()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub numeric_features: Vec<NumericFeature>,
    pub categorical_groups: Vec<CategoricalGroup>,
    pub label_name: String,
    /// Class labels, in index order.
    pub label_values: Vec<String>,
    /// Index into `label_values` of the positive class, for binary tasks.
    pub positive_label: Option<usize>,
}

impl FeatureSchema {
    /// Number of encoded feature columns.
    pub fn dimension(&self) -> usize {
        self.numeric_features.len()
            + self
                .categorical_groups
                .iter()
                .map(|g| g.columns.len())
                .sum::<usize>()
    }

    pub fn num_labels(&self) -> usize {
        self.label_values.len()
    }

    /// Checks the column-partition and group-arity invariants.
    pub fn validate(&self) -> Result<()> {
        let d = self.dimension();
        let mut seen = vec![false; d];
        let mut mark = |c: usize| -> Result<()> {
            if c >= d {
                return Err(Error::InvalidSchema(format!("column index {c} out of range")));
            }
            if seen[c] {
                return Err(Error::InvalidSchema(format!("column index {c} assigned twice")));
            }
            seen[c] = true;
            Ok(())
        };
        for f in &self.numeric_features {
            mark(f.column)?;
        }
        for g in &self.categorical_groups {
            if g.categories.len() < 2 {
                return Err(Error::InvalidSchema(format!(
                    "categorical group `{}` needs at least 2 categories",
                    g.name
                )));
            }
            if g.categories.len() != g.columns.len() {
                return Err(Error::InvalidSchema(format!(
                    "categorical group `{}` has {} categories but {} columns",
                    g.name,
                    g.categories.len(),
                    g.columns.len()
                )));
            }
            for &c in &g.columns {
                mark(c)?;
            }
        }
        if self.label_values.is_empty() {
            return Err(Error::InvalidSchema("no label values".into()));
        }
        if let Some(p) = self.positive_label {
            if p >= self.label_values.len() {
                return Err(Error::InvalidSchema("positive label out of range".into()));
            }
        }
        debug_assert!(seen.iter().all(|&s| s));
        Ok(())
    }

    /// True iff `sample` has the right dimension and exactly one hot bit
    /// per categorical group.
    pub fn is_valid_sample(&self, sample: &Sample) -> bool {
        if sample.values.len() != self.dimension() {
            return false;
        }
        self.categorical_groups.iter().all(|g| {
            let ones = g
                .columns
                .iter()
                .filter(|&&c| sample.values[c] == 1.0)
                .count();
            ones == 1 && g.columns.iter().all(|&c| sample.values[c] == 0.0 || sample.values[c] == 1.0)
        })
    }

    /// Maps each categorical group to the index of its hot category.
    pub fn decode_one_hot(&self, sample: &Sample) -> Option<Vec<usize>> {
        if !self.is_valid_sample(sample) {
            return None;
        }
        Some(
            self.categorical_groups
                .iter()
                .map(|g| {
                    g.columns
                        .iter()
                        .position(|&c| sample.values[c] == 1.0)
                        .expect("validated sample has a hot bit")
                })
                .collect(),
        )
    }

    /// Stable content hash of the schema, stored in model files so a model
    /// is never applied to data encoded under a different schema.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("schema serializes");
        let digest = Sha256::digest(&json);
        let mut out = String::with_capacity(64);
        for b in digest {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }
}

/// One encoded data point: standardized numerics and 0/1 one-hot positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub values: Vec<f64>,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Self {
        Sample { values }
    }
}

/// Encoded samples plus their label indexes under a shared schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub schema: FeatureSchema,
    pub samples: Vec<Sample>,
    pub labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Sample, usize)> {
        self.samples.iter().zip(self.labels.iter().copied())
    }
}

/// Per-numeric-feature standardization statistics, fitted on the training
/// split only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    /// One entry per numeric feature, aligned with the schema's
    /// `numeric_features`.
    pub per_feature: Vec<ColumnStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    /// Population standard deviation. Zero when `constant`.
    pub std: f64,
    /// A constant column maps to 0 everywhere under standardization.
    pub constant: bool,
}

// ---------------------------------------------------------------------------
// Schema spec (the user-facing JSON description of a CSV)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Label,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Required for categorical columns; category order fixes the encoded
    /// column order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
    /// Optional for the label column; when absent, label values are taken
    /// from the data in sorted order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<String>>,
}

/// Declarative description of a CSV: which columns are numeric, categorical
/// or the label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaSpec {
    pub columns: Vec<ColumnSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_label: Option<String>,
}

impl SchemaSpec {
    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

/// What to do with missing values (empty cells).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    /// Drop every row containing a missing value.
    #[default]
    DropRows,
    /// Drop every feature column containing a missing value; rows with a
    /// missing label are still dropped.
    DropColumns,
}

/// What to do when a categorical cell holds an undeclared category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnknownCategoryPolicy {
    #[default]
    Fail,
    RejectRow,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub missing: MissingPolicy,
    pub unknown_category: UnknownCategoryPolicy,
}

/// Loads a CSV with a header row, drops missing values per the policy,
/// one-hot encodes categorical columns and maps labels to indexes.
pub fn load_csv(
    path: impl AsRef<Path>,
    spec: &SchemaSpec,
    opts: LoadOptions,
) -> Result<LabeledDataset> {
    let file = std::fs::File::open(path)?;
    load_csv_from_reader(file, spec, opts)
}

pub fn load_csv_from_reader(
    reader: impl Read,
    spec: &SchemaSpec,
    opts: LoadOptions,
) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();

    // Map each spec column to its CSV position.
    let mut positions = Vec::with_capacity(spec.columns.len());
    for col in &spec.columns {
        let pos = headers
            .iter()
            .position(|h| *h == col.name)
            .ok_or_else(|| Error::UnknownColumn(col.name.clone()))?;
        positions.push(pos);
    }
    let label_idx = spec
        .columns
        .iter()
        .position(|c| c.kind == ColumnKind::Label)
        .ok_or_else(|| Error::MissingLabel("schema spec declares no label column".into()))?;

    let mut rows: Vec<Vec<String>> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        rows.push(
            positions
                .iter()
                .map(|&p| record.get(p).unwrap_or("").trim().to_string())
                .collect(),
        );
    }

    // Resolve the missing-value policy before encoding.
    let mut dropped_columns: HashSet<usize> = HashSet::new();
    match opts.missing {
        MissingPolicy::DropRows => {
            rows.retain(|r| r.iter().all(|v| !v.is_empty()));
        }
        MissingPolicy::DropColumns => {
            for r in &rows {
                for (ci, v) in r.iter().enumerate() {
                    if v.is_empty() && ci != label_idx {
                        dropped_columns.insert(ci);
                    }
                }
            }
            rows.retain(|r| !r[label_idx].is_empty());
        }
    }

    let kept: Vec<(usize, &ColumnSpec)> = spec
        .columns
        .iter()
        .enumerate()
        .filter(|(i, _)| !dropped_columns.contains(i))
        .collect();

    // Label values: declared order, or sorted unique data values.
    let label_spec = &spec.columns[label_idx];
    let label_values: Vec<String> = match &label_spec.values {
        Some(vs) => vs.clone(),
        None => {
            let mut vs: Vec<String> = rows
                .iter()
                .map(|r| r[label_idx].clone())
                .collect::<HashSet<_>>()
                .into_iter()
                .collect();
            vs.sort();
            vs
        }
    };
    let positive_label = match &spec.positive_label {
        Some(p) => Some(
            label_values
                .iter()
                .position(|v| v == p)
                .ok_or_else(|| Error::UnknownLabel { row: 0, value: p.clone() })?,
        ),
        None => None,
    };

    // Assign encoded columns in spec order.
    let mut numeric_features = Vec::new();
    let mut categorical_groups = Vec::new();
    let mut next_col = 0usize;
    for (_, col) in &kept {
        match col.kind {
            ColumnKind::Numeric => {
                numeric_features.push(NumericFeature { name: col.name.clone(), column: next_col });
                next_col += 1;
            }
            ColumnKind::Categorical => {
                let cats = col.categories.clone().ok_or_else(|| {
                    Error::InvalidSchema(format!("categorical column `{}` lists no categories", col.name))
                })?;
                let columns = (next_col..next_col + cats.len()).collect::<Vec<_>>();
                next_col += cats.len();
                categorical_groups.push(CategoricalGroup {
                    name: col.name.clone(),
                    categories: cats,
                    columns,
                });
            }
            ColumnKind::Label => {}
        }
    }
    let schema = FeatureSchema {
        numeric_features,
        categorical_groups,
        label_name: label_spec.name.clone(),
        label_values,
        positive_label,
    };
    schema.validate()?;

    let d = schema.dimension();
    let mut samples = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    'rows: for (row_no, row) in rows.iter().enumerate() {
        let mut values = vec![0.0; d];
        let mut num_i = 0usize;
        let mut cat_i = 0usize;
        for &(orig_i, col) in &kept {
            let cell = &row[orig_i];
            match col.kind {
                ColumnKind::Numeric => {
                    let f = schema.numeric_features[num_i].column;
                    values[f] = cell.parse::<f64>().map_err(|_| {
                        Error::InvalidSchema(format!(
                            "row {row_no}: `{cell}` is not numeric in column `{}`",
                            col.name
                        ))
                    })?;
                    num_i += 1;
                }
                ColumnKind::Categorical => {
                    let g = &schema.categorical_groups[cat_i];
                    match g.categories.iter().position(|c| c == cell) {
                        Some(j) => values[g.columns[j]] = 1.0,
                        None => match opts.unknown_category {
                            UnknownCategoryPolicy::RejectRow => continue 'rows,
                            UnknownCategoryPolicy::Fail => {
                                return Err(Error::UnknownCategory {
                                    row: row_no,
                                    column: col.name.clone(),
                                    value: cell.clone(),
                                })
                            }
                        },
                    }
                    cat_i += 1;
                }
                ColumnKind::Label => {}
            }
        }
        let label_cell = &row[label_idx];
        let label = schema
            .label_values
            .iter()
            .position(|v| v == label_cell)
            .ok_or_else(|| Error::UnknownLabel { row: row_no, value: label_cell.clone() })?;
        samples.push(Sample::new(values));
        labels.push(label);
    }

    if samples.is_empty() {
        return Err(Error::EmptyDataset(" after dropping missing values"));
    }
    Ok(LabeledDataset { schema, samples, labels })
}

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

/// Fits per-feature mean and population standard deviation on `train` and
/// applies the transform to `train` and every dataset in `others`.
/// One-hot columns are untouched; constant columns are flagged and map to 0.
pub fn standardize(
    train: &LabeledDataset,
    others: &[&LabeledDataset],
) -> Result<(LabeledDataset, Vec<LabeledDataset>, StandardizationStats)> {
    if train.is_empty() {
        return Err(Error::EmptyDataset(""));
    }
    let n = train.len() as f64;
    let per_feature = train
        .schema
        .numeric_features
        .iter()
        .map(|f| {
            let mean = train.samples.iter().map(|s| s.values[f.column]).sum::<f64>() / n;
            let var = train
                .samples
                .iter()
                .map(|s| (s.values[f.column] - mean).powi(2))
                .sum::<f64>()
                / n;
            let std = var.sqrt();
            ColumnStats { mean, std, constant: std == 0.0 }
        })
        .collect::<Vec<_>>();
    let stats = StandardizationStats { per_feature };
    let train_out = apply_standardization(train, &stats);
    let others_out = others.iter().map(|ds| apply_standardization(ds, &stats)).collect();
    Ok((train_out, others_out, stats))
}

/// Applies previously fitted statistics to a dataset sharing the schema.
pub fn apply_standardization(ds: &LabeledDataset, stats: &StandardizationStats) -> LabeledDataset {
    let mut out = ds.clone();
    for s in &mut out.samples {
        for (f, cs) in ds.schema.numeric_features.iter().zip(&stats.per_feature) {
            let v = &mut s.values[f.column];
            *v = if cs.constant { 0.0 } else { (*v - cs.mean) / cs.std };
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

/// Seeded train/test split. The test set holds `round(fraction * n)` rows;
/// rerunning with the same seed reproduces the partition exactly.
pub fn split(
    dataset: &LabeledDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset(""));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidFraction(test_fraction));
    }
    let n = dataset.len();
    let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let take = |idx: &[usize]| LabeledDataset {
        schema: dataset.schema.clone(),
        samples: idx.iter().map(|&i| dataset.samples[i].clone()).collect(),
        labels: idx.iter().map(|&i| dataset.labels[i]).collect(),
    };
    let (test_idx, train_idx) = order.split_at(n_test);
    Ok((take(train_idx), take(test_idx)))
}

// ---------------------------------------------------------------------------
// Dataset interchange format
// ---------------------------------------------------------------------------

const DATASET_FORMAT_VERSION: u32 = 1;

/// On-disk dataset bundle: schema, optional standardization stats and the
/// encoded matrix, for reproducible pipelines.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetFile {
    pub version: u32,
    pub schema: FeatureSchema,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardization: Option<StandardizationStats>,
    pub samples: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl DatasetFile {
    pub fn new(ds: &LabeledDataset, stats: Option<StandardizationStats>) -> Self {
        DatasetFile {
            version: DATASET_FORMAT_VERSION,
            schema: ds.schema.clone(),
            standardization: stats,
            samples: ds.samples.iter().map(|s| s.values.clone()).collect(),
            labels: ds.labels.clone(),
        }
    }

    pub fn into_dataset(self) -> Result<(LabeledDataset, Option<StandardizationStats>)> {
        if self.version != DATASET_FORMAT_VERSION {
            return Err(Error::ModelVersion { expected: DATASET_FORMAT_VERSION, got: self.version });
        }
        self.schema.validate()?;
        let ds = LabeledDataset {
            schema: self.schema,
            samples: self.samples.into_iter().map(Sample::new).collect(),
            labels: self.labels,
        };
        Ok((ds, self.standardization))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
