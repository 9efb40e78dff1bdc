//! Tabular data loading, validation, and encoding.
//!
//! A [`Dataset`] carries typed cells for every schema column plus the roles
//! needed by the estimators: exactly one binary protected column (treated
//! level vs. control level) and exactly one numeric or binary outcome.
//! Categorical features are expanded to one-hot indicators by
//! [`Dataset::one_hot_encode`]; regressions use a full-rank design view that
//! drops one reference level per categorical group while the dataset itself
//! keeps every indicator for diagnostics.

use std::collections::BTreeSet;
use std::ops::Range;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cell values recognized as missing markers ("?" is the Adult convention).
const MISSING_MARKERS: [&str; 3] = ["", "NA", "?"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnRole {
    Feature,
    Protected,
    Outcome,
    Ignore,
}

/// Declared type and role of one input column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    pub role: ColumnRole,
    /// Level of the protected column coded 1 (defaults to "1" when observed).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub treated_level: Option<String>,
    /// Level of a binary outcome coded 1 (defaults to "1" when observed).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_outcome: Option<String>,
}

impl ColumnSchema {
    pub fn new(name: &str, kind: ColumnKind, role: ColumnRole) -> Self {
        Self {
            name: name.to_string(),
            kind,
            role,
            treated_level: None,
            positive_outcome: None,
        }
    }

    pub fn with_treated_level(mut self, level: &str) -> Self {
        self.treated_level = Some(level.to_string());
        self
    }

    pub fn with_positive_outcome(mut self, level: &str) -> Self {
        self.positive_outcome = Some(level.to_string());
        self
    }
}

/// Parse a schema document: a JSON array of column descriptors.
pub fn schema_from_json(text: &str) -> Result<Vec<ColumnSchema>> {
    let cols: Vec<ColumnSchema> = serde_json::from_str(text)?;
    Ok(cols)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Cat(String),
    Missing,
}

impl Cell {
    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }
}

/// One-hot expansion bookkeeping for a single source feature column.
#[derive(Debug, Clone)]
pub struct EncodedGroup {
    /// Schema name of the source column.
    pub source: String,
    /// Columns of [`Encoded::features`] holding this group's indicators
    /// (a single column for numeric and binary sources).
    pub columns: Range<usize>,
    /// Category levels in lexicographic order; empty for numeric sources.
    pub levels: Vec<String>,
}

/// Numeric view of an encoded dataset.
#[derive(Debug, Clone)]
pub struct Encoded {
    /// All indicator/numeric feature columns, one name per column.
    pub feature_names: Vec<String>,
    /// n x p matrix with every indicator level retained.
    pub features: DMatrix<f64>,
    pub groups: Vec<EncodedGroup>,
    /// Columns of `features` used in regression designs: reference levels of
    /// categorical groups and constant columns are excluded.
    pub design_columns: Vec<usize>,
    /// Feature columns dropped because they were constant.
    pub dropped_constant: Vec<String>,
    /// Per-row 0/1 indicator, 1 = treated level.
    pub protected: Vec<u8>,
    /// Per-row outcome; binary outcomes coded 0/1.
    pub outcome: Vec<f64>,
    pub outcome_is_binary: bool,
}

/// Treated/control level names of the protected column.
#[derive(Debug, Clone, Serialize)]
pub struct GroupLabels {
    pub treated: String,
    pub control: String,
}

/// Column-typed tabular data with designated protected and outcome roles.
#[derive(Debug, Clone)]
pub struct Dataset {
    schema: Vec<ColumnSchema>,
    /// Column-major cells aligned with `schema`.
    columns: Vec<Vec<Cell>>,
    n_rows: usize,
    treated_level: String,
    control_level: String,
    positive_outcome: Option<String>,
    encoded: Option<Encoded>,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn schema(&self) -> &[ColumnSchema] {
        &self.schema
    }

    pub fn group_labels(&self) -> GroupLabels {
        GroupLabels {
            treated: self.treated_level.clone(),
            control: self.control_level.clone(),
        }
    }

    pub fn protected_column(&self) -> &ColumnSchema {
        self.schema
            .iter()
            .find(|c| c.role == ColumnRole::Protected)
            .expect("validated schema has a protected column")
    }

    pub fn outcome_column(&self) -> &ColumnSchema {
        self.schema
            .iter()
            .find(|c| c.role == ColumnRole::Outcome)
            .expect("validated schema has an outcome column")
    }

    pub fn cell(&self, row: usize, col: usize) -> &Cell {
        &self.columns[col][row]
    }

    /// Numeric view; available after [`Dataset::one_hot_encode`].
    pub fn encoded(&self) -> Result<&Encoded> {
        self.encoded.as_ref().ok_or_else(|| {
            Error::InvalidConfig("dataset is not encoded; call one_hot_encode first".into())
        })
    }

    pub fn is_encoded(&self) -> bool {
        self.encoded.is_some()
    }

    /// Count of rows containing at least one missing cell (ignore columns excluded).
    pub fn missing_rows(&self) -> usize {
        (0..self.n_rows).filter(|&r| self.row_has_missing(r)).count()
    }

    fn row_has_missing(&self, row: usize) -> bool {
        self.schema
            .iter()
            .zip(&self.columns)
            .any(|(schema, col)| schema.role != ColumnRole::Ignore && col[row].is_missing())
    }

    /// Remove rows with missing cells, preserving order.
    pub fn drop_missing(&self) -> Result<Dataset> {
        let keep: Vec<usize> = (0..self.n_rows)
            .filter(|&r| !self.row_has_missing(r))
            .collect();
        if keep.len() < 2 {
            return Err(Error::DegenerateDataset(format!(
                "{} rows remain after dropping missing values",
                keep.len()
            )));
        }
        let columns: Vec<Vec<Cell>> = self
            .columns
            .iter()
            .map(|col| keep.iter().map(|&r| col[r].clone()).collect())
            .collect();
        let out = Dataset {
            schema: self.schema.clone(),
            columns,
            n_rows: keep.len(),
            treated_level: self.treated_level.clone(),
            control_level: self.control_level.clone(),
            positive_outcome: self.positive_outcome.clone(),
            encoded: None,
        };
        let protected_idx = out.protected_index();
        let mut saw = [false, false];
        for cell in &out.columns[protected_idx] {
            if let Cell::Cat(level) = cell {
                saw[usize::from(*level == out.treated_level)] = true;
            }
        }
        if !(saw[0] && saw[1]) {
            return Err(Error::DegenerateDataset(
                "a protected level vanished after dropping missing values".into(),
            ));
        }
        Ok(out)
    }

    fn protected_index(&self) -> usize {
        self.schema
            .iter()
            .position(|c| c.role == ColumnRole::Protected)
            .expect("validated schema")
    }

    fn outcome_index(&self) -> usize {
        self.schema
            .iter()
            .position(|c| c.role == ColumnRole::Outcome)
            .expect("validated schema")
    }

    /// Expand categorical features into one-hot indicators and freeze the
    /// numeric views used by the estimators. Requires no missing cells.
    pub fn one_hot_encode(&self) -> Result<Dataset> {
        if self.missing_rows() > 0 {
            return Err(Error::MissingValuesPresent);
        }
        let n = self.n_rows;

        let mut feature_names = Vec::new();
        let mut groups = Vec::new();
        let mut data_cols: Vec<Vec<f64>> = Vec::new();
        let mut dropped_constant = Vec::new();

        for (idx, schema) in self.schema.iter().enumerate() {
            if schema.role != ColumnRole::Feature {
                continue;
            }
            let col = &self.columns[idx];
            match schema.kind {
                ColumnKind::Numeric => {
                    let start = data_cols.len();
                    let vals: Vec<f64> = col
                        .iter()
                        .map(|c| match c {
                            Cell::Num(v) => *v,
                            _ => unreachable!("numeric column holds numeric cells"),
                        })
                        .collect();
                    feature_names.push(schema.name.clone());
                    data_cols.push(vals);
                    groups.push(EncodedGroup {
                        source: schema.name.clone(),
                        columns: start..start + 1,
                        levels: Vec::new(),
                    });
                }
                ColumnKind::Binary => {
                    let levels = observed_levels(col);
                    if levels.len() == 1 {
                        dropped_constant.push(schema.name.clone());
                        continue;
                    }
                    if levels.len() != 2 {
                        return Err(Error::SchemaMismatch(format!(
                            "binary column `{}` has {} observed levels",
                            schema.name,
                            levels.len()
                        )));
                    }
                    // Lexicographically larger level codes 1, so a 0/1
                    // column stays as-is.
                    let one = &levels[1];
                    let start = data_cols.len();
                    let vals: Vec<f64> = col
                        .iter()
                        .map(|c| match c {
                            Cell::Cat(s) => f64::from(u8::from(s == one)),
                            _ => unreachable!("binary column holds category cells"),
                        })
                        .collect();
                    feature_names.push(schema.name.clone());
                    data_cols.push(vals);
                    groups.push(EncodedGroup {
                        source: schema.name.clone(),
                        columns: start..start + 1,
                        levels: levels.clone(),
                    });
                }
                ColumnKind::Categorical => {
                    let levels = observed_levels(col);
                    if levels.len() <= 1 {
                        dropped_constant.push(schema.name.clone());
                        continue;
                    }
                    let start = data_cols.len();
                    for level in &levels {
                        let vals: Vec<f64> = col
                            .iter()
                            .map(|c| match c {
                                Cell::Cat(s) => f64::from(u8::from(s == level)),
                                _ => unreachable!("categorical column holds category cells"),
                            })
                            .collect();
                        feature_names.push(format!("{}={}", schema.name, level));
                        data_cols.push(vals);
                    }
                    groups.push(EncodedGroup {
                        source: schema.name.clone(),
                        columns: start..start + levels.len(),
                        levels,
                    });
                }
            }
        }

        // Regression design: drop the first (reference) level of each
        // categorical group, and any constant column, to keep full rank.
        let mut design_columns = Vec::new();
        for group in &groups {
            let is_categorical = group.levels.len() > 2
                || (group.levels.len() == 2 && group.columns.len() == 2);
            for (offset, c) in group.columns.clone().enumerate() {
                if is_categorical && offset == 0 {
                    continue; // reference level
                }
                if is_constant(&data_cols[c]) {
                    dropped_constant.push(feature_names[c].clone());
                    continue;
                }
                design_columns.push(c);
            }
        }

        let p = data_cols.len();
        let features = DMatrix::from_fn(n, p, |r, c| data_cols[c][r]);

        let protected_idx = self.protected_index();
        let protected: Vec<u8> = self.columns[protected_idx]
            .iter()
            .map(|c| match c {
                Cell::Cat(s) => u8::from(*s == self.treated_level),
                _ => unreachable!("protected column holds category cells"),
            })
            .collect();
        if !protected.contains(&0) || !protected.contains(&1) {
            return Err(Error::DegenerateDataset(
                "both protected levels must be present".into(),
            ));
        }

        let outcome_idx = self.outcome_index();
        let outcome_schema = &self.schema[outcome_idx];
        let outcome_is_binary = outcome_schema.kind == ColumnKind::Binary;
        let outcome: Vec<f64> = if outcome_is_binary {
            let positive = self
                .positive_outcome
                .as_deref()
                .expect("validated at load");
            self.columns[outcome_idx]
                .iter()
                .map(|c| match c {
                    Cell::Cat(s) => f64::from(u8::from(s == positive)),
                    _ => unreachable!("binary outcome holds category cells"),
                })
                .collect()
        } else {
            self.columns[outcome_idx]
                .iter()
                .map(|c| match c {
                    Cell::Num(v) => *v,
                    _ => unreachable!("numeric outcome holds numeric cells"),
                })
                .collect()
        };

        let mut out = self.clone();
        out.encoded = Some(Encoded {
            feature_names,
            features,
            groups,
            design_columns,
            dropped_constant,
            protected,
            outcome,
            outcome_is_binary,
        });
        Ok(out)
    }

    /// Per-row 0/1 indicator of the treated level.
    pub fn protected_indicator(&self) -> Result<&[u8]> {
        Ok(&self.encoded()?.protected)
    }

    /// Per-row outcome values (binary outcomes coded 0/1).
    pub fn outcome(&self) -> Result<&[f64]> {
        Ok(&self.encoded()?.outcome)
    }

    /// Design feature matrix: one-hot groups minus reference levels,
    /// constants removed. Excludes intercept, protected, and outcome.
    pub fn design_features(&self) -> Result<DMatrix<f64>> {
        let enc = self.encoded()?;
        let cols = &enc.design_columns;
        Ok(DMatrix::from_fn(enc.features.nrows(), cols.len(), |r, j| {
            enc.features[(r, cols[j])]
        }))
    }

    /// Names for the columns of [`Dataset::design_features`].
    pub fn design_names(&self) -> Result<Vec<String>> {
        let enc = self.encoded()?;
        Ok(enc
            .design_columns
            .iter()
            .map(|&c| enc.feature_names[c].clone())
            .collect())
    }

    /// `[1 | X]` design for the propensity model.
    pub fn design_with_intercept(&self) -> Result<DMatrix<f64>> {
        let x = self.design_features()?;
        let n = x.nrows();
        let mut out = DMatrix::zeros(n, x.ncols() + 1);
        for r in 0..n {
            out[(r, 0)] = 1.0;
            for c in 0..x.ncols() {
                out[(r, c + 1)] = x[(r, c)];
            }
        }
        Ok(out)
    }

    /// `[1 | A | X]` design for the outcome models.
    pub fn design_with_treatment(&self) -> Result<DMatrix<f64>> {
        let x = self.design_features()?;
        let a = self.protected_indicator()?;
        let n = x.nrows();
        let mut out = DMatrix::zeros(n, x.ncols() + 2);
        for r in 0..n {
            out[(r, 0)] = 1.0;
            out[(r, 1)] = f64::from(a[r]);
            for c in 0..x.ncols() {
                out[(r, c + 2)] = x[(r, c)];
            }
        }
        Ok(out)
    }

    /// Relabel the protected column: the control level becomes treated.
    /// The returned dataset must be re-encoded.
    pub fn swap_protected_levels(&self) -> Dataset {
        let mut out = self.clone();
        std::mem::swap(&mut out.treated_level, &mut out.control_level);
        out.encoded = None;
        out
    }

    /// Construct a dataset from already-typed columns (used by the synthetic
    /// generator and tests). Runs the same validation as CSV loading.
    pub fn from_columns(schema: Vec<ColumnSchema>, columns: Vec<Vec<Cell>>) -> Result<Dataset> {
        validate_schema(&schema)?;
        let n_rows = columns.first().map_or(0, Vec::len);
        if columns.len() != schema.len() || columns.iter().any(|c| c.len() != n_rows) {
            return Err(Error::SchemaMismatch(
                "column data does not match schema shape".into(),
            ));
        }
        finish_construction(schema, columns, n_rows)
    }

    /// Serialize rows back to delimited text (header row included).
    pub fn to_csv_string(&self, delimiter: u8) -> String {
        let sep = char::from(delimiter);
        let mut out = String::new();
        let names: Vec<&str> = self.schema.iter().map(|c| c.name.as_str()).collect();
        out.push_str(&names.join(&sep.to_string()));
        out.push('\n');
        for r in 0..self.n_rows {
            let mut fields = Vec::with_capacity(self.schema.len());
            for c in 0..self.schema.len() {
                fields.push(match &self.columns[c][r] {
                    Cell::Num(v) => format!("{v}"),
                    Cell::Cat(s) => s.clone(),
                    Cell::Missing => "NA".to_string(),
                });
            }
            out.push_str(&fields.join(&sep.to_string()));
            out.push('\n');
        }
        out
    }
}

fn observed_levels(col: &[Cell]) -> Vec<String> {
    let mut set = BTreeSet::new();
    for cell in col {
        if let Cell::Cat(s) = cell {
            set.insert(s.clone());
        }
    }
    set.into_iter().collect()
}

fn is_constant(vals: &[f64]) -> bool {
    vals.windows(2).all(|w| w[0] == w[1])
}

fn validate_schema(schema: &[ColumnSchema]) -> Result<()> {
    let mut names = BTreeSet::new();
    for col in schema {
        if !names.insert(col.name.as_str()) {
            return Err(Error::SchemaMismatch(format!(
                "duplicate column name `{}`",
                col.name
            )));
        }
    }
    let protected: Vec<&ColumnSchema> = schema
        .iter()
        .filter(|c| c.role == ColumnRole::Protected)
        .collect();
    if protected.len() != 1 {
        return Err(Error::SchemaMismatch(format!(
            "expected exactly one protected column, found {}",
            protected.len()
        )));
    }
    if protected[0].kind != ColumnKind::Binary {
        return Err(Error::SchemaMismatch(format!(
            "protected column `{}` must be declared binary",
            protected[0].name
        )));
    }
    let outcome: Vec<&ColumnSchema> = schema
        .iter()
        .filter(|c| c.role == ColumnRole::Outcome)
        .collect();
    if outcome.len() != 1 {
        return Err(Error::SchemaMismatch(format!(
            "expected exactly one outcome column, found {}",
            outcome.len()
        )));
    }
    if outcome[0].kind == ColumnKind::Categorical {
        return Err(Error::SchemaMismatch(format!(
            "outcome column `{}` must be numeric or binary",
            outcome[0].name
        )));
    }
    Ok(())
}

fn parse_cell(raw: &str, kind: ColumnKind) -> Cell {
    let trimmed = raw.trim();
    if MISSING_MARKERS.contains(&trimmed) {
        return Cell::Missing;
    }
    match kind {
        ColumnKind::Numeric => match trimmed.parse::<f64>() {
            Ok(v) if v.is_finite() => Cell::Num(v),
            _ => Cell::Missing,
        },
        ColumnKind::Categorical | ColumnKind::Binary => Cell::Cat(trimmed.to_string()),
    }
}

fn finish_construction(
    schema: Vec<ColumnSchema>,
    columns: Vec<Vec<Cell>>,
    n_rows: usize,
) -> Result<Dataset> {
    let protected_idx = schema
        .iter()
        .position(|c| c.role == ColumnRole::Protected)
        .expect("validated");
    let levels = observed_levels(&columns[protected_idx]);
    if levels.len() != 2 {
        return Err(Error::ProtectedNotBinary {
            column: schema[protected_idx].name.clone(),
            observed: levels,
        });
    }
    let treated_level = match &schema[protected_idx].treated_level {
        Some(level) => {
            if !levels.contains(level) {
                return Err(Error::SchemaMismatch(format!(
                    "treated_level `{level}` not observed in column `{}` (levels {levels:?})",
                    schema[protected_idx].name
                )));
            }
            level.clone()
        }
        None => {
            if levels.contains(&"1".to_string()) {
                "1".to_string()
            } else {
                return Err(Error::SchemaMismatch(format!(
                    "column `{}` has levels {levels:?}; declare treated_level",
                    schema[protected_idx].name
                )));
            }
        }
    };
    let control_level = levels
        .iter()
        .find(|l| **l != treated_level)
        .expect("two levels")
        .clone();

    let outcome_idx = schema
        .iter()
        .position(|c| c.role == ColumnRole::Outcome)
        .expect("validated");
    let positive_outcome = if schema[outcome_idx].kind == ColumnKind::Binary {
        let levels = observed_levels(&columns[outcome_idx]);
        if levels.len() > 2 {
            return Err(Error::SchemaMismatch(format!(
                "binary outcome `{}` has {} observed levels",
                schema[outcome_idx].name,
                levels.len()
            )));
        }
        match &schema[outcome_idx].positive_outcome {
            Some(level) => Some(level.clone()),
            None => {
                if levels.contains(&"1".to_string()) {
                    Some("1".to_string())
                } else {
                    return Err(Error::SchemaMismatch(format!(
                        "binary outcome `{}` has levels {levels:?}; declare positive_outcome",
                        schema[outcome_idx].name
                    )));
                }
            }
        }
    } else {
        None
    };

    Ok(Dataset {
        schema,
        columns,
        n_rows,
        treated_level,
        control_level,
        positive_outcome,
        encoded: None,
    })
}

/// Read a delimited text file against a declared schema.
///
/// Unparseable cells become missing markers; schema columns absent from the
/// header are an error; extra file columns are ignored.
pub fn load_dataset(path: impl AsRef<Path>, schema: &[ColumnSchema]) -> Result<Dataset> {
    load_dataset_with(path, schema, b',')
}

pub fn load_dataset_with(
    path: impl AsRef<Path>,
    schema: &[ColumnSchema],
    delimiter: u8,
) -> Result<Dataset> {
    validate_schema(schema)?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(false)
        .from_path(path.as_ref())?;

    let headers = reader.headers()?.clone();
    let mut indices = Vec::with_capacity(schema.len());
    for col in schema {
        let idx = headers
            .iter()
            .position(|h| h.trim() == col.name)
            .ok_or_else(|| {
                Error::SchemaMismatch(format!("column `{}` not found in header", col.name))
            })?;
        indices.push(idx);
    }

    let mut columns: Vec<Vec<Cell>> = vec![Vec::new(); schema.len()];
    for record in reader.records() {
        let record = record?;
        for (slot, (col, &idx)) in schema.iter().zip(&indices).enumerate() {
            let raw = record.get(idx).unwrap_or("");
            columns[slot].push(parse_cell(raw, col.kind));
        }
    }
    let n_rows = columns.first().map_or(0, Vec::len);
    finish_construction(schema.to_vec(), columns, n_rows)
}
