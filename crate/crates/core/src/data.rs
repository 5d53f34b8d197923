//! Tabular input: manifests, CSV tables, encoding, partitioning into
//! clients and per-client splits.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binning::FeatureMatrix;
use crate::params::Task;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed CSV {path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("{path}: record {record} has {got} fields, header has {expected}")]
    Ragged { path: PathBuf, record: u64, got: usize, expected: usize },
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("manifest is missing required key `{0}`")]
    ManifestKey(&'static str),
    #[error("target `{column}`: {message}")]
    Target { column: String, message: String },
    #[error("label `{0}` was not seen when the schema was built")]
    UnseenLabel(String),
    #[error("column `{0}` has a single distinct value; cannot partition")]
    DegeneratePartition(String),
    #[error("invalid partition request: {0}")]
    Partition(String),
    #[error("could not draw {n_clients} non-empty clients in {attempts} attempts")]
    EmptyClients { n_clients: usize, attempts: usize },
    #[error("{rows} rows are too few to split (need at least {min})")]
    TooFewRows { rows: usize, min: usize },
    #[error("table shape: {0}")]
    Shape(String),
}

/// Describes one dataset: where it lives and how its columns are used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub path: PathBuf,
    pub target_column: String,
    pub task: Task,
    pub split_feature: Option<String>,
    pub drop_columns: Vec<String>,
    pub categorical_columns: Vec<String>,
    pub positive_label: Option<String>,
}

impl DatasetManifest {
    /// Parses `key = value` lines. `#` starts a comment; list values are
    /// comma separated. A relative `path` is resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, DataError> {
        let mut fields: HashMap<String, (usize, String)> = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| DataError::Manifest { line: i + 1, message: "expected `key = value`".into() })?;
            let key = key.trim().to_string();
            const KEYS: [&str; 7] = [
                "path",
                "target_column",
                "task",
                "split_feature",
                "drop_columns",
                "categorical_columns",
                "positive_label",
            ];
            if !KEYS.contains(&key.as_str()) {
                return Err(DataError::Manifest { line: i + 1, message: format!("unknown key `{key}`") });
            }
            if fields.insert(key.clone(), (i + 1, value.trim().to_string())).is_some() {
                return Err(DataError::Manifest { line: i + 1, message: format!("duplicate key `{key}`") });
            }
        }
        let take = |k: &str| fields.get(k).map(|(_, v)| v.clone()).filter(|v| !v.is_empty());
        let list = |k: &str| -> Vec<String> {
            take(k)
                .map(|v| v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
                .unwrap_or_default()
        };
        let path = PathBuf::from(take("path").ok_or(DataError::ManifestKey("path"))?);
        let task_text = take("task").ok_or(DataError::ManifestKey("task"))?;
        let task = task_text.parse().map_err(|e: crate::params::UnknownTask| DataError::Manifest {
            line: fields["task"].0,
            message: e.to_string(),
        })?;
        Ok(Self {
            path: if path.is_relative() { base_dir.join(path) } else { path },
            target_column: take("target_column").ok_or(DataError::ManifestKey("target_column"))?,
            task,
            split_feature: take("split_feature"),
            drop_columns: list("drop_columns"),
            categorical_columns: list("categorical_columns"),
            positive_label: take("positive_label"),
        })
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io { path: path.into(), source })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_text(&self) -> String {
        let mut out =
            format!("path = {}\ntarget_column = {}\ntask = {}\n", self.path.display(), self.target_column, self.task);
        if let Some(s) = &self.split_feature {
            out += &format!("split_feature = {s}\n");
        }
        if !self.drop_columns.is_empty() {
            out += &format!("drop_columns = {}\n", self.drop_columns.join(", "));
        }
        if !self.categorical_columns.is_empty() {
            out += &format!("categorical_columns = {}\n", self.categorical_columns.join(", "));
        }
        if let Some(p) = &self.positive_label {
            out += &format!("positive_label = {p}\n");
        }
        out
    }
}

/// One column of a [`RawTable`]. Missing cells are `NaN` / `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical(Vec<Option<String>>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            Column::Numeric(v) => v[row].is_nan(),
            Column::Categorical(v) => v[row].is_none(),
        }
    }

    /// Cell as text; `None` when missing.
    pub fn text(&self, row: usize) -> Option<String> {
        match self {
            Column::Numeric(v) => (!v[row].is_nan()).then(|| v[row].to_string()),
            Column::Categorical(v) => v[row].clone(),
        }
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&r| v[r]).collect()),
            Column::Categorical(v) => Column::Categorical(rows.iter().map(|&r| v[r].clone()).collect()),
        }
    }
}

/// Column-major table as read from a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTable {
    names: Vec<String>,
    columns: Vec<Column>,
    n_rows: usize,
}

impl RawTable {
    pub fn new(names: Vec<String>, columns: Vec<Column>) -> Result<Self, DataError> {
        if names.len() != columns.len() {
            return Err(DataError::Shape(format!("{} names for {} columns", names.len(), columns.len())));
        }
        let n_rows = columns.first().map_or(0, Column::len);
        if let Some(i) = columns.iter().position(|c| c.len() != n_rows) {
            return Err(DataError::Shape(format!(
                "column `{}` has {} rows, expected {n_rows}",
                names[i],
                columns[i].len()
            )));
        }
        Ok(Self { names, columns, n_rows })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Result<usize, DataError> {
        self.names.iter().position(|n| n == name).ok_or_else(|| DataError::MissingColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<&Column, DataError> {
        Ok(&self.columns[self.column_index(name)?])
    }

    pub fn select_rows(&self, rows: &[usize]) -> RawTable {
        RawTable {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            n_rows: rows.len(),
        }
    }
}

fn parse_number(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a headed, comma-separated file. Columns whose non-empty cells all
/// parse as finite numbers become numeric unless listed in
/// `force_categorical`; empty cells are missing.
pub fn read_csv(path: &Path, force_categorical: &[String]) -> Result<RawTable, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io { path: path.into(), source })?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let csv_err = |e: csv::Error| match e.kind() {
        csv::ErrorKind::UnequalLengths { pos, expected_len, len } => DataError::Ragged {
            path: path.into(),
            record: pos.as_ref().map_or(0, |p| p.record()),
            got: *len as usize,
            expected: *expected_len as usize,
        },
        _ => DataError::Csv { path: path.into(), message: e.to_string() },
    };
    let names: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut cells: Vec<Vec<String>> = vec![Vec::new(); names.len()];
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        for (col, cell) in cells.iter_mut().zip(record.iter()) {
            col.push(cell.to_string());
        }
    }
    let columns = names
        .iter()
        .zip(cells)
        .map(|(name, col)| {
            let numeric =
                !force_categorical.contains(name) && col.iter().all(|c| c.is_empty() || parse_number(c).is_some());
            if numeric {
                Column::Numeric(col.iter().map(|c| parse_number(c).unwrap_or(f64::NAN)).collect())
            } else {
                Column::Categorical(col.into_iter().map(|c| (!c.is_empty()).then_some(c)).collect())
            }
        })
        .collect();
    RawTable::new(names, columns)
}

/// Reads the manifest's file and checks the named columns exist.
pub fn load_csv(manifest: &DatasetManifest) -> Result<RawTable, DataError> {
    let table = read_csv(&manifest.path, &manifest.categorical_columns)?;
    table.column_index(&manifest.target_column)?;
    if let Some(s) = &manifest.split_feature {
        table.column_index(s)?;
    }
    Ok(table)
}

pub fn write_csv(table: &RawTable, path: &Path) -> Result<(), DataError> {
    let io_err = |e: csv::Error| DataError::Csv { path: path.into(), message: e.to_string() };
    let mut writer = csv::Writer::from_path(path).map_err(io_err)?;
    writer.write_record(&table.names).map_err(io_err)?;
    for r in 0..table.n_rows {
        let row: Vec<String> = table.columns.iter().map(|c| c.text(r).unwrap_or_default()).collect();
        writer.write_record(&row).map_err(io_err)?;
    }
    writer.flush().map_err(|source| DataError::Io { path: path.into(), source })
}

/// Features with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub features: FeatureMatrix,
    pub labels: Vec<f64>,
}

impl LabeledMatrix {
    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self { features: self.features.select_rows(rows), labels: rows.iter().map(|&r| self.labels[r]).collect() }
    }
}

/// Ordinal codes of one categorical feature, in first-appearance order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMap {
    pub levels: Vec<String>,
}

impl CategoryMap {
    pub fn code(&self, value: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == value)
    }
}

/// Everything needed to encode new rows the same way as the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub task: Task,
    pub target_column: String,
    pub feature_names: Vec<String>,
    /// `Some` for categorical features.
    pub categories: Vec<Option<CategoryMap>>,
    /// Class names indexed by class code; empty for regression.
    pub classes: Vec<String>,
}

impl Schema {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn decode_label(&self, code: usize) -> Option<&str> {
        self.classes.get(code).map(String::as_str)
    }

    pub fn encode_label(&self, value: &str) -> Result<f64, DataError> {
        if let Some(i) = self.classes.iter().position(|c| c == value) {
            return Ok(i as f64);
        }
        // numeric labels may be spelled differently, e.g. "1.0" vs "1"
        if let Some(v) = parse_number(value) {
            if let Some(i) = self.classes.iter().position(|c| parse_number(c) == Some(v)) {
                return Ok(i as f64);
            }
        }
        Err(DataError::UnseenLabel(value.to_string()))
    }

    /// Category name of an encoded cell; `None` for numeric features,
    /// missing cells or unknown codes.
    pub fn decode_feature(&self, feature: usize, value: f64) -> Option<&str> {
        let map = self.categories.get(feature)?.as_ref()?;
        if value.is_nan() || value < 0.0 || value.fract() != 0.0 {
            return None;
        }
        map.levels.get(value as usize).map(String::as_str)
    }

    /// Encodes a table with the frozen mappings. Categories not seen at
    /// fit time become missing. Labels are encoded when the target column
    /// is present; an unseen class is an error.
    pub fn apply(&self, table: &RawTable) -> Result<(FeatureMatrix, Option<Vec<f64>>), DataError> {
        let n = table.n_rows();
        let mut values = vec![0.0; n * self.n_features()];
        for (f, name) in self.feature_names.iter().enumerate() {
            let col = table.column(name)?;
            for r in 0..n {
                values[r * self.n_features() + f] = match (&self.categories[f], col) {
                    (None, Column::Numeric(v)) => v[r],
                    (None, Column::Categorical(v)) => v[r].as_deref().and_then(parse_number).unwrap_or(f64::NAN),
                    (Some(map), c) => c.text(r).and_then(|t| map.code(&t)).map_or(f64::NAN, |i| i as f64),
                };
            }
        }
        let features = FeatureMatrix::new(n, self.n_features(), values).map_err(|e| DataError::Shape(e.to_string()))?;
        let labels = match table.column(&self.target_column) {
            Err(_) => None,
            Ok(col) => Some(self.encode_labels(col)?),
        };
        Ok((features, labels))
    }

    fn encode_labels(&self, col: &Column) -> Result<Vec<f64>, DataError> {
        let target_err = |message: String| DataError::Target { column: self.target_column.clone(), message };
        (0..col.len())
            .map(|r| {
                let text = col.text(r).ok_or_else(|| target_err(format!("row {r} has no label")))?;
                match self.task {
                    Task::Regression => {
                        parse_number(&text).ok_or_else(|| target_err(format!("`{text}` is not a number")))
                    }
                    Task::Binary | Task::Multiclass => self.encode_label(&text),
                }
            })
            .collect()
    }
}

/// Result of fitting an encoding on a table.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub data: LabeledMatrix,
    pub schema: Schema,
}

/// Columns used as features: everything except the target, the split key
/// and the dropped columns.
pub fn feature_columns(table: &RawTable, manifest: &DatasetManifest) -> Result<Vec<String>, DataError> {
    for name in &manifest.drop_columns {
        table.column_index(name)?;
    }
    Ok(table
        .names()
        .iter()
        .filter(|n| {
            **n != manifest.target_column
                && manifest.split_feature.as_ref() != Some(*n)
                && !manifest.drop_columns.contains(n)
        })
        .cloned()
        .collect())
}

/// Fits categorical and label mappings on `table` and encodes it.
pub fn encode(table: &RawTable, manifest: &DatasetManifest) -> Result<Encoded, DataError> {
    let feature_names = feature_columns(table, manifest)?;
    let categories = feature_names
        .iter()
        .map(|name| {
            Ok(match table.column(name)? {
                Column::Numeric(_) => None,
                Column::Categorical(v) => {
                    let mut levels: Vec<String> = Vec::new();
                    for s in v.iter().flatten() {
                        if !levels.contains(s) {
                            levels.push(s.clone());
                        }
                    }
                    Some(CategoryMap { levels })
                }
            })
        })
        .collect::<Result<Vec<_>, DataError>>()?;
    let target = table.column(&manifest.target_column)?;
    let classes = match manifest.task {
        Task::Regression => {
            if !matches!(target, Column::Numeric(_)) {
                return Err(DataError::Target {
                    column: manifest.target_column.clone(),
                    message: "regression target must be numeric".into(),
                });
            }
            Vec::new()
        }
        Task::Binary | Task::Multiclass => class_names(target, manifest)?,
    };
    let schema = Schema {
        task: manifest.task,
        target_column: manifest.target_column.clone(),
        feature_names,
        categories,
        classes,
    };
    let (features, labels) = schema.apply(table)?;
    Ok(Encoded { data: LabeledMatrix { features, labels: labels.unwrap_or_default() }, schema })
}

fn class_names(target: &Column, manifest: &DatasetManifest) -> Result<Vec<String>, DataError> {
    let target_err = |message: String| DataError::Target { column: manifest.target_column.clone(), message };
    let mut classes: Vec<String> = match target {
        Column::Numeric(v) => {
            let mut distinct: Vec<f64> = v.iter().copied().filter(|x| !x.is_nan()).collect();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            distinct.iter().map(|x| x.to_string()).collect()
        }
        Column::Categorical(v) => {
            let mut distinct: Vec<String> = v.iter().flatten().cloned().collect();
            distinct.sort();
            distinct.dedup();
            distinct
        }
    };
    if classes.len() < 2 {
        return Err(target_err(format!("{} distinct value(s); classification needs at least 2", classes.len())));
    }
    if manifest.task == Task::Binary {
        if classes.len() != 2 {
            return Err(target_err(format!("binary task with {} distinct values", classes.len())));
        }
        if let Some(pos) = &manifest.positive_label {
            let i = classes
                .iter()
                .position(|c| c == pos || (parse_number(c).is_some() && parse_number(c) == parse_number(pos)))
                .ok_or_else(|| target_err(format!("positive label `{pos}` does not occur")))?;
            if i == 0 {
                classes.swap(0, 1);
            }
        }
    }
    Ok(classes)
}

/// Key of a natural partition. Numeric keys order numerically, text keys
/// lexically; missing keys form their own group, ordered first.
#[derive(Debug, Clone, PartialEq, PartialOrd)]
pub enum PartitionKey {
    Missing,
    Number(f64),
    Text(String),
}

impl fmt::Display for PartitionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartitionKey::Missing => f.write_str("<missing>"),
            PartitionKey::Number(v) => write!(f, "{v}"),
            PartitionKey::Text(s) => f.write_str(s),
        }
    }
}

/// Row indices per distinct value of `split_feature`, ordered by key.
pub fn key_groups(table: &RawTable, split_feature: &str) -> Result<Vec<(PartitionKey, Vec<usize>)>, DataError> {
    let groups: Vec<(PartitionKey, Vec<usize>)> = match table.column(split_feature)? {
        Column::Numeric(v) => {
            let mut map: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
            let mut missing = Vec::new();
            for (r, &x) in v.iter().enumerate() {
                if x.is_nan() {
                    missing.push(r);
                } else {
                    // order-preserving bit pattern of a finite float (+0 and -0 merged)
                    let bits = (x + 0.0).to_bits();
                    let key = if bits >> 63 == 1 { !bits } else { bits | (1 << 63) };
                    map.entry(key).or_default().push(r);
                }
            }
            let mut out: Vec<_> =
                (!missing.is_empty()).then_some((PartitionKey::Missing, missing)).into_iter().collect();
            out.extend(map.into_values().map(|rows| (PartitionKey::Number(v[rows[0]]), rows)));
            out
        }
        Column::Categorical(v) => {
            let mut map: BTreeMap<Option<&str>, Vec<usize>> = BTreeMap::new();
            for (r, s) in v.iter().enumerate() {
                map.entry(s.as_deref()).or_default().push(r);
            }
            map.into_iter()
                .map(|(k, rows)| (k.map_or(PartitionKey::Missing, |s| PartitionKey::Text(s.to_string())), rows))
                .collect()
        }
    };
    if groups.len() < 2 {
        return Err(DataError::DegeneratePartition(split_feature.to_string()));
    }
    Ok(groups)
}

/// One table per distinct value of `split_feature`, ordered by key.
pub fn partition_by_key(table: &RawTable, split_feature: &str) -> Result<Vec<(PartitionKey, RawTable)>, DataError> {
    Ok(key_groups(table, split_feature)?.into_iter().map(|(k, rows)| (k, table.select_rows(&rows))).collect())
}

const DIRICHLET_ATTEMPTS: usize = 100;

/// Assigns rows to `n_clients` so that each class is spread according to
/// its own symmetric Dirichlet(`alpha`) draw. Redraws until every client
/// is non-empty, up to a fixed number of attempts.
pub fn dirichlet_groups(
    classes: &[usize],
    n_clients: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<Vec<usize>>, DataError> {
    if n_clients < 2 {
        return Err(DataError::Partition(format!("need at least 2 clients, got {n_clients}")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(DataError::Partition(format!("alpha must be positive, got {alpha}")));
    }
    let n_classes = classes.iter().max().map_or(0, |&m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (r, &c) in classes.iter().enumerate() {
        by_class[c].push(r);
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| DataError::Partition(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..DIRICHLET_ATTEMPTS {
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_clients];
        for rows in &by_class {
            let draws: Vec<f64> = (0..n_clients).map(|_| gamma.sample(&mut rng)).collect();
            let total: f64 = draws.iter().sum();
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut rng);
            // all-zero draws (possible for tiny alpha) leave nothing to cut by
            if total.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
                continue;
            }
            let mut start = 0usize;
            let mut cum = 0.0;
            for (i, d) in draws.iter().enumerate() {
                cum += d / total;
                let end = if i + 1 == n_clients {
                    rows.len()
                } else {
                    ((cum * rows.len() as f64).round() as usize).min(rows.len())
                };
                groups[i].extend_from_slice(&shuffled[start..end.max(start)]);
                start = end.max(start);
            }
        }
        if groups.iter().all(|g| !g.is_empty()) && groups.iter().map(Vec::len).sum::<usize>() == classes.len() {
            for g in &mut groups {
                g.sort_unstable();
            }
            return Ok(groups);
        }
    }
    Err(DataError::EmptyClients { n_clients, attempts: DIRICHLET_ATTEMPTS })
}

/// Label-skewed synthetic partition of a classification table.
pub fn partition_dirichlet(
    table: &RawTable,
    manifest: &DatasetManifest,
    n_clients: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<RawTable>, DataError> {
    if !manifest.task.is_classification() {
        return Err(DataError::Partition("Dirichlet partitioning needs a classification target".into()));
    }
    let target = table.column(&manifest.target_column)?;
    let names = class_names(target, manifest)?;
    let classes = (0..table.n_rows())
        .map(|r| {
            let text = target.text(r).ok_or_else(|| DataError::Target {
                column: manifest.target_column.clone(),
                message: format!("row {r} has no label"),
            })?;
            Ok(names.iter().position(|c| *c == text).unwrap())
        })
        .collect::<Result<Vec<_>, DataError>>()?;
    Ok(dirichlet_groups(&classes, n_clients, alpha, seed)?.iter().map(|rows| table.select_rows(rows)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitScheme {
    /// 80% train, 20% validation.
    #[serde(rename = "80/20")]
    TrainValid,
    /// 70% train, 20% validation, 10% local test.
    #[serde(rename = "70/20/10")]
    TrainValidTest,
}

impl SplitScheme {
    /// `(train, valid, test)` sizes: validation and test are floored, the
    /// remainder goes to training.
    pub fn sizes(self, n: usize) -> (usize, usize, usize) {
        let valid = n * 20 / 100;
        let test = match self {
            SplitScheme::TrainValid => 0,
            SplitScheme::TrainValidTest => n * 10 / 100,
        };
        (n - valid - test, valid, test)
    }
}

impl fmt::Display for SplitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitScheme::TrainValid => "80/20",
            SplitScheme::TrainValidTest => "70/20/10",
        })
    }
}

impl std::str::FromStr for SplitScheme {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "80/20" | "80-20" => Ok(SplitScheme::TrainValid),
            "70/20/10" | "70-20-10" => Ok(SplitScheme::TrainValidTest),
            other => Err(DataError::Partition(format!("unknown split scheme `{other}`"))),
        }
    }
}

/// Row indices of one client's splits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Option<Vec<usize>>,
}

pub const MIN_SPLIT_ROWS: usize = 5;

/// Seeded shuffle of `0..n` cut into train / validation / test. Each part
/// is returned in ascending order.
pub fn split_indices(n: usize, scheme: SplitScheme, seed: u64) -> Result<SplitIndices, DataError> {
    if n < MIN_SPLIT_ROWS {
        return Err(DataError::TooFewRows { rows: n, min: MIN_SPLIT_ROWS });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (n_train, n_valid, _) = scheme.sizes(n);
    let sorted = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };
    Ok(SplitIndices {
        train: sorted(&order[..n_train]),
        valid: sorted(&order[n_train..n_train + n_valid]),
        test: (scheme == SplitScheme::TrainValidTest).then(|| sorted(&order[n_train + n_valid..])),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableSplit {
    pub train: RawTable,
    pub valid: RawTable,
    pub test: Option<RawTable>,
}

pub fn split_train_valid_test(table: &RawTable, scheme: SplitScheme, seed: u64) -> Result<TableSplit, DataError> {
    let idx = split_indices(table.n_rows(), scheme, seed)?;
    Ok(TableSplit {
        train: table.select_rows(&idx.train),
        valid: table.select_rows(&idx.valid),
        test: idx.test.map(|t| table.select_rows(&t)),
    })
}

/// `min(max_clients, clients.len())` distinct clients drawn uniformly,
/// kept in their original order.
pub fn subsample_clients<T: Clone>(clients: &[T], max_clients: usize, seed: u64) -> Vec<T> {
    if max_clients >= clients.len() {
        return clients.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, clients.len(), max_clients).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| clients[i].clone()).collect()
}
