//! Survival records, CSV ingestion and covariate preprocessing.
//!
//! Raw rows keep missingness explicit (`None`) until a [`CovariateSchema`]
//! fitted on the training split imputes and encodes them: medians/modes for
//! missing entries, one-hot blocks for categoricals, z-scores for continuous
//! columns.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Rng;

/// One observed triplet: covariates, observed time, and whether the time is an
/// event (`true`) or a right-censoring time (`false`).
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalRecord {
    pub covariates: Vec<f64>,
    pub time: f64,
    pub event: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Categorical,
}

/// A raw covariate cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Number(f64),
    Level(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub values: Vec<Option<Cell>>,
    pub time: f64,
    pub event: bool,
}

/// Parsed but not yet encoded table.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub columns: Vec<(String, ColumnKind)>,
    pub rows: Vec<RawRow>,
}

/// Which CSV columns play which role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnRoles {
    pub time_column: String,
    pub event_column: String,
    /// Covariates to use; `None` means every non-role column.
    #[serde(default)]
    pub covariates: Option<Vec<String>>,
    /// Covariates treated as categorical; all others are continuous.
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// Extra token meaning "missing" besides the empty string.
    #[serde(default)]
    pub missing_token: Option<String>,
}

fn default_delimiter() -> char {
    ','
}

impl ColumnRoles {
    pub fn new(time_column: &str, event_column: &str) -> Self {
        Self {
            time_column: time_column.to_string(),
            event_column: event_column.to_string(),
            covariates: None,
            categorical: Vec::new(),
            delimiter: default_delimiter(),
            missing_token: None,
        }
    }

    fn is_missing(&self, field: &str) -> bool {
        let field = field.trim();
        field.is_empty() || self.missing_token.as_deref() == Some(field)
    }
}

pub fn load_csv(path: &Path, roles: &ColumnRoles) -> Result<RawTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, roles)
}

pub fn read_csv<R: std::io::Read>(reader: R, roles: &ColumnRoles) -> Result<RawTable> {
    if !roles.delimiter.is_ascii() {
        return Err(Error::Config(format!("delimiter {:?} is not ASCII", roles.delimiter)));
    }
    let mut csv_reader = csv::ReaderBuilder::new()
        .delimiter(roles.delimiter as u8)
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let header: Vec<String> = csv_reader
        .headers()
        .map_err(|e| Error::Parse { row: 0, message: e.to_string() })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let position = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("column {name:?} not found in header")))
    };
    let time_idx = position(&roles.time_column)?;
    let event_idx = position(&roles.event_column)?;
    let covariate_names: Vec<String> = match &roles.covariates {
        Some(names) => names.clone(),
        None => header.iter().filter(|h| **h != roles.time_column && **h != roles.event_column).cloned().collect(),
    };
    for name in &roles.categorical {
        if !covariate_names.contains(name) {
            return Err(Error::Config(format!("categorical column {name:?} is not a covariate")));
        }
    }
    let mut columns = Vec::with_capacity(covariate_names.len());
    let mut indices = Vec::with_capacity(covariate_names.len());
    for name in covariate_names {
        indices.push(position(&name)?);
        let kind = if roles.categorical.contains(&name) { ColumnKind::Categorical } else { ColumnKind::Continuous };
        columns.push((name, kind));
    }

    let mut rows = Vec::new();
    for (i, record) in csv_reader.records().enumerate() {
        // Row numbers are 1-based data rows (header excluded).
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse { row, message: e.to_string() })?;
        if record.len() != header.len() {
            return Err(Error::Parse {
                row,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let time_field = record[time_idx].trim();
        if roles.is_missing(time_field) {
            return Err(Error::Parse { row, message: "missing time".into() });
        }
        let time: f64 = time_field
            .parse()
            .map_err(|_| Error::Parse { row, message: format!("time {time_field:?} is not a number") })?;
        if !(time.is_finite() && time >= 0.0) {
            return Err(Error::Parse { row, message: format!("time {time} must be finite and >= 0") });
        }
        let event_field = record[event_idx].trim();
        let event = match event_field.parse::<f64>() {
            Ok(v) if v == 0.0 => false,
            Ok(v) if v == 1.0 => true,
            _ => return Err(Error::Parse { row, message: format!("event indicator {event_field:?} must be 0 or 1") }),
        };
        let mut values = Vec::with_capacity(columns.len());
        for ((name, kind), &idx) in columns.iter().zip(&indices) {
            let field = record[idx].trim();
            if roles.is_missing(field) {
                values.push(None);
                continue;
            }
            let cell = match kind {
                ColumnKind::Continuous => Cell::Number(field.parse().map_err(|_| Error::Parse {
                    row,
                    message: format!("column {name:?}: {field:?} is not a number"),
                })?),
                ColumnKind::Categorical => Cell::Level(field.to_string()),
            };
            values.push(Some(cell));
        }
        rows.push(RawRow { values, time, event });
    }
    Ok(RawTable { columns, rows })
}

impl RawTable {
    /// Wraps already-numeric records (e.g. simulator output) as an all-continuous table.
    pub fn from_records(names: &[&str], records: &[SurvivalRecord]) -> Self {
        let columns = names.iter().map(|n| (n.to_string(), ColumnKind::Continuous)).collect();
        let rows = records
            .iter()
            .map(|r| RawRow {
                values: r.covariates.iter().map(|&v| Some(Cell::Number(v))).collect(),
                time: r.time,
                event: r.event,
            })
            .collect();
        Self { columns, rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn missing_count(&self) -> usize {
        self.rows.iter().flat_map(|r| &r.values).filter(|v| v.is_none()).count()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self { columns: self.columns.clone(), rows: indices.iter().map(|&i| self.rows[i].clone()).collect() }
    }

    pub fn split(&self, fractions: (f64, f64, f64), rng: &mut Rng) -> Result<(Self, Self, Self)> {
        let [a, b, c] = split_indices(self.len(), fractions, rng)?;
        Ok((self.subset(&a), self.subset(&b), self.subset(&c)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnEncoding {
    Continuous {
        median: f64,
        mean: f64,
        std: f64,
    },
    Categorical {
        levels: Vec<String>,
        mode: String,
    },
    /// Constant after imputation; contributes no features.
    Dropped {
        median: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaColumn {
    pub name: String,
    pub encoding: ColumnEncoding,
}

/// Imputation values, category levels and z-transform statistics learned
/// from the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSchema {
    pub columns: Vec<SchemaColumn>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn fit_schema(train: &RawTable) -> Result<CovariateSchema> {
    if train.is_empty() {
        return Err(Error::Data("cannot fit a schema on zero training rows".into()));
    }
    let mut columns = Vec::with_capacity(train.columns.len());
    for (c, (name, kind)) in train.columns.iter().enumerate() {
        let cells = train.rows.iter().map(|r| r.values[c].as_ref());
        let encoding = match kind {
            ColumnKind::Continuous => {
                let mut observed: Vec<f64> = cells
                    .flatten()
                    .map(|cell| match cell {
                        Cell::Number(v) => *v,
                        Cell::Level(_) => unreachable!("continuous column holds numbers"),
                    })
                    .collect();
                if observed.is_empty() {
                    return Err(Error::Data(format!("column {name:?} is missing in every training row")));
                }
                let missing = train.len() - observed.len();
                let med = median(&mut observed);
                let n = train.len() as f64;
                let mean = (observed.iter().sum::<f64>() + missing as f64 * med) / n;
                let ss =
                    observed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() + missing as f64 * (med - mean).powi(2);
                let std = (ss / n).sqrt();
                if std > 0.0 && std.is_finite() {
                    ColumnEncoding::Continuous { median: med, mean, std }
                } else {
                    log::warn!("dropping constant column {name:?}");
                    ColumnEncoding::Dropped { median: med }
                }
            }
            ColumnKind::Categorical => {
                let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                for cell in cells.flatten() {
                    match cell {
                        Cell::Level(level) => *counts.entry(level.as_str()).or_default() += 1,
                        Cell::Number(_) => unreachable!("categorical column holds levels"),
                    }
                }
                if counts.is_empty() {
                    return Err(Error::Data(format!("column {name:?} is missing in every training row")));
                }
                // Ties resolve to the lexicographically first level.
                let mode = counts
                    .iter()
                    .fold(None::<(&str, usize)>, |best, (&level, &count)| match best {
                        Some((_, best_count)) if best_count >= count => best,
                        _ => Some((level, count)),
                    })
                    .map(|(level, _)| level.to_string())
                    .expect("nonempty counts");
                let levels = counts.keys().map(|s| s.to_string()).collect();
                ColumnEncoding::Categorical { levels, mode }
            }
        };
        columns.push(SchemaColumn { name: name.clone(), encoding });
    }
    Ok(CovariateSchema { columns })
}

impl CovariateSchema {
    /// Number of model inputs after encoding.
    pub fn width(&self) -> usize {
        self.columns
            .iter()
            .map(|c| match &c.encoding {
                ColumnEncoding::Continuous { .. } => 1,
                ColumnEncoding::Categorical { levels, .. } => levels.len(),
                ColumnEncoding::Dropped { .. } => 0,
            })
            .sum()
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.width());
        for col in &self.columns {
            match &col.encoding {
                ColumnEncoding::Continuous { .. } => names.push(col.name.clone()),
                ColumnEncoding::Categorical { levels, .. } => {
                    names.extend(levels.iter().map(|l| format!("{}={}", col.name, l)))
                }
                ColumnEncoding::Dropped { .. } => {}
            }
        }
        names
    }

    fn check_columns(&self, rows: &RawTable) -> Result<()> {
        let expected: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        let actual: Vec<&str> = rows.columns.iter().map(|(n, _)| n.as_str()).collect();
        if expected != actual {
            return Err(Error::Data(format!("schema columns {expected:?} do not match table columns {actual:?}")));
        }
        Ok(())
    }

    pub fn encode_row(&self, values: &[Option<Cell>]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width());
        for (col, value) in self.columns.iter().zip(values) {
            match (&col.encoding, value) {
                (ColumnEncoding::Continuous { median, mean, std }, v) => {
                    let v = match v {
                        Some(Cell::Number(x)) => *x,
                        _ => *median,
                    };
                    out.push((v - mean) / std);
                }
                (ColumnEncoding::Categorical { levels, mode }, v) => {
                    let level = match v {
                        Some(Cell::Level(l)) => l.as_str(),
                        _ => mode.as_str(),
                    };
                    // Unseen levels leave the whole block at zero.
                    out.extend(levels.iter().map(|l| if l == level { 1.0 } else { 0.0 }));
                }
                (ColumnEncoding::Dropped { .. }, _) => {}
            }
        }
        out
    }
}

/// Encoded records plus the schema that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    pub records: Vec<SurvivalRecord>,
    pub schema: CovariateSchema,
}

pub fn transform(rows: &RawTable, schema: &CovariateSchema) -> Result<SurvivalDataset> {
    schema.check_columns(rows)?;
    let records = rows
        .rows
        .iter()
        .map(|r| SurvivalRecord { covariates: schema.encode_row(&r.values), time: r.time, event: r.event })
        .collect();
    Ok(SurvivalDataset { records, schema: schema.clone() })
}

impl SurvivalDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn width(&self) -> usize {
        self.schema.width()
    }

    pub fn events(&self) -> impl Iterator<Item = &SurvivalRecord> {
        self.records.iter().filter(|r| r.event)
    }

    pub fn censored(&self) -> impl Iterator<Item = &SurvivalRecord> {
        self.records.iter().filter(|r| !r.event)
    }

    pub fn event_rate(&self) -> f64 {
        self.events().count() as f64 / self.len().max(1) as f64
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self { records: indices.iter().map(|&i| self.records[i].clone()).collect(), schema: self.schema.clone() }
    }

    pub fn split(&self, fractions: (f64, f64, f64), rng: &mut Rng) -> Result<(Self, Self, Self)> {
        let [a, b, c] = split_indices(self.len(), fractions, rng)?;
        Ok((self.subset(&a), self.subset(&b), self.subset(&c)))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let names = self.schema.feature_names();
        write_records_csv(path, &names.iter().map(String::as_str).collect::<Vec<_>>(), &self.records)
    }
}

/// Writes records as `<covariates...>,time,event`.
pub fn write_records_csv(path: &Path, names: &[&str], records: &[SurvivalRecord]) -> Result<()> {
    std::fs::write(path, records_csv(names, records, None)?).map_err(|e| Error::io(path, e))
}

/// CSV text for `records`, optionally preceded by a `#` comment line.
pub fn records_csv(names: &[&str], records: &[SurvivalRecord], comment: Option<&str>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    if let Some(c) = comment {
        buf.extend_from_slice(format!("# {c}\n").as_bytes());
    }
    let mut writer = csv::Writer::from_writer(buf);
    let mut header: Vec<&str> = names.to_vec();
    header.extend(["time", "event"]);
    writer.write_record(&header).map_err(|e| Error::Data(e.to_string()))?;
    for r in records {
        let mut fields: Vec<String> = r.covariates.iter().map(|v| v.to_string()).collect();
        fields.push(r.time.to_string());
        fields.push(if r.event { "1" } else { "0" }.to_string());
        writer.write_record(&fields).map_err(|e| Error::Data(e.to_string()))?;
    }
    writer.into_inner().map_err(|e| Error::Data(e.to_string()))
}

/// Uniform shuffle partitioned into three disjoint, exhaustive index sets.
pub fn split_indices(n: usize, fractions: (f64, f64, f64), rng: &mut Rng) -> Result<[Vec<usize>; 3]> {
    let (a, b, c) = fractions;
    if [a, b, c].iter().any(|f| !(0.0..=1.0).contains(f)) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions {fractions:?} must be in [0,1] and sum to 1")));
    }
    if n < 3 {
        return Err(Error::Data(format!("cannot split {n} records three ways")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let n_a = ((n as f64) * a).round() as usize;
    let n_b = (((n as f64) * b).round() as usize).min(n - n_a);
    let test = idx.split_off(n_a + n_b);
    let valid = idx.split_off(n_a);
    Ok([idx, valid, test])
}
