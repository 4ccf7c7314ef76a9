//! Lake data ingestion, bucketization of numeric fields, field embeddings and
//! training windows.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffcore::Tensor;
use crate::{Error, Result};

pub const DATE_FORMAT: &str = "%Y-%m-%d";
pub const DEFAULT_BUCKETS: usize = 10;
pub const DEFAULT_EMBED_DIM: usize = 15;

/// Prediction target: the upper (epilimnion) or lower (hypolimnion) layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    Epi,
    Hyp,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Epi, Task::Hyp];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Epi => "epi",
            Task::Hyp => "hyp",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn parse(s: &str) -> Result<Task> {
        match s {
            "epi" => Ok(Task::Epi),
            "hyp" => Ok(Task::Hyp),
            other => Err(Error::Config(format!("unknown task '{other}'"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
    /// Bucket count for numeric fields, category count for categorical ones.
    pub buckets: usize,
}

impl FieldSpec {
    pub fn numeric(name: &str, buckets: usize) -> Self {
        FieldSpec {
            name: name.to_string(),
            kind: FieldKind::Numeric,
            buckets,
        }
    }

    pub fn categorical(name: &str, categories: usize) -> Self {
        FieldSpec {
            name: name.to_string(),
            kind: FieldKind::Categorical,
            buckets: categories,
        }
    }
}

/// Ordered list of input fields.
///
/// Text form, one field per line:
///
/// ```text
/// # comment
/// name=air_temp kind=numeric buckets=10
/// name=landuse kind=categorical buckets=4
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    fields: Vec<FieldSpec>,
}

impl FeatureSchema {
    pub fn new(fields: Vec<FieldSpec>) -> Result<Self> {
        if fields.len() < 2 {
            return Err(Error::Config(format!(
                "schema needs at least 2 fields, got {}",
                fields.len()
            )));
        }
        let mut seen = HashSet::new();
        for f in &fields {
            if f.name.is_empty() || f.name.contains(|c: char| c.is_whitespace() || c == ',') {
                return Err(Error::Config(format!("invalid field name '{}'", f.name)));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Config(format!("duplicate field name '{}'", f.name)));
            }
            if f.buckets < 2 {
                return Err(Error::Config(format!(
                    "field '{}' needs at least 2 buckets, got {}",
                    f.name, f.buckets
                )));
            }
        }
        Ok(FeatureSchema { fields })
    }

    pub fn fields(&self) -> &[FieldSpec] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.fields.iter().map(|f| f.name.clone()).collect()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.fields.iter().map(|f| f.buckets).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut fields = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (mut name, mut kind, mut buckets) = (None, None, None);
            for tok in line.split_whitespace() {
                let (k, v) = tok.split_once('=').ok_or_else(|| {
                    Error::Config(format!("schema line {}: expected key=value, got '{tok}'", n + 1))
                })?;
                match k {
                    "name" => name = Some(v.to_string()),
                    "kind" => {
                        kind = Some(match v {
                            "numeric" => FieldKind::Numeric,
                            "categorical" => FieldKind::Categorical,
                            other => {
                                return Err(Error::Config(format!(
                                    "schema line {}: unknown kind '{other}'",
                                    n + 1
                                )))
                            }
                        })
                    }
                    "buckets" => {
                        buckets = Some(v.parse::<usize>().map_err(|_| {
                            Error::Config(format!("schema line {}: bad bucket count '{v}'", n + 1))
                        })?)
                    }
                    other => {
                        return Err(Error::Config(format!(
                            "schema line {}: unknown key '{other}'",
                            n + 1
                        )))
                    }
                }
            }
            let name = name.ok_or_else(|| Error::Config(format!("schema line {}: missing name", n + 1)))?;
            let kind = kind.unwrap_or(FieldKind::Numeric);
            let buckets = match (kind, buckets) {
                (_, Some(b)) => b,
                (FieldKind::Numeric, None) => DEFAULT_BUCKETS,
                (FieldKind::Categorical, None) => {
                    return Err(Error::Config(format!(
                        "schema line {}: categorical field '{name}' needs buckets",
                        n + 1
                    )))
                }
            };
            fields.push(FieldSpec { name, kind, buckets });
        }
        FeatureSchema::new(fields)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for f in &self.fields {
            let kind = match f.kind {
                FieldKind::Numeric => "numeric",
                FieldKind::Categorical => "categorical",
            };
            out.push_str(&format!("name={} kind={kind} buckets={}\n", f.name, f.buckets));
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        FeatureSchema::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Hex SHA-256 of the canonical text form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Equal-frequency cut points for `k` buckets.
///
/// Quantiles use linear interpolation at position `q·(n−1)` of the sorted
/// values. Duplicate cut points collapse, and cut points at or above the
/// maximum are dropped, so skewed or constant inputs yield fewer buckets.
pub fn fit_buckets(values: &[f64], k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::Config(format!("bucket count must be at least 2, got {k}")));
    }
    if values.is_empty() {
        return Err(Error::Data("cannot fit buckets on an empty series".into()));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite value {} at row {i}", values[i])));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let max = sorted[n - 1];
    if sorted[0] == max {
        log::warn!("constant series of {n} values: a single bucket is used");
        return Ok(Vec::new());
    }
    let mut edges: Vec<f64> = Vec::with_capacity(k - 1);
    for q in 1..k {
        let pos = q as f64 / k as f64 * (n - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        let frac = pos - lo as f64;
        let edge = sorted[lo] + frac * (sorted[hi] - sorted[lo]);
        if edge < max && edges.last().is_none_or(|&last| edge > last) {
            edges.push(edge);
        }
    }
    Ok(edges)
}

/// Number of edges strictly below `value`.
pub fn bucketize(value: f64, edges: &[f64]) -> Result<usize> {
    if value.is_nan() {
        return Err(Error::Data("NaN value cannot be bucketized".into()));
    }
    Ok(edges.partition_point(|&e| e < value))
}

/// Fitted per-field encoders mapping raw values to embedding rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucketizer {
    kinds: Vec<FieldKind>,
    cardinality: Vec<usize>,
    /// Empty for categorical fields.
    edges: Vec<Vec<f64>>,
    names: Vec<String>,
}

impl Bucketizer {
    /// Fits numeric fields on the given rows (`rows[day][field]`).
    pub fn fit<'a>(schema: &FeatureSchema, rows: impl Iterator<Item = &'a [f64]>) -> Result<Self> {
        let m = schema.len();
        let mut columns = vec![Vec::new(); m];
        for row in rows {
            if row.len() != m {
                return Err(Error::Data(format!("row has {} values, schema has {m}", row.len())));
            }
            for (col, v) in columns.iter_mut().zip(row) {
                col.push(*v);
            }
        }
        let mut edges = Vec::with_capacity(m);
        for (f, col) in schema.fields().iter().zip(&columns) {
            edges.push(match f.kind {
                FieldKind::Numeric => fit_buckets(col, f.buckets)
                    .map_err(|e| Error::Data(format!("field '{}': {e}", f.name)))?,
                FieldKind::Categorical => Vec::new(),
            });
        }
        Ok(Bucketizer {
            kinds: schema.fields().iter().map(|f| f.kind).collect(),
            cardinality: schema.cardinalities(),
            edges,
            names: schema.names(),
        })
    }

    pub fn edges(&self, field: usize) -> &[f64] {
        &self.edges[field]
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinality
    }

    /// Embedding row for `value` in `field`; `row` is used in diagnostics.
    pub fn encode_value(&self, field: usize, value: f64, row: usize) -> Result<usize> {
        if !value.is_finite() {
            return Err(Error::Data(format!(
                "field '{}', row {row}: non-finite value {value}",
                self.names[field]
            )));
        }
        let k = self.cardinality[field];
        Ok(match self.kinds[field] {
            FieldKind::Numeric => bucketize(value, &self.edges[field])?.min(k - 1),
            FieldKind::Categorical => (value.round().max(0.0) as usize).min(k - 1),
        })
    }

    /// Codes laid out `[day][field]`.
    pub fn encode(&self, ds: &LakeDataset) -> Result<Vec<Vec<usize>>> {
        ds.features
            .iter()
            .enumerate()
            .map(|(t, row)| {
                row.iter()
                    .enumerate()
                    .map(|(i, &v)| self.encode_value(i, v, t))
                    .collect()
            })
            .collect()
    }
}

/// One `K_i × d` embedding matrix per field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub tables: Vec<Tensor>,
    dim: usize,
}

impl EmbeddingTable {
    pub fn init<R: Rng + ?Sized>(cardinalities: &[usize], dim: usize, rng: &mut R) -> Self {
        EmbeddingTable {
            tables: cardinalities
                .iter()
                .map(|&k| Tensor::uniform(vec![k, dim], 0.1, rng))
                .collect(),
            dim,
        }
    }

    pub fn from_tables(tables: Vec<Tensor>) -> Result<Self> {
        let dim = tables.first().map(|t| t.cols()).unwrap_or(0);
        if tables.iter().any(|t| t.shape().len() != 2 || t.cols() != dim) {
            return Err(Error::Config("embedding tables must share the same width".into()));
        }
        Ok(EmbeddingTable { tables, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fields(&self) -> usize {
        self.tables.len()
    }

    pub fn embed(&self, field: usize, bucket: usize) -> Result<&[f64]> {
        let table = self
            .tables
            .get(field)
            .ok_or_else(|| Error::Internal(format!("field {field} has no embedding table")))?;
        if bucket >= table.rows() {
            return Err(Error::Internal(format!(
                "bucket {bucket} out of range for field {field} ({} rows)",
                table.rows()
            )));
        }
        Ok(table.row(bucket))
    }
}

/// Row of the lake metadata file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LakeMeta {
    pub lake_id: String,
    pub area_m2: f64,
    pub volume_m3: f64,
    pub max_depth_m: f64,
    /// Data file, relative to the metadata file's directory.
    pub file: String,
}

pub fn load_meta(path: &Path) -> Result<Vec<LakeMeta>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let meta: LakeMeta = rec.map_err(|e| csv_error(path, e))?;
        if !(meta.area_m2 > 0.0 && meta.volume_m3 > 0.0 && meta.max_depth_m > 0.0) {
            return Err(Error::Data(format!(
                "{}: lake '{}' has non-positive morphometry",
                path.display(),
                meta.lake_id
            )));
        }
        out.push(meta);
    }
    Ok(out)
}

pub fn write_meta(path: &Path, metas: &[LakeMeta]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for m in metas {
        w.serialize(m).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Daily records of one lake.
#[derive(Debug, Clone, PartialEq)]
pub struct LakeDataset {
    pub lake_id: String,
    pub feature_names: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// `[day][field]`
    pub features: Vec<Vec<f64>>,
    pub sim_epi: Vec<f64>,
    pub sim_hyp: Vec<f64>,
    pub obs_epi: Vec<Option<f64>>,
    pub obs_hyp: Vec<Option<f64>>,
    pub area_m2: f64,
    pub volume_m3: f64,
}

impl LakeDataset {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn sim(&self, task: Task) -> &[f64] {
        match task {
            Task::Epi => &self.sim_epi,
            Task::Hyp => &self.sim_hyp,
        }
    }

    pub fn obs(&self, task: Task) -> &[Option<f64>] {
        match task {
            Task::Epi => &self.obs_epi,
            Task::Hyp => &self.obs_hyp,
        }
    }

    pub fn observed_count(&self, task: Task) -> usize {
        self.obs(task).iter().filter(|o| o.is_some()).count()
    }

    /// First day index with a date `>= date`.
    pub fn day_index(&self, date: NaiveDate) -> usize {
        self.dates.partition_point(|d| *d < date)
    }

    /// Checks the in-memory invariants. Line numbers assume the CSV layout.
    pub fn validate(&self) -> Result<()> {
        let t = self.dates.len();
        let m = self.feature_names.len();
        if self.features.len() != t
            || self.sim_epi.len() != t
            || self.sim_hyp.len() != t
            || self.obs_epi.len() != t
            || self.obs_hyp.len() != t
        {
            return Err(Error::Data(format!("lake '{}': series lengths differ", self.lake_id)));
        }
        for day in 0..t {
            if day > 0 {
                let prev = self.dates[day - 1];
                let cur = self.dates[day];
                if cur <= prev {
                    return Err(Error::Data(format!(
                        "lake '{}', line {}: date {cur} does not follow {prev}",
                        self.lake_id,
                        day + 2
                    )));
                }
                if (cur - prev).num_days() != 1 {
                    return Err(Error::Data(format!(
                        "lake '{}', line {}: gap of {} days between {prev} and {cur}",
                        self.lake_id,
                        day + 2,
                        (cur - prev).num_days() - 1
                    )));
                }
            }
            if self.features[day].len() != m {
                return Err(Error::Data(format!(
                    "lake '{}', line {}: {} features, expected {m}",
                    self.lake_id,
                    day + 2,
                    self.features[day].len()
                )));
            }
            let labels = [
                Some(self.sim_epi[day]),
                Some(self.sim_hyp[day]),
                self.obs_epi[day],
                self.obs_hyp[day],
            ];
            for v in labels.into_iter().flatten() {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::Data(format!(
                        "lake '{}', line {}: invalid DO value {v}",
                        self.lake_id,
                        day + 2
                    )));
                }
            }
        }
        Ok(())
    }
}

const LABEL_COLUMNS: [&str; 4] = ["sim_epi", "sim_hyp", "obs_epi", "obs_hyp"];

/// Reads a lake data file. Morphometry is left at zero; use
/// [`load_lake`] to attach metadata.
pub fn load_dataset(path: &Path) -> Result<LakeDataset> {
    let lake_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 6 || header[0] != "date" || header[header.len() - 4..] != LABEL_COLUMNS {
        return Err(Error::Data(format!(
            "{}: header must be date,<features...>,{}",
            path.display(),
            LABEL_COLUMNS.join(",")
        )));
    }
    let m = header.len() - 5;
    let mut ds = LakeDataset {
        lake_id,
        feature_names: header[1..=m].to_vec(),
        dates: Vec::new(),
        features: Vec::new(),
        sim_epi: Vec::new(),
        sim_hyp: Vec::new(),
        obs_epi: Vec::new(),
        obs_hyp: Vec::new(),
        area_m2: 0.0,
        volume_m3: 0.0,
    };
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let at = |msg: String| Error::Data(format!("{}:{line}: {msg}", path.display()));
        if rec.len() != header.len() {
            return Err(at(format!("{} columns, expected {}", rec.len(), header.len())));
        }
        let date = NaiveDate::parse_from_str(&rec[0], DATE_FORMAT)
            .map_err(|e| at(format!("bad date '{}': {e}", &rec[0])))?;
        if let Some(&prev) = ds.dates.last() {
            if date <= prev {
                return Err(at(format!("date {date} is not after {prev}")));
            }
            let gap = (date - prev).num_days();
            if gap != 1 {
                return Err(at(format!("gap of {} days between {prev} and {date}", gap - 1)));
            }
        }
        let num = |i: usize| -> Result<f64> {
            let cell = rec[i].trim();
            let v: f64 = cell
                .parse()
                .map_err(|_| at(format!("column '{}': bad number '{cell}'", header[i])))?;
            if !v.is_finite() {
                return Err(at(format!("column '{}': non-finite value", header[i])));
            }
            Ok(v)
        };
        let opt = |i: usize| -> Result<Option<f64>> {
            if rec[i].trim().is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        let features = (1..=m).map(num).collect::<Result<Vec<_>>>()?;
        let labels = [Some(num(m + 1)?), Some(num(m + 2)?), opt(m + 3)?, opt(m + 4)?];
        for (k, v) in labels.iter().enumerate() {
            if let Some(v) = v {
                if *v < 0.0 {
                    return Err(at(format!("negative DO {v} in column '{}'", LABEL_COLUMNS[k])));
                }
            }
        }
        ds.dates.push(date);
        ds.features.push(features);
        ds.sim_epi.push(labels[0].unwrap_or_default());
        ds.sim_hyp.push(labels[1].unwrap_or_default());
        ds.obs_epi.push(labels[2]);
        ds.obs_hyp.push(labels[3]);
    }
    if ds.is_empty() {
        return Err(Error::Data(format!("{}: no records", path.display())));
    }
    log::info!(
        "loaded lake '{}': {} days, {} epi and {} hyp observations",
        ds.lake_id,
        ds.len(),
        ds.observed_count(Task::Epi),
        ds.observed_count(Task::Hyp)
    );
    Ok(ds)
}

/// Loads the data file named by `meta` (relative to `base`) and attaches
/// the lake's morphometry.
pub fn load_lake(base: &Path, meta: &LakeMeta) -> Result<LakeDataset> {
    let mut ds = load_dataset(&base.join(&meta.file))?;
    ds.lake_id = meta.lake_id.clone();
    ds.area_m2 = meta.area_m2;
    ds.volume_m3 = meta.volume_m3;
    Ok(ds)
}

/// Loads every lake listed in a metadata file.
pub fn load_benchmark(meta_path: &Path) -> Result<Vec<LakeDataset>> {
    let base = meta_path.parent().map(Path::to_path_buf).unwrap_or_else(PathBuf::new);
    load_meta(meta_path)?
        .iter()
        .map(|m| load_lake(&base, m))
        .collect()
}

pub fn write_dataset(path: &Path, ds: &LakeDataset) -> Result<()> {
    ds.validate()?;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["date".to_string()];
    header.extend(ds.feature_names.iter().cloned());
    header.extend(LABEL_COLUMNS.iter().map(|s| s.to_string()));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for t in 0..ds.len() {
        let mut row = Vec::with_capacity(header.len());
        row.push(ds.dates[t].format(DATE_FORMAT).to_string());
        row.extend(ds.features[t].iter().map(f64::to_string));
        row.push(ds.sim_epi[t].to_string());
        row.push(ds.sim_hyp[t].to_string());
        row.push(opt(ds.obs_epi[t]));
        row.push(opt(ds.obs_hyp[t]));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Data(format!("{}: {e}", path.display()))
    }
}

/// Start offsets of length-`len` windows inside `range` with the given
/// stride. Windows never cross `range.end`.
pub fn window_starts(range: std::ops::Range<usize>, len: usize, stride: usize) -> Result<Vec<usize>> {
    if len == 0 || stride == 0 {
        return Err(Error::Config("window length and stride must be positive".into()));
    }
    let span = range.end.saturating_sub(range.start);
    if len > span {
        return Err(Error::Config(format!(
            "window length {len} exceeds the {span} available days"
        )));
    }
    Ok((range.start..=range.end - len).step_by(stride).collect())
}

/// A slice of consecutive days copied out of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub start: usize,
    pub features: Vec<Vec<f64>>,
    pub sim_epi: Vec<f64>,
    pub sim_hyp: Vec<f64>,
    pub mask_epi: Vec<bool>,
    pub mask_hyp: Vec<bool>,
}

pub fn make_windows(ds: &LakeDataset, len: usize, stride: usize) -> Result<Vec<Window>> {
    Ok(window_starts(0..ds.len(), len, stride)?
        .into_iter()
        .map(|s| {
            let r = s..s + len;
            Window {
                start: s,
                features: ds.features[r.clone()].to_vec(),
                sim_epi: ds.sim_epi[r.clone()].to_vec(),
                sim_hyp: ds.sim_hyp[r.clone()].to_vec(),
                mask_epi: ds.obs_epi[r.clone()].iter().map(Option::is_some).collect(),
                mask_hyp: ds.obs_hyp[r].iter().map(Option::is_some).collect(),
            }
        })
        .collect())
}

/// A lake with its features already mapped to embedding rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedLake {
    pub lake_id: String,
    pub dates: Vec<NaiveDate>,
    /// `[day][field]`
    pub codes: Vec<Vec<usize>>,
    pub sim: [Vec<f64>; 2],
    pub obs: [Vec<Option<f64>>; 2],
}

impl EncodedLake {
    pub fn new(ds: &LakeDataset, bucketizer: &Bucketizer) -> Result<Self> {
        Ok(EncodedLake {
            lake_id: ds.lake_id.clone(),
            dates: ds.dates.clone(),
            codes: bucketizer.encode(ds)?,
            sim: [ds.sim_epi.clone(), ds.sim_hyp.clone()],
            obs: [ds.obs_epi.clone(), ds.obs_hyp.clone()],
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn day_index(&self, date: NaiveDate) -> usize {
        self.dates.partition_point(|d| *d < date)
    }
}
