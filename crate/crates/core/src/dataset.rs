//! Schema-driven tabular data: loading, cleaning, encoding, splitting and
//! protected-group binarization.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("column `{column}` has values missing from its group map: {values:?}")]
    UnmappedGroupValues { column: String, values: Vec<String> },
    #[error("column `{0}` is not a protected column")]
    NotProtected(String),
    #[error("column `{0}` is numeric; a categorical column is required")]
    NotCategorical(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("dataset is empty")]
    Empty,
    #[error("invalid split: {0}")]
    InvalidSplit(String),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Categorical,
    Numeric,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

/// Group map for one protected column.
///
/// Values listed in `protected_values` form the protected group `a`. When
/// `unprotected_values` is given the map is closed: any observed value in
/// neither list is an error. Without it, every other value is unprotected.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtectedSpec {
    pub column: String,
    #[serde(default = "default_protected_values")]
    pub protected_values: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unprotected_values: Option<Vec<String>>,
}

/// Black for race, female for gender.
pub fn default_protected_values() -> Vec<String> {
    ["Black", "African-American", "F", "Female"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

impl ProtectedSpec {
    pub fn tag(&self, raw: &str) -> Option<GroupTag> {
        if self.protected_values.iter().any(|v| v == raw) {
            return Some(GroupTag::Protected);
        }
        match &self.unprotected_values {
            Some(list) if list.iter().any(|v| v == raw) => Some(GroupTag::Unprotected),
            Some(_) => None,
            None => Some(GroupTag::Unprotected),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
    pub class_column: String,
    #[serde(default)]
    pub protected: Vec<ProtectedSpec>,
    #[serde(default)]
    pub missing_tokens: Vec<String>,
}

impl Schema {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: Schema = serde_json::from_str(text)
            .map_err(|e| DatasetError::Schema(format!("invalid schema document: {e}")))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashMap::new();
        for (i, c) in self.columns.iter().enumerate() {
            if seen.insert(c.name.as_str(), i).is_some() {
                return Err(DatasetError::Schema(format!("duplicate column `{}`", c.name)));
            }
        }
        let class = self
            .column_index(&self.class_column)
            .ok_or_else(|| DatasetError::Schema(format!("class column `{}` not in columns", self.class_column)))?;
        if self.columns[class].kind != ColumnKind::Categorical {
            return Err(DatasetError::Schema(format!(
                "class column `{}` must be categorical",
                self.class_column
            )));
        }
        for p in &self.protected {
            let idx = self
                .column_index(&p.column)
                .ok_or_else(|| DatasetError::Schema(format!("protected column `{}` not in columns", p.column)))?;
            if self.columns[idx].kind != ColumnKind::Categorical {
                return Err(DatasetError::NotCategorical(p.column.clone()));
            }
            if idx == class {
                return Err(DatasetError::Schema("class column cannot be protected".into()));
            }
        }
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn class_index(&self) -> usize {
        self.column_index(&self.class_column).expect("validated schema")
    }

    pub fn protected_spec(&self, name: &str) -> Option<&ProtectedSpec> {
        self.protected.iter().find(|p| p.column == name)
    }

    /// Number of non-class columns.
    pub fn attribute_count(&self) -> usize {
        self.columns.len() - 1
    }

    fn is_missing(&self, cell: &str) -> bool {
        cell.is_empty() || self.missing_tokens.iter().any(|t| t == cell)
    }
}

/// Bijection between raw categorical strings and integer codes, in order of
/// first appearance.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Encoder {
    values: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Encoder {
    fn from(values: Vec<String>) -> Self {
        Encoder::from_values(values)
    }
}

impl From<Encoder> for Vec<String> {
    fn from(e: Encoder) -> Self {
        e.values
    }
}

impl Encoder {
    pub fn from_values(values: Vec<String>) -> Self {
        let index = values
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), i as u32))
            .collect();
        Encoder { values, index }
    }

    pub fn encode_or_insert(&mut self, raw: &str) -> u32 {
        if let Some(&code) = self.index.get(raw) {
            return code;
        }
        let code = self.values.len() as u32;
        self.values.push(raw.to_string());
        self.index.insert(raw.to_string(), code);
        code
    }

    pub fn encode(&self, raw: &str) -> Option<u32> {
        self.index.get(raw).copied()
    }

    pub fn decode(&self, code: u32) -> Option<&str> {
        self.values.get(code as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }
}

/// One encoded row: categorical columns hold their integer code, numeric
/// columns their parsed value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record(pub Vec<f64>);

impl Record {
    pub fn code(&self, column: usize) -> u32 {
        self.0[column] as u32
    }

    pub fn value(&self, column: usize) -> f64 {
        self.0[column]
    }
}

/// Raw string table before encoding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawTable {
    pub header: Vec<String>,
    /// `(source line, cells)`; the line number is kept for error messages.
    pub rows: Vec<(u64, Vec<String>)>,
}

impl RawTable {
    pub fn read(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| csv_error(e, 1))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_error(e, 0))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            rows.push((line, rec.iter().map(|c| c.trim().to_string()).collect()));
        }
        Ok(RawTable { header, rows })
    }
}

fn csv_error(e: csv::Error, fallback_line: u64) -> DatasetError {
    let line = e.position().map(|p| p.line()).unwrap_or(fallback_line);
    DatasetError::Parse { line, message: e.to_string() }
}

/// Drops every row holding an empty cell or a missing-value token.
/// Idempotent.
pub fn preprocess(raw: &RawTable, schema: &Schema) -> RawTable {
    let rows = raw
        .rows
        .iter()
        .filter(|(_, cells)| !cells.iter().any(|c| schema.is_missing(c)))
        .cloned()
        .collect();
    RawTable { header: raw.header.clone(), rows }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    schema: Arc<Schema>,
    encoders: Arc<Vec<Option<Encoder>>>,
    records: Vec<Record>,
    /// Row identity, stable across splits and subsets.
    ids: Vec<usize>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.schema == other.schema
            && self.encoders == other.encoders
            && self.records == other.records
            && self.ids == other.ids
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Dataset::from_reader(file, schema)
}

impl Dataset {
    pub fn from_reader(reader: impl Read, schema: &Schema) -> Result<Self> {
        schema.validate()?;
        let raw = RawTable::read(reader)?;
        Self::from_raw(&preprocess(&raw, schema), schema)
    }

    /// Encodes an already-cleaned table.
    pub fn from_raw(raw: &RawTable, schema: &Schema) -> Result<Self> {
        schema.validate()?;
        for h in &raw.header {
            if schema.column_index(h).is_none() {
                return Err(DatasetError::UnknownColumn(h.clone()));
            }
        }
        let positions: Vec<usize> = schema
            .columns
            .iter()
            .map(|c| {
                raw.header
                    .iter()
                    .position(|h| *h == c.name)
                    .ok_or_else(|| DatasetError::Schema(format!("column `{}` missing from header", c.name)))
            })
            .collect::<Result<_>>()?;

        let mut encoders: Vec<Option<Encoder>> = schema
            .columns
            .iter()
            .map(|c| (c.kind == ColumnKind::Categorical).then(Encoder::default))
            .collect();
        let mut records = Vec::with_capacity(raw.rows.len());
        for (line, cells) in &raw.rows {
            let mut values = Vec::with_capacity(schema.columns.len());
            for (ci, col) in schema.columns.iter().enumerate() {
                let cell = &cells[positions[ci]];
                let v = match col.kind {
                    ColumnKind::Categorical => {
                        encoders[ci].as_mut().expect("categorical encoder").encode_or_insert(cell) as f64
                    }
                    ColumnKind::Numeric => cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                        DatasetError::Parse {
                            line: *line,
                            message: format!("column `{}`: `{cell}` is not a number", col.name),
                        }
                    })?,
                };
                values.push(v);
            }
            records.push(Record(values));
        }

        for p in &schema.protected {
            let idx = schema.column_index(&p.column).expect("validated");
            let enc = encoders[idx].as_ref().expect("categorical");
            let unmapped: Vec<String> = enc.values().iter().filter(|v| p.tag(v).is_none()).cloned().collect();
            if !unmapped.is_empty() {
                return Err(DatasetError::UnmappedGroupValues { column: p.column.clone(), values: unmapped });
            }
        }

        let ids = (0..records.len()).collect();
        Ok(Dataset {
            schema: Arc::new(schema.clone()),
            encoders: Arc::new(encoders),
            records,
            ids,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn encoder(&self, column: usize) -> Option<&Encoder> {
        self.encoders[column].as_ref()
    }

    pub fn class_index(&self) -> usize {
        self.schema.class_index()
    }

    pub fn class_count(&self) -> usize {
        self.encoder(self.class_index()).map(Encoder::len).unwrap_or(0)
    }

    pub fn class_of(&self, i: usize) -> usize {
        self.records[i].code(self.class_index()) as usize
    }

    /// Column indices of all non-class attributes, in schema order.
    pub fn attribute_columns(&self) -> Vec<usize> {
        let class = self.class_index();
        (0..self.schema.columns.len()).filter(|&c| c != class).collect()
    }

    /// Records at `indices`, in that order, sharing schema and encoders.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: Arc::clone(&self.schema),
            encoders: Arc::clone(&self.encoders),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            ids: indices.iter().map(|&i| self.ids[i]).collect(),
        }
    }

    /// Keeps records whose mask entry is true, preserving order.
    pub fn filter(&self, keep: &[bool]) -> Dataset {
        let idx: Vec<usize> = keep.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i).collect();
        self.subset(&idx)
    }

    /// Raw string form of a cell.
    pub fn raw_value(&self, record: usize, column: usize) -> String {
        let v = self.records[record].value(column);
        match self.encoder(column) {
            Some(enc) => enc.decode(v as u32).unwrap_or_default().to_string(),
            None => format!("{v}"),
        }
    }

    /// Writes the decoded records back out as CSV with the schema header.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let map = |e: csv::Error| DatasetError::Parse { line: 0, message: e.to_string() };
        w.write_record(self.schema.columns.iter().map(|c| c.name.as_str())).map_err(map)?;
        for r in 0..self.len() {
            let row: Vec<String> = (0..self.schema.columns.len()).map(|c| self.raw_value(r, c)).collect();
            w.write_record(&row).map_err(map)?;
        }
        w.flush().map_err(|source| DatasetError::Io { path: "<csv writer>".into(), source })?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupTag {
    /// `A = a`
    Protected,
    /// `A = ā`
    Unprotected,
}

impl GroupTag {
    /// Row index in group-by-cluster matrices: protected first.
    pub fn index(self) -> usize {
        match self {
            GroupTag::Protected => 0,
            GroupTag::Unprotected => 1,
        }
    }

    pub fn swapped(self) -> Self {
        match self {
            GroupTag::Protected => GroupTag::Unprotected,
            GroupTag::Unprotected => GroupTag::Protected,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAssignment {
    pub attribute: String,
    pub labels: Vec<GroupTag>,
}

impl GroupAssignment {
    pub fn subset(&self, indices: &[usize]) -> GroupAssignment {
        GroupAssignment {
            attribute: self.attribute.clone(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn count(&self, tag: GroupTag) -> usize {
        self.labels.iter().filter(|&&t| t == tag).count()
    }
}

pub fn binarize_group(ds: &Dataset, attribute: &str) -> Result<GroupAssignment> {
    let spec = ds
        .schema()
        .protected_spec(attribute)
        .ok_or_else(|| DatasetError::NotProtected(attribute.to_string()))?;
    let col = ds.schema().column_index(attribute).expect("validated");
    let enc = ds.encoder(col).ok_or_else(|| DatasetError::NotCategorical(attribute.to_string()))?;
    let tags: Vec<Option<GroupTag>> = enc.values().iter().map(|v| spec.tag(v)).collect();
    let unmapped: Vec<String> = enc
        .values()
        .iter()
        .zip(&tags)
        .filter(|(_, t)| t.is_none())
        .map(|(v, _)| v.clone())
        .collect();
    if !unmapped.is_empty() {
        return Err(DatasetError::UnmappedGroupValues { column: attribute.to_string(), values: unmapped });
    }
    let labels = ds
        .records()
        .iter()
        .map(|r| tags[r.code(col) as usize].expect("checked above"))
        .collect();
    Ok(GroupAssignment { attribute: attribute.to_string(), labels })
}

/// Histogram of raw values of a categorical column, in encoder order.
/// Values absent from this dataset (but known to the encoder) are omitted.
pub fn group_skew(ds: &Dataset, attribute: &str) -> Result<Vec<(String, usize)>> {
    let col = ds
        .schema()
        .column_index(attribute)
        .ok_or_else(|| DatasetError::UnknownColumn(attribute.to_string()))?;
    let enc = ds.encoder(col).ok_or_else(|| DatasetError::NotCategorical(attribute.to_string()))?;
    let mut counts = vec![0usize; enc.len()];
    for r in ds.records() {
        counts[r.code(col) as usize] += 1;
    }
    Ok(enc
        .values()
        .iter()
        .cloned()
        .zip(counts)
        .filter(|(_, c)| *c > 0)
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub attack_fraction: f64,
    pub eval_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train_fraction: 0.5, attack_fraction: 0.15, eval_fraction: 0.2, seed: 0 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("train_fraction", self.train_fraction),
            ("attack_fraction", self.attack_fraction),
            ("eval_fraction", self.eval_fraction),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(DatasetError::InvalidSplit(format!("{name} = {f} is outside (0, 1)")));
            }
        }
        if self.attack_fraction + self.eval_fraction > 1.0 {
            return Err(DatasetError::InvalidSplit(format!(
                "attack_fraction + eval_fraction = {} exceeds 1",
                self.attack_fraction + self.eval_fraction
            )));
        }
        Ok(())
    }
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Seeded disjoint train/test partition; `|train| = round(f * n)`.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if ds.is_empty() {
        return Err(DatasetError::Empty);
    }
    if ds.len() < 2 {
        return Err(DatasetError::InvalidSplit("need at least two records".into()));
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(DatasetError::InvalidSplit(format!(
            "train_fraction = {} is outside (0, 1)",
            spec.train_fraction
        )));
    }
    let idx = shuffled(ds.len(), spec.seed);
    let n_train = (spec.train_fraction * ds.len() as f64).round() as usize;
    let (tr, te) = idx.split_at(n_train);
    Ok((ds.subset(tr), ds.subset(te)))
}

/// Positions of `ds` sorted by a seeded hash of each record's id. A record
/// keeps its rank when others are removed, so subsets drawn from a reduced
/// copy of a dataset mostly agree with those drawn from the original.
fn order_by_id(ds: &Dataset, seed: u64) -> Vec<usize> {
    let mut keyed: Vec<(u64, usize)> =
        ds.ids().iter().enumerate().map(|(pos, &id)| (splitmix64(seed ^ splitmix64(id as u64)), pos)).collect();
    keyed.sort_unstable();
    keyed.into_iter().map(|(_, pos)| pos).collect()
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Attack-training and attack-evaluation subsets drawn from the target's
/// training split (members) and testing split (non-members).
#[derive(Clone, Debug)]
pub struct AttackData {
    pub attack_members: Dataset,
    pub attack_nonmembers: Dataset,
    pub eval_members: Dataset,
    pub eval_nonmembers: Dataset,
}

pub fn sample_attack_data(train: &Dataset, test: &Dataset, spec: &SplitSpec) -> Result<AttackData> {
    spec.validate()?;
    let draw = |source: &Dataset, salt: u64| -> Result<(Dataset, Dataset)> {
        let n = source.len();
        let n_attack = (spec.attack_fraction * n as f64).round() as usize;
        let n_eval = (spec.eval_fraction * n as f64).round() as usize;
        if n_attack == 0 || n_eval == 0 || n_attack + n_eval > n {
            return Err(DatasetError::InvalidSplit(format!(
                "cannot draw {n_attack} attack and {n_eval} evaluation records from {n}"
            )));
        }
        let idx = order_by_id(source, spec.seed ^ salt);
        Ok((source.subset(&idx[..n_attack]), source.subset(&idx[n_attack..n_attack + n_eval])))
    };
    let (attack_members, eval_members) = draw(train, 0x6d65_6d62_6572_7300)?;
    let (attack_nonmembers, eval_nonmembers) = draw(test, 0x6e6f_6e6d_656d_6200)?;
    Ok(AttackData { attack_members, attack_nonmembers, eval_members, eval_nonmembers })
}
