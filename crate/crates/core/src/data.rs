//! Flow-record ingestion: schema handling, CSV loading, class balancing,
//! shuffling/splitting and partitioning across simulated agents.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derived_rng, TAG_BALANCE, TAG_PARTITION, TAG_SPLIT};

/// Columns that look numeric in network logs but carry identifiers, so they
/// must be compared as categories.
pub const FORCED_CATEGORICAL: [&str; 8] = [
    "src_port",
    "dst_port",
    "dns_qclass",
    "dns_qtype",
    "dns_rcode",
    "http_trans_depth",
    "http_status_code",
    "http_user_agent",
];

pub const DEFAULT_MISSING_TOKEN: &str = "-";

/// Per-agent train share used when none is configured (30000:5000).
pub const DEFAULT_TRAIN_FRACTION: f64 = 6.0 / 7.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numerical,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: FeatureKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    columns: Vec<Column>,
    label_column: String,
    excluded_columns: BTreeSet<String>,
    missing_token: String,
}

/// On-disk schema description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaFile {
    pub label: String,
    #[serde(default)]
    pub exclude: Vec<String>,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default)]
    pub numerical: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub missing: Option<String>,
}

impl FeatureSchema {
    pub fn new(
        columns: Vec<Column>,
        label_column: impl Into<String>,
        excluded_columns: impl IntoIterator<Item = String>,
    ) -> Result<Self> {
        let label_column = label_column.into();
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column '{}'", c.name)));
            }
            if c.name == label_column {
                return Err(Error::Schema(format!(
                    "label column '{label_column}' is also listed as a feature"
                )));
            }
            if c.kind == FeatureKind::Numerical && FORCED_CATEGORICAL.contains(&c.name.as_str()) {
                return Err(Error::Schema(format!(
                    "column '{}' carries identifiers and must be categorical",
                    c.name
                )));
            }
        }
        let mut excluded = BTreeSet::new();
        for name in excluded_columns {
            if name == label_column {
                return Err(Error::Schema(format!(
                    "label column '{label_column}' is also excluded"
                )));
            }
            if seen.contains(name.as_str()) {
                return Err(Error::Schema(format!(
                    "column '{name}' is both a feature and excluded"
                )));
            }
            if !excluded.insert(name.clone()) {
                return Err(Error::Schema(format!("column '{name}' excluded twice")));
            }
        }
        if columns.is_empty() {
            return Err(Error::Schema("schema has no feature columns".into()));
        }
        Ok(Self {
            columns,
            label_column,
            excluded_columns: excluded,
            missing_token: DEFAULT_MISSING_TOKEN.to_string(),
        })
    }

    pub fn with_missing_token(mut self, token: impl Into<String>) -> Self {
        self.missing_token = token.into();
        self
    }

    pub fn from_file(file: &SchemaFile) -> Result<Self> {
        let columns = file
            .categorical
            .iter()
            .map(|n| Column {
                name: n.clone(),
                kind: FeatureKind::Categorical,
            })
            .chain(file.numerical.iter().map(|n| Column {
                name: n.clone(),
                kind: FeatureKind::Numerical,
            }))
            .collect();
        let schema = Self::new(columns, file.label.clone(), file.exclude.iter().cloned())?;
        Ok(match &file.missing {
            Some(tok) => schema.with_missing_token(tok.clone()),
            None => schema,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: SchemaFile =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        Self::from_file(&file)
    }

    pub fn from_json_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_file(&self) -> SchemaFile {
        let pick = |kind| {
            self.columns
                .iter()
                .filter(|c| c.kind == kind)
                .map(|c| c.name.clone())
                .collect()
        };
        SchemaFile {
            label: self.label_column.clone(),
            exclude: self.excluded_columns.iter().cloned().collect(),
            categorical: pick(FeatureKind::Categorical),
            numerical: pick(FeatureKind::Numerical),
            missing: (self.missing_token != DEFAULT_MISSING_TOKEN)
                .then(|| self.missing_token.clone()),
        }
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn feature_count(&self) -> usize {
        self.columns.len()
    }

    pub fn kind(&self, feature: usize) -> FeatureKind {
        self.columns[feature].kind
    }

    pub fn label_column(&self) -> &str {
        &self.label_column
    }

    pub fn excluded_columns(&self) -> &BTreeSet<String> {
        &self.excluded_columns
    }

    pub fn missing_token(&self) -> &str {
        &self.missing_token
    }

    /// Reorders the feature columns to follow `header`, checking that every
    /// header name is exactly one of feature, label or excluded.
    fn resolve_header(&self, header: &[&str]) -> Result<(FeatureSchema, Vec<HeaderRole>)> {
        let by_name: HashMap<&str, &Column> =
            self.columns.iter().map(|c| (c.name.as_str(), c)).collect();
        let mut roles = Vec::with_capacity(header.len());
        let mut ordered = Vec::with_capacity(self.columns.len());
        let mut label_seen = false;
        let mut names = HashSet::new();
        for name in header {
            if !names.insert(*name) {
                return Err(Error::Schema(format!("duplicate header column '{name}'")));
            }
            if *name == self.label_column {
                label_seen = true;
                roles.push(HeaderRole::Label);
            } else if self.excluded_columns.contains(*name) {
                roles.push(HeaderRole::Excluded);
            } else if let Some(col) = by_name.get(name) {
                roles.push(HeaderRole::Feature(ordered.len(), col.kind));
                ordered.push((*col).clone());
            } else {
                return Err(Error::Schema(format!(
                    "header column '{name}' is not declared in the schema"
                )));
            }
        }
        if !label_seen {
            return Err(Error::Schema(format!(
                "label column '{}' missing from header",
                self.label_column
            )));
        }
        if let Some(col) = self.columns.iter().find(|c| !names.contains(c.name.as_str())) {
            return Err(Error::Schema(format!(
                "schema column '{}' missing from header",
                col.name
            )));
        }
        let resolved = FeatureSchema {
            columns: ordered,
            label_column: self.label_column.clone(),
            excluded_columns: self.excluded_columns.clone(),
            missing_token: self.missing_token.clone(),
        };
        Ok((resolved, roles))
    }
}

#[derive(Debug, Clone, Copy)]
enum HeaderRole {
    Feature(usize, FeatureKind),
    Label,
    Excluded,
}

/// A single feature cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    Token(String),
    Missing,
}

impl Value {
    pub fn token(s: impl Into<String>) -> Self {
        Value::Token(s.into())
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }

    fn conforms(&self, kind: FeatureKind) -> bool {
        match (self, kind) {
            (Value::Missing, _) => true,
            (Value::Number(x), FeatureKind::Numerical) => x.is_finite(),
            (Value::Token(_), FeatureKind::Categorical) => true,
            _ => false,
        }
    }
}

/// Checks that `row` matches the schema's arity and per-column kinds.
pub fn check_row(schema: &FeatureSchema, row: &[Value]) -> Result<()> {
    if row.len() != schema.feature_count() {
        return Err(Error::Shape(format!(
            "row has {} values, schema has {} features",
            row.len(),
            schema.feature_count()
        )));
    }
    for (f, v) in row.iter().enumerate() {
        if !v.conforms(schema.kind(f)) {
            return Err(Error::Schema(format!(
                "value {v:?} does not fit {:?} column '{}'",
                schema.kind(f),
                schema.columns[f].name
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceTable {
    schema: Arc<FeatureSchema>,
    rows: Vec<Vec<Value>>,
    labels: Vec<u8>,
}

impl InstanceTable {
    pub fn new(schema: Arc<FeatureSchema>, rows: Vec<Vec<Value>>, labels: Vec<u8>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let bad: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l > 1)
            .map(|(i, _)| i)
            .collect();
        if !bad.is_empty() {
            return Err(Error::InvalidLabels { rows: bad });
        }
        for row in &rows {
            check_row(&schema, row)?;
        }
        Ok(Self {
            schema,
            rows,
            labels,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn shared_schema(&self) -> Arc<FeatureSchema> {
        Arc::clone(&self.schema)
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[Value] {
        &self.rows[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// (normal count, attack count)
    pub fn class_counts(&self) -> (usize, usize) {
        let attacks = self.labels.iter().filter(|&&l| l == 1).count();
        (self.labels.len() - attacks, attacks)
    }

    /// New table holding the given rows in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            schema: Arc::clone(&self.schema),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &InstanceTable) -> Result<Self> {
        if self.schema != other.schema {
            return Err(Error::Schema("cannot concatenate tables with different schemas".into()));
        }
        let mut rows = self.rows.clone();
        rows.extend_from_slice(&other.rows);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(Self {
            schema: Arc::clone(&self.schema),
            rows,
            labels,
        })
    }

    /// Same rows with replaced labels (used to inject label noise).
    pub fn with_labels(&self, labels: Vec<u8>) -> Result<Self> {
        Self::new(Arc::clone(&self.schema), self.rows.clone(), labels)
    }
}

/// Loads a comma-separated flow-record file and applies `schema`.
///
/// Excluded columns are dropped and features follow header order. Quoted
/// fields are rejected.
pub fn load_csv(path: &Path, schema: &FeatureSchema) -> Result<InstanceTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, schema)
}

pub fn parse_csv(text: &str, schema: &FeatureSchema) -> Result<InstanceTable> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut lines = text.lines().enumerate();
    let (_, header_line) = lines.next().ok_or(Error::Csv {
        line: 1,
        message: "missing header row".into(),
    })?;
    let header_line = header_line.trim_end_matches('\r');
    if header_line.contains('"') {
        return Err(Error::Csv {
            line: 1,
            message: "quoted fields are not supported".into(),
        });
    }
    let header: Vec<&str> = header_line.split(',').map(str::trim).collect();
    let (resolved, roles) = schema.resolve_header(&header)?;
    let missing = resolved.missing_token.clone();

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut bad_labels = Vec::new();
    for (line_idx, raw) in lines {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if line.contains('"') {
            return Err(Error::Csv {
                line: line_idx + 1,
                message: "quoted fields are not supported".into(),
            });
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(Error::Csv {
                line: line_idx + 1,
                message: format!("expected {} fields, found {}", header.len(), fields.len()),
            });
        }
        let mut row = vec![Value::Missing; resolved.feature_count()];
        let mut label = None;
        for (field, role) in fields.iter().zip(&roles) {
            let cell = field.trim();
            match *role {
                HeaderRole::Excluded => {}
                HeaderRole::Label => {
                    label = match cell {
                        "0" => Some(0u8),
                        "1" => Some(1u8),
                        _ => None,
                    }
                }
                HeaderRole::Feature(f, FeatureKind::Numerical) => {
                    row[f] = if cell == missing {
                        Value::Missing
                    } else {
                        match cell.parse::<f64>() {
                            Ok(x) if x.is_finite() => Value::Number(x),
                            _ => Value::Missing,
                        }
                    };
                }
                HeaderRole::Feature(f, FeatureKind::Categorical) => {
                    row[f] = if cell.is_empty() {
                        Value::Missing
                    } else {
                        Value::Token(cell.to_string())
                    };
                }
            }
        }
        match label {
            Some(l) => labels.push(l),
            None => {
                bad_labels.push(rows.len());
                labels.push(0);
            }
        }
        rows.push(row);
    }
    if !bad_labels.is_empty() {
        return Err(Error::InvalidLabels { rows: bad_labels });
    }
    InstanceTable::new(Arc::new(resolved), rows, labels)
}

/// Downsamples the majority class to the minority count and reshuffles.
pub fn balance(table: &InstanceTable, rng_seed: u64) -> Result<InstanceTable> {
    let (normal, attack): (Vec<usize>, Vec<usize>) =
        (0..table.len()).partition(|&i| table.labels[i] == 0);
    if normal.is_empty() || attack.is_empty() {
        return Err(Error::Data("balancing needs both classes present".into()));
    }
    let mut rng = derived_rng(&[rng_seed, TAG_BALANCE]);
    let (mut majority, minority) = if normal.len() >= attack.len() {
        (normal, attack)
    } else {
        (attack, normal)
    };
    majority.shuffle(&mut rng);
    majority.truncate(minority.len());
    let mut keep = minority;
    keep.extend(majority);
    keep.sort_unstable();
    keep.shuffle(&mut rng);
    Ok(table.select(&keep))
}

/// Seeded permutation; the first `train_size` rows become train, the next
/// `test_size` rows become test.
pub fn shuffle_split(
    table: &InstanceTable,
    train_size: usize,
    test_size: usize,
    rng_seed: u64,
) -> Result<(InstanceTable, InstanceTable)> {
    if train_size + test_size > table.len() {
        return Err(Error::Data(format!(
            "requested {} train + {} test rows but only {} available",
            train_size,
            test_size,
            table.len()
        )));
    }
    let mut order: Vec<usize> = (0..table.len()).collect();
    order.shuffle(&mut derived_rng(&[rng_seed, TAG_SPLIT]));
    let train = table.select(&order[..train_size]);
    let test = table.select(&order[train_size..train_size + test_size]);
    Ok((train, test))
}

#[derive(Debug, Clone)]
pub struct AgentDataset {
    pub agent_id: usize,
    pub train: InstanceTable,
    pub test: InstanceTable,
    /// Row indices into the partitioned table.
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Partition {
    pub agents: Vec<AgentDataset>,
    /// Smallest per-agent train count; the shared matrix width.
    pub min_train: usize,
}

/// Sizes of `n_agents` contiguous blocks over `n` rows; the remainder goes
/// one extra row per agent starting from agent 0.
pub fn group_sizes(n: usize, n_agents: usize) -> Vec<usize> {
    let base = n / n_agents;
    let rem = n % n_agents;
    (0..n_agents).map(|a| base + usize::from(a < rem)).collect()
}

/// Shuffles and deals rows into near-equal disjoint agent groups, then
/// splits each group into local train and test.
pub fn partition_agents(
    table: &InstanceTable,
    n_agents: usize,
    train_fraction: f64,
    rng_seed: u64,
) -> Result<Partition> {
    if n_agents == 0 {
        return Err(Error::InvalidArgument("n_agents must be at least 1".into()));
    }
    if n_agents > table.len() {
        return Err(Error::Data(format!(
            "{} agents requested but only {} rows",
            n_agents,
            table.len()
        )));
    }
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train_fraction must be in (0,1], got {train_fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..table.len()).collect();
    order.shuffle(&mut derived_rng(&[rng_seed, TAG_PARTITION]));

    let mut agents = Vec::with_capacity(n_agents);
    let mut start = 0;
    for (agent_id, size) in group_sizes(table.len(), n_agents).into_iter().enumerate() {
        let block = &order[start..start + size];
        start += size;
        let n_train = ((size as f64 * train_fraction).round() as usize).clamp(1, size);
        let train_indices = block[..n_train].to_vec();
        let test_indices = block[n_train..].to_vec();
        agents.push(AgentDataset {
            agent_id,
            train: table.select(&train_indices),
            test: table.select(&test_indices),
            train_indices,
            test_indices,
        });
    }
    let min_train = agents.iter().map(|a| a.train.len()).min().unwrap_or(0);
    Ok(Partition { agents, min_train })
}
