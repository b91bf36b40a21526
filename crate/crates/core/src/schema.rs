//! Categorical feature schemas, entities and training datasets.
//!
//! A [`FeatureSchema`] is an ordered list of features, each with a finite
//! ordered domain. Feature order is significant everywhere downstream: it
//! fixes the argument order of `ent/…` atoms, the fold order of the staged
//! classifier and the layout of emitted programs.
//!
//! Every feature has a display `name` (as written in dataset headers, e.g.
//! `Temperature`) and an atom `label` (the constant used inside logic
//! atoms, e.g. `temp`). The label defaults to the lowercased name.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed delimited data: {0}")]
    Csv(#[from] csv::Error),
    #[error("dataset has no header row")]
    MissingHeader,
    #[error("feature names must be non-empty")]
    EmptyFeatureName,
    #[error("duplicate feature `{0}`")]
    DuplicateFeature(String),
    #[error("feature `{feature}` needs at least 2 distinct values, found {found}")]
    DomainTooSmall { feature: String, found: usize },
    #[error("feature `{feature}` lists value `{value}` twice")]
    DuplicateValue { feature: String, value: String },
    #[error("line {line}: expected {expected} fields, found {found}")]
    Ragged {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("header names `{found}` where the schema expects `{expected}`")]
    HeaderMismatch { expected: String, found: String },
    #[error("value `{value}` is not in the domain of feature `{feature}`")]
    OutOfDomain { feature: String, value: String },
    #[error("entity needs {expected} values, got {found}")]
    Arity { expected: usize, found: usize },
    #[error("need exactly 2 class labels, observed {0:?}")]
    LabelCount(Vec<String>),
    #[error("`{0}` is not one of the dataset's class labels")]
    UnknownLabel(String),
    #[error("schema line {line}: {message}")]
    Syntax { line: usize, message: String },
}

/// One categorical feature.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Feature {
    name: String,
    label: String,
    domain: Vec<String>,
}

impl Feature {
    pub fn new<S: Into<String>>(name: S, domain: Vec<String>) -> Self {
        let name = name.into();
        let label = name.to_lowercase();
        Self {
            name,
            label,
            domain,
        }
    }

    pub fn with_label<S: Into<String>>(mut self, label: S) -> Self {
        self.label = label.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Constant naming this feature inside logic atoms.
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn domain(&self) -> &[String] {
        &self.domain
    }

    pub fn value_index(&self, value: &str) -> Option<usize> {
        self.domain.iter().position(|v| v == value)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureSchema {
    features: Vec<Feature>,
}

impl FeatureSchema {
    pub fn new(features: Vec<Feature>) -> Result<Self, SchemaError> {
        let mut names = HashSet::new();
        let mut labels = HashSet::new();
        for f in &features {
            if f.name.trim().is_empty() || f.label.trim().is_empty() {
                return Err(SchemaError::EmptyFeatureName);
            }
            if !names.insert(f.name.as_str()) {
                return Err(SchemaError::DuplicateFeature(f.name.clone()));
            }
            if !labels.insert(f.label.as_str()) {
                return Err(SchemaError::DuplicateFeature(f.label.clone()));
            }
            let mut seen = HashSet::new();
            for v in &f.domain {
                if !seen.insert(v.as_str()) {
                    return Err(SchemaError::DuplicateValue {
                        feature: f.name.clone(),
                        value: v.clone(),
                    });
                }
            }
            if f.domain.len() < 2 {
                return Err(SchemaError::DomainTooSmall {
                    feature: f.name.clone(),
                    found: f.domain.len(),
                });
            }
        }
        Ok(Self { features })
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn feature(&self, index: usize) -> &Feature {
        &self.features[index]
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Looks a feature up by display name first, then by atom label.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features
            .iter()
            .position(|f| f.name == name)
            .or_else(|| self.features.iter().position(|f| f.label == name))
    }

    /// Validates `values` against the schema and maps them to domain indices.
    pub fn encode<S: AsRef<str>>(&self, values: &[S]) -> Result<Vec<usize>, SchemaError> {
        if values.len() != self.len() {
            return Err(SchemaError::Arity {
                expected: self.len(),
                found: values.len(),
            });
        }
        values
            .iter()
            .zip(&self.features)
            .map(|(v, f)| {
                f.value_index(v.as_ref())
                    .ok_or_else(|| SchemaError::OutOfDomain {
                        feature: f.name.clone(),
                        value: v.as_ref().to_string(),
                    })
            })
            .collect()
    }

    pub fn decode(&self, indices: &[usize]) -> Vec<String> {
        indices
            .iter()
            .zip(&self.features)
            .map(|(&i, f)| f.domain[i].clone())
            .collect()
    }
}

/// An entity under classification: an identifier plus one value per feature.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Entity {
    eid: String,
    values: Vec<String>,
}

impl Entity {
    pub fn new<S: Into<String>>(
        schema: &FeatureSchema,
        eid: S,
        values: Vec<String>,
    ) -> Result<Self, SchemaError> {
        schema.encode(&values)?;
        Ok(Self {
            eid: eid.into(),
            values,
        })
    }

    pub(crate) fn from_indices(schema: &FeatureSchema, eid: &str, indices: &[usize]) -> Self {
        Self {
            eid: eid.to_string(),
            values: schema.decode(indices),
        }
    }

    pub fn eid(&self) -> &str {
        &self.eid
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn value(&self, feature: usize) -> &str {
        &self.values[feature]
    }
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}⟨{}⟩", self.eid, self.values.join(","))
    }
}

/// Parses a CLI entity literal: comma-separated values in schema order.
pub fn parse_entity(text: &str, schema: &FeatureSchema, eid: &str) -> Result<Entity, SchemaError> {
    let values: Vec<String> = text.split(',').map(|v| v.trim().to_string()).collect();
    Entity::new(schema, eid, values)
}

/// Class column name and its two labels, positive first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassSpec {
    pub name: String,
    pub labels: [String; 2],
}

/// Contents of a schema file: features plus an optional class declaration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchemaFile {
    pub schema: FeatureSchema,
    pub class: Option<ClassSpec>,
}

/// Parses a schema file.
///
/// ```text
/// % weather
/// feature Outlook: sunny, overcast, rain
/// feature Temperature as temp: high, medium, low
/// class Play: yes, no
/// ```
pub fn parse_schema(text: &str) -> Result<SchemaFile, SchemaError> {
    let mut features = Vec::new();
    let mut class = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let syntax = |message: &str| SchemaError::Syntax {
            line: line_no,
            message: message.to_string(),
        };
        let (keyword, rest) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| syntax("expected `feature` or `class` declaration"))?;
        let (head, values) = rest
            .split_once(':')
            .ok_or_else(|| syntax("missing `:` before the value list"))?;
        let values: Vec<String> = values
            .split(',')
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect();
        match keyword {
            "feature" => {
                let mut words = head.split_whitespace();
                let name = words.next().ok_or_else(|| syntax("missing feature name"))?;
                let mut feature = Feature::new(name, values);
                match (words.next(), words.next(), words.next()) {
                    (None, _, _) => {}
                    (Some("as"), Some(label), None) => feature = feature.with_label(label),
                    _ => return Err(syntax("expected `feature NAME [as LABEL]: values`")),
                }
                features.push(feature);
            }
            "class" => {
                let name = head.trim();
                if name.is_empty() {
                    return Err(syntax("missing class column name"));
                }
                let labels: [String; 2] = values
                    .clone()
                    .try_into()
                    .map_err(|_| SchemaError::LabelCount(values))?;
                if labels[0] == labels[1] {
                    return Err(SchemaError::LabelCount(labels.to_vec()));
                }
                class = Some(ClassSpec {
                    name: name.to_string(),
                    labels,
                });
            }
            other => return Err(syntax(&format!("unknown declaration `{other}`"))),
        }
    }
    Ok(SchemaFile {
        schema: FeatureSchema::new(features)?,
        class,
    })
}

pub fn load_schema<P: AsRef<Path>>(path: P) -> Result<SchemaFile, SchemaError> {
    parse_schema(&read(path.as_ref())?)
}

fn read(path: &Path) -> Result<String, SchemaError> {
    fs::read_to_string(path).map_err(|source| SchemaError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One training example: feature values in schema order plus its class label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Row {
    pub values: Vec<String>,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    schema: FeatureSchema,
    class_name: String,
    labels: [String; 2],
    rows: Vec<Row>,
}

impl Dataset {
    /// Builds a dataset from in-memory rows; `schema` is inferred when absent.
    ///
    /// Labels are ordered positive first: the majority class, ties broken by
    /// first occurrence. Use [`Dataset::with_positive`] to override.
    pub fn from_rows(
        feature_names: Vec<String>,
        class_name: String,
        rows: Vec<Row>,
        schema: Option<&FeatureSchema>,
    ) -> Result<Self, SchemaError> {
        let mut observed: Vec<(String, usize)> = Vec::new();
        for row in &rows {
            match observed.iter_mut().find(|(l, _)| *l == row.label) {
                Some((_, n)) => *n += 1,
                None => observed.push((row.label.clone(), 1)),
            }
        }
        if observed.len() != 2 {
            return Err(SchemaError::LabelCount(
                observed.into_iter().map(|(l, _)| l).collect(),
            ));
        }
        // stable sort keeps first-occurrence order on ties
        observed.sort_by_key(|o| std::cmp::Reverse(o.1));
        let labels = [observed[0].0.clone(), observed[1].0.clone()];
        let schema = match schema {
            Some(s) => {
                let expected: Vec<&str> = s.features().iter().map(Feature::name).collect();
                if expected != feature_names {
                    return Err(SchemaError::HeaderMismatch {
                        expected: expected.join(","),
                        found: feature_names.join(","),
                    });
                }
                for row in &rows {
                    s.encode(&row.values)?;
                }
                s.clone()
            }
            None => {
                let mut domains: Vec<Vec<String>> = vec![Vec::new(); feature_names.len()];
                for row in &rows {
                    for (d, v) in domains.iter_mut().zip(&row.values) {
                        if !d.contains(v) {
                            d.push(v.clone());
                        }
                    }
                }
                FeatureSchema::new(
                    feature_names
                        .into_iter()
                        .zip(domains)
                        .map(|(n, d)| Feature::new(n, d))
                        .collect(),
                )?
            }
        };

        Ok(Self {
            schema,
            class_name,
            labels,
            rows,
        })
    }

    /// Reorders the class labels so that `positive` comes first.
    pub fn with_positive(mut self, positive: &str) -> Result<Self, SchemaError> {
        if self.labels[1] == positive {
            self.labels.swap(0, 1);
        } else if self.labels[0] != positive {
            return Err(SchemaError::UnknownLabel(positive.to_string()));
        }
        Ok(self)
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn class_name(&self) -> &str {
        &self.class_name
    }

    /// The two class labels, positive first.
    pub fn labels(&self) -> &[String; 2] {
        &self.labels
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    /// Serializes back to the comma-separated file layout.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<&str> = self
            .schema
            .features()
            .iter()
            .map(Feature::name)
            .chain(std::iter::once(self.class_name.as_str()))
            .collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.values.join(","));
            out.push(',');
            out.push_str(&row.label);
            out.push('\n');
        }
        out
    }
}

/// Parses dataset text: a header of feature names then the class column,
/// followed by one comma-separated row per training example.
pub fn parse_dataset(text: &str, schema: Option<&FeatureSchema>) -> Result<Dataset, SchemaError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'%'))
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = loop {
        match records.next() {
            None => return Err(SchemaError::MissingHeader),
            Some(r) => {
                let r = r?;
                if r.iter().any(|f| !f.is_empty()) {
                    break r;
                }
            }
        }
    };
    if header.len() < 2 {
        return Err(SchemaError::MissingHeader);
    }
    let width = header.len();
    let mut names: Vec<String> = header.iter().map(str::to_string).collect();
    let class_name = names.pop().expect("header has at least two columns");

    let mut rows = Vec::new();
    for record in records {
        let record = record?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() != width {
            return Err(SchemaError::Ragged {
                line: record.position().map_or(0, |p| p.line() as usize),
                expected: width,
                found: record.len(),
            });
        }
        let mut values: Vec<String> = record.iter().map(str::to_string).collect();
        let label = values.pop().expect("record width checked");
        rows.push(Row { values, label });
    }
    Dataset::from_rows(names, class_name, rows, schema)
}

pub fn load_dataset<P: AsRef<Path>>(
    path: P,
    schema: Option<&FeatureSchema>,
) -> Result<Dataset, SchemaError> {
    parse_dataset(&read(path.as_ref())?, schema)
}
