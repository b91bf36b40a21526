//! Naive-Bayes classifier trained from frequencies.
//!
//! Two representations live side by side: [`NaiveBayesModel`] keeps every
//! probability as an exact rational, and [`PercentModel`] keeps integer
//! percentages and classifies with the staged integer arithmetic used by the
//! logic program (multiply, then integer-divide by 10, feature by feature).
//! Keeping both makes rounding artifacts observable.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use crate::schema::{parse_schema, ClassSpec, Dataset, Entity, FeatureSchema, SchemaError};

/// Default ceiling for staged arithmetic, matching `#maxint = 100000000`.
pub const DEFAULT_MAXINT: u64 = 100_000_000;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("class label `{0}` has no training rows")]
    EmptyClass(String),
    #[error("staged product {value} exceeds the integer ceiling {ceiling}")]
    Overflow { value: u64, ceiling: u64 },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("model line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("model file is missing {0}")]
    Missing(String),
    #[error("distribution {0} does not sum to 1")]
    NotNormalized(String),
}

/// Anything that assigns one of two labels to an encoded entity.
pub trait Classifier {
    fn schema(&self) -> &FeatureSchema;

    /// The two class labels, positive first.
    fn labels(&self) -> &[String; 2];

    /// Label index (0 = positive) for an entity given as domain indices.
    fn label_of(&self, values: &[usize]) -> Result<usize, ModelError>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct NaiveBayesModel {
    schema: FeatureSchema,
    class_name: String,
    labels: [String; 2],
    prior: [BigRational; 2],
    /// Indexed `[feature][value][label]`.
    conditional: Vec<Vec<[BigRational; 2]>>,
}

fn ratio(num: usize, den: usize) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Estimates the prior and per-feature conditionals from frequencies.
pub fn train(dataset: &Dataset) -> Result<NaiveBayesModel, ModelError> {
    let schema = dataset.schema();
    let labels = dataset.labels().clone();
    let mut class_rows = [0usize; 2];
    let mut counts: Vec<Vec<[usize; 2]>> = schema
        .features()
        .iter()
        .map(|f| vec![[0; 2]; f.domain().len()])
        .collect();
    for row in dataset.rows() {
        let l = labels
            .iter()
            .position(|l| *l == row.label)
            .ok_or_else(|| SchemaError::UnknownLabel(row.label.clone()))?;
        class_rows[l] += 1;
        for (f, v) in schema.encode(&row.values)?.into_iter().enumerate() {
            counts[f][v][l] += 1;
        }
    }
    for (l, &n) in class_rows.iter().enumerate() {
        if n == 0 {
            return Err(ModelError::EmptyClass(labels[l].clone()));
        }
    }
    let total = class_rows[0] + class_rows[1];
    let conditional = counts
        .into_iter()
        .map(|per_value| {
            per_value
                .into_iter()
                .map(|c| [ratio(c[0], class_rows[0]), ratio(c[1], class_rows[1])])
                .collect()
        })
        .collect();
    Ok(NaiveBayesModel {
        schema: schema.clone(),
        class_name: dataset.class_name().to_string(),
        labels,
        prior: [ratio(class_rows[0], total), ratio(class_rows[1], total)],
        conditional,
    })
}

/// Outcome of exact classification.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactOutcome {
    pub label: String,
    /// Prior times the product of conditionals, per label (positive first).
    pub numerators: [BigRational; 2],
}

impl NaiveBayesModel {
    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn class_name(&self) -> &str {
        &self.class_name
    }

    pub fn labels(&self) -> &[String; 2] {
        &self.labels
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn prior(&self, label: &str) -> Option<&BigRational> {
        self.label_index(label).map(|l| &self.prior[l])
    }

    pub fn conditional(&self, feature: &str, value: &str, label: &str) -> Option<&BigRational> {
        let f = self.schema.index_of(feature)?;
        let v = self.schema.feature(f).value_index(value)?;
        let l = self.label_index(label)?;
        Some(&self.conditional[f][v][l])
    }

    fn numerators(&self, values: &[usize]) -> [BigRational; 2] {
        [0, 1].map(|l| {
            values
                .iter()
                .enumerate()
                .fold(self.prior[l].clone(), |acc, (f, &v)| acc * &self.conditional[f][v][l])
        })
    }

    /// Serializes to the line-oriented model format read by [`parse_model`].
    pub fn to_text(&self) -> String {
        let mut out = String::from("% naive-Bayes model\n");
        for f in self.schema.features() {
            out.push_str("feature ");
            out.push_str(f.name());
            if f.label() != f.name().to_lowercase() {
                write!(out, " as {}", f.label()).unwrap();
            }
            writeln!(out, ": {}", f.domain().join(", ")).unwrap();
        }
        writeln!(out, "class {}: {}", self.class_name, self.labels.join(", ")).unwrap();
        for (l, p) in self.labels.iter().zip(&self.prior) {
            writeln!(out, "prior {},{}/{}", l, p.numer(), p.denom()).unwrap();
        }
        for (f, feature) in self.schema.features().iter().enumerate() {
            for (v, value) in feature.domain().iter().enumerate() {
                for (l, label) in self.labels.iter().enumerate() {
                    let p = &self.conditional[f][v][l];
                    writeln!(
                        out,
                        "{},{},{},{}/{}",
                        feature.name(),
                        value,
                        label,
                        p.numer(),
                        p.denom()
                    )
                    .unwrap();
                }
            }
        }
        out
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<(), ModelError> {
        fs::write(path.as_ref(), self.to_text()).map_err(|source| ModelError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        })
    }
}

impl Classifier for NaiveBayesModel {
    fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    fn labels(&self) -> &[String; 2] {
        &self.labels
    }

    fn label_of(&self, values: &[usize]) -> Result<usize, ModelError> {
        let [pos, neg] = self.numerators(values);
        Ok(if pos >= neg { 0 } else { 1 })
    }
}

/// Compares the naive-Bayes numerators; ties go to the positive label.
pub fn classify_exact(model: &NaiveBayesModel, entity: &Entity) -> Result<ExactOutcome, ModelError> {
    let values = model.schema.encode(entity.values())?;
    let numerators = model.numerators(&values);
    let label = if numerators[0] >= numerators[1] { 0 } else { 1 };
    Ok(ExactOutcome {
        label: model.labels[label].clone(),
        numerators,
    })
}

fn parse_ratio(text: &str) -> Option<BigRational> {
    let (n, d) = text.split_once('/')?;
    let n: BigInt = n.trim().parse().ok()?;
    let d: BigInt = d.trim().parse().ok()?;
    if d.is_zero() || n < BigInt::zero() {
        return None;
    }
    Some(BigRational::new(n, d))
}

/// Reads a model written by [`NaiveBayesModel::to_text`].
pub fn parse_model(text: &str) -> Result<NaiveBayesModel, ModelError> {
    let mut header = String::new();
    let mut body = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with("feature ") || t.starts_with("class ") {
            header.push_str(t);
        } else if !t.is_empty() && !t.starts_with('%') {
            body.push((i + 1, t));
        }
        header.push('\n');
    }
    let file = parse_schema(&header)?;
    let schema = file.schema;
    let ClassSpec { name: class_name, labels } =
        file.class.ok_or_else(|| ModelError::Missing("a `class` declaration".into()))?;

    let mut prior: [Option<BigRational>; 2] = [None, None];
    let mut cond: HashMap<(usize, usize, usize), BigRational> = HashMap::new();
    for (line, t) in body {
        let format = |message: String| ModelError::Format { line, message };
        let label_idx = |l: &str| {
            labels
                .iter()
                .position(|x| x == l)
                .ok_or_else(|| format(format!("unknown class label `{l}`")))
        };
        if let Some(rest) = t.strip_prefix("prior ") {
            let (l, p) = rest
                .split_once(',')
                .ok_or_else(|| format("expected `prior LABEL,N/D`".into()))?;
            let l = label_idx(l.trim())?;
            let p = parse_ratio(p).ok_or_else(|| format(format!("bad rational `{p}`")))?;
            if prior[l].replace(p).is_some() {
                return Err(format("prior given twice".into()));
            }
            continue;
        }
        let fields: Vec<&str> = t.split(',').map(str::trim).collect();
        let [feature, value, label, p] = fields[..] else {
            return Err(format("expected `feature,value,label,N/D`".into()));
        };
        let f = schema
            .index_of(feature)
            .ok_or_else(|| format(format!("unknown feature `{feature}`")))?;
        let v = schema.feature(f).value_index(value).ok_or_else(|| {
            format(format!("value `{value}` is not in the domain of `{feature}`"))
        })?;
        let l = label_idx(label)?;
        let p = parse_ratio(p).ok_or_else(|| format(format!("bad rational `{p}`")))?;
        if cond.insert((f, v, l), p).is_some() {
            return Err(format("conditional given twice".into()));
        }
    }

    let prior = [0, 1].map(|l| prior[l].take());
    let [Some(p0), Some(p1)] = prior else {
        return Err(ModelError::Missing("a prior for each label".into()));
    };
    if &p0 + &p1 != BigRational::one() {
        return Err(ModelError::NotNormalized("prior".into()));
    }
    let mut conditional = Vec::with_capacity(schema.len());
    for (f, feature) in schema.features().iter().enumerate() {
        let mut per_value = Vec::with_capacity(feature.domain().len());
        for (v, value) in feature.domain().iter().enumerate() {
            let get = |l: usize| {
                cond.get(&(f, v, l)).cloned().ok_or_else(|| {
                    ModelError::Missing(format!(
                        "P({}={}|{})",
                        feature.name(),
                        value,
                        labels[l]
                    ))
                })
            };
            per_value.push([get(0)?, get(1)?]);
        }
        for (l, label) in labels.iter().enumerate() {
            let sum: BigRational = per_value.iter().map(|p| p[l].clone()).sum();
            if sum != BigRational::one() {
                return Err(ModelError::NotNormalized(format!("{} | {}", feature.name(), label)));
            }
        }
        conditional.push(per_value);
    }
    Ok(NaiveBayesModel {
        schema,
        class_name,
        labels,
        prior: [p0, p1],
        conditional,
    })
}

pub fn load_model<P: AsRef<Path>>(path: P) -> Result<NaiveBayesModel, ModelError> {
    let text = fs::read_to_string(path.as_ref()).map_err(|source| ModelError::Io {
        path: path.as_ref().to_path_buf(),
        source,
    })?;
    parse_model(&text)
}

/// Converts a probability distribution to integer percentages summing to
/// 100: floors of `p * 100`, then one extra unit to each of the entries
/// with the largest fractional parts, ties broken by position.
pub fn largest_remainder(distribution: &[BigRational]) -> Vec<u32> {
    let hundred = BigRational::from_integer(BigInt::from(100));
    let scaled: Vec<BigRational> = distribution.iter().map(|p| p * &hundred).collect();
    let mut shares: Vec<u32> = scaled
        .iter()
        .map(|s| s.floor().to_integer().to_u32().expect("probability in [0,1]"))
        .collect();
    let assigned: u32 = shares.iter().sum();
    let missing = 100u32.saturating_sub(assigned) as usize;
    let mut order: Vec<usize> = (0..scaled.len()).collect();
    order.sort_by(|&a, &b| scaled[b].fract().cmp(&scaled[a].fract()));
    for &i in order.iter().take(missing) {
        shares[i] += 1;
    }
    shares
}

/// The classifier with probabilities as integer percentages.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PercentModel {
    schema: FeatureSchema,
    labels: [String; 2],
    prior: [u32; 2],
    /// Indexed `[feature][value][label]`.
    conditional: Vec<Vec<[u32; 2]>>,
    ceiling: u64,
}

pub fn to_percent(model: &NaiveBayesModel) -> PercentModel {
    let prior = largest_remainder(&model.prior);
    let conditional = model
        .conditional
        .iter()
        .map(|per_value| {
            let by_label = [0, 1].map(|l| {
                let dist: Vec<BigRational> = per_value.iter().map(|p| p[l].clone()).collect();
                largest_remainder(&dist)
            });
            (0..per_value.len())
                .map(|v| [by_label[0][v], by_label[1][v]])
                .collect()
        })
        .collect();
    PercentModel {
        schema: model.schema.clone(),
        labels: model.labels.clone(),
        prior: [prior[0], prior[1]],
        conditional,
        ceiling: DEFAULT_MAXINT,
    }
}

/// Outcome of staged integer classification.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StagedOutcome {
    pub label: String,
    /// Staged numerators per label, positive first (`pb_num` values).
    pub numerators: [u64; 2],
}

impl PercentModel {
    /// Builds a percent model from raw tables, checking that every
    /// distribution sums to 100.
    pub fn from_parts(
        schema: FeatureSchema,
        labels: [String; 2],
        prior: [u32; 2],
        conditional: Vec<Vec<[u32; 2]>>,
    ) -> Result<Self, ModelError> {
        if prior[0] + prior[1] != 100 {
            return Err(ModelError::NotNormalized("prior".into()));
        }
        if conditional.len() != schema.len() {
            return Err(ModelError::Missing("a conditional table per feature".into()));
        }
        for (feature, table) in schema.features().iter().zip(&conditional) {
            if table.len() != feature.domain().len() {
                return Err(ModelError::Missing(format!(
                    "a conditional for every value of {}",
                    feature.name()
                )));
            }
            for (l, label) in labels.iter().enumerate() {
                if table.iter().map(|p| p[l]).sum::<u32>() != 100 {
                    return Err(ModelError::NotNormalized(format!(
                        "{} | {}",
                        feature.name(),
                        label
                    )));
                }
            }
        }
        Ok(Self {
            schema,
            labels,
            prior,
            conditional,
            ceiling: DEFAULT_MAXINT,
        })
    }

    pub fn with_ceiling(mut self, ceiling: u64) -> Self {
        self.ceiling = ceiling;
        self
    }

    pub fn ceiling(&self) -> u64 {
        self.ceiling
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn labels(&self) -> &[String; 2] {
        &self.labels
    }

    /// Prior percentages, positive label first.
    pub fn prior(&self) -> [u32; 2] {
        self.prior
    }

    /// Conditional percentages `[value][label]` for one feature.
    pub fn table(&self, feature: usize) -> &[[u32; 2]] {
        &self.conditional[feature]
    }

    pub fn conditional(&self, feature: &str, value: &str, label: &str) -> Option<u32> {
        let f = self.schema.index_of(feature)?;
        let v = self.schema.feature(f).value_index(value)?;
        let l = self.labels.iter().position(|x| x == label)?;
        Some(self.conditional[f][v][l])
    }

    fn checked(&self, value: u64) -> Result<u64, ModelError> {
        if value > self.ceiling {
            Err(ModelError::Overflow {
                value,
                ceiling: self.ceiling,
            })
        } else {
            Ok(value)
        }
    }

    /// Staged numerator for one label: fold the conditionals in schema
    /// order, multiplying and then integer-dividing by 10 at each step,
    /// and finish with the prior.
    pub fn staged_numerator(&self, values: &[usize], label: usize) -> Result<u64, ModelError> {
        let mut acc = u64::from(self.conditional[0][values[0]][label]);
        for (f, &v) in values.iter().enumerate().skip(1) {
            acc = self.checked(acc * u64::from(self.conditional[f][v][label]))? / 10;
        }
        Ok(self.checked(acc * u64::from(self.prior[label]))? / 10)
    }

    pub fn staged_numerators(&self, values: &[usize]) -> Result<[u64; 2], ModelError> {
        Ok([self.staged_numerator(values, 0)?, self.staged_numerator(values, 1)?])
    }
}

impl Classifier for PercentModel {
    fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    fn labels(&self) -> &[String; 2] {
        &self.labels
    }

    fn label_of(&self, values: &[usize]) -> Result<usize, ModelError> {
        let [pos, neg] = self.staged_numerators(values)?;
        Ok(if pos >= neg { 0 } else { 1 })
    }
}

/// Classifies with staged integer arithmetic; `pos >= neg` yields the
/// positive label.
pub fn classify_staged(model: &PercentModel, entity: &Entity) -> Result<StagedOutcome, ModelError> {
    let values = model.schema.encode(entity.values())?;
    let numerators = model.staged_numerators(&values)?;
    let label = if numerators[0] >= numerators[1] { 0 } else { 1 };
    Ok(StagedOutcome {
        label: model.labels[label].clone(),
        numerators,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{parse_dataset, parse_entity, parse_schema, Feature, Row};

    const WEATHER: &str = include_str!("../data/weather.csv");
    const WEATHER_SCHEMA: &str = include_str!("../data/weather.schema");

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn weather() -> NaiveBayesModel {
        let schema = parse_schema(WEATHER_SCHEMA).unwrap().schema;
        train(&parse_dataset(WEATHER, Some(&schema)).unwrap()).unwrap()
    }

    #[test]
    fn weather_priors_and_conditionals() {
        let m = weather();
        assert_eq!(m.prior("yes"), Some(&r(9, 14)));
        assert_eq!(m.conditional("Outlook", "sunny", "yes"), Some(&r(2, 9)));
        assert_eq!(m.conditional("Humidity", "normal", "no"), Some(&r(1, 5)));
        assert_eq!(m.conditional("Outlook", "overcast", "no"), Some(&r(0, 1)));
    }

    #[test]
    fn two_identical_rows_give_certain_conditionals() {
        let ds = Dataset::from_rows(
            vec!["A".into(), "B".into()],
            "C".into(),
            vec![
                Row { values: vec!["x".into(), "u".into()], label: "p".into() },
                Row { values: vec!["x".into(), "u".into()], label: "n".into() },
            ],
            Some(
                &FeatureSchema::new(vec![
                    Feature::new("A", vec!["x".into(), "y".into()]),
                    Feature::new("B", vec!["u".into(), "w".into()]),
                ])
                .unwrap(),
            ),
        )
        .unwrap();
        let m = train(&ds).unwrap();
        assert_eq!(m.prior("p"), Some(&r(1, 2)));
        assert_eq!(m.prior("n"), Some(&r(1, 2)));
        for l in ["p", "n"] {
            assert_eq!(m.conditional("A", "x", l), Some(&r(1, 1)));
            assert_eq!(m.conditional("B", "u", l), Some(&r(1, 1)));
        }
    }

    #[test]
    fn largest_remainder_examples() {
        assert_eq!(largest_remainder(&[r(2, 9), r(4, 9), r(3, 9)]), [22, 45, 33]);
        assert_eq!(largest_remainder(&[r(9, 14), r(5, 14)]), [64, 36]);
        assert_eq!(largest_remainder(&[r(1, 2), r(1, 2)]), [50, 50]);
        // three-way tie on the fractional part goes to the earliest entries
        assert_eq!(largest_remainder(&[r(1, 3), r(1, 3), r(1, 3)]), [34, 33, 33]);
    }

    #[test]
    fn exact_classification_of_running_example() {
        let m = weather();
        let e = parse_entity("rain,high,normal,weak", m.schema(), "e").unwrap();
        let out = classify_exact(&m, &e).unwrap();
        assert_eq!(out.numerators, [r(4, 189), r(4, 875)]);
        assert_eq!(out.label, "yes");
        let e = parse_entity("rain,high,high,weak", m.schema(), "e").unwrap();
        assert_eq!(classify_exact(&m, &e).unwrap().label, "no");
        let e = parse_entity("overcast,high,high,strong", m.schema(), "e").unwrap();
        let out = classify_exact(&m, &e).unwrap();
        assert!(out.numerators[1].is_zero());
        assert_eq!(out.label, "yes");
    }

    #[test]
    fn staged_classification_examples() {
        let p = to_percent(&weather());
        let cases = [
            ("rain,high,normal,weak", [20665, 4608], "yes"),
            ("rain,high,high,weak", [10156, 18432], "no"),
            ("rain,medium,high,strong", [10304, 27648], "no"),
        ];
        for (text, nums, label) in cases {
            let e = parse_entity(text, p.schema(), "e").unwrap();
            let out = classify_staged(&p, &e).unwrap();
            assert_eq!(out.numerators, nums, "{text}");
            assert_eq!(out.label, label, "{text}");
        }
    }

    #[test]
    fn staged_ceiling_is_enforced() {
        let p = to_percent(&weather()).with_ceiling(1000);
        let e = parse_entity("rain,high,normal,weak", p.schema(), "e").unwrap();
        assert!(matches!(
            classify_staged(&p, &e),
            Err(ModelError::Overflow { ceiling: 1000, .. })
        ));
    }

    #[test]
    fn percent_tables_sum_to_100() {
        let p = to_percent(&weather());
        assert_eq!(p.prior(), [64, 36]);
        for f in 0..p.schema().len() {
            for l in 0..2 {
                assert_eq!(p.table(f).iter().map(|v| v[l]).sum::<u32>(), 100);
            }
        }
        assert_eq!(p.conditional("Outlook", "overcast", "yes"), Some(45));
        assert_eq!(p.conditional("Humidity", "normal", "yes"), Some(67));
    }

    #[test]
    fn model_text_round_trip() {
        let m = weather();
        let text = m.to_text();
        assert!(text.contains("prior yes,9/14\n"));
        assert!(text.contains("Outlook,sunny,yes,2/9\n"));
        assert!(text.contains("feature Temperature as temp: high, medium, low\n"));
        assert_eq!(parse_model(&text).unwrap(), m);
    }

    #[test]
    fn model_text_errors() {
        let text = weather().to_text();
        let missing = text.replace("Outlook,sunny,yes,2/9\n", "");
        assert!(matches!(parse_model(&missing), Err(ModelError::Missing(_))));
        let skewed = text.replace("Outlook,sunny,yes,2/9", "Outlook,sunny,yes,3/9");
        assert!(matches!(parse_model(&skewed), Err(ModelError::NotNormalized(_))));
        let garbage = format!("{text}what is this\n");
        assert!(matches!(parse_model(&garbage), Err(ModelError::Format { .. })));
    }
}
