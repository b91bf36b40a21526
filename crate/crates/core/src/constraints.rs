//! Domain knowledge that restricts the counterfactual search.
//!
//! Three kinds of constraint are supported:
//!
//! * forbidden combinations: partial assignments no intervened entity may match;
//! * functional dependencies: the value of a target feature is a function of a
//!   source feature, re-established after every intervention;
//! * immutable features: never intervened on.
//!
//! Constraint files are line oriented:
//!
//! ```text
//! % comments start with a percent sign
//! forbid Temperature=high, Wind=strong
//! depend Temperature -> Humidity: high->normal, medium->high, low->high
//! immutable Outlook
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::schema::{Entity, FeatureSchema, SchemaError};

#[derive(Debug, Error)]
pub enum ConstraintError {
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("value `{value}` is not in the domain of feature `{feature}`")]
    UnknownValue { feature: String, value: String },
    #[error("a forbidden combination needs at least one binding")]
    EmptyCombination,
    #[error("feature `{0}` is bound twice in one forbidden combination")]
    RepeatedBinding(String),
    #[error("feature `{0}` cannot depend on itself")]
    SelfDependency(String),
    #[error("dependency {source_feature} -> {target} has no image for value `{value}`")]
    PartialDependency {
        source_feature: String,
        target: String,
        value: String,
    },
    #[error("dependency {source_feature} -> {target} maps value `{value}` twice")]
    RepeatedMapping {
        source_feature: String,
        target: String,
        value: String,
    },
    #[error("feature `{0}` is the target of more than one dependency")]
    DuplicateTarget(String),
    #[error("feature `{0}` is both immutable and a dependency target")]
    ImmutableTarget(String),
    #[error("cyclic dependencies among {0:?}")]
    Cycle(Vec<String>),
    #[error("constraints line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

/// `target := map[source]`, with both features and values as indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dependency {
    pub source: usize,
    pub target: usize,
    pub map: Vec<usize>,
}

/// A validated, immutable set of constraints over one schema.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConstraintSet {
    forbidden: Vec<Vec<(usize, usize)>>,
    /// Topologically ordered: sources are settled before their targets.
    dependencies: Vec<Dependency>,
    immutable: BTreeSet<usize>,
}

impl ConstraintSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn builder(schema: &FeatureSchema) -> ConstraintBuilder<'_> {
        ConstraintBuilder {
            schema,
            forbidden: Vec::new(),
            dependencies: Vec::new(),
            immutable: BTreeSet::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.forbidden.is_empty() && self.dependencies.is_empty() && self.immutable.is_empty()
    }

    pub fn forbidden(&self) -> &[Vec<(usize, usize)>] {
        &self.forbidden
    }

    pub fn dependencies(&self) -> &[Dependency] {
        &self.dependencies
    }

    pub fn immutable(&self) -> &BTreeSet<usize> {
        &self.immutable
    }

    /// Whether the search may assign a new value to `feature` directly.
    pub fn is_free(&self, feature: usize) -> bool {
        !self.immutable.contains(&feature) && !self.dependencies.iter().any(|d| d.target == feature)
    }

    /// False iff some forbidden combination is fully matched.
    pub fn admits_values(&self, values: &[usize]) -> bool {
        !self
            .forbidden
            .iter()
            .any(|combo| combo.iter().all(|&(f, v)| values[f] == v))
    }

    pub fn admits(&self, schema: &FeatureSchema, entity: &Entity) -> Result<bool, SchemaError> {
        Ok(self.admits_values(&schema.encode(entity.values())?))
    }

    /// Overwrites every dependency target with the image of its source.
    pub fn propagate_values(&self, values: &mut [usize]) {
        for d in &self.dependencies {
            values[d.target] = d.map[values[d.source]];
        }
    }

    pub fn propagate(&self, schema: &FeatureSchema, entity: &Entity) -> Result<Entity, SchemaError> {
        let mut values = schema.encode(entity.values())?;
        self.propagate_values(&mut values);
        Ok(Entity::from_indices(schema, entity.eid(), &values))
    }
}

pub struct ConstraintBuilder<'a> {
    schema: &'a FeatureSchema,
    forbidden: Vec<Vec<(usize, usize)>>,
    dependencies: Vec<Dependency>,
    immutable: BTreeSet<usize>,
}

impl ConstraintBuilder<'_> {
    fn feature(&self, name: &str) -> Result<usize, ConstraintError> {
        self.schema
            .index_of(name)
            .ok_or_else(|| ConstraintError::UnknownFeature(name.to_string()))
    }

    fn value(&self, feature: usize, value: &str) -> Result<usize, ConstraintError> {
        let f = self.schema.feature(feature);
        f.value_index(value).ok_or_else(|| ConstraintError::UnknownValue {
            feature: f.name().to_string(),
            value: value.to_string(),
        })
    }

    pub fn forbid(mut self, bindings: &[(&str, &str)]) -> Result<Self, ConstraintError> {
        if bindings.is_empty() {
            return Err(ConstraintError::EmptyCombination);
        }
        let mut combo: Vec<(usize, usize)> = Vec::with_capacity(bindings.len());
        for (feature, value) in bindings {
            let f = self.feature(feature)?;
            if combo.iter().any(|&(g, _)| g == f) {
                return Err(ConstraintError::RepeatedBinding(feature.to_string()));
            }
            combo.push((f, self.value(f, value)?));
        }
        combo.sort_unstable();
        self.forbidden.push(combo);
        Ok(self)
    }

    pub fn depend(
        mut self,
        source: &str,
        target: &str,
        mapping: &[(&str, &str)],
    ) -> Result<Self, ConstraintError> {
        let s = self.feature(source)?;
        let t = self.feature(target)?;
        if s == t {
            return Err(ConstraintError::SelfDependency(source.to_string()));
        }
        let mut map: Vec<Option<usize>> = vec![None; self.schema.feature(s).domain().len()];
        for (from, to) in mapping {
            let from_idx = self.value(s, from)?;
            let to_idx = self.value(t, to)?;
            if map[from_idx].replace(to_idx).is_some() {
                return Err(ConstraintError::RepeatedMapping {
                    source_feature: source.to_string(),
                    target: target.to_string(),
                    value: from.to_string(),
                });
            }
        }
        let map = map
            .into_iter()
            .enumerate()
            .map(|(v, image)| {
                image.ok_or_else(|| ConstraintError::PartialDependency {
                    source_feature: source.to_string(),
                    target: target.to_string(),
                    value: self.schema.feature(s).domain()[v].clone(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if self.dependencies.iter().any(|d| d.target == t) {
            return Err(ConstraintError::DuplicateTarget(target.to_string()));
        }
        self.dependencies.push(Dependency {
            source: s,
            target: t,
            map,
        });
        Ok(self)
    }

    pub fn immutable(mut self, feature: &str) -> Result<Self, ConstraintError> {
        let f = self.feature(feature)?;
        self.immutable.insert(f);
        Ok(self)
    }

    pub fn build(self) -> Result<ConstraintSet, ConstraintError> {
        let name = |f: usize| self.schema.feature(f).name().to_string();
        if let Some(d) = self
            .dependencies
            .iter()
            .find(|d| self.immutable.contains(&d.target))
        {
            return Err(ConstraintError::ImmutableTarget(name(d.target)));
        }
        // Kahn's algorithm; among ready dependencies keep declaration order.
        let mut pending = self.dependencies;
        let mut ordered = Vec::with_capacity(pending.len());
        while !pending.is_empty() {
            let ready = pending
                .iter()
                .position(|d| !pending.iter().any(|other| other.target == d.source));
            match ready {
                Some(i) => ordered.push(pending.remove(i)),
                None => {
                    let mut names: Vec<String> = pending.iter().map(|d| name(d.source)).collect();
                    names.sort();
                    names.dedup();
                    return Err(ConstraintError::Cycle(names));
                }
            }
        }
        Ok(ConstraintSet {
            forbidden: self.forbidden,
            dependencies: ordered,
            immutable: self.immutable,
        })
    }
}

fn split_pairs<'t>(text: &'t str, sep: &str) -> Option<Vec<(&'t str, &'t str)>> {
    text.split(',')
        .map(|pair| {
            let (a, b) = pair.split_once(sep)?;
            let (a, b) = (a.trim(), b.trim());
            (!a.is_empty() && !b.is_empty()).then_some((a, b))
        })
        .collect()
}

/// Parses a constraints file against `schema`.
pub fn parse_constraints(text: &str, schema: &FeatureSchema) -> Result<ConstraintSet, ConstraintError> {
    let mut builder = ConstraintSet::builder(schema);
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let syntax = |message: &str| ConstraintError::Syntax {
            line,
            message: message.to_string(),
        };
        let (keyword, rest) = t.split_once(char::is_whitespace).unwrap_or((t, ""));
        let rest = rest.trim();
        builder = match keyword {
            "forbid" => {
                let bindings =
                    split_pairs(rest, "=").ok_or_else(|| syntax("expected `forbid F=v, G=w`"))?;
                builder.forbid(&bindings)?
            }
            "depend" => {
                let (features, mapping) = rest
                    .split_once(':')
                    .ok_or_else(|| syntax("expected `depend SRC -> TGT: v->w, ...`"))?;
                let (source, target) = features
                    .split_once("->")
                    .ok_or_else(|| syntax("expected `SRC -> TGT` before `:`"))?;
                let mapping = split_pairs(mapping, "->")
                    .ok_or_else(|| syntax("expected value mappings `v->w`"))?;
                builder.depend(source.trim(), target.trim(), &mapping)?
            }
            "immutable" => {
                if rest.is_empty() || rest.contains(char::is_whitespace) {
                    return Err(syntax("expected `immutable FEATURE`"));
                }
                builder.immutable(rest)?
            }
            other => return Err(syntax(&format!("unknown directive `{other}`"))),
        };
    }
    builder.build()
}

pub fn load_constraints<P: AsRef<Path>>(
    path: P,
    schema: &FeatureSchema,
) -> Result<ConstraintSet, ConstraintError> {
    let text = fs::read_to_string(path.as_ref()).map_err(|source| ConstraintError::Io {
        path: path.as_ref().to_path_buf(),
        source,
    })?;
    parse_constraints(&text, schema)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{parse_entity, parse_schema};
    use proptest::prelude::*;

    fn weather() -> FeatureSchema {
        parse_schema(include_str!("../data/weather.schema")).unwrap().schema
    }

    fn entity(text: &str) -> Entity {
        parse_entity(text, &weather(), "e").unwrap()
    }

    #[test]
    fn forbidden_pair_rejects_matching_entity() {
        let s = weather();
        let cs = parse_constraints("forbid Temperature=high, Wind=strong", &s).unwrap();
        assert!(!cs.admits(&s, &entity("rain,high,high,strong")).unwrap());
        assert!(cs.admits(&s, &entity("rain,high,high,weak")).unwrap());
    }

    #[test]
    fn empty_set_admits_everything() {
        let s = weather();
        assert!(ConstraintSet::empty().admits(&s, &entity("sunny,low,high,strong")).unwrap());
    }

    #[test]
    fn unmatched_binding_admits() {
        let s = weather();
        let cs = parse_constraints("forbid Outlook=sunny", &s).unwrap();
        assert!(cs.admits(&s, &entity("rain,low,high,weak")).unwrap());
    }

    #[test]
    fn dependency_overwrites_target() {
        let s = weather();
        let cs = parse_constraints(include_str!("../data/temp_determines_humidity.txt"), &s).unwrap();
        let out = cs.propagate(&s, &entity("rain,medium,normal,weak")).unwrap();
        assert_eq!(out.values(), ["rain", "medium", "high", "weak"]);
        let fixed = entity("rain,high,normal,weak");
        assert_eq!(cs.propagate(&s, &fixed).unwrap(), fixed);
        assert_eq!(ConstraintSet::empty().propagate(&s, &fixed).unwrap(), fixed);
        assert!(!cs.is_free(2));
        assert!(cs.is_free(1));
    }

    #[test]
    fn construction_errors() {
        let s = weather();
        let err = |text: &str| parse_constraints(text, &s).unwrap_err();
        assert!(matches!(err("forbid Pressure=low"), ConstraintError::UnknownFeature(_)));
        assert!(matches!(err("forbid Wind=calm"), ConstraintError::UnknownValue { .. }));
        assert!(matches!(err("forbid"), ConstraintError::Syntax { line: 1, .. }));
        assert!(matches!(
            err("depend Temperature -> Humidity: high->normal"),
            ConstraintError::PartialDependency { .. }
        ));
        assert!(matches!(
            err("depend Wind -> Wind: strong->weak, weak->strong"),
            ConstraintError::SelfDependency(_)
        ));
        assert!(matches!(
            err("depend Humidity -> Wind: high->weak, normal->strong\nimmutable Wind"),
            ConstraintError::ImmutableTarget(_)
        ));
        assert!(matches!(
            err("depend Humidity -> Wind: high->weak, normal->strong\ndepend Wind -> Humidity: weak->high, strong->normal"),
            ConstraintError::Cycle(_)
        ));
        assert!(matches!(err("prefer Wind=weak"), ConstraintError::Syntax { .. }));
    }

    #[test]
    fn dependencies_settle_in_topological_order() {
        let s = weather();
        // declared target-first: Humidity -> Wind relies on Temperature -> Humidity
        let cs = parse_constraints(
            "depend Humidity -> Wind: high->strong, normal->weak\n\
             depend Temperature -> Humidity: high->normal, medium->high, low->high",
            &s,
        )
        .unwrap();
        assert_eq!(cs.dependencies()[0].source, 1);
        let out = cs.propagate(&s, &entity("rain,low,normal,weak")).unwrap();
        assert_eq!(out.values(), ["rain", "low", "high", "strong"]);
    }

    proptest! {
        #[test]
        fn propagate_is_idempotent(o in 0usize..3, t in 0usize..3, h in 0usize..2, w in 0usize..2,
                                   img in proptest::collection::vec(0usize..2, 3),
                                   wind_img in proptest::collection::vec(0usize..2, 2)) {
            let s = weather();
            let h_vals = ["high", "normal"];
            let w_vals = ["strong", "weak"];
            let t_vals = ["high", "medium", "low"];
            let cs = ConstraintSet::builder(&s)
                .depend("Humidity", "Wind", &[("high", w_vals[wind_img[0]]), ("normal", w_vals[wind_img[1]])]).unwrap()
                .depend("Temperature", "Humidity", &[
                    (t_vals[0], h_vals[img[0]]), (t_vals[1], h_vals[img[1]]), (t_vals[2], h_vals[img[2]]),
                ]).unwrap()
                .build().unwrap();
            let mut once = vec![o, t, h, w];
            cs.propagate_values(&mut once);
            let mut twice = once.clone();
            cs.propagate_values(&mut twice);
            prop_assert_eq!(once, twice);
        }
    }
}
