//! Counterfactual search, explanations and responsibility scores.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use crate::constraints::ConstraintSet;
use crate::naive_bayes::{Classifier, ModelError};
use crate::schema::{Entity, FeatureSchema};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EngineOptions {
    /// Only search from a positive original, and let forbidden combinations
    /// veto the original entity as well.
    pub strict_paper: bool,
    /// Let a feature be changed again after its first intervention. Off by
    /// default: each feature moves at most once, away from its original value.
    pub allow_reintervention: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Intervention {
    pub feature: usize,
    pub from: String,
    pub to: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CounterfactualVersion {
    pub eid: String,
    pub final_entity: Entity,
    /// Feature indices where `final_entity` differs from the original, ascending.
    pub changed: Vec<usize>,
    pub path: Vec<Intervention>,
    /// Entity after each step of `path`, dependencies applied; the last is `final_entity`.
    pub states: Vec<Entity>,
    pub label: String,
}

impl CounterfactualVersion {
    pub fn changed_labels(&self, schema: &FeatureSchema) -> Vec<String> {
        let mut labels: Vec<String> = self
            .changed
            .iter()
            .map(|&f| schema.feature(f).label().to_string())
            .collect();
        labels.sort();
        labels
    }
}

/// `ent(e,rain,high,high,weak,s)`
pub fn format_version(version: &CounterfactualVersion) -> String {
    format!(
        "ent({},{},s)",
        version.eid,
        version.final_entity.values().join(",")
    )
}

/// Everything learned from one search: the original and its label plus the versions.
#[derive(Clone, Debug)]
pub struct Enumeration {
    pub original: Entity,
    pub original_label: String,
    pub versions: Vec<CounterfactualVersion>,
}

/// Breadth-first search over single-feature interventions. Each version keeps the
/// first shortest path found when features and values are tried in schema order.
pub fn enumerate_counterfactuals(
    classifier: &dyn Classifier,
    entity: &Entity,
    constraints: &ConstraintSet,
    options: &EngineOptions,
) -> Result<Enumeration, ModelError> {
    let schema = classifier.schema();
    let labels = classifier.labels();
    let origin = schema.encode(entity.values())?;
    let origin_label = classifier.label_of(&origin)?;
    let mut out = Enumeration {
        original: entity.clone(),
        original_label: labels[origin_label].clone(),
        versions: Vec::new(),
    };
    if options.strict_paper && (origin_label != 0 || !constraints.admits_values(&origin)) {
        return Ok(out);
    }

    struct Node {
        values: Vec<usize>,
        path: Vec<(usize, usize, usize)>,
        states: Vec<Vec<usize>>,
    }

    let free: Vec<usize> = (0..schema.len()).filter(|&f| constraints.is_free(f)).collect();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    seen.insert(origin.clone());
    let mut frontier = vec![Node {
        values: origin.clone(),
        path: Vec::new(),
        states: Vec::new(),
    }];
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for node in &frontier {
            for &f in &free {
                if !options.allow_reintervention && node.values[f] != origin[f] {
                    continue;
                }
                for v in 0..schema.feature(f).domain().len() {
                    if v == node.values[f] {
                        continue;
                    }
                    let mut succ = node.values.clone();
                    succ[f] = v;
                    constraints.propagate_values(&mut succ);
                    if !constraints.admits_values(&succ) || !seen.insert(succ.clone()) {
                        continue;
                    }
                    let mut path = node.path.clone();
                    path.push((f, node.values[f], v));
                    let mut states = node.states.clone();
                    states.push(succ.clone());
                    let label = classifier.label_of(&succ)?;
                    if label == origin_label {
                        next.push(Node {
                            values: succ,
                            path,
                            states,
                        });
                    } else {
                        out.versions.push(build_version(
                            schema,
                            entity.eid(),
                            &origin,
                            &succ,
                            &path,
                            &states,
                            &labels[label],
                        ));
                    }
                }
            }
        }
        frontier = next;
    }
    out.versions.sort_by(|a, b| {
        (a.changed.len(), a.final_entity.values()).cmp(&(b.changed.len(), b.final_entity.values()))
    });
    Ok(out)
}

fn build_version(
    schema: &FeatureSchema,
    eid: &str,
    origin: &[usize],
    last: &[usize],
    path: &[(usize, usize, usize)],
    states: &[Vec<usize>],
    label: &str,
) -> CounterfactualVersion {
    let domain = |f: usize, v: usize| schema.feature(f).domain()[v].clone();
    CounterfactualVersion {
        eid: eid.to_string(),
        final_entity: Entity::from_indices(schema, eid, last),
        changed: (0..origin.len()).filter(|&f| origin[f] != last[f]).collect(),
        path: path
            .iter()
            .map(|&(f, from, to)| Intervention {
                feature: f,
                from: domain(f, from),
                to: domain(f, to),
            })
            .collect(),
        states: states
            .iter()
            .map(|s| Entity::from_indices(schema, eid, s))
            .collect(),
        label: label.to_string(),
    }
}

/// The versions whose changed set is as small as any.
pub fn min_change_versions(versions: &[CounterfactualVersion]) -> Vec<CounterfactualVersion> {
    let Some(least) = versions.iter().map(|v| v.changed.len()).min() else {
        return Vec::new();
    };
    versions
        .iter()
        .filter(|v| v.changed.len() == least)
        .cloned()
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Explanation {
    pub eid: String,
    pub feature: usize,
    /// Atom label of the cause feature, e.g. `humidity`.
    pub cause_label: String,
    /// The cause's value in the original entity.
    pub cause_value: String,
    /// Atom labels of the other changed features, sorted.
    pub contingency: Vec<String>,
    pub inv_resp: usize,
    /// Final entity of the first version producing this explanation.
    pub witness: Entity,
}

/// Renders a set of labels as `{a,b}`.
pub fn format_set(items: &[String]) -> String {
    format!("{{{}}}", items.join(","))
}

/// `e, humidity, 1, {}`
pub fn format_explanation(x: &Explanation) -> String {
    format!(
        "{}, {}, {}, {}",
        x.eid,
        x.cause_label,
        x.inv_resp,
        format_set(&x.contingency)
    )
}

/// One explanation per (version, changed feature), deduplicated on
/// (cause, contingency). Ordered by feature, then contingency size and content.
pub fn explanations_of(
    schema: &FeatureSchema,
    versions: &[CounterfactualVersion],
    original: &Entity,
) -> Vec<Explanation> {
    let mut found: BTreeMap<(usize, usize, Vec<String>), Explanation> = BTreeMap::new();
    for version in versions {
        let labels: Vec<(usize, String)> = version
            .changed
            .iter()
            .map(|&f| (f, schema.feature(f).label().to_string()))
            .collect();
        for (f, label) in &labels {
            let mut contingency: Vec<String> = labels
                .iter()
                .filter(|(g, _)| g != f)
                .map(|(_, l)| l.clone())
                .collect();
            contingency.sort();
            let key = (*f, contingency.len(), contingency.clone());
            found.entry(key).or_insert_with(|| Explanation {
                eid: version.eid.clone(),
                feature: *f,
                cause_label: label.clone(),
                cause_value: original.value(*f).to_string(),
                inv_resp: contingency.len() + 1,
                contingency,
                witness: version.final_entity.clone(),
            });
        }
    }
    found.into_values().collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Responsibility {
    pub feature: usize,
    pub label: String,
    pub x_resp: BigRational,
    /// Minimum inverse responsibility, when the feature is a cause at all.
    pub inv_resp: Option<usize>,
    pub witness: Option<Entity>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResponsibilityReport {
    pub eid: String,
    pub entries: Vec<Responsibility>,
}

impl ResponsibilityReport {
    pub fn get(&self, feature: usize) -> &Responsibility {
        &self.entries[feature]
    }
}

impl fmt::Display for ResponsibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.entries {
            write!(f, "xResp({},{},{})", self.eid, r.label, r.x_resp)?;
            if let Some(w) = &r.witness {
                write!(f, "  % ent({},{},s)", w.eid(), w.values().join(","))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Per feature, 1 / min inv_resp over its explanations, or 0 without one.
pub fn xresp(explanations: &[Explanation], schema: &FeatureSchema, eid: &str) -> ResponsibilityReport {
    let entries = (0..schema.len())
        .map(|f| {
            let best = explanations
                .iter()
                .filter(|x| x.feature == f)
                .min_by_key(|x| x.inv_resp);
            Responsibility {
                feature: f,
                label: schema.feature(f).label().to_string(),
                x_resp: best.map_or_else(BigRational::zero, |x| {
                    BigRational::new(BigInt::from(1), BigInt::from(x.inv_resp))
                }),
                inv_resp: best.map(|x| x.inv_resp),
                witness: best.map(|x| x.witness.clone()),
            }
        })
        .collect();
    ResponsibilityReport {
        eid: eid.to_string(),
        entries,
    }
}

/// Brute-force check of the actual-cause condition for `feature`: some
/// contingency Y (not containing the feature) with new values Y' keeps the
/// label when applied alone, while changing the feature as well flips it.
/// Returns whether it holds and the smallest |Y| that works.
pub fn strict_actual_cause(
    classifier: &dyn Classifier,
    entity: &Entity,
    feature: usize,
) -> Result<(bool, Option<usize>), ModelError> {
    let schema = classifier.schema();
    let origin = schema.encode(entity.values())?;
    let label = classifier.label_of(&origin)?;
    let others: Vec<usize> = (0..schema.len()).filter(|&f| f != feature).collect();
    let mut subsets: Vec<Vec<usize>> = (0u32..1 << others.len())
        .map(|mask| {
            others
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, &f)| f)
                .collect()
        })
        .collect();
    subsets.sort_by_key(Vec::len);
    for ys in subsets {
        if contingency_works(classifier, &origin, label, feature, &ys)? {
            return Ok((true, Some(ys.len())));
        }
    }
    Ok((false, None))
}

fn contingency_works(
    classifier: &dyn Classifier,
    origin: &[usize],
    label: usize,
    feature: usize,
    ys: &[usize],
) -> Result<bool, ModelError> {
    let schema = classifier.schema();
    // odometer over the alternative values of every feature in ys
    let alternatives: Vec<Vec<usize>> = ys
        .iter()
        .map(|&f| {
            (0..schema.feature(f).domain().len())
                .filter(|&v| v != origin[f])
                .collect()
        })
        .collect();
    let mut digits = vec![0usize; ys.len()];
    loop {
        let mut changed = origin.to_vec();
        for (i, &f) in ys.iter().enumerate() {
            changed[f] = alternatives[i][digits[i]];
        }
        if classifier.label_of(&changed)? == label {
            for x in 0..schema.feature(feature).domain().len() {
                if x == origin[feature] {
                    continue;
                }
                let mut both = changed.clone();
                both[feature] = x;
                if classifier.label_of(&both)? != label {
                    return Ok(true);
                }
            }
        }
        let mut i = 0;
        loop {
            if i == digits.len() {
                return Ok(false);
            }
            digits[i] += 1;
            if digits[i] < alternatives[i].len() {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}
