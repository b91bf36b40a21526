#![allow(dead_code)]

use std::collections::BTreeSet;

use cipx::asp::GroundProgram;
use cipx::naive_bayes::{to_percent, train, NaiveBayesModel, PercentModel};
use cipx::schema::{parse_dataset, parse_entity, parse_schema, Dataset, Entity, Row};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const WEATHER_CSV: &str = include_str!("../../data/weather.csv");
pub const WEATHER_SCHEMA: &str = include_str!("../../data/weather.schema");
pub const REFERENCE: &str = include_str!("../data/weather_reference.lp");
pub const REFERENCE_WEAK: &str = include_str!("../data/weather_reference_weak.lp");

pub struct Weather {
    pub data: Dataset,
    pub exact: NaiveBayesModel,
    pub percent: PercentModel,
    pub e: Entity,
}

pub fn weather() -> Weather {
    let schema = parse_schema(WEATHER_SCHEMA).unwrap();
    let data = parse_dataset(WEATHER_CSV, Some(&schema.schema)).unwrap();
    let exact = train(&data).unwrap();
    let percent = to_percent(&exact);
    let e = parse_entity("rain,high,normal,weak", percent.schema(), "e").unwrap();
    Weather {
        data,
        exact,
        percent,
        e,
    }
}

/// Program tokens with comments and layout removed.
pub fn tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.split('%').next().unwrap_or("");
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if c.is_whitespace() {
                i += 1;
            } else if c.is_alphanumeric() || c == '_' || c == '#' {
                let start = i;
                i += 1;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(chars[start..i].iter().collect());
            } else {
                let two: String = chars[i..].iter().take(2).collect();
                if [":-", ":~", "!=", ">=", "<="].contains(&two.as_str()) {
                    out.push(two);
                    i += 2;
                } else {
                    out.push(c.to_string());
                    i += 1;
                }
            }
        }
    }
    out
}

/// The reference listing with its three known token slips repaired; each
/// replacement must apply exactly once.
pub fn repaired_reference() -> String {
    let mut text = REFERENCE.to_string();
    for (from, to) in [
        ("not tmpCont(U)", "not tmpCont(E,U)"),
        ("U != W,  not diffchoice_h(O,T,H,W,U)", "U != W,  not diffchoice_w(O,T,H,W,U)"),
        ("diffchoice_w(O,T,H,W,U) :- chosen_h(", "diffchoice_w(O,T,H,W,U) :- chosen_w("),
    ] {
        assert_eq!(text.matches(from).count(), 1, "expected one `{from}`");
        text = text.replacen(from, to, 1);
    }
    text
}

/// Stable models straight from the definition, on string sets: S is stable
/// when it satisfies the reduct and no proper subset does. Hard constraints
/// stay in the reduct; weak constraints keep the least-violating sets.
pub fn oracle_stable_models(program: &GroundProgram) -> Vec<BTreeSet<String>> {
    let atoms = program.atoms().to_vec();
    let name = |i: &usize| atoms[*i].clone();
    let rules: Vec<(BTreeSet<String>, BTreeSet<String>, BTreeSet<String>)> = program
        .rules()
        .iter()
        .map(|r| {
            (
                r.head.iter().map(name).collect(),
                r.pos.iter().map(name).collect(),
                r.neg.iter().map(name).collect(),
            )
        })
        .collect();
    let all_subsets = |base: &[String]| -> Vec<BTreeSet<String>> {
        let mut subsets = vec![BTreeSet::new()];
        for a in base {
            let with: Vec<BTreeSet<String>> = subsets
                .iter()
                .map(|s| {
                    let mut s = s.clone();
                    s.insert(a.clone());
                    s
                })
                .collect();
            subsets.extend(with);
        }
        subsets
    };
    let mut stable = Vec::new();
    for s in all_subsets(&atoms) {
        let reduct: Vec<(&BTreeSet<String>, &BTreeSet<String>)> = rules
            .iter()
            .filter(|(_, _, neg)| neg.is_disjoint(&s))
            .map(|(h, p, _)| (h, p))
            .collect();
        let satisfies = |m: &BTreeSet<String>| {
            reduct
                .iter()
                .all(|(h, p)| !p.is_subset(m) || !h.is_disjoint(m))
        };
        if !satisfies(&s) {
            continue;
        }
        let members: Vec<String> = s.iter().cloned().collect();
        let minimal = all_subsets(&members)
            .into_iter()
            .filter(|t| t.len() < s.len())
            .all(|t| !satisfies(&t));
        if minimal {
            stable.push(s);
        }
    }
    let weak: Vec<(BTreeSet<String>, BTreeSet<String>)> = program
        .weak_constraints()
        .iter()
        .map(|w| (w.pos.iter().map(name).collect(), w.neg.iter().map(name).collect()))
        .collect();
    let cost = |s: &BTreeSet<String>| {
        weak.iter()
            .filter(|(p, n)| p.is_subset(s) && n.is_disjoint(s))
            .count()
    };
    let best = stable.iter().map(cost).min().unwrap_or(0);
    let mut out: Vec<BTreeSet<String>> = stable.into_iter().filter(|s| cost(s) == best).collect();
    out.sort();
    out
}

/// A random ground program over at most 8 atoms with at most 6 rules.
pub fn random_program_text(rng: &mut ChaCha8Rng, with_weak: bool) -> String {
    let n_atoms = rng.gen_range(1..=8);
    let atoms: Vec<String> = (0..n_atoms).map(|i| format!("a{i}")).collect();
    let pick = |rng: &mut ChaCha8Rng, max: usize| -> Vec<String> {
        let k = rng.gen_range(0..=max);
        atoms.choose_multiple(rng, k).cloned().collect()
    };
    let mut text = String::new();
    for _ in 0..rng.gen_range(0..=6) {
        let head = pick(rng, 2);
        let pos = pick(rng, 2);
        let neg = pick(rng, 2);
        let mut body: Vec<String> = pos;
        body.extend(neg.iter().map(|a| format!("not {a}")));
        match (head.is_empty(), body.is_empty()) {
            (true, true) => continue,
            (false, true) => text.push_str(&format!("{}.\n", head.join(" v "))),
            (true, false) => text.push_str(&format!(":- {}.\n", body.join(", "))),
            (false, false) => text.push_str(&format!("{} :- {}.\n", head.join(" v "), body.join(", "))),
        }
    }
    if with_weak {
        for _ in 0..rng.gen_range(0..=2) {
            let body = pick(rng, 2);
            if !body.is_empty() {
                text.push_str(&format!(":~ {}.\n", body.join(", ")));
            }
        }
    }
    text
}

/// A random dataset with 3 to 5 features of 2 or 3 values and both labels.
pub fn random_dataset(rng: &mut ChaCha8Rng) -> Dataset {
    let n = rng.gen_range(3..=5);
    let names: Vec<String> = (0..n).map(|i| format!("F{i}")).collect();
    let domains: Vec<usize> = (0..n).map(|_| rng.gen_range(2..=3)).collect();
    let rows_n = rng.gen_range(6..=20);
    let mut rows: Vec<Row> = (0..rows_n)
        .map(|r| Row {
            values: domains
                .iter()
                .enumerate()
                .map(|(f, &d)| format!("v{}", if r < d { r } else { rng.gen_range(0..d) } + 10 * f))
                .collect(),
            label: if r == 0 { "pos" } else if r == 1 { "neg" } else if rng.gen_bool(0.5) { "pos" } else { "neg" }.to_string(),
        })
        .collect();
    rows.shuffle(rng);
    Dataset::from_rows(names, "Class".into(), rows, None).unwrap()
}

pub fn random_entity(rng: &mut ChaCha8Rng, model: &PercentModel) -> Entity {
    let values: Vec<String> = model
        .schema()
        .features()
        .iter()
        .map(|f| f.domain().choose(rng).unwrap().clone())
        .collect();
    Entity::new(model.schema(), "e", values).unwrap()
}
