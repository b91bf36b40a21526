//! DLV-Complex program text for a percent model, an entity and constraints.
//!
//! Predicate and variable names are derived from feature atom labels: the
//! shortest prefix that no other label shares (`dom_o`, `p_o_c`, `O`, `Op`).

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::constraints::{ConstraintError, ConstraintSet};
use crate::naive_bayes::{ModelError, PercentModel, DEFAULT_MAXINT};
use crate::schema::{Entity, Feature, FeatureSchema, SchemaError};

const WIDTH: usize = 78;

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("no unique predicate prefix for features {0:?}")]
    PrefixCollision(Vec<String>),
    #[error("{what} `{value}` is not a valid program constant")]
    InvalidConstant { what: &'static str, value: String },
    #[error("maxint must be at least 1")]
    MaxInt,
    #[error("listing order for `{0}` is not a permutation of its domain")]
    ListingOrder(String),
    #[error("program line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmitterOptions {
    pub include_weak_constraints: bool,
    /// Emit forbidden combinations and dependency rules. Immutable features
    /// and dependency targets lose their intervention disjunct either way.
    pub include_domain_rules: bool,
    pub maxint: u64,
    /// Per feature name, the order of values in the conditional facts when it
    /// should differ from the domain order.
    pub listing_order: BTreeMap<String, Vec<String>>,
}

impl Default for EmitterOptions {
    fn default() -> Self {
        Self {
            include_weak_constraints: false,
            include_domain_rules: true,
            maxint: DEFAULT_MAXINT,
            listing_order: BTreeMap::new(),
        }
    }
}

fn is_constant(s: &str) -> bool {
    let mut chars = s.chars();
    let ok = match chars.next() {
        Some(c) if c.is_ascii_lowercase() => chars.all(|c| c.is_ascii_alphanumeric() || c == '_'),
        Some(c) if c.is_ascii_digit() => chars.all(|c| c.is_ascii_digit()),
        _ => false,
    };
    ok && s != "not"
}

fn constant(what: &'static str, value: &str) -> Result<(), EmitError> {
    if is_constant(value) {
        Ok(())
    } else {
        Err(EmitError::InvalidConstant {
            what,
            value: value.to_string(),
        })
    }
}

/// Shortest prefix of each label that is not a prefix of any other label.
pub fn predicate_prefixes(labels: &[String]) -> Result<Vec<String>, EmitError> {
    let mut out = Vec::with_capacity(labels.len());
    for (i, label) in labels.iter().enumerate() {
        let others: Vec<&String> = labels.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, l)| l).collect();
        let found = (1..=label.len())
            .filter(|&k| label.is_char_boundary(k))
            .map(|k| &label[..k])
            .find(|p| !others.iter().any(|o| o.starts_with(p)));
        match found {
            Some(p) => out.push(p.to_string()),
            None => {
                let mut clash: Vec<String> = others
                    .iter()
                    .filter(|o| o.starts_with(label.as_str()) || label.starts_with(o.as_str()))
                    .map(|o| o.to_string())
                    .collect();
                clash.insert(0, label.clone());
                return Err(EmitError::PrefixCollision(clash));
            }
        }
    }
    Ok(out)
}

/// Names used in the generated rules.
struct Names {
    prefixes: Vec<String>,
    vars: Vec<String>,
    primes: Vec<String>,
    steps: Vec<String>,
}

fn step_var(k: usize) -> String {
    match k {
        1 => "A".into(),
        2 => "B".into(),
        3 => "C".into(),
        _ => format!("A{k}"),
    }
}

fn names(schema: &FeatureSchema, labels: &[String; 2]) -> Result<Names, EmitError> {
    let atom_labels: Vec<String> = schema.features().iter().map(|f| f.label().to_string()).collect();
    let prefixes = predicate_prefixes(&atom_labels)?;
    let n = schema.len();
    let steps: Vec<String> = (1..n).map(step_var).collect();
    let mut reserved: BTreeSet<String> = [
        "E", "V", "D", "F", "Fp", "U", "Up", "X", "Z", "I", "Co", "S", "M", "R",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for s in &steps {
        reserved.insert(s.clone());
        reserved.insert(format!("{s}p"));
    }
    for k in 1..=n {
        reserved.insert(format!("P{k}"));
    }
    for l in labels {
        reserved.insert(format!("F{l}"));
    }
    let mut vars = Vec::with_capacity(n);
    for p in &prefixes {
        let mut v: String = p[..1].to_uppercase() + &p[1..];
        while reserved.contains(&v) || reserved.contains(&format!("{v}p")) || vars.contains(&v) {
            v.push('f');
        }
        vars.push(v);
    }
    let primes = vars.iter().map(|v| format!("{v}p")).collect();
    Ok(Names {
        prefixes,
        vars,
        primes,
        steps,
    })
}

/// Packs `head :- body.` into lines of at most [`WIDTH`] columns.
fn rule(head: &str, body: &[String]) -> String {
    let first = format!("   {head} :- ");
    let indent = " ".repeat(first.len());
    let mut out = first.clone();
    let mut col = first.len();
    for (i, lit) in body.iter().enumerate() {
        let piece = if i + 1 == body.len() {
            format!("{lit}.")
        } else {
            format!("{lit},")
        };
        if i > 0 {
            if col + 1 + piece.len() > WIDTH {
                out.push('\n');
                out.push_str(&indent);
                col = indent.len();
            } else {
                out.push(' ');
                col += 1;
            }
        }
        out.push_str(&piece);
        col += piece.len();
    }
    out.push('\n');
    out
}

/// Packs space-separated facts into indented lines.
fn facts(items: &[String]) -> String {
    let mut out = String::new();
    let mut line = String::from("    ");
    for item in items {
        if line.len() > 4 && line.len() + 1 + item.len() > WIDTH {
            out.push_str(line.trim_end());
            out.push('\n');
            line = String::from("    ");
        }
        line.push_str(item);
        line.push(' ');
    }
    if line.len() > 4 {
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

fn ent(eid: &str, args: &[String], ann: &str) -> String {
    format!("ent({eid},{},{ann})", args.join(","))
}

/// Produces the complete program text.
pub fn emit_cip(
    model: &PercentModel,
    entity: &Entity,
    constraints: &ConstraintSet,
    options: &EmitterOptions,
) -> Result<String, EmitError> {
    if options.maxint < 1 {
        return Err(EmitError::MaxInt);
    }
    let schema = model.schema();
    let [pos, neg] = model.labels().clone();
    schema.encode(entity.values())?;
    constant("entity id", entity.eid())?;
    constant("class label", &pos)?;
    constant("class label", &neg)?;
    for f in schema.features() {
        constant("feature name", &f.name().to_lowercase())?;
        if !f.label().starts_with(|c: char| c.is_ascii_lowercase()) {
            return Err(EmitError::InvalidConstant {
                what: "feature label",
                value: f.label().to_string(),
            });
        }
        constant("feature label", f.label())?;
        for v in f.domain() {
            constant("feature value", v)?;
        }
    }
    let nm = names(schema, model.labels())?;
    let n = schema.len();
    let xs = nm.vars.join(",");
    let x = &nm.vars;
    let xp = &nm.primes;
    let mut out = String::new();

    out.push_str(&format!("#include<ListAndSet>\n#maxint = {}.\n\n", options.maxint));

    let dom: Vec<String> = schema
        .features()
        .iter()
        .zip(&nm.prefixes)
        .flat_map(|(f, p)| f.domain().iter().map(move |v| format!("dom_{p}({v}).")))
        .collect();
    out.push_str(&facts(&dom));
    out.push('\n');
    let schema_names: Vec<String> = schema.features().iter().map(|f| f.name().to_lowercase()).collect();
    out.push_str(&format!("    entSchema({}).\n\n", schema_names.join(",")));
    out.push_str(&format!("    {}.\n\n", ent(entity.eid(), entity.values(), "o")));
    let prior = model.prior();
    out.push_str(&format!("    p({pos}, {}). p({neg}, {}).\n\n", prior[0], prior[1]));

    for (fi, f) in schema.features().iter().enumerate() {
        let order = listing_order(f, options)?;
        for (l, label) in [&pos, &neg].iter().enumerate() {
            let items: Vec<String> = order
                .iter()
                .map(|&v| {
                    format!(
                        "p_{}_c({}, {label}, {}).",
                        nm.prefixes[fi],
                        f.domain()[v],
                        model.table(fi)[v][l]
                    )
                })
                .collect();
            out.push_str(&facts(&items));
        }
        out.push('\n');
    }

    // staged probability rules
    let tr = format!("ent(E,{xs},tr)");
    let pc = |k: usize| format!("p_{}_c({}, V, P{})", nm.prefixes[k], x[k], k + 1);
    let mut prev: Option<String> = None;
    for k in 1..n {
        let s = &nm.steps[k - 1];
        let sp = format!("{s}p");
        let mut body = vec![tr.clone()];
        let product = match &prev {
            None => {
                body.push(pc(0));
                body.push(pc(1));
                format!("{s} = P1*P2")
            }
            Some(p) => {
                body.push(format!("prob_{}(E,{xs},V,{p})", k - 1));
                body.push(pc(k));
                format!("{s} = {p}*P{}", k + 1)
            }
        };
        body.push(product);
        body.push(format!("{sp} = {s}/10"));
        body.push(format!("#int({s})"));
        body.push(format!("#int({sp})"));
        body.push("p(V, D)".into());
        out.push_str(&rule(&format!("prob_{k}(E,{xs},V,{sp})"), &body));
        prev = Some(sp);
    }
    let mut body = vec![tr.clone()];
    let last = match &prev {
        Some(p) => {
            body.push(format!("prob_{}(E,{xs},V,{p})", n - 1));
            p.clone()
        }
        None => {
            body.push(pc(0));
            "P1".into()
        }
    };
    body.extend([
        "p(V, D)".to_string(),
        format!("F = {last}*D"),
        "Fp = F/10".into(),
        "#int(F)".into(),
        "#int(Fp)".into(),
    ]);
    out.push_str(&rule(&format!("pb_num(E,{xs},V,Fp)"), &body));
    out.push('\n');

    out.push_str(&rule(&tr, &[format!("ent(E,{xs},o)")]));
    out.push_str(&rule(&tr, &[format!("ent(E,{xs},do)")]));
    out.push('\n');

    let fpos = format!("F{pos}");
    let fneg = format!("F{neg}");
    let nums = |cmp: &str| {
        vec![
            tr.clone(),
            format!("pb_num(E,{xs},{pos},{fpos})"),
            format!("pb_num(E,{xs},{neg},{fneg})"),
            format!("{fpos} {cmp} {fneg}"),
        ]
    };
    out.push_str(&rule(&format!("cls(E,{xs},{pos})"), &nums(">=")));
    out.push_str(&rule(&format!("cls(E,{xs},{neg})"), &nums("<")));
    out.push('\n');

    // intervention rule over the features the search may change directly
    let free: Vec<usize> = (0..n).filter(|&f| constraints.is_free(f)).collect();
    let with = |f: usize, value: &str| -> Vec<String> {
        let mut args = x.clone();
        args[f] = value.to_string();
        args
    };
    let cls_pos = format!("cls(E,{xs},{pos})");
    if !free.is_empty() {
        let head: Vec<String> = free
            .iter()
            .map(|&f| ent("E", &with(f, &xp[f]), "do"))
            .collect();
        let mut body: Vec<String> = free.iter().map(|&f| format!("{} != {}", x[f], xp[f])).collect();
        body.push(tr.clone());
        body.push(cls_pos.clone());
        body.extend(free.iter().map(|&f| format!("chosen_{}({xs},{})", nm.prefixes[f], xp[f])));
        body.extend(free.iter().map(|&f| format!("dom_{}({})", nm.prefixes[f], xp[f])));
        out.push_str(&rule(&head.join(" v "), &body));
        out.push('\n');
        for &f in &free {
            let p = &nm.prefixes[f];
            out.push_str(&rule(
                &format!("chosen_{p}({xs},U)"),
                &[
                    tr.clone(),
                    cls_pos.clone(),
                    format!("dom_{p}(U)"),
                    format!("U != {}", x[f]),
                    format!("not diffchoice_{p}({xs},U)"),
                ],
            ));
            out.push_str(&rule(
                &format!("diffchoice_{p}({xs},U)"),
                &[format!("chosen_{p}({xs},Up)"), "U != Up".into(), format!("dom_{p}(U)")],
            ));
        }
        out.push('\n');
    }

    out.push_str(&format!("   :- ent(E,{xs},do), ent(E,{xs},o).\n\n"));
    out.push_str(&rule(
        &format!("ent(E,{xs},s)"),
        &[format!("ent(E,{xs},do)"), format!("cls(E,{xs},{neg})")],
    ));
    out.push('\n');
    out.push_str(&format!("   :- ent(E,{xs},o), not entAux(E).\n\n"));
    out.push_str(&rule("entAux(E)", &[format!("ent(E,{xs},s)")]));
    out.push('\n');

    let orig_s = [format!("ent(E,{xs},o)"), format!("ent(E,{},s)", xp.join(","))];
    for (f, feat) in schema.features().iter().enumerate() {
        let mut body = orig_s.to_vec();
        body.push(format!("{} != {}", x[f], xp[f]));
        out.push_str(&rule(&format!("expl(E,{},{})", feat.label(), x[f]), &body));
    }
    out.push('\n');

    out.push_str(concat!(
        "   cause(E,U) :- expl(E,U,X).\n",
        "   cauCont(E,U,I) :- expl(E,U,X), expl(E,I,Z), U != I.\n",
        "   preCont(E,U,{I}) :- cauCont(E,U,I).\n",
        "   preCont(E,U,#union(Co,{I})) :- cauCont(E,U,I), preCont(E,U,Co),\n",
        "                                  not #member(I,Co).\n",
        "   cont(E,U,Co) :- preCont(E,U,Co), not HoleIn(E,U,Co).\n",
        "   HoleIn(E,U,Co) :- preCont(E,U,Co), cauCont(E,U,I), not #member(I,Co).\n",
        "   tmpCont(E,U) :- cont(E,U,Co), not #card(Co,0).\n",
        "   cont(E,U,{}) :- cause(E,U), not tmpCont(E,U).\n",
        "\n",
        "   invResp(E,U,R) :- cont(E,U,S), #card(S,M), R = M+1, #int(R).\n",
        "\n",
        "   fullExpl(E,U,R,S) :- expl(E,U,X), cont(E,U,S), invResp(E,U,R).\n",
    ));

    if options.include_domain_rules
        && (!constraints.forbidden().is_empty() || !constraints.dependencies().is_empty())
    {
        out.push('\n');
        for combo in constraints.forbidden() {
            let mut args = vec!["_".to_string(); n];
            for &(f, v) in combo {
                args[f] = schema.feature(f).domain()[v].clone();
            }
            out.push_str(&format!("   :- {}.\n", ent("E", &args, "tr")));
        }
        for d in constraints.dependencies() {
            for (sv, &tv) in d.map.iter().enumerate() {
                let mut body = x.clone();
                body[d.source] = schema.feature(d.source).domain()[sv].clone();
                let mut head = body.clone();
                head[d.target] = schema.feature(d.target).domain()[tv].clone();
                out.push_str(&rule(&ent("E", &head, "tr"), &[ent("E", &body, "tr")]));
            }
        }
    }

    if options.include_weak_constraints {
        out.push('\n');
        for f in 0..n {
            out.push_str(&format!(
                "   :~ {}, {}, {} != {}.\n",
                orig_s[0], orig_s[1], x[f], xp[f]
            ));
        }
    }
    Ok(out)
}

fn listing_order(f: &Feature, options: &EmitterOptions) -> Result<Vec<usize>, EmitError> {
    match options.listing_order.get(f.name()) {
        None => Ok((0..f.domain().len()).collect()),
        Some(values) => {
            let idx: Option<Vec<usize>> = values.iter().map(|v| f.value_index(v)).collect();
            let idx = idx.ok_or_else(|| EmitError::ListingOrder(f.name().to_string()))?;
            let distinct: BTreeSet<usize> = idx.iter().copied().collect();
            if idx.len() != f.domain().len() || distinct.len() != idx.len() {
                return Err(EmitError::ListingOrder(f.name().to_string()));
            }
            Ok(idx)
        }
    }
}

/// What [`parse_facts`] recovers from an emitted program.
#[derive(Clone, Debug)]
pub struct ParsedFacts {
    pub model: PercentModel,
    pub entity: Entity,
    pub constraints: ConstraintSet,
    pub options: EmitterOptions,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Word(String),
    Var(String),
    Int(u64),
    Punct(&'static str),
}

const PUNCT: [&str; 17] = [
    ":-", ":~", "!=", ">=", "<=", "(", ")", "{", "}", ",", ".", "<", ">", "=", "*", "/", "+",
];

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, EmitError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('%').next().unwrap_or("");
        if body.trim_start().starts_with("#include") {
            let t = body.trim();
            if !(t.starts_with("#include<") && t.ends_with('>')) {
                return Err(EmitError::Parse {
                    line,
                    message: "malformed #include".into(),
                });
            }
            continue;
        }
        let chars: Vec<char> = body.chars().collect();
        let mut p = 0;
        while p < chars.len() {
            let c = chars[p];
            if c.is_whitespace() {
                p += 1;
                continue;
            }
            let start = p;
            if c.is_ascii_alphabetic() || c == '#' || c == '_' {
                p += 1;
                while p < chars.len() && (chars[p].is_ascii_alphanumeric() || chars[p] == '_') {
                    p += 1;
                }
                let word: String = chars[start..p].iter().collect();
                let tok = if c.is_ascii_uppercase() || c == '_' {
                    Tok::Var(word)
                } else {
                    Tok::Word(word)
                };
                out.push((tok, line));
            } else if c.is_ascii_digit() {
                while p < chars.len() && chars[p].is_ascii_digit() {
                    p += 1;
                }
                let digits: String = chars[start..p].iter().collect();
                let value = digits.parse().map_err(|_| EmitError::Parse {
                    line,
                    message: format!("integer `{digits}` out of range"),
                })?;
                out.push((Tok::Int(value), line));
            } else {
                let rest: String = chars[p..].iter().take(2).collect();
                let punct = PUNCT.iter().find(|s| rest.starts_with(**s)).ok_or_else(|| EmitError::Parse {
                    line,
                    message: format!("unexpected character `{c}`"),
                })?;
                p += punct.len();
                out.push((Tok::Punct(punct), line));
            }
        }
    }
    Ok(out)
}

struct Statement {
    line: usize,
    toks: Vec<Tok>,
}

fn statements(toks: Vec<(Tok, usize)>) -> Result<Vec<Statement>, EmitError> {
    let mut out = Vec::new();
    let mut cur: Vec<Tok> = Vec::new();
    let mut line = 0;
    let mut depth = 0i32;
    for (tok, l) in toks {
        if cur.is_empty() {
            line = l;
        }
        match tok {
            Tok::Punct("(") | Tok::Punct("{") => depth += 1,
            Tok::Punct(")") | Tok::Punct("}") => depth -= 1,
            _ => {}
        }
        if depth < 0 {
            return Err(EmitError::Parse {
                line: l,
                message: "unbalanced brackets".into(),
            });
        }
        if tok == Tok::Punct(".") && depth == 0 {
            out.push(Statement {
                line,
                toks: std::mem::take(&mut cur),
            });
        } else {
            cur.push(tok);
        }
    }
    if !cur.is_empty() {
        return Err(EmitError::Parse {
            line,
            message: "statement is not terminated by `.`".into(),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Term {
    Const(String),
    Var(String),
}

/// `name(t1,...,tn)` with plain constant or variable terms; `None` otherwise.
fn atom(toks: &[Tok]) -> Option<(String, Vec<Term>)> {
    let Tok::Word(name) = toks.first()? else {
        return None;
    };
    if toks.len() == 1 {
        return Some((name.clone(), Vec::new()));
    }
    if toks.get(1) != Some(&Tok::Punct("(")) || toks.last() != Some(&Tok::Punct(")")) {
        return None;
    }
    let inner = &toks[2..toks.len() - 1];
    let mut args = Vec::new();
    for (i, t) in inner.iter().enumerate() {
        if i % 2 == 1 {
            if *t != Tok::Punct(",") {
                return None;
            }
            continue;
        }
        args.push(match t {
            Tok::Word(w) => Term::Const(w.clone()),
            Tok::Int(v) => Term::Const(v.to_string()),
            Tok::Var(v) => Term::Var(v.clone()),
            Tok::Punct(_) => return None,
        });
    }
    if inner.len().is_multiple_of(2) {
        return None;
    }
    Some((name.clone(), args))
}

/// Splits a rule body into top-level literals.
fn literals(toks: &[Tok]) -> Vec<&[Tok]> {
    let mut out = Vec::new();
    let mut depth = 0;
    let mut start = 0;
    for (i, t) in toks.iter().enumerate() {
        match t {
            Tok::Punct("(") | Tok::Punct("{") => depth += 1,
            Tok::Punct(")") | Tok::Punct("}") => depth -= 1,
            Tok::Punct(",") if depth == 0 => {
                out.push(&toks[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&toks[start..]);
    out
}

fn consts(args: &[Term]) -> Option<Vec<String>> {
    args.iter()
        .map(|a| match a {
            Term::Const(c) => Some(c.clone()),
            Term::Var(_) => None,
        })
        .collect()
}

/// Recovers the model, entity, constraints and options from emitted text.
pub fn parse_facts(text: &str) -> Result<ParsedFacts, EmitError> {
    let stmts = statements(lex(text)?)?;
    let mut maxint = None;
    let mut schema_names: Option<Vec<String>> = None;
    let mut doms: Vec<(String, Vec<String>)> = Vec::new();
    let mut entity: Option<(String, Vec<String>)> = None;
    let mut priors: Vec<(String, u32)> = Vec::new();
    let mut conds: Vec<(String, String, String, u32)> = Vec::new();
    let mut expl_labels: Vec<String> = Vec::new();
    let mut chosen: BTreeSet<String> = BTreeSet::new();
    let mut forbidden: Vec<Vec<Term>> = Vec::new();
    let mut deps: Vec<(Vec<Term>, Vec<Term>, usize)> = Vec::new();
    let mut has_weak = false;

    for st in &stmts {
        let bad = |message: &str| EmitError::Parse {
            line: st.line,
            message: message.to_string(),
        };
        let t = &st.toks;
        if t.first() == Some(&Tok::Word("#maxint".into())) {
            match t.as_slice() {
                [_, Tok::Punct("="), Tok::Int(v)] => maxint = Some(*v),
                _ => return Err(bad("malformed #maxint directive")),
            }
            continue;
        }
        if t.first() == Some(&Tok::Punct(":~")) {
            has_weak = true;
            continue;
        }
        if t.first() == Some(&Tok::Punct(":-")) {
            let lits = literals(&t[1..]);
            if lits.len() == 1 {
                if let Some((name, args)) = atom(lits[0]) {
                    let anonymous_or_const = args[1..args.len().saturating_sub(1)]
                        .iter()
                        .all(|a| matches!(a, Term::Const(_)) || *a == Term::Var("_".into()));
                    if name == "ent" && args.last() == Some(&Term::Const("tr".into())) && anonymous_or_const {
                        forbidden.push(args[1..args.len() - 1].to_vec());
                    }
                }
            }
            continue;
        }
        if let Some(pos) = t.iter().position(|x| *x == Tok::Punct(":-")) {
            let head = &t[..pos];
            let body = literals(&t[pos + 1..]);
            if let Some((name, args)) = atom(head) {
                match name.as_str() {
                    "expl" => {
                        if let Some(Term::Const(label)) = args.get(1) {
                            expl_labels.push(label.clone());
                        }
                    }
                    n if n.starts_with("chosen_") => {
                        chosen.insert(n["chosen_".len()..].to_string());
                    }
                    "ent" if body.len() == 1 => {
                        if let Some((bname, bargs)) = atom(body[0]) {
                            let is_tr = |a: &[Term]| a.last() == Some(&Term::Const("tr".into()));
                            if bname == "ent" && is_tr(&args) && is_tr(&bargs) && args.len() == bargs.len() {
                                let h = args[1..args.len() - 1].to_vec();
                                let b = bargs[1..bargs.len() - 1].to_vec();
                                let diff: Vec<usize> = (0..h.len()).filter(|&i| h[i] != b[i]).collect();
                                if let [target] = diff.as_slice() {
                                    deps.push((h, b, *target));
                                }
                            }
                        }
                    }
                    _ => {}
                }
            }
            continue;
        }
        // a fact
        let (name, args) = atom(t).ok_or_else(|| bad("malformed fact"))?;
        let values = consts(&args).ok_or_else(|| bad("facts must be ground"))?;
        let int = |s: &str| s.parse::<u32>().map_err(|_| bad("expected an integer percentage"));
        match name.as_str() {
            "entSchema" => schema_names = Some(values),
            "ent" => {
                if values.len() < 3 || values.last().map(String::as_str) != Some("o") {
                    return Err(bad("only the original entity may be given as a fact"));
                }
                entity = Some((values[0].clone(), values[1..values.len() - 1].to_vec()));
            }
            "p" => match values.as_slice() {
                [label, pct] => priors.push((label.clone(), int(pct)?)),
                _ => return Err(bad("p/2 expected")),
            },
            n if n.starts_with("dom_") => {
                let [value] = values.as_slice() else {
                    return Err(bad("dom facts take one value"));
                };
                let prefix = &n[4..];
                match doms.iter_mut().find(|(p, _)| p == prefix) {
                    Some((_, d)) => d.push(value.clone()),
                    None => doms.push((prefix.to_string(), vec![value.clone()])),
                }
            }
            n if n.starts_with("p_") && n.ends_with("_c") && n.len() > 4 => match values.as_slice() {
                [v, label, pct] => conds.push((n[2..n.len() - 2].to_string(), v.clone(), label.clone(), int(pct)?)),
                _ => return Err(bad("conditional facts take three arguments")),
            },
            other => return Err(bad(&format!("unexpected fact `{other}`"))),
        }
    }

    let missing = |what: &str| EmitError::Parse {
        line: 0,
        message: format!("program has no {what}"),
    };
    let names = schema_names.ok_or_else(|| missing("entSchema fact"))?;
    if doms.len() != names.len() || expl_labels.len() != names.len() {
        return Err(missing("consistent dom facts and expl rules for every feature"));
    }
    let prefixes = predicate_prefixes(&expl_labels)?;
    let features = names
        .iter()
        .zip(&expl_labels)
        .zip(&doms)
        .zip(&prefixes)
        .map(|(((name, label), (dp, domain)), prefix)| {
            if dp != prefix {
                return Err(missing(&format!("dom_{prefix} facts")));
            }
            let f = Feature::new(name.clone(), domain.clone());
            Ok(if label != name { f.with_label(label.clone()) } else { f })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let schema = FeatureSchema::new(features)?;
    let [(pos, pp), (neg, pn)] = <[(String, u32); 2]>::try_from(priors).map_err(|_| missing("pair of p facts"))?;
    let labels = [pos, neg];

    let mut conditional: Vec<Vec<[Option<u32>; 2]>> =
        schema.features().iter().map(|f| vec![[None; 2]; f.domain().len()]).collect();
    let mut listing: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (prefix, value, label, pct) in &conds {
        let f = prefixes
            .iter()
            .position(|p| p == prefix)
            .ok_or_else(|| missing(&format!("feature for p_{prefix}_c")))?;
        let feature = schema.feature(f);
        let v = feature.value_index(value).ok_or_else(|| SchemaError::OutOfDomain {
            feature: feature.name().to_string(),
            value: value.clone(),
        })?;
        let l = labels
            .iter()
            .position(|x| x == label)
            .ok_or_else(|| missing(&format!("class label `{label}`")))?;
        if conditional[f][v][l].replace(*pct).is_some() {
            return Err(missing(&format!("duplicate-free p_{prefix}_c facts")));
        }
        if l == 0 {
            listing.entry(feature.name().to_string()).or_default().push(value.clone());
        }
    }
    let conditional = conditional
        .into_iter()
        .map(|table| {
            table
                .into_iter()
                .map(|[a, b]| Some([a?, b?]))
                .collect::<Option<Vec<_>>>()
        })
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| missing("complete conditional tables"))?;
    listing.retain(|name, order| {
        let f = schema.feature(schema.index_of(name).expect("recorded from schema"));
        order.as_slice() != f.domain()
    });
    let maxint = maxint.ok_or_else(|| missing("#maxint directive"))?;
    let model = PercentModel::from_parts(schema.clone(), labels, [pp, pn], conditional)?.with_ceiling(maxint);
    let (eid, values) = entity.ok_or_else(|| missing("original entity fact"))?;
    let entity = Entity::new(&schema, eid, values)?;

    let value_of = |t: &Term| match t {
        Term::Const(c) => Ok(c.clone()),
        Term::Var(_) => Err(missing("constant in domain rule")),
    };
    let mut builder = ConstraintSet::builder(&schema);
    for combo in &forbidden {
        let bindings = combo
            .iter()
            .enumerate()
            .filter(|(_, t)| matches!(t, Term::Const(_)))
            .map(|(f, t)| Ok((schema.feature(f).name().to_string(), value_of(t)?)))
            .collect::<Result<Vec<_>, EmitError>>()?;
        let refs: Vec<(&str, &str)> = bindings.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        builder = builder.forbid(&refs)?;
    }
    // group dependency rules by (source, target)
    let mut grouped: Vec<(usize, usize, Vec<(String, String)>)> = Vec::new();
    for (head, body, target) in &deps {
        let source = (0..body.len())
            .find(|&i| i != *target && matches!(body[i], Term::Const(_)))
            .ok_or_else(|| missing("source constant in dependency rule"))?;
        let pair = (value_of(&body[source])?, value_of(&head[*target])?);
        match grouped.iter_mut().find(|(s, t, _)| *s == source && *t == *target) {
            Some((_, _, m)) => m.push(pair),
            None => grouped.push((source, *target, vec![pair])),
        }
    }
    let targets: BTreeSet<usize> = grouped.iter().map(|g| g.1).collect();
    for (s, t, mapping) in &grouped {
        let refs: Vec<(&str, &str)> = mapping.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        builder = builder.depend(schema.feature(*s).name(), schema.feature(*t).name(), &refs)?;
    }
    for (f, prefix) in prefixes.iter().enumerate() {
        if !chosen.contains(prefix) && !targets.contains(&f) {
            builder = builder.immutable(schema.feature(f).name())?;
        }
    }
    let constraints = builder.build()?;

    Ok(ParsedFacts {
        model,
        entity,
        constraints,
        options: EmitterOptions {
            include_weak_constraints: has_weak,
            include_domain_rules: true,
            maxint,
            listing_order: listing,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::naive_bayes::{to_percent, train};
    use crate::schema::{parse_dataset, parse_entity, parse_schema};

    fn weather() -> (PercentModel, Entity) {
        let schema = parse_schema(include_str!("../data/weather.schema")).unwrap();
        let data = parse_dataset(include_str!("../data/weather.csv"), Some(&schema.schema)).unwrap();
        let model = to_percent(&train(&data).unwrap());
        let e = parse_entity("rain,high,normal,weak", model.schema(), "e").unwrap();
        (model, e)
    }

    #[test]
    fn prefixes() {
        let l = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(predicate_prefixes(&l(&["outlook", "temp", "humidity", "wind"])).unwrap(), ["o", "t", "h", "w"]);
        assert_eq!(predicate_prefixes(&l(&["wind", "weight"])).unwrap(), ["wi", "we"]);
        assert!(matches!(
            predicate_prefixes(&l(&["age", "agent"])),
            Err(EmitError::PrefixCollision(v)) if v == ["age", "agent"]
        ));
    }

    #[test]
    fn facts_block() {
        let (model, e) = weather();
        let text = emit_cip(&model, &e, &ConstraintSet::empty(), &EmitterOptions::default()).unwrap();
        assert!(text.contains("p_o_c(sunny, yes, 22). p_o_c(overcast, yes, 45). p_o_c(rain, yes, 33)."));
        assert!(text.contains("p(yes, 64). p(no, 36)."));
        assert!(text.contains("ent(e,rain,high,normal,weak,o)."));
        let hard = text.lines().filter(|l| l.trim_start().starts_with(":-")).count();
        assert_eq!(hard, 2);
        assert!(!text.contains(":~"));
    }

    #[test]
    fn weak_constraints_close_the_program() {
        let (model, e) = weather();
        let opts = EmitterOptions {
            include_weak_constraints: true,
            ..Default::default()
        };
        let text = emit_cip(&model, &e, &ConstraintSet::empty(), &opts).unwrap();
        let tail: Vec<&str> = text.lines().rev().take(4).collect();
        assert!(tail.iter().all(|l| l.trim_start().starts_with(":~")));
        assert!(text.ends_with(":~ ent(E,O,T,H,W,o), ent(E,Op,Tp,Hp,Wp,s), W != Wp.\n"));
    }

    #[test]
    fn round_trip_is_a_fixed_point() {
        let (model, e) = weather();
        let cs = crate::constraints::parse_constraints(
            "forbid Temperature=high, Wind=strong\nimmutable Outlook\ndepend Temperature -> Humidity: high->normal, medium->high, low->high",
            model.schema(),
        )
        .unwrap();
        for (constraints, weak) in [(ConstraintSet::empty(), false), (cs, true)] {
            let opts = EmitterOptions {
                include_weak_constraints: weak,
                ..Default::default()
            };
            let first = emit_cip(&model, &e, &constraints, &opts).unwrap();
            let parsed = parse_facts(&first).unwrap();
            assert_eq!(parsed.model.prior(), [64, 36]);
            assert_eq!(parsed.entity.values(), ["rain", "high", "normal", "weak"]);
            let second = emit_cip(&parsed.model, &parsed.entity, &parsed.constraints, &parsed.options).unwrap();
            assert_eq!(first, second);
        }
    }

    #[test]
    fn stray_token_reports_line() {
        let (model, e) = weather();
        let text = emit_cip(&model, &e, &ConstraintSet::empty(), &EmitterOptions::default()).unwrap();
        let broken = text.replacen("entSchema(", "stray entSchema(", 1);
        let line = broken.lines().position(|l| l.contains("stray")).unwrap() + 1;
        match parse_facts(&broken) {
            Err(EmitError::Parse { line: l, .. }) => assert_eq!(l, line),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_constants_are_rejected() {
        let schema = FeatureSchema::new(vec![
            Feature::new("Colour", vec!["Red".into(), "blue".into()]),
            Feature::new("Size", vec!["s".into(), "l".into()]),
        ])
        .unwrap();
        let model = PercentModel::from_parts(
            schema.clone(),
            ["yes".into(), "no".into()],
            [50, 50],
            vec![vec![[50, 50], [50, 50]], vec![[50, 50], [50, 50]]],
        )
        .unwrap();
        let e = parse_entity("blue,s", &schema, "e").unwrap();
        assert!(matches!(
            emit_cip(&model, &e, &ConstraintSet::empty(), &EmitterOptions::default()),
            Err(EmitError::InvalidConstant { .. })
        ));
    }
}
