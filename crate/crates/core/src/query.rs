//! Conjunctive queries over the atom sets of counterfactual models.
//!
//! Query syntax follows DLV: comma-separated literals ending in `?`, e.g.
//! `fullExpl(E,U,R,S), R<3?`. Arguments are constants (`rain`, `3`,
//! `{humidity,temp}`), variables (`R`) or `_`. Comparisons use
//! `<`, `<=`, `=`, `!=`, `>`, `>=`.
//!
//! An answer lists, in order of appearance, the value of every named variable
//! at its first occurrence and of every `_` slot.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::asp::Semantics;
use crate::engine::{CounterfactualVersion, Enumeration};
use crate::naive_bayes::{ModelError, PercentModel};
use crate::schema::Entity;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("query syntax at column {column}: {message}")]
    Syntax { column: usize, message: String },
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("predicate `{pred}` takes {expected} arguments, not {found}")]
    Arity {
        pred: String,
        expected: usize,
        found: usize,
    },
    #[error("variable `{0}` in a comparison does not occur in any atom")]
    UnboundVariable(String),
    #[error("query file line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: Box<QueryError>,
    },
}

/// Integers sort before symbols, symbols before sets.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Int(i64),
    Sym(String),
    Set(BTreeSet<String>),
}

impl Value {
    pub fn sym(s: &str) -> Self {
        Value::Sym(s.to_string())
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Sym(s) => f.write_str(s),
            Value::Set(items) => {
                let items: Vec<&str> = items.iter().map(String::as_str).collect();
                write!(f, "{{{}}}", items.join(","))
            }
        }
    }
}

/// The atoms of one model, grouped by predicate.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ModelAtomSet {
    atoms: BTreeMap<String, BTreeSet<Vec<Value>>>,
}

impl ModelAtomSet {
    pub fn insert(&mut self, pred: &str, args: Vec<Value>) {
        self.atoms.entry(pred.to_string()).or_default().insert(args);
    }

    pub fn contains(&self, pred: &str, args: &[Value]) -> bool {
        self.atoms.get(pred).is_some_and(|s| s.contains(args))
    }

    pub fn tuples(&self, pred: &str) -> impl Iterator<Item = &Vec<Value>> {
        self.atoms.get(pred).into_iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.atoms.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Atoms rendered as `pred(a,b)`, sorted.
    pub fn render(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (pred, set) in &self.atoms {
            for args in set {
                let args: Vec<String> = args.iter().map(Value::to_string).collect();
                out.push(format!("{pred}({})", args.join(",")));
            }
        }
        out
    }
}

/// Predicate names and arities of the materialised models for `n` features.
pub fn signature(n: usize) -> BTreeMap<&'static str, usize> {
    BTreeMap::from([
        ("ent", n + 2),
        ("cls", n + 2),
        ("pb_num", n + 3),
        ("expl", 3),
        ("cause", 2),
        ("cauCont", 3),
        ("cont", 3),
        ("tmpCont", 2),
        ("invResp", 3),
        ("fullExpl", 4),
        ("entAux", 1),
    ])
}

fn entity_args(e: &Entity) -> Vec<Value> {
    let mut args = vec![Value::sym(e.eid())];
    args.extend(e.values().iter().map(|v| Value::sym(v)));
    args
}

/// The atoms a stable model for `version` contains.
pub fn atoms_of(
    version: &CounterfactualVersion,
    run: &Enumeration,
    model: &PercentModel,
    include_pb_num: bool,
) -> Result<ModelAtomSet, ModelError> {
    let schema = model.schema();
    let labels = model.labels();
    let eid = Value::sym(&version.eid);
    let mut m = ModelAtomSet::default();
    let with = |e: &Entity, ann: &str| {
        let mut a = entity_args(e);
        a.push(Value::sym(ann));
        a
    };
    let mut transit = vec![&run.original];
    m.insert("ent", with(&run.original, "o"));
    for s in &version.states {
        m.insert("ent", with(s, "do"));
        transit.push(s);
    }
    m.insert("ent", with(&version.final_entity, "s"));
    for e in transit {
        m.insert("ent", with(e, "tr"));
        let nums = model.staged_numerators(&schema.encode(e.values())?)?;
        let label = if nums[0] >= nums[1] { 0 } else { 1 };
        let mut cls = entity_args(e);
        cls.push(Value::sym(&labels[label]));
        m.insert("cls", cls);
        if include_pb_num {
            for l in 0..2 {
                let mut pb = entity_args(e);
                pb.push(Value::sym(&labels[l]));
                pb.push(Value::Int(nums[l] as i64));
                m.insert("pb_num", pb);
            }
        }
    }
    m.insert("entAux", vec![eid.clone()]);

    let changed: Vec<(String, &str)> = version
        .changed
        .iter()
        .map(|&f| (schema.feature(f).label().to_string(), run.original.value(f)))
        .collect();
    for (u, value) in &changed {
        let u_val = Value::sym(u);
        m.insert("expl", vec![eid.clone(), u_val.clone(), Value::sym(value)]);
        m.insert("cause", vec![eid.clone(), u_val.clone()]);
        let others: BTreeSet<String> = changed.iter().filter(|(i, _)| i != u).map(|(i, _)| i.clone()).collect();
        for i in &others {
            m.insert("cauCont", vec![eid.clone(), u_val.clone(), Value::sym(i)]);
        }
        if !others.is_empty() {
            m.insert("tmpCont", vec![eid.clone(), u_val.clone()]);
        }
        let r = Value::Int(others.len() as i64 + 1);
        let set = Value::Set(others);
        m.insert("cont", vec![eid.clone(), u_val.clone(), set.clone()]);
        m.insert("invResp", vec![eid.clone(), u_val.clone(), r.clone()]);
        m.insert("fullExpl", vec![eid.clone(), u_val, r, set]);
    }
    Ok(m)
}

/// One model per version, in version order.
pub fn models_of(run: &Enumeration, model: &PercentModel, include_pb_num: bool) -> Result<Vec<ModelAtomSet>, ModelError> {
    run.versions
        .iter()
        .map(|v| atoms_of(v, run, model, include_pb_num))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Term {
    Const(Value),
    Var(String),
    Anon,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pattern {
    pub pred: String,
    pub args: Vec<Term>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ne,
    Gt,
    Ge,
}

impl CmpOp {
    fn holds(self, a: &Value, b: &Value) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Comparison {
    pub left: Term,
    pub op: CmpOp,
    pub right: Term,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    pub atoms: Vec<Pattern>,
    pub comparisons: Vec<Comparison>,
}

impl Query {
    /// Number of values in each answer tuple.
    pub fn width(&self) -> usize {
        let mut seen = BTreeSet::new();
        self.atoms
            .iter()
            .flat_map(|a| &a.args)
            .filter(|t| match t {
                Term::Anon => true,
                Term::Var(v) => seen.insert(v.clone()),
                Term::Const(_) => false,
            })
            .count()
    }
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
}

impl Lexer {
    fn new(text: &str) -> Self {
        Self {
            chars: text.chars().collect(),
            pos: 0,
        }
    }

    fn err(&self, message: impl Into<String>) -> QueryError {
        QueryError::Syntax {
            column: self.pos + 1,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.chars.get(self.pos).is_some_and(|c| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn eat(&mut self, s: &str) -> bool {
        self.skip_ws();
        let n = s.chars().count();
        if self.chars[self.pos..].iter().take(n).copied().eq(s.chars()) {
            self.pos += n;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Option<String> {
        self.skip_ws();
        let start = self.pos;
        while self
            .chars
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_alphanumeric() || *c == '_')
        {
            self.pos += 1;
        }
        (self.pos > start).then(|| self.chars[start..self.pos].iter().collect())
    }

    fn term(&mut self) -> Result<Term, QueryError> {
        match self.peek() {
            Some('{') => {
                self.pos += 1;
                let mut items = BTreeSet::new();
                if !self.eat("}") {
                    loop {
                        let item = self.ident().ok_or_else(|| self.err("expected a set element"))?;
                        if !item.starts_with(|c: char| c.is_ascii_lowercase()) {
                            return Err(self.err("set elements must be constants"));
                        }
                        items.insert(item);
                        if self.eat("}") {
                            break;
                        }
                        if !self.eat(",") {
                            return Err(self.err("expected `,` or `}` in a set"));
                        }
                    }
                }
                Ok(Term::Const(Value::Set(items)))
            }
            Some(c) if c == '-' || c.is_ascii_digit() => {
                let negative = self.eat("-");
                let digits = self.ident().ok_or_else(|| self.err("expected an integer"))?;
                let n: i64 = digits.parse().map_err(|_| self.err(format!("`{digits}` is not an integer")))?;
                Ok(Term::Const(Value::Int(if negative { -n } else { n })))
            }
            Some(_) => {
                let word = self.ident().ok_or_else(|| self.err("expected a term"))?;
                Ok(if word == "_" {
                    Term::Anon
                } else if word.starts_with(|c: char| c.is_ascii_uppercase()) {
                    Term::Var(word)
                } else if word.starts_with(|c: char| c.is_ascii_lowercase()) {
                    Term::Const(Value::Sym(word))
                } else {
                    return Err(self.err(format!("`{word}` is not a term")));
                })
            }
            None => Err(self.err("unexpected end of query")),
        }
    }

    fn op(&mut self) -> Option<CmpOp> {
        for (s, op) in [
            ("<=", CmpOp::Le),
            (">=", CmpOp::Ge),
            ("!=", CmpOp::Ne),
            ("<>", CmpOp::Ne),
            ("==", CmpOp::Eq),
            ("<", CmpOp::Lt),
            (">", CmpOp::Gt),
            ("=", CmpOp::Eq),
        ] {
            if self.eat(s) {
                return Some(op);
            }
        }
        None
    }
}

/// Parses one query, e.g. `invResp(e,outlook,R)?`.
pub fn parse_query(text: &str) -> Result<Query, QueryError> {
    let mut lx = Lexer::new(text);
    let mut query = Query {
        atoms: Vec::new(),
        comparisons: Vec::new(),
    };
    loop {
        let save = lx.pos;
        let first = lx.term()?;
        let is_atom = matches!(&first, Term::Const(Value::Sym(_))) && lx.peek() == Some('(');
        if is_atom {
            let Term::Const(Value::Sym(pred)) = first else { unreachable!() };
            lx.eat("(");
            let mut args = Vec::new();
            loop {
                args.push(lx.term()?);
                if lx.eat(")") {
                    break;
                }
                if !lx.eat(",") {
                    return Err(lx.err("expected `,` or `)`"));
                }
            }
            query.atoms.push(Pattern { pred, args });
        } else if let Some(op) = lx.op() {
            let right = lx.term()?;
            query.comparisons.push(Comparison { left: first, op, right });
        } else if let Term::Const(Value::Sym(pred)) = first {
            // a propositional atom such as `entAux`
            query.atoms.push(Pattern { pred, args: Vec::new() });
        } else {
            lx.pos = save;
            return Err(lx.err("expected an atom or a comparison"));
        }
        if lx.eat("?") {
            break;
        }
        if !lx.eat(",") {
            return Err(lx.err("expected `,` or the closing `?`"));
        }
    }
    if lx.peek().is_some() {
        return Err(lx.err("text after the closing `?`"));
    }
    if query.atoms.is_empty() {
        return Err(lx.err("a query needs at least one atom"));
    }
    let bound: BTreeSet<&String> = query
        .atoms
        .iter()
        .flat_map(|a| &a.args)
        .filter_map(|t| match t {
            Term::Var(v) => Some(v),
            _ => None,
        })
        .collect();
    for c in &query.comparisons {
        for side in [&c.left, &c.right] {
            match side {
                Term::Var(v) if !bound.contains(v) => return Err(QueryError::UnboundVariable(v.clone())),
                Term::Anon => {
                    return Err(QueryError::Syntax {
                        column: 0,
                        message: "`_` cannot appear in a comparison".into(),
                    })
                }
                _ => {}
            }
        }
    }
    Ok(query)
}

/// Parses a query file: one query per non-blank line, `%` comments.
pub fn parse_query_file(text: &str) -> Result<Vec<Query>, QueryError> {
    text.lines()
        .enumerate()
        .filter_map(|(i, line)| {
            let body = line.split('%').next().unwrap_or("").trim();
            (!body.is_empty()).then_some((i + 1, body))
        })
        .map(|(line, body)| {
            parse_query(body).map_err(|e| QueryError::Line {
                line,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Checks predicate names and arities against `signature`.
pub fn check_query(query: &Query, signature: &BTreeMap<&str, usize>) -> Result<(), QueryError> {
    for a in &query.atoms {
        let expected = *signature
            .get(a.pred.as_str())
            .ok_or_else(|| QueryError::UnknownPredicate(a.pred.clone()))?;
        if expected != a.args.len() {
            return Err(QueryError::Arity {
                pred: a.pred.clone(),
                expected,
                found: a.args.len(),
            });
        }
    }
    Ok(())
}

fn matches_in(query: &Query, model: &ModelAtomSet) -> BTreeSet<Vec<Value>> {
    let mut out = BTreeSet::new();
    let mut bindings: BTreeMap<String, Value> = BTreeMap::new();
    let mut row = Vec::new();
    join(query, model, 0, &mut bindings, &mut row, &mut out);
    out
}

fn join(
    query: &Query,
    model: &ModelAtomSet,
    depth: usize,
    bindings: &mut BTreeMap<String, Value>,
    row: &mut Vec<Value>,
    out: &mut BTreeSet<Vec<Value>>,
) {
    if depth == query.atoms.len() {
        let value = |t: &Term| match t {
            Term::Const(v) => v.clone(),
            Term::Var(v) => bindings[v].clone(),
            Term::Anon => unreachable!("rejected by the parser"),
        };
        if query
            .comparisons
            .iter()
            .all(|c| c.op.holds(&value(&c.left), &value(&c.right)))
        {
            out.insert(row.clone());
        }
        return;
    }
    let pattern = &query.atoms[depth];
    for tuple in model.tuples(&pattern.pred) {
        if tuple.len() != pattern.args.len() {
            continue;
        }
        let mut fresh = Vec::new();
        let row_len = row.len();
        let mut ok = true;
        for (term, v) in pattern.args.iter().zip(tuple) {
            match term {
                Term::Const(c) => ok = c == v,
                Term::Anon => row.push(v.clone()),
                Term::Var(name) => match bindings.get(name) {
                    Some(b) => ok = b == v,
                    None => {
                        bindings.insert(name.clone(), v.clone());
                        fresh.push(name.clone());
                        row.push(v.clone());
                    }
                },
            }
            if !ok {
                break;
            }
        }
        if ok {
            join(query, model, depth + 1, bindings, row, out);
        }
        for name in fresh {
            bindings.remove(&name);
        }
        row.truncate(row_len);
    }
}

/// Answers `query` over `models`: the union (brave) or intersection
/// (cautious) of the per-model answers, sorted.
pub fn answer(
    query: &Query,
    models: &[ModelAtomSet],
    signature: &BTreeMap<&str, usize>,
    semantics: Semantics,
) -> Result<Vec<Vec<Value>>, QueryError> {
    check_query(query, signature)?;
    let mut per_model = models.iter().map(|m| matches_in(query, m));
    let merged = match semantics {
        Semantics::Brave => per_model.fold(BTreeSet::new(), |mut acc, s| {
            acc.extend(s);
            acc
        }),
        Semantics::Cautious => match per_model.next() {
            None => BTreeSet::new(),
            Some(first) => per_model.fold(first, |acc, s| acc.intersection(&s).cloned().collect()),
        },
    };
    Ok(merged.into_iter().collect())
}

/// One line per answer, values joined by `, `. A query without output
/// columns prints `true` or `false`.
pub fn format_answers(query: &Query, answers: &[Vec<Value>]) -> Vec<String> {
    if query.width() == 0 {
        return vec![if answers.is_empty() { "false" } else { "true" }.to_string()];
    }
    answers
        .iter()
        .map(|row| row.iter().map(Value::to_string).collect::<Vec<_>>().join(", "))
        .collect()
}
