//! Stable models of ground disjunctive programs, by exhaustive enumeration.
//!
//! Accepted syntax, one statement per `.`:
//!
//! ```text
//! a v b :- c, not d.   % disjunctive rule
//! e.                   % fact
//! :- a, b.             % hard constraint
//! :~ b.                % weak constraint (unweighted)
//! ```
//!
//! Atoms are lowercase identifiers, optionally with ground arguments such as
//! `p(a,1)`. `|` is accepted as an alternative to `v`.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

/// Default bound on the Herbrand base size for exhaustive enumeration.
pub const DEFAULT_MAX_ATOMS: usize = 20;
/// Environment variable consulted by the command-line tool for the bound.
pub const MAX_ATOMS_ENV: &str = "CIPX_ASP_MAX_ATOMS";
const HARD_MAX_ATOMS: usize = 63;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AspError {
    #[error("program line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{atoms} atoms exceed the enumeration limit of {limit}")]
    TooManyAtoms { atoms: usize, limit: usize },
    #[error("minimal models need a program without negation")]
    NotPositive,
}

pub type AtomSet = BTreeSet<String>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Semantics {
    Brave,
    Cautious,
}

/// `head :- pos, not neg.` over atom indices; an empty head is a hard constraint.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Rule {
    pub head: Vec<usize>,
    pub pos: Vec<usize>,
    pub neg: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WeakConstraint {
    pub pos: Vec<usize>,
    pub neg: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GroundProgram {
    atoms: Vec<String>,
    rules: Vec<Rule>,
    weak: Vec<WeakConstraint>,
}

impl GroundProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Index of `atom`, adding it to the Herbrand base if new.
    pub fn intern(&mut self, atom: &str) -> usize {
        match self.atoms.iter().position(|a| a == atom) {
            Some(i) => i,
            None => {
                self.atoms.push(atom.to_string());
                self.atoms.len() - 1
            }
        }
    }

    pub fn add_rule(&mut self, head: &[&str], pos: &[&str], neg: &[&str]) {
        let rule = Rule {
            head: head.iter().map(|a| self.intern(a)).collect(),
            pos: pos.iter().map(|a| self.intern(a)).collect(),
            neg: neg.iter().map(|a| self.intern(a)).collect(),
        };
        self.rules.push(rule);
    }

    pub fn add_weak(&mut self, pos: &[&str], neg: &[&str]) {
        let weak = WeakConstraint {
            pos: pos.iter().map(|a| self.intern(a)).collect(),
            neg: neg.iter().map(|a| self.intern(a)).collect(),
        };
        self.weak.push(weak);
    }

    pub fn atoms(&self) -> &[String] {
        &self.atoms
    }

    pub fn herbrand_base(&self) -> AtomSet {
        self.atoms.iter().cloned().collect()
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn weak_constraints(&self) -> &[WeakConstraint] {
        &self.weak
    }

    pub fn is_positive(&self) -> bool {
        self.rules.iter().all(|r| r.neg.is_empty())
    }

    fn mask_of(&self, set: &AtomSet) -> u64 {
        self.atoms
            .iter()
            .enumerate()
            .filter(|(_, a)| set.contains(*a))
            .fold(0, |m, (i, _)| m | 1 << i)
    }

    fn set_of(&self, mask: u64) -> AtomSet {
        self.atoms
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, a)| a.clone())
            .collect()
    }

    fn check_size(&self, limit: usize) -> Result<(), AspError> {
        let limit = limit.min(HARD_MAX_ATOMS);
        if self.atoms.len() > limit {
            return Err(AspError::TooManyAtoms {
                atoms: self.atoms.len(),
                limit,
            });
        }
        Ok(())
    }
}

impl fmt::Display for GroundProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = |ids: &[usize]| -> Vec<String> { ids.iter().map(|&i| self.atoms[i].clone()).collect() };
        let body = |pos: &[usize], neg: &[usize]| -> String {
            let mut lits = names(pos);
            lits.extend(neg.iter().map(|&i| format!("not {}", self.atoms[i])));
            lits.join(", ")
        };
        for r in &self.rules {
            let head = names(&r.head).join(" v ");
            if r.pos.is_empty() && r.neg.is_empty() {
                writeln!(f, "{head}.")?;
            } else if head.is_empty() {
                writeln!(f, ":- {}.", body(&r.pos, &r.neg))?;
            } else {
                writeln!(f, "{head} :- {}.", body(&r.pos, &r.neg))?;
            }
        }
        for w in &self.weak {
            writeln!(f, ":~ {}.", body(&w.pos, &w.neg))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Atom(String),
    Comma,
    Dot,
    If,
    Weak,
    Or,
    Not,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, AspError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| AspError::Syntax { line, message };
        let chars: Vec<char> = raw.chars().collect();
        let mut p = 0;
        while p < chars.len() {
            let c = chars[p];
            match c {
                '%' => break,
                c if c.is_whitespace() => p += 1,
                ',' => {
                    out.push((Tok::Comma, line));
                    p += 1;
                }
                '.' => {
                    out.push((Tok::Dot, line));
                    p += 1;
                }
                '|' => {
                    out.push((Tok::Or, line));
                    p += 1;
                }
                ':' => match chars.get(p + 1) {
                    Some('-') => {
                        out.push((Tok::If, line));
                        p += 2;
                    }
                    Some('~') => {
                        out.push((Tok::Weak, line));
                        p += 2;
                    }
                    _ => return Err(err("expected `:-` or `:~`".into())),
                },
                c if c.is_ascii_lowercase() => {
                    let start = p;
                    while p < chars.len() && (chars[p].is_ascii_alphanumeric() || chars[p] == '_') {
                        p += 1;
                    }
                    let mut name: String = chars[start..p].iter().collect();
                    if chars.get(p) == Some(&'(') {
                        let close = chars[p..]
                            .iter()
                            .position(|&c| c == ')')
                            .ok_or_else(|| err(format!("unclosed argument list after `{name}`")))?;
                        let inner: String = chars[p + 1..p + close].iter().collect();
                        let args: Vec<&str> = inner.split(',').map(str::trim).collect();
                        for a in &args {
                            let ok = !a.is_empty()
                                && (a.chars().all(|c| c.is_ascii_digit())
                                    || (a.starts_with(|c: char| c.is_ascii_lowercase())
                                        && a.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')));
                            if !ok {
                                return Err(err(format!("`{a}` is not a ground term")));
                            }
                        }
                        name = format!("{name}({})", args.join(","));
                        p += close + 1;
                    }
                    let tok = match name.as_str() {
                        "v" => Tok::Or,
                        "not" => Tok::Not,
                        _ => Tok::Atom(name),
                    };
                    out.push((tok, line));
                }
                c if c.is_ascii_uppercase() || c == '_' => {
                    return Err(err("variables are not supported in ground programs".into()));
                }
                other => return Err(err(format!("unexpected character `{other}`"))),
            }
        }
    }
    Ok(out)
}

/// Parses program text into a [`GroundProgram`].
pub fn parse_program(text: &str) -> Result<GroundProgram, AspError> {
    let toks = lex(text)?;
    let mut program = GroundProgram::new();
    let last_line = text.lines().count().max(1);
    let mut p = 0;
    let line_at = |p: usize| toks.get(p).map_or(last_line, |t| t.1);
    let syntax = |p: usize, message: &str| AspError::Syntax {
        line: line_at(p),
        message: message.to_string(),
    };

    // A literal list: `[not] atom (, [not] atom)*`.
    let body = |p: &mut usize, program: &mut GroundProgram| -> Result<(Vec<usize>, Vec<usize>), AspError> {
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        loop {
            let negated = matches!(toks.get(*p), Some((Tok::Not, _)));
            if negated {
                *p += 1;
            }
            match toks.get(*p) {
                Some((Tok::Atom(a), _)) => {
                    let id = program.intern(a);
                    if negated { neg.push(id) } else { pos.push(id) }
                    *p += 1;
                }
                _ => return Err(syntax(*p, "expected a body literal")),
            }
            match toks.get(*p) {
                Some((Tok::Comma, _)) => *p += 1,
                Some((Tok::Dot, _)) => {
                    *p += 1;
                    return Ok((pos, neg));
                }
                _ => return Err(syntax(*p, "expected `,` or `.` after a literal")),
            }
        }
    };

    while p < toks.len() {
        match &toks[p].0 {
            Tok::If => {
                p += 1;
                let (pos, neg) = body(&mut p, &mut program)?;
                program.rules.push(Rule {
                    head: Vec::new(),
                    pos,
                    neg,
                });
            }
            Tok::Weak => {
                p += 1;
                let (pos, neg) = body(&mut p, &mut program)?;
                program.weak.push(WeakConstraint { pos, neg });
            }
            Tok::Atom(_) => {
                let mut head = Vec::new();
                loop {
                    match toks.get(p) {
                        Some((Tok::Atom(a), _)) => {
                            let id = program.intern(a);
                            if !head.contains(&id) {
                                head.push(id);
                            }
                            p += 1;
                        }
                        _ => return Err(syntax(p, "expected a head atom")),
                    }
                    match toks.get(p) {
                        Some((Tok::Or, _)) => p += 1,
                        _ => break,
                    }
                }
                match toks.get(p) {
                    Some((Tok::Dot, _)) => {
                        p += 1;
                        program.rules.push(Rule {
                            head,
                            ..Rule::default()
                        });
                    }
                    Some((Tok::If, _)) => {
                        p += 1;
                        let (pos, neg) = body(&mut p, &mut program)?;
                        program.rules.push(Rule { head, pos, neg });
                    }
                    _ => return Err(syntax(p, "expected `.` or `:-` after the head")),
                }
            }
            _ => return Err(syntax(p, "expected a rule")),
        }
    }
    Ok(program)
}

struct Masks {
    head: u64,
    pos: u64,
    neg: u64,
}

fn masks(rules: impl Iterator<Item = (Vec<usize>, Vec<usize>, Vec<usize>)>) -> Vec<Masks> {
    let m = |ids: &[usize]| ids.iter().fold(0u64, |acc, &i| acc | 1 << i);
    rules
        .map(|(h, p, n)| Masks {
            head: m(&h),
            pos: m(&p),
            neg: m(&n),
        })
        .collect()
}

fn rule_masks(program: &GroundProgram) -> Vec<Masks> {
    masks(
        program
            .rules
            .iter()
            .map(|r| (r.head.clone(), r.pos.clone(), r.neg.clone())),
    )
}

/// Whether `m` satisfies every rule, reading negation against `reference`.
fn satisfies(rules: &[Masks], m: u64, reference: u64) -> bool {
    rules
        .iter()
        .all(|r| r.pos & m != r.pos || r.neg & reference != 0 || r.head & m != 0)
}

/// The Gelfond-Lifschitz transform of `program` with respect to `s`.
pub fn reduct(program: &GroundProgram, s: &AtomSet) -> GroundProgram {
    let s: BTreeSet<usize> = program
        .atoms
        .iter()
        .enumerate()
        .filter(|(_, a)| s.contains(*a))
        .map(|(i, _)| i)
        .collect();
    GroundProgram {
        atoms: program.atoms.clone(),
        rules: program
            .rules
            .iter()
            .filter(|r| !r.neg.iter().any(|n| s.contains(n)))
            .map(|r| Rule {
                head: r.head.clone(),
                pos: r.pos.clone(),
                neg: Vec::new(),
            })
            .collect(),
        weak: Vec::new(),
    }
}

fn sort_models(mut models: Vec<AtomSet>) -> Vec<AtomSet> {
    models.sort_by(|a, b| a.iter().cmp(b.iter()));
    models
}

/// All subset-minimal models of a negation-free program.
pub fn minimal_models(program: &GroundProgram, limit: usize) -> Result<Vec<AtomSet>, AspError> {
    if !program.is_positive() {
        return Err(AspError::NotPositive);
    }
    program.check_size(limit)?;
    let rules = rule_masks(program);
    let mut candidates: Vec<u64> = (0u64..1 << program.atoms.len())
        .filter(|&m| satisfies(&rules, m, 0))
        .collect();
    candidates.sort_by_key(|m| m.count_ones());
    let mut minimal: Vec<u64> = Vec::new();
    for m in candidates {
        if !minimal.iter().any(|&k| (k & m) == k) {
            minimal.push(m);
        }
    }
    Ok(sort_models(minimal.into_iter().map(|m| program.set_of(m)).collect()))
}

fn is_stable(rules: &[Masks], s: u64) -> bool {
    if !satisfies(rules, s, s) {
        return false;
    }
    // every proper subset of s must fail the reduct
    let mut sub = s;
    while sub != 0 {
        sub = (sub - 1) & s;
        if satisfies(rules, sub, s) {
            return false;
        }
    }
    true
}

/// Stable models, keeping only those with the fewest violated weak constraints.
pub fn stable_models(program: &GroundProgram, limit: usize) -> Result<Vec<AtomSet>, AspError> {
    program.check_size(limit)?;
    let rules = rule_masks(program);
    let weak = masks(program.weak.iter().map(|w| (Vec::new(), w.pos.clone(), w.neg.clone())));
    let stable: Vec<u64> = (0u64..1 << program.atoms.len())
        .filter(|&s| is_stable(&rules, s))
        .collect();
    let cost = |s: u64| weak.iter().filter(|w| w.pos & s == w.pos && w.neg & s == 0).count();
    let best = stable.iter().map(|&s| cost(s)).min().unwrap_or(0);
    Ok(sort_models(
        stable
            .into_iter()
            .filter(|&s| cost(s) == best)
            .map(|s| program.set_of(s))
            .collect(),
    ))
}

/// Whether the query atoms hold together in some (brave) or every (cautious)
/// stable model. Cautious is vacuously true without models.
pub fn answer_query_ground(
    program: &GroundProgram,
    query: &[&str],
    semantics: Semantics,
    limit: usize,
) -> Result<bool, AspError> {
    let models = stable_models(program, limit)?;
    let holds = |m: &AtomSet| query.iter().all(|q| m.contains(*q));
    Ok(match semantics {
        Semantics::Brave => models.iter().any(holds),
        Semantics::Cautious => models.iter().all(holds),
    })
}

/// `{a, e}`
pub fn format_model(model: &AtomSet) -> String {
    let atoms: Vec<&str> = model.iter().map(String::as_str).collect();
    format!("{{{}}}", atoms.join(", "))
}

/// Whether `m` is a classical model of every rule in `program`.
pub fn is_model(program: &GroundProgram, m: &AtomSet) -> bool {
    let mask = program.mask_of(m);
    satisfies(&rule_masks(program), mask, mask)
}

/// Reads the atom limit from the environment, falling back to the default.
pub fn limit_from_env() -> Result<usize, String> {
    match std::env::var(MAX_ATOMS_ENV) {
        Err(_) => Ok(DEFAULT_MAX_ATOMS),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| (1..=HARD_MAX_ATOMS).contains(&n))
            .ok_or_else(|| format!("{MAX_ATOMS_ENV} must be an integer in 1..={HARD_MAX_ATOMS}, got `{v}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const A1: &str = include_str!("../data/example_a1.lp");

    fn set(atoms: &[&str]) -> AtomSet {
        atoms.iter().map(|a| a.to_string()).collect()
    }

    #[test]
    fn parses_example() {
        let p = parse_program(A1).unwrap();
        assert_eq!(p.rules().len(), 4);
        assert_eq!(p.herbrand_base(), set(&["a", "b", "c", "d", "e", "f"]));
        assert!(parse_program("").unwrap().rules().is_empty());
        assert!(matches!(
            parse_program("a :- .").unwrap_err(),
            AspError::Syntax { line: 1, .. }
        ));
        assert!(matches!(
            parse_program("a.\nb :- X.").unwrap_err(),
            AspError::Syntax { line: 2, .. }
        ));
        assert!(matches!(parse_program("a").unwrap_err(), AspError::Syntax { .. }));
    }

    #[test]
    fn ground_arguments_are_atoms() {
        let p = parse_program("p(a, 1) | q :- r(b).\nr(b).").unwrap();
        assert_eq!(p.herbrand_base(), set(&["p(a,1)", "q", "r(b)"]));
        assert_eq!(stable_models(&p, 20).unwrap().len(), 2);
    }

    #[test]
    fn reduct_of_example() {
        let p = parse_program(A1).unwrap();
        let r = reduct(&p, &set(&["e", "a"]));
        assert_eq!(r.to_string(), "a v b :- c.\nd :- b.\na v b :- e.\ne.\n");
        let r = reduct(&p, &set(&["f"]));
        assert_eq!(r.rules().len(), 3);
        let positive = parse_program("a :- b.\nb.").unwrap();
        assert_eq!(reduct(&positive, &set(&["a"])), positive);
    }

    #[test]
    fn minimal_models_basics() {
        let p = parse_program(A1).unwrap();
        let r = reduct(&p, &set(&["e", "a"]));
        assert!(minimal_models(&r, 20).unwrap().contains(&set(&["a", "e"])));
        assert_eq!(minimal_models(&GroundProgram::new(), 20).unwrap(), vec![set(&[])]);
        assert_eq!(
            minimal_models(&parse_program("e.").unwrap(), 20).unwrap(),
            vec![set(&["e"])]
        );
        assert_eq!(minimal_models(&p, 20).unwrap_err(), AspError::NotPositive);
    }

    #[test]
    fn stable_models_of_example() {
        let p = parse_program(A1).unwrap();
        let models = stable_models(&p, 20).unwrap();
        assert_eq!(models, vec![set(&["a", "e"]), set(&["b", "d", "e"])]);
        let shown: Vec<String> = models.iter().map(format_model).collect();
        assert_eq!(shown, ["{a, e}", "{b, d, e}"]);

        let hard = parse_program(&format!("{A1}\n:- a.")).unwrap();
        assert_eq!(stable_models(&hard, 20).unwrap(), vec![set(&["b", "d", "e"])]);

        let weak = parse_program(&format!("{A1}\n:~ b.\n:~ d.")).unwrap();
        assert_eq!(stable_models(&weak, 20).unwrap(), vec![set(&["a", "e"])]);
    }

    #[test]
    fn queries() {
        let p = parse_program(A1).unwrap();
        assert!(answer_query_ground(&p, &["e"], Semantics::Cautious, 20).unwrap());
        assert!(!answer_query_ground(&p, &["a"], Semantics::Cautious, 20).unwrap());
        assert!(answer_query_ground(&p, &["a"], Semantics::Brave, 20).unwrap());
        let none = parse_program("a :- not a.").unwrap();
        assert!(stable_models(&none, 20).unwrap().is_empty());
        assert!(answer_query_ground(&none, &["a"], Semantics::Cautious, 20).unwrap());
        assert!(!answer_query_ground(&none, &["a"], Semantics::Brave, 20).unwrap());
    }

    #[test]
    fn limit_is_enforced() {
        let text: String = (0..5).map(|i| format!("a{i}.\n")).collect();
        let p = parse_program(&text).unwrap();
        assert_eq!(
            stable_models(&p, 4).unwrap_err(),
            AspError::TooManyAtoms { atoms: 5, limit: 4 }
        );
    }
}
