//! Co-safe temporal formulas whose atomic propositions are linear inequalities
//! over beliefs.
//!
//! Formulas are kept in negation-normal form: negation only ever wraps an atom,
//! and the only temporal operators are next (`X`), until (`U`) and eventually
//! (`F`). Every value built through the smart constructors ([`and`], [`or`],
//! [`until`], ...) is in canonical form: conjunctions and disjunctions are
//! flattened, sorted and deduplicated, and `true`/`false` are absorbed. The
//! automaton compiler relies on that canonical form to recognise repeated
//! progression states.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest number of distinct atoms a single objective may reference.
pub const MAX_ATOMS: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormulaError {
    #[error("syntax error at offset {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("unknown atom `{name}` at offset {pos}")]
    UnknownAtom { name: String, pos: usize },
    #[error("`{construct}` at offset {pos} is not allowed in a co-safe formula")]
    NonCoSafe { construct: String, pos: usize },
    #[error("atom `{atom}` needs a belief of dimension > {max_index}, got {dim}")]
    DimensionMismatch {
        atom: String,
        max_index: usize,
        dim: usize,
    },
    #[error("formula references {0} atoms, at most {MAX_ATOMS} are supported")]
    TooManyAtoms(usize),
}

pub type Result<T, E = FormulaError> = std::result::Result<T, E>;

/// `>` when strict, `>=` otherwise.
fn compare(lhs: f64, threshold: f64, strict: bool) -> bool {
    if strict {
        lhs > threshold
    } else {
        lhs >= threshold
    }
}

fn comparator(strict: bool) -> &'static str {
    if strict {
        ">"
    } else {
        ">="
    }
}

/// `pᵀb > c` (or `>=`), with `p` stored sparsely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearAtom {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub threshold: f64,
    pub strict: bool,
}

impl LinearAtom {
    pub fn new(name: impl Into<String>, coeffs: Vec<(usize, f64)>, threshold: f64, strict: bool) -> Self {
        Self {
            name: name.into(),
            coeffs,
            threshold,
            strict,
        }
    }

    /// Indicator atom `b(index) > threshold` / `>= threshold`.
    pub fn indicator(name: impl Into<String>, index: usize, threshold: f64, strict: bool) -> Self {
        Self::new(name, vec![(index, 1.0)], threshold, strict)
    }

    pub fn max_index(&self) -> Option<usize> {
        self.coeffs.iter().map(|&(i, _)| i).max()
    }

    pub fn dot(&self, belief: &[f64]) -> Result<f64> {
        if let Some(max) = self.max_index() {
            if max >= belief.len() {
                return Err(FormulaError::DimensionMismatch {
                    atom: self.name.clone(),
                    max_index: max,
                    dim: belief.len(),
                });
            }
        }
        Ok(self.coeffs.iter().map(|&(i, c)| c * belief[i]).sum())
    }
}

/// A grouped atom: one alphabet letter standing for a disjunction of inequalities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AnyOf {
    /// `∃i: b(i) > threshold`, i.e. a disjunction of indicator atoms over every state.
    MaxComponent { threshold: f64, strict: bool },
    Members(Vec<LinearAtom>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Atom {
    Linear(LinearAtom),
    AnyOf { name: String, group: AnyOf },
}

impl Atom {
    pub fn name(&self) -> &str {
        match self {
            Atom::Linear(a) => &a.name,
            Atom::AnyOf { name, .. } => name,
        }
    }

    pub fn max_index(&self) -> Option<usize> {
        match self {
            Atom::Linear(a) => a.max_index(),
            Atom::AnyOf { group: AnyOf::MaxComponent { .. }, .. } => None,
            Atom::AnyOf {
                group: AnyOf::Members(ms),
                ..
            } => ms.iter().filter_map(LinearAtom::max_index).max(),
        }
    }

    pub fn eval(&self, belief: &[f64]) -> Result<bool> {
        match self {
            Atom::Linear(a) => eval_atom(a, belief),
            Atom::AnyOf {
                group: AnyOf::MaxComponent { threshold, strict },
                ..
            } => Ok(belief.iter().any(|&x| compare(x, *threshold, *strict))),
            Atom::AnyOf {
                group: AnyOf::Members(ms),
                ..
            } => {
                for m in ms {
                    if eval_atom(m, belief)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
        }
    }

    /// Declaration line in the model-file syntax.
    pub fn declaration(&self) -> String {
        match self {
            Atom::Linear(a) => {
                let coeffs: Vec<String> = a.coeffs.iter().map(|(i, c)| format!("{i}:{c}")).collect();
                format!(
                    "atom {} {{{}}} {} {}",
                    a.name,
                    coeffs.join(","),
                    comparator(a.strict),
                    a.threshold
                )
            }
            Atom::AnyOf {
                name,
                group: AnyOf::MaxComponent { threshold, strict },
            } => format!("anyof {name} = max_component {} {threshold}", comparator(*strict)),
            Atom::AnyOf {
                name,
                group: AnyOf::Members(ms),
            } => {
                let names: Vec<&str> = ms.iter().map(|m| m.name.as_str()).collect();
                format!("anyof {name} = [{}]", names.join(", "))
            }
        }
    }
}

/// Declared atoms, keyed by name.
pub type AtomTable = BTreeMap<String, Atom>;

/// Evaluates `pᵀb > c` (strict) or `pᵀb >= c` with no tolerance.
pub fn eval_atom(atom: &LinearAtom, belief: &[f64]) -> Result<bool> {
    Ok(compare(atom.dot(belief)?, atom.threshold, atom.strict))
}

/// Truth values of an ordered atom list on one belief, one bit per atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabelVector {
    bits: u32,
    width: u8,
}

impl LabelVector {
    pub fn new(bits: u32, width: usize) -> Self {
        assert!(width <= MAX_ATOMS, "label width {width} exceeds {MAX_ATOMS}");
        let mask = if width == 32 { u32::MAX } else { (1u32 << width) - 1 };
        Self {
            bits: bits & mask,
            width: width as u8,
        }
    }

    pub fn from_bools(values: &[bool]) -> Self {
        let bits = values
            .iter()
            .enumerate()
            .fold(0u32, |acc, (i, &v)| if v { acc | (1 << i) } else { acc });
        Self::new(bits, values.len())
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn width(&self) -> usize {
        self.width as usize
    }

    pub fn get(&self, i: usize) -> bool {
        i < self.width() && self.bits & (1 << i) != 0
    }

    /// Every label vector of the given width, in increasing bitmask order.
    pub fn all(width: usize) -> impl Iterator<Item = LabelVector> {
        (0u32..(1u32 << width)).map(move |b| LabelVector::new(b, width))
    }
}

/// Labels a belief against an ordered atom list.
pub fn label_of(belief: &[f64], atoms: &[Atom]) -> Result<LabelVector> {
    if atoms.len() > MAX_ATOMS {
        return Err(FormulaError::TooManyAtoms(atoms.len()));
    }
    let mut bits = 0u32;
    for (i, a) in atoms.iter().enumerate() {
        if a.eval(belief)? {
            bits |= 1 << i;
        }
    }
    Ok(LabelVector::new(bits, atoms.len()))
}

/// Formula AST in negation-normal form. Atoms are indices into the owning
/// [`Objective`]'s atom list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Formula {
    False,
    True,
    Atom(usize),
    NegAtom(usize),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Next(Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
    Eventually(Box<Formula>),
}

pub fn and(items: impl IntoIterator<Item = Formula>) -> Formula {
    junction(items, true)
}

pub fn or(items: impl IntoIterator<Item = Formula>) -> Formula {
    junction(items, false)
}

pub fn next(f: Formula) -> Formula {
    match f {
        Formula::False => Formula::False,
        f => Formula::Next(Box::new(f)),
    }
}

pub fn eventually(f: Formula) -> Formula {
    match f {
        Formula::True => Formula::True,
        Formula::False => Formula::False,
        f @ Formula::Eventually(_) => f,
        f => Formula::Eventually(Box::new(f)),
    }
}

pub fn until(hold: Formula, goal: Formula) -> Formula {
    match (hold, goal) {
        (_, Formula::True) => Formula::True,
        (_, Formula::False) => Formula::False,
        (Formula::False, g) => g,
        (Formula::True, g) => eventually(g),
        (h, g) => Formula::Until(Box::new(h), Box::new(g)),
    }
}

fn junction(items: impl IntoIterator<Item = Formula>, conj: bool) -> Formula {
    // `unit` is neutral, `zero` absorbs.
    let (unit, zero) = if conj {
        (Formula::True, Formula::False)
    } else {
        (Formula::False, Formula::True)
    };
    let mut set = BTreeSet::new();
    for item in items {
        match item {
            Formula::And(xs) if conj => set.extend(xs),
            Formula::Or(xs) if !conj => set.extend(xs),
            x if x == unit => {}
            x if x == zero => return zero,
            x => {
                set.insert(x);
            }
        }
    }
    // a & !a is false, a | !a is true.
    if set.iter().any(|x| match x {
        Formula::Atom(i) => set.contains(&Formula::NegAtom(*i)),
        _ => false,
    }) {
        return zero;
    }
    // Absorption: x & (x | y) = x and x | (x & y) = x.
    let absorbed: Vec<Formula> = set
        .iter()
        .filter(|x| match x {
            Formula::Or(ys) if conj => !ys.iter().any(|y| set.contains(y)),
            Formula::And(ys) if !conj => !ys.iter().any(|y| set.contains(y)),
            _ => true,
        })
        .cloned()
        .collect();
    let mut items = absorbed;
    match items.len() {
        0 => unit,
        1 => items.pop().unwrap(),
        _ if conj => Formula::And(items),
        _ => Formula::Or(items),
    }
}

impl Formula {
    /// Atom indices occurring in the formula, ascending.
    pub fn atoms(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut BTreeSet<usize>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(i) | Formula::NegAtom(i) => {
                out.insert(*i);
            }
            Formula::And(xs) | Formula::Or(xs) => xs.iter().for_each(|x| x.collect_atoms(out)),
            Formula::Next(x) | Formula::Eventually(x) => x.collect_atoms(out),
            Formula::Until(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) | Formula::NegAtom(_) => 0,
            Formula::And(xs) | Formula::Or(xs) => 1 + xs.iter().map(Formula::depth).max().unwrap_or(0),
            Formula::Next(x) | Formula::Eventually(x) => 1 + x.depth(),
            Formula::Until(a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    /// Re-canonicalises a formula built without the smart constructors.
    pub fn canonical(&self) -> Formula {
        match self {
            Formula::And(xs) => and(xs.iter().map(Formula::canonical)),
            Formula::Or(xs) => or(xs.iter().map(Formula::canonical)),
            Formula::Next(x) => next(x.canonical()),
            Formula::Eventually(x) => eventually(x.canonical()),
            Formula::Until(a, b) => until(a.canonical(), b.canonical()),
            f => f.clone(),
        }
    }

    /// Renders the formula in the input grammar, naming atoms with `names`.
    pub fn display<'a>(&'a self, names: &'a [String]) -> FormulaDisplay<'a> {
        FormulaDisplay { formula: self, names }
    }

    fn precedence(&self) -> u8 {
        match self {
            Formula::Until(..) => 0,
            Formula::Or(_) => 1,
            Formula::And(_) => 2,
            _ => 3,
        }
    }
}

pub struct FormulaDisplay<'a> {
    formula: &'a Formula,
    names: &'a [String],
}

impl FormulaDisplay<'_> {
    fn write(&self, f: &mut fmt::Formatter<'_>, node: &Formula, min_prec: u8) -> fmt::Result {
        let paren = node.precedence() < min_prec;
        if paren {
            f.write_str("(")?;
        }
        let name = |i: usize| self.names.get(i).map(String::as_str).unwrap_or("?");
        match node {
            Formula::True => f.write_str("true")?,
            Formula::False => f.write_str("false")?,
            Formula::Atom(i) => f.write_str(name(*i))?,
            Formula::NegAtom(i) => write!(f, "!{}", name(*i))?,
            Formula::And(xs) | Formula::Or(xs) => {
                let (sep, prec) = if matches!(node, Formula::And(_)) {
                    (" & ", 3)
                } else {
                    (" | ", 2)
                };
                for (k, x) in xs.iter().enumerate() {
                    if k > 0 {
                        f.write_str(sep)?;
                    }
                    self.write(f, x, prec)?;
                }
            }
            Formula::Next(x) => {
                f.write_str("X ")?;
                self.write(f, x, 3)?;
            }
            Formula::Eventually(x) => {
                f.write_str("F ")?;
                self.write(f, x, 3)?;
            }
            Formula::Until(a, b) => {
                self.write(f, a, 1)?;
                f.write_str(" U ")?;
                self.write(f, b, 0)?;
            }
        }
        if paren {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for FormulaDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, self.formula, 0)
    }
}

/// A parsed formula together with its atom set, ordered by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub formula: Formula,
    pub atoms: Vec<Atom>,
}

impl Objective {
    pub fn atom_names(&self) -> Vec<String> {
        self.atoms.iter().map(|a| a.name().to_string()).collect()
    }

    pub fn render(&self, f: &Formula) -> String {
        f.display(&self.atom_names()).to_string()
    }

    pub fn label_of(&self, belief: &[f64]) -> Result<LabelVector> {
        label_of(belief, &self.atoms)
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.formula.display(&self.atom_names()))
    }
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    True,
    False,
    Not,
    And,
    Or,
    Next,
    Until,
    Eventually,
    Forbidden(&'static str),
    LParen,
    RParen,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            '!' | '~' => Tok::Not,
            '&' => Tok::And,
            '|' => Tok::Or,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                let word = &text[start..i];
                out.push((
                    match word {
                        "true" => Tok::True,
                        "false" => Tok::False,
                        "X" => Tok::Next,
                        "U" => Tok::Until,
                        "F" => Tok::Eventually,
                        "G" => Tok::Forbidden("G"),
                        "R" => Tok::Forbidden("R"),
                        "W" => Tok::Forbidden("W"),
                        _ => Tok::Ident(word.to_string()),
                    },
                    start,
                ));
                continue;
            }
            '-' if bytes.get(i + 1) == Some(&b'>') => {
                return Err(FormulaError::NonCoSafe {
                    construct: "->".into(),
                    pos: start,
                })
            }
            other => {
                return Err(FormulaError::Syntax {
                    pos: start,
                    message: format!("unexpected character `{other}`"),
                })
            }
        };
        out.push((tok, start));
        i += 1;
    }
    Ok(out)
}

/// Syntax tree before negation is pushed inward.
#[derive(Debug)]
enum Raw {
    True,
    False,
    Ident(String, usize),
    Not(Box<Raw>),
    And(Box<Raw>, Box<Raw>),
    Or(Box<Raw>, Box<Raw>),
    Next(Box<Raw>, usize),
    Until(Box<Raw>, Box<Raw>, usize),
    Eventually(Box<Raw>, usize),
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|&(_, p)| p).unwrap_or(self.end)
    }

    fn until(&mut self) -> Result<Raw> {
        let lhs = self.or()?;
        if self.peek() == Some(&Tok::Until) {
            let at = self.offset();
            self.pos += 1;
            let rhs = self.until()?;
            return Ok(Raw::Until(Box::new(lhs), Box::new(rhs), at));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Raw> {
        let mut lhs = self.and()?;
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            lhs = Raw::Or(Box::new(lhs), Box::new(self.and()?));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Raw> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            lhs = Raw::And(Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Raw> {
        let at = self.offset();
        let Some(tok) = self.peek().cloned() else {
            return Err(FormulaError::Syntax {
                pos: at,
                message: "unexpected end of formula".into(),
            });
        };
        self.pos += 1;
        Ok(match tok {
            Tok::True => Raw::True,
            Tok::False => Raw::False,
            Tok::Ident(name) => Raw::Ident(name, at),
            Tok::Not => Raw::Not(Box::new(self.unary()?)),
            Tok::Next => Raw::Next(Box::new(self.unary()?), at),
            Tok::Eventually => Raw::Eventually(Box::new(self.unary()?), at),
            Tok::LParen => {
                let inner = self.until()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(FormulaError::Syntax {
                        pos: self.offset(),
                        message: "expected `)`".into(),
                    });
                }
                self.pos += 1;
                inner
            }
            Tok::Forbidden(op) => {
                return Err(FormulaError::NonCoSafe {
                    construct: op.into(),
                    pos: at,
                })
            }
            other => {
                return Err(FormulaError::Syntax {
                    pos: at,
                    message: format!("unexpected token {other:?}"),
                })
            }
        })
    }
}

fn collect_names<'a>(raw: &'a Raw, out: &mut Vec<(&'a str, usize)>) {
    match raw {
        Raw::True | Raw::False => {}
        Raw::Ident(n, p) => out.push((n, *p)),
        Raw::Not(x) | Raw::Next(x, _) | Raw::Eventually(x, _) => collect_names(x, out),
        Raw::And(a, b) | Raw::Or(a, b) | Raw::Until(a, b, _) => {
            collect_names(a, out);
            collect_names(b, out);
        }
    }
}

fn to_nnf(raw: &Raw, negated: bool, index: &BTreeMap<&str, usize>) -> Result<Formula> {
    let temporal = |name: &str, pos: usize| {
        Err(FormulaError::NonCoSafe {
            construct: format!("negated {name}"),
            pos,
        })
    };
    Ok(match raw {
        Raw::True if negated => Formula::False,
        Raw::True => Formula::True,
        Raw::False if negated => Formula::True,
        Raw::False => Formula::False,
        Raw::Ident(n, _) => {
            let i = index[n.as_str()];
            if negated {
                Formula::NegAtom(i)
            } else {
                Formula::Atom(i)
            }
        }
        Raw::Not(x) => to_nnf(x, !negated, index)?,
        Raw::And(a, b) | Raw::Or(a, b) => {
            let parts = [to_nnf(a, negated, index)?, to_nnf(b, negated, index)?];
            if matches!(raw, Raw::And(..)) != negated {
                and(parts)
            } else {
                or(parts)
            }
        }
        Raw::Next(_, p) if negated => return temporal("X", *p),
        Raw::Eventually(_, p) if negated => return temporal("F", *p),
        Raw::Until(_, _, p) if negated => return temporal("U", *p),
        Raw::Next(x, _) => next(to_nnf(x, false, index)?),
        Raw::Eventually(x, _) => eventually(to_nnf(x, false, index)?),
        Raw::Until(a, b, _) => until(to_nnf(a, false, index)?, to_nnf(b, false, index)?),
    })
}

/// Parses a co-safe formula. The resulting atom set is exactly the atoms the
/// text references, ordered by name.
pub fn parse_formula(text: &str, table: &AtomTable) -> Result<Objective> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.len(),
    };
    let raw = p.until()?;
    if p.pos < p.toks.len() {
        return Err(FormulaError::Syntax {
            pos: p.offset(),
            message: "trailing input".into(),
        });
    }
    let mut names = Vec::new();
    collect_names(&raw, &mut names);
    let mut used = BTreeSet::new();
    for (n, pos) in names {
        if !table.contains_key(n) {
            return Err(FormulaError::UnknownAtom { name: n.into(), pos });
        }
        used.insert(n);
    }
    if used.len() > MAX_ATOMS {
        return Err(FormulaError::TooManyAtoms(used.len()));
    }
    let index: BTreeMap<&str, usize> = used.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let formula = to_nnf(&raw, false, &index)?;
    let atoms = used.iter().map(|&n| table[n].clone()).collect();
    Ok(Objective { formula, atoms })
}

// ---------------------------------------------------------------------------
// Progression

/// Residual obligation after reading one label: a trace `ℓ·w` satisfies `f`
/// iff `w` satisfies `progress(f, ℓ)`. The result is in canonical disjunctive
/// normal form over temporal sub-obligations.
pub fn progress(f: &Formula, label: LabelVector) -> Formula {
    to_dnf(&step(f, label))
}

fn step(f: &Formula, label: LabelVector) -> Formula {
    match f {
        Formula::True => Formula::True,
        Formula::False => Formula::False,
        Formula::Atom(i) => bool_formula(label.get(*i)),
        Formula::NegAtom(i) => bool_formula(!label.get(*i)),
        Formula::And(xs) => and(xs.iter().map(|x| step(x, label))),
        Formula::Or(xs) => or(xs.iter().map(|x| step(x, label))),
        Formula::Next(x) => (**x).clone(),
        Formula::Until(a, b) => or([step(b, label), and([step(a, label), f.clone()])]),
        Formula::Eventually(x) => or([step(x, label), f.clone()]),
    }
}

fn bool_formula(v: bool) -> Formula {
    if v {
        Formula::True
    } else {
        Formula::False
    }
}

type Clause = BTreeSet<Formula>;

fn clauses(f: &Formula) -> Vec<Clause> {
    match f {
        Formula::True => vec![Clause::new()],
        Formula::False => vec![],
        Formula::Or(xs) => xs.iter().flat_map(clauses).collect(),
        Formula::And(xs) => xs.iter().fold(vec![Clause::new()], |acc, x| {
            let rhs = clauses(x);
            let mut out = Vec::with_capacity(acc.len() * rhs.len());
            for l in &acc {
                for r in &rhs {
                    out.push(l.union(r).cloned().collect());
                }
            }
            out
        }),
        lit => vec![Clause::from([lit.clone()])],
    }
}

/// Disjunctive normal form with contradictory and subsumed clauses removed.
/// Over a fixed set of temporal literals there are finitely many such
/// formulas, which keeps the progression closure finite.
pub fn to_dnf(f: &Formula) -> Formula {
    let mut cs: Vec<Clause> = clauses(f)
        .into_iter()
        .filter(|c| {
            !c.iter().any(|x| match x {
                Formula::Atom(i) => c.contains(&Formula::NegAtom(*i)),
                _ => false,
            })
        })
        .collect();
    cs.sort_by_key(|c| c.len());
    cs.dedup();
    let mut kept: Vec<Clause> = Vec::new();
    for c in cs {
        if !kept.iter().any(|k| k.is_subset(&c)) {
            kept.push(c);
        }
    }
    or(kept.into_iter().map(and))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Satisfied,
    Violated,
    Undetermined,
}

/// Progresses `f` through `trace`, stopping as soon as the residual is
/// `true` or `false`.
pub fn trace_satisfies(f: &Formula, trace: &[LabelVector]) -> Verdict {
    let mut cur = f.clone();
    let mut rest = trace.iter();
    loop {
        match cur {
            Formula::True => return Verdict::Satisfied,
            Formula::False => return Verdict::Violated,
            _ => {}
        }
        match rest.next() {
            Some(&label) => cur = progress(&cur, label),
            None => return Verdict::Undetermined,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(names: &[&str]) -> AtomTable {
        names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.to_string(), Atom::Linear(LinearAtom::indicator(*n, i, 0.5, true))))
            .collect()
    }

    fn lbl(bits: &[bool]) -> LabelVector {
        LabelVector::from_bools(bits)
    }

    /// Direct recursive good-prefix semantics on a finite word: a formula
    /// holds at position `i` when the letters `w[i..]` already guarantee it.
    fn holds(f: &Formula, w: &[LabelVector], i: usize) -> bool {
        match f {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom(a) => i < w.len() && w[i].get(*a),
            Formula::NegAtom(a) => i < w.len() && !w[i].get(*a),
            Formula::And(xs) => xs.iter().all(|x| holds(x, w, i)),
            Formula::Or(xs) => xs.iter().any(|x| holds(x, w, i)),
            Formula::Next(x) => i < w.len() && holds(x, w, i + 1),
            Formula::Eventually(x) => (i..=w.len()).any(|j| holds(x, w, j)),
            Formula::Until(a, b) => {
                (i..=w.len()).any(|j| holds(b, w, j) && (i..j).all(|k| holds(a, w, k)))
            }
        }
    }

    #[test]
    fn parses_eventually() {
        let obj = parse_formula("F (goal)", &table(&["goal"])).unwrap();
        assert_eq!(obj.formula, Formula::Eventually(Box::new(Formula::Atom(0))));
        assert_eq!(obj.atoms.len(), 1);
    }

    #[test]
    fn parses_probing_objective() {
        let obj = parse_formula("(!goal U measured) & F goal & F measured", &table(&["measured", "goal"])).unwrap();
        // goal < measured lexicographically
        assert_eq!(obj.atom_names(), vec!["goal", "measured"]);
        let (g, m) = (Formula::Atom(0), Formula::Atom(1));
        let expected = and([
            until(Formula::NegAtom(0), m.clone()),
            eventually(g),
            eventually(m),
        ]);
        assert_eq!(obj.formula, expected);
        assert!(matches!(obj.formula, Formula::And(ref xs) if xs.len() == 3));
    }

    #[test]
    fn rejects_always_and_negated_temporal() {
        let t = table(&["goal", "a"]);
        assert!(matches!(parse_formula("G goal", &t), Err(FormulaError::NonCoSafe { .. })));
        assert!(matches!(parse_formula("!F goal", &t), Err(FormulaError::NonCoSafe { .. })));
        assert!(matches!(parse_formula("!(a U goal)", &t), Err(FormulaError::NonCoSafe { .. })));
        assert!(matches!(parse_formula("a -> goal", &t), Err(FormulaError::NonCoSafe { .. })));
    }

    #[test]
    fn reports_unknown_atom_and_syntax_position() {
        let t = table(&["a"]);
        assert_eq!(
            parse_formula("a & b", &t),
            Err(FormulaError::UnknownAtom { name: "b".into(), pos: 4 })
        );
        assert!(matches!(parse_formula("(a & ", &t), Err(FormulaError::Syntax { pos: 5, .. })));
        assert!(matches!(parse_formula("a a", &t), Err(FormulaError::Syntax { pos: 2, .. })));
        assert!(matches!(parse_formula("a $", &t), Err(FormulaError::Syntax { pos: 2, .. })));
    }

    #[test]
    fn negation_pushed_to_atoms() {
        let obj = parse_formula("!(a & !b) U c", &table(&["a", "b", "c"])).unwrap();
        assert_eq!(
            obj.formula,
            until(or([Formula::NegAtom(0), Formula::Atom(1)]), Formula::Atom(2))
        );
    }

    #[test]
    fn until_is_right_associative_and_loosest() {
        let t = table(&["a", "b", "c"]);
        let obj = parse_formula("a U b U c | a", &t).unwrap();
        let (a, b, c) = (Formula::Atom(0), Formula::Atom(1), Formula::Atom(2));
        assert_eq!(obj.formula, until(a.clone(), until(b, or([c, a]))));
    }

    #[test]
    fn eval_atom_examples() {
        let confident = LinearAtom::indicator("m", 1, 0.9, true);
        assert!(eval_atom(&confident, &[0.05, 0.95]).unwrap());
        let zero = LinearAtom::new("z", vec![], 0.0, true);
        assert!(!eval_atom(&zero, &[1.0]).unwrap());
        let goal = LinearAtom::indicator("g", 2, 1.0, false);
        assert!(eval_atom(&goal, &[0.0, 0.0, 1.0]).unwrap());
        assert!(matches!(
            eval_atom(&goal, &[1.0, 0.0]),
            Err(FormulaError::DimensionMismatch { max_index: 2, dim: 2, .. })
        ));
    }

    #[test]
    fn label_of_examples() {
        let m = Atom::AnyOf {
            name: "m".into(),
            group: AnyOf::MaxComponent { threshold: 0.9, strict: true },
        };
        let uniform = vec![1.0 / 16.0; 16];
        assert_eq!(label_of(&uniform, std::slice::from_ref(&m)).unwrap().bits(), 0);
        let mut point = vec![0.0; 16];
        point[5] = 1.0;
        let e5 = Atom::Linear(LinearAtom::indicator("e", 5, 0.9, true));
        assert_eq!(label_of(&point, &[e5, m]).unwrap().bits(), 0b11);
    }

    #[test]
    fn progress_examples() {
        let a = Formula::Atom(0);
        assert_eq!(progress(&a, lbl(&[true])), Formula::True);
        let fa = eventually(a.clone());
        assert_eq!(progress(&fa, lbl(&[false])), fa);
        // !g U m with g = atom 0, m = atom 1
        let u = until(Formula::NegAtom(0), Formula::Atom(1));
        assert_eq!(progress(&u, lbl(&[false, false])), u);
        assert_eq!(progress(&u, lbl(&[true, false])), Formula::False);
        assert_eq!(progress(&u, lbl(&[true, true])), Formula::True);
        let next = next(Formula::Atom(1));
        assert_eq!(progress(&next, lbl(&[false, false])), Formula::Atom(1));
    }

    #[test]
    fn trace_satisfies_examples() {
        let fa = eventually(Formula::Atom(0));
        assert_eq!(trace_satisfies(&fa, &[lbl(&[false]), lbl(&[true])]), Verdict::Satisfied);
        assert_eq!(trace_satisfies(&fa, &[lbl(&[false])]), Verdict::Undetermined);
        // (!g U m) & F g, g = 0, m = 1; goal first without measure is a failure
        let f = and([until(Formula::NegAtom(0), Formula::Atom(1)), eventually(Formula::Atom(0))]);
        assert_eq!(trace_satisfies(&f, &[lbl(&[true, false])]), Verdict::Violated);
        assert_eq!(trace_satisfies(&Formula::True, &[]), Verdict::Satisfied);
    }

    #[test]
    fn display_round_trips_fixed_cases() {
        let t = table(&["a", "b", "c"]);
        for src in [
            "a U (b U c)",
            "(a U b) U c",
            "X (a | b) & F !c",
            "F (a & X (b U c))",
            "!a | b & c",
            "true U a",
            "false",
        ] {
            let obj = parse_formula(src, &t).unwrap();
            let printed = obj.to_string();
            let again = parse_formula(&printed, &t).unwrap();
            assert_eq!(again.formula.display(&obj.atom_names()).to_string(), printed, "{src}");
        }
    }

    fn arb_formula(atoms: usize, depth: u32) -> impl Strategy<Value = Formula> {
        let leaf = prop_oneof![
            Just(Formula::True),
            (0..atoms).prop_map(Formula::Atom),
            (0..atoms).prop_map(Formula::NegAtom),
        ];
        leaf.prop_recursive(depth, 32, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| and([a, b])),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| or([a, b])),
                inner.clone().prop_map(next),
                inner.clone().prop_map(eventually),
                (inner.clone(), inner).prop_map(|(a, b)| until(a, b)),
            ]
        })
    }

    fn arb_word(atoms: usize, max_len: usize) -> impl Strategy<Value = Vec<LabelVector>> {
        prop::collection::vec((0u32..(1 << atoms)).prop_map(move |b| LabelVector::new(b, atoms)), 0..=max_len)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn print_parse_is_identity_up_to_canonical_form(f in arb_formula(3, 4)) {
            let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
            let t = table(&["a", "b", "c"]);
            let printed = f.display(&names).to_string();
            let obj = parse_formula(&printed, &t).unwrap();
            // parsing renumbers atoms to the referenced subset
            let used: Vec<String> = obj.atom_names();
            prop_assert_eq!(obj.formula.display(&used).to_string(), printed);
        }

        #[test]
        fn progression_agrees_with_direct_semantics(f in arb_formula(3, 3), w in arb_word(3, 6), seed in 0u32..4096) {
            // Progression simplifies propositional tautologies, so a prefix can be
            // accepted before strict finite semantics sees the next letter. Check
            // both inclusions: strict truth implies acceptance, and acceptance
            // implies strict truth on every extension covering the formula's depth.
            let verdict = trace_satisfies(&f, &w);
            if holds(&f, &w, 0) {
                prop_assert_eq!(verdict, Verdict::Satisfied);
            }
            let pad = f.depth();
            let ext = |k: u32| -> Vec<LabelVector> {
                let mut e = w.clone();
                let mut r = k.wrapping_mul(2654435761).wrapping_add(seed);
                for _ in 0..pad {
                    e.push(LabelVector::new(r & 7, 3));
                    r = r.rotate_left(3) ^ 0x9e37;
                }
                e
            };
            if verdict == Verdict::Satisfied {
                for k in 0..16 {
                    prop_assert!(holds(&f, &ext(k), 0));
                }
            }
            if verdict == Verdict::Violated {
                for k in 0..16 {
                    prop_assert!(!holds(&f, &ext(k), 0));
                }
            }
        }


        #[test]
        fn nnf_has_no_negated_compound(f in arb_formula(3, 4)) {
            fn ok(f: &Formula) -> bool {
                match f {
                    Formula::And(xs) | Formula::Or(xs) => xs.iter().all(ok),
                    Formula::Next(x) | Formula::Eventually(x) => ok(x),
                    Formula::Until(a, b) => ok(a) && ok(b),
                    _ => true,
                }
            }
            let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
            let src = format!("!({}) | a", f.display(&names));
            // negating a temporal operator is rejected, anything else lands in NNF
            match parse_formula(&src, &table(&["a", "b", "c"])) {
                Ok(obj) => prop_assert!(ok(&obj.formula)),
                Err(e) => { let ok = matches!(e, FormulaError::NonCoSafe { .. }); prop_assert!(ok) },
            }
        }

        #[test]
        fn strict_atom_stays_true_when_mass_moves_toward_it(
            raw in prop::collection::vec(0.01f64..1.0, 4),
            idx in 0usize..4,
            t in 0.0f64..1.0,
        ) {
            let s: f64 = raw.iter().sum();
            let b: Vec<f64> = raw.iter().map(|x| x / s).collect();
            let atom = LinearAtom::indicator("e", idx, b[idx] - 1e-3, true);
            prop_assert!(eval_atom(&atom, &b).unwrap());
            let moved: Vec<f64> = b.iter().enumerate()
                .map(|(i, &x)| (1.0 - t) * x + if i == idx { t } else { 0.0 })
                .collect();
            prop_assert!(eval_atom(&atom, &moved).unwrap());
        }
    }
}
