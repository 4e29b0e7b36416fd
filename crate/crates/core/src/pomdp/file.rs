//! Line-oriented text model format.
//!
//! ```text
//! # comment
//! states 2
//! actions go stay
//! observations lo hi
//! init 0 1
//! T 0 go 1 1          # T s a s' p, actions/observations by index or name
//! O 1 hi 1            # O s o p
//! atom high {1:1} > 0.9
//! anyof sure = max_component >= 0.99
//! objective F high
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::formula::{AnyOf, Atom, AtomTable, LinearAtom};

use super::{LoadedModel, ModelError, Pomdp, Result, SparseRow};

fn perr(line: usize, message: impl Into<String>) -> ModelError {
    ModelError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_usize(tok: &str, line: usize, what: &str) -> Result<usize> {
    tok.parse().map_err(|_| perr(line, format!("expected {what} index, got `{tok}`")))
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse().map_err(|_| perr(line, format!("expected a number, got `{tok}`")))
}

fn resolve(tok: &str, names: &[String], line: usize, kind: &'static str) -> Result<usize> {
    if let Some(i) = names.iter().position(|n| n == tok) {
        return Ok(i);
    }
    let i = parse_usize(tok, line, kind)?;
    if i >= names.len() {
        return Err(perr(line, format!("{kind} index {i} out of range (count {})", names.len())));
    }
    Ok(i)
}

fn parse_comparator(tok: &str, line: usize) -> Result<bool> {
    match tok {
        ">" => Ok(true),
        ">=" => Ok(false),
        _ => Err(perr(line, format!("expected `>` or `>=`, got `{tok}`"))),
    }
}

/// `{i:c, j:d}` with possible spaces.
fn parse_coeffs(text: &str, line: usize) -> Result<Vec<(usize, f64)>> {
    let inner = text
        .trim()
        .strip_prefix('{')
        .and_then(|t| t.strip_suffix('}'))
        .ok_or_else(|| perr(line, "coefficients must be written as {index:value,...}"))?;
    let mut out: Vec<(usize, f64)> = Vec::new();
    for part in inner.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (i, c) = part
            .split_once(':')
            .ok_or_else(|| perr(line, format!("expected index:value, got `{part}`")))?;
        let i = parse_usize(i.trim(), line, "state")?;
        if out.iter().any(|&(j, _)| j == i) {
            return Err(perr(line, format!("duplicate coefficient for state {i}")));
        }
        out.push((i, parse_f64(c.trim(), line)?));
    }
    Ok(out)
}

enum PendingAnyOf {
    Max { threshold: f64, strict: bool },
    Members(Vec<String>),
}

/// Parses a model from text and validates it, including its objective.
pub fn parse_model(text: &str) -> Result<LoadedModel> {
    let mut states: Option<usize> = None;
    let mut actions: Option<Vec<String>> = None;
    let mut observations: Option<Vec<String>> = None;
    let mut init: SparseRow = Vec::new();
    let mut trans: BTreeMap<(usize, usize), SparseRow> = BTreeMap::new();
    let mut obs: BTreeMap<usize, SparseRow> = BTreeMap::new();
    let mut linear: BTreeMap<String, (usize, LinearAtom)> = BTreeMap::new();
    let mut grouped: BTreeMap<String, (usize, PendingAnyOf)> = BTreeMap::new();
    let mut objective: Option<String> = None;

    let need_states = |states: Option<usize>, line: usize| states.ok_or_else(|| perr(line, "`states` must come first"));

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (keyword, rest) = content.split_once(char::is_whitespace).unwrap_or((content, ""));
        let rest = rest.trim();
        let toks: Vec<&str> = rest.split_whitespace().collect();
        match keyword {
            "states" => {
                if toks.len() != 1 {
                    return Err(perr(line, "usage: states N"));
                }
                states = Some(parse_usize(toks[0], line, "state count")?);
            }
            "actions" => actions = Some(toks.iter().map(|s| s.to_string()).collect()),
            "observations" => observations = Some(toks.iter().map(|s| s.to_string()).collect()),
            "init" => {
                let n = need_states(states, line)?;
                if toks.len() != 2 {
                    return Err(perr(line, "usage: init s p"));
                }
                let s = parse_usize(toks[0], line, "state")?;
                if s >= n {
                    return Err(perr(line, format!("state index {s} out of range (count {n})")));
                }
                if init.iter().any(|&(i, _)| i == s) {
                    return Err(perr(line, format!("duplicate init entry for state {s}")));
                }
                init.push((s, parse_f64(toks[1], line)?));
            }
            "T" => {
                let n = need_states(states, line)?;
                let acts = actions.as_ref().ok_or_else(|| perr(line, "`actions` must precede T lines"))?;
                if toks.len() != 4 {
                    return Err(perr(line, "usage: T s a s' p"));
                }
                let s = parse_usize(toks[0], line, "state")?;
                let a = resolve(toks[1], acts, line, "action")?;
                let t = parse_usize(toks[2], line, "state")?;
                if s >= n || t >= n {
                    return Err(perr(line, format!("state index {} out of range (count {n})", s.max(t))));
                }
                let row = trans.entry((s, a)).or_default();
                if row.iter().any(|&(i, _)| i == t) {
                    return Err(perr(line, format!("duplicate transition ({s}, {a}, {t})")));
                }
                row.push((t, parse_f64(toks[3], line)?));
            }
            "O" => {
                let n = need_states(states, line)?;
                let names = observations.as_ref().ok_or_else(|| perr(line, "`observations` must precede O lines"))?;
                if toks.len() != 3 {
                    return Err(perr(line, "usage: O s o p"));
                }
                let s = parse_usize(toks[0], line, "state")?;
                if s >= n {
                    return Err(perr(line, format!("state index {s} out of range (count {n})")));
                }
                let o = resolve(toks[1], names, line, "observation")?;
                let row = obs.entry(s).or_default();
                if row.iter().any(|&(i, _)| i == o) {
                    return Err(perr(line, format!("duplicate observation ({s}, {o})")));
                }
                row.push((o, parse_f64(toks[2], line)?));
            }
            "atom" => {
                // atom name {coeffs} cmp c
                let (name, tail) = rest.split_once(char::is_whitespace).ok_or_else(|| perr(line, "usage: atom name {i:c,...} (>|>=) c"))?;
                let close = tail.find('}').ok_or_else(|| perr(line, "missing `}`"))?;
                let coeffs = parse_coeffs(&tail[..=close], line)?;
                let cmp: Vec<&str> = tail[close + 1..].split_whitespace().collect();
                if cmp.len() != 2 {
                    return Err(perr(line, "expected comparator and threshold after coefficients"));
                }
                let strict = parse_comparator(cmp[0], line)?;
                let threshold = parse_f64(cmp[1], line)?;
                check_name(name, line, &linear, &grouped)?;
                linear.insert(name.to_string(), (line, LinearAtom::new(name, coeffs, threshold, strict)));
            }
            "anyof" => {
                let (name, def) = rest.split_once('=').ok_or_else(|| perr(line, "usage: anyof name = ..."))?;
                let name = name.trim();
                let def = def.trim();
                let pending = if let Some(list) = def.strip_prefix('[') {
                    let list = list.strip_suffix(']').ok_or_else(|| perr(line, "missing `]`"))?;
                    PendingAnyOf::Members(list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
                } else {
                    let parts: Vec<&str> = def.split_whitespace().collect();
                    if parts.len() != 3 || parts[0] != "max_component" {
                        return Err(perr(line, "expected `max_component (>|>=) c` or `[atom, ...]`"));
                    }
                    PendingAnyOf::Max {
                        strict: parse_comparator(parts[1], line)?,
                        threshold: parse_f64(parts[2], line)?,
                    }
                };
                check_name(name, line, &linear, &grouped)?;
                grouped.insert(name.to_string(), (line, pending));
            }
            "objective" => {
                if rest.is_empty() {
                    return Err(perr(line, "empty objective"));
                }
                objective = Some(rest.to_string());
            }
            other => return Err(perr(line, format!("unknown directive `{other}`"))),
        }
    }

    let n = states.ok_or_else(|| perr(0, "missing `states`"))?;
    let actions = actions.ok_or_else(|| perr(0, "missing `actions`"))?;
    let observations = observations.ok_or_else(|| perr(0, "missing `observations`"))?;
    let objective = objective.ok_or_else(|| perr(0, "missing `objective`"))?;

    let mut atoms = AtomTable::new();
    for (name, (line, atom)) in &linear {
        if let Some(max) = atom.max_index() {
            if max >= n {
                return Err(perr(*line, format!("atom `{name}` references state {max}, model has {n} states")));
            }
        }
        atoms.insert(name.clone(), Atom::Linear(atom.clone()));
    }
    for (name, (line, pending)) in grouped {
        let group = match pending {
            PendingAnyOf::Max { threshold, strict } => AnyOf::MaxComponent { threshold, strict },
            PendingAnyOf::Members(ms) => AnyOf::Members(
                ms.iter()
                    .map(|m| {
                        linear
                            .get(m)
                            .map(|(_, a)| a.clone())
                            .ok_or_else(|| perr(line, format!("`{m}` is not a declared linear atom")))
                    })
                    .collect::<Result<_>>()?,
            ),
        };
        atoms.insert(name.clone(), Atom::AnyOf { name, group });
    }

    let transitions = (0..n)
        .map(|s| (0..actions.len()).map(|a| trans.remove(&(s, a)).unwrap_or_default()).collect())
        .collect();
    let observations_of = (0..n).map(|s| obs.remove(&s).unwrap_or_default()).collect();
    let pomdp = Pomdp::new(n, actions, observations, init, transitions, observations_of)?;
    let model = LoadedModel {
        pomdp,
        atoms,
        objective,
    };
    model.validate()?;
    Ok(model)
}

fn check_name(
    name: &str,
    line: usize,
    linear: &BTreeMap<String, (usize, LinearAtom)>,
    grouped: &BTreeMap<String, (usize, PendingAnyOf)>,
) -> Result<()> {
    let valid = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !matches!(name, "X" | "U" | "F" | "G" | "R" | "W" | "true" | "false");
    if !valid {
        return Err(perr(line, format!("invalid atom name `{name}`")));
    }
    if linear.contains_key(name) || grouped.contains_key(name) {
        return Err(perr(line, format!("atom `{name}` declared twice")));
    }
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LoadedModel> {
    let text = std::fs::read_to_string(path)?;
    parse_model(&text)
}

/// Serialises a model; `parse_model(&write_model(m))` reproduces `m` exactly.
pub fn write_model(model: &LoadedModel) -> String {
    let m = &model.pomdp;
    let mut out = String::new();
    let _ = writeln!(out, "states {}", m.state_count());
    let _ = writeln!(out, "actions {}", m.action_names().join(" "));
    let _ = writeln!(out, "observations {}", m.observation_names().join(" "));
    for (s, &p) in m.init().iter().enumerate() {
        if p != 0.0 {
            let _ = writeln!(out, "init {s} {p}");
        }
    }
    for (s, a, row) in m.transition_rows() {
        for &(t, p) in row {
            let _ = writeln!(out, "T {s} {a} {t} {p}");
        }
    }
    for s in 0..m.state_count() {
        for (o, &p) in m.observation_row(s).iter().enumerate() {
            if p != 0.0 {
                let _ = writeln!(out, "O {s} {o} {p}");
            }
        }
    }
    // Member atoms of a group are plain `atom` lines as well.
    let mut members: BTreeMap<String, &LinearAtom> = BTreeMap::new();
    for atom in model.atoms.values() {
        if let Atom::AnyOf {
            group: AnyOf::Members(ms),
            ..
        } = atom
        {
            for a in ms {
                members.insert(a.name.clone(), a);
            }
        }
    }
    for atom in model.atoms.values() {
        if let Atom::Linear(a) = atom {
            members.remove(&a.name);
        }
        let _ = writeln!(out, "{}", atom.declaration());
    }
    for a in members.values() {
        let _ = writeln!(out, "{}", Atom::Linear((*a).clone()).declaration());
    }
    let _ = writeln!(out, "objective {}", model.objective);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pomdp::drone_probing_model;

    const MINIMAL: &str = "\
# one state, always true
states 1
actions stay
observations tick
init 0 1
T 0 stay 0 1
O 0 tick 1
atom here {0:1} >= 1
objective F here
";

    #[test]
    fn loads_minimal_model() {
        let m = parse_model(MINIMAL).unwrap();
        assert_eq!(m.pomdp.state_count(), 1);
        assert_eq!(m.objective, "F here");
        assert_eq!(m.validate().unwrap().atoms.len(), 1);
    }

    #[test]
    fn row_sum_error_names_the_row() {
        let bad = MINIMAL.replace("T 0 stay 0 1", "T 0 stay 0 0.9");
        let err = parse_model(&bad).unwrap_err();
        assert!(matches!(err, ModelError::TransitionRowSum { state: 0, action: 0, .. }), "{err}");
        assert!(err.to_string().contains("(0, 0)"));
    }

    #[test]
    fn reports_line_numbers() {
        let bad = MINIMAL.replace("O 0 tick 1", "O 0 tock 1");
        match parse_model(&bad) {
            Err(ModelError::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("{other:?}"),
        }
        let bad = MINIMAL.replace("T 0 stay 0 1", "T 0 stay 3 1");
        assert!(matches!(parse_model(&bad), Err(ModelError::Parse { line: 6, .. })));
        let bad = MINIMAL.replace("{0:1}", "{4:1}");
        assert!(matches!(parse_model(&bad), Err(ModelError::Parse { line: 8, .. })));
        let bad = MINIMAL.replace("objective F here", "objective F there");
        assert!(matches!(parse_model(&bad), Err(ModelError::Objective(_))));
    }

    #[test]
    fn grouped_atoms_parse() {
        let text = MINIMAL.replace(
            "objective F here",
            "atom also {0:0.5} > 0.1\nanyof either = [here, also]\nanyof sure = max_component > 0.9\nobjective F either & F sure",
        );
        let m = parse_model(&text).unwrap();
        assert!(matches!(
            m.atoms["either"],
            Atom::AnyOf { group: AnyOf::Members(ref ms), .. } if ms.len() == 2
        ));
        let again = parse_model(&write_model(&m)).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn drone_model_round_trips() {
        let m = drone_probing_model(4, 4, 0.9, (3, 3)).unwrap();
        let text = write_model(&m);
        let again = parse_model(&text).unwrap();
        assert_eq!(again, m);
    }
}
