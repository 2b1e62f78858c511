//! Bottom-up enumerative synthesis with observational-equivalence pruning.
//!
//! Programs are grown one stage (list DSL) or one concatenated part (string
//! DSL) at a time. Two programs that produce identical results on every
//! example input are merged and only the first one (in canonical order) is
//! extended, so the first consistent program found is minimal in size and
//! lexicographically smallest among programs of that size.

use std::collections::HashSet;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use crate::domain::IoPair;

use super::list::{ListInput, ListStage, ListType, ListValue};
use super::string::{parse_string_value, StrExpr, TokenClass};
use super::{DslFamily, DslProgram, ListProgram, StringProgram};

/// Cooperative cancellation flag shared with a running search.
#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::Relaxed);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::Relaxed)
    }
}

#[derive(Debug, Clone)]
pub struct SearchLimits {
    /// Maximum pipeline stages / concatenated parts.
    pub max_stages: usize,
    /// Maximum number of candidate programs evaluated.
    pub budget: usize,
    /// Largest `Take`/`Drop` argument (and `Access` bound) considered.
    pub index_max: usize,
    /// Stage names (`"Scanl1"`, `"Map"`, ...) the search may not use.
    pub excluded: Vec<String>,
    pub cancel: Option<CancelToken>,
}

impl SearchLimits {
    pub fn new(max_stages: usize) -> Self {
        Self {
            max_stages,
            ..Self::default()
        }
    }

    fn cancelled(&self) -> bool {
        self.cancel.as_ref().is_some_and(CancelToken::is_cancelled)
    }
}

impl Default for SearchLimits {
    fn default() -> Self {
        Self {
            max_stages: 2,
            budget: 2_000_000,
            index_max: 4,
            excluded: Vec::new(),
            cancel: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchStop {
    Found,
    /// Every program within the stage cap was tried.
    Exhausted,
    BudgetExceeded,
    Cancelled,
    /// An example did not parse as a value of the family.
    BadExamples,
}

#[derive(Debug, Clone)]
pub struct SearchReport {
    pub program: Option<DslProgram>,
    pub evaluated: usize,
    pub stop: SearchStop,
}

/// Returns the first program consistent with every pair, ordered by
/// (size, canonical lexicographic order), or `None`.
pub fn enumerate_solve(
    family: DslFamily,
    pairs: &[IoPair],
    limits: &SearchLimits,
) -> Option<DslProgram> {
    search(family, pairs, limits).program
}

pub fn search(family: DslFamily, pairs: &[IoPair], limits: &SearchLimits) -> SearchReport {
    match family {
        DslFamily::List => search_list(pairs, limits),
        DslFamily::String => search_string(pairs, limits),
    }
}

/// The stage catalogue after exclusions, in canonical order.
pub fn list_catalogue(limits: &SearchLimits) -> Vec<ListStage> {
    ListStage::catalogue(limits.index_max)
        .into_iter()
        .filter(|s| !limits.excluded.iter().any(|e| e == s.name()))
        .collect()
}

fn report(program: Option<DslProgram>, evaluated: usize, stop: SearchStop) -> SearchReport {
    SearchReport {
        program,
        evaluated,
        stop,
    }
}

fn search_list(pairs: &[IoPair], limits: &SearchLimits) -> SearchReport {
    let parsed: Option<Vec<(ListInput, ListValue)>> = pairs
        .iter()
        .map(|p| {
            Some((
                ListInput::parse(&p.input).ok()?,
                ListValue::parse(&p.output).ok()?,
            ))
        })
        .collect();
    let Some(examples) = parsed else {
        return report(None, 0, SearchStop::BadExamples);
    };
    let catalogue = list_catalogue(limits);

    let identity: Vec<ListValue> = examples
        .iter()
        .map(|(i, _)| ListValue::List(i.primary.clone()))
        .collect();
    let mut seen: HashSet<Vec<ListValue>> = HashSet::new();
    seen.insert(identity.clone());
    let mut frontier: Vec<(Vec<usize>, Vec<ListValue>)> = vec![(Vec::new(), identity)];
    let mut evaluated = 0usize;

    for _level in 0..limits.max_stages {
        let mut next = Vec::new();
        for (prefix, values) in &frontier {
            'stage: for (si, stage) in catalogue.iter().enumerate() {
                if limits.cancelled() {
                    return report(None, evaluated, SearchStop::Cancelled);
                }
                if evaluated >= limits.budget {
                    return report(None, evaluated, SearchStop::BudgetExceeded);
                }
                evaluated += 1;
                let mut outs = Vec::with_capacity(values.len());
                for (value, (input, _)) in values.iter().zip(&examples) {
                    let ListValue::List(xs) = value else {
                        unreachable!("int states are never extended")
                    };
                    match stage.apply(xs, input.secondary.as_deref()) {
                        Ok(v) => outs.push(v),
                        Err(_) => continue 'stage,
                    }
                }
                let mut program = prefix.clone();
                program.push(si);
                if outs.iter().zip(&examples).all(|(o, (_, want))| o == want) {
                    let stages = program.iter().map(|&i| catalogue[i]).collect();
                    let prog = ListProgram::new(stages).expect("enumerated pipelines type-check");
                    return report(Some(DslProgram::List(prog)), evaluated, SearchStop::Found);
                }
                if stage.output_type() == ListType::IntList && seen.insert(outs.clone()) {
                    next.push((program, outs));
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    report(None, evaluated, SearchStop::Exhausted)
}

/// Candidate atoms for string synthesis, derived from the examples.
pub fn string_atoms(inputs: &[String], outputs: &[String], limits: &SearchLimits) -> Vec<StrExpr> {
    let max_len = inputs
        .iter()
        .map(|s| s.chars().count())
        .max()
        .unwrap_or(0)
        .min(limits.index_max.max(1) * 3) as i64;
    let delimiters = |texts: &[String]| {
        let mut out: Vec<char> = Vec::new();
        for t in texts {
            for c in t.chars() {
                if !c.is_alphanumeric() && !out.contains(&c) {
                    out.push(c);
                }
            }
        }
        out.sort_unstable();
        out
    };
    let in_delims = delimiters(inputs);
    let out_delims = delimiters(outputs);

    let mut base = Vec::new();
    base.push(StrExpr::GetFirstChar);
    for class in TokenClass::ALL {
        for k in 1..=limits.index_max.min(4) {
            base.push(StrExpr::GetToken(class, k));
        }
    }
    for &c in &in_delims {
        base.push(StrExpr::GetFrom(c));
        base.push(StrExpr::GetUpto(c));
    }
    let positions: Vec<i64> = (1..=max_len).chain((-max_len..=-1).rev()).collect();
    for &i in &positions {
        for &j in &positions {
            base.push(StrExpr::SubStr(i, j));
        }
    }
    for &a in &in_delims {
        base.push(StrExpr::Replace(a.to_string(), String::new()));
        for &b in &out_delims {
            if a != b {
                base.push(StrExpr::Replace(a.to_string(), b.to_string()));
            }
        }
    }

    let mut atoms: Vec<StrExpr> = out_delims
        .iter()
        .map(|c| StrExpr::ConstStr(c.to_string()))
        .collect();
    atoms.extend(base.iter().cloned());
    for e in &base {
        atoms.push(StrExpr::ToUpper(Box::new(e.clone())));
        atoms.push(StrExpr::ToLower(Box::new(e.clone())));
    }
    for e in &base {
        if matches!(
            e,
            StrExpr::SubStr(..) | StrExpr::GetFrom(_) | StrExpr::GetUpto(_)
        ) {
            atoms.push(StrExpr::Trim(Box::new(e.clone())));
        }
    }
    atoms
}

fn search_string(pairs: &[IoPair], limits: &SearchLimits) -> SearchReport {
    let parsed: Option<Vec<(String, String)>> = pairs
        .iter()
        .map(|p| {
            Some((
                parse_string_value(&p.input).ok()?,
                parse_string_value(&p.output).ok()?,
            ))
        })
        .collect();
    let Some(examples) = parsed else {
        return report(None, 0, SearchStop::BadExamples);
    };
    let inputs: Vec<String> = examples.iter().map(|(i, _)| i.clone()).collect();
    let outputs: Vec<String> = examples.iter().map(|(_, o)| o.clone()).collect();

    // Each atom, reduced to its output vector; observationally equal atoms
    // keep the first occurrence only.
    let mut evaluated = 0usize;
    let mut atoms: Vec<(StrExpr, Vec<String>)> = Vec::new();
    let mut atom_seen: HashSet<Vec<String>> = HashSet::new();
    for atom in string_atoms(&inputs, &outputs, limits) {
        if limits.cancelled() {
            return report(None, evaluated, SearchStop::Cancelled);
        }
        evaluated += 1;
        let outs: Option<Vec<String>> = inputs.iter().map(|i| atom.eval(i).ok()).collect();
        let Some(outs) = outs else { continue };
        if outs.iter().all(String::is_empty) {
            continue;
        }
        if atom_seen.insert(outs.clone()) {
            atoms.push((atom, outs));
        }
    }

    // A state is how much of each target output has been produced so far.
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    seen.insert(vec![0; examples.len()]);
    let mut frontier: Vec<(Vec<usize>, Vec<usize>)> = vec![(Vec::new(), vec![0; examples.len()])];
    for _level in 0..limits.max_stages {
        let mut next = Vec::new();
        for (prefix, produced) in &frontier {
            'atom: for (ai, (_, outs)) in atoms.iter().enumerate() {
                if limits.cancelled() {
                    return report(None, evaluated, SearchStop::Cancelled);
                }
                if evaluated >= limits.budget {
                    return report(None, evaluated, SearchStop::BudgetExceeded);
                }
                evaluated += 1;
                let mut extended = Vec::with_capacity(produced.len());
                for ((done, piece), want) in produced.iter().zip(outs).zip(&outputs) {
                    if !want[*done..].starts_with(piece.as_str()) {
                        continue 'atom;
                    }
                    extended.push(done + piece.len());
                }
                let mut program = prefix.clone();
                program.push(ai);
                if extended
                    .iter()
                    .zip(&outputs)
                    .all(|(n, want)| *n == want.len())
                {
                    let parts = program.iter().map(|&i| atoms[i].0.clone()).collect();
                    let prog = StringProgram::new(parts).expect("enumerated programs are valid");
                    return report(Some(DslProgram::String(prog)), evaluated, SearchStop::Found);
                }
                if seen.insert(extended.clone()) {
                    next.push((program, extended));
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    report(None, evaluated, SearchStop::Exhausted)
}
