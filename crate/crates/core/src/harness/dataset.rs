//! JSONL dataset loading, splitting and writing.
//!
//! Induction row:
//! `{"id", "kind": "induction", "language", "entry"?, "pairs": [{"input", "output"}, ...]}`.
//! Deduction and abduction rows:
//! `{"id", "kind", "language", "entry"?, "code", "input", "output"}`.
//! Any row may carry a float `tolerance`. All values are source-text
//! expressions.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{CodeLanguage, IoPair, Problem, TaskKind, DEFAULT_ENTRY};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: expected {expected} rows, found {got}")]
    WrongKind {
        line: usize,
        expected: TaskKind,
        got: TaskKind,
    },
    #[error("dataset has no rows")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SplitError {
    #[error("problem {0} already has visibility flags")]
    AlreadySplit(String),
    #[error("problem {0} is not an induction problem")]
    NotInduction(String),
    #[error("problem {0} has fewer than 2 pairs")]
    TooFewPairs(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RowPair {
    input: String,
    output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Row {
    id: String,
    kind: TaskKind,
    language: CodeLanguage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    entry: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pairs: Option<Vec<RowPair>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    code: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tolerance: Option<f64>,
}

fn schema(line: usize, message: impl Into<String>) -> DatasetError {
    DatasetError::Schema {
        line,
        message: message.into(),
    }
}

fn row_to_problem(line: usize, row: Row) -> Result<Problem, DatasetError> {
    if row.id.trim().is_empty() {
        return Err(schema(line, "field `id` is empty"));
    }
    let entry = row.entry.unwrap_or_else(|| DEFAULT_ENTRY.to_string());
    let mut problem = match row.kind {
        TaskKind::Induction => {
            for f in [
                ("code", row.code.is_some()),
                ("input", row.input.is_some()),
                ("output", row.output.is_some()),
            ] {
                if f.1 {
                    return Err(schema(
                        line,
                        format!("field `{}` is not allowed on induction rows", f.0),
                    ));
                }
            }
            let pairs = row
                .pairs
                .ok_or_else(|| schema(line, "missing field `pairs`"))?;
            if pairs.len() < 2 {
                return Err(schema(
                    line,
                    format!(
                        "field `pairs`: induction needs at least 2, got {}",
                        pairs.len()
                    ),
                ));
            }
            let pairs = pairs
                .into_iter()
                .map(|p| IoPair::new(p.input, p.output))
                .collect();
            Problem::induction(row.id, row.language, pairs)
        }
        kind => {
            if row.pairs.is_some() {
                return Err(schema(
                    line,
                    format!("field `pairs` is not allowed on {kind} rows"),
                ));
            }
            let code = row
                .code
                .ok_or_else(|| schema(line, "missing field `code`"))?;
            let input = row
                .input
                .ok_or_else(|| schema(line, "missing field `input`"))?;
            let output = row
                .output
                .ok_or_else(|| schema(line, "missing field `output`"))?;
            let mut pair = IoPair::new(input, output);
            pair.visible = Some(true);
            Problem::with_function(row.id, kind, row.language, code, pair)
        }
    };
    problem.entry = entry;
    problem.tolerance = row.tolerance;
    problem
        .validate()
        .map_err(|e| schema(line, e.to_string()))?;
    Ok(problem)
}

/// Parses dataset text. Induction problems come back split; `expected`
/// rejects rows of other kinds.
pub fn parse_dataset(text: &str, expected: Option<TaskKind>) -> Result<Vec<Problem>, DatasetError> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(raw).map_err(|e| schema(line, e.to_string()))?;
        if let Some(expected) = expected {
            if row.kind != expected {
                return Err(DatasetError::WrongKind {
                    line,
                    expected,
                    got: row.kind,
                });
            }
        }
        if !ids.insert(row.id.clone()) {
            return Err(DatasetError::DuplicateId { line, id: row.id });
        }
        let problem = row_to_problem(line, row)?;
        let problem = if problem.kind == TaskKind::Induction {
            split_visible(&problem).map_err(|e| schema(line, e.to_string()))?
        } else {
            problem
        };
        out.push(problem);
    }
    if out.is_empty() {
        return Err(DatasetError::Empty);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path, expected: Option<TaskKind>) -> Result<Vec<Problem>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text, expected)
}

/// Marks the first ⌈n/2⌉ pairs visible and the rest hidden.
pub fn split_visible(problem: &Problem) -> Result<Problem, SplitError> {
    if problem.kind != TaskKind::Induction {
        return Err(SplitError::NotInduction(problem.id.clone()));
    }
    if problem.pairs.iter().any(|p| p.visible.is_some()) {
        return Err(SplitError::AlreadySplit(problem.id.clone()));
    }
    let n = problem.pairs.len();
    if n < 2 {
        return Err(SplitError::TooFewPairs(problem.id.clone()));
    }
    let cut = n.div_ceil(2);
    let mut out = problem.clone();
    for (i, p) in out.pairs.iter_mut().enumerate() {
        p.visible = Some(i < cut);
    }
    Ok(out)
}

fn problem_to_row(p: &Problem) -> Row {
    let entry =
        (p.kind == TaskKind::Induction || p.entry != DEFAULT_ENTRY).then(|| p.entry.clone());
    match p.kind {
        TaskKind::Induction => Row {
            id: p.id.clone(),
            kind: p.kind,
            language: p.language,
            entry,
            pairs: Some(
                p.pairs
                    .iter()
                    .map(|q| RowPair {
                        input: q.input.clone(),
                        output: q.output.clone(),
                    })
                    .collect(),
            ),
            code: None,
            input: None,
            output: None,
            tolerance: p.tolerance,
        },
        _ => Row {
            id: p.id.clone(),
            kind: p.kind,
            language: p.language,
            entry,
            pairs: None,
            code: p.function_source.clone(),
            input: p.pairs.first().map(|q| q.input.clone()),
            output: p.pairs.first().map(|q| q.output.clone()),
            tolerance: p.tolerance,
        },
    }
}

/// One JSONL line per problem, in the loader's schema.
pub fn dataset_to_string(problems: &[Problem]) -> String {
    let mut out = String::new();
    for p in problems {
        out.push_str(&serde_json::to_string(&problem_to_row(p)).expect("row serializes"));
        out.push('\n');
    }
    out
}

pub fn write_dataset(mut sink: impl Write, problems: &[Problem]) -> std::io::Result<()> {
    sink.write_all(dataset_to_string(problems).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    const ROWS: &str = r#"{"id": "a", "kind": "induction", "language": "general", "entry": "f", "pairs": [{"input": "1", "output": "2"}, {"input": "2", "output": "3"}]}
{"id": "b", "kind": "induction", "language": "list_dsl", "pairs": [{"input": "[1]", "output": "[2]"}, {"input": "[2]", "output": "[4]"}, {"input": "[]", "output": "[]"}]}
{"id": "c", "kind": "induction", "language": "string_dsl", "pairs": [{"input": "\"ab\"", "output": "\"AB\""}, {"input": "\"c\"", "output": "\"C\""}]}
"#;

    #[test]
    fn loads_in_file_order() {
        let ps = parse_dataset(ROWS, Some(TaskKind::Induction)).unwrap();
        assert_eq!(
            ps.iter().map(|p| p.id.as_str()).collect::<Vec<_>>(),
            ["a", "b", "c"]
        );
        assert_eq!(ps[1].visible_pairs().count(), 2);
        assert_eq!(ps[1].entry, "f");
    }

    #[test]
    fn schema_errors() {
        let one = r#"{"id": "a", "kind": "induction", "language": "general", "pairs": [{"input": "1", "output": "2"}]}"#;
        assert!(matches!(
            parse_dataset(one, None),
            Err(DatasetError::Schema { line: 1, .. })
        ));
        let dup = format!(
            "{}\n{}",
            ROWS.lines().next().unwrap(),
            ROWS.lines().next().unwrap()
        );
        assert!(matches!(
            parse_dataset(&dup, None),
            Err(DatasetError::DuplicateId { line: 2, .. })
        ));
        assert!(matches!(
            parse_dataset(ROWS, Some(TaskKind::Deduction)),
            Err(DatasetError::WrongKind { line: 1, .. })
        ));
        let typo = r#"{"id": "a", "kind": "deduction", "language": "general", "code": "def f(x): return x", "input": "1", "ouput": "1"}"#;
        match parse_dataset(typo, None) {
            Err(DatasetError::Schema { message, .. }) => assert!(message.contains("ouput")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_dataset("\n\n", None),
            Err(DatasetError::Empty)
        ));
    }

    #[test]
    fn deduction_rows() {
        let row = r#"{"id": "d", "kind": "deduction", "language": "general", "code": "def f(x): return x", "input": "1", "output": "1", "tolerance": 0.001}"#;
        let ps = parse_dataset(row, None).unwrap();
        assert_eq!(ps[0].function_source.as_deref(), Some("def f(x): return x"));
        assert!(ps[0].pairs[0].is_visible());
        assert_eq!(ps[0].tolerance, Some(0.001));
    }

    #[test]
    fn split_rule() {
        let mk = |n: usize| {
            Problem::induction(
                "p",
                CodeLanguage::General,
                (0..n)
                    .map(|i| IoPair::new(i.to_string(), i.to_string()))
                    .collect(),
            )
        };
        for (n, vis) in [(6, 3), (5, 3), (2, 1)] {
            let s = split_visible(&mk(n)).unwrap();
            assert_eq!(s.visible_pairs().count(), vis);
            assert!(s.pairs[..vis].iter().all(IoPair::is_visible));
            assert_eq!(split_visible(&s), Err(SplitError::AlreadySplit("p".into())));
        }
    }

    #[test]
    fn round_trip() {
        let ps = parse_dataset(ROWS, None).unwrap();
        let again = parse_dataset(&dataset_to_string(&ps), None).unwrap();
        assert_eq!(ps, again);
    }
}
