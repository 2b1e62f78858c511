//! Two small program-synthesis DSLs used as induction task substrates:
//! an integer-list pipeline language ([`list`]) and a FlashFill-style string
//! transformation language ([`string`]), plus a bottom-up enumerative solver
//! and a synthetic dataset generator.

pub mod enumerate;
pub mod generate;
pub mod list;
pub mod string;

use std::fmt;

use thiserror::Error;

use crate::domain::CodeLanguage;

pub use enumerate::{enumerate_solve, CancelToken, SearchLimits};
pub use list::{eval_list_dsl, parse_list_dsl, ListInput, ListProgram, ListStage, ListValue};
pub use string::{eval_string_dsl, parse_string_dsl, StrExpr, StringProgram};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    /// The pipeline parses but stage arities do not line up.
    Type,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{} at {position}: {message}", match .kind { ParseErrorKind::Syntax => "parse error", ParseErrorKind::Type => "type error" })]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// Byte offset into the source.
    pub position: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(position: usize, message: impl Into<String>) -> Self {
        Self {
            kind: ParseErrorKind::Syntax,
            position,
            message: message.into(),
        }
    }

    pub fn type_error(position: usize, message: impl Into<String>) -> Self {
        Self {
            kind: ParseErrorKind::Type,
            position,
            message: message.into(),
        }
    }

    /// Exception-style class name used when reporting to agents.
    pub fn class(&self) -> &'static str {
        match self.kind {
            ParseErrorKind::Syntax => "ParseError",
            ParseErrorKind::Type => "TypeError",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("{0} of an empty list")]
    EmptyList(&'static str),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: i64, len: usize },
    #[error("integer overflow")]
    Overflow,
    #[error("ZipWith needs a second input list")]
    MissingSecondInput,
    #[error("no {class} token #{index} (only {count})")]
    TokenOutOfRange {
        class: &'static str,
        index: usize,
        count: usize,
    },
    #[error("character {0:?} not found")]
    CharNotFound(char),
    #[error("empty input string")]
    EmptyString,
    #[error("empty replacement pattern")]
    EmptyPattern,
}

/// Which DSL a program or dataset belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DslFamily {
    List,
    String,
}

impl DslFamily {
    pub fn language(self) -> CodeLanguage {
        match self {
            DslFamily::List => CodeLanguage::ListDsl,
            DslFamily::String => CodeLanguage::StringDsl,
        }
    }

    pub fn from_language(lang: CodeLanguage) -> Option<Self> {
        match lang {
            CodeLanguage::ListDsl => Some(DslFamily::List),
            CodeLanguage::StringDsl => Some(DslFamily::String),
            CodeLanguage::General => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum DslProgram {
    List(ListProgram),
    String(StringProgram),
}

impl DslProgram {
    pub fn parse(family: DslFamily, src: &str) -> Result<Self, ParseError> {
        match family {
            DslFamily::List => parse_list_dsl(src).map(DslProgram::List),
            DslFamily::String => parse_string_dsl(src).map(DslProgram::String),
        }
    }

    /// Number of pipeline stages or concatenated parts.
    pub fn size(&self) -> usize {
        match self {
            DslProgram::List(p) => p.len(),
            DslProgram::String(p) => p.len(),
        }
    }

    /// Runs the program on an input given as value text and returns the
    /// canonical rendering of the result.
    pub fn run_text(&self, input: &str) -> Result<String, DslRunError> {
        match self {
            DslProgram::List(p) => {
                let input = ListInput::parse(input)?;
                Ok(p.eval(&input)?.render())
            }
            DslProgram::String(p) => {
                let input = string::parse_string_value(input)?;
                Ok(string::render_string_value(&p.eval(&input)?))
            }
        }
    }
}

impl fmt::Display for DslProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DslProgram::List(p) => p.fmt(f),
            DslProgram::String(p) => p.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DslRunError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Structural value of either DSL, for equality checks.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum DslValue {
    List(ListValue),
    /// A two-list input value.
    Pair(ListInput),
    Str(String),
}

impl DslValue {
    pub fn parse(family: DslFamily, text: &str) -> Result<Self, ParseError> {
        match family {
            DslFamily::List => match ListValue::parse(text) {
                Ok(v) => Ok(DslValue::List(v)),
                Err(e) => match ListInput::parse(text) {
                    Ok(pair) => Ok(DslValue::Pair(pair)),
                    Err(_) => Err(e),
                },
            },
            DslFamily::String => string::parse_string_value(text).map(DslValue::Str),
        }
    }

    pub fn render(&self) -> String {
        match self {
            DslValue::List(v) => v.render(),
            DslValue::Pair(i) => i.render(),
            DslValue::Str(s) => string::render_string_value(s),
        }
    }
}

/// Minimal cursor over DSL source text.
pub(crate) struct Scanner<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Scanner<'a> {
    pub(crate) fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    pub(crate) fn pos(&self) -> usize {
        self.pos
    }

    pub(crate) fn reset(&mut self, pos: usize) {
        self.pos = pos;
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    pub(crate) fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    pub(crate) fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    pub(crate) fn eat(&mut self, want: char) -> bool {
        if self.peek() == Some(want) {
            self.pos += want.len_utf8();
            true
        } else {
            false
        }
    }

    pub(crate) fn expect(&mut self, want: char) -> Result<(), ParseError> {
        if self.eat(want) {
            return Ok(());
        }
        let found = match self.peek() {
            Some(c) => format!("`{c}`"),
            None => "end of input".to_string(),
        };
        Err(ParseError::new(
            self.pos,
            format!("expected `{want}`, found {found}"),
        ))
    }

    pub(crate) fn ident(&mut self) -> Result<String, ParseError> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if !(c.is_ascii_alphanumeric() || c == '_') {
                break;
            }
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ParseError::new(start, "expected a name"));
        }
        Ok(self.src[start..self.pos].to_string())
    }

    pub(crate) fn integer(&mut self) -> Result<i64, ParseError> {
        let start = self.pos;
        if matches!(self.peek(), Some('-' | '+')) {
            self.pos += 1;
        }
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        self.src[start..self.pos]
            .parse()
            .map_err(|_| ParseError::new(start, "expected an integer"))
    }

    /// Consumes text up to the `)` closing an already-opened parenthesis.
    pub(crate) fn take_balanced(&mut self) -> &'a str {
        let rest = self.rest();
        let mut depth = 0usize;
        let mut len = rest.len();
        for (i, c) in rest.char_indices() {
            match c {
                '(' => depth += 1,
                ')' if depth == 0 => {
                    len = i;
                    break;
                }
                ')' => depth -= 1,
                _ => {}
            }
        }
        self.pos += len;
        &rest[..len]
    }

    /// A double-quoted string with JSON escapes.
    pub(crate) fn string_literal(&mut self) -> Result<String, ParseError> {
        let start = self.pos;
        self.expect('"')?;
        let mut escaped = false;
        loop {
            let Some(c) = self.peek() else {
                return Err(ParseError::new(start, "unterminated string literal"));
            };
            self.pos += c.len_utf8();
            match (escaped, c) {
                (false, '\\') => escaped = true,
                (false, '"') => break,
                _ => escaped = false,
            }
        }
        serde_json::from_str(&self.src[start..self.pos])
            .map_err(|e| ParseError::new(start, format!("bad string literal: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dsl_values_compare_structurally() {
        let a = DslValue::parse(DslFamily::List, "[1,2]").unwrap();
        let b = DslValue::parse(DslFamily::List, " [1, 2] ").unwrap();
        assert_eq!(a, b);
        let six = DslValue::parse(DslFamily::List, "6").unwrap();
        let list6 = DslValue::parse(DslFamily::List, "[6]").unwrap();
        assert_ne!(six, list6);
        let pair = DslValue::parse(DslFamily::List, "[[1], [2]]").unwrap();
        assert!(matches!(pair, DslValue::Pair(_)));
    }

    #[test]
    fn run_text_renders_canonically() {
        let p = DslProgram::parse(DslFamily::List, "Map(*2)").unwrap();
        assert_eq!(p.run_text("[1,2]").unwrap(), "[2, 4]");
        let s = DslProgram::parse(DslFamily::String, "ToUpper(GetFirstChar)").unwrap();
        assert_eq!(s.run_text("\"abc\"").unwrap(), "\"A\"");
        assert!(matches!(p.run_text("oops"), Err(DslRunError::Parse(_))));
    }
}
