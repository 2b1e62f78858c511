//! String-transformation DSL in the FlashFill style.
//!
//! A program is a concatenation of expressions, each computed from the whole
//! input string: `Concat(ToUpper(SubStr(1, 3)), ConstStr("-"))`.

use std::fmt;

use super::{EvalError, ParseError, Scanner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TokenClass {
    /// Maximal runs of alphabetic characters.
    Word,
    /// Maximal runs of ASCII digits.
    Digits,
    /// Maximal runs of alphanumeric characters.
    Alnum,
}

impl TokenClass {
    pub const ALL: [TokenClass; 3] = [TokenClass::Word, TokenClass::Digits, TokenClass::Alnum];

    pub fn name(self) -> &'static str {
        match self {
            TokenClass::Word => "word",
            TokenClass::Digits => "digits",
            TokenClass::Alnum => "alnum",
        }
    }

    fn accepts(self, c: char) -> bool {
        match self {
            TokenClass::Word => c.is_alphabetic(),
            TokenClass::Digits => c.is_ascii_digit(),
            TokenClass::Alnum => c.is_alphanumeric(),
        }
    }

    /// Tokens of this class in `s`, left to right.
    pub fn tokens(self, s: &str) -> Vec<&str> {
        let mut out = Vec::new();
        let mut start = None;
        for (i, c) in s.char_indices() {
            match (self.accepts(c), start) {
                (true, None) => start = Some(i),
                (false, Some(b)) => {
                    out.push(&s[b..i]);
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(b) = start {
            out.push(&s[b..]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrExpr {
    ConstStr(String),
    /// 1-based inclusive character range; negative positions count from the
    /// end (-1 is the last character).
    SubStr(i64, i64),
    /// k-th token (1-based) of a class.
    GetToken(TokenClass, usize),
    ToUpper(Box<StrExpr>),
    ToLower(Box<StrExpr>),
    Trim(Box<StrExpr>),
    /// The input with every occurrence of the first string replaced.
    Replace(String, String),
    GetFirstChar,
    /// Everything after the first occurrence of the character.
    GetFrom(char),
    /// Everything before the first occurrence of the character.
    GetUpto(char),
}

impl StrExpr {
    pub fn eval(&self, input: &str) -> Result<String, EvalError> {
        match self {
            StrExpr::ConstStr(s) => Ok(s.clone()),
            StrExpr::SubStr(i, j) => substr(input, *i, *j),
            StrExpr::GetToken(class, k) => {
                let toks = class.tokens(input);
                toks.get(k.wrapping_sub(1)).map(|t| t.to_string()).ok_or(
                    EvalError::TokenOutOfRange {
                        class: class.name(),
                        index: *k,
                        count: toks.len(),
                    },
                )
            }
            StrExpr::ToUpper(e) => Ok(e.eval(input)?.to_uppercase()),
            StrExpr::ToLower(e) => Ok(e.eval(input)?.to_lowercase()),
            StrExpr::Trim(e) => Ok(e.eval(input)?.trim().to_string()),
            StrExpr::Replace(a, b) => {
                if a.is_empty() {
                    return Err(EvalError::EmptyPattern);
                }
                Ok(input.replace(a.as_str(), b))
            }
            StrExpr::GetFirstChar => input
                .chars()
                .next()
                .map(String::from)
                .ok_or(EvalError::EmptyString),
            StrExpr::GetFrom(c) => input
                .split_once(*c)
                .map(|(_, rest)| rest.to_string())
                .ok_or(EvalError::CharNotFound(*c)),
            StrExpr::GetUpto(c) => input
                .split_once(*c)
                .map(|(head, _)| head.to_string())
                .ok_or(EvalError::CharNotFound(*c)),
        }
    }
}

fn substr(input: &str, i: i64, j: i64) -> Result<String, EvalError> {
    let chars: Vec<char> = input.chars().collect();
    let len = chars.len() as i64;
    let resolve = |p: i64| if p < 0 { len + p + 1 } else { p };
    let (a, b) = (resolve(i), resolve(j));
    if i == 0 || j == 0 || a < 1 || b > len || a > b {
        return Err(EvalError::IndexOutOfRange {
            index: if a < 1 || i == 0 { i } else { j },
            len: chars.len(),
        });
    }
    Ok(chars[(a - 1) as usize..b as usize].iter().collect())
}

fn write_str_literal(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str(&serde_json::to_string(s).expect("string literal"))
}

impl fmt::Display for StrExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrExpr::ConstStr(s) => {
                f.write_str("ConstStr(")?;
                write_str_literal(f, s)?;
                f.write_str(")")
            }
            StrExpr::SubStr(i, j) => write!(f, "SubStr({i}, {j})"),
            StrExpr::GetToken(c, k) => write!(f, "GetToken({}, {k})", c.name()),
            StrExpr::ToUpper(e) => write!(f, "ToUpper({e})"),
            StrExpr::ToLower(e) => write!(f, "ToLower({e})"),
            StrExpr::Trim(e) => write!(f, "Trim({e})"),
            StrExpr::Replace(a, b) => {
                f.write_str("Replace(")?;
                write_str_literal(f, a)?;
                f.write_str(", ")?;
                write_str_literal(f, b)?;
                f.write_str(")")
            }
            StrExpr::GetFirstChar => f.write_str("GetFirstChar"),
            StrExpr::GetFrom(c) => {
                f.write_str("GetFrom(")?;
                write_str_literal(f, &c.to_string())?;
                f.write_str(")")
            }
            StrExpr::GetUpto(c) => {
                f.write_str("GetUpto(")?;
                write_str_literal(f, &c.to_string())?;
                f.write_str(")")
            }
        }
    }
}

/// A concatenation of one or more expressions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StringProgram {
    parts: Vec<StrExpr>,
}

impl StringProgram {
    pub fn new(parts: Vec<StrExpr>) -> Result<Self, ParseError> {
        if parts.is_empty() {
            return Err(ParseError::new(0, "empty concatenation"));
        }
        for p in &parts {
            validate_expr(p).map_err(|m| ParseError::new(0, m))?;
        }
        Ok(Self { parts })
    }

    pub fn parts(&self) -> &[StrExpr] {
        &self.parts
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn eval(&self, input: &str) -> Result<String, EvalError> {
        let mut out = String::new();
        for p in &self.parts {
            out.push_str(&p.eval(input)?);
        }
        Ok(out)
    }
}

fn validate_expr(e: &StrExpr) -> Result<(), String> {
    match e {
        StrExpr::SubStr(i, j) if *i == 0 || *j == 0 => {
            Err("SubStr indices must be non-zero".into())
        }
        StrExpr::GetToken(_, 0) => Err("token index must be at least 1".into()),
        StrExpr::ToUpper(inner) | StrExpr::ToLower(inner) | StrExpr::Trim(inner) => {
            validate_expr(inner)
        }
        _ => Ok(()),
    }
}

impl fmt::Display for StringProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let [only] = self.parts.as_slice() {
            return write!(f, "{only}");
        }
        f.write_str("Concat(")?;
        for (i, p) in self.parts.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{p}")?;
        }
        f.write_str(")")
    }
}

pub fn parse_string_dsl(src: &str) -> Result<StringProgram, ParseError> {
    let mut sc = Scanner::new(src);
    sc.skip_ws();
    let save = sc.pos();
    let parts = if sc.ident()? == "Concat" {
        sc.skip_ws();
        sc.expect('(')?;
        let mut parts = vec![];
        loop {
            sc.skip_ws();
            parts.push(parse_expr(&mut sc)?);
            sc.skip_ws();
            if sc.eat(')') {
                break;
            }
            sc.expect(',')?;
        }
        parts
    } else {
        sc.reset(save);
        vec![parse_expr(&mut sc)?]
    };
    sc.skip_ws();
    if !sc.at_end() {
        return Err(ParseError::new(sc.pos(), "trailing input"));
    }
    StringProgram::new(parts)
}

fn parse_expr(sc: &mut Scanner<'_>) -> Result<StrExpr, ParseError> {
    let start = sc.pos();
    let name = sc.ident()?;
    if name == "GetFirstChar" {
        return Ok(StrExpr::GetFirstChar);
    }
    sc.skip_ws();
    sc.expect('(')?;
    sc.skip_ws();
    let expr = match name.as_str() {
        "ConstStr" => StrExpr::ConstStr(sc.string_literal()?),
        "SubStr" => {
            let i_pos = sc.pos();
            let i = sc.integer()?;
            sc.skip_ws();
            sc.expect(',')?;
            sc.skip_ws();
            let j_pos = sc.pos();
            let j = sc.integer()?;
            if i == 0 {
                return Err(ParseError::new(i_pos, "SubStr indices are 1-based"));
            }
            if j == 0 {
                return Err(ParseError::new(j_pos, "SubStr indices are 1-based"));
            }
            StrExpr::SubStr(i, j)
        }
        "GetToken" => {
            let c_pos = sc.pos();
            let class = sc.ident()?;
            let class = TokenClass::ALL
                .into_iter()
                .find(|c| c.name() == class)
                .ok_or_else(|| ParseError::new(c_pos, format!("unknown token class `{class}`")))?;
            sc.skip_ws();
            sc.expect(',')?;
            sc.skip_ws();
            let k_pos = sc.pos();
            let k = sc.integer()?;
            if k < 1 {
                return Err(ParseError::new(k_pos, "token index must be at least 1"));
            }
            StrExpr::GetToken(class, k as usize)
        }
        "ToUpper" => StrExpr::ToUpper(Box::new(parse_expr(sc)?)),
        "ToLower" => StrExpr::ToLower(Box::new(parse_expr(sc)?)),
        "Trim" => StrExpr::Trim(Box::new(parse_expr(sc)?)),
        "Replace" => {
            let a = sc.string_literal()?;
            sc.skip_ws();
            sc.expect(',')?;
            sc.skip_ws();
            let b = sc.string_literal()?;
            StrExpr::Replace(a, b)
        }
        "GetFrom" | "GetUpto" => {
            let lit_pos = sc.pos();
            let lit = sc.string_literal()?;
            let mut chars = lit.chars();
            let (Some(c), None) = (chars.next(), chars.next()) else {
                return Err(ParseError::new(
                    lit_pos,
                    "expected a single-character string",
                ));
            };
            if name == "GetFrom" {
                StrExpr::GetFrom(c)
            } else {
                StrExpr::GetUpto(c)
            }
        }
        other => {
            return Err(ParseError::new(
                start,
                format!("unknown expression `{other}`"),
            ))
        }
    };
    sc.skip_ws();
    sc.expect(')')?;
    Ok(expr)
}

pub fn eval_string_dsl(prog: &StringProgram, input: &str) -> Result<String, EvalError> {
    prog.eval(input)
}

/// Parses a string value written as a JSON string literal.
pub fn parse_string_value(text: &str) -> Result<String, ParseError> {
    serde_json::from_str::<String>(text.trim()).map_err(|e| {
        ParseError::new(
            e.column().saturating_sub(1),
            format!("bad string value: {e}"),
        )
    })
}

pub fn render_string_value(s: &str) -> String {
    serde_json::to_string(s).expect("string value")
}
