//! Integer-list pipeline DSL.
//!
//! A program is a left-to-right pipeline `Stage | Stage | ...` applied to an
//! integer list. Stages that reduce a list to an integer must come last.

use std::fmt;

use serde_json::Value as Json;

use super::{EvalError, ParseError, Scanner};

/// Unary integer function used by `Map`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Lambda {
    AddOne,
    SubOne,
    Double,
    Triple,
    Half,
    Third,
    Negate,
    Square,
}

impl Lambda {
    pub const ALL: [Lambda; 8] = [
        Lambda::AddOne,
        Lambda::SubOne,
        Lambda::Double,
        Lambda::Triple,
        Lambda::Half,
        Lambda::Third,
        Lambda::Negate,
        Lambda::Square,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Lambda::AddOne => "+1",
            Lambda::SubOne => "-1",
            Lambda::Double => "*2",
            Lambda::Triple => "*3",
            Lambda::Half => "/2",
            Lambda::Third => "/3",
            Lambda::Negate => "*-1",
            Lambda::Square => "^2",
        }
    }

    pub fn apply(self, x: i64) -> Result<i64, EvalError> {
        let r = match self {
            Lambda::AddOne => x.checked_add(1),
            Lambda::SubOne => x.checked_sub(1),
            Lambda::Double => x.checked_mul(2),
            Lambda::Triple => x.checked_mul(3),
            Lambda::Half => Some(floor_div(x, 2)),
            Lambda::Third => Some(floor_div(x, 3)),
            Lambda::Negate => x.checked_neg(),
            Lambda::Square => x.checked_mul(x),
        };
        r.ok_or(EvalError::Overflow)
    }
}

/// Integer division rounding toward negative infinity: -3 / 2 == -2.
pub fn floor_div(a: i64, b: i64) -> i64 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Predicate {
    Positive,
    Negative,
    Even,
    Odd,
}

impl Predicate {
    pub const ALL: [Predicate; 4] = [
        Predicate::Positive,
        Predicate::Negative,
        Predicate::Even,
        Predicate::Odd,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Predicate::Positive => ">0",
            Predicate::Negative => "<0",
            Predicate::Even => "even",
            Predicate::Odd => "odd",
        }
    }

    pub fn test(self, x: i64) -> bool {
        match self {
            Predicate::Positive => x > 0,
            Predicate::Negative => x < 0,
            Predicate::Even => x.rem_euclid(2) == 0,
            Predicate::Odd => x.rem_euclid(2) == 1,
        }
    }
}

/// Binary integer operator used by `ZipWith` and `Scanl1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Combiner {
    Add,
    Sub,
    Mul,
    Min,
    Max,
}

impl Combiner {
    pub const ALL: [Combiner; 5] = [
        Combiner::Add,
        Combiner::Sub,
        Combiner::Mul,
        Combiner::Min,
        Combiner::Max,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Combiner::Add => "+",
            Combiner::Sub => "-",
            Combiner::Mul => "*",
            Combiner::Min => "min",
            Combiner::Max => "max",
        }
    }

    pub fn apply(self, a: i64, b: i64) -> Result<i64, EvalError> {
        match self {
            Combiner::Add => a.checked_add(b).ok_or(EvalError::Overflow),
            Combiner::Sub => a.checked_sub(b).ok_or(EvalError::Overflow),
            Combiner::Mul => a.checked_mul(b).ok_or(EvalError::Overflow),
            Combiner::Min => Ok(a.min(b)),
            Combiner::Max => Ok(a.max(b)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ListStage {
    Head,
    Last,
    Reverse,
    Sort,
    Sum,
    Minimum,
    Maximum,
    Take(usize),
    Drop(usize),
    Access(usize),
    Map(Lambda),
    Filter(Predicate),
    Count(Predicate),
    ZipWith(Combiner),
    Scanl1(Combiner),
}

/// Static type of a pipeline value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ListType {
    Int,
    IntList,
}

impl fmt::Display for ListType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ListType::Int => f.write_str("int"),
            ListType::IntList => f.write_str("int list"),
        }
    }
}

/// Largest argument accepted for `Take`, `Drop` and `Access`.
pub const MAX_INDEX_ARG: usize = 9;

impl ListStage {
    /// Every stage the enumerator considers, in the canonical order used for
    /// lexicographic tie-breaking. Index arguments range over `1..=index_max`.
    pub fn catalogue(index_max: usize) -> Vec<ListStage> {
        let mut out = vec![
            ListStage::Head,
            ListStage::Last,
            ListStage::Reverse,
            ListStage::Sort,
            ListStage::Sum,
            ListStage::Minimum,
            ListStage::Maximum,
        ];
        for n in 1..=index_max {
            out.push(ListStage::Take(n));
        }
        for n in 1..=index_max {
            out.push(ListStage::Drop(n));
        }
        for n in 0..index_max {
            out.push(ListStage::Access(n));
        }
        out.extend(Lambda::ALL.iter().map(|&l| ListStage::Map(l)));
        out.extend(Predicate::ALL.iter().map(|&p| ListStage::Filter(p)));
        out.extend(Predicate::ALL.iter().map(|&p| ListStage::Count(p)));
        out.extend(Combiner::ALL.iter().map(|&c| ListStage::ZipWith(c)));
        out.extend(Combiner::ALL.iter().map(|&c| ListStage::Scanl1(c)));
        out
    }

    pub fn output_type(self) -> ListType {
        match self {
            ListStage::Head
            | ListStage::Last
            | ListStage::Sum
            | ListStage::Minimum
            | ListStage::Maximum
            | ListStage::Access(_)
            | ListStage::Count(_) => ListType::Int,
            _ => ListType::IntList,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ListStage::Head => "Head",
            ListStage::Last => "Last",
            ListStage::Reverse => "Reverse",
            ListStage::Sort => "Sort",
            ListStage::Sum => "Sum",
            ListStage::Minimum => "Minimum",
            ListStage::Maximum => "Maximum",
            ListStage::Take(_) => "Take",
            ListStage::Drop(_) => "Drop",
            ListStage::Access(_) => "Access",
            ListStage::Map(_) => "Map",
            ListStage::Filter(_) => "Filter",
            ListStage::Count(_) => "Count",
            ListStage::ZipWith(_) => "ZipWith",
            ListStage::Scanl1(_) => "Scanl1",
        }
    }

    /// Applies the stage to a list. `second` is the optional second program
    /// input consumed by `ZipWith`.
    pub fn apply(self, xs: &[i64], second: Option<&[i64]>) -> Result<ListValue, EvalError> {
        use ListValue::{Int, List};
        let nonempty = |what: &'static str| {
            if xs.is_empty() {
                Err(EvalError::EmptyList(what))
            } else {
                Ok(())
            }
        };
        Ok(match self {
            ListStage::Head => {
                nonempty("Head")?;
                Int(xs[0])
            }
            ListStage::Last => {
                nonempty("Last")?;
                Int(xs[xs.len() - 1])
            }
            ListStage::Reverse => List(xs.iter().rev().copied().collect()),
            ListStage::Sort => {
                let mut v = xs.to_vec();
                v.sort_unstable();
                List(v)
            }
            ListStage::Sum => Int(xs
                .iter()
                .try_fold(0i64, |acc, &x| acc.checked_add(x))
                .ok_or(EvalError::Overflow)?),
            ListStage::Minimum => {
                nonempty("Minimum")?;
                Int(*xs.iter().min().unwrap())
            }
            ListStage::Maximum => {
                nonempty("Maximum")?;
                Int(*xs.iter().max().unwrap())
            }
            ListStage::Take(n) => List(xs.iter().take(n).copied().collect()),
            ListStage::Drop(n) => List(xs.iter().skip(n).copied().collect()),
            ListStage::Access(n) => match xs.get(n) {
                Some(&x) => Int(x),
                None => {
                    return Err(EvalError::IndexOutOfRange {
                        index: n as i64,
                        len: xs.len(),
                    })
                }
            },
            ListStage::Map(l) => List(xs.iter().map(|&x| l.apply(x)).collect::<Result<_, _>>()?),
            ListStage::Filter(p) => List(xs.iter().copied().filter(|&x| p.test(x)).collect()),
            ListStage::Count(p) => Int(xs.iter().filter(|&&x| p.test(x)).count() as i64),
            ListStage::ZipWith(c) => {
                let ys = second.ok_or(EvalError::MissingSecondInput)?;
                List(
                    xs.iter()
                        .zip(ys)
                        .map(|(&a, &b)| c.apply(a, b))
                        .collect::<Result<_, _>>()?,
                )
            }
            ListStage::Scanl1(c) => {
                let mut out = Vec::with_capacity(xs.len());
                let mut acc: Option<i64> = None;
                for &x in xs {
                    let next = match acc {
                        None => x,
                        Some(a) => c.apply(a, x)?,
                    };
                    out.push(next);
                    acc = Some(next);
                }
                List(out)
            }
        })
    }
}

impl fmt::Display for ListStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ListStage::Take(n) | ListStage::Drop(n) | ListStage::Access(n) => {
                write!(f, "{}({n})", self.name())
            }
            ListStage::Map(l) => write!(f, "Map({})", l.token()),
            ListStage::Filter(p) => write!(f, "Filter({})", p.token()),
            ListStage::Count(p) => write!(f, "Count({})", p.token()),
            ListStage::ZipWith(c) => write!(f, "ZipWith({})", c.token()),
            ListStage::Scanl1(c) => write!(f, "Scanl1({})", c.token()),
            _ => f.write_str(self.name()),
        }
    }
}

/// Result of running a list program.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ListValue {
    Int(i64),
    List(Vec<i64>),
}

impl ListValue {
    /// Canonical printed form: `5` or `[1, 2, 3]`.
    pub fn render(&self) -> String {
        match self {
            ListValue::Int(x) => x.to_string(),
            ListValue::List(xs) => render_int_list(xs),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let json: Json = serde_json::from_str(text.trim()).map_err(|e| {
            ParseError::new(e.column().saturating_sub(1), format!("bad value: {e}"))
        })?;
        match json {
            Json::Number(n) => n
                .as_i64()
                .map(ListValue::Int)
                .ok_or_else(|| ParseError::new(0, "expected an integer")),
            Json::Array(items) => Ok(ListValue::List(json_ints(&items)?)),
            _ => Err(ParseError::new(0, "expected an integer or integer list")),
        }
    }
}

pub(crate) fn render_int_list(xs: &[i64]) -> String {
    let parts: Vec<String> = xs.iter().map(i64::to_string).collect();
    format!("[{}]", parts.join(", "))
}

fn json_ints(items: &[Json]) -> Result<Vec<i64>, ParseError> {
    items
        .iter()
        .map(|v| {
            v.as_i64()
                .ok_or_else(|| ParseError::new(0, format!("expected integer, found {v}")))
        })
        .collect()
}

/// Program input: one integer list, optionally with a second list for
/// `ZipWith`. Written as `[1, 2]` or `[[1, 2], [3, 4]]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ListInput {
    pub primary: Vec<i64>,
    pub secondary: Option<Vec<i64>>,
}

impl ListInput {
    pub fn single(xs: Vec<i64>) -> Self {
        Self {
            primary: xs,
            secondary: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let json: Json = serde_json::from_str(text.trim()).map_err(|e| {
            ParseError::new(e.column().saturating_sub(1), format!("bad input: {e}"))
        })?;
        let Json::Array(items) = json else {
            return Err(ParseError::new(0, "input must be a list"));
        };
        if !items.is_empty() && items.iter().all(Json::is_array) {
            if items.len() != 2 {
                return Err(ParseError::new(
                    0,
                    "nested input must hold exactly two lists",
                ));
            }
            let a = json_ints(items[0].as_array().unwrap())?;
            let b = json_ints(items[1].as_array().unwrap())?;
            return Ok(Self {
                primary: a,
                secondary: Some(b),
            });
        }
        Ok(Self::single(json_ints(&items)?))
    }

    pub fn render(&self) -> String {
        match &self.secondary {
            None => render_int_list(&self.primary),
            Some(b) => format!(
                "[{}, {}]",
                render_int_list(&self.primary),
                render_int_list(b)
            ),
        }
    }
}

/// A type-checked pipeline of at least one stage.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ListProgram {
    stages: Vec<ListStage>,
}

impl ListProgram {
    pub fn new(stages: Vec<ListStage>) -> Result<Self, ParseError> {
        if stages.is_empty() {
            return Err(ParseError::new(0, "empty pipeline"));
        }
        for (i, stage) in stages.iter().enumerate() {
            if let ListStage::Take(n) | ListStage::Drop(n) | ListStage::Access(n) = stage {
                if *n > MAX_INDEX_ARG {
                    return Err(ParseError::new(
                        0,
                        format!("argument {n} exceeds {MAX_INDEX_ARG}"),
                    ));
                }
            }
            if i > 0 && stages[i - 1].output_type() == ListType::Int {
                return Err(ParseError::type_error(
                    0,
                    format!(
                        "stage {} ({stage}) expects an int list but receives an int",
                        i + 1
                    ),
                ));
            }
        }
        Ok(Self { stages })
    }

    pub fn stages(&self) -> &[ListStage] {
        &self.stages
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn output_type(&self) -> ListType {
        self.stages
            .last()
            .map_or(ListType::IntList, |s| s.output_type())
    }

    pub fn eval(&self, input: &ListInput) -> Result<ListValue, EvalError> {
        let second = input.secondary.as_deref();
        let mut current = ListValue::List(input.primary.clone());
        for stage in &self.stages {
            let ListValue::List(xs) = &current else {
                unreachable!("type-checked pipeline fed an int to {stage}");
            };
            current = stage.apply(xs, second)?;
        }
        Ok(current)
    }
}

impl fmt::Display for ListProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.stages.iter().enumerate() {
            if i > 0 {
                f.write_str(" | ")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// Parses `Stage | Stage | ...` and type-checks the pipeline.
pub fn parse_list_dsl(src: &str) -> Result<ListProgram, ParseError> {
    let mut sc = Scanner::new(src);
    let mut stages = Vec::new();
    let mut types_at = Vec::new();
    loop {
        sc.skip_ws();
        types_at.push(sc.pos());
        stages.push(parse_stage(&mut sc)?);
        sc.skip_ws();
        if sc.at_end() {
            break;
        }
        sc.expect('|')?;
    }
    for i in 1..stages.len() {
        if stages[i - 1].output_type() == ListType::Int {
            return Err(ParseError::type_error(
                types_at[i],
                format!(
                    "{} expects an int list but receives the int produced by {}",
                    stages[i],
                    stages[i - 1]
                ),
            ));
        }
    }
    ListProgram::new(stages)
}

fn parse_stage(sc: &mut Scanner<'_>) -> Result<ListStage, ParseError> {
    let start = sc.pos();
    let name = sc.ident()?;
    let simple = match name.as_str() {
        "Head" => Some(ListStage::Head),
        "Last" => Some(ListStage::Last),
        "Reverse" => Some(ListStage::Reverse),
        "Sort" => Some(ListStage::Sort),
        "Sum" => Some(ListStage::Sum),
        "Minimum" => Some(ListStage::Minimum),
        "Maximum" => Some(ListStage::Maximum),
        _ => None,
    };
    if let Some(s) = simple {
        return Ok(s);
    }
    sc.skip_ws();
    sc.expect('(')?;
    sc.skip_ws();
    let arg_pos = sc.pos();
    let arg = sc.take_balanced().trim().to_string();
    sc.expect(')')?;
    let bad = |what: &str| ParseError::new(arg_pos, format!("`{arg}` is not a valid {what}"));
    let index = || -> Result<usize, ParseError> {
        let n: usize = arg.parse().map_err(|_| bad("index"))?;
        if n > MAX_INDEX_ARG {
            return Err(ParseError::new(
                arg_pos,
                format!("argument {n} exceeds {MAX_INDEX_ARG}"),
            ));
        }
        Ok(n)
    };
    let lambda = || {
        let compact: String = arg.chars().filter(|c| !c.is_whitespace()).collect();
        let compact = compact.replace("*(-1)", "*-1");
        Lambda::ALL
            .into_iter()
            .find(|l| l.token() == compact)
            .ok_or_else(|| bad("lambda"))
    };
    let predicate = || {
        let compact: String = arg.chars().filter(|c| !c.is_whitespace()).collect();
        Predicate::ALL
            .into_iter()
            .find(|p| p.token() == compact)
            .ok_or_else(|| bad("predicate"))
    };
    let combiner = || {
        Combiner::ALL
            .into_iter()
            .find(|c| c.token() == arg)
            .ok_or_else(|| bad("combiner"))
    };
    Ok(match name.as_str() {
        "Take" => ListStage::Take(index()?),
        "Drop" => ListStage::Drop(index()?),
        "Access" => ListStage::Access(index()?),
        "Map" => ListStage::Map(lambda()?),
        "Filter" => ListStage::Filter(predicate()?),
        "Count" => ListStage::Count(predicate()?),
        "ZipWith" => ListStage::ZipWith(combiner()?),
        "Scanl1" => ListStage::Scanl1(combiner()?),
        other => return Err(ParseError::new(start, format!("unknown stage `{other}`"))),
    })
}

/// Whitespace-normalized form of a pipeline source, comparable with the
/// pretty-printed program.
pub fn normalize_list_src(src: &str) -> String {
    src.split('|')
        .map(|part| {
            let compact: String = part.chars().filter(|c| !c.is_whitespace()).collect();
            compact.replace("*(-1)", "*-1")
        })
        .collect::<Vec<_>>()
        .join(" | ")
}

pub fn eval_list_dsl(prog: &ListProgram, input: &ListInput) -> Result<ListValue, EvalError> {
    prog.eval(input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::ParseErrorKind;
    use proptest::prelude::*;

    fn run(src: &str, xs: &[i64]) -> Result<ListValue, EvalError> {
        parse_list_dsl(src)
            .unwrap()
            .eval(&ListInput::single(xs.to_vec()))
    }

    #[test]
    fn parses_two_stage_program() {
        let p = parse_list_dsl("Map(*2) | Sum").unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.to_string(), "Map(*2) | Sum");
    }

    #[test]
    fn int_fed_to_list_stage_is_type_error() {
        let err = parse_list_dsl("Sum | Map(*2)").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Type);
        assert_eq!(err.position, 6);
    }

    #[test]
    fn lambda_outside_grammar_is_parse_error() {
        let err = parse_list_dsl("Map(*5)").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Syntax);
        assert_eq!(err.position, 4);
    }

    #[test]
    fn unknown_stage_and_trailing_pipe() {
        assert!(parse_list_dsl("Shuffle").is_err());
        assert!(parse_list_dsl("Sort |").is_err());
        assert!(parse_list_dsl("").is_err());
    }

    #[test]
    fn eval_examples() {
        assert_eq!(
            run("Map(*2) | Sum", &[1, 2, 3]).unwrap(),
            ListValue::Int(12)
        );
        assert_eq!(
            run("Filter(>0)", &[-1, 2, -3]).unwrap(),
            ListValue::List(vec![2])
        );
        assert_eq!(run("Head", &[]), Err(EvalError::EmptyList("Head")));
    }

    #[test]
    fn division_floors_toward_negative_infinity() {
        assert_eq!(floor_div(-3, 2), -2);
        assert_eq!(floor_div(3, 2), 1);
        assert_eq!(floor_div(-1, 3), -1);
        assert_eq!(floor_div(-6, 3), -2);
        assert_eq!(
            run("Map(/2)", &[-3, -1, 0, 3]).unwrap(),
            ListValue::List(vec![-2, -1, 0, 1])
        );
    }

    #[test]
    fn partial_stages() {
        assert!(matches!(
            run("Access(3)", &[1, 2]),
            Err(EvalError::IndexOutOfRange { index: 3, len: 2 })
        ));
        assert_eq!(run("Minimum", &[]), Err(EvalError::EmptyList("Minimum")));
        assert_eq!(run("Sum", &[]).unwrap(), ListValue::Int(0));
        assert_eq!(run("ZipWith(+)", &[1]), Err(EvalError::MissingSecondInput));
        assert_eq!(run("Map(^2)", &[i64::MAX]), Err(EvalError::Overflow));
    }

    #[test]
    fn zip_and_scan() {
        let p = parse_list_dsl("ZipWith(max)").unwrap();
        let input = ListInput::parse("[[1, 5, 3], [4, 2]]").unwrap();
        assert_eq!(p.eval(&input).unwrap(), ListValue::List(vec![4, 5]));
        assert_eq!(
            run("Scanl1(+)", &[1, 2, 3]).unwrap(),
            ListValue::List(vec![1, 3, 6])
        );
        assert_eq!(run("Scanl1(min)", &[]).unwrap(), ListValue::List(vec![]));
    }

    #[test]
    fn value_round_trip() {
        let v = ListValue::parse("[1,2, -3]").unwrap();
        assert_eq!(v.render(), "[1, 2, -3]");
        assert_eq!(ListValue::parse(" 7 ").unwrap(), ListValue::Int(7));
        assert!(ListValue::parse("\"x\"").is_err());
        let i = ListInput::parse("[[1],[2, 3]]").unwrap();
        assert_eq!(i.render(), "[[1], [2, 3]]");
        assert_eq!(ListInput::parse("[]").unwrap(), ListInput::single(vec![]));
    }

    #[test]
    fn normalization_matches_pretty_print() {
        let src = "Map( * -1 )|Take(2) |  Sum";
        let p = parse_list_dsl(src).unwrap();
        assert_eq!(p.to_string(), normalize_list_src(src));
        assert_eq!(
            parse_list_dsl("Map(*(-1))").unwrap().to_string(),
            "Map(*-1)"
        );
    }

    fn arb_program() -> impl Strategy<Value = ListProgram> {
        let cat = ListStage::catalogue(4);
        let list_stages: Vec<ListStage> = cat
            .iter()
            .copied()
            .filter(|s| s.output_type() == ListType::IntList)
            .collect();
        (
            proptest::collection::vec(proptest::sample::select(list_stages), 0..4),
            proptest::sample::select(cat),
        )
            .prop_map(|(mut prefix, last)| {
                prefix.push(last);
                ListProgram::new(prefix).unwrap()
            })
    }

    proptest! {
        #[test]
        fn parse_print_round_trip(p in arb_program()) {
            let printed = p.to_string();
            prop_assert_eq!(parse_list_dsl(&printed).unwrap(), p);
            prop_assert_eq!(normalize_list_src(&printed), printed);
        }

        #[test]
        fn eval_never_panics(p in arb_program(), xs in proptest::collection::vec(-50i64..50, 0..8)) {
            let _ = p.eval(&ListInput { primary: xs.clone(), secondary: Some(xs) });
        }
    }
}
