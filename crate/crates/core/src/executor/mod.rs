//! Verification engine: runs candidate code and value expressions, checks
//! them against a problem, and turns the verdicts into agent feedback.
//!
//! `general` code runs in a Python child process under rlimits and an
//! audit hook (no network, no subprocesses, writes only inside a scratch
//! directory). The two DSLs are evaluated in-process.
//!
//! Threat model: accidental misbehavior of generated code, not a
//! determined attacker. There is no container or VM boundary.

mod sandbox;

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::domain::{
    truncate_chars, CheckRecord, CodeLanguage, Feedback, FeedbackKind, IoPair, Problem,
    SandboxLimits, TaskKind,
};
use crate::dsl::{DslFamily, DslProgram, DslRunError, DslValue};

pub use sandbox::find_python;
use sandbox::{Exit, RawRun, INFRA_EXIT};

pub const ALL_CORRECT: &str = "All your answers are correct for the given examples.";
pub const SOME_CORRECT: &str =
    "Some of your answers are correct for the given examples, but others are wrong.";
pub const ALL_WRONG: &str = "All your answers are wrong for the given examples.";

/// Lesson feedback for a proposal with nothing to run.
pub const NO_CODE_FEEDBACK: &str = "no runnable code produced";

const MESSAGE_CAP: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Value,
    Exception,
    Timeout,
    ResourceKilled,
    SandboxError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    /// Canonical printed representation of the result.
    Value {
        repr: String,
    },
    Exception {
        class: String,
        message: String,
    },
    Timeout,
    ResourceKilled {
        reason: String,
    },
    SandboxError {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecOutcome {
    #[serde(flatten)]
    pub outcome: Outcome,
    pub wall: Duration,
    pub cpu: Duration,
}

impl ExecOutcome {
    fn instant(outcome: Outcome, started: Instant) -> Self {
        Self {
            outcome,
            wall: started.elapsed(),
            cpu: Duration::ZERO,
        }
    }

    pub fn status(&self) -> ExecStatus {
        match self.outcome {
            Outcome::Value { .. } => ExecStatus::Value,
            Outcome::Exception { .. } => ExecStatus::Exception,
            Outcome::Timeout => ExecStatus::Timeout,
            Outcome::ResourceKilled { .. } => ExecStatus::ResourceKilled,
            Outcome::SandboxError { .. } => ExecStatus::SandboxError,
        }
    }

    pub fn value(&self) -> Option<&str> {
        match &self.outcome {
            Outcome::Value { repr } => Some(repr),
            _ => None,
        }
    }

    /// Short class name for any non-value outcome.
    pub fn error_class(&self) -> Option<&str> {
        match &self.outcome {
            Outcome::Value { .. } => None,
            Outcome::Exception { class, .. } => Some(class),
            Outcome::Timeout => Some("Timeout"),
            Outcome::ResourceKilled { .. } => Some("ResourceKilled"),
            Outcome::SandboxError { .. } => Some("SandboxError"),
        }
    }

    pub fn error_message(&self) -> Option<&str> {
        match &self.outcome {
            Outcome::Exception { message, .. } => Some(message),
            Outcome::ResourceKilled { reason } => Some(reason),
            Outcome::SandboxError { message } => Some(message),
            Outcome::Timeout => Some("time limit exceeded"),
            Outcome::Value { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("no fenced code block in response")]
    NoCodeBlock,
    #[error("sandbox failure: {0}")]
    Sandbox(String),
    #[error("dataset defect: {0}")]
    DatasetDefect(String),
    #[error("problem {0} has no function source")]
    MissingSource(String),
}

/// Returns the body of the last fenced code block.
pub fn extract_code(raw_text: &str) -> Result<String, ExecError> {
    let mut last = None;
    let mut open: Option<(usize, char)> = None;
    let mut body = Vec::new();
    for line in raw_text.lines() {
        let trimmed = line.trim_start();
        match &open {
            None => {
                if let Some(fence) = fence_of(trimmed) {
                    open = Some(fence);
                    body.clear();
                }
            }
            Some((n, ch)) => {
                let t = trimmed.trim_end();
                let closes = t.len() >= *n && t.chars().all(|c| c == *ch);
                if closes {
                    last = Some(body.join("\n"));
                    open = None;
                } else {
                    body.push(line);
                }
            }
        }
    }
    // An unterminated final block still counts; models often stop early.
    if open.is_some() && !body.is_empty() {
        last = Some(body.join("\n"));
    }
    last.map(|s| s.trim_matches('\n').to_string())
        .filter(|s| !s.trim().is_empty())
        .ok_or(ExecError::NoCodeBlock)
}

fn fence_of(line: &str) -> Option<(usize, char)> {
    for ch in ['`', '~'] {
        let n = line.chars().take_while(|&c| c == ch).count();
        if n >= 3 {
            return Some((n, ch));
        }
    }
    None
}

/// How a problem's code is called and compared.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target<'a> {
    pub language: CodeLanguage,
    pub entry: &'a str,
    pub tolerance: Option<f64>,
}

impl<'a> Target<'a> {
    pub fn of(problem: &'a Problem) -> Self {
        Self {
            language: problem.language,
            entry: &problem.entry,
            tolerance: problem.tolerance,
        }
    }

    pub fn general(entry: &'a str) -> Self {
        Self {
            language: CodeLanguage::General,
            entry,
            tolerance: None,
        }
    }

    fn call(&self, input: &str) -> String {
        format!("{}({})", self.entry, input)
    }
}

/// Result of comparing two value expressions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Equality {
    pub equal: bool,
    /// Why the comparison could not be made, when it could not.
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub record: CheckRecord,
    /// Candidate-side execution, when one happened.
    pub exec: Option<ExecOutcome>,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.record.passed
    }
}

struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().expect("slots");
        while *free == 0 {
            free = self.cv.wait(free).expect("slots");
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("slots") += 1;
        self.0.cv.notify_one();
    }
}

/// Runs and checks candidates. Safe to share across threads; at most
/// `concurrency` child processes run at once.
pub struct Executor {
    limits: SandboxLimits,
    python: Option<std::path::PathBuf>,
    slots: Slots,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor")
            .field("limits", &self.limits)
            .field("python", &self.python)
            .finish_non_exhaustive()
    }
}

/// Parsed frames of one runner invocation.
#[derive(Debug, Default)]
struct Frames {
    result: Option<String>,
    error: Option<(String, String)>,
    equal: Option<bool>,
}

fn parse_frames(stdout: &str) -> Frames {
    let mut f = Frames::default();
    for line in stdout.lines() {
        if let Some(v) = line.strip_prefix("MARCO_RESULT ") {
            f.result.get_or_insert_with(|| v.to_string());
        } else if let Some(e) = line.strip_prefix("MARCO_ERROR ") {
            let (class, msg) = e.split_once(": ").unwrap_or((e, ""));
            f.error
                .get_or_insert_with(|| (class.trim().to_string(), msg.to_string()));
        } else if let Some(v) = line.strip_prefix("MARCO_EQUAL ") {
            f.equal.get_or_insert(v.trim() == "true");
        }
    }
    f
}

impl Executor {
    pub fn new(limits: SandboxLimits) -> Self {
        Self::with_concurrency(limits, 3)
    }

    pub fn with_concurrency(limits: SandboxLimits, concurrency: usize) -> Self {
        Self {
            limits,
            python: sandbox::find_python(),
            slots: Slots {
                free: Mutex::new(concurrency.max(1)),
                cv: Condvar::new(),
            },
        }
    }

    pub fn limits(&self) -> &SandboxLimits {
        &self.limits
    }

    fn job(&self, job: serde_json::Value) -> Result<(RawRun, Frames), ExecError> {
        let python = self
            .python
            .as_deref()
            .ok_or_else(|| ExecError::Sandbox("python3 not found (set MARCO_PYTHON)".into()))?;
        let _slot = self.slots.acquire();
        let run = sandbox::run_job(python, &job, &self.limits)?;
        let frames = parse_frames(&run.stdout);
        Ok((run, frames))
    }

    fn classify(&self, run: &RawRun, frames: &Frames) -> Outcome {
        let cpu_limit = Duration::from_secs(self.limits.cpu_seconds);
        if run.wall_killed {
            return Outcome::Timeout;
        }
        if let Exit::Signal(sig) = run.exit {
            if sig == libc::SIGXCPU || (sig == libc::SIGKILL && run.cpu >= cpu_limit) {
                return Outcome::Timeout;
            }
            return Outcome::ResourceKilled {
                reason: format!("killed by signal {sig}"),
            };
        }
        if let Exit::Code(INFRA_EXIT) = run.exit {
            return Outcome::SandboxError {
                message: truncate_chars(run.stderr.trim(), MESSAGE_CAP),
            };
        }
        if let Some((class, message)) = &frames.error {
            return match class.as_str() {
                "MemoryError" => Outcome::ResourceKilled {
                    reason: "memory limit exceeded".into(),
                },
                "OutputLimitExceeded" => Outcome::ResourceKilled {
                    reason: message.clone(),
                },
                _ => Outcome::Exception {
                    class: class.clone(),
                    message: truncate_chars(message, MESSAGE_CAP),
                },
            };
        }
        if let Some(repr) = &frames.result {
            return Outcome::Value { repr: repr.clone() };
        }
        let tail = run.stderr.trim().lines().last().unwrap_or("").to_string();
        if tail.contains("MemoryError") {
            return Outcome::ResourceKilled {
                reason: "memory limit exceeded".into(),
            };
        }
        Outcome::Exception {
            class: "AbnormalExit".into(),
            message: truncate_chars(
                &format!("exit {:?} without a result {tail}", run.exit),
                MESSAGE_CAP,
            ),
        }
    }

    fn outcome(&self, run: &RawRun, frames: &Frames) -> ExecOutcome {
        ExecOutcome {
            outcome: self.classify(run, frames),
            wall: run.wall,
            cpu: run.cpu,
        }
    }

    /// Evaluates `code` then `call_expr`. For the DSLs `code` is a program
    /// and `call_expr` is the input value.
    pub fn run_candidate(
        &self,
        code: &str,
        call_expr: &str,
        language: CodeLanguage,
    ) -> Result<ExecOutcome, ExecError> {
        if let Some(family) = DslFamily::from_language(language) {
            return Ok(run_dsl(family, code, call_expr));
        }
        let (run, frames) = self.job(json!({
            "mode": "run",
            "code": code,
            "call": call_expr,
            "output_cap": self.limits.output_bytes,
            "message_cap": MESSAGE_CAP,
        }))?;
        Ok(self.outcome(&run, &frames))
    }

    /// Structural equality of two value expressions. Unparseable input
    /// compares unequal with a reason.
    pub fn values_equal(
        &self,
        a_expr: &str,
        b_expr: &str,
        language: CodeLanguage,
        tolerance: Option<f64>,
    ) -> Result<Equality, ExecError> {
        if let Some(family) = DslFamily::from_language(language) {
            return Ok(
                match (
                    DslValue::parse(family, a_expr),
                    DslValue::parse(family, b_expr),
                ) {
                    (Ok(a), Ok(b)) => Equality {
                        equal: a == b,
                        reason: None,
                    },
                    (Err(e), _) | (_, Err(e)) => Equality {
                        equal: false,
                        reason: Some(e.to_string()),
                    },
                },
            );
        }
        let (run, frames) = self.job(json!({
            "mode": "compare",
            "a": a_expr,
            "b": b_expr,
            "tolerance": tolerance,
            "output_cap": self.limits.output_bytes,
            "message_cap": MESSAGE_CAP,
        }))?;
        if let Some(equal) = frames.equal {
            return Ok(Equality {
                equal,
                reason: None,
            });
        }
        let outcome = self.outcome(&run, &frames);
        if let Outcome::SandboxError { message } = outcome.outcome {
            return Err(ExecError::Sandbox(message));
        }
        Ok(Equality {
            equal: false,
            reason: Some(format!(
                "{}: {}",
                outcome.error_class().unwrap_or("Error"),
                outcome.error_message().unwrap_or("")
            )),
        })
    }

    /// Runs `code`, evaluates the entry on `input`, and compares it with `expected`, all in
    /// one child. Returns the candidate outcome, the verdict, and whether the
    /// expected side failed to evaluate.
    fn check_general(
        &self,
        code: &str,
        input: &str,
        expected: &str,
        target: Target<'_>,
    ) -> Result<(ExecOutcome, bool, Option<String>), ExecError> {
        let (run, frames) = self.job(json!({
            "mode": "check",
            "code": code,
            "entry": target.entry,
            "call": target.call(input),
            "expected": expected,
            "tolerance": target.tolerance,
            "output_cap": self.limits.output_bytes,
            "message_cap": MESSAGE_CAP,
        }))?;
        if let Some((class, msg)) = &frames.error {
            if class == "MarcoExpectedError" {
                let outcome = ExecOutcome {
                    outcome: Outcome::Exception {
                        class: class.clone(),
                        message: msg.clone(),
                    },
                    wall: run.wall,
                    cpu: run.cpu,
                };
                return Ok((outcome, false, Some(msg.clone())));
            }
        }
        let outcome = self.outcome(&run, &frames);
        if let Outcome::SandboxError { message } = &outcome.outcome {
            return Err(ExecError::Sandbox(message.clone()));
        }
        let equal = outcome.status() == ExecStatus::Value && frames.equal == Some(true);
        Ok((outcome, equal, None))
    }

    /// Checks `code` on each pair in order, without stopping at the first
    /// failure.
    pub fn check_induction(
        &self,
        code: &str,
        pairs: &[IoPair],
        target: Target<'_>,
    ) -> Result<Vec<CheckOutcome>, ExecError> {
        let family = DslFamily::from_language(target.language);
        let program = family.map(|f| DslProgram::parse(f, code));
        let mut out = Vec::with_capacity(pairs.len());
        for (i, pair) in pairs.iter().enumerate() {
            let index = i + 1;
            let (exec, passed) = match (&program, family) {
                (Some(Err(e)), _) => {
                    let started = Instant::now();
                    let exec = ExecOutcome::instant(
                        Outcome::Exception {
                            class: e.class().into(),
                            message: e.to_string(),
                        },
                        started,
                    );
                    (exec, false)
                }
                (Some(Ok(p)), Some(f)) => {
                    let exec = run_program(p, &pair.input);
                    let expected = DslValue::parse(f, &pair.output).map_err(|e| {
                        ExecError::DatasetDefect(format!("pair {index} output: {e}"))
                    })?;
                    let passed = exec
                        .value()
                        .and_then(|v| DslValue::parse(f, v).ok())
                        .is_some_and(|v| v == expected);
                    (exec, passed)
                }
                _ => {
                    let (exec, passed, defect) =
                        self.check_general(code, &pair.input, &pair.output, target)?;
                    if let Some(msg) = defect {
                        return Err(ExecError::DatasetDefect(format!(
                            "pair {index} output: {msg}"
                        )));
                    }
                    (exec, passed)
                }
            };
            let record = CheckRecord {
                index,
                passed,
                error_class: exec.error_class().map(str::to_string),
                message: match exec.value() {
                    Some(got) if !passed => Some(truncate_chars(
                        &format!("got {got}, expected {}", pair.output),
                        MESSAGE_CAP,
                    )),
                    Some(_) => None,
                    None => exec.error_message().map(|m| truncate_chars(m, MESSAGE_CAP)),
                },
            };
            out.push(CheckOutcome {
                record,
                exec: Some(exec),
            });
        }
        Ok(out)
    }

    /// Compares a predicted output with what the function really returns.
    /// The true output is never reported back.
    pub fn check_deduction(
        &self,
        predicted_output: &str,
        function_source: &str,
        input_expr: &str,
        target: Target<'_>,
    ) -> Result<CheckOutcome, ExecError> {
        if let Some(family) = DslFamily::from_language(target.language) {
            let program = DslProgram::parse(family, function_source)
                .map_err(|e| ExecError::DatasetDefect(format!("function: {e}")))?;
            let truth = program
                .run_text(input_expr)
                .map_err(|e| ExecError::DatasetDefect(format!("f(input): {e}")))?;
            let eq = self.values_equal(predicted_output, &truth, target.language, None)?;
            return Ok(single(
                eq.equal,
                eq.reason.map(|_| "ParseError".to_string()),
                None,
            ));
        }
        let (exec, passed, expected_err) =
            self.check_general(function_source, input_expr, predicted_output, target)?;
        if let Some(msg) = expected_err {
            // The prediction itself did not evaluate.
            let class = msg
                .split(':')
                .next()
                .unwrap_or("ValueError")
                .trim()
                .to_string();
            return Ok(single(false, Some(class), Some(exec)));
        }
        if exec.status() != ExecStatus::Value {
            return Err(ExecError::DatasetDefect(format!(
                "f(input) failed: {} {}",
                exec.error_class().unwrap_or(""),
                exec.error_message().unwrap_or("")
            )));
        }
        Ok(single(passed, None, Some(exec)))
    }

    /// Runs the function on a predicted input and compares with the
    /// expected output. Any preimage passes.
    pub fn check_abduction(
        &self,
        predicted_input: &str,
        function_source: &str,
        expected_output: &str,
        target: Target<'_>,
    ) -> Result<CheckOutcome, ExecError> {
        if let Some(family) = DslFamily::from_language(target.language) {
            let program = DslProgram::parse(family, function_source)
                .map_err(|e| ExecError::DatasetDefect(format!("function: {e}")))?;
            let expected = DslValue::parse(family, expected_output)
                .map_err(|e| ExecError::DatasetDefect(format!("output: {e}")))?;
            let exec = run_program(&program, predicted_input);
            let passed = exec
                .value()
                .and_then(|v| DslValue::parse(family, v).ok())
                .is_some_and(|v| v == expected);
            let class = exec.error_class().map(str::to_string);
            return Ok(single(passed, class, Some(exec)));
        }
        let (exec, passed, defect) =
            self.check_general(function_source, predicted_input, expected_output, target)?;
        if let Some(msg) = defect {
            return Err(ExecError::DatasetDefect(format!("expected output: {msg}")));
        }
        let class = exec.error_class().map(str::to_string);
        Ok(single(passed, class, Some(exec)))
    }

    /// Checks a proposal against the visible part of a problem (all of
    /// it for deduction/abduction).
    pub fn check_visible(
        &self,
        problem: &Problem,
        core: &str,
    ) -> Result<Vec<CheckOutcome>, ExecError> {
        let visible: Vec<IoPair> = problem.visible_pairs().cloned().collect();
        self.check_pairs(problem, core, &visible)
    }

    /// Checks a proposal against every pair, for scoring.
    pub fn check_all(&self, problem: &Problem, core: &str) -> Result<Vec<CheckOutcome>, ExecError> {
        self.check_pairs(problem, core, &problem.pairs)
    }

    fn check_pairs(
        &self,
        problem: &Problem,
        core: &str,
        pairs: &[IoPair],
    ) -> Result<Vec<CheckOutcome>, ExecError> {
        let target = Target::of(problem);
        match problem.kind {
            TaskKind::Induction => self.check_induction(core, pairs, target),
            TaskKind::Deduction | TaskKind::Abduction => {
                let source = problem
                    .function_source
                    .as_deref()
                    .ok_or_else(|| ExecError::MissingSource(problem.id.clone()))?;
                let pair = &problem.pairs[0];
                let one = if problem.kind == TaskKind::Deduction {
                    self.check_deduction(core, source, &pair.input, target)?
                } else {
                    self.check_abduction(core, source, &pair.output, target)?
                };
                Ok(vec![one])
            }
        }
    }
}

fn single(passed: bool, error_class: Option<String>, exec: Option<ExecOutcome>) -> CheckOutcome {
    CheckOutcome {
        record: CheckRecord {
            index: 1,
            passed,
            error_class,
            message: None,
        },
        exec,
    }
}

fn run_program(program: &DslProgram, input: &str) -> ExecOutcome {
    let started = Instant::now();
    let outcome = match program.run_text(input) {
        Ok(repr) => Outcome::Value { repr },
        Err(DslRunError::Parse(e)) => Outcome::Exception {
            class: "ValueError".into(),
            message: format!("input: {e}"),
        },
        Err(DslRunError::Eval(e)) => Outcome::Exception {
            class: "EvalError".into(),
            message: e.to_string(),
        },
    };
    ExecOutcome::instant(outcome, started)
}

fn run_dsl(family: DslFamily, code: &str, input: &str) -> ExecOutcome {
    match DslProgram::parse(family, code) {
        Ok(p) => run_program(&p, input),
        Err(e) => ExecOutcome::instant(
            Outcome::Exception {
                class: e.class().into(),
                message: e.to_string(),
            },
            Instant::now(),
        ),
    }
}

/// Turns check records into agent-facing feedback.
///
/// Per-iteration induction feedback names each visible example with its
/// verdict and error detail; deduction/abduction feedback carries only the
/// verdict and an error class, so the true answer never leaks.
pub fn make_feedback(
    task: TaskKind,
    records: &[CheckRecord],
    kind: FeedbackKind,
    cap: usize,
) -> Feedback {
    let passed_count = records.iter().filter(|r| r.passed).count();
    let passed = !records.is_empty() && passed_count == records.len();
    let rendered = match kind {
        FeedbackKind::FinalBinary => if passed {
            ALL_CORRECT
        } else if passed_count > 0 {
            SOME_CORRECT
        } else {
            ALL_WRONG
        }
        .to_string(),
        FeedbackKind::PerIteration => {
            let mut lines = Vec::with_capacity(records.len() + 1);
            for r in records {
                let verdict = if r.passed { "pass" } else { "fail" };
                let line = match task {
                    TaskKind::Induction => {
                        let mut line = format!("Example {}: {verdict}", r.index);
                        match (&r.error_class, &r.message) {
                            (Some(c), Some(m)) => line.push_str(&format!(" ({c}: {m})")),
                            (Some(c), None) => line.push_str(&format!(" ({c})")),
                            (None, Some(m)) => line.push_str(&format!(" ({m})")),
                            (None, None) => {}
                        }
                        line
                    }
                    TaskKind::Deduction | TaskKind::Abduction => match &r.error_class {
                        Some(c) if !r.passed => format!("Check {}: {verdict} ({c})", r.index),
                        _ => format!("Check {}: {verdict}", r.index),
                    },
                };
                lines.push(line);
            }
            lines.push(format!("{passed_count}/{} checks passed.", records.len()));
            truncate_chars(&lines.join("\n"), cap)
        }
    };
    Feedback {
        kind,
        passed,
        detail: records.to_vec(),
        rendered,
    }
}

/// Feedback for a proposal that produced nothing runnable.
pub fn no_code_feedback() -> Feedback {
    Feedback {
        kind: FeedbackKind::PerIteration,
        passed: false,
        detail: Vec::new(),
        rendered: NO_CODE_FEEDBACK.to_string(),
    }
}
