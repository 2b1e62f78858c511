//! Simulated agents: chat providers that answer DSL prompts by running the
//! enumerative synthesizer instead of a language model.
//!
//! Both agents are stateless. Every reply is a pure function of the prompt,
//! so a run can be interrupted and resumed with byte-identical output.

use std::collections::HashSet;

use crate::domain::{CodeLanguage, IoPair, TaskKind};
use crate::dsl::{enumerate_solve, DslFamily, DslProgram, SearchLimits};
use crate::executor::ALL_CORRECT;
use crate::prompts::{
    CONDENSE_MARKER, KNOWLEDGE_END_MARKER, KNOWLEDGE_MARKER, PROBLEM_MARKER, REFLECTION_MARKER,
    VERDICT_MARKER,
};
use crate::providers::{
    validate_messages, ChatMessage, ChatProvider, ChatSettings, ProviderError, ProviderResponse,
    Role,
};

/// Stage families a [`SkillAgent`] cannot use until the knowledge names them.
pub const LOCKED_FAMILIES: [&str; 5] = ["Map", "Filter", "Count", "ZipWith", "Scanl1"];

/// What a prompt asks for, as far as the sim agents can tell.
#[derive(Debug, Clone, PartialEq)]
pub enum PromptRequest {
    Propose(ProblemView),
    Summarize {
        problem: ProblemView,
        verdict: String,
    },
    Condense {
        lines: Vec<String>,
        limit: usize,
    },
    Unknown,
}

/// The parts of a rendered problem section the sim agents use.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemView {
    pub kind: Option<TaskKind>,
    pub language: Option<CodeLanguage>,
    pub examples: Vec<IoPair>,
    pub function: Option<String>,
    pub input: Option<String>,
    pub output: Option<String>,
    /// Text between the knowledge markers, empty when absent.
    pub knowledge: String,
}

fn section_after<'a>(text: &'a str, marker: &str) -> Option<&'a str> {
    text.find(marker).map(|i| &text[i + marker.len()..])
}

fn parse_problem(text: &str) -> Option<ProblemView> {
    let knowledge = section_after(text, KNOWLEDGE_MARKER)
        .and_then(|rest| {
            rest.find(KNOWLEDGE_END_MARKER)
                .map(|end| rest[..end].trim().to_string())
        })
        .unwrap_or_default();
    let body = section_after(text, PROBLEM_MARKER)?;
    let body = ["\nYour attempts:", "\nThink step by step", VERDICT_MARKER]
        .iter()
        .filter_map(|m| body.find(m))
        .min()
        .map_or(body, |end| &body[..end]);

    let mut view = ProblemView {
        kind: None,
        language: None,
        examples: Vec::new(),
        function: None,
        input: None,
        output: None,
        knowledge,
    };
    let mut lines = body.lines();
    let mut pending_input: Option<String> = None;
    while let Some(line) = lines.next() {
        if let Some(v) = line.strip_prefix("Task: ") {
            view.kind = v.trim().parse().ok();
        } else if let Some(v) = line.strip_prefix("Language: ") {
            view.language = v.trim().parse().ok();
        } else if line == "Function:" {
            let mut src = Vec::new();
            let mut inside = false;
            for l in lines.by_ref() {
                if l.starts_with("```") {
                    if inside {
                        break;
                    }
                    inside = true;
                } else if inside {
                    src.push(l);
                }
            }
            view.function = Some(src.join("\n"));
        } else if let Some(v) = line.strip_prefix("Input: ") {
            pending_input = Some(v.to_string());
            view.input = Some(v.to_string());
        } else if let Some(v) = line.strip_prefix("Output: ") {
            view.output = Some(v.to_string());
            if let Some(input) = pending_input.take() {
                view.examples.push(IoPair::new(input, v));
            }
        }
    }
    Some(view)
}

fn parse_condense(text: &str) -> PromptRequest {
    let mut lines = Vec::new();
    for line in text.lines() {
        let Some((n, rest)) = line.split_once(". ") else {
            continue;
        };
        if !n.is_empty() && n.chars().all(|c| c.is_ascii_digit()) {
            lines.push(rest.trim().to_string());
        }
    }
    let limit = section_after(text, "at most ")
        .and_then(|rest| rest.split_whitespace().next())
        .and_then(|n| n.parse().ok())
        .unwrap_or(usize::MAX);
    PromptRequest::Condense { lines, limit }
}

/// Classifies a conversation by the markers its user messages carry.
pub fn parse_request(messages: &[ChatMessage]) -> PromptRequest {
    let Some(first_user) = messages.iter().find(|m| m.role == Role::User) else {
        return PromptRequest::Unknown;
    };
    let text = first_user.content.as_str();
    if text.starts_with(CONDENSE_MARKER) {
        return parse_condense(text);
    }
    if text.starts_with(REFLECTION_MARKER) {
        let Some(problem) = parse_problem(text) else {
            return PromptRequest::Unknown;
        };
        let verdict = section_after(text, VERDICT_MARKER)
            .and_then(|rest| rest.trim_start().lines().next())
            .unwrap_or_default()
            .trim()
            .to_string();
        return PromptRequest::Summarize { problem, verdict };
    }
    match parse_problem(text) {
        Some(p) => PromptRequest::Propose(p),
        None => PromptRequest::Unknown,
    }
}

fn fenced(body: &str) -> String {
    format!("```\n{body}\n```")
}

/// Answers a problem with the synthesizer under `limits`. Returns the
/// reply text; no code block when nothing fits.
fn propose(view: &ProblemView, limits: &SearchLimits) -> String {
    let family = view.language.and_then(DslFamily::from_language);
    let Some(family) = family else {
        return "I can only work with the list and string DSLs.".into();
    };
    match view.kind {
        Some(TaskKind::Induction) | None => match enumerate_solve(family, &view.examples, limits) {
            Some(p) => format!(
                "Searching pipelines of up to {} stages, this program fits every example:\n{}",
                limits.max_stages,
                fenced(&p.to_string())
            ),
            None => format!(
                "No program of up to {} stages fits all {} examples.",
                limits.max_stages,
                view.examples.len()
            ),
        },
        Some(TaskKind::Deduction) => {
            let run = view
                .function
                .as_deref()
                .zip(view.input.as_deref())
                .and_then(|(src, input)| DslProgram::parse(family, src).ok()?.run_text(input).ok());
            match run {
                Some(out) => format!("Running the program by hand gives:\n{}", fenced(&out)),
                None => "The program fails on this input.".into(),
            }
        }
        // Finding inputs is out of reach for a forward-only synthesizer.
        Some(TaskKind::Abduction) => "I could not find an input.".into(),
    }
}

fn condense_reply(lines: &[String], limit: usize) -> String {
    let mut seen = HashSet::new();
    lines
        .iter()
        .filter(|l| seen.insert(l.as_str()))
        .take(limit.max(1))
        .enumerate()
        .map(|(i, l)| format!("{}. {l}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

fn reply(text: String) -> Result<ProviderResponse, ProviderError> {
    Ok(ProviderResponse::immediate(text))
}

/// Solves DSL induction by enumeration with every stage available.
#[derive(Debug, Clone)]
pub struct EnumeratorAgent {
    pub max_stages: usize,
}

impl EnumeratorAgent {
    pub fn new(max_stages: usize) -> Self {
        Self { max_stages }
    }
}

impl ChatProvider for EnumeratorAgent {
    fn chat(
        &self,
        messages: &[ChatMessage],
        _settings: &ChatSettings,
    ) -> Result<ProviderResponse, ProviderError> {
        validate_messages(messages)?;
        match parse_request(messages) {
            PromptRequest::Propose(view) => {
                reply(propose(&view, &SearchLimits::new(self.max_stages)))
            }
            PromptRequest::Summarize { verdict, .. } => reply(if verdict == ALL_CORRECT {
                "Search short programs first and confirm each candidate on every example.".into()
            } else {
                "When no short program fits, check for a second input list or sign-dependent steps."
                    .into()
            }),
            PromptRequest::Condense { lines, limit } => reply(condense_reply(&lines, limit)),
            PromptRequest::Unknown => {
                Err(ProviderError::InvalidRequest("unrecognised prompt".into()))
            }
        }
    }
}

/// A list-DSL solver that only knows the basic stages. Each family in
/// [`LOCKED_FAMILIES`] becomes usable once its name appears in the
/// accumulated knowledge section; failed problems produce takeaways that
/// name the family which would have solved them.
#[derive(Debug, Clone)]
pub struct SkillAgent {
    pub max_stages: usize,
}

impl SkillAgent {
    pub fn new(max_stages: usize) -> Self {
        Self { max_stages }
    }

    /// Locked families the knowledge text does not mention.
    pub fn still_locked(knowledge: &str) -> Vec<String> {
        let words: HashSet<&str> = knowledge
            .split(|c: char| !c.is_ascii_alphanumeric())
            .filter(|w| !w.is_empty())
            .collect();
        LOCKED_FAMILIES
            .iter()
            .filter(|f| !words.contains(**f))
            .map(|f| f.to_string())
            .collect()
    }

    fn takeaway(&self, view: &ProblemView, verdict: &str) -> String {
        if verdict == ALL_CORRECT {
            return "Check the candidate against every example before answering.".into();
        }
        let needed = view
            .language
            .and_then(DslFamily::from_language)
            .and_then(|family| {
                enumerate_solve(family, &view.examples, &SearchLimits::new(self.max_stages))
            })
            .and_then(|p| match p {
                DslProgram::List(l) => l
                    .stages()
                    .iter()
                    .map(|s| s.name())
                    .find(|n| LOCKED_FAMILIES.contains(n)),
                DslProgram::String(_) => None,
            });
        match needed {
            Some(name) => {
                format!("Try the {name} stage when the basic stages cannot fit the examples.")
            }
            None => "Re-read the examples for edge cases such as empty or negative values.".into(),
        }
    }
}

impl ChatProvider for SkillAgent {
    fn chat(
        &self,
        messages: &[ChatMessage],
        _settings: &ChatSettings,
    ) -> Result<ProviderResponse, ProviderError> {
        validate_messages(messages)?;
        match parse_request(messages) {
            PromptRequest::Propose(view) => {
                let limits = SearchLimits {
                    excluded: Self::still_locked(&view.knowledge),
                    ..SearchLimits::new(self.max_stages)
                };
                reply(propose(&view, &limits))
            }
            PromptRequest::Summarize { problem, verdict } => {
                reply(self.takeaway(&problem, &verdict))
            }
            PromptRequest::Condense { lines, limit } => reply(condense_reply(&lines, limit)),
            PromptRequest::Unknown => {
                Err(ProviderError::InvalidRequest("unrecognised prompt".into()))
            }
        }
    }
}
