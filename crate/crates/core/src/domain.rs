//! Core data model shared by every other module.
//!
//! All values here are plain data: cloneable, serializable and `Send + Sync`.
//! Code and value expressions are kept as opaque source text; equality of
//! values is decided by the executor, never by string comparison here.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which element of the (input, function, output) triplet is being inferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// (input, output) -> function
    Induction,
    /// (input, function) -> output
    Deduction,
    /// (function, output) -> input
    Abduction,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Induction => "induction",
            TaskKind::Deduction => "deduction",
            TaskKind::Abduction => "abduction",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "induction" => Ok(TaskKind::Induction),
            "deduction" => Ok(TaskKind::Deduction),
            "abduction" => Ok(TaskKind::Abduction),
            other => Err(format!("unknown task kind `{other}`")),
        }
    }
}

/// Language in which candidate code and value expressions are written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeLanguage {
    /// Python, executed in a sandboxed interpreter subprocess.
    General,
    /// The list-manipulation pipeline DSL, evaluated in-process.
    ListDsl,
    /// The string-transformation DSL, evaluated in-process.
    StringDsl,
}

impl CodeLanguage {
    pub fn as_str(self) -> &'static str {
        match self {
            CodeLanguage::General => "general",
            CodeLanguage::ListDsl => "list_dsl",
            CodeLanguage::StringDsl => "string_dsl",
        }
    }

    pub fn is_dsl(self) -> bool {
        !matches!(self, CodeLanguage::General)
    }
}

impl fmt::Display for CodeLanguage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CodeLanguage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "general" => Ok(CodeLanguage::General),
            "list_dsl" => Ok(CodeLanguage::ListDsl),
            "string_dsl" => Ok(CodeLanguage::StringDsl),
            other => Err(format!("unknown language `{other}`")),
        }
    }
}

/// One input/output example. `visible` is `None` until the dataset loader
/// has decided which pairs the agents may see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IoPair {
    pub input: String,
    pub output: String,
    pub visible: Option<bool>,
}

impl IoPair {
    pub fn new(input: impl Into<String>, output: impl Into<String>) -> Self {
        Self {
            input: input.into(),
            output: output.into(),
            visible: None,
        }
    }

    pub fn is_visible(&self) -> bool {
        self.visible == Some(true)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProblemError {
    #[error("induction problem `{0}` must have no function source")]
    UnexpectedSource(String),
    #[error("induction problem `{0}` needs at least 2 pairs, got {1}")]
    TooFewPairs(String, usize),
    #[error("{kind} problem `{id}` needs a function source")]
    MissingSource { id: String, kind: TaskKind },
    #[error("{kind} problem `{id}` needs exactly 1 pair, got {count}")]
    WrongPairCount {
        id: String,
        kind: TaskKind,
        count: usize,
    },
    #[error("problem id must be non-empty")]
    EmptyId,
}

/// One code-reasoning task: the source elements handed to the agents plus
/// the ground truth kept back for checking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub kind: TaskKind,
    pub language: CodeLanguage,
    /// Name of the function under test (`f` unless the dataset says otherwise).
    pub entry: String,
    pub function_source: Option<String>,
    pub pairs: Vec<IoPair>,
    /// Optional absolute tolerance for float comparison.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

pub const DEFAULT_ENTRY: &str = "f";

impl Problem {
    pub fn induction(id: impl Into<String>, language: CodeLanguage, pairs: Vec<IoPair>) -> Self {
        Self {
            id: id.into(),
            kind: TaskKind::Induction,
            language,
            entry: DEFAULT_ENTRY.to_string(),
            function_source: None,
            pairs,
            tolerance: None,
        }
    }

    /// A deduction or abduction problem over a single (input, output) pair.
    pub fn with_function(
        id: impl Into<String>,
        kind: TaskKind,
        language: CodeLanguage,
        source: impl Into<String>,
        pair: IoPair,
    ) -> Self {
        Self {
            id: id.into(),
            kind,
            language,
            entry: DEFAULT_ENTRY.to_string(),
            function_source: Some(source.into()),
            pairs: vec![pair],
            tolerance: None,
        }
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        if self.id.is_empty() {
            return Err(ProblemError::EmptyId);
        }
        match self.kind {
            TaskKind::Induction => {
                if self.function_source.is_some() {
                    return Err(ProblemError::UnexpectedSource(self.id.clone()));
                }
                if self.pairs.len() < 2 {
                    return Err(ProblemError::TooFewPairs(self.id.clone(), self.pairs.len()));
                }
            }
            kind @ (TaskKind::Deduction | TaskKind::Abduction) => {
                if self.function_source.is_none() {
                    return Err(ProblemError::MissingSource {
                        id: self.id.clone(),
                        kind,
                    });
                }
                if self.pairs.len() != 1 {
                    return Err(ProblemError::WrongPairCount {
                        id: self.id.clone(),
                        kind,
                        count: self.pairs.len(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn visible_pairs(&self) -> impl Iterator<Item = &IoPair> {
        self.pairs.iter().filter(|p| p.is_visible())
    }

    pub fn hidden_pairs(&self) -> impl Iterator<Item = &IoPair> {
        self.pairs.iter().filter(|p| !p.is_visible())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl std::ops::AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: Self) {
        self.prompt_tokens += rhs.prompt_tokens;
        self.completion_tokens += rhs.completion_tokens;
    }
}

/// One proposal by one agent. `core` is the extracted code or value
/// expression; `None` when the response had nothing extractable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub agent_index: usize,
    pub iteration: usize,
    pub raw_text: String,
    pub core: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackKind {
    PerIteration,
    FinalBinary,
}

/// Outcome of one verification check (one visible example, or the single
/// deduction/abduction check).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckRecord {
    /// 1-based position among the checks.
    pub index: usize,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub kind: FeedbackKind,
    pub passed: bool,
    pub detail: Vec<CheckRecord>,
    pub rendered: String,
}

impl Feedback {
    pub fn passed_count(&self) -> usize {
        self.detail.iter().filter(|c| c.passed).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("iteration gap: expected iteration {expected}, got {got}")]
    IterationGap { expected: usize, got: usize },
    #[error("solution belongs to agent {got}, path is for agent {expected}")]
    WrongAgent { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub solution: Solution,
    pub feedback: Feedback,
}

/// The alternating solution/feedback history of one agent on one problem.
/// Steps are stored as pairs so alternation holds by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningPath {
    pub problem_id: String,
    pub agent_index: usize,
    steps: Vec<PathStep>,
}

/// Borrowed view of one entry of a path in its flat alternating form.
#[derive(Debug, Clone, Copy)]
pub enum PathEntry<'a> {
    Solution(&'a Solution),
    Feedback(&'a Feedback),
}

impl ReasoningPath {
    pub fn new(problem_id: impl Into<String>, agent_index: usize) -> Self {
        Self {
            problem_id: problem_id.into(),
            agent_index,
            steps: Vec::new(),
        }
    }

    /// Extends the path by one (solution, feedback) step. Iterations must
    /// be consecutive starting at 1.
    pub fn append(&mut self, solution: Solution, feedback: Feedback) -> Result<(), PathError> {
        let expected = self.last_iteration() + 1;
        if solution.iteration != expected {
            return Err(PathError::IterationGap {
                expected,
                got: solution.iteration,
            });
        }
        if solution.agent_index != self.agent_index {
            return Err(PathError::WrongAgent {
                expected: self.agent_index,
                got: solution.agent_index,
            });
        }
        self.steps.push(PathStep { solution, feedback });
        Ok(())
    }

    /// Number of flat entries (solutions plus feedbacks).
    pub fn len(&self) -> usize {
        self.steps.len() * 2
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn last_iteration(&self) -> usize {
        self.steps.last().map_or(0, |s| s.solution.iteration)
    }

    pub fn steps(&self) -> &[PathStep] {
        &self.steps
    }

    pub fn last(&self) -> Option<&PathStep> {
        self.steps.last()
    }

    pub fn entries(&self) -> impl Iterator<Item = PathEntry<'_>> {
        self.steps.iter().flat_map(|s| {
            [
                PathEntry::Solution(&s.solution),
                PathEntry::Feedback(&s.feedback),
            ]
        })
    }
}

/// Functional form of [`ReasoningPath::append`].
pub fn path_append(
    mut path: ReasoningPath,
    solution: Solution,
    feedback: Feedback,
) -> Result<ReasoningPath, PathError> {
    path.append(solution, feedback)?;
    Ok(path)
}

/// A peer's compact proposal-feedback pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lesson {
    pub from_agent: usize,
    pub iteration: usize,
    /// Extracted code core; empty when the peer produced nothing runnable.
    pub code_core: String,
    pub feedback: Feedback,
}

/// One agent's takeaway after finishing a problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub problem_id: String,
    pub agent_index: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CondensedKnowledge {
    pub text: String,
    pub covering_problems: usize,
    pub version: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeBank {
    pub condensed: Option<CondensedKnowledge>,
    pub raw: Vec<Summary>,
    pub problems_seen: usize,
}

impl KnowledgeBank {
    pub fn is_empty(&self) -> bool {
        self.condensed.is_none() && self.raw.is_empty()
    }

    pub fn version(&self) -> u32 {
        self.condensed.as_ref().map_or(0, |c| c.version)
    }
}

/// Separator between knowledge items in the rendered bank.
pub const KNOWLEDGE_DELIMITER: &str = "\n- ";

/// Renders the bank for prompt injection: condensed text first, then the raw
/// summaries in insertion order. The empty bank renders as "".
pub fn render_knowledge(bank: &KnowledgeBank) -> String {
    let mut items: Vec<&str> = Vec::with_capacity(bank.raw.len() + 1);
    if let Some(c) = &bank.condensed {
        items.push(c.text.as_str());
    }
    items.extend(bank.raw.iter().map(|s| s.text.as_str()));
    match items.as_slice() {
        [] => String::new(),
        [only] => only.to_string(),
        _ => {
            let mut out = String::new();
            for item in items {
                out.push_str(KNOWLEDGE_DELIMITER);
                out.push_str(item);
            }
            out.trim_start().to_string()
        }
    }
}

/// Process-level resource limits for one sandboxed execution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SandboxLimits {
    pub cpu_seconds: u64,
    pub wall_seconds: u64,
    pub memory_bytes: u64,
    pub output_bytes: u64,
}

impl Default for SandboxLimits {
    fn default() -> Self {
        Self {
            cpu_seconds: 5,
            wall_seconds: 10,
            memory_bytes: 256 * 1024 * 1024,
            output_bytes: 64 * 1024,
        }
    }
}

/// Character caps applied during prompt assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptCaps {
    pub feedback_chars: usize,
    pub lesson_chars: usize,
    pub summary_chars: usize,
    pub condensed_sentences: usize,
    pub message_chars: usize,
}

impl Default for PromptCaps {
    fn default() -> Self {
        Self {
            feedback_chars: 2000,
            lesson_chars: 1500,
            summary_chars: 800,
            condensed_sentences: 10,
            message_chars: 2000,
        }
    }
}

/// How an agent (or the condenser) is backed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// A chat-completions HTTP endpoint.
    #[default]
    Http,
    /// Offline simulated agent that solves DSL problems by enumeration.
    Enumerator,
    /// Offline simulated agent whose skills are unlocked by knowledge text.
    Skill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub model: String,
    #[serde(default)]
    pub provider: ProviderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    /// Environment variable holding the key; `MARCO_API_KEY` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    /// Search depth of the simulated agents.
    #[serde(default = "default_sim_depth")]
    pub max_stages: usize,
    #[serde(default = "default_temperature")]
    pub temperature: f32,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_sim_depth() -> usize {
    2
}

fn default_temperature() -> f32 {
    0.7
}

fn default_max_tokens() -> u32 {
    2048
}

impl AgentConfig {
    pub fn http(model: impl Into<String>, base_url: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            provider: ProviderKind::Http,
            base_url: Some(base_url.into()),
            api_key_env: None,
            max_stages: default_sim_depth(),
            temperature: default_temperature(),
            max_tokens: default_max_tokens(),
        }
    }

    pub fn simulated(provider: ProviderKind, max_stages: usize) -> Self {
        Self {
            model: format!("{provider:?}-d{max_stages}").to_lowercase(),
            provider,
            base_url: None,
            api_key_env: None,
            max_stages,
            temperature: 0.0,
            max_tokens: default_max_tokens(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("{0} must be at least 1")]
    NonPositive(&'static str),
    #[error("expected {expected} agent configs for num_agents, got {got}")]
    AgentCount { expected: usize, got: usize },
    #[error("agent {0} uses the http provider but has no base_url")]
    MissingBaseUrl(String),
}

/// Run-wide settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub num_agents: usize,
    pub max_iterations: usize,
    pub condense_period: usize,
    /// Per-agent settings; empty means "configured programmatically".
    pub agents: Vec<AgentConfig>,
    pub condenser: Option<AgentConfig>,
    /// Temperature for takeaway and condensation calls.
    pub reflection_temperature: f32,
    pub sandbox: SandboxLimits,
    pub caps: PromptCaps,
    pub seed: u64,
    pub static_mode: bool,
    pub request_timeout_seconds: u64,
    pub max_retries: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            num_agents: 3,
            max_iterations: 2,
            condense_period: 8,
            agents: Vec::new(),
            condenser: None,
            reflection_temperature: 0.2,
            sandbox: SandboxLimits::default(),
            caps: PromptCaps::default(),
            seed: 0,
            static_mode: false,
            request_timeout_seconds: 120,
            max_retries: 3,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive: [(&'static str, u64); 10] = [
            ("num_agents", self.num_agents as u64),
            ("max_iterations", self.max_iterations as u64),
            ("condense_period", self.condense_period as u64),
            ("sandbox.cpu_seconds", self.sandbox.cpu_seconds),
            ("sandbox.wall_seconds", self.sandbox.wall_seconds),
            ("sandbox.memory_bytes", self.sandbox.memory_bytes),
            ("sandbox.output_bytes", self.sandbox.output_bytes),
            ("caps.feedback_chars", self.caps.feedback_chars as u64),
            ("caps.lesson_chars", self.caps.lesson_chars as u64),
            ("caps.summary_chars", self.caps.summary_chars as u64),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(ConfigError::NonPositive(name));
            }
        }
        if self.caps.condensed_sentences == 0 {
            return Err(ConfigError::NonPositive("caps.condensed_sentences"));
        }
        for a in self.agents.iter().chain(&self.condenser) {
            if a.provider == ProviderKind::Http && a.base_url.is_none() {
                return Err(ConfigError::MissingBaseUrl(a.model.clone()));
            }
        }
        if !self.agents.is_empty() && self.agents.len() != self.num_agents {
            return Err(ConfigError::AgentCount {
                expected: self.num_agents,
                got: self.agents.len(),
            });
        }
        Ok(())
    }
}

/// Marker appended to text cut at a cap.
pub const TRUNCATION_MARKER: &str = " ...[truncated]";

/// Keeps the first `cap` characters of `text`, appending
/// [`TRUNCATION_MARKER`] when anything was dropped.
pub fn truncate_chars(text: &str, cap: usize) -> String {
    match text.char_indices().nth(cap) {
        None => text.to_string(),
        Some((byte, _)) => {
            let mut out = text[..byte].to_string();
            out.push_str(TRUNCATION_MARKER);
            out
        }
    }
}
