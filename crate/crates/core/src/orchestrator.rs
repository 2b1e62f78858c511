//! The run loop: per-problem proposal/feedback iterations with lesson
//! exchange between agents, then takeaways and knowledge condensation
//! between problems.

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, info, warn};

use crate::domain::{
    render_knowledge, CondensedKnowledge, Feedback, FeedbackKind, KnowledgeBank, Lesson, Problem,
    ReasoningPath, RunConfig, Solution, Summary, TokenUsage,
};
use crate::executor::{
    extract_code, make_feedback, no_code_feedback, CheckOutcome, ExecError, Executor,
};
use crate::harness::metrics::{self, MetricsError, PairScore, ProblemScores};
use crate::knowledge::{append_summaries, condense, should_condense, summarize, KnowledgeError};
use crate::prompts::{build_initial_prompt, build_revision_prompt, PromptError};
use crate::providers::{ChatProvider, ChatSettings, ProviderError};

/// One solver (or the condenser): a provider plus its decoding settings.
#[derive(Clone)]
pub struct Agent {
    pub provider: Arc<dyn ChatProvider>,
    pub settings: ChatSettings,
}

impl Agent {
    pub fn new(provider: Arc<dyn ChatProvider>, settings: ChatSettings) -> Self {
        Self { provider, settings }
    }
}

impl std::fmt::Debug for Agent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Agent")
            .field("settings", &self.settings)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Sandbox(ExecError),
    #[error("every agent was rejected by its provider: {0}")]
    Auth(ProviderError),
    #[error("expected {expected} agents, got {got}")]
    AgentCount { expected: usize, got: usize },
    #[error("checkpoint failed: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// The proposal chosen for scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selected {
    pub agent_index: usize,
    pub solution: Solution,
    pub visible_passed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemResult {
    pub problem_id: String,
    /// Some agent passed every visible check.
    pub solved_visible: bool,
    pub iterations_used: usize,
    pub selected: Option<Selected>,
    /// Per pair of the problem, in file order, scored with `selected`.
    pub scores: Vec<PairScore>,
    /// End-of-problem verdict per agent.
    pub final_feedback: Vec<Feedback>,
    pub paths: Vec<ReasoningPath>,
    pub usage: TokenUsage,
    /// Set when the problem could not be completed (e.g. a bad dataset row).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub wall: Duration,
}

impl ProblemResult {
    pub fn problem_scores(&self) -> ProblemScores {
        ProblemScores {
            problem_id: self.problem_id.clone(),
            pairs: self.scores.clone(),
        }
    }
}

/// Line-delimited run log. Carries no timestamps so logs of scripted runs
/// are reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum RunEvent {
    ProblemStart {
        index: usize,
        problem_id: String,
        knowledge_version: u32,
        knowledge_chars: usize,
    },
    Proposal {
        problem_id: String,
        iteration: usize,
        agent: usize,
        extracted: bool,
        visible_passed: usize,
        visible_total: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    ProblemEnd {
        problem_id: String,
        solved_visible: bool,
        iterations_used: usize,
        pairs_correct: usize,
        pairs_total: usize,
        usage: TokenUsage,
        #[serde(skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    SummarySkipped {
        problem_id: String,
        agent: usize,
        reason: String,
    },
    Condensation {
        after_problem: usize,
        version: u32,
        ok: bool,
        #[serde(skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
}

/// Knowledge and progress carried from one problem to the next; this is
/// what a checkpoint stores.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub bank: KnowledgeBank,
    /// Every condensed block ever produced, oldest first.
    pub history: Vec<CondensedKnowledge>,
    /// Problems finished so far; the next problem index to run.
    pub completed: usize,
    /// A condensation failed and is retried at the next problem boundary.
    pub pending_condense: bool,
    pub usage: TokenUsage,
}

/// Receives events and per-problem checkpoints from the run loop.
pub trait RunObserver {
    fn event(&mut self, _event: &RunEvent) {}

    /// Called after each problem, before the next one starts. An error
    /// stops the run.
    fn problem_done(&mut self, _result: &ProblemResult, _state: &RunState) -> Result<(), String> {
        Ok(())
    }
}

/// Observer that drops everything.
pub struct NullObserver;

impl RunObserver for NullObserver {}

/// Observer that keeps events in memory.
#[derive(Debug, Default)]
pub struct EventLog {
    pub events: Vec<RunEvent>,
}

impl RunObserver for EventLog {
    fn event(&mut self, event: &RunEvent) {
        self.events.push(event.clone());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub results: Vec<ProblemResult>,
    pub state: RunState,
    pub condensations: usize,
}

impl RunReport {
    pub fn scores(&self) -> Vec<ProblemScores> {
        self.results
            .iter()
            .map(ProblemResult::problem_scores)
            .collect()
    }
}

struct Proposal {
    solution: Solution,
    feedback: Feedback,
    usage: TokenUsage,
    error: Option<ProviderError>,
    checks: Option<Result<Vec<CheckOutcome>, ExecError>>,
}

fn propose(
    agent: &Agent,
    agent_index: usize,
    iteration: usize,
    problem: &Problem,
    messages: Result<Vec<crate::providers::ChatMessage>, PromptError>,
    executor: &Executor,
    caps: &crate::domain::PromptCaps,
) -> Proposal {
    let failed = |raw: String, error: Option<ProviderError>, usage| Proposal {
        solution: Solution {
            agent_index,
            iteration,
            raw_text: raw,
            core: None,
        },
        feedback: no_code_feedback(),
        usage,
        error,
        checks: None,
    };
    let messages = match messages {
        Ok(m) => m,
        Err(e) => {
            return failed(
                String::new(),
                Some(ProviderError::InvalidRequest(e.to_string())),
                TokenUsage::default(),
            )
        }
    };
    let resp = match agent.provider.chat(&messages, &agent.settings) {
        Ok(r) => r,
        Err(e) => return failed(String::new(), Some(e), TokenUsage::default()),
    };
    let core = match extract_code(&resp.text) {
        Ok(c) => c,
        Err(_) => return failed(resp.text, None, resp.usage),
    };
    let checks = executor.check_visible(problem, &core);
    let feedback = match &checks {
        Ok(c) => {
            let records: Vec<_> = c.iter().map(|o| o.record.clone()).collect();
            make_feedback(
                problem.kind,
                &records,
                FeedbackKind::PerIteration,
                caps.feedback_chars,
            )
        }
        Err(_) => no_code_feedback(),
    };
    Proposal {
        solution: Solution {
            agent_index,
            iteration,
            raw_text: resp.text,
            core: Some(core),
        },
        feedback,
        usage: resp.usage,
        error: None,
        checks: Some(checks),
    }
}

/// Picks the proposal passing the most visible checks; ties go to the
/// earlier iteration, then the lower agent index.
pub fn select_final_solution(paths: &[ReasoningPath]) -> Option<Selected> {
    let mut best: Option<Selected> = None;
    for path in paths {
        for step in path.steps() {
            if step.solution.core.is_none() {
                continue;
            }
            let passed = step.feedback.passed_count();
            let better = match &best {
                None => true,
                Some(b) => {
                    (
                        passed,
                        std::cmp::Reverse(step.solution.iteration),
                        std::cmp::Reverse(path.agent_index),
                    ) > (
                        b.visible_passed,
                        std::cmp::Reverse(b.solution.iteration),
                        std::cmp::Reverse(b.agent_index),
                    )
                }
            };
            if better {
                best = Some(Selected {
                    agent_index: path.agent_index,
                    solution: step.solution.clone(),
                    visible_passed: passed,
                });
            }
        }
    }
    best
}

/// Runs the proposal/feedback loop for one problem. `knowledge` is the
/// frozen snapshot taken before the problem started.
pub fn solve_problem(
    problem: &Problem,
    agents: &[Agent],
    knowledge: &str,
    config: &RunConfig,
    executor: &Executor,
    observer: &mut dyn RunObserver,
) -> Result<ProblemResult, OrchestratorError> {
    let started = Instant::now();
    let m = agents.len();
    let knowledge = if config.static_mode { "" } else { knowledge };
    let mut paths: Vec<ReasoningPath> = (1..=m)
        .map(|j| ReasoningPath::new(&problem.id, j))
        .collect();
    let mut usage = TokenUsage::default();
    let mut solved = false;
    let mut iterations_used = 0;
    let mut defect: Option<String> = None;
    let mut lessons: Vec<Lesson> = Vec::new();

    for t in 1..=config.max_iterations {
        iterations_used = t;
        let prompts: Vec<_> = (1..=m)
            .map(|j| {
                if t == 1 {
                    build_initial_prompt(problem, knowledge)
                } else {
                    let peers: Vec<Lesson> = lessons
                        .iter()
                        .filter(|l| l.from_agent != j)
                        .cloned()
                        .collect();
                    build_revision_prompt(
                        problem,
                        &paths[j - 1],
                        &peers,
                        knowledge,
                        m,
                        &config.caps,
                    )
                }
            })
            .collect();
        let proposals: Vec<Proposal> = std::thread::scope(|s| {
            let handles: Vec<_> = prompts
                .into_iter()
                .enumerate()
                .map(|(i, msgs)| {
                    let agent = &agents[i];
                    s.spawn(move || propose(agent, i + 1, t, problem, msgs, executor, &config.caps))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("proposal thread"))
                .collect()
        });

        let auth_failures = proposals
            .iter()
            .filter(|p| p.error.as_ref().is_some_and(ProviderError::is_auth))
            .count();
        if auth_failures == m {
            let err = proposals[0].error.clone().expect("auth error");
            return Err(OrchestratorError::Auth(err));
        }

        let mut next_lessons = Vec::with_capacity(m);
        for p in proposals {
            let j = p.solution.agent_index;
            usage += p.usage;
            if let Some(Err(e)) = &p.checks {
                match e {
                    ExecError::DatasetDefect(msg) | ExecError::MissingSource(msg) => {
                        defect.get_or_insert_with(|| msg.clone());
                    }
                    other => return Err(OrchestratorError::Sandbox(other.clone())),
                }
            }
            let total = match problem.kind {
                crate::domain::TaskKind::Induction => problem.visible_pairs().count(),
                _ => 1,
            };
            observer.event(&RunEvent::Proposal {
                problem_id: problem.id.clone(),
                iteration: t,
                agent: j,
                extracted: p.solution.core.is_some(),
                visible_passed: p.feedback.passed_count(),
                visible_total: total,
                error: p.error.as_ref().map(ToString::to_string),
            });
            if p.feedback.passed {
                solved = true;
            }
            next_lessons.push(Lesson {
                from_agent: j,
                iteration: t,
                code_core: p.solution.core.clone().unwrap_or_default(),
                feedback: p.feedback.clone(),
            });
            paths[j - 1]
                .append(p.solution, p.feedback)
                .expect("iterations advance in lockstep");
        }
        debug!(problem = %problem.id, iteration = t, solved, "iteration done");
        if solved || defect.is_some() {
            break;
        }
        if !config.static_mode {
            lessons = next_lessons;
        }
    }

    let final_feedback: Vec<Feedback> = paths
        .iter()
        .map(|p| {
            let records = p
                .last()
                .map(|s| s.feedback.detail.clone())
                .unwrap_or_default();
            make_feedback(
                problem.kind,
                &records,
                FeedbackKind::FinalBinary,
                config.caps.feedback_chars,
            )
        })
        .collect();

    let selected = if defect.is_some() {
        None
    } else {
        select_final_solution(&paths)
    };
    let scores = match (&selected, &defect) {
        (Some(sel), None) => {
            let core = sel.solution.core.as_deref().expect("selected has core");
            match executor.check_all(problem, core) {
                Ok(checks) => score_pairs(problem, checks.iter().map(CheckOutcome::passed)),
                Err(ExecError::Sandbox(msg)) => {
                    return Err(OrchestratorError::Sandbox(ExecError::Sandbox(msg)))
                }
                Err(e) => {
                    defect = Some(e.to_string());
                    score_pairs(problem, std::iter::repeat(false))
                }
            }
        }
        _ => score_pairs(problem, std::iter::repeat(false)),
    };

    Ok(ProblemResult {
        problem_id: problem.id.clone(),
        solved_visible: solved,
        iterations_used,
        selected,
        scores,
        final_feedback,
        paths,
        usage,
        error: defect,
        wall: started.elapsed(),
    })
}

fn score_pairs(problem: &Problem, passed: impl Iterator<Item = bool>) -> Vec<PairScore> {
    problem
        .pairs
        .iter()
        .zip(passed)
        .map(|(pair, correct)| PairScore {
            visible: pair.is_visible(),
            correct,
        })
        .collect()
}

fn reflect(
    problem: &Problem,
    result: &ProblemResult,
    agents: &[Agent],
    config: &RunConfig,
    observer: &mut dyn RunObserver,
    usage: &mut TokenUsage,
) -> Vec<Summary> {
    if result.error.is_some() {
        return Vec::new();
    }
    let outcomes: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = agents
            .iter()
            .zip(&result.paths)
            .zip(&result.final_feedback)
            .map(|((agent, path), fb)| {
                s.spawn(move || {
                    let settings = agent
                        .settings
                        .with_temperature(config.reflection_temperature);
                    summarize(
                        agent.provider.as_ref(),
                        &settings,
                        problem,
                        path,
                        fb,
                        &config.caps,
                    )
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("summary thread"))
            .collect()
    });
    let mut out = Vec::new();
    for (j, r) in outcomes.into_iter().enumerate() {
        match r {
            Ok((s, u)) => {
                *usage += u;
                out.push(s);
            }
            Err(e) => {
                warn!(problem = %problem.id, agent = j + 1, error = %e, "takeaway skipped");
                observer.event(&RunEvent::SummarySkipped {
                    problem_id: problem.id.clone(),
                    agent: j + 1,
                    reason: e.to_string(),
                });
            }
        }
    }
    out
}

/// Runs `problems` in order starting at `state.completed`, updating the
/// knowledge bank between problems. Pass a restored state to resume.
pub fn run_benchmark(
    problems: &[Problem],
    config: &RunConfig,
    agents: &[Agent],
    condenser: &Agent,
    executor: &Executor,
    mut state: RunState,
    observer: &mut dyn RunObserver,
) -> Result<RunReport, OrchestratorError> {
    if agents.len() != config.num_agents {
        return Err(OrchestratorError::AgentCount {
            expected: config.num_agents,
            got: agents.len(),
        });
    }
    let mut results = Vec::new();
    let mut condensations = 0;
    for (index, problem) in problems.iter().enumerate().skip(state.completed) {
        let snapshot = render_knowledge(&state.bank);
        observer.event(&RunEvent::ProblemStart {
            index: index + 1,
            problem_id: problem.id.clone(),
            knowledge_version: state.bank.version(),
            knowledge_chars: snapshot.chars().count(),
        });
        let mut result = solve_problem(problem, agents, &snapshot, config, executor, observer)?;

        if !config.static_mode {
            let mut reflect_usage = TokenUsage::default();
            let summaries = reflect(
                problem,
                &result,
                agents,
                config,
                observer,
                &mut reflect_usage,
            );
            result.usage += reflect_usage;
            state.bank = match append_summaries(&state.bank, &problem.id, &summaries) {
                Ok(b) => b,
                Err(e) => {
                    // Only a duplicated problem id gets here; count it anyway.
                    warn!(problem = %problem.id, error = %e, "summaries not appended");
                    let mut b = state.bank.clone();
                    b.problems_seen += 1;
                    b
                }
            };
            if should_condense(state.bank.problems_seen, config.condense_period)
                || state.pending_condense
            {
                let settings = condenser
                    .settings
                    .with_temperature(config.reflection_temperature);
                match condense(
                    condenser.provider.as_ref(),
                    &settings,
                    &state.bank,
                    &config.caps,
                ) {
                    Ok((bank, u)) => {
                        result.usage += u;
                        state.bank = bank;
                        state.pending_condense = false;
                        condensations += 1;
                        if let Some(c) = &state.bank.condensed {
                            state.history.push(c.clone());
                        }
                        info!(version = state.bank.version(), "knowledge condensed");
                        observer.event(&RunEvent::Condensation {
                            after_problem: index + 1,
                            version: state.bank.version(),
                            ok: true,
                            error: None,
                        });
                    }
                    Err(e) => {
                        let skip = matches!(e, KnowledgeError::Prompt(_));
                        state.pending_condense = !skip;
                        warn!(error = %e, "condensation failed; will retry");
                        observer.event(&RunEvent::Condensation {
                            after_problem: index + 1,
                            version: state.bank.version(),
                            ok: false,
                            error: Some(e.to_string()),
                        });
                    }
                }
            }
        }

        state.completed = index + 1;
        state.usage += result.usage;
        observer.event(&RunEvent::ProblemEnd {
            problem_id: problem.id.clone(),
            solved_visible: result.solved_visible,
            iterations_used: result.iterations_used,
            pairs_correct: result.scores.iter().filter(|s| s.correct).count(),
            pairs_total: result.scores.len(),
            usage: result.usage,
            error: result.error.clone(),
        });
        observer
            .problem_done(&result, &state)
            .map_err(OrchestratorError::Checkpoint)?;
        results.push(result);
    }
    Ok(RunReport {
        results,
        state,
        condensations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfImprovement {
    pub first_half_delta: f64,
    pub second_half_delta: f64,
}

/// Accuracy of `a` minus accuracy of `b` on the first ⌈N/2⌉ problems and
/// on the rest.
pub fn half_improvement(
    a: &[ProblemScores],
    b: &[ProblemScores],
) -> Result<HalfImprovement, MetricsError> {
    let ids = |r: &[ProblemScores]| r.iter().map(|p| p.problem_id.clone()).collect::<Vec<_>>();
    if ids(a) != ids(b) {
        return Err(MetricsError::MismatchedRuns);
    }
    let n = a.len();
    let cut = n.div_ceil(2);
    let delta = |lo: usize, hi: usize| -> Result<f64, MetricsError> {
        if lo == hi {
            return Ok(0.0);
        }
        Ok(metrics::accuracy(&a[lo..hi])? - metrics::accuracy(&b[lo..hi])?)
    };
    Ok(HalfImprovement {
        first_half_delta: delta(0, cut)?,
        second_half_delta: delta(cut, n)?,
    })
}

#[cfg(test)]
mod tests;
