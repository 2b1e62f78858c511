//! Inter-problem knowledge: takeaways, the shared bank and its periodic
//! condensation.

use thiserror::Error;

use crate::domain::{
    truncate_chars, CondensedKnowledge, Feedback, KnowledgeBank, Problem, PromptCaps,
    ReasoningPath, Summary, TokenUsage,
};
use crate::prompts::{build_condense_prompt, build_summarize_prompt, PromptError};
use crate::providers::{ChatProvider, ChatSettings, ProviderError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KnowledgeError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("takeaway from agent {0} was empty")]
    EmptySummary(usize),
    #[error("condensed knowledge was empty")]
    EmptyCondensation,
    #[error("summaries for problem {0} were already added")]
    DuplicateProblem(String),
    #[error("summaries mix problems {0} and {1}")]
    MixedProblems(String, String),
}

/// Asks the agent for one transferable takeaway from its finished path.
pub fn summarize(
    provider: &dyn ChatProvider,
    settings: &ChatSettings,
    problem: &Problem,
    path: &ReasoningPath,
    final_feedback: &Feedback,
    caps: &PromptCaps,
) -> Result<(Summary, TokenUsage), KnowledgeError> {
    let messages = build_summarize_prompt(problem, path, final_feedback, caps)?;
    let resp = provider.chat(&messages, settings)?;
    let text = resp.text.trim();
    if text.is_empty() {
        return Err(KnowledgeError::EmptySummary(path.agent_index));
    }
    Ok((
        Summary {
            problem_id: path.problem_id.clone(),
            agent_index: path.agent_index,
            text: truncate_chars(text, caps.summary_chars),
        },
        resp.usage,
    ))
}

/// Adds one problem's takeaways in agent order and counts the problem as
/// seen, even when every takeaway was skipped.
pub fn append_summaries(
    bank: &KnowledgeBank,
    problem_id: &str,
    summaries: &[Summary],
) -> Result<KnowledgeBank, KnowledgeError> {
    if let Some(other) = summaries.iter().find(|s| s.problem_id != problem_id) {
        return Err(KnowledgeError::MixedProblems(
            problem_id.to_string(),
            other.problem_id.clone(),
        ));
    }
    if bank.raw.iter().any(|s| s.problem_id == problem_id) {
        return Err(KnowledgeError::DuplicateProblem(problem_id.to_string()));
    }
    let mut sorted = summaries.to_vec();
    sorted.sort_by_key(|s| s.agent_index);
    let mut next = bank.clone();
    next.raw.extend(sorted);
    next.problems_seen += 1;
    Ok(next)
}

pub fn should_condense(problems_seen: usize, period: usize) -> bool {
    period > 0 && problems_seen > 0 && problems_seen.is_multiple_of(period)
}

/// Folds the current condensed text and all raw takeaways into a new
/// condensed block. On error the caller keeps `bank` as it was.
pub fn condense(
    provider: &dyn ChatProvider,
    settings: &ChatSettings,
    bank: &KnowledgeBank,
    caps: &PromptCaps,
) -> Result<(KnowledgeBank, TokenUsage), KnowledgeError> {
    let messages = build_condense_prompt(bank, caps)?;
    let resp = provider.chat(&messages, settings)?;
    let text = resp.text.trim();
    if text.is_empty() {
        return Err(KnowledgeError::EmptyCondensation);
    }
    let condensed = CondensedKnowledge {
        text: text.to_string(),
        covering_problems: bank.problems_seen,
        version: bank.version() + 1,
    };
    Ok((
        KnowledgeBank {
            condensed: Some(condensed),
            raw: Vec::new(),
            problems_seen: bank.problems_seen,
        },
        resp.usage,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{
        CheckRecord, CodeLanguage, FeedbackKind, IoPair, Solution, TRUNCATION_MARKER,
    };
    use crate::providers::ScriptedProvider;

    fn problem() -> Problem {
        let mut pairs = vec![IoPair::new("[1]", "[2]"), IoPair::new("[2]", "[4]")];
        pairs[0].visible = Some(true);
        Problem::induction("p1", CodeLanguage::ListDsl, pairs)
    }

    fn final_fb() -> Feedback {
        Feedback {
            kind: FeedbackKind::FinalBinary,
            passed: false,
            detail: vec![CheckRecord {
                index: 1,
                passed: false,
                error_class: None,
                message: None,
            }],
            rendered: "All your answers are wrong for the given examples.".into(),
        }
    }

    fn path(agent: usize) -> ReasoningPath {
        let mut p = ReasoningPath::new("p1", agent);
        p.append(
            Solution {
                agent_index: agent,
                iteration: 1,
                raw_text: "```\nSort\n```".into(),
                core: Some("Sort".into()),
            },
            Feedback {
                kind: FeedbackKind::PerIteration,
                ..final_fb()
            },
        )
        .unwrap();
        p
    }

    fn settings() -> ChatSettings {
        ChatSettings::new("s", 0.2)
    }

    fn run(reply: &str) -> Result<Summary, KnowledgeError> {
        let p = ScriptedProvider::from_replies([reply]);
        summarize(
            &p,
            &settings(),
            &problem(),
            &path(2),
            &final_fb(),
            &PromptCaps::default(),
        )
        .map(|(s, _)| s)
    }

    fn summary(problem: &str, agent: usize) -> Summary {
        Summary {
            problem_id: problem.into(),
            agent_index: agent,
            text: format!("{problem}/{agent}"),
        }
    }

    #[test]
    fn summarize_trims_and_tags() {
        let s = run("  check letter cases \n").unwrap();
        assert_eq!(s.text, "check letter cases");
        assert_eq!((s.problem_id.as_str(), s.agent_index), ("p1", 2));
    }

    #[test]
    fn summarize_caps_length() {
        let s = run(&"x".repeat(10_000)).unwrap();
        assert_eq!(
            s.text.chars().count(),
            800 + TRUNCATION_MARKER.chars().count()
        );
        assert!(s.text.ends_with(TRUNCATION_MARKER));
    }

    #[test]
    fn blank_summary_is_rejected() {
        assert_eq!(run("  "), Err(KnowledgeError::EmptySummary(2)));
    }

    #[test]
    fn append_keeps_order_and_counts() {
        let bank = KnowledgeBank::default();
        let bank = append_summaries(
            &bank,
            "a",
            &[summary("a", 3), summary("a", 1), summary("a", 2)],
        )
        .unwrap();
        assert_eq!(bank.raw.len(), 3);
        assert_eq!(bank.problems_seen, 1);
        assert_eq!(bank.raw[0].agent_index, 1);
        let bank2 = append_summaries(&bank, "b", &[summary("b", 1), summary("b", 2)]).unwrap();
        assert_eq!(bank2.raw.len(), 5);
        assert_eq!(&bank2.raw[..3], &bank.raw[..]);
        assert_eq!(
            append_summaries(&bank2, "a", &[summary("a", 1)]),
            Err(KnowledgeError::DuplicateProblem("a".into()))
        );
        assert!(matches!(
            append_summaries(&bank2, "c", &[summary("d", 1)]),
            Err(KnowledgeError::MixedProblems(..))
        ));
    }

    #[test]
    fn condense_schedule() {
        assert!(should_condense(8, 8));
        assert!(!should_condense(9, 8));
        assert!(should_condense(16, 8));
        assert!(!should_condense(0, 8));
        assert_eq!((1..=50).filter(|&n| should_condense(n, 8)).count(), 50 / 8);
    }

    #[test]
    fn condense_folds_and_versions() {
        let mut bank = KnowledgeBank::default();
        for i in 0..8 {
            let id = format!("p{i}");
            bank = append_summaries(
                &bank,
                &id,
                &[summary(&id, 1), summary(&id, 2), summary(&id, 3)],
            )
            .unwrap();
        }
        assert_eq!(bank.raw.len(), 24);
        let caps = PromptCaps::default();
        let p = ScriptedProvider::from_replies(["1. v1", "1. v2"]);
        let (b1, _) = condense(&p, &settings(), &bank, &caps).unwrap();
        assert!(b1.raw.is_empty());
        assert_eq!(b1.version(), 1);
        assert_eq!(b1.problems_seen, 8);
        let mut b = b1.clone();
        b.raw = bank.raw.clone();
        let (b2, _) = condense(&p, &settings(), &b, &caps).unwrap();
        assert_eq!(b2.version(), 2);
        assert_eq!(b2.condensed.unwrap().text, "1. v2");
        let prompt = &p.calls()[1][1].content;
        assert!(prompt.contains("1. v1"));
    }

    #[test]
    fn condense_failure_leaves_bank() {
        let mut bank = KnowledgeBank::default();
        bank = append_summaries(&bank, "a", &[summary("a", 1)]).unwrap();
        let p = ScriptedProvider::from_replies(Vec::<String>::new());
        let before = bank.clone();
        assert!(condense(&p, &settings(), &bank, &PromptCaps::default()).is_err());
        assert_eq!(bank, before);
    }
}
