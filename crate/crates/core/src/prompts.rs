//! Prompt assembly. Every function here is pure: the same inputs give
//! byte-identical messages.
//!
//! Sections are delimited by fixed ASCII markers so transcripts can be
//! checked with plain substring predicates.

use thiserror::Error;

use crate::domain::{
    truncate_chars, CodeLanguage, Feedback, FeedbackKind, IoPair, KnowledgeBank, Lesson, Problem,
    PromptCaps, ReasoningPath, TaskKind,
};
use crate::providers::ChatMessage;

pub const PROBLEM_MARKER: &str = "=== PROBLEM ===";
pub const KNOWLEDGE_MARKER: &str = "=== ACCUMULATED KNOWLEDGE ===";
pub const KNOWLEDGE_END_MARKER: &str = "=== END ACCUMULATED KNOWLEDGE ===";
pub const FEEDBACK_MARKER: &str = "=== FEEDBACK ON YOUR ATTEMPT ===";
pub const LESSONS_MARKER: &str = "=== LESSONS FROM PEER AGENTS ===";
pub const REFLECTION_MARKER: &str = "=== META-REFLECTION ===";
pub const VERDICT_MARKER: &str = "=== FINAL VERDICT ===";
pub const CONDENSE_MARKER: &str = "=== CONDENSE KNOWLEDGE ===";
pub const PRIOR_CONDENSED_MARKER: &str = "=== CURRENT CONDENSED KNOWLEDGE ===";
pub const NEW_TAKEAWAYS_MARKER: &str = "=== NEW TAKEAWAYS ===";

/// Header of one peer lesson block.
pub fn lesson_header(agent: usize, iteration: usize) -> String {
    format!("--- LESSON FROM AGENT {agent} (iteration {iteration}) ---")
}

/// Prefix shared by every lesson header; count it to count lessons.
pub const LESSON_HEADER_PREFIX: &str = "--- LESSON FROM AGENT ";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("hidden example {index} of problem {problem_id} would leak into the prompt")]
    HiddenLeak { problem_id: String, index: usize },
    #[error("agent {0} cannot receive its own lesson")]
    SelfLesson(usize),
    #[error("duplicate lesson from agent {0}")]
    DuplicateLesson(usize),
    #[error("{got} lessons exceed the {max} peers available")]
    TooManyLessons { got: usize, max: usize },
    #[error("reasoning path is empty")]
    EmptyPath,
    #[error("expected final binary feedback")]
    NotFinal,
    #[error("knowledge bank is empty")]
    EmptyBank,
}

fn language_contract(language: CodeLanguage) -> &'static str {
    match language {
        CodeLanguage::General => "Code is Python 3.",
        CodeLanguage::ListDsl => {
            "Code is a list-DSL program: stages joined by `|`, applied left to right to an \
             integer list. First-order stages: Head, Last, Reverse, Sort, Sum, Minimum, Maximum, \
             Take(n), Drop(n), Access(n). Higher-order stages: Map(f), Filter(p), Count(p), \
             ZipWith(op), Scanl1(op), with f in {+1, -1, *2, *3, /2, /3, *(-1), ^2}, \
             p in {>0, <0, even, odd}, op in {+, -, *, min, max}. Division floors. \
             ZipWith pairs the list with a second input list: inputs then look like [[..], [..]]."
        }
        CodeLanguage::StringDsl => {
            "Code is a string-DSL program: Concat(e1, e2, ...) or a single expression, where each \
             e is ConstStr(\"s\"), SubStr(i, j) (1-based, inclusive, negative counts from the end), \
             GetToken(word|digits|alnum, k), ToUpper(e), ToLower(e), Trim(e), Replace(\"a\", \"b\"), \
             GetFirstChar, GetFrom(\"c\") or GetUpto(\"c\"). Values are JSON strings."
        }
    }
}

fn system_contract(problem: &Problem) -> String {
    let task = match problem.kind {
        TaskKind::Induction => format!(
            "You infer a function from input/output examples. Reply with exactly one fenced code \
             block containing a program that defines `{}` and maps every example input to its output.",
            problem.entry
        ),
        TaskKind::Deduction => "You predict what a function returns. Reply with exactly one fenced \
             code block containing only the output value as a single expression."
            .to_string(),
        TaskKind::Abduction => "You find an input for which a function produces a given output. \
             Reply with exactly one fenced code block containing only that input value as a single \
             expression."
            .to_string(),
    };
    format!("{task}\n{}", language_contract(problem.language))
}

fn render_example(n: usize, pair: &IoPair) -> String {
    format!(
        "Example {n}:\nInput: {}\nOutput: {}\n",
        pair.input, pair.output
    )
}

fn render_problem(problem: &Problem) -> String {
    let mut out = format!(
        "{PROBLEM_MARKER}\nTask: {}\nLanguage: {}\n",
        problem.kind, problem.language
    );
    match problem.kind {
        TaskKind::Induction => {
            out.push_str(&format!("Entry function: {}\n\n", problem.entry));
            for (n, pair) in problem.visible_pairs().enumerate() {
                out.push_str(&render_example(n + 1, pair));
            }
        }
        TaskKind::Deduction | TaskKind::Abduction => {
            let source = problem.function_source.as_deref().unwrap_or_default();
            out.push_str(&format!("Function:\n```\n{}\n```\n", source.trim_end()));
            let pair = &problem.pairs[0];
            if problem.kind == TaskKind::Deduction {
                out.push_str(&format!("Input: {}\n", pair.input));
            } else {
                out.push_str(&format!("Output: {}\n", pair.output));
            }
        }
    }
    out
}

fn knowledge_section(knowledge_text: &str) -> String {
    if knowledge_text.trim().is_empty() {
        String::new()
    } else {
        format!(
            "\n{KNOWLEDGE_MARKER}\n{}\n{KNOWLEDGE_END_MARKER}\n",
            knowledge_text.trim_end()
        )
    }
}

/// Refuses prompts in which a hidden example appears in its rendered form.
fn assert_no_leak(problem: &Problem, messages: &[ChatMessage]) -> Result<(), PromptError> {
    if problem.kind != TaskKind::Induction {
        return Ok(());
    }
    for (index, hidden) in problem.pairs.iter().enumerate() {
        if hidden.is_visible()
            || problem
                .visible_pairs()
                .any(|v| v.input == hidden.input && v.output == hidden.output)
        {
            continue;
        }
        let needle = format!("Input: {}\nOutput: {}\n", hidden.input, hidden.output);
        if messages.iter().any(|m| m.content.contains(&needle)) {
            return Err(PromptError::HiddenLeak {
                problem_id: problem.id.clone(),
                index: index + 1,
            });
        }
    }
    Ok(())
}

fn initial_user_message(problem: &Problem, knowledge_text: &str) -> String {
    let mut out = knowledge_section(knowledge_text);
    if !out.is_empty() {
        out.push_str("Use the accumulated knowledge above where it applies.\n\n");
    }
    out.push_str(&render_problem(problem));
    out.push_str("\nThink step by step, then give your final answer in one fenced code block.");
    out
}

pub fn build_initial_prompt(
    problem: &Problem,
    knowledge_text: &str,
) -> Result<Vec<ChatMessage>, PromptError> {
    let messages = vec![
        ChatMessage::system(system_contract(problem)),
        ChatMessage::user(initial_user_message(problem, knowledge_text)),
    ];
    assert_no_leak(problem, &messages)?;
    Ok(messages)
}

fn render_feedback(iteration: usize, feedback: &Feedback, caps: &PromptCaps) -> String {
    format!(
        "{FEEDBACK_MARKER}\nIteration {iteration}: {}\n",
        truncate_chars(&feedback.rendered, caps.feedback_chars)
    )
}

fn render_lesson(lesson: &Lesson, caps: &PromptCaps) -> String {
    let core = if lesson.code_core.trim().is_empty() {
        "(none)".to_string()
    } else {
        truncate_chars(lesson.code_core.trim_end(), caps.lesson_chars)
    };
    format!(
        "{}\nCode:\n```\n{core}\n```\nFeedback: {}\n",
        lesson_header(lesson.from_agent, lesson.iteration),
        truncate_chars(&lesson.feedback.rendered, caps.feedback_chars)
    )
}

fn check_lessons(agent: usize, lessons: &[Lesson], num_agents: usize) -> Result<(), PromptError> {
    let max = num_agents.saturating_sub(1);
    if lessons.len() > max {
        return Err(PromptError::TooManyLessons {
            got: lessons.len(),
            max,
        });
    }
    for (i, l) in lessons.iter().enumerate() {
        if l.from_agent == agent {
            return Err(PromptError::SelfLesson(agent));
        }
        if lessons[..i].iter().any(|o| o.from_agent == l.from_agent) {
            return Err(PromptError::DuplicateLesson(l.from_agent));
        }
    }
    Ok(())
}

/// The agent's own history replayed as a conversation, followed by peer
/// lessons and the request for a corrected solution. Pass no lessons and
/// empty knowledge for the isolated baseline.
pub fn build_revision_prompt(
    problem: &Problem,
    path: &ReasoningPath,
    lessons: &[Lesson],
    knowledge_text: &str,
    num_agents: usize,
    caps: &PromptCaps,
) -> Result<Vec<ChatMessage>, PromptError> {
    let steps = path.steps();
    if steps.is_empty() {
        return Err(PromptError::EmptyPath);
    }
    check_lessons(path.agent_index, lessons, num_agents)?;

    let mut messages = vec![
        ChatMessage::system(system_contract(problem)),
        ChatMessage::user(initial_user_message(problem, knowledge_text)),
    ];
    for (i, step) in steps.iter().enumerate() {
        let raw = if step.solution.raw_text.trim().is_empty() {
            "(no response)".to_string()
        } else {
            truncate_chars(&step.solution.raw_text, caps.message_chars)
        };
        messages.push(ChatMessage::assistant(raw));
        let mut text = render_feedback(step.solution.iteration, &step.feedback, caps);
        if i + 1 == steps.len() {
            if !lessons.is_empty() {
                text.push_str(&format!(
                    "\n{LESSONS_MARKER}\nOther agents tried this problem in the same round. \
                     Their code and the feedback it received:\n\n"
                ));
                for l in lessons {
                    text.push_str(&render_lesson(l, caps));
                    text.push('\n');
                }
            }
            text.push_str(
                "\nPropose a corrected solution. Give the final answer in one fenced code block.",
            );
        }
        messages.push(ChatMessage::user(text));
    }
    assert_no_leak(problem, &messages)?;
    Ok(messages)
}

fn render_path(path: &ReasoningPath, caps: &PromptCaps) -> String {
    let mut out = String::new();
    for step in path.steps() {
        let s = &step.solution;
        let shown = match &s.core {
            Some(core) => format!(
                "```\n{}\n```",
                truncate_chars(core.trim_end(), caps.lesson_chars)
            ),
            None => truncate_chars(&s.raw_text, caps.message_chars),
        };
        out.push_str(&format!(
            "Attempt {}:\n{shown}\nFeedback: {}\n\n",
            s.iteration,
            truncate_chars(&step.feedback.rendered, caps.feedback_chars)
        ));
    }
    out
}

pub fn build_summarize_prompt(
    problem: &Problem,
    path: &ReasoningPath,
    final_feedback: &Feedback,
    caps: &PromptCaps,
) -> Result<Vec<ChatMessage>, PromptError> {
    if path.is_empty() {
        return Err(PromptError::EmptyPath);
    }
    if final_feedback.kind != FeedbackKind::FinalBinary {
        return Err(PromptError::NotFinal);
    }
    let user = format!(
        "{REFLECTION_MARKER}\n{}\nYour attempts:\n\n{}{VERDICT_MARKER}\n{}\n\n\
         Write ONE key takeaway from this experience that would help on future problems. \
         It must be general guidance, not specific to this problem. \
         Reply with the takeaway only, at most {} characters.",
        render_problem(problem),
        render_path(path, caps),
        final_feedback.rendered,
        caps.summary_chars
    );
    let messages = vec![
        ChatMessage::system(
            "You reflect on finished problem-solving attempts and extract lessons.",
        ),
        ChatMessage::user(user),
    ];
    assert_no_leak(problem, &messages)?;
    Ok(messages)
}

pub fn build_condense_prompt(
    bank: &KnowledgeBank,
    caps: &PromptCaps,
) -> Result<Vec<ChatMessage>, PromptError> {
    if bank.is_empty() {
        return Err(PromptError::EmptyBank);
    }
    let mut user = format!("{CONDENSE_MARKER}\n");
    if let Some(c) = &bank.condensed {
        user.push_str(&format!(
            "{PRIOR_CONDENSED_MARKER}\n{}\n\n",
            c.text.trim_end()
        ));
    }
    if !bank.raw.is_empty() {
        user.push_str(&format!("{NEW_TAKEAWAYS_MARKER}\n"));
        for (i, s) in bank.raw.iter().enumerate() {
            user.push_str(&format!("{}. {}\n", i + 1, s.text));
        }
        user.push('\n');
    }
    user.push_str(&format!(
        "Distill everything above into at most {} numbered sentences of general guidance for \
         future problems. Merge duplicates and drop anything that only applies to a single \
         problem. Do not mention problem ids. Reply with the numbered list only.",
        caps.condensed_sentences
    ));
    Ok(vec![
        ChatMessage::system("You maintain a compact knowledge base of problem-solving guidance."),
        ChatMessage::user(user),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{CheckRecord, CondensedKnowledge, Solution, Summary};

    fn induction() -> Problem {
        let mut pairs = vec![
            IoPair::new("[1, 2]", "[2, 4]"),
            IoPair::new("[3]", "[6]"),
            IoPair::new("[77, 5]", "[154, 10]"),
        ];
        pairs[0].visible = Some(true);
        pairs[1].visible = Some(true);
        pairs[2].visible = Some(false);
        Problem::induction("p1", CodeLanguage::ListDsl, pairs)
    }

    fn feedback(kind: FeedbackKind, passed: bool, text: &str) -> Feedback {
        Feedback {
            kind,
            passed,
            detail: vec![CheckRecord {
                index: 1,
                passed,
                error_class: None,
                message: None,
            }],
            rendered: text.into(),
        }
    }

    fn path(agent: usize, iterations: usize) -> ReasoningPath {
        let mut p = ReasoningPath::new("p1", agent);
        for t in 1..=iterations {
            p.append(
                Solution {
                    agent_index: agent,
                    iteration: t,
                    raw_text: format!("try {t}\n```\nMap(+1)\n```"),
                    core: Some("Map(+1)".into()),
                },
                feedback(FeedbackKind::PerIteration, false, "Example 1: fail"),
            )
            .unwrap();
        }
        p
    }

    fn lesson(from: usize) -> Lesson {
        Lesson {
            from_agent: from,
            iteration: 1,
            code_core: format!("Map(*{from})"),
            feedback: feedback(FeedbackKind::PerIteration, false, "Example 1: fail"),
        }
    }

    fn all_text(m: &[ChatMessage]) -> String {
        m.iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn initial_prompt_shows_only_visible_pairs() {
        let p = induction();
        let text = all_text(&build_initial_prompt(&p, "").unwrap());
        assert!(text.contains("Input: [1, 2]") && text.contains("Input: [3]"));
        assert!(!text.contains("77") && !text.contains("154"));
        assert!(!text.contains(KNOWLEDGE_MARKER));
    }

    #[test]
    fn knowledge_section_present_when_non_empty() {
        let text = all_text(&build_initial_prompt(&induction(), "check negatives").unwrap());
        assert!(text.contains(KNOWLEDGE_MARKER) && text.contains("check negatives"));
    }

    #[test]
    fn hidden_leak_is_refused() {
        let p = induction();
        let leak = "Example 9:\nInput: [77, 5]\nOutput: [154, 10]\n";
        assert!(matches!(
            build_initial_prompt(&p, leak),
            Err(PromptError::HiddenLeak { index: 3, .. })
        ));
    }

    #[test]
    fn deduction_and_abduction_hide_the_answer() {
        let src = "def f(x):\n    return x * 2";
        let d = Problem::with_function(
            "d",
            TaskKind::Deduction,
            CodeLanguage::General,
            src,
            IoPair::new("31337", "62674"),
        );
        let text = all_text(&build_initial_prompt(&d, "").unwrap());
        assert!(text.contains(src) && text.contains("31337") && !text.contains("62674"));

        let a = Problem::with_function(
            "a",
            TaskKind::Abduction,
            CodeLanguage::General,
            src,
            IoPair::new("31337", "62674"),
        );
        let text = all_text(&build_initial_prompt(&a, "").unwrap());
        assert!(text.contains("62674") && !text.contains("31337"));
    }

    #[test]
    fn revision_contains_peer_lessons() {
        let p = induction();
        let msgs = build_revision_prompt(
            &p,
            &path(1, 1),
            &[lesson(2), lesson(3)],
            "K",
            3,
            &PromptCaps::default(),
        )
        .unwrap();
        let last = &msgs.last().unwrap().content;
        assert_eq!(last.matches(LESSON_HEADER_PREFIX).count(), 2);
        assert!(last.contains(&lesson_header(2, 1)) && last.contains(&lesson_header(3, 1)));
        assert!(last.contains("Map(*2)"));
        assert_eq!(msgs.len(), 4);
        assert!(msgs[1].content.contains(KNOWLEDGE_MARKER));
    }

    #[test]
    fn revision_without_peers_or_knowledge() {
        let msgs = build_revision_prompt(
            &induction(),
            &path(1, 2),
            &[],
            "",
            1,
            &PromptCaps::default(),
        )
        .unwrap();
        let text = all_text(&msgs);
        assert!(!text.contains(LESSONS_MARKER) && !text.contains(KNOWLEDGE_MARKER));
        // system, user, (assistant, user) x 2
        assert_eq!(msgs.len(), 6);
    }

    #[test]
    fn revision_rejects_bad_lessons() {
        let caps = PromptCaps::default();
        let p = induction();
        assert_eq!(
            build_revision_prompt(&p, &path(1, 1), &[lesson(1)], "", 3, &caps),
            Err(PromptError::SelfLesson(1))
        );
        assert!(matches!(
            build_revision_prompt(&p, &path(1, 1), &[lesson(2), lesson(3)], "", 2, &caps),
            Err(PromptError::TooManyLessons { got: 2, max: 1 })
        ));
        assert_eq!(
            build_revision_prompt(&p, &path(1, 1), &[lesson(2), lesson(2)], "", 3, &caps),
            Err(PromptError::DuplicateLesson(2))
        );
        assert_eq!(
            build_revision_prompt(&p, &path(1, 0), &[], "", 3, &caps),
            Err(PromptError::EmptyPath)
        );
    }

    #[test]
    fn summarize_prompt_carries_verdict() {
        let caps = PromptCaps::default();
        let wrong = "All your answers are wrong for the given examples.";
        let fb = feedback(FeedbackKind::FinalBinary, false, wrong);
        let text =
            all_text(&build_summarize_prompt(&induction(), &path(2, 2), &fb, &caps).unwrap());
        assert!(text.contains(wrong) && text.contains("not specific to this problem"));
        assert!(text.contains("Attempt 2:"));
        assert_eq!(
            build_summarize_prompt(&induction(), &path(2, 0), &fb, &caps),
            Err(PromptError::EmptyPath)
        );
        let per = feedback(FeedbackKind::PerIteration, false, "x");
        assert_eq!(
            build_summarize_prompt(&induction(), &path(2, 1), &per, &caps),
            Err(PromptError::NotFinal)
        );
    }

    #[test]
    fn condense_prompt_sections() {
        let caps = PromptCaps::default();
        assert_eq!(
            build_condense_prompt(&KnowledgeBank::default(), &caps),
            Err(PromptError::EmptyBank)
        );
        let mut bank = KnowledgeBank::default();
        bank.raw.push(Summary {
            problem_id: "p9".into(),
            agent_index: 1,
            text: "watch for empty lists".into(),
        });
        let text = all_text(&build_condense_prompt(&bank, &caps).unwrap());
        assert!(text.contains("watch for empty lists") && !text.contains(PRIOR_CONDENSED_MARKER));
        assert!(!text.contains("p9"));
        bank.condensed = Some(CondensedKnowledge {
            text: "1. old advice".into(),
            covering_problems: 8,
            version: 1,
        });
        let text = all_text(&build_condense_prompt(&bank, &caps).unwrap());
        assert!(text.contains(PRIOR_CONDENSED_MARKER) && text.contains("1. old advice"));
        assert!(text.contains(NEW_TAKEAWAYS_MARKER) && text.contains("at most 10"));
    }

    #[test]
    fn assembly_is_pure() {
        let caps = PromptCaps::default();
        let a = build_revision_prompt(&induction(), &path(1, 1), &[lesson(2)], "K", 3, &caps);
        let b = build_revision_prompt(&induction(), &path(1, 1), &[lesson(2)], "K", 3, &caps);
        assert_eq!(a, b);
    }
}
