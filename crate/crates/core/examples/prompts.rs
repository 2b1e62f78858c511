//! Print the messages an agent receives: the first proposal prompt with
//! accumulated knowledge, then a revision prompt carrying peer lessons.

use marco::domain::{
    CodeLanguage, Feedback, FeedbackKind, IoPair, Lesson, Problem, PromptCaps, ReasoningPath,
    Solution,
};
use marco::prompts::{build_initial_prompt, build_revision_prompt};
use marco::providers::ChatMessage;

fn show(title: &str, messages: &[ChatMessage]) {
    println!("################ {title}");
    for m in messages {
        println!("[{:?}]\n{}\n", m.role, m.content);
    }
}

fn feedback(rendered: &str) -> Feedback {
    Feedback {
        kind: FeedbackKind::PerIteration,
        passed: false,
        detail: Vec::new(),
        rendered: rendered.into(),
    }
}

fn main() {
    let problem = marco::harness::split_visible(&Problem::induction(
        "evens-doubled",
        CodeLanguage::ListDsl,
        vec![
            IoPair::new("[1, 2, 3, 4]", "[4, 8]"),
            IoPair::new("[6, 7]", "[12]"),
            IoPair::new("[0, 5, 10]", "[0, 20]"),
            IoPair::new("[9]", "[]"),
        ],
    ))
    .unwrap();
    let knowledge = "1. Filter before mapping when only some elements survive.";
    show(
        "initial",
        &build_initial_prompt(&problem, knowledge).unwrap(),
    );

    let mut path = ReasoningPath::new(&problem.id, 1);
    path.append(
        Solution {
            agent_index: 1,
            iteration: 1,
            raw_text: "```\nMap(*2)\n```".into(),
            core: Some("Map(*2)".into()),
        },
        feedback("Example 1: fail (got [2, 4, 6, 8], expected [4, 8])\nExample 2: fail (got [12, 14], expected [12])\n0/2 checks passed."),
    )
    .unwrap();
    let lessons = [
        Lesson {
            from_agent: 2,
            iteration: 1,
            code_core: "Filter(even)".into(),
            feedback: feedback("Example 1: fail (got [2, 4], expected [4, 8])\n0/2 checks passed."),
        },
        Lesson {
            from_agent: 3,
            iteration: 1,
            code_core: String::new(),
            feedback: feedback("no runnable code produced"),
        },
    ];
    let revision = build_revision_prompt(
        &problem,
        &path,
        &lessons,
        knowledge,
        3,
        &PromptCaps::default(),
    )
    .unwrap();
    show("revision for agent 1", &revision);
}
