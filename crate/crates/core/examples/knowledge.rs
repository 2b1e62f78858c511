//! The knowledge lifecycle outside a run: takeaways from finished paths go
//! into the bank, and every few problems the bank is condensed.

use marco::domain::{
    render_knowledge, CheckRecord, CodeLanguage, FeedbackKind, IoPair, KnowledgeBank, Problem,
    PromptCaps, ReasoningPath, Solution,
};
use marco::executor::{make_feedback, ALL_CORRECT};
use marco::harness::split_visible;
use marco::knowledge::{append_summaries, condense, should_condense, summarize};
use marco::prompts::CONDENSE_MARKER;
use marco::providers::{last_user_message, ChatSettings, FnProvider};

fn main() {
    // A stand-in model: takeaways mention the verdict, condensation keeps
    // the distinct lines.
    let model = FnProvider::new(|msgs| {
        let last = last_user_message(msgs).unwrap_or_default();
        if last.starts_with(CONDENSE_MARKER) {
            let mut seen = Vec::new();
            let numbered = last
                .lines()
                .filter(|l| l.starts_with(|c: char| c.is_ascii_digit()))
                .filter_map(|l| l.split_once(". ").map(|x| x.1));
            for line in numbered {
                if !seen.contains(&line) {
                    seen.push(line);
                }
            }
            return Ok(seen
                .iter()
                .enumerate()
                .map(|(i, l)| format!("{}. {l}", i + 1))
                .collect::<Vec<_>>()
                .join("\n"));
        }
        Ok(if last.contains(ALL_CORRECT) {
            "Confirm the candidate on every example.".into()
        } else {
            "Look for a filtering step when outputs are shorter than inputs.".into()
        })
    });
    let settings = ChatSettings::new("stand-in", 0.2);
    let caps = PromptCaps::default();
    let period = 2;

    let mut bank = KnowledgeBank::default();
    for (n, passed) in [true, false, false, true, false].into_iter().enumerate() {
        let problem = split_visible(&Problem::induction(
            format!("p{n}"),
            CodeLanguage::ListDsl,
            vec![IoPair::new("[1, 2]", "[2]"), IoPair::new("[3, 4]", "[4]")],
        ))
        .unwrap();
        let mut path = ReasoningPath::new(&problem.id, 1);
        let records = vec![CheckRecord {
            index: 1,
            passed,
            error_class: None,
            message: None,
        }];
        let per_iter = make_feedback(problem.kind, &records, FeedbackKind::PerIteration, 400);
        path.append(
            Solution {
                agent_index: 1,
                iteration: 1,
                raw_text: "```\nTail\n```".into(),
                core: Some("Tail".into()),
            },
            per_iter,
        )
        .unwrap();
        let verdict = make_feedback(problem.kind, &records, FeedbackKind::FinalBinary, 400);
        let (summary, _) = summarize(&model, &settings, &problem, &path, &verdict, &caps).unwrap();
        println!("{}: {} -> {:?}", problem.id, verdict.rendered, summary.text);
        bank = append_summaries(&bank, &problem.id, &[summary]).unwrap();
        if should_condense(bank.problems_seen, period) {
            bank = condense(&model, &settings, &bank, &caps).unwrap().0;
            println!("  condensed to version {}", bank.version());
        }
    }
    println!(
        "\nknowledge injected into the next problem:\n{}",
        render_knowledge(&bank)
    );
}
