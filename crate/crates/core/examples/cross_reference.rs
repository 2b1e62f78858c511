//! One problem, three agents. Agent 3 knows nothing until it reads its
//! peers' lessons, then combines their partial answers.

use std::sync::Arc;

use marco::domain::{CodeLanguage, IoPair, Problem, RunConfig};
use marco::executor::Executor;
use marco::harness::split_visible;
use marco::orchestrator::{solve_problem, Agent, EventLog};
use marco::prompts::{lesson_header, LESSONS_MARKER};
use marco::providers::{last_user_message, ChatSettings, FnProvider};

fn fixed(answer: &'static str) -> Arc<FnProvider> {
    Arc::new(FnProvider::new(move |_| Ok(format!("```\n{answer}\n```"))))
}

fn main() {
    let problem = split_visible(&Problem::induction(
        "positive-doubled",
        CodeLanguage::ListDsl,
        vec![
            IoPair::new("[1, -2, 3]", "[2, 6]"),
            IoPair::new("[-1, 4]", "[8]"),
            IoPair::new("[5, 0, -5, 2]", "[10, 4]"),
            IoPair::new("[-7]", "[]"),
        ],
    ))
    .unwrap();

    let combiner = Arc::new(FnProvider::new(|msgs| {
        let last = last_user_message(msgs).unwrap_or_default();
        if !last.contains(LESSONS_MARKER) {
            return Ok("I am not sure yet.".into());
        }
        let filter = last.contains(&lesson_header(1, 1)) && last.contains("Filter(>0)");
        let map = last.contains(&lesson_header(2, 1)) && last.contains("Map(*2)");
        Ok(match (filter, map) {
            (true, true) => "Agent 1 keeps the right elements, agent 2 scales them.\n```\nFilter(>0) | Map(*2)\n```".into(),
            _ => "```\nSort\n```".into(),
        })
    }));
    let agents = vec![
        Agent::new(fixed("Filter(>0)"), ChatSettings::new("a1", 0.7)),
        Agent::new(fixed("Map(*2)"), ChatSettings::new("a2", 0.7)),
        Agent::new(combiner.clone(), ChatSettings::new("a3", 0.7)),
    ];
    let config = RunConfig {
        num_agents: 3,
        max_iterations: 2,
        ..RunConfig::default()
    };
    let mut log = EventLog::default();
    let result = solve_problem(
        &problem,
        &agents,
        "",
        &config,
        &Executor::new(config.sandbox),
        &mut log,
    )
    .unwrap();

    for e in &log.events {
        println!("{}", serde_json::to_string(e).unwrap());
    }
    let sel = result.selected.as_ref().expect("a selection");
    println!(
        "\nsolved on visible pairs: {} after {} iteration(s); selected agent {} iteration {}: {}",
        result.solved_visible,
        result.iterations_used,
        sel.agent_index,
        sel.solution.iteration,
        sel.solution.core.as_deref().unwrap_or("")
    );
    println!(
        "hidden pairs: {:?}",
        result
            .scores
            .iter()
            .filter(|s| !s.visible)
            .map(|s| s.correct)
            .collect::<Vec<_>>()
    );
    println!(
        "\nagent 3's revision prompt:\n{}",
        last_user_message(&combiner.calls()[1]).unwrap()
    );
}
