//! A full run on a generated list-DSL suite with simulated agents that
//! only use stage families the accumulated knowledge has taught them.
//! Compares knowledge-sharing mode against the isolated baseline.

use std::sync::Arc;

use marco::domain::RunConfig;
use marco::dsl::generate::{generate, GenConfig};
use marco::dsl::DslFamily;
use marco::executor::Executor;
use marco::harness::metrics::compute_metrics;
use marco::harness::split_visible;
use marco::orchestrator::{half_improvement, run_benchmark, Agent, NullObserver, RunState};
use marco::providers::ChatSettings;
use marco::sim::SkillAgent;

fn main() {
    let count: usize = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(24);
    let problems: Vec<_> = generate(&GenConfig::new(DslFamily::List, count, 7))
        .into_iter()
        .map(|g| split_visible(&g.problem).unwrap())
        .collect();
    let agent = || {
        Agent::new(
            Arc::new(SkillAgent::new(2)),
            ChatSettings::new("skill", 0.0),
        )
    };
    let agents: Vec<_> = (0..3).map(|_| agent()).collect();
    let executor = Executor::new(Default::default());

    let mut runs = Vec::new();
    for static_mode in [false, true] {
        let config = RunConfig {
            num_agents: 3,
            max_iterations: 2,
            condense_period: 4,
            static_mode,
            ..RunConfig::default()
        };
        let report = run_benchmark(
            &problems,
            &config,
            &agents,
            &agent(),
            &executor,
            RunState::default(),
            &mut NullObserver,
        )
        .expect("run completes");
        let m = compute_metrics(&report.scores(), report.state.usage).unwrap();
        println!(
            "{:<7} accuracy {:.3}  problem accuracy {:.3}  halves {:.3} / {:.3}  condensations {}",
            if static_mode { "static" } else { "shared" },
            m.accuracy,
            m.problem_accuracy,
            m.first_half.accuracy.unwrap_or(0.0),
            m.second_half.accuracy.unwrap_or(0.0),
            report.condensations
        );
        if !static_mode {
            if let Some(c) = &report.state.bank.condensed {
                println!("final knowledge:\n{}", c.text);
            }
        }
        runs.push(report.scores());
    }
    let h = half_improvement(&runs[0], &runs[1]).unwrap();
    println!(
        "gain over the baseline: first half {:+.3}, second half {:+.3}",
        h.first_half_delta, h.second_half_delta
    );
}
