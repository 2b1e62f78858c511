use std::sync::Arc;

use super::*;
use crate::domain::{CodeLanguage, IoPair, SandboxLimits, TaskKind};
use crate::executor::ALL_CORRECT;
use crate::prompts::{lesson_header, CONDENSE_MARKER, LESSON_HEADER_PREFIX, REFLECTION_MARKER};
use crate::providers::{last_user_message, ChatMessage, FnProvider, Role};

fn reverse_problem(id: &str) -> Problem {
    let mut p = Problem::induction(
        id,
        CodeLanguage::ListDsl,
        vec![
            IoPair::new("[1, 2, 3]", "[3, 2, 1]"),
            IoPair::new("[4, 5]", "[5, 4]"),
            IoPair::new("[7, 8, 9]", "[9, 8, 7]"),
            IoPair::new("[]", "[]"),
        ],
    );
    for (i, q) in p.pairs.iter_mut().enumerate() {
        q.visible = Some(i < 2);
    }
    p
}

fn config(m: usize, t: usize) -> RunConfig {
    RunConfig {
        num_agents: m,
        max_iterations: t,
        condense_period: 2,
        sandbox: SandboxLimits::default(),
        ..RunConfig::default()
    }
}

fn is_meta(msgs: &[ChatMessage]) -> bool {
    let first = msgs
        .iter()
        .find(|m| m.role == Role::User)
        .map_or("", |m| m.content.as_str());
    first.starts_with(REFLECTION_MARKER) || first.starts_with(CONDENSE_MARKER)
}

/// Answers `Sort` in the first iteration and `Reverse` once any peer lesson
/// is visible; takeaways and condensations get fixed text.
fn learner() -> Arc<FnProvider> {
    Arc::new(FnProvider::new(|msgs| {
        let last = last_user_message(msgs).unwrap_or_default();
        if is_meta(msgs) {
            return Ok(if last.starts_with(CONDENSE_MARKER) {
                "1. Condensed.".into()
            } else {
                "Takeaway.".into()
            });
        }
        Ok(if last.contains(LESSON_HEADER_PREFIX) {
            "```\nReverse\n```".into()
        } else {
            "```\nSort\n```".into()
        })
    }))
}

fn agents_from(p: &[Arc<FnProvider>]) -> Vec<Agent> {
    p.iter()
        .map(|p| Agent::new(p.clone(), ChatSettings::new("m", 0.7)))
        .collect()
}

fn exec() -> Executor {
    Executor::new(SandboxLimits::default())
}

#[test]
fn lessons_reach_peers_only() {
    let providers: Vec<_> = (0..3).map(|_| learner()).collect();
    let agents = agents_from(&providers);
    let p = reverse_problem("r");
    let r = solve_problem(&p, &agents, "", &config(3, 3), &exec(), &mut NullObserver).unwrap();
    assert!(r.solved_visible);
    assert_eq!(r.iterations_used, 2);
    assert!(r.scores.iter().all(|s| s.correct));
    for (j, prov) in providers.iter().enumerate() {
        let calls = prov.calls();
        assert_eq!(calls.len(), 2);
        let second = last_user_message(&calls[1]).unwrap();
        assert_eq!(second.matches(LESSON_HEADER_PREFIX).count(), 2);
        assert!(!second.contains(&lesson_header(j + 1, 1)));
        for k in (1..=3).filter(|k| *k != j + 1) {
            assert!(second.contains(&lesson_header(k, 1)));
        }
    }
    let sel = r.selected.unwrap();
    assert_eq!((sel.agent_index, sel.solution.iteration), (1, 2));
}

#[test]
fn static_mode_isolates_agents() {
    let providers: Vec<_> = (0..2).map(|_| learner()).collect();
    let agents = agents_from(&providers);
    let cond = Agent::new(learner(), ChatSettings::new("c", 0.2));
    let cfg = RunConfig {
        static_mode: true,
        ..config(2, 3)
    };
    let problems = [reverse_problem("a"), reverse_problem("b")];
    let report = run_benchmark(
        &problems,
        &cfg,
        &agents,
        &cond,
        &exec(),
        RunState::default(),
        &mut NullObserver,
    )
    .unwrap();
    assert!(report
        .results
        .iter()
        .all(|r| !r.solved_visible && r.iterations_used == 3));
    for prov in &providers {
        assert!(prov.calls().iter().all(|c| !is_meta(c)));
        assert!(prov
            .calls()
            .iter()
            .all(|c| !last_user_message(c).unwrap().contains(LESSON_HEADER_PREFIX)));
    }
    assert!(report.state.bank.is_empty());
    assert_eq!(report.condensations, 0);
}

#[test]
fn condenses_on_period_and_retries_failures() {
    let fail_first = Arc::new(std::sync::atomic::AtomicBool::new(true));
    let flag = fail_first.clone();
    let condenser = Arc::new(FnProvider::new(move |_| {
        if flag.swap(false, std::sync::atomic::Ordering::SeqCst) {
            Err(ProviderError::Other("down".into()))
        } else {
            Ok("1. Condensed.".into())
        }
    }));
    let providers: Vec<_> = (0..2).map(|_| learner()).collect();
    let agents = agents_from(&providers);
    let cond = Agent::new(condenser.clone(), ChatSettings::new("c", 0.2));
    let problems: Vec<_> = (0..4).map(|i| reverse_problem(&format!("p{i}"))).collect();
    let mut log = EventLog::default();
    let report = run_benchmark(
        &problems,
        &config(2, 2),
        &agents,
        &cond,
        &exec(),
        RunState::default(),
        &mut log,
    )
    .unwrap();
    // Fails after problem 2, retried after 3, then on schedule after 4.
    let attempts: Vec<_> = log
        .events
        .iter()
        .filter_map(|e| match e {
            RunEvent::Condensation {
                after_problem, ok, ..
            } => Some((*after_problem, *ok)),
            _ => None,
        })
        .collect();
    assert_eq!(attempts, [(2, false), (3, true), (4, true)]);
    assert_eq!(report.state.bank.version(), 2);
    assert_eq!(report.state.history.len(), 2);
    assert!(!report.state.pending_condense);
    assert_eq!(report.state.bank.problems_seen, 4);
}

#[test]
fn auth_failure_of_every_agent_aborts() {
    let denied = Arc::new(FnProvider::new(|_| {
        Err(ProviderError::Auth { status: 401 })
    }));
    let agents = agents_from(&[denied.clone(), denied]);
    let p = reverse_problem("r");
    let err =
        solve_problem(&p, &agents, "", &config(2, 2), &exec(), &mut NullObserver).unwrap_err();
    assert!(matches!(err, OrchestratorError::Auth(_)));

    let mixed = agents_from(&[
        Arc::new(FnProvider::new(|_| {
            Err(ProviderError::Auth { status: 401 })
        })),
        learner(),
    ]);
    let r = solve_problem(&p, &mixed, "", &config(2, 2), &exec(), &mut NullObserver).unwrap();
    assert!(r.solved_visible);
}

#[test]
fn wrong_agent_count_rejected() {
    let agents = agents_from(&[learner()]);
    let cond = Agent::new(learner(), ChatSettings::new("c", 0.2));
    let err = run_benchmark(
        &[reverse_problem("a")],
        &config(2, 1),
        &agents,
        &cond,
        &exec(),
        RunState::default(),
        &mut NullObserver,
    );
    assert_eq!(
        err.unwrap_err(),
        OrchestratorError::AgentCount {
            expected: 2,
            got: 1
        }
    );
}

#[test]
fn final_feedback_is_binary() {
    let agents = agents_from(&[learner(), learner()]);
    let r = solve_problem(
        &reverse_problem("r"),
        &agents,
        "",
        &config(2, 2),
        &exec(),
        &mut NullObserver,
    )
    .unwrap();
    for fb in &r.final_feedback {
        assert_eq!(fb.kind, FeedbackKind::FinalBinary);
        assert_eq!(fb.rendered, ALL_CORRECT);
    }
    assert_eq!(reverse_problem("x").kind, TaskKind::Induction);
}

#[test]
fn half_improvement_by_problem_halves() {
    let s = |id: &str, c: bool| ProblemScores {
        problem_id: id.into(),
        pairs: vec![PairScore {
            visible: true,
            correct: c,
        }],
    };
    let a = [s("1", true), s("2", false), s("3", true)];
    let b = [s("1", false), s("2", false), s("3", false)];
    let h = half_improvement(&a, &b).unwrap();
    assert_eq!(h.first_half_delta, 0.5);
    assert_eq!(h.second_half_delta, 1.0);
    assert_eq!(
        half_improvement(&a, &b[..2]),
        Err(MetricsError::MismatchedRuns)
    );
}
