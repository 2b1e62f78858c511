//! Command implementations behind the `marco` binary. Each returns the
//! text to print; [`CliError::exit_code`] maps failures to process codes.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::domain::{render_knowledge, AgentConfig, ProviderKind, RunConfig};
use crate::dsl::generate::{generate, GenConfig};
use crate::dsl::DslFamily;
use crate::executor::{find_python, Executor};
use crate::orchestrator::{
    half_improvement, run_benchmark, Agent, HalfImprovement, OrchestratorError,
};
use crate::providers::{ChatProvider, ChatSettings, HttpProvider, ProviderError, RetryPolicy};
use crate::sim::{EnumeratorAgent, SkillAgent};

use super::dataset::{dataset_to_string, load_dataset, DatasetError};
use super::metrics::{compute_metrics, Metrics, ProblemScores};
use super::results::{read_results, read_state, ResultsDir, ResultsError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_AUTH: i32 = 3;
pub const EXIT_SANDBOX: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config {path}: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Results(#[from] ResultsError),
    #[error("provider setup: {0}")]
    Provider(ProviderError),
    #[error("python interpreter not found; set MARCO_PYTHON")]
    NoPython,
    #[error(transparent)]
    Run(#[from] OrchestratorError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Dataset(_) | CliError::Usage(_) => EXIT_SCHEMA,
            CliError::Results(ResultsError::Format { .. }) => EXIT_SCHEMA,
            CliError::Results(_) => EXIT_FAILURE,
            CliError::Provider(e) if e.is_auth() => EXIT_AUTH,
            CliError::Provider(_) => EXIT_FAILURE,
            CliError::NoPython => EXIT_SANDBOX,
            CliError::Run(OrchestratorError::Auth(_)) => EXIT_AUTH,
            CliError::Run(OrchestratorError::Sandbox(_)) => EXIT_SANDBOX,
            CliError::Run(_) => EXIT_FAILURE,
        }
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let err = |message: String| CliError::Config {
        path: path.display().to_string(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let config: RunConfig = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
    config.validate().map_err(|e| err(e.to_string()))?;
    if config.agents.is_empty() {
        return Err(err("`agents` must list one entry per agent".into()));
    }
    Ok(config)
}

fn provider_for(cfg: &AgentConfig, run: &RunConfig) -> Result<Arc<dyn ChatProvider>, CliError> {
    Ok(match cfg.provider {
        ProviderKind::Http => {
            let base = cfg.base_url.as_deref().unwrap_or_default();
            let p = HttpProvider::from_env(base, cfg.api_key_env.as_deref())
                .map_err(CliError::Provider)?
                .timeout(Duration::from_secs(run.request_timeout_seconds))
                .retry(RetryPolicy {
                    max_attempts: run.max_retries + 1,
                    ..RetryPolicy::default()
                });
            Arc::new(p)
        }
        ProviderKind::Enumerator => Arc::new(EnumeratorAgent::new(cfg.max_stages)),
        ProviderKind::Skill => Arc::new(SkillAgent::new(cfg.max_stages)),
    })
}

fn settings_for(cfg: &AgentConfig) -> ChatSettings {
    ChatSettings {
        model: cfg.model.clone(),
        temperature: cfg.temperature,
        max_tokens: cfg.max_tokens,
    }
}

/// Agents from the config; the condenser defaults to agent 1's backend.
pub fn build_agents(config: &RunConfig) -> Result<(Vec<Agent>, Agent), CliError> {
    let agents = config
        .agents
        .iter()
        .map(|a| Ok(Agent::new(provider_for(a, config)?, settings_for(a))))
        .collect::<Result<Vec<_>, CliError>>()?;
    let condenser_cfg = config.condenser.as_ref().or(config.agents.first());
    let condenser = match condenser_cfg {
        Some(c) => Agent::new(provider_for(c, config)?, settings_for(c)),
        None => return Err(CliError::Usage("no agents configured".into())),
    };
    Ok((agents, condenser))
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: PathBuf,
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub resume: bool,
    pub static_mode: bool,
}

/// `marco run`: runs (or resumes) a benchmark and writes the results
/// directory. Returns the final metrics.
pub fn run(opts: &RunOptions) -> Result<Metrics, CliError> {
    let mut config = load_config(&opts.config)?;
    config.static_mode |= opts.static_mode;
    let problems = load_dataset(&opts.dataset, None)?;
    let (agents, condenser) = build_agents(&config)?;
    let needs_python = problems
        .iter()
        .any(|p| p.language == crate::domain::CodeLanguage::General);
    if needs_python && find_python().is_none() {
        return Err(CliError::NoPython);
    }

    let mut dir = ResultsDir::open(&opts.out, opts.resume)?;
    if dir.state().completed > problems.len() {
        return Err(CliError::Usage(format!(
            "{} holds {} results but the dataset has only {} problems",
            opts.out.display(),
            dir.state().completed,
            problems.len()
        )));
    }
    dir.record_start(&config, &opts.dataset.display().to_string())?;
    let executor = Executor::new(config.sandbox);
    let state = dir.state().clone();
    let mut all = dir.previous().to_vec();
    let report = run_benchmark(
        &problems, &config, &agents, &condenser, &executor, state, &mut dir,
    )?;
    all.extend(report.results);
    Ok(dir.finish(&all, &report.state)?)
}

/// `marco score`: recomputes metrics from a results directory.
pub fn score(results: &Path) -> Result<Metrics, CliError> {
    let scores: Vec<ProblemScores> = read_results(results)?
        .iter()
        .map(|r| r.problem_scores())
        .collect();
    let usage = read_state(results).map(|s| s.usage).unwrap_or_default();
    compute_metrics(&scores, usage).map_err(|e| CliError::Results(e.into()))
}

/// `marco compare`: per-half accuracy of `a` minus that of `b`.
pub fn compare(a: &Path, b: &Path) -> Result<HalfImprovement, CliError> {
    let scores = |dir: &Path| -> Result<Vec<ProblemScores>, CliError> {
        Ok(read_results(dir)?
            .iter()
            .map(|r| r.problem_scores())
            .collect())
    };
    half_improvement(&scores(a)?, &scores(b)?).map_err(|e| CliError::Results(e.into()))
}

pub fn parse_family(name: &str) -> Result<DslFamily, CliError> {
    match name {
        "list" => Ok(DslFamily::List),
        "string" => Ok(DslFamily::String),
        other => Err(CliError::Usage(format!(
            "unknown family `{other}` (list or string)"
        ))),
    }
}

/// `marco gen-dsl`: a synthetic induction dataset as JSONL.
pub fn gen_dsl(family: DslFamily, count: usize, seed: u64) -> String {
    let problems: Vec<_> = generate(&GenConfig::new(family, count, seed))
        .into_iter()
        .map(|g| g.problem)
        .collect();
    dataset_to_string(&problems)
}

/// `marco inspect-knowledge`: every condensation, oldest first, then the
/// takeaways gathered since the last one.
pub fn inspect_knowledge(results: &Path) -> Result<String, CliError> {
    let state = read_state(results)?;
    let mut out = format!(
        "problems completed: {}\nproblems reflected on: {}\n",
        state.completed, state.bank.problems_seen
    );
    if state.history.is_empty() {
        out.push_str("no condensations yet\n");
    }
    for c in &state.history {
        out.push_str(&format!(
            "\n--- version {} (covers {} problems) ---\n{}\n",
            c.version,
            c.covering_problems,
            c.text.trim_end()
        ));
    }
    if !state.bank.raw.is_empty() {
        out.push_str(&format!(
            "\n--- {} pending takeaways ---\n",
            state.bank.raw.len()
        ));
        for s in &state.bank.raw {
            out.push_str(&format!(
                "[{} / agent {}] {}\n",
                s.problem_id, s.agent_index, s.text
            ));
        }
    }
    if state.pending_condense {
        out.push_str("\na failed condensation will be retried\n");
    }
    let current = render_knowledge(&state.bank);
    if !current.is_empty() {
        out.push_str(&format!(
            "\n--- knowledge the next problem would see ---\n{current}\n"
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn config_errors_are_schema_errors() {
        let dir = tempfile::tempdir().unwrap();
        let typo = write(dir.path(), "a.json", r#"{"num_agent": 3}"#);
        let e = load_config(&typo).unwrap_err();
        assert_eq!(e.exit_code(), EXIT_SCHEMA);
        assert!(e.to_string().contains("num_agent"), "{e}");
        let no_url = write(
            dir.path(),
            "b.json",
            r#"{"num_agents": 1, "agents": [{"model": "m"}]}"#,
        );
        assert_eq!(load_config(&no_url).unwrap_err().exit_code(), EXIT_SCHEMA);
    }

    #[test]
    fn enumerator_run_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write(
            dir.path(),
            "c.json",
            r#"{"num_agents": 2, "max_iterations": 2, "condense_period": 2,
                "agents": [{"model": "e", "provider": "enumerator"}, {"model": "e", "provider": "enumerator"}]}"#,
        );
        let data = write(dir.path(), "d.jsonl", &gen_dsl(DslFamily::List, 4, 3));
        let opts = RunOptions {
            config: cfg,
            dataset: data,
            out: dir.path().join("out"),
            resume: false,
            static_mode: false,
        };
        let m = run(&opts).unwrap();
        assert_eq!(m.problems, 4);
        assert_eq!(m.problem_accuracy, 1.0);
        assert_eq!(score(&opts.out).unwrap(), m);
        let h = compare(&opts.out, &opts.out).unwrap();
        assert_eq!((h.first_half_delta, h.second_half_delta), (0.0, 0.0));
        let k = inspect_knowledge(&opts.out).unwrap();
        assert!(k.contains("--- version 2 (covers 4 problems) ---"), "{k}");

        let again = run(&opts).unwrap_err();
        assert!(matches!(
            again,
            CliError::Results(ResultsError::NotEmpty(_))
        ));
    }

    #[test]
    fn gen_dsl_is_seeded() {
        assert_eq!(
            gen_dsl(DslFamily::String, 3, 9),
            gen_dsl(DslFamily::String, 3, 9)
        );
        assert!(parse_family("tree").is_err());
    }
}
