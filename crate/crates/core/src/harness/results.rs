//! Results directory: the append-only result log, the knowledge
//! checkpoint, run metadata and final metrics.
//!
//! Only `run_meta.json` carries timestamps; every other file is a pure
//! function of the run when providers are deterministic.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::RunConfig;
use crate::orchestrator::{ProblemResult, RunEvent, RunObserver, RunState};

use super::metrics::{compute_metrics, Metrics, MetricsError, ProblemScores};

pub const RESULTS_FILE: &str = "results.jsonl";
pub const KNOWLEDGE_FILE: &str = "knowledge.json";
pub const META_FILE: &str = "run_meta.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const EVENTS_FILE: &str = "events.jsonl";

#[derive(Debug, Error)]
pub enum ResultsError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{0} already holds a run; pass --resume to continue it")]
    NotEmpty(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub config: RunConfig,
    pub seed: u64,
    pub dataset: String,
    /// Problem index (0-based) each invocation started from.
    pub start_ordinals: Vec<usize>,
    pub started_unix: Vec<u64>,
    #[serde(default)]
    pub finished_unix: Option<u64>,
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ResultsError + '_ {
    move |source| ResultsError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, message: impl ToString) -> ResultsError {
    ResultsError::Format {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ResultsError> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

/// An open results directory; also the run observer that persists each
/// problem as it finishes.
#[derive(Debug)]
pub struct ResultsDir {
    root: PathBuf,
    results: File,
    events: File,
    previous: Vec<ProblemResult>,
    state: RunState,
}

impl ResultsDir {
    /// Opens `root` for a fresh run, or for continuing one with `resume`.
    /// On resume the result log is cut back to the last checkpoint.
    pub fn open(root: &Path, resume: bool) -> Result<Self, ResultsError> {
        std::fs::create_dir_all(root).map_err(io_err(root))?;
        let results_path = root.join(RESULTS_FILE);
        let events_path = root.join(EVENTS_FILE);
        let knowledge_path = root.join(KNOWLEDGE_FILE);
        let (state, previous) = if resume && knowledge_path.exists() {
            let state = read_state(root)?;
            let mut previous = read_results(root)?;
            previous.truncate(state.completed);
            (state, previous)
        } else {
            if !resume && (results_path.exists() || knowledge_path.exists()) {
                return Err(ResultsError::NotEmpty(root.display().to_string()));
            }
            (RunState::default(), Vec::new())
        };
        if previous.len() != state.completed {
            return Err(format_err(
                &results_path,
                format!(
                    "checkpoint has {} problems but only {} results",
                    state.completed,
                    previous.len()
                ),
            ));
        }
        let mut text = String::new();
        for r in &previous {
            text.push_str(&serde_json::to_string(r).expect("serializable"));
            text.push('\n');
        }
        write_atomic(&results_path, text.as_bytes())?;
        if !resume {
            write_atomic(&events_path, b"")?;
        }
        let results = OpenOptions::new()
            .append(true)
            .open(&results_path)
            .map_err(io_err(&results_path))?;
        let events = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&events_path)
            .map_err(io_err(&events_path))?;
        Ok(Self {
            root: root.to_path_buf(),
            results,
            events,
            previous,
            state,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// The state to resume from (default for a fresh run).
    pub fn state(&self) -> &RunState {
        &self.state
    }

    /// Results already on disk before this invocation.
    pub fn previous(&self) -> &[ProblemResult] {
        &self.previous
    }

    pub fn record_start(&self, config: &RunConfig, dataset: &str) -> Result<(), ResultsError> {
        let path = self.root.join(META_FILE);
        let mut meta = match read_meta(&self.root) {
            Ok(m) if self.state.completed > 0 => m,
            _ => RunMeta {
                config: config.clone(),
                seed: config.seed,
                dataset: dataset.to_string(),
                start_ordinals: Vec::new(),
                started_unix: Vec::new(),
                finished_unix: None,
            },
        };
        meta.start_ordinals.push(self.state.completed);
        meta.started_unix.push(now_unix());
        meta.finished_unix = None;
        write_atomic(&path, &pretty(&meta))
    }

    /// Writes `metrics.json` over every result of the run and stamps the
    /// finish time.
    pub fn finish(&self, all: &[ProblemResult], state: &RunState) -> Result<Metrics, ResultsError> {
        let scores: Vec<ProblemScores> = all.iter().map(ProblemResult::problem_scores).collect();
        let metrics = compute_metrics(&scores, state.usage)?;
        write_atomic(&self.root.join(METRICS_FILE), &pretty(&metrics))?;
        if let Ok(mut meta) = read_meta(&self.root) {
            meta.finished_unix = Some(now_unix());
            write_atomic(&self.root.join(META_FILE), &pretty(&meta))?;
        }
        Ok(metrics)
    }

    fn persist(&mut self, result: &ProblemResult, state: &RunState) -> Result<(), ResultsError> {
        let path = self.root.join(RESULTS_FILE);
        let mut line = serde_json::to_string(result).expect("serializable");
        line.push('\n');
        self.results
            .write_all(line.as_bytes())
            .map_err(io_err(&path))?;
        self.results.flush().map_err(io_err(&path))?;
        self.results.sync_data().map_err(io_err(&path))?;
        write_atomic(&self.root.join(KNOWLEDGE_FILE), &pretty(state))
    }
}

impl RunObserver for ResultsDir {
    fn event(&mut self, event: &RunEvent) {
        let mut line = serde_json::to_string(event).expect("serializable");
        line.push('\n');
        if let Err(e) = self.events.write_all(line.as_bytes()) {
            tracing::warn!(error = %e, "event log write failed");
        }
    }

    fn problem_done(&mut self, result: &ProblemResult, state: &RunState) -> Result<(), String> {
        self.persist(result, state).map_err(|e| e.to_string())
    }
}

pub fn read_results(root: &Path) -> Result<Vec<ProblemResult>, ResultsError> {
    let path = root.join(RESULTS_FILE);
    let file = File::open(&path).map_err(io_err(&path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(&path))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(r) => out.push(r),
            // A torn final line from a crash mid-write; the checkpoint
            // decides what counts.
            Err(e) => {
                tracing::warn!(line = i + 1, error = %e, "skipping unreadable result line");
                break;
            }
        }
    }
    Ok(out)
}

pub fn read_state(root: &Path) -> Result<RunState, ResultsError> {
    let path = root.join(KNOWLEDGE_FILE);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| format_err(&path, e))
}

pub fn read_meta(root: &Path) -> Result<RunMeta, ResultsError> {
    let path = root.join(META_FILE);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| format_err(&path, e))
}

pub fn read_metrics(root: &Path) -> Result<Metrics, ResultsError> {
    let path = root.join(METRICS_FILE);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| format_err(&path, e))
}
