//! Scoring over per-pair correctness records.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::TokenUsage;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no pairs to score")]
    EmptyDataset,
    #[error("runs cover different problem sequences")]
    MismatchedRuns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairScore {
    pub visible: bool,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemScores {
    pub problem_id: String,
    pub pairs: Vec<PairScore>,
}

impl ProblemScores {
    pub fn all_correct(&self) -> bool {
        self.pairs.iter().all(|p| p.correct)
    }
}

/// Correct pairs over all pairs, visible and hidden.
pub fn accuracy(results: &[ProblemScores]) -> Result<f64, MetricsError> {
    let (correct, total) = results
        .iter()
        .flat_map(|r| &r.pairs)
        .fold((0usize, 0usize), |(c, t), p| {
            (c + p.correct as usize, t + 1)
        });
    if total == 0 {
        return Err(MetricsError::EmptyDataset);
    }
    Ok(correct as f64 / total as f64)
}

/// Fraction of problems whose every pair is correct.
pub fn problem_accuracy(results: &[ProblemScores]) -> Result<f64, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    let solved = results.iter().filter(|r| r.all_correct()).count();
    Ok(solved as f64 / results.len() as f64)
}

/// Accuracy over hidden pairs only; `None` when there are none (e.g.
/// deduction datasets).
pub fn hidden_accuracy(results: &[ProblemScores]) -> Option<f64> {
    let (correct, total) = results
        .iter()
        .flat_map(|r| &r.pairs)
        .filter(|p| !p.visible)
        .fold((0usize, 0usize), |(c, t), p| {
            (c + p.correct as usize, t + 1)
        });
    (total > 0).then(|| correct as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfMetrics {
    pub problems: usize,
    pub accuracy: Option<f64>,
    pub problem_accuracy: Option<f64>,
}

fn half(results: &[ProblemScores]) -> HalfMetrics {
    HalfMetrics {
        problems: results.len(),
        accuracy: accuracy(results).ok(),
        problem_accuracy: problem_accuracy(results).ok(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub problems: usize,
    pub pairs: usize,
    pub accuracy: f64,
    pub problem_accuracy: f64,
    pub hidden_accuracy: Option<f64>,
    /// First ⌈N/2⌉ problems.
    pub first_half: HalfMetrics,
    pub second_half: HalfMetrics,
    pub usage: TokenUsage,
}

pub fn compute_metrics(
    results: &[ProblemScores],
    usage: TokenUsage,
) -> Result<Metrics, MetricsError> {
    let cut = results.len().div_ceil(2);
    Ok(Metrics {
        problems: results.len(),
        pairs: results.iter().map(|r| r.pairs.len()).sum(),
        accuracy: accuracy(results)?,
        problem_accuracy: problem_accuracy(results)?,
        hidden_accuracy: hidden_accuracy(results),
        first_half: half(&results[..cut]),
        second_half: half(&results[cut..]),
        usage,
    })
}
