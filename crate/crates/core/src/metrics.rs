//! Aggregate evaluation numbers: accuracy, process correctness, token
//! overhead, error distribution, and the agreement statistics used to
//! compare human and model ratings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamic_analyzer::{requests_equivalent, JudgeError, LlmJudge};
use crate::gateways::LlmClient;
use crate::orchestrator::TaskResult;
use crate::request_codec::{ApiRequest, TypeRules};
use crate::static_scanner::ErrorType;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no results to aggregate")]
    EmptyInput,
    #[error("accuracy is zero; overhead is undefined")]
    ZeroAccuracy,
    #[error("sample {0} has no ground-truth sequence")]
    MissingGroundTruth(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two observations")]
    TooShort,
    #[error("rank correlation is undefined for constant input")]
    ConstantInput,
    #[error("judge failed: {0}")]
    Judge(String),
}

/// Percentage of satisfied results.
pub fn accuracy(results: &[TaskResult]) -> Result<f64, MetricsError> {
    accuracy_of(results.iter().map(|r| r.satisfied))
}

pub fn accuracy_of(flags: impl IntoIterator<Item = bool>) -> Result<f64, MetricsError> {
    let (mut hit, mut total) = (0usize, 0usize);
    for f in flags {
        total += 1;
        hit += usize::from(f);
    }
    if total == 0 {
        return Err(MetricsError::EmptyInput);
    }
    Ok(100.0 * hit as f64 / total as f64)
}

/// Mean tokens spent per accuracy point.
pub fn overhead(mean_tokens: f64, accuracy_pct: f64) -> Result<f64, MetricsError> {
    if accuracy_pct <= 0.0 {
        return Err(MetricsError::ZeroAccuracy);
    }
    Ok(mean_tokens / accuracy_pct)
}

/// One executed request sequence and its reference.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    pub instruction: String,
    pub executed: Vec<ApiRequest>,
    pub truth: Option<Vec<ApiRequest>>,
}

pub trait SequenceJudge: Sync {
    fn same_process(&self, instruction: &str, executed: &[ApiRequest], reference: &[ApiRequest]) -> Result<bool, JudgeError>;
}

impl<L: LlmClient> SequenceJudge for LlmJudge<L> {
    fn same_process(&self, instruction: &str, executed: &[ApiRequest], reference: &[ApiRequest]) -> Result<bool, JudgeError> {
        self.judge_sequence(instruction, executed, reference)
    }
}

pub enum ProcessMode<'a> {
    /// Executed sequence must equal the reference call by call.
    Exact(TypeRules),
    Judge(&'a dyn SequenceJudge),
}

pub fn process_correctness(samples: &[SequenceSample], mode: &ProcessMode<'_>) -> Result<f64, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut flags = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let ok = match mode {
            ProcessMode::Exact(rules) => {
                let truth = s.truth.as_ref().ok_or(MetricsError::MissingGroundTruth(i))?;
                truth.len() == s.executed.len()
                    && truth.iter().zip(&s.executed).all(|(t, e)| requests_equivalent(e, t, rules))
            }
            ProcessMode::Judge(judge) => judge
                .same_process(&s.instruction, &s.executed, s.truth.as_deref().unwrap_or(&[]))
                .map_err(|e| MetricsError::Judge(e.to_string()))?,
        };
        flags.push(ok);
    }
    accuracy_of(flags)
}

/// Counts per error type, `NONE` included.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorHistogram(pub BTreeMap<ErrorType, usize>);

impl ErrorHistogram {
    pub fn count(&self, t: ErrorType) -> usize {
        self.0.get(&t).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.0.values().sum()
    }

    /// Share of each error type among all non-`NONE` entries, in percent.
    pub fn error_percentages(&self) -> BTreeMap<ErrorType, f64> {
        let errors: usize = self.0.iter().filter(|(t, _)| **t != ErrorType::NONE).map(|(_, n)| n).sum();
        self.0
            .iter()
            .filter(|(t, _)| **t != ErrorType::NONE)
            .map(|(t, n)| (*t, 100.0 * *n as f64 / errors as f64))
            .collect()
    }
}

pub fn error_distribution(classifications: &[ErrorType]) -> ErrorHistogram {
    let mut h = BTreeMap::new();
    for t in classifications {
        *h.entry(*t).or_default() += 1;
    }
    ErrorHistogram(h)
}

/// Rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, MetricsError> {
    if xs.len() != ys.len() {
        return Err(MetricsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(MetricsError::TooShort);
    }
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let n = rx.len() as f64;
    if distinct(&rx) && distinct(&ry) {
        // Without ties the closed form is exact on integer ranks.
        let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
        return Ok(1.0 - 6.0 * d2 / (n * (n * n - 1.0)));
    }
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(MetricsError::ConstantInput);
    }
    Ok((cov / (vx.sqrt() * vy.sqrt())).clamp(-1.0, 1.0))
}

fn distinct(ranks: &[f64]) -> bool {
    ranks.iter().all(|r| r.fract() == 0.0) && {
        let mut v = ranks.to_vec();
        v.sort_by(f64::total_cmp);
        v.windows(2).all(|w| w[0] != w[1])
    }
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; tied block i..=j shares the mean rank.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Divide-by-n variance.
pub fn population_variance(scores: &[f64]) -> Result<f64, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    // Shifted by the first score so constant input gives exactly zero.
    let n = scores.len() as f64;
    let shift = scores[0];
    let mean = scores.iter().map(|x| x - shift).sum::<f64>() / n;
    let mean_sq = scores.iter().map(|x| (x - shift) * (x - shift)).sum::<f64>() / n;
    Ok((mean_sq - mean * mean).max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub n_tasks: usize,
    pub accuracy_pct: f64,
    pub process_correctness_pct: Option<f64>,
    /// Prompt plus completion tokens per task, averaged.
    pub mean_tokens: f64,
    pub overhead: Option<f64>,
    pub error_histogram: ErrorHistogram,
}

impl BenchmarkReport {
    /// Aggregates task results. Process correctness is reported only when
    /// every result carries a reference sequence.
    pub fn from_results(results: &[TaskResult], rules: &TypeRules) -> Result<Self, MetricsError> {
        let accuracy_pct = accuracy(results)?;
        let mean_tokens = results.iter().map(|r| r.total_tokens() as f64).sum::<f64>() / results.len() as f64;
        let samples: Vec<SequenceSample> = results
            .iter()
            .map(|r| SequenceSample {
                instruction: r.log.instruction.clone(),
                executed: r.log.executed_requests.clone(),
                truth: r.truth_sequence.clone(),
            })
            .collect();
        let process_correctness_pct = if samples.iter().all(|s| s.truth.is_some()) {
            Some(process_correctness(&samples, &ProcessMode::Exact(*rules))?)
        } else {
            None
        };
        let first_findings: Vec<ErrorType> = results.iter().filter_map(|r| r.initial_error_type()).collect();
        Ok(BenchmarkReport {
            n_tasks: results.len(),
            accuracy_pct,
            process_correctness_pct,
            mean_tokens,
            overhead: overhead(mean_tokens, accuracy_pct).ok(),
            error_histogram: error_distribution(&first_findings),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned text table: the summary row, then the error histogram.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:>8}  {:>12}  {:>12}  {:>10}  {:>12}", "tasks", "avg_tokens", "accuracy_%", "overhead", "process_%");
        let _ = writeln!(
            out,
            "{:>8}  {:>12.2}  {:>12.2}  {:>10}  {:>12}",
            self.n_tasks,
            self.mean_tokens,
            self.accuracy_pct,
            self.overhead.map(|o| format!("{o:.2}")).unwrap_or_else(|| "-".into()),
            self.process_correctness_pct.map(|p| format!("{p:.2}")).unwrap_or_else(|| "-".into()),
        );
        if !self.error_histogram.0.is_empty() {
            let pct = self.error_histogram.error_percentages();
            let _ = writeln!(out, "\n{:<10}  {:>6}  {:>8}", "error", "count", "share_%");
            for (t, n) in &self.error_histogram.0 {
                let share = pct.get(t).map(|p| format!("{p:.2}")).unwrap_or_else(|| "-".into());
                let _ = writeln!(out, "{:<10}  {:>6}  {:>8}", t.as_str(), n, share);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::request_codec::Value;
    use proptest::prelude::*;

    #[test]
    fn accuracy_ratios() {
        let seven = (0..10).map(|i| i < 7);
        assert!((accuracy_of(seven).unwrap() - 70.0).abs() < 1e-12);
        assert_eq!(accuracy_of([true, true]).unwrap(), 100.0);
        assert_eq!(accuracy_of([false]).unwrap(), 0.0);
        assert_eq!(accuracy_of([]), Err(MetricsError::EmptyInput));
    }

    #[test]
    fn overhead_rows() {
        assert!((overhead(919.45, 70.69).unwrap() - 13.01).abs() <= 0.01);
        assert!((overhead(1338.03, 75.00).unwrap() - 17.84).abs() <= 0.01);
        assert_eq!(overhead(100.0, 100.0).unwrap(), 1.0);
        assert_eq!(overhead(5.0, 0.0), Err(MetricsError::ZeroAccuracy));
    }

    fn req(n: i64) -> ApiRequest {
        ApiRequest::new("f").arg("x", Value::Int(n))
    }

    #[test]
    fn process_exact() {
        let ok = SequenceSample { instruction: String::new(), executed: vec![req(1)], truth: Some(vec![req(1)]) };
        let extra = SequenceSample { executed: vec![req(0), req(1)], ..ok.clone() };
        let mode = ProcessMode::Exact(TypeRules::default());
        assert_eq!(process_correctness(std::slice::from_ref(&ok), &mode).unwrap(), 100.0);
        assert_eq!(process_correctness(&[extra], &mode).unwrap(), 0.0);
        assert_eq!(process_correctness(&[], &mode), Err(MetricsError::EmptyInput));
        let missing = SequenceSample { truth: None, ..ok };
        assert_eq!(process_correctness(&[missing], &mode), Err(MetricsError::MissingGroundTruth(0)));
    }

    #[test]
    fn histogram_counts() {
        use ErrorType::*;
        let h = error_distribution(&[E1, E1, E2_1]);
        assert_eq!(h.0, BTreeMap::from([(E1, 2), (E2_1, 1)]));
        let h = error_distribution(&[NONE, NONE]);
        assert!(h.error_percentages().is_empty());
        let mixed = [E1, E2_1, E2_2, E2_3, E3_1, E3_2, E3_3, E4_1, NONE];
        let h = error_distribution(&mixed);
        assert_eq!(h.error_percentages().len(), 8);
        assert!((h.error_percentages().values().sum::<f64>() - 100.0).abs() < 1e-9);
        assert_eq!(h.total(), 9);
    }

    #[test]
    fn spearman_cases() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(spearman(&xs, &xs).unwrap(), 1.0);
        assert_eq!(spearman(&xs, &[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!((spearman(&xs, &[1.0, 2.0, 3.0, 5.0, 4.0]).unwrap() - 0.9).abs() < 1e-9);
        assert_eq!(spearman(&xs, &[1.0]), Err(MetricsError::LengthMismatch(5, 1)));
        assert_eq!(spearman(&[1.0], &[1.0]), Err(MetricsError::TooShort));
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), Err(MetricsError::ConstantInput));
    }

    #[test]
    fn spearman_ties_use_average_ranks() {
        // ranks x: 1.5 1.5 3, y: 1 2 3 -> pearson of ranks = sqrt(3)/2
        let r = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((r - 3f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn variance_cases() {
        assert!((population_variance(&[1.0, 0.0, 0.0]).unwrap() - 0.2222).abs() <= 1e-4);
        assert!((population_variance(&[1.0, 1.0, 0.0]).unwrap() - 0.2222).abs() <= 1e-4);
        assert_eq!(population_variance(&[0.7, 0.7, 0.7]).unwrap(), 0.0);
        assert_eq!(population_variance(&[]), Err(MetricsError::EmptyInput));
    }

    proptest! {
        #[test]
        fn overhead_decreases_with_accuracy(tokens in 1.0f64..1e5, a in 0.1f64..99.0, d in 0.01f64..1.0) {
            prop_assert!(overhead(tokens, a + d).unwrap() < overhead(tokens, a).unwrap());
        }

        #[test]
        fn spearman_monotone_invariance(xs in proptest::collection::hash_set(-1000i32..1000, 2..30)) {
            let xs: Vec<f64> = xs.into_iter().map(f64::from).collect();
            let ys: Vec<f64> = xs.iter().map(|x| (x / 100.0).exp()).collect();
            prop_assert!((spearman(&xs, &ys).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn accuracy_is_permutation_invariant(mut flags in proptest::collection::vec(any::<bool>(), 1..50)) {
            let a = accuracy_of(flags.clone()).unwrap();
            flags.reverse();
            prop_assert_eq!(a, accuracy_of(flags).unwrap());
        }
    }
}
