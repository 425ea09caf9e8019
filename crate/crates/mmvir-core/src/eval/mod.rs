//! Evaluation metrics: multiple-choice accuracy, ROUGE-2, ROUGE-L, METEOR,
//! frame-level Precision@K, range-level Overlap@K, and latency accounting.
//! All metrics are pure functions.

mod report;
mod stem;

pub use report::{
    qa_report, retrieval_report, summary_report, CategoryRow, EvalReport, LatencySummary,
    MeanScores, QaReport, RetrievalReport, RetrievalReportRow, SummaryReport,
};
pub use stem::porter_stem;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::repr::TimeInterval;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no records to evaluate")]
    Empty,
}

/// One answered multiple-choice question against its gold label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QARecord {
    pub id: String,
    /// `None` marks a no-parse, which scores as incorrect.
    pub predicted: Option<String>,
    pub gold: String,
    #[serde(default)]
    pub category: Option<String>,
}

impl QARecord {
    pub fn is_correct(&self) -> bool {
        match &self.predicted {
            Some(p) => p.trim().to_uppercase() == self.gold.trim().to_uppercase(),
            None => false,
        }
    }
}

/// Fraction of correctly answered questions; labels are compared after
/// trimming and uppercasing, and no-parse counts as incorrect.
pub fn mc_accuracy(records: &[QARecord]) -> Result<f64, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let correct = records.iter().filter(|r| r.is_correct()).count();
    Ok(correct as f64 / records.len() as f64)
}

/// Candidate/reference pair for summary scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryPair {
    pub id: String,
    pub candidate: String,
    pub reference: String,
}

/// Metric tokenization: lowercase, punctuation split into separate
/// single-character tokens, whitespace-delimited.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.to_lowercase().chars() {
        if ch.is_alphanumeric() {
            cur.push(ch);
        } else {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            if !ch.is_whitespace() {
                out.push(ch.to_string());
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Precision / recall / F1 triple for the ROUGE variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when a side tokenized to nothing.
    #[serde(default)]
    pub empty_input: bool,
}

impl PrfScores {
    fn zero(empty_input: bool) -> Self {
        Self {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            empty_input,
        }
    }

    fn from_counts(overlap: f64, cand: f64, reference: f64) -> Self {
        let precision = overlap / cand;
        let recall = overlap / reference;
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
            empty_input: false,
        }
    }
}

/// ROUGE-2: bigram multiset overlap.
pub fn rouge2(candidate: &str, reference: &str) -> PrfScores {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    if c.is_empty() || r.is_empty() {
        return PrfScores::zero(true);
    }
    if c.len() < 2 || r.len() < 2 {
        return PrfScores::zero(false);
    }
    let mut ref_bigrams: std::collections::HashMap<(&str, &str), usize> =
        std::collections::HashMap::new();
    for w in r.windows(2) {
        *ref_bigrams.entry((w[0].as_str(), w[1].as_str())).or_default() += 1;
    }
    let mut overlap = 0usize;
    for w in c.windows(2) {
        if let Some(count) = ref_bigrams.get_mut(&(w[0].as_str(), w[1].as_str())) {
            if *count > 0 {
                *count -= 1;
                overlap += 1;
            }
        }
    }
    PrfScores::from_counts(overlap as f64, (c.len() - 1) as f64, (r.len() - 1) as f64)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L: longest-common-subsequence F1 over token sequences.
pub fn rouge_l(candidate: &str, reference: &str) -> PrfScores {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    if c.is_empty() || r.is_empty() {
        return PrfScores::zero(true);
    }
    let lcs = lcs_len(&c, &r) as f64;
    if lcs == 0.0 {
        return PrfScores::zero(false);
    }
    PrfScores::from_counts(lcs, c.len() as f64, r.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeteorDetail {
    pub matches: usize,
    pub chunks: usize,
    pub precision: f64,
    pub recall: f64,
    pub fmean: f64,
    pub penalty: f64,
    pub score: f64,
}

impl MeteorDetail {
    fn zero() -> Self {
        Self {
            matches: 0,
            chunks: 0,
            precision: 0.0,
            recall: 0.0,
            fmean: 0.0,
            penalty: 0.0,
            score: 0.0,
        }
    }
}

/// METEOR without synonym matching: unigram alignment by exact match then
/// Porter-stem match, `Fmean = 10PR/(R + 9P)`, fragmentation penalty
/// `0.5 (chunks/matches)^3`.
pub fn meteor(candidate: &str, reference: &str) -> f64 {
    meteor_detail(candidate, reference).score
}

pub fn meteor_detail(candidate: &str, reference: &str) -> MeteorDetail {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    if c.is_empty() || r.is_empty() {
        return MeteorDetail::zero();
    }

    let mut ref_used = vec![false; r.len()];
    let mut cand_match: Vec<Option<usize>> = vec![None; c.len()];

    // Stage 1: exact surface match, leftmost unused reference token.
    for (i, token) in c.iter().enumerate() {
        for (j, other) in r.iter().enumerate() {
            if !ref_used[j] && token == other {
                ref_used[j] = true;
                cand_match[i] = Some(j);
                break;
            }
        }
    }
    // Stage 2: stem match over the leftovers.
    let c_stems: Vec<String> = c.iter().map(|t| porter_stem(t)).collect();
    let r_stems: Vec<String> = r.iter().map(|t| porter_stem(t)).collect();
    for i in 0..c.len() {
        if cand_match[i].is_some() {
            continue;
        }
        for j in 0..r.len() {
            if !ref_used[j] && c_stems[i] == r_stems[j] {
                ref_used[j] = true;
                cand_match[i] = Some(j);
                break;
            }
        }
    }

    let pairs: Vec<(usize, usize)> = cand_match
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| (i, j)))
        .collect();
    let matches = pairs.len();
    if matches == 0 {
        return MeteorDetail::zero();
    }
    let chunks = 1 + pairs
        .windows(2)
        .filter(|w| w[1].0 != w[0].0 + 1 || w[1].1 != w[0].1 + 1)
        .count();

    let precision = matches as f64 / c.len() as f64;
    let recall = matches as f64 / r.len() as f64;
    let fmean = 10.0 * precision * recall / (recall + 9.0 * precision);
    let penalty = 0.5 * (chunks as f64 / matches as f64).powi(3);
    MeteorDetail {
        matches,
        chunks,
        precision,
        recall,
        fmean,
        penalty,
        score: fmean * (1.0 - penalty),
    }
}

/// One localization query: ranked retrieved intervals plus ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalCase {
    pub query_id: String,
    /// Ranked, best first.
    pub retrieved: Vec<TimeInterval>,
    #[serde(default)]
    pub gt_frames: Vec<f64>,
    #[serde(default)]
    pub gt_interval: Option<TimeInterval>,
}

/// Frame-level Precision@K: a case is a hit when any ground-truth frame
/// timestamp lies inside any of its top-K retrieved intervals (half-open).
pub fn precision_at_k(cases: &[RetrievalCase], k: usize) -> f64 {
    if cases.is_empty() {
        return 0.0;
    }
    let hits = cases
        .iter()
        .filter(|case| {
            case.gt_frames.iter().any(|&t| {
                case.retrieved
                    .iter()
                    .take(k)
                    .any(|interval| interval.contains(t))
            })
        })
        .count();
    hits as f64 / cases.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapMode {
    /// Fraction of the ground-truth interval covered by the union of the
    /// top-K retrieved intervals.
    GtRecall,
    /// Intersection over union of the two.
    Iou,
}

/// Merge possibly-overlapping intervals into disjoint spans.
fn merge_union(mut intervals: Vec<TimeInterval>) -> Vec<TimeInterval> {
    intervals.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    let mut merged: Vec<TimeInterval> = Vec::new();
    for interval in intervals {
        match merged.last_mut() {
            Some(last) if interval.start_s <= last.end_s => {
                last.end_s = last.end_s.max(interval.end_s);
            }
            _ => merged.push(interval),
        }
    }
    merged
}

fn overlap_fraction(case: &RetrievalCase, k: usize, mode: OverlapMode) -> Option<f64> {
    let gt = case.gt_interval?;
    let gt_len = gt.duration_s();
    if gt_len <= 0.0 {
        return Some(0.0);
    }
    let merged = merge_union(case.retrieved.iter().take(k).copied().collect());
    let inter: f64 = merged
        .iter()
        .map(|m| (m.end_s.min(gt.end_s) - m.start_s.max(gt.start_s)).max(0.0))
        .sum();
    Some(match mode {
        OverlapMode::GtRecall => inter / gt_len,
        OverlapMode::Iou => {
            let union_len: f64 = merged.iter().map(TimeInterval::duration_s).sum::<f64>()
                + gt_len
                - inter;
            if union_len > 0.0 {
                inter / union_len
            } else {
                0.0
            }
        }
    })
}

/// Range-level Overlap@K, averaged over the cases that carry a ground-truth
/// interval.
pub fn overlap_at_k(cases: &[RetrievalCase], k: usize, mode: OverlapMode) -> f64 {
    let fractions: Vec<f64> = cases
        .iter()
        .filter_map(|case| overlap_fraction(case, k, mode))
        .collect();
    if fractions.is_empty() {
        return 0.0;
    }
    fractions.iter().sum::<f64>() / fractions.len() as f64
}

/// Wall-clock seconds per pipeline stage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyLog {
    pub segment_s: f64,
    pub caption_s: f64,
    pub index_s: f64,
    pub answer_s: f64,
}

impl LatencyLog {
    pub fn total_s(&self) -> f64 {
        self.segment_s + self.caption_s + self.index_s + self.answer_s
    }
}
