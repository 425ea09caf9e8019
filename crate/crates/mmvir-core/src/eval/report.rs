//! Assembled evaluation report: machine-readable (canonical JSON) and
//! human-readable (terminal table) forms over whatever artifact types a run
//! produced.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{
    mc_accuracy, meteor, overlap_at_k, precision_at_k, rouge2, rouge_l, EvalError, LatencyLog,
    OverlapMode, QARecord, RetrievalCase, SummaryPair,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: String,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaReport {
    pub total: usize,
    pub correct: usize,
    pub no_parse: usize,
    pub accuracy: f64,
    /// Present only when records carry category tags.
    pub per_category: Vec<CategoryRow>,
}

pub fn qa_report(records: &[QARecord]) -> Result<QaReport, EvalError> {
    let accuracy = mc_accuracy(records)?;
    let correct = records.iter().filter(|r| r.is_correct()).count();
    let no_parse = records.iter().filter(|r| r.predicted.is_none()).count();

    let mut buckets: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for record in records {
        if let Some(category) = &record.category {
            let bucket = buckets.entry(category.as_str()).or_default();
            bucket.0 += 1;
            if record.is_correct() {
                bucket.1 += 1;
            }
        }
    }
    let per_category = buckets
        .into_iter()
        .map(|(category, (total, correct))| CategoryRow {
            category: category.to_string(),
            total,
            correct,
            accuracy: correct as f64 / total as f64,
        })
        .collect();

    Ok(QaReport {
        total: records.len(),
        correct,
        no_parse,
        accuracy,
        per_category,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub count: usize,
    pub rouge2: MeanScores,
    pub rouge_l: MeanScores,
    pub meteor: f64,
}

pub fn summary_report(pairs: &[SummaryPair]) -> Result<SummaryReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = pairs.len() as f64;
    let scored = crate::par::map_slice(pairs, |pair| {
        (
            rouge2(&pair.candidate, &pair.reference),
            rouge_l(&pair.candidate, &pair.reference),
            meteor(&pair.candidate, &pair.reference),
        )
    });
    let mut r2 = MeanScores {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };
    let mut rl = r2;
    let mut met = 0.0;
    for (a, b, m) in scored {
        r2.precision += a.precision;
        r2.recall += a.recall;
        r2.f1 += a.f1;
        rl.precision += b.precision;
        rl.recall += b.recall;
        rl.f1 += b.f1;
        met += m;
    }
    for scores in [&mut r2, &mut rl] {
        scores.precision /= n;
        scores.recall /= n;
        scores.f1 /= n;
    }
    Ok(SummaryReport {
        count: pairs.len(),
        rouge2: r2,
        rouge_l: rl,
        meteor: met / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReportRow {
    pub k: usize,
    pub precision_at_k: f64,
    pub overlap_at_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub cases: usize,
    pub overlap_mode: OverlapMode,
    pub rows: Vec<RetrievalReportRow>,
}

pub fn retrieval_report(
    cases: &[RetrievalCase],
    ks: &[usize],
    mode: OverlapMode,
) -> Result<RetrievalReport, EvalError> {
    if cases.is_empty() {
        return Err(EvalError::Empty);
    }
    let rows = ks
        .iter()
        .map(|&k| RetrievalReportRow {
            k,
            precision_at_k: precision_at_k(cases, k),
            overlap_at_k: overlap_at_k(cases, k, mode),
        })
        .collect();
    Ok(RetrievalReport {
        cases: cases.len(),
        overlap_mode: mode,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub segment_s: f64,
    pub caption_s: f64,
    pub index_s: f64,
    pub answer_s: f64,
    pub total_s: f64,
}

impl From<LatencyLog> for LatencySummary {
    fn from(log: LatencyLog) -> Self {
        Self {
            segment_s: log.segment_s,
            caption_s: log.caption_s,
            index_s: log.index_s,
            answer_s: log.answer_s,
            total_s: log.total_s(),
        }
    }
}

/// Full run report; sections are present when the run produced the matching
/// artifacts.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qa: Option<QaReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summarization: Option<SummaryReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retrieval: Option<RetrievalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latency: Option<LatencySummary>,
}

impl EvalReport {
    pub fn to_canonical_json(&self) -> String {
        crate::canon::to_canonical_string(self).expect("report serialization is infallible")
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(qa) = &self.qa {
            writeln!(
                f,
                "VideoQA      accuracy {:.4}  ({}/{} correct, {} no-parse)",
                qa.accuracy, qa.correct, qa.total, qa.no_parse
            )?;
            for row in &qa.per_category {
                writeln!(
                    f,
                    "  {:<24} {:.4}  ({}/{})",
                    row.category, row.accuracy, row.correct, row.total
                )?;
            }
        }
        if let Some(s) = &self.summarization {
            writeln!(
                f,
                "Summaries    n={}  R-2 {:.4}  R-L {:.4}  METEOR {:.4}",
                s.count, s.rouge2.f1, s.rouge_l.f1, s.meteor
            )?;
        }
        if let Some(r) = &self.retrieval {
            for row in &r.rows {
                writeln!(
                    f,
                    "Retrieval    P@{:<3} {:.4}  Overlap@{:<3} {:.4}  (n={})",
                    row.k, row.precision_at_k, row.k, row.overlap_at_k, r.cases
                )?;
            }
        }
        if let Some(l) = &self.latency {
            writeln!(
                f,
                "Latency (s)  segment {:.2}  caption {:.2}  index {:.2}  answer {:.2}  total {:.2}",
                l.segment_s, l.caption_s, l.index_s, l.answer_s, l.total_s
            )?;
        }
        Ok(())
    }
}
