//! Timeline-level semantic index and the two-stage retrieve-then-expand
//! reasoning flow, plus summarization and temporal localization.
//!
//! The index is an exact exhaustive cosine scan: hundreds of entries per
//! hour of video make approximate structures pointless, and exactness keeps
//! the oracle tests simple.

mod index_io;

pub use index_io::{load_index, save_index};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{
    AnswerRequest, ContextBlock, EmbedRequest, GatewayError, ModelGateway,
};
use crate::par;
use crate::repr::{validate_document, CoarseBlock, TimeInterval, VideoDocument, Violation};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("index is empty")]
    EmptyIndex,
    #[error("embedder fingerprint mismatch: index holds '{held}', incoming '{incoming}'")]
    FingerprintMismatch { held: String, incoming: String },
    #[error("retrieved clip {clip_id} of video '{video_id}' is not present in the documents")]
    DanglingClip { video_id: String, clip_id: usize },
    #[error("document '{video_id}' failed validation with {} violation(s); first: {}", violations.len(), violations[0])]
    InvalidDocument {
        video_id: String,
        violations: Vec<Violation>,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed index file: {0}")]
    Malformed(String),
}

/// One indexed timeline entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub video_id: String,
    pub clip_id: usize,
    pub interval: TimeInterval,
    pub summary: String,
}

/// Embedding index over timeline summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct TimelineIndex {
    entries: Vec<IndexEntry>,
    /// Row-major `len x dim`, rows unit-norm.
    matrix: Vec<f64>,
    dim: usize,
    fingerprint: String,
}

impl TimelineIndex {
    pub(crate) fn from_parts(
        entries: Vec<IndexEntry>,
        matrix: Vec<f64>,
        dim: usize,
        fingerprint: String,
    ) -> Result<Self, RetrievalError> {
        if dim == 0 || entries.len() * dim != matrix.len() {
            return Err(RetrievalError::Malformed(format!(
                "{} entries with dim {dim} need {} floats, got {}",
                entries.len(),
                entries.len() * dim,
                matrix.len()
            )));
        }
        Ok(Self {
            entries,
            matrix,
            dim,
            fingerprint,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    /// Merge another index built with the same embedder.
    pub fn merge(&mut self, other: TimelineIndex) -> Result<(), RetrievalError> {
        if other.fingerprint != self.fingerprint {
            return Err(RetrievalError::FingerprintMismatch {
                held: self.fingerprint.clone(),
                incoming: other.fingerprint,
            });
        }
        if other.dim != self.dim {
            return Err(RetrievalError::Malformed(format!(
                "dimension mismatch on merge: {} vs {}",
                self.dim, other.dim
            )));
        }
        self.entries.extend(other.entries);
        self.matrix.extend(other.matrix);
        Ok(())
    }
}

/// Embed every timeline summary of the given documents into a fresh index.
pub fn build_index(
    docs: &[VideoDocument],
    gateway: &dyn ModelGateway,
) -> Result<TimelineIndex, RetrievalError> {
    for doc in docs {
        let violations = validate_document(doc);
        if !violations.is_empty() {
            return Err(RetrievalError::InvalidDocument {
                video_id: doc.video_id.clone(),
                violations,
            });
        }
    }
    let entries: Vec<IndexEntry> = docs
        .iter()
        .flat_map(|doc| {
            doc.clips.iter().map(|clip| IndexEntry {
                video_id: doc.video_id.clone(),
                clip_id: clip.timeline.clip_id,
                interval: clip.timeline.interval,
                summary: clip.timeline.summary.clone(),
            })
        })
        .collect();

    let rows = par::try_map_range(entries.len(), |i| {
        gateway
            .embed(&EmbedRequest::text(entries[i].summary.clone()))
            .map(|r| r.vector)
    })?;
    let dim = rows.first().map(Vec::len).unwrap_or(1);
    let matrix: Vec<f64> = rows.into_iter().flatten().collect();
    TimelineIndex::from_parts(entries, matrix, dim, gateway.embedder_fingerprint())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    /// Row index into the queried index.
    pub entry: usize,
    pub video_id: String,
    pub clip_id: usize,
    /// Cosine similarity in [-1, 1].
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    /// Scores non-increasing; ties broken by (video_id, clip_id) ascending.
    pub hits: Vec<RetrievalHit>,
    pub k: usize,
}

/// Rank all entries by score, descending, ties by (video_id, clip_id)
/// ascending, and keep the first `k`.
pub fn rank_entries(entries: &[IndexEntry], scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| entries[a].video_id.cmp(&entries[b].video_id))
            .then_with(|| entries[a].clip_id.cmp(&entries[b].clip_id))
    });
    order.truncate(k);
    order
}

/// Exact top-k retrieval against the index.
pub fn retrieve(
    index: &TimelineIndex,
    query: &str,
    k: usize,
    gateway: &dyn ModelGateway,
) -> Result<RetrievalResult, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::Precondition("k must be at least 1".into()));
    }
    if index.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    let q = gateway.embed(&EmbedRequest::text(query))?.vector;
    if q.len() != index.dim {
        return Err(RetrievalError::Malformed(format!(
            "query embedding dimension {} does not match index dimension {}",
            q.len(),
            index.dim
        )));
    }
    let scores: Vec<f64> = par::map_range(index.len(), |i| {
        index.row(i).iter().zip(&q).map(|(a, b)| a * b).sum()
    });
    let hits = rank_entries(&index.entries, &scores, k)
        .into_iter()
        .map(|i| RetrievalHit {
            entry: i,
            video_id: index.entries[i].video_id.clone(),
            clip_id: index.entries[i].clip_id,
            score: scores[i],
        })
        .collect();
    Ok(RetrievalResult { hits, k })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpandMode {
    TextOnly,
    VisionOnly,
    Hybrid,
}

impl std::fmt::Display for ExpandMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExpandMode::TextOnly => write!(f, "text_only"),
            ExpandMode::VisionOnly => write!(f, "vision_only"),
            ExpandMode::Hybrid => write!(f, "hybrid"),
        }
    }
}

impl std::str::FromStr for ExpandMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "text_only" | "text" => Ok(ExpandMode::TextOnly),
            "vision_only" | "vision" => Ok(ExpandMode::VisionOnly),
            "hybrid" => Ok(ExpandMode::Hybrid),
            other => Err(format!("unknown mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlockPayload {
    Timeline(String),
    Coarse(String),
    Fine(String),
    Frame(String),
}

impl BlockPayload {
    fn rank(&self) -> u8 {
        match self {
            BlockPayload::Timeline(_) => 0,
            BlockPayload::Coarse(_) => 1,
            BlockPayload::Fine(_) => 2,
            BlockPayload::Frame(_) => 3,
        }
    }

    pub fn text(&self) -> &str {
        match self {
            BlockPayload::Timeline(s)
            | BlockPayload::Coarse(s)
            | BlockPayload::Fine(s)
            | BlockPayload::Frame(s) => s,
        }
    }
}

/// One context block with total provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledBlock {
    pub payload: BlockPayload,
    pub video_id: String,
    pub clip_id: usize,
    pub subsegment_id: Option<usize>,
    /// Source timestamp used for global ordering.
    pub timestamp_s: f64,
}

/// Ordered multi-modal context for the answerer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssembledContext {
    pub blocks: Vec<AssembledBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextStats {
    pub blocks: usize,
    pub text_blocks: usize,
    pub frame_blocks: usize,
    /// Crude 4-characters-per-token estimate over text blocks.
    pub token_estimate: usize,
}

impl AssembledContext {
    pub fn to_wire(&self) -> Vec<ContextBlock> {
        self.blocks
            .iter()
            .map(|b| match &b.payload {
                BlockPayload::Frame(locator) => ContextBlock::Frame(locator.clone()),
                other => ContextBlock::Text(other.text().to_string()),
            })
            .collect()
    }

    pub fn stats(&self) -> ContextStats {
        let frame_blocks = self
            .blocks
            .iter()
            .filter(|b| matches!(b.payload, BlockPayload::Frame(_)))
            .count();
        let chars: usize = self
            .blocks
            .iter()
            .filter(|b| !matches!(b.payload, BlockPayload::Frame(_)))
            .map(|b| b.payload.text().chars().count())
            .sum();
        ContextStats {
            blocks: self.blocks.len(),
            text_blocks: self.blocks.len() - frame_blocks,
            frame_blocks,
            token_estimate: chars.div_ceil(4),
        }
    }
}

/// Deterministic one-line rendering of a coarse block.
pub fn render_coarse(block: &CoarseBlock) -> String {
    let actions = if block.actions_sentinel {
        "no action detected".to_string()
    } else {
        block
            .actions
            .iter()
            .map(|a| a.description.as_str())
            .collect::<Vec<_>>()
            .join("; ")
    };
    let scenes = if block.scenes_sentinel {
        "no action detected".to_string()
    } else {
        block
            .scenes
            .iter()
            .map(|s| format!("{} (setting: {}; action: {})", s.description, s.setting, s.action))
            .collect::<Vec<_>>()
            .join("; ")
    };
    let objects = if block.objects_sentinel {
        "no object detected".to_string()
    } else {
        block
            .objects
            .iter()
            .map(|o| {
                if o.attributes.is_empty() {
                    format!("{} x{}", o.name, o.count)
                } else {
                    format!("{} x{} ({})", o.name, o.count, o.attributes.join(", "))
                }
            })
            .collect::<Vec<_>>()
            .join("; ")
    };
    format!("Actions: {actions}. Scenes: {scenes}. Objects: {objects}.")
}

fn find_clip<'a>(
    docs: &'a [VideoDocument],
    video_id: &str,
    clip_id: usize,
) -> Result<&'a crate::repr::ClipRepresentation, RetrievalError> {
    docs.iter()
        .find(|d| d.video_id == video_id)
        .and_then(|d| d.clips.iter().find(|c| c.timeline.clip_id == clip_id))
        .ok_or_else(|| RetrievalError::DanglingClip {
            video_id: video_id.to_string(),
            clip_id,
        })
}

/// Inflate retrieved clips into an ordered context ("zoom in").
///
/// Hybrid mode emits the timeline text, each sub-segment's coarse text, and
/// each fine pair's text plus its frame locator; text-only drops the frame
/// locators; vision-only keeps only the frame locators. Blocks are sorted
/// into global temporal order.
pub fn expand(
    docs: &[VideoDocument],
    result: &RetrievalResult,
    mode: ExpandMode,
) -> Result<AssembledContext, RetrievalError> {
    let mut blocks = Vec::new();
    for hit in &result.hits {
        let clip = find_clip(docs, &hit.video_id, hit.clip_id)?;
        let push_text = mode != ExpandMode::VisionOnly;
        let push_frames = mode != ExpandMode::TextOnly;

        if push_text {
            blocks.push(AssembledBlock {
                payload: BlockPayload::Timeline(clip.timeline.summary.clone()),
                video_id: hit.video_id.clone(),
                clip_id: hit.clip_id,
                subsegment_id: None,
                timestamp_s: clip.timeline.interval.start_s,
            });
        }
        for sub in &clip.subsegments {
            if push_text {
                blocks.push(AssembledBlock {
                    payload: BlockPayload::Coarse(render_coarse(&sub.coarse)),
                    video_id: hit.video_id.clone(),
                    clip_id: hit.clip_id,
                    subsegment_id: Some(sub.coarse.subsegment_id),
                    timestamp_s: sub.coarse.interval.start_s,
                });
            }
            for pair in &sub.fine {
                if push_text {
                    blocks.push(AssembledBlock {
                        payload: BlockPayload::Fine(pair.raw_text.clone()),
                        video_id: hit.video_id.clone(),
                        clip_id: hit.clip_id,
                        subsegment_id: Some(sub.coarse.subsegment_id),
                        timestamp_s: pair.frame.timestamp_s,
                    });
                }
                if push_frames {
                    blocks.push(AssembledBlock {
                        payload: BlockPayload::Frame(pair.frame.source.clone()),
                        video_id: hit.video_id.clone(),
                        clip_id: hit.clip_id,
                        subsegment_id: Some(sub.coarse.subsegment_id),
                        timestamp_s: pair.frame.timestamp_s,
                    });
                }
            }
        }
    }
    blocks.sort_by(|a, b| {
        a.video_id
            .cmp(&b.video_id)
            .then(a.timestamp_s.total_cmp(&b.timestamp_s))
            .then(a.payload.rank().cmp(&b.payload.rank()))
            .then(a.clip_id.cmp(&b.clip_id))
            .then(a.subsegment_id.cmp(&b.subsegment_id))
    });
    Ok(AssembledContext { blocks })
}

/// First standalone option label in the raw answer, delimited by
/// non-alphanumerics; `None` when no label parses.
pub fn extract_choice(raw: &str, option_count: usize) -> Option<String> {
    let count = option_count.clamp(1, 26) as u8;
    let labels: Vec<char> = (0..count).map(|i| char::from(b'A' + i)).collect();
    let chars: Vec<char> = raw.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if !labels.contains(&c) {
            continue;
        }
        let prev_ok = i == 0 || !chars[i - 1].is_alphanumeric();
        let next_ok = i + 1 == chars.len() || !chars[i + 1].is_alphanumeric();
        if prev_ok && next_ok {
            return Some(c.to_string());
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnswerOutcome {
    /// Extracted option label, or `None` on a no-parse (scored incorrect).
    pub choice: Option<String>,
    pub raw: String,
    pub stats: ContextStats,
    pub retrieved: Vec<RetrievalHit>,
}

/// Two-stage question answering: retrieve top-k clips by the question, expand
/// them in the given mode, and ask the answerer.
pub fn answer_question(
    index: &TimelineIndex,
    docs: &[VideoDocument],
    question: &str,
    options: Option<&[String]>,
    k: usize,
    mode: ExpandMode,
    gateway: &dyn ModelGateway,
) -> Result<AnswerOutcome, RetrievalError> {
    let result = retrieve(index, question, k, gateway)?;
    let context = expand(docs, &result, mode)?;
    let response = gateway.answer(&AnswerRequest {
        context: context.to_wire(),
        question: question.to_string(),
        options: options.map(<[String]>::to_vec),
    })?;
    let choice = options.and_then(|opts| extract_choice(&response.text, opts.len()));
    Ok(AnswerOutcome {
        choice,
        raw: response.text,
        stats: context.stats(),
        retrieved: result.hits,
    })
}

/// Instruction sent with the full-timeline context in summarization mode.
pub const SUMMARIZE_INSTRUCTION: &str =
    "Write a comprehensive summary of the whole video from its timeline descriptions, in temporal order.";

/// Timeline-only context for full-video summarization: every clip summary in
/// order, no coarse or fine content.
pub fn summarize_context(doc: &VideoDocument) -> Vec<ContextBlock> {
    doc.clips
        .iter()
        .map(|c| ContextBlock::Text(c.timeline.summary.clone()))
        .collect()
}

/// Full-timeline summarization: one answerer call over all clip summaries.
pub fn summarize(
    doc: &VideoDocument,
    gateway: &dyn ModelGateway,
) -> Result<String, RetrievalError> {
    if doc.clips.is_empty() {
        return Err(RetrievalError::Precondition(
            "document has no clips to summarize".into(),
        ));
    }
    let response = gateway.answer(&AnswerRequest {
        context: summarize_context(doc),
        question: SUMMARIZE_INSTRUCTION.to_string(),
        options: None,
    })?;
    Ok(response.text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocatedInterval {
    pub video_id: String,
    pub clip_id: usize,
    pub interval: TimeInterval,
    pub score: f64,
}

/// Temporal localization: the intervals of the top-k retrieved clips, in
/// retrieval-rank order.
pub fn locate(
    index: &TimelineIndex,
    query: &str,
    k: usize,
    gateway: &dyn ModelGateway,
) -> Result<Vec<LocatedInterval>, RetrievalError> {
    let result = retrieve(index, query, k, gateway)?;
    Ok(result
        .hits
        .into_iter()
        .map(|hit| LocatedInterval {
            interval: index.entries[hit.entry].interval,
            video_id: hit.video_id,
            clip_id: hit.clip_id,
            score: hit.score,
        })
        .collect())
}
