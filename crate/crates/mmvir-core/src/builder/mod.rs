//! Document construction pipeline: segmentation, prompt-driven caption
//! generation, fine-frame sampling, and per-clip checkpointing.
//!
//! Caption calls across sub-segments run concurrently up to
//! `caption_parallelism`; assembly order is fixed by index, so the output
//! never depends on completion order. With the offline gateway the whole
//! build is reproducible byte for byte.

pub mod parse;
pub mod prompts;

pub use parse::{parse_caption_list, CaptionKind, ParseError, ParsedList};
pub use prompts::{PromptKind, PromptTemplate};

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canon::quantize_s;
use crate::gateway::{CallRecord, Capability, CaptionRequest, GatewayError, ModelGateway};
use crate::par;
use crate::repr::{
    frame_locator, validate_document, ClipRepresentation, CoarseBlock, FinePair, FrameRef,
    SubSegmentRep, TimeInterval, TimelineEntry, VideoDocument, Violation, SUMMARY_WORD_LIMIT,
};
use crate::segmentation::{
    segment_series, split_subsegments, FrameEmbeddingSeries, SegError, SegmentationConfig,
};

const TIMELINE_MAX_TOKENS: u32 = 128;
const LIST_MAX_TOKENS: u32 = 512;

/// Appended to the timeline prompt when the first response overran the
/// word limit.
pub const LIMIT_REMINDER: &str =
    "REMINDER: YOU ARE ALLOWED TO USE A MAXIMUM OF 50 words for this description.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub segmentation: SegmentationConfig,
    /// Sampling rate of the incoming embedding/frame series.
    pub primary_fps: f64,
    /// Fine-grained sampling rate for text-frame pairs.
    pub fine_fps: f64,
    pub caption_parallelism: usize,
    /// Re-request count when a caption fails to parse.
    pub parse_retries: u32,
    /// Most frames sent for one timeline summary; longer clips are thinned
    /// uniformly.
    pub timeline_frame_cap: usize,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            segmentation: SegmentationConfig::default(),
            primary_fps: 0.5,
            fine_fps: 0.05,
            caption_parallelism: 4,
            parse_retries: 2,
            timeline_frame_cap: 64,
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<(), BuildError> {
        self.segmentation.validate()?;
        if !(self.fine_fps > 0.0 && self.fine_fps < self.primary_fps) {
            return Err(BuildError::Precondition(format!(
                "need 0 < fine_fps < primary_fps (got {} and {})",
                self.fine_fps, self.primary_fps
            )));
        }
        if self.caption_parallelism == 0 || self.timeline_frame_cap == 0 {
            return Err(BuildError::Precondition(
                "caption_parallelism and timeline_frame_cap must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Segmentation(#[from] SegError),
    #[error("gateway failure{}: {source}", match .checkpoint { Some(p) => format!(" (partial build checkpointed at {})", p.display()), None => String::new() })]
    Gateway {
        #[source]
        source: GatewayError,
        checkpoint: Option<PathBuf>,
    },
    #[error("{kind} caption failed to parse after {attempts} attempt(s): {source}; raw output: {raw:?}")]
    CaptionParse {
        kind: CaptionKind,
        attempts: u32,
        #[source]
        source: ParseError,
        raw: String,
    },
    #[error("captioner returned an empty summary")]
    EmptyCaption,
    #[error("built document failed validation with {} violation(s); first: {}", .0.len(), .0[0])]
    Validation(Vec<Violation>),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl From<GatewayError> for BuildError {
    fn from(source: GatewayError) -> Self {
        BuildError::Gateway {
            source,
            checkpoint: None,
        }
    }
}

/// Timestamp-ordered table of available frame locators.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTable {
    timestamps: Vec<f64>,
    locators: Vec<String>,
}

impl FrameTable {
    pub fn new(timestamps: Vec<f64>, locators: Vec<String>) -> Result<Self, BuildError> {
        if timestamps.len() != locators.len() {
            return Err(BuildError::Precondition(format!(
                "frame table has {} timestamps but {} locators",
                timestamps.len(),
                locators.len()
            )));
        }
        if timestamps.is_empty() {
            return Err(BuildError::Precondition("frame table is empty".into()));
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(BuildError::Precondition(
                "frame table timestamps must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            timestamps,
            locators,
        })
    }

    /// Table following the `<video_id>/<timestamp_ms>.jpg` convention.
    pub fn from_convention(video_id: &str, timestamps: &[f64]) -> Self {
        Self {
            timestamps: timestamps.to_vec(),
            locators: timestamps
                .iter()
                .map(|&t| frame_locator(video_id, t))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn locator(&self, i: usize) -> &str {
        &self.locators[i]
    }

    fn index_range(&self, interval: TimeInterval) -> std::ops::Range<usize> {
        let lo = self.timestamps.partition_point(|&t| t < interval.start_s);
        let hi = self.timestamps.partition_point(|&t| t < interval.end_s);
        lo..hi
    }

    /// Locators of the primary frames inside `interval`, in time order.
    pub fn locators_in(&self, interval: TimeInterval) -> Vec<String> {
        self.index_range(interval)
            .map(|i| self.locators[i].clone())
            .collect()
    }

    /// Index of the frame nearest `t` among frames inside `interval`; ties
    /// resolve to the earlier frame.
    pub fn nearest_index_within(&self, t: f64, interval: TimeInterval) -> Option<usize> {
        let range = self.index_range(interval);
        if range.is_empty() {
            return None;
        }
        let (lo, hi) = (range.start, range.end);
        let insert = self.timestamps[lo..hi].partition_point(|&x| x < t) + lo;
        if insert == lo {
            return Some(lo);
        }
        if insert == hi {
            return Some(hi - 1);
        }
        let before = insert - 1;
        if (t - self.timestamps[before]) <= (self.timestamps[insert] - t) {
            Some(before)
        } else {
            Some(insert)
        }
    }
}

/// Arithmetic fine-sampling grid: `start, start + 1/fine_fps, ...`, strictly
/// below the interval end, quantized to the time grid.
pub fn nominal_fine_timestamps(interval: TimeInterval, fine_fps: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if fine_fps <= 0.0 {
        return out;
    }
    let step = 1.0 / fine_fps;
    let mut j = 0usize;
    loop {
        let t = quantize_s(interval.start_s + j as f64 * step);
        if t >= interval.end_s {
            break;
        }
        out.push(t);
        j += 1;
    }
    out
}

/// Fine-rate frame references for one sub-segment, each nominal timestamp
/// snapped to the nearest available primary frame inside the interval.
pub fn sample_fine_frames(
    sub: TimeInterval,
    fine_fps: f64,
    frames: &FrameTable,
) -> Vec<FrameRef> {
    let mut out: Vec<FrameRef> = Vec::new();
    let mut last_idx: Option<usize> = None;
    for t in nominal_fine_timestamps(sub, fine_fps) {
        let Some(mut idx) = frames.nearest_index_within(t, sub) else {
            continue;
        };
        // Keep fine timestamps strictly increasing even if two nominal
        // points snap to the same frame.
        if let Some(last) = last_idx {
            if idx <= last {
                idx = last + 1;
                if idx >= frames.len() || frames.timestamps[idx] >= sub.end_s {
                    continue;
                }
            }
        }
        last_idx = Some(idx);
        out.push(FrameRef {
            timestamp_s: quantize_s(frames.timestamps[idx]),
            source: frames.locators[idx].clone(),
        });
    }
    out
}

/// Uniformly thin `items` down to at most `cap` entries, keeping endpoints.
fn thin_uniform<T: Clone>(items: &[T], cap: usize) -> Vec<T> {
    if items.len() <= cap {
        return items.to_vec();
    }
    if cap == 1 {
        return vec![items[0].clone()];
    }
    (0..cap)
        .map(|j| items[j * (items.len() - 1) / (cap - 1)].clone())
        .collect()
}

/// Generate one clip's timeline summary. Responses over the 50-word limit
/// are retried once with the limit restated, then truncated and flagged.
pub fn gen_timeline(
    clip_id: usize,
    interval: TimeInterval,
    frames: &[String],
    gateway: &dyn ModelGateway,
) -> Result<TimelineEntry, BuildError> {
    if frames.is_empty() {
        return Err(BuildError::Precondition(format!(
            "clip {clip_id} has no frames for the timeline summary"
        )));
    }
    let first = gateway
        .caption(&CaptionRequest {
            frames: frames.to_vec(),
            prompt: prompts::TIMELINE.text.to_string(),
            max_tokens: TIMELINE_MAX_TOKENS,
        })?
        .text;
    let mut summary = first.trim_end().to_string();
    let mut truncated = false;
    if crate::repr::word_count(&summary) > SUMMARY_WORD_LIMIT {
        let retry = gateway
            .caption(&CaptionRequest {
                frames: frames.to_vec(),
                prompt: format!("{}\n{}", prompts::TIMELINE.text, LIMIT_REMINDER),
                max_tokens: TIMELINE_MAX_TOKENS,
            })?
            .text;
        summary = retry.trim_end().to_string();
        if crate::repr::word_count(&summary) > SUMMARY_WORD_LIMIT {
            summary = summary
                .split_whitespace()
                .take(SUMMARY_WORD_LIMIT)
                .collect::<Vec<_>>()
                .join(" ");
            truncated = true;
        }
    }
    if summary.trim().is_empty() {
        return Err(BuildError::EmptyCaption);
    }
    Ok(TimelineEntry {
        clip_id,
        interval,
        summary,
        truncated,
    })
}

/// Request a list-form caption and parse it, re-requesting up to
/// `parse_retries` times on parse failure.
fn request_list(
    frames: &[String],
    template: PromptTemplate,
    kind: CaptionKind,
    parse_retries: u32,
    gateway: &dyn ModelGateway,
) -> Result<(ParsedList, String), BuildError> {
    let req = CaptionRequest {
        frames: frames.to_vec(),
        prompt: template.text.to_string(),
        max_tokens: LIST_MAX_TOKENS,
    };
    let mut raw = String::new();
    let mut last = ParseError::NoList;
    let attempts = parse_retries + 1;
    for _ in 0..attempts {
        raw = gateway.caption(&req)?.text;
        match parse_caption_list(&raw, kind) {
            Ok(parsed) => return Ok((parsed, raw)),
            Err(e) => last = e,
        }
    }
    Err(BuildError::CaptionParse {
        kind,
        attempts,
        source: last,
        raw,
    })
}

/// Generate one sub-segment's coarse block from the three coarse prompts.
pub fn gen_coarse(
    subsegment_id: usize,
    interval: TimeInterval,
    frames: &[String],
    parse_retries: u32,
    gateway: &dyn ModelGateway,
) -> Result<CoarseBlock, BuildError> {
    if frames.is_empty() {
        return Err(BuildError::Precondition(format!(
            "sub-segment {subsegment_id} has no frames"
        )));
    }
    let (actions, actions_sentinel) =
        match request_list(frames, prompts::ACTION, CaptionKind::Action, parse_retries, gateway)?.0
        {
            ParsedList::Sentinel => (Vec::new(), true),
            ParsedList::Actions(v) => (v, false),
            _ => unreachable!("action kind parses to actions"),
        };
    let (scenes, scenes_sentinel) =
        match request_list(frames, prompts::SCENE, CaptionKind::Scene, parse_retries, gateway)?.0 {
            ParsedList::Sentinel => (Vec::new(), true),
            ParsedList::Scenes(v) => (v, false),
            _ => unreachable!("scene kind parses to scenes"),
        };
    let (objects, objects_sentinel) =
        match request_list(frames, prompts::OBJECT, CaptionKind::Object, parse_retries, gateway)?.0
        {
            ParsedList::Sentinel => (Vec::new(), true),
            ParsedList::Objects(v) => (v, false),
            _ => unreachable!("object kind parses to objects"),
        };
    Ok(CoarseBlock {
        subsegment_id,
        interval,
        actions,
        scenes,
        objects,
        actions_sentinel,
        scenes_sentinel,
        objects_sentinel,
    })
}

/// Generate one fine text-frame pair from the spatial prompt.
pub fn gen_fine(
    frame: &FrameRef,
    parse_retries: u32,
    gateway: &dyn ModelGateway,
) -> Result<FinePair, BuildError> {
    let (parsed, raw) = request_list(
        std::slice::from_ref(&frame.source),
        prompts::SPATIAL,
        CaptionKind::Spatial,
        parse_retries,
        gateway,
    )?;
    let (spatial, sentinel) = match parsed {
        ParsedList::Sentinel => (Vec::new(), true),
        ParsedList::Spatials(v) => (v, false),
        _ => unreachable!("spatial kind parses to spatials"),
    };
    Ok(FinePair {
        frame: frame.clone(),
        spatial,
        raw_text: raw,
        sentinel,
    })
}

fn build_clip(
    clip_id: usize,
    interval: TimeInterval,
    frames: &FrameTable,
    cfg: &BuildConfig,
    gateway: &dyn ModelGateway,
) -> Result<ClipRepresentation, BuildError> {
    let clip_frames = thin_uniform(&frames.locators_in(interval), cfg.timeline_frame_cap);
    let timeline = gen_timeline(clip_id, interval, &clip_frames, gateway)?;

    let subs = split_subsegments(interval, cfg.segmentation.sub_max_s);
    let subsegments = par::try_map_range(subs.len(), |k| -> Result<SubSegmentRep, BuildError> {
        let sub = subs[k];
        let sub_frames = frames.locators_in(sub);
        let coarse = gen_coarse(k + 1, sub, &sub_frames, cfg.parse_retries, gateway)?;
        let fine = sample_fine_frames(sub, cfg.fine_fps, frames)
            .iter()
            .map(|f| gen_fine(f, cfg.parse_retries, gateway))
            .collect::<Result<Vec<_>, BuildError>>()?;
        Ok(SubSegmentRep { coarse, fine })
    })?;

    Ok(ClipRepresentation {
        timeline,
        subsegments,
    })
}

#[cfg(feature = "parallel")]
fn with_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
    {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_pool<R>(threads: usize, f: impl FnOnce() -> R) -> R {
    let _ = threads;
    f()
}

/// Per-build checkpoint: the document prefix plus a cursor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildCheckpoint {
    pub schema_version: u32,
    pub video_id: String,
    /// Fingerprint of (series, configuration); a resume against different
    /// inputs is refused.
    pub fingerprint: String,
    pub duration_s: f64,
    pub boundaries: Vec<f64>,
    /// Next clip index to build.
    pub cursor: usize,
    pub clips: Vec<ClipRepresentation>,
}

impl BuildCheckpoint {
    pub fn load(path: &Path) -> Result<Self, BuildError> {
        let text = fs::read_to_string(path).map_err(|source| BuildError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let ck: BuildCheckpoint = serde_json::from_str(&text)
            .map_err(|e| BuildError::Checkpoint(format!("unreadable checkpoint: {e}")))?;
        if ck.cursor != ck.clips.len() {
            return Err(BuildError::Checkpoint(format!(
                "cursor {} disagrees with {} stored clips",
                ck.cursor,
                ck.clips.len()
            )));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<(), BuildError> {
        let text = crate::canon::to_canonical_string(self)
            .map_err(|e| BuildError::Checkpoint(format!("unserializable checkpoint: {e}")))?;
        fs::write(path, text).map_err(|source| BuildError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn build_fingerprint(series: &FrameEmbeddingSeries, cfg: &BuildConfig) -> String {
    let mut h = crate::hash::Fnv1a::new();
    h.update(&series.fingerprint().to_le_bytes());
    if let Ok(cfg_text) = crate::canon::to_canonical_string(cfg) {
        h.update(cfg_text.as_bytes());
    }
    format!("{:016x}", h.finish())
}

/// Run the full construction pipeline into a validated document.
///
/// With `checkpoint` set, a gateway failure persists the clips built so far
/// and a later call resumes from the cursor; the resumed result is
/// byte-identical to an uninterrupted build. The checkpoint file is removed
/// on success.
pub fn build_document(
    series: &FrameEmbeddingSeries,
    frames: &FrameTable,
    cfg: &BuildConfig,
    gateway: &dyn ModelGateway,
    checkpoint: Option<&Path>,
) -> Result<VideoDocument, BuildError> {
    cfg.validate()?;
    let duration_s = series.duration_s();
    let period = 1.0 / series.fps();
    let ts = series.timestamps();
    if (frames.timestamps[0] - ts[0]).abs() > period
        || (frames.timestamps[frames.len() - 1] - ts[ts.len() - 1]).abs() > period
    {
        return Err(BuildError::Precondition(
            "series and frame table must cover the same duration".into(),
        ));
    }

    let fingerprint = build_fingerprint(series, cfg);
    let (boundaries, mut clips, start) = match checkpoint {
        Some(path) if path.exists() => {
            let ck = BuildCheckpoint::load(path)?;
            if ck.fingerprint != fingerprint {
                return Err(BuildError::Checkpoint(
                    "checkpoint was built from different inputs or configuration".into(),
                ));
            }
            (ck.boundaries, ck.clips, ck.cursor)
        }
        _ => (segment_series(series, &cfg.segmentation)?, Vec::new(), 0),
    };

    let clip_count = boundaries.len() - 1;
    let outcome = with_pool(cfg.caption_parallelism, || -> Result<(), BuildError> {
        for i in start..clip_count {
            let interval = TimeInterval::new(boundaries[i], boundaries[i + 1]);
            clips.push(build_clip(i + 1, interval, frames, cfg, gateway)?);
        }
        Ok(())
    });

    if let Err(mut err) = outcome {
        if let Some(path) = checkpoint {
            BuildCheckpoint {
                schema_version: 1,
                video_id: series.video_id().to_string(),
                fingerprint,
                duration_s,
                boundaries,
                cursor: clips.len(),
                clips,
            }
            .save(path)?;
            if let BuildError::Gateway {
                checkpoint: slot, ..
            } = &mut err
            {
                *slot = Some(path.to_path_buf());
            }
        }
        return Err(err);
    }

    let doc = VideoDocument {
        video_id: series.video_id().to_string(),
        duration_s,
        primary_fps: series.fps(),
        boundaries,
        clips,
        build_config: cfg.clone(),
    };
    let violations = validate_document(&doc);
    if !violations.is_empty() {
        return Err(BuildError::Validation(violations));
    }
    if let Some(path) = checkpoint {
        if path.exists() {
            fs::remove_file(path).map_err(|source| BuildError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        }
    }
    Ok(doc)
}

/// Caption-call totals per prompt family, classified from the call log.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CaptionCallCounts {
    pub timeline: usize,
    pub action: usize,
    pub scene: usize,
    pub object: usize,
    pub spatial: usize,
    pub other: usize,
}

pub fn count_caption_calls(log: &[CallRecord]) -> CaptionCallCounts {
    let mut counts = CaptionCallCounts::default();
    for record in log {
        if record.capability != Capability::Caption {
            continue;
        }
        match prompts::identify(&record.detail) {
            Some(PromptKind::Timeline) => counts.timeline += 1,
            Some(PromptKind::Action) => counts.action += 1,
            Some(PromptKind::Scene) => counts.scene += 1,
            Some(PromptKind::Object) => counts.object += 1,
            Some(PromptKind::Spatial) => counts.spatial += 1,
            None => counts.other += 1,
        }
    }
    counts
}

/// Expected caption-call totals for a built document: one timeline call per
/// clip, three coarse calls per sub-segment, one spatial call per fine pair.
pub fn expected_caption_calls(doc: &VideoDocument) -> CaptionCallCounts {
    let subs: usize = doc.clips.iter().map(|c| c.subsegments.len()).sum();
    let fines: usize = doc
        .clips
        .iter()
        .flat_map(|c| &c.subsegments)
        .map(|s| s.fine.len())
        .sum();
    CaptionCallCounts {
        timeline: doc.clips.len(),
        action: subs,
        scene: subs,
        object: subs,
        spatial: fines,
        other: 0,
    }
}
