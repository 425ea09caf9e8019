//! Three-tier representation documents and their invariants.
//!
//! A [`VideoDocument`] holds, per detected clip, a timeline summary plus
//! per-sub-segment coarse blocks (actions / scenes / objects) and fine
//! text-frame pairs. Documents are immutable after construction and persist
//! in a canonical text form (see [`persist`]).

mod persist;

pub use persist::{
    document_from_str, document_to_string, load_document, save_document, DocError, SCHEMA_VERSION,
};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::builder::BuildConfig;

/// Equality tolerance for time comparisons inside validation. Documents are
/// quantized to the microsecond grid, so this only absorbs representation
/// noise, never real drift.
pub const TIME_EPS: f64 = 1e-9;

/// Half-open interval `[start_s, end_s)` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeInterval {
    pub start_s: f64,
    pub end_s: f64,
}

impl TimeInterval {
    pub fn new(start_s: f64, end_s: f64) -> Self {
        Self { start_s, end_s }
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    /// Half-open containment: `start_s <= t < end_s`.
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start_s && t < self.end_s
    }
}

impl fmt::Display for TimeInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:.3}, {:.3})", self.start_s, self.end_s)
    }
}

/// Reference to one extracted frame image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRef {
    pub timestamp_s: f64,
    /// Opaque locator, conventionally `<video_id>/<timestamp_ms>.jpg`
    /// relative to the configured frame root.
    pub source: String,
}

/// Conventional locator for the frame at `timestamp_s` of `video_id`.
pub fn frame_locator(video_id: &str, timestamp_s: f64) -> String {
    format!("{video_id}/{}.jpg", (timestamp_s * 1000.0).round() as i64)
}

/// One clip's entry in the global timeline: a summary of at most 50 words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    /// Ordinal clip index, 1-based.
    pub clip_id: usize,
    pub interval: TimeInterval,
    pub summary: String,
    /// True when the captioner overran the word limit and the summary was
    /// cut to 50 words.
    #[serde(default)]
    pub truncated: bool,
}

/// Number of words under the document's counting rule: split on Unicode
/// whitespace, punctuation counts with the word it is attached to.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub const SUMMARY_WORD_LIMIT: usize = 50;

/// One action description from the coarse action prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub description: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extras: BTreeMap<String, serde_json::Value>,
}

/// One (description, setting, action) record from the scene prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub description: String,
    pub setting: String,
    pub action: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extras: BTreeMap<String, serde_json::Value>,
}

/// One (name, count, attributes) record from the object prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub name: String,
    pub count: u64,
    pub attributes: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extras: BTreeMap<String, serde_json::Value>,
}

/// One spatial record from the fine-grained prompt: an object plus its
/// relationships to others in the frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialRecord {
    pub name: String,
    pub count: u64,
    pub attributes: Vec<String>,
    pub relationships: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extras: BTreeMap<String, serde_json::Value>,
}

/// Coarse-grained description of one sub-segment.
///
/// A list may be empty only when the captioner returned the corresponding
/// sentinel string ("no action detected" / "no object detected"); the flag
/// preserves that provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseBlock {
    /// Ordinal sub-segment index within the clip, 1-based.
    pub subsegment_id: usize,
    pub interval: TimeInterval,
    pub actions: Vec<ActionRecord>,
    pub scenes: Vec<SceneRecord>,
    pub objects: Vec<ObjectRecord>,
    #[serde(default)]
    pub actions_sentinel: bool,
    #[serde(default)]
    pub scenes_sentinel: bool,
    #[serde(default)]
    pub objects_sentinel: bool,
}

/// Fine-grained text-frame pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinePair {
    pub frame: FrameRef,
    pub spatial: Vec<SpatialRecord>,
    /// The captioner's description, verbatim.
    pub raw_text: String,
    #[serde(default)]
    pub sentinel: bool,
}

/// One sub-segment: coarse block plus its fine pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubSegmentRep {
    pub coarse: CoarseBlock,
    pub fine: Vec<FinePair>,
}

/// Full representation tuple for one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRepresentation {
    pub timeline: TimelineEntry,
    pub subsegments: Vec<SubSegmentRep>,
}

impl ClipRepresentation {
    pub fn interval(&self) -> TimeInterval {
        self.timeline.interval
    }
}

/// The persisted three-tier representation of one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoDocument {
    pub video_id: String,
    pub duration_s: f64,
    pub primary_fps: f64,
    /// Clip boundaries `t_0 .. t_N`, strictly increasing, `t_0 = 0`,
    /// `t_N = duration_s`. Clip `i` spans `[t_{i-1}, t_i)`.
    pub boundaries: Vec<f64>,
    pub clips: Vec<ClipRepresentation>,
    /// Snapshot of the configuration the document was built with.
    pub build_config: BuildConfig,
}

/// A single failed invariant: which type, which field, which rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub type_name: String,
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(type_name: &str, field: impl Into<String>, rule: impl Into<String>) -> Self {
        Self {
            type_name: type_name.to_string(),
            field: field.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}: {}", self.type_name, self.field, self.rule)
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIME_EPS
}

/// Check every invariant of the document model. An empty list means the
/// document is valid; violations are data, not failures.
pub fn validate_document(doc: &VideoDocument) -> Vec<Violation> {
    let mut out = Vec::new();
    let v = &mut out;

    if !(doc.duration_s.is_finite() && doc.duration_s > 0.0) {
        v.push(Violation::new(
            "VideoDocument",
            "duration_s",
            "must be finite and positive",
        ));
    }
    if !(doc.primary_fps.is_finite() && doc.primary_fps > 0.0) {
        v.push(Violation::new(
            "VideoDocument",
            "primary_fps",
            "must be finite and positive",
        ));
    }

    validate_boundaries(doc, v);

    if doc.clips.len() + 1 != doc.boundaries.len() {
        v.push(Violation::new(
            "VideoDocument",
            "clips",
            format!(
                "clip count {} must equal boundary count {} minus one",
                doc.clips.len(),
                doc.boundaries.len()
            ),
        ));
        return out; // per-clip checks would misindex
    }

    for (i, clip) in doc.clips.iter().enumerate() {
        validate_clip(doc, i, clip, v);
    }
    out
}

fn validate_boundaries(doc: &VideoDocument, v: &mut Vec<Violation>) {
    let b = &doc.boundaries;
    if b.len() < 2 {
        v.push(Violation::new(
            "VideoDocument",
            "boundaries",
            "must contain at least t0 and tN",
        ));
        return;
    }
    if b.iter().any(|t| !t.is_finite()) {
        v.push(Violation::new(
            "VideoDocument",
            "boundaries",
            "must be finite",
        ));
        return;
    }
    if b[0] != 0.0 {
        v.push(Violation::new(
            "VideoDocument",
            "boundaries",
            format!("t0 must equal 0 (got {})", b[0]),
        ));
    }
    if !close(*b.last().unwrap(), doc.duration_s) {
        v.push(Violation::new(
            "VideoDocument",
            "boundaries",
            format!(
                "tN must equal duration_s (got {} vs {})",
                b.last().unwrap(),
                doc.duration_s
            ),
        ));
    }
    for w in b.windows(2) {
        if w[1] <= w[0] {
            v.push(Violation::new(
                "VideoDocument",
                "boundaries",
                format!("must be strictly increasing (found {} then {})", w[0], w[1]),
            ));
            break;
        }
    }
}

fn validate_clip(doc: &VideoDocument, i: usize, clip: &ClipRepresentation, v: &mut Vec<Violation>) {
    let want = TimeInterval::new(doc.boundaries[i], doc.boundaries[i + 1]);
    let entry = &clip.timeline;

    if entry.clip_id != i + 1 {
        v.push(Violation::new(
            "TimelineEntry",
            "clip_id",
            format!("must be ordinal {} (got {})", i + 1, entry.clip_id),
        ));
    }
    if !(close(entry.interval.start_s, want.start_s) && close(entry.interval.end_s, want.end_s)) {
        v.push(Violation::new(
            "TimelineEntry",
            "interval",
            format!("must equal [t{i}, t{}) = {want}", i + 1),
        ));
    }
    if entry.summary.trim().is_empty() {
        v.push(Violation::new(
            "TimelineEntry",
            "summary",
            "must be non-empty",
        ));
    }
    let words = word_count(&entry.summary);
    if words > SUMMARY_WORD_LIMIT {
        v.push(Violation::new(
            "TimelineEntry",
            "summary",
            format!("word count {words} exceeds the {SUMMARY_WORD_LIMIT}-word limit"),
        ));
    }

    validate_subsegments(doc, clip, want, v);
}

fn validate_subsegments(
    doc: &VideoDocument,
    clip: &ClipRepresentation,
    clip_interval: TimeInterval,
    v: &mut Vec<Violation>,
) {
    let subs = &clip.subsegments;
    if subs.is_empty() {
        v.push(Violation::new(
            "ClipRepresentation",
            "subsegments",
            "must contain at least one sub-segment",
        ));
        return;
    }

    // Tiling: contiguous, non-overlapping, union equals the clip interval.
    if !close(subs[0].coarse.interval.start_s, clip_interval.start_s) {
        v.push(Violation::new(
            "ClipRepresentation",
            "subsegments",
            "first sub-segment must start at the clip start",
        ));
    }
    if !close(
        subs.last().unwrap().coarse.interval.end_s,
        clip_interval.end_s,
    ) {
        v.push(Violation::new(
            "ClipRepresentation",
            "subsegments",
            "last sub-segment must end at the clip end",
        ));
    }
    for w in subs.windows(2) {
        if !close(w[0].coarse.interval.end_s, w[1].coarse.interval.start_s) {
            v.push(Violation::new(
                "ClipRepresentation",
                "subsegments",
                "sub-segment intervals must be contiguous",
            ));
            break;
        }
    }

    // Quantizing both endpoints to the microsecond grid can shave up to one
    // quantum each off a duration, so the minimum check allows that much.
    let min_sub_s = doc.build_config.segmentation.sub_max_s - 2.0 * crate::canon::TIME_QUANTUM;
    for (k, sub) in subs.iter().enumerate() {
        let c = &sub.coarse;
        if c.subsegment_id != k + 1 {
            v.push(Violation::new(
                "CoarseBlock",
                "subsegment_id",
                format!("must be ordinal {} (got {})", k + 1, c.subsegment_id),
            ));
        }
        if subs.len() > 1 && c.interval.duration_s() < min_sub_s {
            v.push(Violation::new(
                "CoarseBlock",
                "interval",
                format!(
                    "duration {:.6} below the configured minimum {:.6}",
                    c.interval.duration_s(),
                    doc.build_config.segmentation.sub_max_s
                ),
            ));
        }
        if c.actions.is_empty() && !c.actions_sentinel {
            v.push(Violation::new(
                "CoarseBlock",
                "actions",
                "empty list requires the 'no action detected' sentinel flag",
            ));
        }
        if c.scenes.is_empty() && !c.scenes_sentinel {
            v.push(Violation::new(
                "CoarseBlock",
                "scenes",
                "empty list requires the 'no action detected' sentinel flag",
            ));
        }
        if c.objects.is_empty() && !c.objects_sentinel {
            v.push(Violation::new(
                "CoarseBlock",
                "objects",
                "empty list requires the 'no object detected' sentinel flag",
            ));
        }
        for rec in &c.objects {
            if rec.count < 1 {
                v.push(Violation::new(
                    "ObjectRecord",
                    "count",
                    format!("must be at least 1 for object '{}'", rec.name),
                ));
            }
        }

        validate_fine(doc, sub, v);
    }
}

fn validate_fine(doc: &VideoDocument, sub: &SubSegmentRep, v: &mut Vec<Violation>) {
    let interval = sub.coarse.interval;
    let expected = crate::builder::nominal_fine_timestamps(interval, doc.build_config.fine_fps);
    if sub.fine.len() != expected.len() {
        v.push(Violation::new(
            "SubSegmentRep",
            "fine",
            format!(
                "must hold {} fine pairs for {interval} at {} fps (got {})",
                expected.len(),
                doc.build_config.fine_fps,
                sub.fine.len()
            ),
        ));
    }
    let mut prev: Option<f64> = None;
    for pair in &sub.fine {
        let t = pair.frame.timestamp_s;
        if !(t >= interval.start_s - TIME_EPS && t < interval.end_s) {
            v.push(Violation::new(
                "FinePair",
                "frame.timestamp_s",
                format!("{t} outside the owning sub-segment {interval}"),
            ));
        }
        if let Some(p) = prev {
            if t <= p {
                v.push(Violation::new(
                    "SubSegmentRep",
                    "fine",
                    "fine timestamps must be strictly increasing",
                ));
            }
        }
        prev = Some(t);
        for rec in &pair.spatial {
            if rec.count < 1 {
                v.push(Violation::new(
                    "SpatialRecord",
                    "count",
                    format!("must be at least 1 for object '{}'", rec.name),
                ));
            }
        }
        if pair.spatial.is_empty() && !pair.sentinel {
            v.push(Violation::new(
                "FinePair",
                "spatial",
                "empty list requires the 'no object detected' sentinel flag",
            ));
        }
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::doc_with_boundaries;
    use super::*;

    #[test]
    fn well_formed_document_validates_clean() {
        let doc = doc_with_boundaries("vid", 900.0, &[0.0, 300.0, 900.0]);
        assert_eq!(validate_document(&doc), Vec::new());
    }

    #[test]
    fn overlong_summary_names_the_word_limit() {
        let mut doc = doc_with_boundaries("vid", 900.0, &[0.0, 300.0, 900.0]);
        doc.clips[0].timeline.summary = vec!["word"; 61].join(" ");
        let violations = validate_document(&doc);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].type_name, "TimelineEntry");
        assert_eq!(violations[0].field, "summary");
        assert!(violations[0].rule.contains("61"), "{}", violations[0]);
        assert!(violations[0].rule.contains("50"), "{}", violations[0]);
    }

    #[test]
    fn nonzero_first_boundary_is_flagged() {
        let mut doc = doc_with_boundaries("vid", 900.0, &[0.0, 300.0, 900.0]);
        doc.boundaries[0] = 5.0;
        let violations = validate_document(&doc);
        assert!(
            violations
                .iter()
                .any(|v| v.field == "boundaries" && v.rule.contains("t0 must equal 0")),
            "{violations:?}"
        );
    }

    #[test]
    fn empty_list_without_sentinel_is_flagged() {
        let mut doc = doc_with_boundaries("vid", 900.0, &[0.0, 300.0, 900.0]);
        doc.clips[0].subsegments[0].coarse.actions.clear();
        let violations = validate_document(&doc);
        assert!(violations.iter().any(|v| v.field == "actions"));

        doc.clips[0].subsegments[0].coarse.actions_sentinel = true;
        assert_eq!(validate_document(&doc), Vec::new());
    }

    #[test]
    fn fine_pair_outside_subsegment_is_flagged() {
        let mut doc = doc_with_boundaries("vid", 900.0, &[0.0, 900.0]);
        doc.clips[0].subsegments[0].fine[0].frame.timestamp_s = 899.0;
        let violations = validate_document(&doc);
        assert!(
            violations
                .iter()
                .any(|v| v.type_name == "FinePair" && v.field == "frame.timestamp_s"),
            "{violations:?}"
        );
    }

    #[test]
    fn clip_count_mismatch_short_circuits() {
        let mut doc = doc_with_boundaries("vid", 900.0, &[0.0, 300.0, 900.0]);
        doc.clips.pop();
        let violations = validate_document(&doc);
        assert_eq!(violations.len(), 1);
        assert!(violations[0].rule.contains("minus one"));
    }

    #[test]
    fn locator_convention() {
        assert_eq!(frame_locator("vid", 20.0), "vid/20000.jpg");
        assert_eq!(frame_locator("vid", 116.666667), "vid/116667.jpg");
    }
}
