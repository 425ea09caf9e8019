//! Event-boundary detection over frame-embedding series.
//!
//! Two methods produce the clip boundaries `t_0 .. t_N`: percentile-threshold
//! turning points on the consecutive-frame similarity signal, and kernel
//! temporal segmentation ([`kts_segment`]). Clips are then split into
//! equal-duration sub-segments.

mod io;
mod kts;

pub use io::{read_series, read_series_bytes, write_series_binary, write_series_text};
pub use kts::{gram_matrix, kts_changepoints_fixed, kts_cost_curve, kts_segment};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canon::quantize_s;
use crate::par;
use crate::repr::TimeInterval;

pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("series needs at least 2 frames (got {0})")]
    TooFewFrames(usize),
    #[error("timestamps must be strictly increasing (index {0})")]
    TimestampsNotIncreasing(usize),
    #[error("row {row} has L2 norm {norm}, expected 1 +/- {NORM_TOLERANCE}")]
    NotUnitNorm { row: usize, norm: f64 },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value at row {0}")]
    NonFinite(usize),
    #[error("fps must be finite and positive (got {0})")]
    BadFps(f64),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed series file: {0}")]
    Malformed(String),
}

#[derive(Debug, Error)]
pub enum SegError {
    #[error("signal is empty")]
    EmptySignal,
    #[error("percentile must lie in (0, 100) (got {0})")]
    BadPercentile(f64),
    #[error("non-finite entry in the gram matrix")]
    NonFiniteGram,
    #[error("invalid segmentation config: {0}")]
    BadConfig(String),
}

/// Timestamped unit-norm frame embeddings, row-major `n x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEmbeddingSeries {
    video_id: String,
    fps: f64,
    timestamps: Vec<f64>,
    vectors: Vec<f64>,
    dim: usize,
}

impl FrameEmbeddingSeries {
    /// Build a series, checking all invariants including unit norms.
    pub fn new(
        video_id: impl Into<String>,
        fps: f64,
        timestamps: Vec<f64>,
        vectors: Vec<f64>,
        dim: usize,
    ) -> Result<Self, SeriesError> {
        let series = Self::new_unnormalized(video_id, fps, timestamps, vectors, dim)?;
        for i in 0..series.len() {
            let norm = series.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(SeriesError::NotUnitNorm { row: i, norm });
            }
        }
        Ok(series)
    }

    /// Build a series skipping the unit-norm check. Structural invariants
    /// (length, ordering, finiteness) still hold.
    pub fn new_unnormalized(
        video_id: impl Into<String>,
        fps: f64,
        timestamps: Vec<f64>,
        vectors: Vec<f64>,
        dim: usize,
    ) -> Result<Self, SeriesError> {
        let n = timestamps.len();
        if n < 2 {
            return Err(SeriesError::TooFewFrames(n));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(SeriesError::BadFps(fps));
        }
        if vectors.len() != n * dim || dim == 0 {
            return Err(SeriesError::LengthMismatch {
                expected: n * dim,
                got: vectors.len(),
            });
        }
        for (i, w) in timestamps.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(SeriesError::TimestampsNotIncreasing(i + 1));
            }
        }
        for (i, chunk) in vectors.chunks(dim).enumerate() {
            if chunk.iter().any(|x| !x.is_finite()) {
                return Err(SeriesError::NonFinite(i));
            }
        }
        Ok(Self {
            video_id: video_id.into(),
            fps,
            timestamps,
            vectors,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        false // n >= 2 by construction
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    /// Nominal covered duration: one frame period past the last timestamp.
    pub fn duration_s(&self) -> f64 {
        quantize_s(self.timestamps[self.len() - 1] + 1.0 / self.fps)
    }

    /// Stable content fingerprint, used by build checkpoints.
    pub fn fingerprint(&self) -> u64 {
        let mut h = crate::hash::Fnv1a::new();
        h.update(self.video_id.as_bytes());
        h.update(&self.fps.to_le_bytes());
        h.update(&(self.dim as u64).to_le_bytes());
        for t in &self.timestamps {
            h.update(&t.to_le_bytes());
        }
        for x in &self.vectors {
            h.update(&x.to_le_bytes());
        }
        h.finish()
    }
}

/// Consecutive-frame similarity values at pair-midpoint timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilaritySignal {
    /// `values[i] = dot(v_i, v_{i+1})`, cosine for unit-norm rows.
    pub values: Vec<f64>,
    /// Midpoint of the two frames' timestamps.
    pub timestamps: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentationMethod {
    Percentile,
    Kts,
}

impl std::fmt::Display for SegmentationMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SegmentationMethod::Percentile => write!(f, "percentile"),
            SegmentationMethod::Kts => write!(f, "kts"),
        }
    }
}

impl std::str::FromStr for SegmentationMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "percentile" => Ok(SegmentationMethod::Percentile),
            "kts" => Ok(SegmentationMethod::Kts),
            other => Err(format!("unknown segmentation method '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    pub method: SegmentationMethod,
    /// Percentile of the similarity distribution used as the turning-point
    /// threshold, in percent.
    pub percentile_q: f64,
    /// Minimum clip duration in seconds.
    pub min_clip_s: f64,
    /// Maximum sub-segment duration in seconds; equal-splitting guarantees
    /// every piece is at least this long when the clip allows it.
    pub sub_max_s: f64,
    pub kts_penalty: f64,
    pub kts_max_changepoints: Option<usize>,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            method: SegmentationMethod::Percentile,
            percentile_q: 2.0,
            min_clip_s: 300.0,
            sub_max_s: 100.0,
            kts_penalty: 1.0,
            kts_max_changepoints: None,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<(), SegError> {
        if !(self.percentile_q > 0.0 && self.percentile_q < 100.0) {
            return Err(SegError::BadPercentile(self.percentile_q));
        }
        if !(self.min_clip_s > self.sub_max_s && self.sub_max_s > 0.0) {
            return Err(SegError::BadConfig(format!(
                "need min_clip_s > sub_max_s > 0 (got {} and {})",
                self.min_clip_s, self.sub_max_s
            )));
        }
        if !(self.kts_penalty >= 0.0 && self.kts_penalty.is_finite()) {
            return Err(SegError::BadConfig(format!(
                "kts_penalty must be a non-negative real (got {})",
                self.kts_penalty
            )));
        }
        Ok(())
    }
}

/// Dispatch to the configured segmentation method.
pub fn segment_series(
    series: &FrameEmbeddingSeries,
    config: &SegmentationConfig,
) -> Result<Vec<f64>, SegError> {
    config.validate()?;
    match config.method {
        SegmentationMethod::Percentile => {
            let signal = consecutive_similarity(series);
            let threshold = percentile_threshold(&signal, config.percentile_q)?;
            Ok(detect_turning_points(
                &signal,
                threshold,
                config.min_clip_s,
                series.duration_s(),
            ))
        }
        SegmentationMethod::Kts => kts_segment(series, config),
    }
}

/// Dot product of each consecutive row pair; cosine similarity since rows
/// are unit-norm.
pub fn consecutive_similarity(series: &FrameEmbeddingSeries) -> SimilaritySignal {
    let n = series.len();
    let values = par::map_range(n - 1, |i| {
        series
            .row(i)
            .iter()
            .zip(series.row(i + 1))
            .map(|(a, b)| a * b)
            .sum::<f64>()
    });
    let timestamps = series
        .timestamps
        .windows(2)
        .map(|w| (w[0] + w[1]) / 2.0)
        .collect();
    SimilaritySignal { values, timestamps }
}

/// Nearest-rank percentile: sort ascending and take the element at index
/// `ceil(q/100 * m) - 1`. No interpolation.
pub fn percentile_threshold(signal: &SimilaritySignal, q: f64) -> Result<f64, SegError> {
    percentile_of(&signal.values, q)
}

pub(crate) fn percentile_of(values: &[f64], q: f64) -> Result<f64, SegError> {
    if values.is_empty() {
        return Err(SegError::EmptySignal);
    }
    if !(q > 0.0 && q < 100.0) {
        return Err(SegError::BadPercentile(q));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let rank = (q / 100.0 * m as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, m) - 1])
}

/// Detect clip boundaries from sub-threshold local minima of the similarity
/// signal.
///
/// Candidates are accepted greedily in ascending similarity order (deepest
/// scene change wins conflicts); a candidate within `min_clip_s` of an
/// already-accepted boundary, or of the video ends, is rejected. The result
/// is sorted and bracketed by `0` and `duration_s`.
pub fn detect_turning_points(
    signal: &SimilaritySignal,
    threshold: f64,
    min_clip_s: f64,
    duration_s: f64,
) -> Vec<f64> {
    let duration_s = quantize_s(duration_s);
    if duration_s < 2.0 * min_clip_s {
        return vec![0.0, duration_s];
    }

    let m = signal.values.len();
    let mut candidates: Vec<(f64, f64)> = (0..m)
        .filter(|&i| {
            let v = signal.values[i];
            let left_ok = i == 0 || v <= signal.values[i - 1];
            let right_ok = i + 1 == m || v <= signal.values[i + 1];
            v < threshold && left_ok && right_ok
        })
        .map(|i| (signal.values[i], signal.timestamps[i]))
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let mut accepted: Vec<f64> = Vec::new();
    for (_, ts) in candidates {
        if ts < min_clip_s || duration_s - ts < min_clip_s {
            continue;
        }
        if accepted.iter().any(|a| (a - ts).abs() < min_clip_s) {
            continue;
        }
        accepted.push(ts);
    }
    accepted.sort_by(f64::total_cmp);

    let mut boundaries = Vec::with_capacity(accepted.len() + 2);
    boundaries.push(0.0);
    boundaries.extend(accepted.into_iter().map(quantize_s));
    boundaries.push(duration_s);
    boundaries
}

/// Split a clip into `k = max(1, floor(D / sub_max_s))` equal sub-intervals.
/// Each piece has duration `D/k`, which lies in `[sub_max_s, 2*sub_max_s)`
/// whenever `D >= sub_max_s`.
pub fn split_subsegments(clip: TimeInterval, sub_max_s: f64) -> Vec<TimeInterval> {
    let duration = clip.duration_s();
    let k = ((duration / sub_max_s).floor() as usize).max(1);
    let mut bounds = Vec::with_capacity(k + 1);
    bounds.push(clip.start_s);
    for j in 1..k {
        bounds.push(quantize_s(clip.start_s + duration * j as f64 / k as f64));
    }
    bounds.push(clip.end_s);
    bounds
        .windows(2)
        .map(|w| TimeInterval::new(w[0], w[1]))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileEntry {
    pub q: u8,
    pub value: f64,
}

/// Distribution summary of a similarity signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalReport {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    /// 50 equal-width bins over `[min, max]`.
    pub histogram: Vec<u64>,
    pub bin_width: f64,
    pub percentiles: Vec<PercentileEntry>,
    /// Number of values strictly below the 2nd-percentile threshold.
    pub below_p2: usize,
}

pub const REPORT_BINS: usize = 50;
pub const REPORT_PERCENTILES: [u8; 7] = [1, 2, 5, 25, 50, 75, 95];

pub fn signal_report(signal: &SimilaritySignal) -> Result<SignalReport, SegError> {
    if signal.values.is_empty() {
        return Err(SegError::EmptySignal);
    }
    let min = signal.values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = signal
        .values
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let bin_width = (max - min) / REPORT_BINS as f64;
    let mut histogram = vec![0u64; REPORT_BINS];
    for &v in &signal.values {
        let idx = if bin_width > 0.0 {
            (((v - min) / bin_width) as usize).min(REPORT_BINS - 1)
        } else {
            0
        };
        histogram[idx] += 1;
    }
    let percentiles = REPORT_PERCENTILES
        .iter()
        .map(|&q| {
            Ok(PercentileEntry {
                q,
                value: percentile_of(&signal.values, f64::from(q))?,
            })
        })
        .collect::<Result<Vec<_>, SegError>>()?;
    let p2 = percentiles[1].value;
    let below_p2 = signal.values.iter().filter(|&&v| v < p2).count();
    Ok(SignalReport {
        count: signal.values.len(),
        min,
        max,
        histogram,
        bin_width,
        percentiles,
        below_p2,
    })
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// Unit-norm series with one distinct constant direction per planted
    /// regime, plus optional per-frame noise. `changes` are the first frame
    /// indices of each new regime.
    pub fn planted_series(
        n: usize,
        dim: usize,
        changes: &[usize],
        noise: f64,
        seed: u64,
        fps: f64,
    ) -> FrameEmbeddingSeries {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let regime_count = changes.len() + 1;
        // Orthogonal basis directions keep regimes well separated.
        assert!(regime_count <= dim, "need dim >= number of regimes");
        let mut vectors = Vec::with_capacity(n * dim);
        let mut regime = 0usize;
        for i in 0..n {
            if regime < changes.len() && i >= changes[regime] {
                regime += 1;
            }
            let mut v = vec![0.0f64; dim];
            v[regime] = 1.0;
            for x in v.iter_mut() {
                *x += noise * rng.random_range(-1.0..1.0);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            vectors.extend(v.into_iter().map(|x| x / norm));
        }
        let timestamps = (0..n).map(|i| i as f64 / fps).collect();
        FrameEmbeddingSeries::new("planted", fps, timestamps, vectors, dim).unwrap()
    }
}
