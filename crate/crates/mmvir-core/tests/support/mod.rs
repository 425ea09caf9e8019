//! Shared generators and the invariant properties behind criterion 7. Each
//! property takes a seeded RNG and checks one documented invariant on one
//! generated case.

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::sync::atomic::{AtomicU32, Ordering};
use std::time::Duration;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use mmvir_core::builder::{
    build_document, count_caption_calls, expected_caption_calls, nominal_fine_timestamps,
    BuildConfig, FrameTable,
};
use mmvir_core::canon::quantize_s;
use mmvir_core::eval::{
    meteor, overlap_at_k, precision_at_k, rouge2, rouge_l, summary_report, OverlapMode, PrfScores,
    RetrievalCase, SummaryPair,
};
use mmvir_core::gateway::{
    AnswerRequest, CaptionRequest, ContextBlock, EmbedRequest, GatewayConfig, GatewayError,
    HttpGateway, HttpReply, HttpTransport, ModelGateway, OfflineGateway,
};
use mmvir_core::repr::{
    frame_locator, validate_document, ActionRecord, ClipRepresentation, CoarseBlock, FinePair,
    FrameRef, ObjectRecord, SceneRecord, SpatialRecord, SubSegmentRep, TimeInterval,
    TimelineEntry, VideoDocument,
};
use mmvir_core::retrieval::{
    expand, rank_entries, summarize_context, BlockPayload, ExpandMode, IndexEntry, RetrievalHit,
    RetrievalResult,
};
use mmvir_core::segmentation::{
    detect_turning_points, gram_matrix, kts_changepoints_fixed, kts_cost_curve, split_subsegments,
    FrameEmbeddingSeries, SegmentationConfig, SegmentationMethod, SimilaritySignal,
};

/// Unit-norm series with one orthogonal direction per regime plus uniform
/// noise; `changes` hold the first frame index of each new regime.
pub fn planted_series(
    n: usize,
    dim: usize,
    changes: &[usize],
    noise: f64,
    seed: u64,
    fps: f64,
) -> FrameEmbeddingSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    assert!(changes.len() + 1 <= dim, "need dim >= regime count");
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

/// One randomized segmentation scenario: 2 to 5 regimes, n <= 500, planted
/// changes at least 25 frames apart and from the ends, noise sigma <= 0.02.
pub struct PlantedCase {
    pub n: usize,
    pub changes: Vec<usize>,
    pub noise: f64,
    pub seed: u64,
}

impl PlantedCase {
    pub fn random(rng: &mut ChaCha8Rng, seed: u64) -> Self {
        let regimes = rng.random_range(2..=5usize);
        let n = rng.random_range(220..=500usize);
        let min_gap = 25usize;
        let changes = loop {
            let mut c: Vec<usize> = (0..regimes - 1)
                .map(|_| rng.random_range(min_gap..n - min_gap))
                .collect();
            c.sort_unstable();
            c.dedup();
            let spaced = c.len() == regimes - 1
                && c.windows(2).all(|w| w[1] - w[0] >= min_gap);
            if spaced {
                break c;
            }
        };
        Self {
            n,
            changes,
            noise: rng.random_range(0.005..=0.02),
            seed,
        }
    }

    pub fn series(&self) -> FrameEmbeddingSeries {
        planted_series(self.n, 8, &self.changes, self.noise, self.seed, 0.5)
    }
}

/// Structurally valid document over the given boundaries, built from the
/// default configuration's splitting and fine-sampling rules.
pub fn fixture_doc(video_id: &str, boundaries: &[f64]) -> VideoDocument {
    let cfg = BuildConfig::default();
    let clips = boundaries
        .windows(2)
        .enumerate()
        .map(|(i, w)| fixture_clip(video_id, i + 1, TimeInterval::new(w[0], w[1]), &cfg))
        .collect();
    let doc = VideoDocument {
        video_id: video_id.to_string(),
        duration_s: *boundaries.last().unwrap(),
        primary_fps: cfg.primary_fps,
        boundaries: boundaries.to_vec(),
        clips,
        build_config: cfg,
    };
    assert_eq!(validate_document(&doc), Vec::new(), "fixture must be valid");
    doc
}

fn fixture_clip(
    video_id: &str,
    clip_id: usize,
    interval: TimeInterval,
    cfg: &BuildConfig,
) -> ClipRepresentation {
    let subsegments = split_subsegments(interval, cfg.segmentation.sub_max_s)
        .into_iter()
        .enumerate()
        .map(|(k, sub)| fixture_subsegment(video_id, k + 1, sub, cfg))
        .collect();
    ClipRepresentation {
        timeline: TimelineEntry {
            clip_id,
            interval,
            summary: format!("A person works through activity {clip_id} in one room."),
            truncated: false,
        },
        subsegments,
    }
}

fn fixture_subsegment(
    video_id: &str,
    subsegment_id: usize,
    interval: TimeInterval,
    cfg: &BuildConfig,
) -> SubSegmentRep {
    let fine = nominal_fine_timestamps(interval, cfg.fine_fps)
        .into_iter()
        .map(|t| FinePair {
            frame: FrameRef {
                timestamp_s: quantize_s(t),
                source: frame_locator(video_id, t),
            },
            spatial: vec![SpatialRecord {
                name: "table".into(),
                count: 1,
                attributes: vec!["wooden".into()],
                relationships: vec!["near the wall".into()],
                extras: BTreeMap::new(),
            }],
            raw_text: format!("a table near the wall at {t:.0}s"),
            sentinel: false,
        })
        .collect();
    SubSegmentRep {
        coarse: CoarseBlock {
            subsegment_id,
            interval,
            actions: vec![ActionRecord {
                description: "arranging items".into(),
                extras: BTreeMap::new(),
            }],
            scenes: vec![SceneRecord {
                description: "A person arranges items".into(),
                setting: "Room".into(),
                action: "arranging".into(),
                extras: BTreeMap::new(),
            }],
            objects: vec![ObjectRecord {
                name: "table".into(),
                count: 1,
                attributes: vec!["wooden".into()],
                extras: BTreeMap::new(),
            }],
            actions_sentinel: false,
            scenes_sentinel: false,
            objects_sentinel: false,
        },
        fine,
    }
}

/// Random small build scenario shared by the builder/repr properties.
fn random_build(rng: &mut ChaCha8Rng) -> (FrameEmbeddingSeries, FrameTable, BuildConfig) {
    let n = rng.random_range(10..=40usize);
    let change_count = rng.random_range(0..=2usize).min(n / 6);
    let mut changes: Vec<usize> = (0..change_count)
        .map(|_| rng.random_range(3..n - 3))
        .collect();
    changes.sort_unstable();
    changes.dedup();
    let series = planted_series(n, 4, &changes, 0.01, rng.random(), 0.5);

    // Config values mirror user input: decimals on the persistence grid.
    let sub_max_s = quantize_s(rng.random_range(4.0..=10.0f64));
    let min_clip_s = quantize_s(sub_max_s + rng.random_range(1.0..=20.0f64));
    let method = if rng.random_bool(0.25) {
        SegmentationMethod::Kts
    } else {
        SegmentationMethod::Percentile
    };
    let cfg = BuildConfig {
        segmentation: SegmentationConfig {
            method,
            percentile_q: *[2.0, 5.0, 10.0].choose(rng).unwrap(),
            min_clip_s,
            sub_max_s,
            kts_penalty: 1.0,
            kts_max_changepoints: Some(4),
        },
        primary_fps: 0.5,
        fine_fps: *[0.05, 0.1, 0.2].choose(rng).unwrap(),
        caption_parallelism: rng.random_range(1..=3),
        parse_retries: 2,
        timeline_frame_cap: rng.random_range(4..=64),
    };
    let frames = FrameTable::from_convention(series.video_id(), series.timestamps());
    (series, frames, cfg)
}

fn build_random_doc(
    rng: &mut ChaCha8Rng,
) -> (FrameEmbeddingSeries, BuildConfig, OfflineGateway, VideoDocument) {
    let (series, frames, cfg) = random_build(rng);
    let gateway = OfflineGateway::with_dim(32);
    let doc = build_document(&series, &frames, &cfg, &gateway, None).unwrap();
    (series, cfg, gateway, doc)
}

const EPS: f64 = 1e-9;

// ---- repr ----

/// Clips tile [0, T) exactly; sub-segments tile each clip; every fine pair
/// sits inside its sub-segment, every sub-segment inside its clip.
pub fn prop_doc_tiling(rng: &mut ChaCha8Rng) {
    let (series, _, _, doc) = build_random_doc(rng);
    assert_eq!(validate_document(&doc), Vec::new());

    assert_eq!(doc.boundaries[0], 0.0);
    assert!((doc.boundaries.last().unwrap() - series.duration_s()).abs() < EPS);
    for (i, clip) in doc.clips.iter().enumerate() {
        let want = TimeInterval::new(doc.boundaries[i], doc.boundaries[i + 1]);
        assert!((clip.timeline.interval.start_s - want.start_s).abs() < EPS);
        assert!((clip.timeline.interval.end_s - want.end_s).abs() < EPS);

        let subs = &clip.subsegments;
        assert!((subs[0].coarse.interval.start_s - want.start_s).abs() < EPS);
        assert!(
            (subs.last().unwrap().coarse.interval.end_s - want.end_s).abs() < EPS
        );
        for w in subs.windows(2) {
            assert_eq!(w[0].coarse.interval.end_s, w[1].coarse.interval.start_s);
        }
        for sub in subs {
            let si = sub.coarse.interval;
            assert!(si.start_s >= want.start_s - EPS && si.end_s <= want.end_s + EPS);
            for pair in &sub.fine {
                assert!(
                    si.contains(pair.frame.timestamp_s),
                    "fine {} outside {}",
                    pair.frame.timestamp_s,
                    si
                );
            }
        }
    }
}

/// Two serializations of one document are byte-identical and parsing one
/// back yields a structurally equal document.
pub fn prop_persistence_canonical(rng: &mut ChaCha8Rng) {
    let (_, _, _, doc) = build_random_doc(rng);
    let first = mmvir_core::repr::document_to_string(&doc).unwrap();
    let second = mmvir_core::repr::document_to_string(&doc).unwrap();
    assert_eq!(first, second);
    let reloaded = mmvir_core::repr::document_from_str(&first).unwrap();
    assert_eq!(reloaded, doc);
    assert_eq!(
        mmvir_core::repr::document_to_string(&reloaded).unwrap(),
        first
    );
}

// ---- segmentation ----

/// Boundaries are strictly increasing, bracketed by 0 and the duration, and
/// interior gaps respect min_clip_s outside the degenerate single-clip case.
pub fn prop_turning_points(rng: &mut ChaCha8Rng) {
    let m = rng.random_range(1..=200usize);
    let values: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let timestamps: Vec<f64> = (0..m).map(|i| 1.0 + 2.0 * i as f64).collect();
    let duration = 2.0 * (m as f64) + rng.random_range(0.0..5.0);
    let threshold = rng.random_range(-1.0..1.0);
    let min_clip = rng.random_range(0.5..50.0);

    let signal = SimilaritySignal { values, timestamps };
    let boundaries = detect_turning_points(&signal, threshold, min_clip, duration);

    assert!(boundaries.len() >= 2);
    assert_eq!(boundaries[0], 0.0);
    assert!((boundaries.last().unwrap() - quantize_s(duration)).abs() < EPS);
    for w in boundaries.windows(2) {
        assert!(w[1] > w[0], "not strictly increasing: {boundaries:?}");
    }
    if boundaries.len() > 2 {
        for w in boundaries.windows(2) {
            assert!(
                w[1] - w[0] >= min_clip - 2e-6,
                "gap {} under min_clip {min_clip}: {boundaries:?}",
                w[1] - w[0]
            );
        }
    }
}

/// With penalty 0, m = n-1 costs zero, and the optimal cost never rises
/// with more change points.
pub fn prop_kts_cost_curve(rng: &mut ChaCha8Rng) {
    let n = rng.random_range(4..=20usize);
    let change = rng.random_range(1..n);
    let series = planted_series(n, 4, &[change], rng.random_range(0.0..0.05), rng.random(), 0.5);
    let curve = kts_cost_curve(&series, n - 1).unwrap();
    assert!(curve[n - 1].abs() < 1e-9, "full split cost {}", curve[n - 1]);
    for w in curve.windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "curve rose: {curve:?}");
    }
}

/// Applying one dimension permutation to every frame leaves the gram matrix
/// (up to rounding) and the segmentation unchanged.
pub fn prop_permutation(rng: &mut ChaCha8Rng) {
    let n = rng.random_range(6..=24usize);
    let dim = rng.random_range(4..=8usize);
    let change = rng.random_range(2..n - 1);
    let series = planted_series(n, dim, &[change], 0.02, rng.random(), 0.5);

    let mut perm: Vec<usize> = (0..dim).collect();
    perm.shuffle(rng);
    let permuted: Vec<f64> = (0..n)
        .flat_map(|i| {
            let row = series.row(i).to_vec();
            perm.iter().map(move |&p| row[p]).collect::<Vec<_>>()
        })
        .collect();
    let permuted_series = FrameEmbeddingSeries::new(
        "perm",
        series.fps(),
        series.timestamps().to_vec(),
        permuted,
        dim,
    )
    .unwrap();

    let a = gram_matrix(&series).unwrap();
    let b = gram_matrix(&permuted_series).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
    assert_eq!(
        kts_changepoints_fixed(&series, 1).unwrap(),
        kts_changepoints_fixed(&permuted_series, 1).unwrap()
    );
}

/// split_subsegments tiles its clip exactly with k = max(1, floor(D/s))
/// pieces, none shorter than s when D >= s.
pub fn prop_split(rng: &mut ChaCha8Rng) {
    let start = quantize_s(rng.random_range(0.0..1000.0));
    let duration = rng.random_range(0.1..500.0);
    let end = quantize_s(start + duration);
    let clip = TimeInterval::new(start, end);
    let sub_max = rng.random_range(1.0..200.0);

    let subs = split_subsegments(clip, sub_max);
    let d = clip.duration_s();
    let expected_k = ((d / sub_max).floor() as usize).max(1);
    assert_eq!(subs.len(), expected_k);
    assert_eq!(subs[0].start_s, clip.start_s);
    assert_eq!(subs.last().unwrap().end_s, clip.end_s);
    for w in subs.windows(2) {
        assert_eq!(w[0].end_s, w[1].start_s);
    }
    if d >= sub_max {
        for sub in &subs {
            assert!(
                sub.duration_s() >= sub_max - 3e-6,
                "piece {} under sub_max {sub_max}",
                sub.duration_s()
            );
        }
    }
}

// ---- gateway ----

const WORDS: [&str; 24] = [
    "kitchen", "garden", "table", "kettle", "dog", "person", "walks", "cooks", "cleans", "opens",
    "closes", "red", "blue", "small", "large", "door", "window", "plant", "bag", "chair", "floor",
    "wall", "light", "tool",
];

fn random_text(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(1..=12usize);
    (0..len)
        .map(|_| *WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Same request, byte-identical response, across gateway instances.
pub fn prop_mock_purity(rng: &mut ChaCha8Rng) {
    let a = OfflineGateway::with_dim(64);
    let b = OfflineGateway::with_dim(64);

    let embed = EmbedRequest::text(random_text(rng));
    assert_eq!(a.embed(&embed).unwrap(), b.embed(&embed).unwrap());

    let caption = CaptionRequest {
        frames: (0..rng.random_range(1..=4usize))
            .map(|i| format!("vid/{}.jpg", i * 2000))
            .collect(),
        prompt: random_text(rng),
        max_tokens: 64,
    };
    assert_eq!(a.caption(&caption).unwrap(), b.caption(&caption).unwrap());

    let with_options = rng.random_bool(0.5);
    let answer = AnswerRequest {
        context: vec![
            ContextBlock::Text(random_text(rng)),
            ContextBlock::Frame("vid/0.jpg".into()),
        ],
        question: random_text(rng),
        options: with_options.then(|| (0..3).map(|_| random_text(rng)).collect()),
    };
    assert_eq!(a.answer(&answer).unwrap(), b.answer(&answer).unwrap());
}

/// The gateway records prompts and questions exactly as sent.
pub fn prop_prompt_immutability(rng: &mut ChaCha8Rng) {
    let gateway = OfflineGateway::with_dim(32);
    let prompt = format!("{}\n  trailing  spaces  ", random_text(rng));
    gateway
        .caption(&CaptionRequest {
            frames: vec!["vid/0.jpg".into()],
            prompt: prompt.clone(),
            max_tokens: 32,
        })
        .unwrap();
    let question = random_text(rng);
    gateway
        .answer(&AnswerRequest {
            context: vec![ContextBlock::Text(random_text(rng))],
            question: question.clone(),
            options: None,
        })
        .unwrap();
    let log = gateway.call_log();
    assert_eq!(log[0].detail, prompt);
    assert_eq!(log[1].detail, question);
}

struct AlwaysFailTransport {
    calls: AtomicU32,
    as_status: bool,
}

impl HttpTransport for AlwaysFailTransport {
    fn post(
        &self,
        _url: &str,
        _token: Option<&str>,
        _body: &str,
        _timeout: Duration,
    ) -> Result<HttpReply, String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.as_status {
            Ok(HttpReply {
                status: 503,
                body: "unavailable".into(),
            })
        } else {
            Err("connection refused".into())
        }
    }
}

/// Exactly min(attempts, max_retries + 1) requests go out on persistent
/// failure, and the call log records that count.
pub fn prop_retry_count(rng: &mut ChaCha8Rng) {
    let max_retries = rng.random_range(0..=4u32);
    let transport = AlwaysFailTransport {
        calls: AtomicU32::new(0),
        as_status: rng.random_bool(0.5),
    };
    let config = GatewayConfig {
        offline: false,
        embed_url: Some("http://embed.test".into()),
        caption_url: Some("http://caption.test".into()),
        answer_url: Some("http://answer.test".into()),
        max_retries,
        backoff_base_s: 0.0,
        ..GatewayConfig::default()
    };
    let gateway = HttpGateway::with_transport(config, transport).unwrap();
    let err = gateway
        .caption(&CaptionRequest {
            frames: vec!["f".into()],
            prompt: "p".into(),
            max_tokens: 8,
        })
        .unwrap_err();
    match err {
        GatewayError::Transport { attempts, .. } => assert_eq!(attempts, max_retries + 1),
        other => panic!("expected transport error, got {other:?}"),
    }
    let log = gateway.call_log();
    assert_eq!(log[0].attempts, max_retries + 1);
}

// ---- builder ----

/// Rebuilding with the offline gateway is byte-for-byte reproducible.
pub fn prop_rebuild_reproducible(rng: &mut ChaCha8Rng) {
    let (series, frames, cfg) = random_build(rng);
    let a = build_document(&series, &frames, &cfg, &OfflineGateway::with_dim(32), None).unwrap();
    let b = build_document(&series, &frames, &cfg, &OfflineGateway::with_dim(32), None).unwrap();
    assert_eq!(
        mmvir_core::repr::document_to_string(&a).unwrap(),
        mmvir_core::repr::document_to_string(&b).unwrap()
    );
}

/// sum(M_k) equals the nominal fine-grid count and every fine timestamp is
/// a primary-sample timestamp.
pub fn prop_fine_grid(rng: &mut ChaCha8Rng) {
    let (series, cfg, _, doc) = build_random_doc(rng);
    let primary: HashSet<u64> = series
        .timestamps()
        .iter()
        .map(|&t| quantize_s(t).to_bits())
        .collect();
    let mut total = 0usize;
    let mut expected = 0usize;
    for clip in &doc.clips {
        for sub in &clip.subsegments {
            total += sub.fine.len();
            expected += nominal_fine_timestamps(sub.coarse.interval, cfg.fine_fps).len();
            for pair in &sub.fine {
                assert!(
                    primary.contains(&pair.frame.timestamp_s.to_bits()),
                    "fine timestamp {} is not a primary sample",
                    pair.frame.timestamp_s
                );
            }
        }
    }
    assert_eq!(total, expected);
}

/// The builder issues exactly 1 timeline call per clip, 3 coarse calls per
/// sub-segment, and M_k spatial calls per sub-segment.
pub fn prop_call_counts(rng: &mut ChaCha8Rng) {
    let (_, _, gateway, doc) = build_random_doc(rng);
    assert_eq!(
        count_caption_calls(&gateway.call_log()),
        expected_caption_calls(&doc)
    );
}

// ---- retrieval ----

fn random_entries(rng: &mut ChaCha8Rng, n: usize) -> Vec<IndexEntry> {
    (0..n)
        .map(|i| IndexEntry {
            video_id: format!("v{}", rng.random_range(0..3)),
            clip_id: i + 1,
            interval: TimeInterval::new(100.0 * i as f64, 100.0 * (i + 1) as f64),
            summary: random_text(rng),
        })
        .collect()
}

/// The ranking at a smaller k is a prefix of the ranking at a larger k.
pub fn prop_rank_prefix(rng: &mut ChaCha8Rng) {
    let n = rng.random_range(5..=80usize);
    let entries = random_entries(rng, n);
    // Coarse score grid to exercise tie handling too.
    let scores: Vec<f64> = (0..n)
        .map(|_| rng.random_range(0..=64) as f64 / 64.0)
        .collect();
    let k1 = rng.random_range(1..=n);
    let k2 = rng.random_range(k1..=n + 5);
    let small = rank_entries(&entries, &scores, k1);
    let large = rank_entries(&entries, &scores, k2);
    assert_eq!(small[..], large[..small.len()]);
}

/// Scaling every score by a positive power of two (exact in floats) leaves
/// the ranking unchanged.
pub fn prop_scale_invariance(rng: &mut ChaCha8Rng) {
    let n = rng.random_range(3..=60usize);
    let entries = random_entries(rng, n);
    let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let exponent = rng.random_range(-20..=20i32);
    let factor = 2.0f64.powi(exponent);
    let scaled: Vec<f64> = scores.iter().map(|s| s * factor).collect();
    let k = rng.random_range(1..=n);
    assert_eq!(
        rank_entries(&entries, &scores, k),
        rank_entries(&entries, &scaled, k)
    );
}

/// expand never emits a block from a non-retrieved clip; summarize context
/// holds exactly the timeline summaries in clip order.
pub fn prop_expand_exclusivity(rng: &mut ChaCha8Rng) {
    let clip_count = rng.random_range(2..=8usize);
    let boundaries: Vec<f64> = (0..=clip_count).map(|i| 150.0 * i as f64).collect();
    let doc = fixture_doc("vid", &boundaries);
    let docs = vec![doc];

    let mut picked: Vec<usize> = (1..=clip_count).collect();
    picked.shuffle(rng);
    picked.truncate(rng.random_range(1..=clip_count));
    let result = RetrievalResult {
        hits: picked
            .iter()
            .map(|&clip_id| RetrievalHit {
                entry: clip_id - 1,
                video_id: "vid".into(),
                clip_id,
                score: rng.random_range(0.0..1.0),
            })
            .collect(),
        k: picked.len(),
    };
    let picked_set: HashSet<usize> = picked.iter().copied().collect();

    for mode in [ExpandMode::Hybrid, ExpandMode::TextOnly, ExpandMode::VisionOnly] {
        let ctx = expand(&docs, &result, mode).unwrap();
        for block in &ctx.blocks {
            assert!(picked_set.contains(&block.clip_id), "foreign clip in context");
            match (&block.payload, mode) {
                (BlockPayload::Frame(_), ExpandMode::TextOnly) => {
                    panic!("frame block in text-only mode")
                }
                (p, ExpandMode::VisionOnly) if !matches!(p, BlockPayload::Frame(_)) => {
                    panic!("text block in vision-only mode")
                }
                _ => {}
            }
        }
        for w in ctx.blocks.windows(2) {
            assert!(w[0].timestamp_s <= w[1].timestamp_s, "not in temporal order");
        }
    }

    let ctx = summarize_context(&docs[0]);
    assert_eq!(ctx.len(), docs[0].clips.len());
    for (i, block) in ctx.iter().enumerate() {
        match block {
            ContextBlock::Text(text) => assert_eq!(text, &docs[0].clips[i].timeline.summary),
            other => panic!("summarize emitted {other:?}"),
        }
    }
}

// ---- eval ----

fn assert_bounded(scores: PrfScores) {
    for v in [scores.precision, scores.recall, scores.f1] {
        assert!((0.0..=1.0 + 1e-12).contains(&v), "out of range: {v}");
    }
}

/// ROUGE/METEOR stay in [0,1]; swapping candidate and reference exchanges
/// precision and recall for both ROUGE variants.
pub fn prop_metric_bounds(rng: &mut ChaCha8Rng) {
    let a = random_text(rng);
    let b = if rng.random_bool(0.1) {
        String::new()
    } else {
        random_text(rng)
    };
    let forward2 = rouge2(&a, &b);
    let backward2 = rouge2(&b, &a);
    assert_bounded(forward2);
    assert_eq!(forward2.precision, backward2.recall);
    assert_eq!(forward2.recall, backward2.precision);
    assert!((forward2.f1 - backward2.f1).abs() < 1e-12);

    let forward_l = rouge_l(&a, &b);
    let backward_l = rouge_l(&b, &a);
    assert_bounded(forward_l);
    assert_eq!(forward_l.precision, backward_l.recall);
    assert_eq!(forward_l.recall, backward_l.precision);

    let m = meteor(&a, &b);
    assert!((0.0..=1.0).contains(&m), "meteor {m}");
}

fn random_cases(rng: &mut ChaCha8Rng) -> Vec<RetrievalCase> {
    (0..rng.random_range(1..=20usize))
        .map(|i| {
            let retrieved = (0..rng.random_range(1..=6usize))
                .map(|_| {
                    let s: f64 = rng.random_range(0.0..900.0);
                    TimeInterval::new(s, s + rng.random_range(5.0..200.0))
                })
                .collect();
            let gs: f64 = rng.random_range(0.0..800.0);
            RetrievalCase {
                query_id: format!("q{i}"),
                retrieved,
                gt_frames: (0..rng.random_range(0..=3usize))
                    .map(|_| rng.random_range(0.0..1000.0))
                    .collect(),
                gt_interval: rng
                    .random_bool(0.8)
                    .then(|| TimeInterval::new(gs, gs + rng.random_range(10.0..250.0))),
            }
        })
        .collect()
}

/// Precision@K and Overlap@K never decrease as K grows.
pub fn prop_monotone_k(rng: &mut ChaCha8Rng) {
    let cases = random_cases(rng);
    let max_k = cases.iter().map(|c| c.retrieved.len()).max().unwrap_or(1);
    let mut prev_p = 0.0;
    let mut prev_o = 0.0;
    for k in 1..=max_k {
        let p = precision_at_k(&cases, k);
        let o = overlap_at_k(&cases, k, OverlapMode::GtRecall);
        assert!(p + 1e-12 >= prev_p, "P@{k} fell: {p} < {prev_p}");
        assert!(o + 1e-12 >= prev_o, "O@{k} fell: {o} < {prev_o}");
        prev_p = p;
        prev_o = o;
    }
}

/// Metrics are deterministic and batch means equal the mean of per-item
/// scores.
pub fn prop_purity_batch_mean(rng: &mut ChaCha8Rng) {
    let pairs: Vec<SummaryPair> = (0..rng.random_range(1..=10usize))
        .map(|i| SummaryPair {
            id: format!("s{i}"),
            candidate: random_text(rng),
            reference: random_text(rng),
        })
        .collect();

    for pair in &pairs {
        assert_eq!(
            rouge2(&pair.candidate, &pair.reference),
            rouge2(&pair.candidate, &pair.reference)
        );
        assert_eq!(
            meteor(&pair.candidate, &pair.reference),
            meteor(&pair.candidate, &pair.reference)
        );
    }

    let report = summary_report(&pairs).unwrap();
    let n = pairs.len() as f64;
    let mean_f1: f64 = pairs
        .iter()
        .map(|p| rouge2(&p.candidate, &p.reference).f1)
        .sum::<f64>()
        / n;
    let mean_meteor: f64 = pairs
        .iter()
        .map(|p| meteor(&p.candidate, &p.reference))
        .sum::<f64>()
        / n;
    assert!((report.rouge2.f1 - mean_f1).abs() < 1e-12);
    assert!((report.meteor - mean_meteor).abs() < 1e-12);
}
