//! Subcommand implementations. Result files are canonical JSON carrying the
//! effective config snapshot; wall-clock timings go to stderr (and
//! `--timing-out`, when given) so result files stay byte-reproducible.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use mmvir_core::builder::{build_document, FrameTable};
use mmvir_core::canon;
use mmvir_core::eval::{
    qa_report, retrieval_report, summary_report, EvalReport, LatencyLog, OverlapMode, QARecord,
    RetrievalCase, SummaryPair,
};
use mmvir_core::gateway::{HttpGateway, ModelGateway, OfflineGateway};
use mmvir_core::repr::{load_document, save_document, TimeInterval, VideoDocument};
use mmvir_core::retrieval::{
    answer_question, build_index, load_index, locate, save_index, summarize, LocatedInterval,
    RetrievalHit, TimelineIndex,
};
use mmvir_core::segmentation::{
    consecutive_similarity, read_series, segment_series, signal_report, FrameEmbeddingSeries,
    SignalReport,
};

use crate::cli::{
    AskArgs, BuildArgs, EvalArgs, EvalTask, IndexArgs, LocateArgs, SegmentArgs, StatsArgs,
    SummarizeArgs,
};
use crate::config::{ConfigFlags, RunConfig};
use crate::CliError;

const OUTPUT_SCHEMA_VERSION: u32 = 1;

fn input_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Input(e.into())
}

fn resolve(flags: &ConfigFlags) -> Result<RunConfig, CliError> {
    RunConfig::resolve(flags, &|key| std::env::var(key).ok())
}

fn make_gateway(rc: &RunConfig) -> Result<Box<dyn ModelGateway>, CliError> {
    if rc.gateway.offline {
        Ok(Box::new(
            OfflineGateway::new(&rc.gateway).map_err(input_err)?,
        ))
    } else {
        Ok(Box::new(HttpGateway::new(rc.gateway.clone()).map_err(input_err)?))
    }
}

fn load_series(path: &Path) -> Result<FrameEmbeddingSeries, CliError> {
    read_series(path).map_err(input_err)
}

fn write_canonical<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = canon::to_canonical_string(value)
        .map_err(|e| CliError::Internal(anyhow::anyhow!("serialization failed: {e}")))?;
    std::fs::write(path, text)
        .map_err(|e| input_err(anyhow::anyhow!("cannot write {}: {e}", path.display())))
}

fn write_timing(path: Option<&Path>, log: &LatencyLog) -> Result<(), CliError> {
    eprintln!(
        "timing: segment {:.3}s caption {:.3}s index {:.3}s answer {:.3}s",
        log.segment_s, log.caption_s, log.index_s, log.answer_s
    );
    if let Some(path) = path {
        write_canonical(path, log)?;
    }
    Ok(())
}

/// Read a batch file: one query per line, either plain text or a JSON
/// object. Malformed JSON lines are reported with their line number and the
/// run continues.
fn read_query_lines(path: &Path) -> Result<(Vec<QueryLine>, Vec<LineError>), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| input_err(anyhow::anyhow!("cannot read {}: {e}", path.display())))?;
    let mut queries = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('{') {
            match serde_json::from_str::<QueryLine>(trimmed) {
                Ok(mut q) => {
                    if q.id.is_empty() {
                        q.id = format!("line{line_no}");
                    }
                    queries.push(q);
                }
                Err(e) => errors.push(LineError {
                    line: line_no,
                    message: e.to_string(),
                }),
            }
        } else {
            queries.push(QueryLine {
                id: format!("line{line_no}"),
                question: trimmed.to_string(),
                options: None,
            });
        }
    }
    Ok((queries, errors))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct QueryLine {
    #[serde(default)]
    id: String,
    question: String,
    #[serde(default)]
    options: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LineError {
    line: usize,
    message: String,
}

#[derive(Serialize)]
struct SegmentOutput<'a> {
    schema_version: u32,
    video_id: &'a str,
    duration_s: f64,
    boundaries: &'a [f64],
    signal_report: &'a SignalReport,
    config: &'a RunConfig,
}

pub fn cmd_segment(args: &SegmentArgs) -> Result<(), CliError> {
    let rc = resolve(&args.config)?;
    let series = load_series(&args.embeddings)?;

    let t0 = Instant::now();
    let boundaries = segment_series(&series, &rc.build.segmentation).map_err(input_err)?;
    let segment_s = t0.elapsed().as_secs_f64();

    let signal = consecutive_similarity(&series);
    let report = signal_report(&signal).map_err(input_err)?;

    write_canonical(
        &args.out,
        &SegmentOutput {
            schema_version: OUTPUT_SCHEMA_VERSION,
            video_id: series.video_id(),
            duration_s: series.duration_s(),
            boundaries: &boundaries,
            signal_report: &report,
            config: &rc,
        },
    )?;
    println!(
        "{}: {} clips over {:.1}s -> {}",
        series.video_id(),
        boundaries.len() - 1,
        series.duration_s(),
        args.out.display()
    );
    write_timing(
        args.timing_out.as_deref(),
        &LatencyLog {
            segment_s,
            ..LatencyLog::default()
        },
    )
}

pub fn cmd_stats(args: &StatsArgs) -> Result<(), CliError> {
    let rc = resolve(&args.config)?;
    let series = load_series(&args.embeddings)?;
    let signal = consecutive_similarity(&series);
    let report = signal_report(&signal).map_err(input_err)?;

    println!(
        "{}: {} similarity values in [{:.6}, {:.6}], {} below p2",
        series.video_id(),
        report.count,
        report.min,
        report.max,
        report.below_p2
    );
    for entry in &report.percentiles {
        println!("  p{:<2} = {:.6}", entry.q, entry.value);
    }
    if let Some(out) = &args.out {
        #[derive(Serialize)]
        struct StatsOutput<'a> {
            schema_version: u32,
            video_id: &'a str,
            signal_report: &'a SignalReport,
            config: &'a RunConfig,
        }
        write_canonical(
            out,
            &StatsOutput {
                schema_version: OUTPUT_SCHEMA_VERSION,
                video_id: series.video_id(),
                signal_report: &report,
                config: &rc,
            },
        )?;
    }
    Ok(())
}

pub fn cmd_build(args: &BuildArgs) -> Result<(), CliError> {
    let rc = resolve(&args.config)?;
    if !args.frame_root.is_dir() {
        return Err(input_err(anyhow::anyhow!(
            "frame root {} is not a directory",
            args.frame_root.display()
        )));
    }
    let series = load_series(&args.embeddings)?;
    let frames = FrameTable::from_convention(series.video_id(), series.timestamps());
    let gateway = make_gateway(&rc)?;

    let checkpoint = args
        .checkpoint
        .clone()
        .unwrap_or_else(|| args.out.with_extension("ckpt"));
    if checkpoint.exists() && !args.resume {
        return Err(input_err(anyhow::anyhow!(
            "checkpoint {} exists; pass --resume to continue it or remove it first",
            checkpoint.display()
        )));
    }

    let t0 = Instant::now();
    let seg_probe = segment_series(&series, &rc.build.segmentation).map_err(input_err)?;
    let segment_s = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let doc = build_document(&series, &frames, &rc.build, gateway.as_ref(), Some(&checkpoint))?;
    let caption_s = t1.elapsed().as_secs_f64();

    save_document(&doc, &args.out).map_err(input_err)?;
    println!(
        "{}: built {} clips ({} boundaries) -> {}",
        doc.video_id,
        doc.clips.len(),
        seg_probe.len(),
        args.out.display()
    );
    write_timing(
        args.timing_out.as_deref(),
        &LatencyLog {
            segment_s,
            caption_s,
            ..LatencyLog::default()
        },
    )
}

fn load_docs(paths: &[PathBuf]) -> Result<Vec<VideoDocument>, CliError> {
    paths.iter().map(|p| load_document(p).map_err(input_err)).collect()
}

pub fn cmd_index(args: &IndexArgs) -> Result<(), CliError> {
    let rc = resolve(&args.config)?;
    let docs = load_docs(&args.docs)?;
    let gateway = make_gateway(&rc)?;

    let t0 = Instant::now();
    let index = build_index(&docs, gateway.as_ref())?;
    let index_s = t0.elapsed().as_secs_f64();

    save_index(&index, &args.out)?;
    println!(
        "{} entries ({}) -> {}",
        index.len(),
        index.fingerprint(),
        args.out.display()
    );
    write_timing(
        args.timing_out.as_deref(),
        &LatencyLog {
            index_s,
            ..LatencyLog::default()
        },
    )
}

fn parse_k_list(raw: Option<&str>, default_k: usize) -> Result<Vec<usize>, CliError> {
    match raw {
        None => Ok(vec![default_k]),
        Some(raw) => raw
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<usize>()
                    .map_err(|e| CliError::Input(anyhow::anyhow!("bad k '{tok}': {e}")))
            })
            .collect(),
    }
}

/// `out.json` with k=5 in a multi-k sweep becomes `out.k5.json`.
fn k_suffixed(out: &Path, k: usize, multiple: bool) -> PathBuf {
    if !multiple {
        return out.to_path_buf();
    }
    match out.extension().and_then(|e| e.to_str()) {
        Some(ext) => out.with_extension(format!("k{k}.{ext}")),
        None => out.with_extension(format!("k{k}")),
    }
}

#[derive(Serialize, Deserialize)]
struct AskResult {
    id: String,
    question: String,
    choice: Option<String>,
    raw: String,
    retrieved: Vec<RetrievalHit>,
    blocks: usize,
    token_estimate: usize,
}

#[derive(Serialize)]
struct AskOutput<'a> {
    schema_version: u32,
    k: usize,
    mode: String,
    results: Vec<AskResult>,
    errors: &'a [LineError],
    config: &'a RunConfig,
}

fn load_index_file(path: &Path) -> Result<TimelineIndex, CliError> {
    load_index(path).map_err(input_err)
}

pub fn cmd_ask(args: &AskArgs) -> Result<(), CliError> {
    let rc = resolve(&args.config)?;
    let index = load_index_file(&args.index)?;
    let docs = load_docs(&args.docs)?;
    let gateway = make_gateway(&rc)?;
    let (queries, errors) = read_query_lines(&args.queries)?;
    let ks = parse_k_list(args.k.as_deref(), rc.k)?;
    let multiple = ks.len() > 1;

    let mut answer_s = 0.0;
    for &k in &ks {
        let t0 = Instant::now();
        let mut results = Vec::with_capacity(queries.len());
        for query in &queries {
            let outcome = answer_question(
                &index,
                &docs,
                &query.question,
                query.options.as_deref(),
                k,
                rc.mode,
                gateway.as_ref(),
            )?;
            results.push(AskResult {
                id: query.id.clone(),
                question: query.question.clone(),
                choice: outcome.choice,
                raw: outcome.raw,
                retrieved: outcome.retrieved,
                blocks: outcome.stats.blocks,
                token_estimate: outcome.stats.token_estimate,
            });
        }
        answer_s += t0.elapsed().as_secs_f64();

        let out = k_suffixed(&args.out, k, multiple);
        write_canonical(
            &out,
            &AskOutput {
                schema_version: OUTPUT_SCHEMA_VERSION,
                k,
                mode: rc.mode.to_string(),
                results,
                errors: &errors,
                config: &rc,
            },
        )?;
        println!("k={k}: {} answers -> {}", queries.len(), out.display());
    }
    for err in &errors {
        eprintln!("queries line {}: {}", err.line, err.message);
    }
    write_timing(
        args.timing_out.as_deref(),
        &LatencyLog {
            answer_s,
            ..LatencyLog::default()
        },
    )
}

#[derive(Serialize, Deserialize)]
struct SummarizeResult {
    video_id: String,
    summary: String,
}

pub fn cmd_summarize(args: &SummarizeArgs) -> Result<(), CliError> {
    let rc = resolve(&args.config)?;
    let docs = load_docs(&args.docs)?;
    let gateway = make_gateway(&rc)?;

    let t0 = Instant::now();
    let mut results = Vec::with_capacity(docs.len());
    for doc in &docs {
        results.push(SummarizeResult {
            video_id: doc.video_id.clone(),
            summary: summarize(doc, gateway.as_ref())?,
        });
    }
    let answer_s = t0.elapsed().as_secs_f64();

    #[derive(Serialize)]
    struct SummarizeOutput<'a> {
        schema_version: u32,
        results: &'a [SummarizeResult],
        config: &'a RunConfig,
    }
    write_canonical(
        &args.out,
        &SummarizeOutput {
            schema_version: OUTPUT_SCHEMA_VERSION,
            results: &results,
            config: &rc,
        },
    )?;
    println!("{} summaries -> {}", results.len(), args.out.display());
    write_timing(
        args.timing_out.as_deref(),
        &LatencyLog {
            answer_s,
            ..LatencyLog::default()
        },
    )
}

#[derive(Serialize, Deserialize)]
struct LocateResult {
    id: String,
    query: String,
    intervals: Vec<LocatedInterval>,
}

pub fn cmd_locate(args: &LocateArgs) -> Result<(), CliError> {
    let rc = resolve(&args.config)?;
    let index = load_index_file(&args.index)?;
    let gateway = make_gateway(&rc)?;
    let (queries, errors) = read_query_lines(&args.queries)?;
    let ks = parse_k_list(args.k.as_deref(), rc.k)?;
    let multiple = ks.len() > 1;

    let mut answer_s = 0.0;
    for &k in &ks {
        let t0 = Instant::now();
        let mut results = Vec::with_capacity(queries.len());
        for query in &queries {
            let intervals = locate(&index, &query.question, k, gateway.as_ref())?;
            results.push(LocateResult {
                id: query.id.clone(),
                query: query.question.clone(),
                intervals,
            });
        }
        answer_s += t0.elapsed().as_secs_f64();

        #[derive(Serialize)]
        struct LocateOutput<'a> {
            schema_version: u32,
            k: usize,
            results: &'a [LocateResult],
            errors: &'a [LineError],
            config: &'a RunConfig,
        }
        let out = k_suffixed(&args.out, k, multiple);
        write_canonical(
            &out,
            &LocateOutput {
                schema_version: OUTPUT_SCHEMA_VERSION,
                k,
                results: &results,
                errors: &errors,
                config: &rc,
            },
        )?;
        println!("k={k}: {} queries -> {}", results.len(), out.display());
    }
    for err in &errors {
        eprintln!("queries line {}: {}", err.line, err.message);
    }
    write_timing(
        args.timing_out.as_deref(),
        &LatencyLog {
            answer_s,
            ..LatencyLog::default()
        },
    )
}

#[derive(Deserialize)]
struct QaGoldLine {
    id: String,
    gold: String,
    #[serde(default)]
    category: Option<String>,
}

#[derive(Deserialize)]
struct SummaryGoldLine {
    id: String,
    reference: String,
}

#[derive(Deserialize)]
struct RetrievalGoldLine {
    id: String,
    #[serde(default)]
    frames: Vec<f64>,
    #[serde(default)]
    interval: Option<(f64, f64)>,
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| input_err(anyhow::anyhow!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(line).map_err(|e| {
            input_err(anyhow::anyhow!("{} line {}: {e}", path.display(), i + 1))
        })?;
        out.push(value);
    }
    Ok(out)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| input_err(anyhow::anyhow!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| input_err(anyhow::anyhow!("{}: {e}", path.display())))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let _rc = resolve(&args.config)?;
    let mut report = EvalReport::default();

    match args.task {
        EvalTask::Qa => {
            #[derive(Deserialize)]
            struct AskFile {
                results: Vec<AskResult>,
            }
            let gold: Vec<QaGoldLine> = read_jsonl(&args.gold)?;
            if gold.is_empty() {
                return Err(input_err(anyhow::anyhow!("gold file is empty")));
            }
            let run: AskFile = read_json(&args.results)?;
            let by_id: std::collections::HashMap<&str, &AskResult> =
                run.results.iter().map(|r| (r.id.as_str(), r)).collect();
            let records: Vec<QARecord> = gold
                .iter()
                .map(|g| QARecord {
                    id: g.id.clone(),
                    predicted: by_id.get(g.id.as_str()).and_then(|r| r.choice.clone()),
                    gold: g.gold.clone(),
                    category: g.category.clone(),
                })
                .collect();
            report.qa = Some(qa_report(&records).map_err(input_err)?);
        }
        EvalTask::Summarization => {
            #[derive(Deserialize)]
            struct SummFile {
                results: Vec<SummarizeResult>,
            }
            let gold: Vec<SummaryGoldLine> = read_jsonl(&args.gold)?;
            if gold.is_empty() {
                return Err(input_err(anyhow::anyhow!("gold file is empty")));
            }
            let run: SummFile = read_json(&args.results)?;
            let by_id: std::collections::HashMap<&str, &str> = run
                .results
                .iter()
                .map(|r| (r.video_id.as_str(), r.summary.as_str()))
                .collect();
            let pairs: Vec<SummaryPair> = gold
                .iter()
                .map(|g| SummaryPair {
                    id: g.id.clone(),
                    candidate: by_id.get(g.id.as_str()).unwrap_or(&"").to_string(),
                    reference: g.reference.clone(),
                })
                .collect();
            report.summarization = Some(summary_report(&pairs).map_err(input_err)?);
        }
        EvalTask::Retrieval => {
            #[derive(Deserialize)]
            struct LocateFile {
                results: Vec<LocateResult>,
            }
            let gold: Vec<RetrievalGoldLine> = read_jsonl(&args.gold)?;
            if gold.is_empty() {
                return Err(input_err(anyhow::anyhow!("gold file is empty")));
            }
            let run: LocateFile = read_json(&args.results)?;
            let by_id: std::collections::HashMap<&str, &LocateResult> =
                run.results.iter().map(|r| (r.id.as_str(), r)).collect();
            let cases: Vec<RetrievalCase> = gold
                .iter()
                .map(|g| RetrievalCase {
                    query_id: g.id.clone(),
                    retrieved: by_id
                        .get(g.id.as_str())
                        .map(|r| r.intervals.iter().map(|l| l.interval).collect())
                        .unwrap_or_default(),
                    gt_frames: g.frames.clone(),
                    gt_interval: g.interval.map(|(a, b)| TimeInterval::new(a, b)),
                })
                .collect();
            let ks = parse_k_list(args.k.as_deref(), 10)?;
            let mode = match args.overlap_mode.as_str() {
                "gt_recall" => OverlapMode::GtRecall,
                "iou" => OverlapMode::Iou,
                other => {
                    return Err(input_err(anyhow::anyhow!(
                        "unknown overlap mode '{other}' (expected gt_recall or iou)"
                    )))
                }
            };
            report.retrieval = Some(retrieval_report(&cases, &ks, mode).map_err(input_err)?);
        }
    }

    if let Some(path) = &args.latency {
        let log: LatencyLog = read_json(path)?;
        report.latency = Some(log.into());
    }

    print!("{report}");
    if let Some(out) = &args.out {
        std::fs::write(out, report.to_canonical_json())
            .map_err(|e| input_err(anyhow::anyhow!("cannot write {}: {e}", out.display())))?;
    }
    Ok(())
}
