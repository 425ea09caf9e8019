//! Layered run configuration: defaults, then config file, then environment,
//! then command-line flags. Every default matches the reference pipeline
//! constants (0.5 fps primary sampling, 2nd percentile, 300 s minimum clip,
//! 100 s sub-segment maximum, 0.05 fps fine sampling, top-10 retrieval).

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use mmvir_core::builder::BuildConfig;
use mmvir_core::gateway::GatewayConfig;
use mmvir_core::retrieval::ExpandMode;
use mmvir_core::segmentation::SegmentationMethod;

use crate::CliError;

pub const ENV_CONFIG: &str = "MMVIR_CONFIG";

pub const ENV_METHOD: &str = "MMVIR_METHOD";
pub const ENV_PERCENTILE_Q: &str = "MMVIR_PERCENTILE_Q";
pub const ENV_MIN_CLIP_S: &str = "MMVIR_MIN_CLIP_S";
pub const ENV_SUB_MAX_S: &str = "MMVIR_SUB_MAX_S";
pub const ENV_KTS_PENALTY: &str = "MMVIR_KTS_PENALTY";
pub const ENV_KTS_MAX_CHANGEPOINTS: &str = "MMVIR_KTS_MAX_CHANGEPOINTS";
pub const ENV_PRIMARY_FPS: &str = "MMVIR_PRIMARY_FPS";
pub const ENV_FINE_FPS: &str = "MMVIR_FINE_FPS";
pub const ENV_CAPTION_PARALLELISM: &str = "MMVIR_CAPTION_PARALLELISM";
pub const ENV_PARSE_RETRIES: &str = "MMVIR_PARSE_RETRIES";
pub const ENV_TIMELINE_FRAME_CAP: &str = "MMVIR_TIMELINE_FRAME_CAP";
pub const ENV_K: &str = "MMVIR_K";
pub const ENV_MODE: &str = "MMVIR_MODE";
pub const ENV_OFFLINE: &str = "MMVIR_OFFLINE";
pub const ENV_EMBED_DIM: &str = "MMVIR_EMBED_DIM";
pub const ENV_TIMEOUT_S: &str = "MMVIR_TIMEOUT_S";
pub const ENV_MAX_RETRIES: &str = "MMVIR_MAX_RETRIES";
pub const ENV_BACKOFF_BASE_S: &str = "MMVIR_BACKOFF_BASE_S";

/// Effective configuration after layering; snapshotted into every output
/// file for reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub build: BuildConfig,
    pub k: usize,
    pub mode: ExpandMode,
    pub gateway: GatewayConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            build: BuildConfig::default(),
            k: 10,
            mode: ExpandMode::Hybrid,
            gateway: GatewayConfig::default(),
        }
    }
}

/// Config-file schema: every field optional, sections omittable.
#[derive(Debug, Default, Clone, Deserialize)]
pub struct FileConfig {
    #[serde(default)]
    pub segmentation: SegmentationSection,
    #[serde(default)]
    pub build: BuildSection,
    #[serde(default)]
    pub retrieval: RetrievalSection,
    #[serde(default)]
    pub gateway: GatewaySection,
}

#[derive(Debug, Default, Clone, Deserialize)]
pub struct SegmentationSection {
    pub method: Option<String>,
    pub percentile_q: Option<f64>,
    pub min_clip_s: Option<f64>,
    pub sub_max_s: Option<f64>,
    pub kts_penalty: Option<f64>,
    pub kts_max_changepoints: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize)]
pub struct BuildSection {
    pub primary_fps: Option<f64>,
    pub fine_fps: Option<f64>,
    pub caption_parallelism: Option<usize>,
    pub parse_retries: Option<u32>,
    pub timeline_frame_cap: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize)]
pub struct RetrievalSection {
    pub k: Option<usize>,
    pub mode: Option<String>,
}

#[derive(Debug, Default, Clone, Deserialize)]
pub struct GatewaySection {
    pub offline: Option<bool>,
    pub embed_dim: Option<usize>,
    pub timeout_s: Option<f64>,
    pub max_retries: Option<u32>,
    pub backoff_base_s: Option<f64>,
}

/// Per-run overrides shared by every subcommand.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct ConfigFlags {
    /// Config file path (or set MMVIR_CONFIG).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Segmentation method: percentile or kts.
    #[arg(long, global = true)]
    pub method: Option<String>,
    #[arg(long, global = true)]
    pub percentile_q: Option<f64>,
    #[arg(long, global = true)]
    pub min_clip_s: Option<f64>,
    #[arg(long, global = true)]
    pub sub_max_s: Option<f64>,
    #[arg(long, global = true)]
    pub kts_penalty: Option<f64>,
    #[arg(long, global = true)]
    pub kts_max_changepoints: Option<usize>,
    #[arg(long, global = true)]
    pub primary_fps: Option<f64>,
    #[arg(long, global = true)]
    pub fine_fps: Option<f64>,
    #[arg(long, global = true)]
    pub caption_parallelism: Option<usize>,
    #[arg(long, global = true)]
    pub parse_retries: Option<u32>,
    #[arg(long, global = true)]
    pub timeline_frame_cap: Option<usize>,
    /// Context expansion mode: hybrid, text_only, or vision_only.
    #[arg(long, global = true)]
    pub mode: Option<String>,
    /// true runs against the deterministic offline mocks (the default);
    /// false uses the configured HTTP endpoints.
    #[arg(long, global = true)]
    pub offline: Option<bool>,
    #[arg(long, global = true)]
    pub embed_dim: Option<usize>,
}

fn input_err(message: impl Into<String>) -> CliError {
    CliError::Input(anyhow::anyhow!(message.into()))
}

fn parse_env<T: std::str::FromStr>(
    get: &dyn Fn(&str) -> Option<String>,
    key: &str,
    slot: &mut T,
) -> Result<(), CliError>
where
    T::Err: std::fmt::Display,
{
    if let Some(raw) = get(key) {
        *slot = raw
            .parse()
            .map_err(|e| input_err(format!("bad {key}={raw}: {e}")))?;
    }
    Ok(())
}

fn parse_env_bool(
    get: &dyn Fn(&str) -> Option<String>,
    key: &str,
    slot: &mut bool,
) -> Result<(), CliError> {
    if let Some(raw) = get(key) {
        *slot = match raw.to_ascii_lowercase().as_str() {
            "1" | "true" | "yes" | "on" => true,
            "0" | "false" | "no" | "off" => false,
            other => return Err(input_err(format!("bad {key}={other}: expected a boolean"))),
        };
    }
    Ok(())
}

fn parse_method(raw: &str) -> Result<SegmentationMethod, CliError> {
    raw.parse().map_err(|e: String| input_err(e))
}

fn parse_mode(raw: &str) -> Result<ExpandMode, CliError> {
    raw.parse().map_err(|e: String| input_err(e))
}

impl RunConfig {
    /// Layer flag > env > file > default.
    pub fn resolve(
        flags: &ConfigFlags,
        get_env: &dyn Fn(&str) -> Option<String>,
    ) -> Result<Self, CliError> {
        let mut rc = RunConfig::default();

        let file_path = flags
            .config
            .clone()
            .or_else(|| get_env(ENV_CONFIG).map(PathBuf::from));
        if let Some(path) = file_path {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| input_err(format!("cannot read config {}: {e}", path.display())))?;
            let fc: FileConfig = toml::from_str(&text)
                .map_err(|e| input_err(format!("bad config {}: {e}", path.display())))?;
            rc.apply_file(&fc)?;
        }
        rc.apply_env(get_env)?;
        rc.apply_flags(flags)?;

        if !rc.gateway.offline {
            rc.gateway.apply_env(|name| get_env(name));
        }
        Ok(rc)
    }

    fn apply_file(&mut self, fc: &FileConfig) -> Result<(), CliError> {
        let seg = &mut self.build.segmentation;
        if let Some(raw) = &fc.segmentation.method {
            seg.method = parse_method(raw)?;
        }
        if let Some(v) = fc.segmentation.percentile_q {
            seg.percentile_q = v;
        }
        if let Some(v) = fc.segmentation.min_clip_s {
            seg.min_clip_s = v;
        }
        if let Some(v) = fc.segmentation.sub_max_s {
            seg.sub_max_s = v;
        }
        if let Some(v) = fc.segmentation.kts_penalty {
            seg.kts_penalty = v;
        }
        if let Some(v) = fc.segmentation.kts_max_changepoints {
            seg.kts_max_changepoints = Some(v);
        }
        if let Some(v) = fc.build.primary_fps {
            self.build.primary_fps = v;
        }
        if let Some(v) = fc.build.fine_fps {
            self.build.fine_fps = v;
        }
        if let Some(v) = fc.build.caption_parallelism {
            self.build.caption_parallelism = v;
        }
        if let Some(v) = fc.build.parse_retries {
            self.build.parse_retries = v;
        }
        if let Some(v) = fc.build.timeline_frame_cap {
            self.build.timeline_frame_cap = v;
        }
        if let Some(v) = fc.retrieval.k {
            self.k = v;
        }
        if let Some(raw) = &fc.retrieval.mode {
            self.mode = parse_mode(raw)?;
        }
        if let Some(v) = fc.gateway.offline {
            self.gateway.offline = v;
        }
        if let Some(v) = fc.gateway.embed_dim {
            self.gateway.embed_dim = v;
        }
        if let Some(v) = fc.gateway.timeout_s {
            self.gateway.timeout_s = v;
        }
        if let Some(v) = fc.gateway.max_retries {
            self.gateway.max_retries = v;
        }
        if let Some(v) = fc.gateway.backoff_base_s {
            self.gateway.backoff_base_s = v;
        }
        Ok(())
    }

    fn apply_env(&mut self, get: &dyn Fn(&str) -> Option<String>) -> Result<(), CliError> {
        if let Some(raw) = get(ENV_METHOD) {
            self.build.segmentation.method = parse_method(&raw)?;
        }
        let seg = &mut self.build.segmentation;
        parse_env(get, ENV_PERCENTILE_Q, &mut seg.percentile_q)?;
        parse_env(get, ENV_MIN_CLIP_S, &mut seg.min_clip_s)?;
        parse_env(get, ENV_SUB_MAX_S, &mut seg.sub_max_s)?;
        parse_env(get, ENV_KTS_PENALTY, &mut seg.kts_penalty)?;
        if let Some(raw) = get(ENV_KTS_MAX_CHANGEPOINTS) {
            let v: usize = raw
                .parse()
                .map_err(|e| input_err(format!("bad {ENV_KTS_MAX_CHANGEPOINTS}={raw}: {e}")))?;
            seg.kts_max_changepoints = Some(v);
        }
        parse_env(get, ENV_PRIMARY_FPS, &mut self.build.primary_fps)?;
        parse_env(get, ENV_FINE_FPS, &mut self.build.fine_fps)?;
        parse_env(get, ENV_CAPTION_PARALLELISM, &mut self.build.caption_parallelism)?;
        parse_env(get, ENV_PARSE_RETRIES, &mut self.build.parse_retries)?;
        parse_env(get, ENV_TIMELINE_FRAME_CAP, &mut self.build.timeline_frame_cap)?;
        parse_env(get, ENV_K, &mut self.k)?;
        if let Some(raw) = get(ENV_MODE) {
            self.mode = parse_mode(&raw)?;
        }
        parse_env_bool(get, ENV_OFFLINE, &mut self.gateway.offline)?;
        parse_env(get, ENV_EMBED_DIM, &mut self.gateway.embed_dim)?;
        parse_env(get, ENV_TIMEOUT_S, &mut self.gateway.timeout_s)?;
        parse_env(get, ENV_MAX_RETRIES, &mut self.gateway.max_retries)?;
        parse_env(get, ENV_BACKOFF_BASE_S, &mut self.gateway.backoff_base_s)?;
        Ok(())
    }

    fn apply_flags(&mut self, flags: &ConfigFlags) -> Result<(), CliError> {
        if let Some(raw) = &flags.method {
            self.build.segmentation.method = parse_method(raw)?;
        }
        let seg = &mut self.build.segmentation;
        if let Some(v) = flags.percentile_q {
            seg.percentile_q = v;
        }
        if let Some(v) = flags.min_clip_s {
            seg.min_clip_s = v;
        }
        if let Some(v) = flags.sub_max_s {
            seg.sub_max_s = v;
        }
        if let Some(v) = flags.kts_penalty {
            seg.kts_penalty = v;
        }
        if let Some(v) = flags.kts_max_changepoints {
            seg.kts_max_changepoints = Some(v);
        }
        if let Some(v) = flags.primary_fps {
            self.build.primary_fps = v;
        }
        if let Some(v) = flags.fine_fps {
            self.build.fine_fps = v;
        }
        if let Some(v) = flags.caption_parallelism {
            self.build.caption_parallelism = v;
        }
        if let Some(v) = flags.parse_retries {
            self.build.parse_retries = v;
        }
        if let Some(v) = flags.timeline_frame_cap {
            self.build.timeline_frame_cap = v;
        }
        if let Some(raw) = &flags.mode {
            self.mode = parse_mode(raw)?;
        }
        if let Some(v) = flags.offline {
            self.gateway.offline = v;
        }
        if let Some(v) = flags.embed_dim {
            self.gateway.embed_dim = v;
        }
        Ok(())
    }
}
