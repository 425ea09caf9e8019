//! Live gateway speaking the canonical wire protocol.
//!
//! Requests are `POST` bodies of the form
//! `{"capability", "version", "correlation_id", "payload"}` and responses the
//! envelope `{"ok", "correlation_id", "result" | "error"}`. Transient
//! failures (transport errors, 408/429/5xx) retry with exponential backoff,
//! issuing at most `max_retries + 1` requests. Responses are matched to
//! requests by correlation id, never by arrival order.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    l2_normalize, AnswerRequest, AnswerResponse, CallLog, CallRecord, Capability, CaptionRequest,
    CaptionResponse, EmbedRequest, EmbedResponse, GatewayConfig, GatewayError, ModelGateway,
};

pub const WIRE_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

/// Transport seam; production uses [`ReqwestTransport`], fault-injection
/// doubles implement this in tests.
pub trait HttpTransport: Send + Sync {
    fn post(
        &self,
        url: &str,
        token: Option<&str>,
        body: &str,
        timeout: Duration,
    ) -> Result<HttpReply, String>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Self {
        Self {
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl Default for ReqwestTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl HttpTransport for ReqwestTransport {
    fn post(
        &self,
        url: &str,
        token: Option<&str>,
        body: &str,
        timeout: Duration,
    ) -> Result<HttpReply, String> {
        let mut req = self
            .client
            .post(url)
            .header("Content-Type", "application/json")
            .timeout(timeout)
            .body(body.to_string());
        if let Some(token) = token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| e.to_string())?;
        Ok(HttpReply { status, body })
    }
}

#[derive(Serialize)]
struct RequestEnvelope<'a, P: Serialize> {
    capability: Capability,
    version: u32,
    correlation_id: &'a str,
    payload: P,
}

#[derive(Deserialize)]
struct ResponseEnvelope {
    ok: bool,
    #[serde(default)]
    correlation_id: Option<String>,
    #[serde(default)]
    result: Option<serde_json::Value>,
    #[serde(default)]
    error: Option<String>,
}

pub struct HttpGateway<T: HttpTransport = ReqwestTransport> {
    config: GatewayConfig,
    transport: T,
    log: CallLog,
    next_id: AtomicU64,
}

impl HttpGateway<ReqwestTransport> {
    pub fn new(config: GatewayConfig) -> Result<Self, GatewayError> {
        Self::with_transport(config, ReqwestTransport::new())
    }
}

impl<T: HttpTransport> HttpGateway<T> {
    pub fn with_transport(config: GatewayConfig, transport: T) -> Result<Self, GatewayError> {
        if config.offline {
            return Err(GatewayError::Precondition(
                "HttpGateway requires offline = false".into(),
            ));
        }
        config.validate()?;
        Ok(Self {
            config,
            transport,
            log: CallLog::default(),
            next_id: AtomicU64::new(1),
        })
    }

    fn endpoint(&self, capability: Capability) -> Result<&str, GatewayError> {
        let url = match capability {
            Capability::Embed => &self.config.embed_url,
            Capability::Caption => &self.config.caption_url,
            Capability::Answer => &self.config.answer_url,
        };
        url.as_deref().ok_or_else(|| {
            GatewayError::Precondition(format!("no endpoint configured for {capability}"))
        })
    }

    fn retryable(status: u16) -> bool {
        matches!(status, 408 | 429) || (500..600).contains(&status)
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let secs = self.config.backoff_base_s * f64::from(2u32.saturating_pow(attempt - 1));
        Duration::from_secs_f64(secs.max(0.0))
    }

    /// Issue one logical call: serialize the envelope, retry transient
    /// failures, verify the correlation id, record the attempt count.
    fn call<P: Serialize, R: DeserializeOwned>(
        &self,
        capability: Capability,
        detail: &str,
        payload: &P,
    ) -> Result<R, GatewayError> {
        let url = self.endpoint(capability)?;
        let correlation_id = format!(
            "mmvir-{capability}-{}",
            self.next_id.fetch_add(1, Ordering::Relaxed)
        );
        let body = serde_json::to_string(&RequestEnvelope {
            capability,
            version: WIRE_VERSION,
            correlation_id: &correlation_id,
            payload,
        })
        .map_err(|e| GatewayError::Service {
            capability,
            message: format!("request serialization failed: {e}"),
        })?;
        let token = std::env::var(&self.config.token_env).ok();
        let timeout = Duration::from_secs_f64(self.config.timeout_s.max(0.0));

        let mut attempts = 0u32;
        let outcome = loop {
            attempts += 1;
            let transient = match self.transport.post(url, token.as_deref(), &body, timeout) {
                Ok(reply) if (200..300).contains(&reply.status) => break Ok(reply),
                Ok(reply) if Self::retryable(reply.status) => {
                    format!("HTTP {}: {}", reply.status, reply.body)
                }
                Ok(reply) => {
                    break Err(format!("HTTP {}: {}", reply.status, reply.body));
                }
                Err(message) => message,
            };
            if attempts > self.config.max_retries {
                break Err(transient);
            }
            let delay = self.backoff(attempts);
            if !delay.is_zero() {
                std::thread::sleep(delay);
            }
        };
        self.log.push(CallRecord {
            capability,
            detail: detail.to_string(),
            attempts,
        });

        let reply = outcome.map_err(|message| GatewayError::Transport {
            capability,
            attempts,
            message,
        })?;
        let envelope: ResponseEnvelope =
            serde_json::from_str(&reply.body).map_err(|e| GatewayError::Service {
                capability,
                message: format!("malformed response envelope: {e}"),
            })?;
        if let Some(got) = &envelope.correlation_id {
            if *got != correlation_id {
                return Err(GatewayError::Correlation {
                    sent: correlation_id,
                    got: got.clone(),
                });
            }
        }
        if !envelope.ok {
            return Err(GatewayError::Service {
                capability,
                message: envelope.error.unwrap_or_else(|| "unspecified error".into()),
            });
        }
        let result = envelope.result.ok_or_else(|| GatewayError::Service {
            capability,
            message: "ok response without a result".into(),
        })?;
        serde_json::from_value(result).map_err(|e| GatewayError::Service {
            capability,
            message: format!("malformed result payload: {e}"),
        })
    }
}

impl<T: HttpTransport> ModelGateway for HttpGateway<T> {
    fn embed(&self, req: &EmbedRequest) -> Result<EmbedResponse, GatewayError> {
        if req.payload.trim().is_empty() {
            return Err(GatewayError::Precondition("embed payload is empty".into()));
        }
        let mut resp: EmbedResponse = self.call(Capability::Embed, &req.payload, req)?;
        if resp.vector.len() != self.config.embed_dim {
            return Err(GatewayError::DimensionMismatch {
                got: resp.vector.len(),
                want: self.config.embed_dim,
            });
        }
        l2_normalize(&mut resp.vector);
        resp.dim = resp.vector.len();
        Ok(resp)
    }

    fn caption(&self, req: &CaptionRequest) -> Result<CaptionResponse, GatewayError> {
        if req.frames.is_empty() {
            return Err(GatewayError::Precondition(
                "caption request carries no frames".into(),
            ));
        }
        let resp: CaptionResponse = self.call(Capability::Caption, &req.prompt, req)?;
        let text = resp.text.trim_end().to_string();
        if text.is_empty() {
            return Err(GatewayError::Service {
                capability: Capability::Caption,
                message: "service returned empty text".into(),
            });
        }
        Ok(CaptionResponse { text })
    }

    fn answer(&self, req: &AnswerRequest) -> Result<AnswerResponse, GatewayError> {
        if req.question.trim().is_empty() {
            return Err(GatewayError::Precondition("question is empty".into()));
        }
        if req.context.len() > self.config.max_context_blocks {
            return Err(GatewayError::BlockLimit {
                got: req.context.len(),
                limit: self.config.max_context_blocks,
            });
        }
        let resp: AnswerResponse = self.call(Capability::Answer, &req.question, req)?;
        Ok(AnswerResponse {
            text: resp.text.trim_end().to_string(),
        })
    }

    fn call_log(&self) -> Vec<CallRecord> {
        self.log.snapshot()
    }

    fn embedder_fingerprint(&self) -> String {
        format!(
            "http-{}-d{}",
            self.config.embed_url.as_deref().unwrap_or("unset"),
            self.config.embed_dim
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU32;

    struct ScriptedTransport {
        calls: AtomicU32,
        script: Box<dyn Fn(u32, &str) -> Result<HttpReply, String> + Send + Sync>,
    }

    impl ScriptedTransport {
        fn new(script: impl Fn(u32, &str) -> Result<HttpReply, String> + Send + Sync + 'static) -> Self {
            Self {
                calls: AtomicU32::new(0),
                script: Box::new(script),
            }
        }
    }

    impl HttpTransport for ScriptedTransport {
        fn post(
            &self,
            _url: &str,
            _token: Option<&str>,
            body: &str,
            _timeout: Duration,
        ) -> Result<HttpReply, String> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
            (self.script)(n, body)
        }
    }

    fn live_config() -> GatewayConfig {
        GatewayConfig {
            offline: false,
            embed_url: Some("http://embed.test".into()),
            caption_url: Some("http://caption.test".into()),
            answer_url: Some("http://answer.test".into()),
            backoff_base_s: 0.0,
            max_retries: 3,
            ..GatewayConfig::default()
        }
    }

    fn ok_reply(body: &str, result: serde_json::Value) -> HttpReply {
        let envelope: serde_json::Value = serde_json::from_str(body).unwrap();
        HttpReply {
            status: 200,
            body: serde_json::json!({
                "ok": true,
                "correlation_id": envelope["correlation_id"],
                "result": result,
            })
            .to_string(),
        }
    }

    #[test]
    fn http_429_retried_then_fails_after_max_retries() {
        let transport = ScriptedTransport::new(|_, _| {
            Ok(HttpReply {
                status: 429,
                body: "slow down".into(),
            })
        });
        let gw = HttpGateway::with_transport(live_config(), transport).unwrap();
        let err = gw
            .caption(&CaptionRequest {
                frames: vec!["f".into()],
                prompt: "p".into(),
                max_tokens: 16,
            })
            .unwrap_err();
        match err {
            GatewayError::Transport { attempts, .. } => assert_eq!(attempts, 4),
            other => panic!("expected transport error, got {other:?}"),
        }
        let log = gw.call_log();
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].attempts, 4); // min(attempts, max_retries + 1)
    }

    #[test]
    fn transient_failure_then_success() {
        let transport = ScriptedTransport::new(|n, body| {
            if n < 3 {
                Err("connection refused".into())
            } else {
                Ok(ok_reply(body, serde_json::json!({ "text": "a caption  " })))
            }
        });
        let gw = HttpGateway::with_transport(live_config(), transport).unwrap();
        let resp = gw
            .caption(&CaptionRequest {
                frames: vec!["f".into()],
                prompt: "p".into(),
                max_tokens: 16,
            })
            .unwrap();
        assert_eq!(resp.text, "a caption"); // only trailing whitespace trimmed
        assert_eq!(gw.call_log()[0].attempts, 3);
    }

    #[test]
    fn non_retryable_status_fails_immediately() {
        let transport = ScriptedTransport::new(|_, _| {
            Ok(HttpReply {
                status: 401,
                body: "no".into(),
            })
        });
        let gw = HttpGateway::with_transport(live_config(), transport).unwrap();
        let err = gw.embed(&EmbedRequest::text("x")).unwrap_err();
        match err {
            GatewayError::Transport { attempts, .. } => assert_eq!(attempts, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn embed_normalizes_and_checks_dimension() {
        let transport = ScriptedTransport::new(|_, body| {
            Ok(ok_reply(
                body,
                serde_json::json!({ "vector": vec![3.0; 128], "dim": 128 }),
            ))
        });
        let gw = HttpGateway::with_transport(live_config(), transport).unwrap();
        let resp = gw.embed(&EmbedRequest::text("x")).unwrap();
        let norm: f64 = resp.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);

        let transport = ScriptedTransport::new(|_, body| {
            Ok(ok_reply(
                body,
                serde_json::json!({ "vector": [1.0, 0.0], "dim": 2 }),
            ))
        });
        let gw = HttpGateway::with_transport(live_config(), transport).unwrap();
        assert!(matches!(
            gw.embed(&EmbedRequest::text("x")),
            Err(GatewayError::DimensionMismatch { got: 2, want: 128 })
        ));
    }

    #[test]
    fn correlation_mismatch_is_rejected() {
        let transport = ScriptedTransport::new(|_, _| {
            Ok(HttpReply {
                status: 200,
                body: serde_json::json!({
                    "ok": true,
                    "correlation_id": "someone-elses",
                    "result": { "text": "t" },
                })
                .to_string(),
            })
        });
        let gw = HttpGateway::with_transport(live_config(), transport).unwrap();
        assert!(matches!(
            gw.answer(&AnswerRequest {
                context: vec![],
                question: "q".into(),
                options: None,
            }),
            Err(GatewayError::Correlation { .. })
        ));
    }

    #[test]
    fn service_error_envelope_is_surfaced() {
        let transport = ScriptedTransport::new(|_, body| {
            let envelope: serde_json::Value = serde_json::from_str(body).unwrap();
            Ok(HttpReply {
                status: 200,
                body: serde_json::json!({
                    "ok": false,
                    "correlation_id": envelope["correlation_id"],
                    "error": "model exploded",
                })
                .to_string(),
            })
        });
        let gw = HttpGateway::with_transport(live_config(), transport).unwrap();
        let err = gw.embed(&EmbedRequest::text("x")).unwrap_err();
        assert!(err.to_string().contains("model exploded"), "{err}");
    }
}
