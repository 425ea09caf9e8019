//! Deterministic offline mocks for the three capabilities.
//!
//! Every response is a pure function of the request, hashed with FNV-1a so
//! identical requests produce byte-identical responses in any process. The
//! mock captioner recognizes the prompt family from its instruction text and
//! answers in the output form that prompt demands, so the document builder
//! runs end to end without live models.

use super::{
    l2_normalize, AnswerRequest, AnswerResponse, CallLog, CallRecord, Capability, CaptionRequest,
    CaptionResponse, ContextBlock, EmbedRequest, EmbedResponse, GatewayConfig, GatewayError,
    ModelGateway, PayloadKind,
};
use crate::hash::{fnv1a, Fnv1a};

pub struct OfflineGateway {
    dim: usize,
    max_context_blocks: usize,
    log: CallLog,
}

impl OfflineGateway {
    pub fn new(config: &GatewayConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        Ok(Self {
            dim: config.embed_dim,
            max_context_blocks: config.max_context_blocks,
            log: CallLog::default(),
        })
    }

    /// Mock with default limits; handy in tests.
    pub fn with_dim(dim: usize) -> Self {
        Self {
            dim,
            max_context_blocks: GatewayConfig::default().max_context_blocks,
            log: CallLog::default(),
        }
    }

    /// Bag-of-tokens embedding: lowercase, split on whitespace, hash each
    /// token to one of `dim` buckets, accumulate, L2-normalize.
    pub fn embed_text_mock(text: &str, dim: usize) -> Vec<f64> {
        let mut acc = vec![0.0f64; dim];
        for token in text.to_lowercase().split_whitespace() {
            acc[(fnv1a(token.as_bytes()) % dim as u64) as usize] += 1.0;
        }
        l2_normalize(&mut acc);
        acc
    }

    /// Image embedding hashes the whole locator string the same way.
    pub fn embed_image_mock(locator: &str, dim: usize) -> Vec<f64> {
        let mut acc = vec![0.0f64; dim];
        acc[(fnv1a(locator.as_bytes()) % dim as u64) as usize] = 1.0;
        acc
    }
}

fn request_hash(req: &CaptionRequest) -> u64 {
    let mut h = Fnv1a::new();
    h.update(req.prompt.as_bytes());
    for frame in &req.frames {
        h.update(b"\0");
        h.update(frame.as_bytes());
    }
    h.finish()
}

/// Which output form a prompt demands, recognized from its instruction text.
enum PromptFamily {
    Timeline,
    ActionList,
    SceneList,
    ObjectList,
    SpatialList,
    Generic,
}

fn classify_prompt(prompt: &str) -> PromptFamily {
    if prompt.contains("spatial realtionships") || prompt.contains("spatial_relationship") {
        PromptFamily::SpatialList
    } else if prompt.contains("List the sequence of all **actions**") {
        PromptFamily::ActionList
    } else if prompt.contains("**settings**") {
        PromptFamily::SceneList
    } else if prompt.contains("List the key objects and the characters") {
        PromptFamily::ObjectList
    } else if prompt.contains("MAXIMUM OF 50 words") {
        PromptFamily::Timeline
    } else {
        PromptFamily::Generic
    }
}

fn canned_caption(req: &CaptionRequest) -> String {
    let h = request_hash(req);
    let a = h & 0xffff;
    let b = (h >> 16) & 0xffff;
    let c = (h >> 32) & 0xffff;
    match classify_prompt(&req.prompt) {
        PromptFamily::Timeline => format!(
            "A person carries out activity {a:04x} near object {b:04x} in setting {c:04x}, \
             moving steadily across {} frames.",
            req.frames.len()
        ),
        PromptFamily::ActionList => format!(
            "[{{\"action description\": \"performing task {a:04x}\"}}, \
             {{\"action description\": \"adjusting object {b:04x}\"}}]"
        ),
        PromptFamily::SceneList => format!(
            "[{{\"description\": \"A person works near object {a:04x}\", \
             \"setting\": \"room {b:04x}\", \"action\": \"working\"}}]"
        ),
        PromptFamily::ObjectList => format!(
            "[{{\"object_name\": \"object {a:04x}\", \"number\": 1, \
             \"attributes\": \"plain, small\"}}, \
             {{\"object_name\": \"object {b:04x}\", \"number\": 2}}]"
        ),
        PromptFamily::SpatialList => format!(
            "[{{\"object_name\": \"object {a:04x}\", \"number\": 1, \
             \"attributes\": \"gray\", \
             \"spatial_relationship\": [\"on the table\", \"left of object {c:04x}\"]}}]"
        ),
        PromptFamily::Generic => format!("response {h:016x}"),
    }
}

impl ModelGateway for OfflineGateway {
    fn embed(&self, req: &EmbedRequest) -> Result<EmbedResponse, GatewayError> {
        if req.payload.trim().is_empty() {
            return Err(GatewayError::Precondition("embed payload is empty".into()));
        }
        self.log.push(CallRecord {
            capability: Capability::Embed,
            detail: req.payload.clone(),
            attempts: 1,
        });
        let vector = match req.kind {
            PayloadKind::Text => Self::embed_text_mock(&req.payload, self.dim),
            PayloadKind::Image => Self::embed_image_mock(&req.payload, self.dim),
        };
        Ok(EmbedResponse {
            dim: vector.len(),
            vector,
        })
    }

    fn caption(&self, req: &CaptionRequest) -> Result<CaptionResponse, GatewayError> {
        if req.frames.is_empty() {
            return Err(GatewayError::Precondition(
                "caption request carries no frames".into(),
            ));
        }
        // Offline mode checks locator syntax only: no empties.
        if let Some(bad) = req.frames.iter().position(|f| f.trim().is_empty()) {
            return Err(GatewayError::Precondition(format!(
                "frame locator {bad} is empty"
            )));
        }
        self.log.push(CallRecord {
            capability: Capability::Caption,
            detail: req.prompt.clone(),
            attempts: 1,
        });
        Ok(CaptionResponse {
            text: canned_caption(req),
        })
    }

    fn answer(&self, req: &AnswerRequest) -> Result<AnswerResponse, GatewayError> {
        if req.question.trim().is_empty() {
            return Err(GatewayError::Precondition("question is empty".into()));
        }
        if req.context.len() > self.max_context_blocks {
            return Err(GatewayError::BlockLimit {
                got: req.context.len(),
                limit: self.max_context_blocks,
            });
        }
        self.log.push(CallRecord {
            capability: Capability::Answer,
            detail: req.question.clone(),
            attempts: 1,
        });

        let text = match &req.options {
            Some(options) if !options.is_empty() => {
                let joined: String = req
                    .context
                    .iter()
                    .map(ContextBlock::payload)
                    .collect::<Vec<_>>()
                    .join("\n");
                let ctx = Self::embed_text_mock(&joined, self.dim);
                let mut best = 0usize;
                let mut best_score = f64::NEG_INFINITY;
                for (i, option) in options.iter().enumerate() {
                    let ov = Self::embed_text_mock(option, self.dim);
                    let score: f64 = ctx.iter().zip(&ov).map(|(x, y)| x * y).sum();
                    if score > best_score {
                        best_score = score;
                        best = i;
                    }
                }
                char::from(b'A' + best as u8).to_string()
            }
            _ => {
                let mut h = Fnv1a::new();
                h.update(req.question.as_bytes());
                for block in &req.context {
                    h.update(b"\0");
                    h.update(block.payload().as_bytes());
                }
                format!("offline answer {:016x}", h.finish())
            }
        };
        Ok(AnswerResponse { text })
    }

    fn call_log(&self) -> Vec<CallRecord> {
        self.log.snapshot()
    }

    fn embedder_fingerprint(&self) -> String {
        format!("offline-bag-fnv1a-d{}", self.dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gw() -> OfflineGateway {
        OfflineGateway::with_dim(128)
    }

    #[test]
    fn embed_is_deterministic_and_unit_norm() {
        let gw = gw();
        let a = gw.embed(&EmbedRequest::text("kitchen cooking")).unwrap();
        let b = gw.embed(&EmbedRequest::text("kitchen cooking")).unwrap();
        assert_eq!(a, b);
        let norm: f64 = a.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn embed_is_bag_of_tokens() {
        let gw = gw();
        let ab = gw.embed(&EmbedRequest::text("a b")).unwrap();
        let ba = gw.embed(&EmbedRequest::text("b a")).unwrap();
        assert_eq!(ab, ba);

        // Oracle: hash each token, accumulate, normalize.
        let mut acc = vec![0.0f64; 128];
        for token in ["a", "b"] {
            acc[(fnv1a(token.as_bytes()) % 128) as usize] += 1.0;
        }
        l2_normalize(&mut acc);
        assert_eq!(ab.vector, acc);
    }

    #[test]
    fn empty_payload_is_a_precondition_error() {
        assert!(matches!(
            gw().embed(&EmbedRequest::text("  ")),
            Err(GatewayError::Precondition(_))
        ));
    }

    #[test]
    fn caption_requires_frames_and_is_deterministic() {
        let gw = gw();
        let req = CaptionRequest {
            frames: vec!["vid/0.jpg".into(), "vid/2000.jpg".into(), "vid/4000.jpg".into()],
            prompt: "tell me about the **settings** please".into(),
            max_tokens: 512,
        };
        let a = gw.caption(&req).unwrap();
        let b = gw.caption(&req).unwrap();
        assert_eq!(a, b);
        assert!(a.text.starts_with('['), "scene prompt yields a list: {}", a.text);

        let empty = CaptionRequest {
            frames: vec![],
            prompt: "p".into(),
            max_tokens: 8,
        };
        assert!(matches!(
            gw.caption(&empty),
            Err(GatewayError::Precondition(_))
        ));
    }

    #[test]
    fn answer_picks_nearest_option() {
        let gw = gw();
        let req = AnswerRequest {
            context: vec![ContextBlock::Text(
                "the chef plates the grilled salmon".into(),
            )],
            question: "What happens?".into(),
            options: Some(vec![
                "a dog chases the ball".into(),
                "the chef plates the grilled salmon".into(),
                "rain falls on the window".into(),
            ]),
        };
        assert_eq!(gw.answer(&req).unwrap().text, "B");
    }

    #[test]
    fn answer_enforces_block_limit_and_question() {
        let mut gw = gw();
        gw.max_context_blocks = 4;
        let blocks: Vec<ContextBlock> = (0..10)
            .map(|i| ContextBlock::Text(format!("block {i}")))
            .collect();
        let req = AnswerRequest {
            context: blocks,
            question: "q".into(),
            options: None,
        };
        assert!(matches!(
            gw.answer(&req),
            Err(GatewayError::BlockLimit { got: 10, limit: 4 })
        ));

        let req = AnswerRequest {
            context: vec![],
            question: " ".into(),
            options: None,
        };
        assert!(matches!(
            gw.answer(&req),
            Err(GatewayError::Precondition(_))
        ));
    }

    #[test]
    fn call_log_records_each_call() {
        let gw = gw();
        gw.embed(&EmbedRequest::text("x")).unwrap();
        gw.caption(&CaptionRequest {
            frames: vec!["f".into()],
            prompt: "p".into(),
            max_tokens: 1,
        })
        .unwrap();
        let log = gw.call_log();
        assert_eq!(log.len(), 2);
        assert_eq!(log[0].capability, Capability::Embed);
        assert_eq!(log[1].capability, Capability::Caption);
        assert_eq!(log[1].detail, "p");
        assert_eq!(log[1].attempts, 1);
    }
}
