//! The five captioning prompt templates, embedded verbatim as build-time
//! constants. Do not edit the `prompts/*.txt` assets: downstream parsing and
//! call accounting key off their exact text.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Timeline,
    Action,
    Scene,
    Object,
    Spatial,
}

impl std::fmt::Display for PromptKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PromptKind::Timeline => write!(f, "timeline"),
            PromptKind::Action => write!(f, "action"),
            PromptKind::Scene => write!(f, "scene"),
            PromptKind::Object => write!(f, "object"),
            PromptKind::Spatial => write!(f, "spatial"),
        }
    }
}

/// What shape of output a template demands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpectedForm {
    /// Free text at most this many words.
    FreeText(usize),
    /// A JSON list of records, or the prompt's sentinel string.
    SentinelOrList,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptTemplate {
    pub kind: PromptKind,
    pub text: &'static str,
    pub expected_form: ExpectedForm,
}

pub const TIMELINE: PromptTemplate = PromptTemplate {
    kind: PromptKind::Timeline,
    text: include_str!("prompts/timeline.txt"),
    expected_form: ExpectedForm::FreeText(50),
};

pub const ACTION: PromptTemplate = PromptTemplate {
    kind: PromptKind::Action,
    text: include_str!("prompts/action.txt"),
    expected_form: ExpectedForm::SentinelOrList,
};

pub const SCENE: PromptTemplate = PromptTemplate {
    kind: PromptKind::Scene,
    text: include_str!("prompts/scene.txt"),
    expected_form: ExpectedForm::SentinelOrList,
};

pub const OBJECT: PromptTemplate = PromptTemplate {
    kind: PromptKind::Object,
    text: include_str!("prompts/object.txt"),
    expected_form: ExpectedForm::SentinelOrList,
};

pub const SPATIAL: PromptTemplate = PromptTemplate {
    kind: PromptKind::Spatial,
    text: include_str!("prompts/spatial.txt"),
    expected_form: ExpectedForm::SentinelOrList,
};

pub const ALL: [PromptTemplate; 5] = [TIMELINE, ACTION, SCENE, OBJECT, SPATIAL];

/// Identify which template a sent prompt came from. Retries may append a
/// reminder after the template text, so this matches by prefix.
pub fn identify(prompt: &str) -> Option<PromptKind> {
    ALL.iter()
        .find(|t| prompt.starts_with(t.text))
        .map(|t| t.kind)
}
