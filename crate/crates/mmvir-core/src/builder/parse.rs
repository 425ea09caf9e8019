//! Tolerant parsing of captioner list outputs.
//!
//! Live models rarely return the strict JSON the prompts demand. This parser
//! strips code fences, locates the bracketed list, normalizes single-quoted
//! strings and bare words into valid JSON, and keeps unknown keys in an
//! extras map. The two sentinel strings are matched case-insensitively as
//! substrings.

use std::collections::BTreeMap;

use serde_json::Value;
use thiserror::Error;

use crate::repr::{ActionRecord, ObjectRecord, SceneRecord, SpatialRecord};

pub const SENTINEL_NO_ACTION: &str = "no action detected";
pub const SENTINEL_NO_OBJECT: &str = "no object detected";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaptionKind {
    Action,
    Scene,
    Object,
    Spatial,
}

impl std::fmt::Display for CaptionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CaptionKind::Action => write!(f, "action"),
            CaptionKind::Scene => write!(f, "scene"),
            CaptionKind::Object => write!(f, "object"),
            CaptionKind::Spatial => write!(f, "spatial"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParsedList {
    /// The captioner returned one of the sentinel strings.
    Sentinel,
    Actions(Vec<ActionRecord>),
    Scenes(Vec<SceneRecord>),
    Objects(Vec<ObjectRecord>),
    Spatials(Vec<SpatialRecord>),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("no parseable list and no sentinel in caption output")]
    NoList,
    #[error("empty list forbidden by the prompt")]
    EmptyList,
    #[error("list entry {index} is not a record object")]
    NotRecord { index: usize },
    #[error("record {index} is missing required field '{field}'")]
    MissingField { index: usize, field: &'static str },
}

fn is_sentinel(raw: &str) -> bool {
    let lower = raw.to_lowercase();
    lower.contains(SENTINEL_NO_ACTION) || lower.contains(SENTINEL_NO_OBJECT)
}

/// Parse a raw caption into records of the expected kind, or the sentinel.
pub fn parse_caption_list(raw: &str, kind: CaptionKind) -> Result<ParsedList, ParseError> {
    let body = strip_fences(raw);
    match find_record_list(body) {
        Some(items) if items.is_empty() => {
            if is_sentinel(raw) {
                Ok(ParsedList::Sentinel)
            } else {
                Err(ParseError::EmptyList)
            }
        }
        Some(items) => map_records(items, kind),
        None => {
            if is_sentinel(raw) {
                Ok(ParsedList::Sentinel)
            } else {
                Err(ParseError::NoList)
            }
        }
    }
}

/// Drop a ``` fence (with optional language tag) around the payload.
fn strip_fences(raw: &str) -> &str {
    let Some(open) = raw.find("```") else {
        return raw;
    };
    let after = &raw[open + 3..];
    let content_start = after.find('\n').map(|i| i + 1).unwrap_or(0);
    let content = &after[content_start..];
    match content.find("```") {
        Some(close) => &content[..close],
        None => content,
    }
}

/// Try every bracketed span, outermost first, until one parses as a JSON
/// list of record objects after normalization. A span that parses to an
/// empty list counts only when no record list exists anywhere.
fn find_record_list(body: &str) -> Option<Vec<Value>> {
    let chars: Vec<char> = body.chars().collect();
    let starts: Vec<usize> = chars
        .iter()
        .enumerate()
        .filter(|(_, c)| **c == '[')
        .map(|(i, _)| i)
        .take(16)
        .collect();
    let mut saw_empty = false;
    for &start in &starts {
        let span = match balanced_span(&chars, start) {
            Some(end) => &chars[start..=end],
            None => match chars.iter().rposition(|&c| c == ']') {
                Some(end) if end > start => &chars[start..=end],
                _ => continue,
            },
        };
        let relaxed = relax_to_json(span);
        if let Ok(Value::Array(items)) = serde_json::from_str::<Value>(&relaxed) {
            if items.is_empty() {
                saw_empty = true;
            } else if items.iter().all(Value::is_object) {
                return Some(items);
            }
        }
    }
    if saw_empty {
        Some(Vec::new())
    } else {
        None
    }
}

/// Index of the bracket matching `chars[start]`, skipping quoted spans.
fn balanced_span(chars: &[char], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut quote: Option<char> = None;
    let mut i = start;
    while i < chars.len() {
        let c = chars[i];
        if let Some(q) = quote {
            if c == '\\' {
                i += 1;
            } else if c == q {
                quote = None;
            }
        } else {
            match c {
                '"' | '\'' => quote = Some(c),
                '[' | '{' => depth += 1,
                ']' | '}' => {
                    depth = depth.saturating_sub(1);
                    if depth == 0 {
                        return Some(i);
                    }
                }
                _ => {}
            }
        }
        i += 1;
    }
    None
}

/// Rewrite relaxed JSON (single quotes, bare words, trailing commas) into
/// strict JSON.
fn relax_to_json(chars: &[char]) -> String {
    let mut out = String::with_capacity(chars.len() + 16);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '"' => {
                out.push('"');
                i += 1;
                while i < chars.len() {
                    let ch = chars[i];
                    out.push(ch);
                    if ch == '\\' && i + 1 < chars.len() {
                        i += 1;
                        out.push(chars[i]);
                    } else if ch == '"' {
                        break;
                    }
                    i += 1;
                }
                i += 1;
            }
            '\'' => {
                out.push('"');
                i += 1;
                while i < chars.len() {
                    let ch = chars[i];
                    if ch == '\\' && i + 1 < chars.len() && chars[i + 1] == '\'' {
                        out.push('\'');
                        i += 2;
                        continue;
                    }
                    if ch == '\'' {
                        // Closes only when followed by a structural char;
                        // otherwise it is a literal apostrophe (man's).
                        let mut j = i + 1;
                        while j < chars.len() && chars[j].is_whitespace() {
                            j += 1;
                        }
                        if j >= chars.len() || matches!(chars[j], ',' | ':' | '}' | ']') {
                            break;
                        }
                        out.push('\'');
                        i += 1;
                        continue;
                    }
                    if ch == '"' {
                        out.push_str("\\\"");
                    } else {
                        out.push(ch);
                    }
                    i += 1;
                }
                out.push('"');
                i += 1;
            }
            '[' | '{' | ',' | ':' => {
                out.push(c);
                i += 1;
            }
            ']' | '}' => {
                while out.ends_with(char::is_whitespace) {
                    out.pop();
                }
                if out.ends_with(',') {
                    out.pop();
                }
                out.push(c);
                i += 1;
            }
            c if c.is_whitespace() => {
                out.push(c);
                i += 1;
            }
            _ => {
                let start = i;
                while i < chars.len() && !matches!(chars[i], ',' | ':' | '}' | ']' | '{' | '[') {
                    i += 1;
                }
                let token: String = chars[start..i].iter().collect();
                let token = token.trim();
                if token.is_empty() {
                    continue;
                }
                if token == "true"
                    || token == "false"
                    || token == "null"
                    || token.parse::<f64>().is_ok()
                {
                    out.push_str(token);
                } else {
                    out.push_str(
                        &serde_json::to_string(token).expect("string serialization is infallible"),
                    );
                }
            }
        }
    }
    out
}

fn map_records(items: Vec<Value>, kind: CaptionKind) -> Result<ParsedList, ParseError> {
    match kind {
        CaptionKind::Action => {
            let records = items
                .into_iter()
                .enumerate()
                .map(|(index, item)| {
                    let mut map = as_record(item, index)?;
                    let description = take_string(
                        &mut map,
                        &["action description", "action_description", "action", "description"],
                    )
                    .or_else(|| single_value_fallback(&mut map))
                    .ok_or(ParseError::MissingField {
                        index,
                        field: "action description",
                    })?;
                    Ok(ActionRecord {
                        description,
                        extras: map,
                    })
                })
                .collect::<Result<Vec<_>, ParseError>>()?;
            Ok(ParsedList::Actions(records))
        }
        CaptionKind::Scene => {
            let records = items
                .into_iter()
                .enumerate()
                .map(|(index, item)| {
                    let mut map = as_record(item, index)?;
                    let description =
                        take_string(&mut map, &["description"]).unwrap_or_default();
                    let setting = take_string(&mut map, &["setting"]).unwrap_or_default();
                    let action = take_string(&mut map, &["action"]).unwrap_or_default();
                    if description.is_empty() && setting.is_empty() && action.is_empty() {
                        return Err(ParseError::MissingField {
                            index,
                            field: "description",
                        });
                    }
                    Ok(SceneRecord {
                        description,
                        setting,
                        action,
                        extras: map,
                    })
                })
                .collect::<Result<Vec<_>, ParseError>>()?;
            Ok(ParsedList::Scenes(records))
        }
        CaptionKind::Object => {
            let records = items
                .into_iter()
                .enumerate()
                .map(|(index, item)| {
                    let mut map = as_record(item, index)?;
                    let name = take_string(&mut map, &["object_name", "name", "object"]).ok_or(
                        ParseError::MissingField {
                            index,
                            field: "object_name",
                        },
                    )?;
                    let count = take_count(&mut map);
                    let attributes = take_list(&mut map, &["attributes", "attribute"]);
                    Ok(ObjectRecord {
                        name,
                        count,
                        attributes,
                        extras: map,
                    })
                })
                .collect::<Result<Vec<_>, ParseError>>()?;
            Ok(ParsedList::Objects(records))
        }
        CaptionKind::Spatial => {
            let records = items
                .into_iter()
                .enumerate()
                .map(|(index, item)| {
                    let mut map = as_record(item, index)?;
                    let name = take_string(&mut map, &["object_name", "name", "object"]).ok_or(
                        ParseError::MissingField {
                            index,
                            field: "object_name",
                        },
                    )?;
                    let count = take_count(&mut map);
                    let attributes = take_list(&mut map, &["attributes", "attribute"]);
                    let relationships = take_list(
                        &mut map,
                        &[
                            "spatial_relationship",
                            "spatial_relationships",
                            "relationships",
                            "relationship",
                        ],
                    );
                    Ok(SpatialRecord {
                        name,
                        count,
                        attributes,
                        relationships,
                        extras: map,
                    })
                })
                .collect::<Result<Vec<_>, ParseError>>()?;
            Ok(ParsedList::Spatials(records))
        }
    }
}

fn as_record(item: Value, index: usize) -> Result<BTreeMap<String, Value>, ParseError> {
    match item {
        Value::Object(map) => Ok(map.into_iter().collect()),
        _ => Err(ParseError::NotRecord { index }),
    }
}

fn value_to_string(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn take_string(map: &mut BTreeMap<String, Value>, keys: &[&str]) -> Option<String> {
    for key in keys {
        if let Some(value) = map.get(*key) {
            if let Some(s) = value_to_string(value) {
                map.remove(*key);
                return Some(s);
            }
        }
    }
    None
}

/// Lone-value record like `{"something": "text"}`: use the single value.
fn single_value_fallback(map: &mut BTreeMap<String, Value>) -> Option<String> {
    if map.len() == 1 {
        let key = map.keys().next().cloned()?;
        let s = value_to_string(map.get(&key)?)?;
        map.remove(&key);
        return Some(s);
    }
    None
}

fn take_count(map: &mut BTreeMap<String, Value>) -> u64 {
    for key in ["number", "count"] {
        if let Some(value) = map.remove(key) {
            let n = match &value {
                Value::Number(n) => n.as_f64().unwrap_or(1.0),
                Value::String(s) => s.trim().parse::<f64>().unwrap_or(1.0),
                _ => 1.0,
            };
            return (n.round() as i64).max(1) as u64;
        }
    }
    1
}

/// Attribute/relationship lists arrive as arrays or comma-separated strings.
fn take_list(map: &mut BTreeMap<String, Value>, keys: &[&str]) -> Vec<String> {
    for key in keys {
        if let Some(value) = map.remove(*key) {
            return match value {
                Value::Array(items) => items
                    .iter()
                    .filter_map(value_to_string)
                    .filter(|s| !s.is_empty())
                    .collect(),
                Value::String(s) => s
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect(),
                other => value_to_string(&other).into_iter().collect(),
            };
        }
    }
    Vec::new()
}
