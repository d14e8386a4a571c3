//! Pulls the record array out of a model completion and maps it onto element
//! bodies.
//!
//! Completions often wrap the array in prose or a code fence. The first `[`
//! that opens an array of objects (or an empty array) is taken as the block;
//! failing that, the first balanced `[...]` anywhere in the text.

use serde_json::{Map, Value};
use thiserror::Error;

use super::body::{ElementBody, FlashcardBody, MiniLessonBody, QuizBody, QuizOption, ScenarioActivity, ScenarioBody};
use crate::model::ElementKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("no structured array found in completion")]
    NoStructuredBlock,
    #[error("could not decode structured block at byte {offset}: {message}")]
    DecodeError { offset: usize, message: String },
    #[error("schema violations: {}", .0.join("; "))]
    SchemaError(Vec<String>),
}

impl ParseError {
    /// Human-readable problems, as fed back to the model during repair.
    pub fn problems(&self) -> Vec<String> {
        match self {
            ParseError::SchemaError(v) => v.clone(),
            other => vec![other.to_string()],
        }
    }
}

pub fn parse_structured(kind: ElementKind, raw: &str) -> Result<Vec<ElementBody>, ParseError> {
    let (start, end) = locate_array(raw)?;
    let block = &raw[start..end];
    let records: Vec<Value> = serde_json::from_str(block).map_err(|e| ParseError::DecodeError {
        offset: start + offset_of(block, e.line(), e.column()),
        message: e.to_string(),
    })?;
    if records.is_empty() {
        return Err(ParseError::SchemaError(vec!["the array holds no records".into()]));
    }

    let mut bodies = Vec::with_capacity(records.len());
    let mut violations = Vec::new();
    for (i, record) in records.iter().enumerate() {
        let n = i + 1;
        let Some(obj) = record.as_object() else {
            violations.push(format!("record {n}: expected an object"));
            continue;
        };
        let mut errs = Vec::new();
        let body = match kind {
            ElementKind::Flashcard => decode_flashcard(obj, &mut errs),
            ElementKind::Quiz => decode_quiz(obj, &mut errs),
            ElementKind::MiniLesson => decode_lesson(obj, &mut errs),
            ElementKind::Scenario => decode_scenario(obj, &mut errs),
        };
        if let Some(body) = body.filter(|_| errs.is_empty()) {
            let body = body.normalized();
            match body.validate() {
                Ok(()) => bodies.push(body),
                Err(found) => errs.extend(found),
            }
        }
        violations.extend(errs.into_iter().map(|e| format!("record {n}: {e}")));
    }
    if violations.is_empty() {
        Ok(bodies)
    } else {
        Err(ParseError::SchemaError(violations))
    }
}

/// Byte range of the structured array inside `raw`.
fn locate_array(raw: &str) -> Result<(usize, usize), ParseError> {
    let bytes = raw.as_bytes();
    let opens: Vec<usize> = raw.match_indices('[').map(|(i, _)| i).collect();

    let opens_records = |i: usize| {
        bytes[i + 1..]
            .iter()
            .find(|b| !b.is_ascii_whitespace())
            .is_some_and(|b| *b == b'{' || *b == b']')
    };

    if let Some(&start) = opens.iter().find(|&&i| opens_records(i)) {
        return match balanced_end(bytes, start) {
            Some(end) => Ok((start, end)),
            None => Err(ParseError::DecodeError {
                offset: raw.len(),
                message: "structured array is not terminated".into(),
            }),
        };
    }
    opens
        .iter()
        .find_map(|&start| balanced_end(bytes, start).map(|end| (start, end)))
        .ok_or(ParseError::NoStructuredBlock)
}

/// Index one past the bracket closing the one at `start`, skipping brackets
/// inside JSON strings.
fn balanced_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'[' | b'{' => depth += 1,
            b']' | b'}' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return (b == b']').then_some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Converts serde_json's 1-based line/column into a byte offset.
fn offset_of(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

// ---------------------------------------------------------------------------
// Field mapping
// ---------------------------------------------------------------------------

fn text_field(obj: &Map<String, Value>, field: &str, errs: &mut Vec<String>) -> Option<String> {
    match obj.get(field) {
        Some(Value::String(s)) => Some(s.clone()),
        Some(Value::Null) | None => {
            errs.push(format!("missing field `{field}`"));
            None
        }
        Some(_) => {
            errs.push(format!("field `{field}` must be a string"));
            None
        }
    }
}

fn optional_text(obj: &Map<String, Value>, field: &str, errs: &mut Vec<String>) -> Option<String> {
    match obj.get(field) {
        Some(Value::String(s)) if !s.trim().is_empty() => Some(s.clone()),
        Some(Value::String(_)) | Some(Value::Null) | None => None,
        Some(_) => {
            errs.push(format!("field `{field}` must be a string"));
            None
        }
    }
}

fn decode_flashcard(obj: &Map<String, Value>, errs: &mut Vec<String>) -> Option<ElementBody> {
    let front = text_field(obj, "front", errs);
    let back = text_field(obj, "back", errs);
    let media = match obj.get("media") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .filter_map(|m| match m {
                Value::String(s) => Some(s.clone()),
                _ => {
                    errs.push("field `media` must hold strings".into());
                    None
                }
            })
            .collect(),
        Some(_) => {
            errs.push("field `media` must be an array".into());
            Vec::new()
        }
    };
    Some(ElementBody::Flashcard(FlashcardBody {
        front: front?,
        back: back?,
        media,
    }))
}

fn parse_label(raw: &str) -> Option<char> {
    let trimmed = raw.trim().trim_end_matches([')', '.', ':']);
    let mut chars = trimmed.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if c.is_ascii_alphabetic() => Some(c.to_ascii_uppercase()),
        _ => None,
    }
}

/// Splits `"A) text"` / `"B. text"` into label and text.
fn split_labelled(s: &str) -> (Option<char>, String) {
    let trimmed = s.trim_start();
    let mut chars = trimmed.char_indices();
    if let (Some((_, c)), Some((i, sep))) = (chars.next(), chars.next()) {
        if c.is_ascii_uppercase() && matches!(sep, ')' | '.' | ':') {
            return (Some(c), trimmed[i + 1..].trim().to_string());
        }
    }
    (None, s.trim().to_string())
}

fn decode_quiz(obj: &Map<String, Value>, errs: &mut Vec<String>) -> Option<ElementBody> {
    let stem = text_field(obj, "stem", errs);

    let mut options = Vec::new();
    let mut flagged = Vec::new();
    match obj.get("options") {
        Some(Value::Array(items)) => {
            for (i, item) in items.iter().enumerate() {
                let fallback = char::from_u32(u32::from(b'A') + i as u32).unwrap_or('?');
                match item {
                    Value::String(s) => {
                        let (label, text) = split_labelled(s);
                        options.push(QuizOption {
                            label: label.unwrap_or(fallback),
                            text,
                        });
                    }
                    Value::Object(o) => {
                        let label = match o.get("label") {
                            Some(Value::String(l)) => parse_label(l).or_else(|| {
                                errs.push(format!("option {}: label {l:?} is not a single letter", i + 1));
                                None
                            }),
                            None | Some(Value::Null) => Some(fallback),
                            Some(_) => {
                                errs.push(format!("option {}: label must be a string", i + 1));
                                None
                            }
                        };
                        let text = match o.get("text") {
                            Some(Value::String(t)) => Some(t.clone()),
                            _ => {
                                errs.push(format!("option {}: missing string `text`", i + 1));
                                None
                            }
                        };
                        match o.get("correct") {
                            Some(Value::Bool(true)) => flagged.push(label.unwrap_or(fallback)),
                            Some(Value::Bool(false)) | Some(Value::Null) | None => {}
                            Some(_) => errs.push(format!("option {}: `correct` must be a boolean", i + 1)),
                        }
                        if let (Some(label), Some(text)) = (label, text) {
                            options.push(QuizOption { label, text });
                        }
                    }
                    _ => errs.push(format!("option {}: expected a string or an object", i + 1)),
                }
            }
        }
        None | Some(Value::Null) => errs.push("missing field `options`".into()),
        Some(_) => errs.push("field `options` must be an array".into()),
    }

    let declared = match obj.get("correct_label") {
        Some(Value::String(l)) => match parse_label(l) {
            Some(c) => Some(c),
            None => {
                errs.push(format!("correct_label {l:?} is not a single letter"));
                return None;
            }
        },
        None | Some(Value::Null) => None,
        Some(_) => {
            errs.push("field `correct_label` must be a string".into());
            return None;
        }
    };
    if flagged.len() > 1 {
        errs.push(format!(
            "exactly one correct option required, {} options are marked correct",
            flagged.len()
        ));
        return None;
    }
    let correct_label = match (declared, flagged.first()) {
        (Some(d), Some(&f)) if d != f => {
            errs.push(format!("correct_label {d} disagrees with option {f} marked correct"));
            return None;
        }
        (Some(d), _) => d,
        (None, Some(&f)) => f,
        (None, None) => {
            errs.push("missing field `correct_label`".into());
            return None;
        }
    };

    let explanation = optional_text(obj, "explanation", errs);
    let hint = optional_text(obj, "hint", errs);
    let topic = optional_text(obj, "topic", errs);
    Some(ElementBody::Quiz(QuizBody {
        stem: stem?,
        options,
        correct_label,
        explanation,
        hint,
        topic,
    }))
}

fn decode_lesson(obj: &Map<String, Value>, errs: &mut Vec<String>) -> Option<ElementBody> {
    let title = text_field(obj, "title", errs);
    let objective = text_field(obj, "objective", errs);
    let content = text_field(obj, "content", errs);
    // Any model-supplied duration is ignored; it is recomputed from content.
    Some(ElementBody::MiniLesson(MiniLessonBody::new(
        title?, objective?, content?,
    )))
}

fn decode_scenario(obj: &Map<String, Value>, errs: &mut Vec<String>) -> Option<ElementBody> {
    let objective = text_field(obj, "objective", errs);
    let scenario = text_field(obj, "scenario", errs);
    let task = text_field(obj, "task", errs);
    let activity = match obj.get("activity") {
        Some(Value::Object(a)) => {
            let introduction = text_field(a, "introduction", errs);
            let hands_on = text_field(a, "hands_on", errs);
            let assessment = text_field(a, "assessment", errs);
            Some(ScenarioActivity {
                introduction: introduction?,
                hands_on: hands_on?,
                assessment: assessment?,
            })
        }
        None | Some(Value::Null) => {
            errs.push("missing field `activity`".into());
            None
        }
        Some(_) => {
            errs.push("field `activity` must be an object".into());
            None
        }
    };
    Some(ElementBody::Scenario(ScenarioBody {
        objective: objective?,
        scenario: scenario?,
        task: task?,
        activity: activity?,
    }))
}
