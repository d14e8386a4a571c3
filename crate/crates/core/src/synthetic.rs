//! An offline stand-in for a chat-completion provider.
//!
//! [`SyntheticProvider`] answers the built-in prompts with well-formed
//! payloads derived from the prompt text itself: refinement applies the rules
//! pass, generation quotes phrases from the chunk. Pair it with a gateway in
//! record mode to author replay fixtures for any transcript without a network
//! or an API key. The content is placeholder material, not teaching content.

use std::sync::LazyLock;

use regex::Regex;
use serde_json::{json, Value};

use crate::gateway::template::{
    FLASHCARD_INSTRUCTION, MINI_LESSON_INSTRUCTION, QUIZ_INSTRUCTION, REFINE_INSTRUCTION, SCENARIO_INSTRUCTION,
};
use crate::gateway::{HttpReply, Transport, TransportError};
use crate::refine::{refine_rules, FillerLexicon};

static COUNT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"Create exactly (\d+) ").expect("count regex"));

#[derive(Clone, Debug, Default)]
pub struct SyntheticProvider {
    lexicon: FillerLexicon,
}

impl SyntheticProvider {
    pub fn new() -> Self {
        SyntheticProvider::default()
    }

    /// The completion text this provider gives for a prompt, or `None` for a
    /// prompt it does not recognize.
    pub fn answer(&self, prompt: &str) -> Option<String> {
        if prompt.starts_with(REFINE_INSTRUCTION) {
            let transcript = prompt.split_once("Lecture transcript:\n")?.1;
            return Some(refine_rules(transcript, &self.lexicon));
        }
        let transcript = between(prompt, "Refined transcript:\n", "\n\nLecture slides:\n")?;
        let count = COUNT
            .captures(prompt)
            .and_then(|c| c[1].parse::<usize>().ok())
            .unwrap_or(1)
            .max(1);
        let phrases = phrases(transcript, count);
        let records: Vec<Value> = if prompt.starts_with(FLASHCARD_INSTRUCTION) {
            phrases.iter().map(|p| flashcard(p)).collect()
        } else if prompt.starts_with(QUIZ_INSTRUCTION) {
            phrases.iter().enumerate().map(|(i, p)| quiz(i, p)).collect()
        } else if prompt.starts_with(MINI_LESSON_INSTRUCTION) {
            phrases.iter().map(|p| lesson(p, transcript)).collect()
        } else if prompt.starts_with(SCENARIO_INSTRUCTION) {
            vec![scenario(&phrases[0])]
        } else {
            return None;
        };
        Some(format!(
            "```json\n{}\n```",
            serde_json::to_string_pretty(&records).expect("json values serialize")
        ))
    }
}

impl Transport for SyntheticProvider {
    fn post_json(&self, _url: &str, _bearer: &str, body: &str) -> Result<HttpReply, TransportError> {
        let request: Value = serde_json::from_str(body).map_err(|e| TransportError::Connect(e.to_string()))?;
        let prompt = request["messages"]
            .as_array()
            .and_then(|m| m.last())
            .and_then(|m| m["content"].as_str())
            .unwrap_or("");
        Ok(match self.answer(prompt) {
            Some(content) => HttpReply {
                status: 200,
                body: json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]})
                    .to_string(),
            },
            None => HttpReply {
                status: 400,
                body: json!({"error": {"message": "unrecognized prompt"}}).to_string(),
            },
        })
    }
}

fn between<'a>(text: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = text.find(open)? + open.len();
    let len = text[start..].find(close)?;
    Some(&text[start..start + len])
}

/// `n` distinct short phrases spread across the text.
fn phrases(text: &str, n: usize) -> Vec<String> {
    let words: Vec<&str> = text
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
        .collect();
    if words.is_empty() {
        return (1..=n).map(|i| format!("topic {i}")).collect();
    }
    let stride = (words.len() / n).max(1);
    (0..n)
        .map(|i| {
            let start = (i * stride) % words.len();
            let end = (start + 6).min(words.len());
            format!("{} (part {})", words[start..end].join(" "), i + 1)
        })
        .collect()
}

fn flashcard(phrase: &str) -> Value {
    json!({
        "front": format!("What does the lecture say about \"{phrase}\"?"),
        "back": format!("It discusses {phrase} in context."),
        "media": [],
    })
}

fn quiz(i: usize, phrase: &str) -> Value {
    let correct = ["A", "B", "C", "D"][i % 4];
    json!({
        "stem": format!("Which statement about \"{phrase}\" matches the lecture?"),
        "options": [
            {"label": "A", "text": format!("The lecture defines {phrase}.")},
            {"label": "B", "text": format!("The lecture never mentions {phrase}.")},
            {"label": "C", "text": format!("The lecture says {phrase} is deprecated.")},
            {"label": "D", "text": format!("The lecture treats {phrase} as optional.")},
        ],
        "correct_label": correct,
        "explanation": format!("Option {correct} restates the lecture."),
        "hint": "Reread the relevant part of the transcript.",
        "topic": phrase,
    })
}

fn lesson(phrase: &str, transcript: &str) -> Value {
    let body: Vec<&str> = transcript.split_whitespace().take(1200).collect();
    json!({
        "title": format!("Understanding {phrase}"),
        "objective": format!("Explain {phrase}."),
        "content": format!("## {phrase}\n\n{}", body.join(" ")),
    })
}

fn scenario(phrase: &str) -> Value {
    json!({
        "objective": format!("Apply {phrase}"),
        "scenario": format!("A teammate asks you to explain {phrase} during a code review."),
        "task": format!("Walk through {phrase} with a worked example."),
        "activity": {
            "introduction": format!("Recall what the lecture said about {phrase}."),
            "hands_on": format!("Write a short program that uses {phrase}."),
            "assessment": "Explain your program to a peer and answer their questions.",
        },
    })
}
