//! Transcript chunking and refinement.
//!
//! Refinement runs either through the gateway with the built-in refine prompt
//! or through a deterministic filler-removal pass that needs no model.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{sha256_hex, ChatRequest, Gateway, GatewayError, PromptTemplate, TemplateError, TemplateId};
use crate::model::{Clock, Provenance, TranscriptSegment};

pub const DEFAULT_CHUNK_WORDS: usize = 3000;
pub const DEFAULT_OVERLAP_WORDS: usize = 200;
pub const MIN_CHUNK_WORDS: usize = 100;
pub const REFINE_TEMPERATURE: f64 = 0.2;

/// Only the fillers the refine prompt names; broader lists start deleting
/// real words ("like", "so").
pub const DEFAULT_FILLERS: [&str; 4] = ["you know", "um", "uh", "okay?"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefineError {
    #[error("bad chunk configuration: {0}")]
    BadChunkConfig(String),
    #[error("bad refinement input: {0}")]
    BadInput(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

// ---------------------------------------------------------------------------
// Chunking
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    /// 0-based.
    pub chunk_no: u32,
    pub start_word: usize,
    /// Exclusive.
    pub end_word: usize,
    pub text: String,
}

/// Flattens the segments into whitespace-separated words and cuts windows of
/// `chunk_words` that advance by `chunk_words - overlap_words`. The final
/// window ends at the last word.
pub fn chunk_transcript(
    segments: &[TranscriptSegment],
    chunk_words: usize,
    overlap_words: usize,
) -> Result<Vec<Chunk>, RefineError> {
    if chunk_words < MIN_CHUNK_WORDS {
        return Err(RefineError::BadChunkConfig(format!(
            "chunk_words must be at least {MIN_CHUNK_WORDS}, got {chunk_words}"
        )));
    }
    if overlap_words >= chunk_words {
        return Err(RefineError::BadChunkConfig(format!(
            "overlap_words ({overlap_words}) must be smaller than chunk_words ({chunk_words})"
        )));
    }
    let words: Vec<&str> = segments.iter().flat_map(|s| s.text.split_whitespace()).collect();
    let stride = chunk_words - overlap_words;
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < words.len() {
        let end = (start + chunk_words).min(words.len());
        chunks.push(Chunk {
            chunk_no: chunks.len() as u32,
            start_word: start,
            end_word: end,
            text: words[start..end].join(" "),
        });
        if end == words.len() {
            break;
        }
        start += stride;
    }
    Ok(chunks)
}

// ---------------------------------------------------------------------------
// Rules refinement
// ---------------------------------------------------------------------------

/// Case-insensitive filler phrases, matched on whole whitespace tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FillerLexicon {
    phrases: Vec<Vec<String>>,
}

impl Default for FillerLexicon {
    fn default() -> Self {
        FillerLexicon::new(DEFAULT_FILLERS).expect("default lexicon is valid")
    }
}

impl FillerLexicon {
    pub fn new<I, S>(phrases: I) -> Result<Self, RefineError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let phrases: Vec<Vec<String>> = phrases
            .into_iter()
            .map(|p| p.as_ref().split_whitespace().map(str::to_lowercase).collect::<Vec<_>>())
            .collect();
        if phrases.is_empty() || phrases.iter().any(Vec::is_empty) {
            return Err(RefineError::BadInput(
                "filler lexicon must hold non-empty phrases".into(),
            ));
        }
        Ok(FillerLexicon { phrases })
    }

    /// Token length of the phrase matching at `tokens[at..]`. The last word
    /// may carry trailing punctuation.
    fn match_at(&self, tokens: &[&str], at: usize) -> Option<usize> {
        self.phrases.iter().find_map(|phrase| {
            let n = phrase.len();
            let window = tokens.get(at..at + n)?;
            let (last_word, inner) = phrase.split_last()?;
            let inner_ok = inner.iter().zip(window).all(|(p, t)| t.to_lowercase() == *p);
            let lowered = window[n - 1].to_lowercase();
            let rest = lowered.strip_prefix(last_word.as_str())?;
            let trailing_ok = rest.chars().all(|c| matches!(c, ',' | ';' | ':' | '.' | '!' | '?'));
            (inner_ok && trailing_ok).then_some(n)
        })
    }
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Removes filler phrases, collapses whitespace and capitalizes sentence
/// starts. Words outside the lexicon are never dropped. When a removed phrase
/// closed a sentence ("..., okay?"), its terminator moves onto the preceding
/// word in place of any trailing comma.
pub fn refine_rules(text: &str, lexicon: &FillerLexicon) -> String {
    let mut tokens: Vec<String> = text.split_whitespace().map(String::from).collect();
    loop {
        let (next, removed) = remove_fillers(&tokens, lexicon);
        tokens = next;
        if !removed {
            break;
        }
    }
    capitalize_sentences(&mut tokens);
    tokens.join(" ")
}

fn remove_fillers(tokens: &[String], lexicon: &FillerLexicon) -> (Vec<String>, bool) {
    let refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
    let mut out: Vec<String> = Vec::with_capacity(tokens.len());
    let mut removed = false;
    let mut i = 0;
    while i < refs.len() {
        let Some(len) = lexicon.match_at(&refs, i) else {
            out.push(refs[i].to_string());
            i += 1;
            continue;
        };
        removed = true;
        let phrase_last = refs[i + len - 1];
        let word_end = phrase_last.trim_end_matches(|c: char| !c.is_alphanumeric()).len();
        let terminator = phrase_last[word_end..].chars().rev().find(|c| is_terminator(*c));
        if let (Some(t), Some(prev)) = (terminator, out.last_mut()) {
            if !prev.ends_with(is_terminator) {
                let kept = prev.trim_end_matches([',', ';', ':']).len();
                if kept > 0 && prev[..kept].chars().any(char::is_alphanumeric) {
                    prev.truncate(kept);
                    prev.push(t);
                }
            }
        }
        i += len;
    }
    (out, removed)
}

fn capitalize_sentences(tokens: &mut [String]) {
    let mut sentence_start = true;
    for token in tokens.iter_mut() {
        if sentence_start {
            let mut chars = token.chars();
            if let Some(first) = chars.next() {
                let mut upper = first.to_uppercase();
                if first.is_lowercase() && upper.len() == 1 {
                    let upper = upper.next().expect("one char");
                    *token = format!("{upper}{}", chars.as_str());
                }
            }
        }
        if token.chars().any(char::is_alphanumeric) {
            sentence_start = false;
        }
        if token.ends_with(is_terminator) {
            sentence_start = true;
        }
    }
}

// ---------------------------------------------------------------------------
// Refined transcript
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefineMode {
    Llm,
    Rules,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinedChunk {
    pub chunk_no: u32,
    pub refined_text: String,
    /// Hash of the rendered prompt; absent in rules mode.
    pub prompt_hash: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinedTranscript {
    pub lecture_id: String,
    /// One entry per source chunk, ordered by `chunk_no`.
    pub chunks: Vec<RefinedChunk>,
    pub mode: RefineMode,
    pub provenance: Provenance,
}

pub fn refine_all_rules(
    lecture_id: &str,
    chunks: &[Chunk],
    lexicon: &FillerLexicon,
    clock: &Clock,
) -> RefinedTranscript {
    RefinedTranscript {
        lecture_id: lecture_id.to_string(),
        chunks: chunks
            .iter()
            .map(|c| RefinedChunk {
                chunk_no: c.chunk_no,
                refined_text: refine_rules(&c.text, lexicon),
                prompt_hash: None,
            })
            .collect(),
        mode: RefineMode::Rules,
        provenance: Provenance::rules(clock.now()),
    }
}

/// Renders the refine prompt for one chunk.
pub fn refine_prompt(chunk: &Chunk) -> Result<String, RefineError> {
    if chunk.text.trim().is_empty() {
        return Err(RefineError::BadInput(format!("chunk {} has no text", chunk.chunk_no)));
    }
    let template = PromptTemplate::builtin(TemplateId::Refine);
    Ok(template.render(&HashMap::from([("transcript", chunk.text.clone())]))?)
}

pub fn refine_llm(chunk: &Chunk, gateway: &Gateway, max_tokens: u32) -> Result<RefinedChunk, RefineError> {
    refine_llm_with(chunk, gateway, REFINE_TEMPERATURE, max_tokens)
}

pub fn refine_llm_with(
    chunk: &Chunk,
    gateway: &Gateway,
    temperature: f64,
    max_tokens: u32,
) -> Result<RefinedChunk, RefineError> {
    let prompt = refine_prompt(chunk)?;
    let prompt_hash = sha256_hex(&prompt);
    let request = ChatRequest::single_user(gateway.model_id(), prompt, temperature, max_tokens);
    let text = gateway.complete(&request)?;
    Ok(RefinedChunk {
        chunk_no: chunk.chunk_no,
        refined_text: text.trim().to_string(),
        prompt_hash: Some(prompt_hash),
    })
}

/// Refines every chunk concurrently; the result is ordered by `chunk_no`
/// whatever order the calls finish in.
pub fn refine_all_llm(
    lecture_id: &str,
    chunks: &[Chunk],
    gateway: &Gateway,
    temperature: f64,
    max_tokens: u32,
    clock: &Clock,
) -> Result<RefinedTranscript, RefineError> {
    let mut refined = chunks
        .par_iter()
        .map(|c| refine_llm_with(c, gateway, temperature, max_tokens))
        .collect::<Result<Vec<_>, _>>()?;
    refined.sort_by_key(|c| c.chunk_no);
    let combined: String = refined.iter().filter_map(|c| c.prompt_hash.as_deref()).collect();
    Ok(RefinedTranscript {
        lecture_id: lecture_id.to_string(),
        chunks: refined,
        mode: RefineMode::Llm,
        provenance: Provenance::llm(gateway.model_id(), sha256_hex(&combined), clock.now()),
    })
}
