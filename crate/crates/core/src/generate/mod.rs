//! Element generation from a refined transcript and slides.
//!
//! Each (kind, chunk) pair is one prompt. Completions go through
//! [`parse_structured`]; a failed parse earns up to [`MAX_REPAIR_ROUNDS`]
//! follow-up prompts quoting the errors and the previous output. Results are
//! ordered by (kind, chunk, payload position), deduplicated across chunks and
//! only then given ids, so seeded runs are reproducible under any scheduling.

mod body;
mod parse;

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;
use tracing::{debug, warn};

pub use body::{
    lesson_duration, ElementBody, FlashcardBody, MiniLessonBody, QuizBody, QuizOption, ScenarioActivity, ScenarioBody,
    FRONT_MAX_CHARS, LESSON_MINUTES_RANGE, LESSON_WORDS_PER_MINUTE, MAX_OPTIONS, MIN_OPTIONS,
};
pub use parse::{parse_structured, ParseError};

use crate::gateway::template::format_contract;
use crate::gateway::{
    format_slides, sha256_hex, ChatRequest, Gateway, GatewayError, PromptTemplate, TemplateError, TemplateId,
    DEFAULT_MAX_TOKENS,
};
use crate::model::{Clock, ElementKind, IdGenerator, MicroItem, ModelError, Provenance, SlidePage};
use crate::refine::{RefinedChunk, RefinedTranscript};

pub const GENERATION_TEMPERATURE: f64 = 0.7;
pub const MAX_REPAIR_ROUNDS: u32 = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerateError {
    #[error("bad generation input: {0}")]
    BadInput(String),
    #[error("{kind} generation for chunk {chunk_no} failed after {MAX_REPAIR_ROUNDS} repair rounds: {}", .problems.join("; "))]
    GenerationFailed {
        kind: ElementKind,
        chunk_no: u32,
        problems: Vec<String>,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Requested items per kind for a whole lecture. Mini lessons are per chunk;
/// scenarios are a cap on the objectives the model identifies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ElementCounts {
    pub flashcards: usize,
    pub quizzes: usize,
    pub mini_lessons: usize,
    pub scenarios: usize,
}

impl Default for ElementCounts {
    fn default() -> Self {
        ElementCounts {
            flashcards: 10,
            quizzes: 8,
            mini_lessons: 1,
            scenarios: 3,
        }
    }
}

impl ElementCounts {
    pub fn get(&self, kind: ElementKind) -> usize {
        match kind {
            ElementKind::Flashcard => self.flashcards,
            ElementKind::Quiz => self.quizzes,
            ElementKind::MiniLesson => self.mini_lessons,
            ElementKind::Scenario => self.scenarios,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Sampling {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            temperature: GENERATION_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

/// Everything a generation call needs besides its inputs.
#[derive(Clone, Copy)]
pub struct GenerationContext<'a> {
    pub gateway: &'a Gateway,
    pub ids: &'a IdGenerator,
    pub clock: &'a Clock,
    pub sampling: Sampling,
}

/// One planned prompt: `count` items of `kind` from chunk `chunk_no`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CallPlan {
    pub kind: ElementKind,
    pub chunk_no: u32,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CallSummary {
    pub kind: ElementKind,
    pub chunk_no: u32,
    pub requested: usize,
    pub produced: usize,
    pub repair_rounds: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CallFailure {
    pub kind: ElementKind,
    pub chunk_no: u32,
    pub error: String,
}

#[derive(Clone, Debug, Default)]
pub struct GenerationOutput {
    pub items: Vec<MicroItem>,
    pub calls: Vec<CallSummary>,
    pub failures: Vec<CallFailure>,
    pub duplicates_dropped: usize,
}

/// Splits `total` across `chunks` as evenly as possible, earlier chunks first.
pub fn distribute(total: usize, chunks: usize) -> Vec<usize> {
    if chunks == 0 {
        return Vec::new();
    }
    (0..chunks)
        .map(|i| total / chunks + usize::from(i < total % chunks))
        .collect()
}

/// Prompts for one kind across the usable chunks. Flashcards and quizzes are
/// spread over chunks; every chunk gets its own mini lessons and its own
/// scenario prompt.
pub fn plan_calls(kind: ElementKind, count: usize, chunk_nos: &[u32]) -> Vec<CallPlan> {
    let shares = match kind {
        ElementKind::Flashcard | ElementKind::Quiz => distribute(count, chunk_nos.len()),
        ElementKind::MiniLesson | ElementKind::Scenario => vec![count; chunk_nos.len()],
    };
    chunk_nos
        .iter()
        .zip(shares)
        .filter(|(_, share)| *share > 0)
        .map(|(&chunk_no, count)| CallPlan { kind, chunk_no, count })
        .collect()
}

/// Slides shown alongside chunk `i` of `n`: pages `floor(i*P/n)` up to but
/// excluding `ceil((i+1)*P/n)`, so every page lands in at least one chunk.
pub fn slides_for_chunk(slides: &[SlidePage], i: usize, n: usize) -> &[SlidePage] {
    if n == 0 || slides.is_empty() {
        return &[];
    }
    let p = slides.len();
    let start = i * p / n;
    let end = ((i + 1) * p).div_ceil(n).min(p);
    &slides[start.min(end)..end]
}

pub fn generation_prompt(
    kind: ElementKind,
    transcript: &str,
    slides: &[SlidePage],
    count: usize,
) -> Result<String, TemplateError> {
    let template = PromptTemplate::builtin(TemplateId::for_kind(kind));
    template.render(&HashMap::from([
        ("transcript", transcript.to_string()),
        ("slides", format_slides(slides)),
        ("count", count.to_string()),
    ]))
}

/// Follow-up prompt asking the model to fix its own output.
pub fn repair_prompt(kind: ElementKind, count: usize, previous: &str, problems: &[String]) -> String {
    let contract = format_contract(kind).replace("{count}", &count.to_string());
    let listed: Vec<String> = problems.iter().map(|p| format!("- {p}")).collect();
    format!(
        "Your previous response could not be used because of these problems:\n{}\n\nPrevious response:\n{}\n\nRewrite the response so that it fixes every problem. {}",
        listed.join("\n"),
        previous,
        contract
    )
}

/// Calls the model and parses the reply, repairing at most
/// [`MAX_REPAIR_ROUNDS`] times. Returns the bodies and the rounds used.
fn complete_structured(
    kind: ElementKind,
    chunk_no: u32,
    count: usize,
    prompt: String,
    ctx: &GenerationContext<'_>,
) -> Result<(Vec<ElementBody>, u32), GenerateError> {
    let ask = |content: String| {
        let req = ChatRequest::single_user(
            ctx.gateway.model_id(),
            content,
            ctx.sampling.temperature,
            ctx.sampling.max_tokens,
        );
        ctx.gateway.complete(&req)
    };
    let mut raw = ask(prompt)?;
    let mut round = 0;
    loop {
        match parse_structured(kind, &raw) {
            Ok(bodies) => return Ok((bodies, round)),
            Err(err) if round < MAX_REPAIR_ROUNDS => {
                round += 1;
                warn!(%kind, chunk_no, round, error = %err, "model output rejected; requesting repair");
                raw = ask(repair_prompt(kind, count, &raw, &err.problems()))?;
            }
            Err(err) => {
                return Err(GenerateError::GenerationFailed {
                    kind,
                    chunk_no,
                    problems: err.problems(),
                })
            }
        }
    }
}

fn dedupe_key(body: &ElementBody) -> String {
    let text = match body {
        ElementBody::Flashcard(b) => &b.front,
        ElementBody::Quiz(b) => &b.stem,
        ElementBody::MiniLesson(b) => &b.title,
        ElementBody::Scenario(b) => &b.objective,
    };
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

struct CallResult {
    plan: CallPlan,
    prompt_hash: String,
    outcome: Result<(Vec<ElementBody>, u32), GenerateError>,
}

/// Runs every planned call, tolerating individual failures.
pub fn generate_all(
    refined: &RefinedTranscript,
    slides: &[SlidePage],
    counts: &ElementCounts,
    ctx: &GenerationContext<'_>,
) -> Result<GenerationOutput, GenerateError> {
    let usable: Vec<&RefinedChunk> = refined
        .chunks
        .iter()
        .filter(|c| !c.refined_text.trim().is_empty())
        .collect();
    if usable.is_empty() {
        return Err(GenerateError::BadInput("refined transcript has no text".into()));
    }
    if usable.len() < refined.chunks.len() {
        warn!(
            skipped = refined.chunks.len() - usable.len(),
            "skipping chunks left empty by refinement"
        );
    }
    let chunk_nos: Vec<u32> = usable.iter().map(|c| c.chunk_no).collect();
    let plans: Vec<CallPlan> = ElementKind::ALL
        .into_iter()
        .flat_map(|kind| plan_calls(kind, counts.get(kind), &chunk_nos))
        .collect();

    let n = usable.len();
    let position: HashMap<u32, usize> = chunk_nos.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut results: Vec<CallResult> = plans
        .par_iter()
        .map(|plan| {
            let i = position[&plan.chunk_no];
            let chunk_slides = slides_for_chunk(slides, i, n);
            let prompt = match generation_prompt(plan.kind, &usable[i].refined_text, chunk_slides, plan.count) {
                Ok(p) => p,
                Err(e) => {
                    return CallResult {
                        plan: *plan,
                        prompt_hash: String::new(),
                        outcome: Err(e.into()),
                    }
                }
            };
            let prompt_hash = sha256_hex(&prompt);
            let outcome = complete_structured(plan.kind, plan.chunk_no, plan.count, prompt, ctx);
            CallResult {
                plan: *plan,
                prompt_hash,
                outcome,
            }
        })
        .collect();
    results.sort_by_key(|r| (r.plan.kind, r.plan.chunk_no));

    let mut out = GenerationOutput::default();
    let mut seen: HashSet<(ElementKind, String)> = HashSet::new();
    let mut per_kind = [0usize; 4];
    let now = ctx.clock.now();
    for result in results {
        let CallPlan { kind, chunk_no, count } = result.plan;
        let (bodies, repair_rounds) = match result.outcome {
            Ok(ok) => ok,
            Err(e) => {
                warn!(%kind, chunk_no, error = %e, "generation call failed");
                out.failures.push(CallFailure {
                    kind,
                    chunk_no,
                    error: e.to_string(),
                });
                continue;
            }
        };
        if bodies.len() < count && kind != ElementKind::Scenario {
            debug!(%kind, chunk_no, requested = count, got = bodies.len(), "model returned fewer items than requested");
        }
        let take = if kind == ElementKind::Scenario {
            bodies.len()
        } else {
            count
        };
        let mut produced = 0;
        for body in bodies.into_iter().take(take) {
            let slot = ElementKind::ALL.iter().position(|k| *k == kind).expect("kind listed");
            if kind == ElementKind::Scenario && per_kind[slot] >= count {
                break;
            }
            if !seen.insert((kind, dedupe_key(&body))) {
                out.duplicates_dropped += 1;
                continue;
            }
            let provenance = Provenance::llm(ctx.gateway.model_id(), result.prompt_hash.clone(), now);
            out.items.push(MicroItem::new(kind, body, provenance, ctx.ids)?);
            per_kind[slot] += 1;
            produced += 1;
        }
        out.calls.push(CallSummary {
            kind,
            chunk_no,
            requested: count,
            produced,
            repair_rounds,
        });
    }
    Ok(out)
}

/// Generates `count` items of one kind. Any failed call fails the whole
/// request.
pub fn generate_elements(
    refined: &RefinedTranscript,
    slides: &[SlidePage],
    kind: ElementKind,
    count: usize,
    ctx: &GenerationContext<'_>,
) -> Result<Vec<MicroItem>, GenerateError> {
    if count == 0 {
        return Err(GenerateError::BadInput("count must be at least 1".into()));
    }
    let mut counts = ElementCounts {
        flashcards: 0,
        quizzes: 0,
        mini_lessons: 0,
        scenarios: 0,
    };
    match kind {
        ElementKind::Flashcard => counts.flashcards = count,
        ElementKind::Quiz => counts.quizzes = count,
        ElementKind::MiniLesson => counts.mini_lessons = count,
        ElementKind::Scenario => counts.scenarios = count,
    }
    let output = generate_all(refined, slides, &counts, ctx)?;
    if let Some(failure) = output.failures.first() {
        return Err(GenerateError::GenerationFailed {
            kind: failure.kind,
            chunk_no: failure.chunk_no,
            problems: vec![failure.error.clone()],
        });
    }
    Ok(output.items)
}
