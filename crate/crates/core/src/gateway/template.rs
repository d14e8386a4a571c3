//! Built-in prompt templates and slot rendering.
//!
//! Slots are written `{name}` with a lowercase identifier. Rendering is a
//! single pass, so slot values may themselves contain braces (C code does).

use std::collections::HashMap;
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use crate::model::{ElementKind, SlidePage};

static SLOT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([a-z_]+)\}").expect("slot regex"));

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("missing slot {0:?}")]
    MissingSlot(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TemplateId {
    Refine,
    Quiz,
    Flashcards,
    MiniLesson,
    Scenario,
}

impl TemplateId {
    pub fn for_kind(kind: ElementKind) -> TemplateId {
        match kind {
            ElementKind::Flashcard => TemplateId::Flashcards,
            ElementKind::Quiz => TemplateId::Quiz,
            ElementKind::MiniLesson => TemplateId::MiniLesson,
            ElementKind::Scenario => TemplateId::Scenario,
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemplateId::Refine => "refine",
            TemplateId::Quiz => "quiz",
            TemplateId::Flashcards => "flashcards",
            TemplateId::MiniLesson => "mini_lesson",
            TemplateId::Scenario => "scenario",
        })
    }
}

pub const REFINE_INSTRUCTION: &str = "Refine the above lecture transcript to ensure it is clear, accurate, and professional. Remove any transcription errors, filler words (e.g., 'um,' 'uh,' 'you know'), repetitive phrases, and irrelevant noise. Ensure the terminology aligns with the subject matter and maintain the speaker's intended meaning. If any context is unclear, make logical edits to improve clarity while keeping the academic tone intact.";

pub const QUIZ_INSTRUCTION: &str = "Using the provided refined transcript and slides, create a set of quizzes to evaluate students' understanding of the material. Ensure the questions cover key concepts, technical terms, and examples discussed in the lecture. Align the difficulty level with the course content and learning objectives and include clear and concise answer options or solutions for each question. For multiple-choice questions, ensure plausible distractors are included alongside the correct answer. Emphasize critical thinking and application of concepts where appropriate.";

pub const SCENARIO_INSTRUCTION: &str = "List the lecture objectives in the given refined transcript and slides, design scenario-based activities for each identified objective that encourage students to apply the concepts and skills covered in the material. Create realistic, context-driven scenarios relevant to the subject matter, requiring students to analyze, problem-solve, or make decisions based on the knowledge gained from the lecture. Ensure the scenarios are engaging, clearly structured, and include detailed instructions.";

pub const FLASHCARD_INSTRUCTION: &str = "Using the provided refined transcript and slides, create a set of digital flashcards to help students review the material. Each flashcard must have a question or prompt on the front and its answer on the back. Ensure the flashcards cover key concepts, technical terms, definitions, and examples discussed in the lecture. Keep each front short and focused on a single idea and keep each answer clear and concise.";

pub const MINI_LESSON_INSTRUCTION: &str = "Using the provided refined transcript and slides, create a mini lesson that teaches one specific concept or skill covered in the material. The lesson must be brief and focused, suitable for a study session of 5 to 15 minutes. State a clear learning objective, explain the concept step by step using the examples, code, and formulas from the lecture, and keep the academic tone intact.";

const REFINE_TEXT: &str = "{instruction}\n\nLecture transcript:\n{transcript}";

const GENERATION_LAYOUT: &str =
    "{instruction}\n\nRefined transcript:\n{transcript}\n\nLecture slides:\n{slides}\n\n{format}";

const FLASHCARD_FORMAT: &str = r#"Create exactly {count} flashcards. Respond with a JSON array and nothing else. Each element must be an object with these fields:
{"front": "question or prompt (at most 300 characters)", "back": "answer", "media": []}"#;

const QUIZ_FORMAT: &str = r#"Create exactly {count} multiple-choice questions. Respond with a JSON array and nothing else. Each element must be an object with these fields:
{"stem": "question text", "options": [{"label": "A", "text": "..."}, {"label": "B", "text": "..."}, {"label": "C", "text": "..."}, {"label": "D", "text": "..."}], "correct_label": "A", "explanation": "why the correct answer is right", "hint": "a hint shown before answering", "topic": "short topic name"}
Use 3 to 6 options labelled with consecutive letters starting at A, exactly one of them correct."#;

const MINI_LESSON_FORMAT: &str = r#"Create exactly {count} mini lessons. Respond with a JSON array and nothing else. Each element must be an object with these fields:
{"title": "lesson title", "objective": "learning objective", "content": "the lesson text, formatted with Markdown"}"#;

const SCENARIO_FORMAT: &str = r#"Respond with a JSON array and nothing else, one element per objective. Each element must be an object with these fields:
{"objective": "the lecture objective", "scenario": "the realistic situation", "task": "what the student must do", "activity": {"introduction": "...", "hands_on": "...", "assessment": "..."}}"#;

/// The response shape a generation template asks for. Reused verbatim by the
/// repair prompt.
pub fn format_contract(kind: ElementKind) -> &'static str {
    match kind {
        ElementKind::Flashcard => FLASHCARD_FORMAT,
        ElementKind::Quiz => QUIZ_FORMAT,
        ElementKind::MiniLesson => MINI_LESSON_FORMAT,
        ElementKind::Scenario => SCENARIO_FORMAT,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub text: String,
}

impl PromptTemplate {
    pub fn builtin(id: TemplateId) -> PromptTemplate {
        let generation = |instruction: &str, kind: ElementKind| {
            GENERATION_LAYOUT
                .replace("{instruction}", instruction)
                .replace("{format}", format_contract(kind))
        };
        let text = match id {
            TemplateId::Refine => REFINE_TEXT.replace("{instruction}", REFINE_INSTRUCTION),
            TemplateId::Quiz => generation(QUIZ_INSTRUCTION, ElementKind::Quiz),
            TemplateId::Flashcards => generation(FLASHCARD_INSTRUCTION, ElementKind::Flashcard),
            TemplateId::MiniLesson => generation(MINI_LESSON_INSTRUCTION, ElementKind::MiniLesson),
            TemplateId::Scenario => generation(SCENARIO_INSTRUCTION, ElementKind::Scenario),
        };
        PromptTemplate { id, text }
    }

    /// Slot names referenced by the text, in order of first appearance.
    pub fn slots(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for cap in SLOT.captures_iter(&self.text) {
            let name = cap.get(1).map_or("", |m| m.as_str());
            if !names.contains(&name) {
                names.push(name);
            }
        }
        names
    }

    pub fn render(&self, slots: &HashMap<&str, String>) -> Result<String, TemplateError> {
        for name in self.slots() {
            if slots.get(name).is_none_or(|v| v.trim().is_empty()) {
                return Err(TemplateError::MissingSlot(name.to_string()));
            }
        }
        Ok(SLOT
            .replace_all(&self.text, |cap: &regex::Captures<'_>| slots[&cap[1]].clone())
            .into_owned())
    }
}

/// Slides as `[Slide N] ...` blocks. An empty deck renders a placeholder so
/// that the slot is never blank.
pub fn format_slides(slides: &[SlidePage]) -> String {
    if slides.is_empty() {
        return "(no slides provided)".to_string();
    }
    slides
        .iter()
        .map(|page| {
            let mut block = format!("[Slide {}] {}", page.page_no, page.text.trim());
            if let Some(notes) = page.notes.as_deref().filter(|n| !n.trim().is_empty()) {
                block.push_str("\nNotes: ");
                block.push_str(notes.trim());
            }
            block
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}
