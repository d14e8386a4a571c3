//! The four element bodies and their invariants.

use serde::{Deserialize, Serialize};

use crate::model::ElementKind;
use crate::readability::count_words;

pub const FRONT_MAX_CHARS: usize = 300;
pub const MIN_OPTIONS: usize = 3;
pub const MAX_OPTIONS: usize = 6;
pub const LESSON_WORDS_PER_MINUTE: f64 = 200.0;
pub const LESSON_MINUTES_RANGE: (f64, f64) = (5.0, 15.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlashcardBody {
    pub front: String,
    pub back: String,
    /// Resource references; may be empty.
    #[serde(default)]
    pub media: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuizOption {
    pub label: char,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuizBody {
    pub stem: String,
    pub options: Vec<QuizOption>,
    pub correct_label: char,
    pub explanation: Option<String>,
    pub hint: Option<String>,
    pub topic: Option<String>,
}

impl QuizBody {
    pub fn correct_option(&self) -> Option<&QuizOption> {
        self.options.iter().find(|o| o.label == self.correct_label)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiniLessonBody {
    pub title: String,
    pub objective: String,
    pub content: String,
    /// Derived: content words / 200.
    pub estimated_minutes: f64,
    /// Derived: set when `estimated_minutes` falls outside 5..=15.
    pub duration_warning: bool,
}

impl MiniLessonBody {
    pub fn new(title: impl Into<String>, objective: impl Into<String>, content: impl Into<String>) -> Self {
        let content = content.into();
        let (estimated_minutes, duration_warning) = lesson_duration(&content);
        MiniLessonBody {
            title: title.into(),
            objective: objective.into(),
            content,
            estimated_minutes,
            duration_warning,
        }
    }
}

pub fn lesson_duration(content: &str) -> (f64, bool) {
    let minutes = count_words(content) as f64 / LESSON_WORDS_PER_MINUTE;
    let (lo, hi) = LESSON_MINUTES_RANGE;
    (minutes, !(lo..=hi).contains(&minutes))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioActivity {
    pub introduction: String,
    pub hands_on: String,
    pub assessment: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioBody {
    pub objective: String,
    pub scenario: String,
    pub task: String,
    pub activity: ScenarioActivity,
}

/// Kind-specific content of a [`crate::model::MicroItem`].
#[derive(Clone, Debug, PartialEq)]
pub enum ElementBody {
    Flashcard(FlashcardBody),
    Quiz(QuizBody),
    MiniLesson(MiniLessonBody),
    Scenario(ScenarioBody),
}

impl ElementBody {
    pub fn kind(&self) -> ElementKind {
        match self {
            ElementBody::Flashcard(_) => ElementKind::Flashcard,
            ElementBody::Quiz(_) => ElementKind::Quiz,
            ElementBody::MiniLesson(_) => ElementKind::MiniLesson,
            ElementBody::Scenario(_) => ElementKind::Scenario,
        }
    }

    /// Recomputes derived fields. Only mini lessons have any.
    pub fn normalized(self) -> Self {
        match self {
            ElementBody::MiniLesson(lesson) => {
                ElementBody::MiniLesson(MiniLessonBody::new(lesson.title, lesson.objective, lesson.content))
            }
            other => other,
        }
    }

    /// Returns every violated invariant, or `Ok` when there are none.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut v = Vec::new();
        match self {
            ElementBody::Flashcard(card) => validate_flashcard(card, &mut v),
            ElementBody::Quiz(quiz) => validate_quiz(quiz, &mut v),
            ElementBody::MiniLesson(lesson) => validate_lesson(lesson, &mut v),
            ElementBody::Scenario(s) => validate_scenario(s, &mut v),
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(v)
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let value = match self {
            ElementBody::Flashcard(b) => serde_json::to_value(b),
            ElementBody::Quiz(b) => serde_json::to_value(b),
            ElementBody::MiniLesson(b) => serde_json::to_value(b),
            ElementBody::Scenario(b) => serde_json::to_value(b),
        };
        value.expect("element bodies always serialize")
    }

    /// Strict decode of a stored body for the given kind.
    pub fn from_json(kind: ElementKind, value: serde_json::Value) -> Result<Self, serde_json::Error> {
        Ok(match kind {
            ElementKind::Flashcard => ElementBody::Flashcard(serde_json::from_value(value)?),
            ElementKind::Quiz => ElementBody::Quiz(serde_json::from_value(value)?),
            ElementKind::MiniLesson => ElementBody::MiniLesson(serde_json::from_value(value)?),
            ElementKind::Scenario => ElementBody::Scenario(serde_json::from_value(value)?),
        })
    }
}

fn require(field: &str, value: &str, v: &mut Vec<String>) {
    if value.trim().is_empty() {
        v.push(format!("`{field}` must not be empty"));
    }
}

fn validate_flashcard(card: &FlashcardBody, v: &mut Vec<String>) {
    require("front", &card.front, v);
    require("back", &card.back, v);
    if !card.front.trim().is_empty() && card.front.trim() == card.back.trim() {
        v.push("`front` and `back` must differ".into());
    }
    let len = card.front.chars().count();
    if len > FRONT_MAX_CHARS {
        v.push(format!("`front` is {len} characters, limit is {FRONT_MAX_CHARS}"));
    }
}

fn validate_quiz(quiz: &QuizBody, v: &mut Vec<String>) {
    require("stem", &quiz.stem, v);
    let n = quiz.options.len();
    if !(MIN_OPTIONS..=MAX_OPTIONS).contains(&n) {
        v.push(format!("expected {MIN_OPTIONS} to {MAX_OPTIONS} options, found {n}"));
    }
    let labels_ok = quiz
        .options
        .iter()
        .enumerate()
        .all(|(i, o)| u8::try_from(o.label).is_ok_and(|b| usize::from(b) == usize::from(b'A') + i));
    if !labels_ok {
        v.push("option labels must be consecutive letters starting at A".into());
    }
    for option in &quiz.options {
        if option.text.trim().is_empty() {
            v.push(format!("option {} has empty text", option.label));
        }
    }
    let correct = quiz.options.iter().filter(|o| o.label == quiz.correct_label).count();
    if correct != 1 {
        v.push(format!(
            "exactly one correct option required, found {correct} matching correct_label {:?}",
            quiz.correct_label
        ));
    }
    for (i, a) in quiz.options.iter().enumerate() {
        if quiz.options[..i].iter().any(|b| b.text.trim() == a.text.trim()) {
            v.push(format!("option {} repeats an earlier option's text", a.label));
        }
    }
}

fn validate_lesson(lesson: &MiniLessonBody, v: &mut Vec<String>) {
    require("title", &lesson.title, v);
    require("objective", &lesson.objective, v);
    require("content", &lesson.content, v);
    let (minutes, warning) = lesson_duration(&lesson.content);
    if lesson.estimated_minutes != minutes || lesson.duration_warning != warning {
        v.push(format!(
            "`estimated_minutes` must be computed from content ({minutes} min, warning {warning})"
        ));
    }
}

fn validate_scenario(s: &ScenarioBody, v: &mut Vec<String>) {
    require("objective", &s.objective, v);
    require("scenario", &s.scenario, v);
    require("task", &s.task, v);
    require("activity.introduction", &s.activity.introduction, v);
    require("activity.hands_on", &s.activity.hands_on, v);
    require("activity.assessment", &s.activity.assessment, v);
}
