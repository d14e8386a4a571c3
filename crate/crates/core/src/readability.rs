//! Flesch Reading Ease scoring and grade bands.
//!
//! ```text
//! FRE = 206.835 - 1.015 * (words / sentences) - 84.6 * (syllables / words)
//! ```
//!
//! Counting rules:
//! - a word is a whitespace-delimited token holding at least one letter or digit;
//! - a sentence ends at a run of `.`, `!` or `?` followed by whitespace or the
//!   end of text, and must contain a word; any text with words has at least one;
//! - syllables are vowel groups (`a e i o u y`), minus one for a silent final
//!   `e` (kept for consonant + `le`), never fewer than one per word;
//! - a difficult word has three or more syllables and is not capitalized
//!   mid-sentence (a cheap proper-noun filter).
//!
//! Scores are not clamped.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generate::ElementBody;
use crate::model::{ElementKind, MicroItem};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReadabilityError {
    #[error("reading ease is undefined for {words} words in {sentences} sentences")]
    UndefinedScore { words: u64, sentences: u64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextStats {
    pub words: u64,
    pub sentences: u64,
    pub syllables: u64,
    pub difficult_words: u64,
}

impl std::ops::Add for TextStats {
    type Output = TextStats;

    fn add(self, rhs: TextStats) -> TextStats {
        TextStats {
            words: self.words + rhs.words,
            sentences: self.sentences + rhs.sentences,
            syllables: self.syllables + rhs.syllables,
            difficult_words: self.difficult_words + rhs.difficult_words,
        }
    }
}

/// Canonical Flesch reading-level bands.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GradeBand {
    #[serde(rename = "5th_grade")]
    Fifth,
    #[serde(rename = "6th_grade")]
    Sixth,
    #[serde(rename = "7th_grade")]
    Seventh,
    #[serde(rename = "8th_9th_grade")]
    EighthNinth,
    #[serde(rename = "10th_12th_grade")]
    TenthTwelfth,
    #[serde(rename = "college")]
    College,
    #[serde(rename = "college_graduate")]
    CollegeGraduate,
}

impl GradeBand {
    pub fn label(&self) -> &'static str {
        match self {
            GradeBand::Fifth => "5th grade",
            GradeBand::Sixth => "6th grade",
            GradeBand::Seventh => "7th grade",
            GradeBand::EighthNinth => "8th-9th grade",
            GradeBand::TenthTwelfth => "10th-12th grade",
            GradeBand::College => "college",
            GradeBand::CollegeGraduate => "college graduate",
        }
    }
}

impl fmt::Display for GradeBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadabilityReport {
    pub fre: f64,
    pub band: GradeBand,
    pub stats: TextStats,
}

impl ReadabilityReport {
    pub fn from_stats(stats: TextStats) -> Result<Self, ReadabilityError> {
        let fre = flesch(&stats)?;
        Ok(ReadabilityReport {
            fre,
            band: classify(fre),
            stats,
        })
    }
}

/// Counts words whose token contains a letter or digit.
pub fn count_words(text: &str) -> u64 {
    text.split_whitespace()
        .filter(|token| token.chars().any(char::is_alphanumeric))
        .count() as u64
}

pub fn count_stats(text: &str) -> TextStats {
    let mut stats = TextStats::default();
    let mut words_in_sentence = 0u64;
    let mut at_sentence_start = true;

    for token in text.split_whitespace() {
        let is_word = token.chars().any(char::is_alphanumeric);
        if is_word {
            let syllables = syllables_in(token);
            stats.words += 1;
            stats.syllables += syllables;
            let capitalized = token
                .chars()
                .find(|c| c.is_alphabetic())
                .is_some_and(char::is_uppercase);
            if syllables >= 3 && !(capitalized && !at_sentence_start) {
                stats.difficult_words += 1;
            }
            words_in_sentence += 1;
            at_sentence_start = false;
        }
        // A token is followed by whitespace or end of text, so a terminal run of
        // .!? closes the sentence.
        if token.ends_with(['.', '!', '?']) && words_in_sentence > 0 {
            stats.sentences += 1;
            words_in_sentence = 0;
            at_sentence_start = true;
        }
    }
    if stats.words > 0 && stats.sentences == 0 {
        stats.sentences = 1;
    }
    stats
}

/// Vowel-group syllable estimate for one token.
pub fn syllables_in(token: &str) -> u64 {
    let letters: Vec<char> = token
        .chars()
        .filter(|c| c.is_alphabetic())
        .map(|c| c.to_ascii_lowercase())
        .collect();
    let is_vowel = |c: char| matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y');

    let mut groups = 0u64;
    let mut prev_vowel = false;
    for &c in &letters {
        let vowel = is_vowel(c);
        if vowel && !prev_vowel {
            groups += 1;
        }
        prev_vowel = vowel;
    }

    let n = letters.len();
    if n >= 1 && letters[n - 1] == 'e' {
        let consonant_le = n >= 3 && letters[n - 2] == 'l' && !is_vowel(letters[n - 3]);
        if !consonant_le {
            groups = groups.saturating_sub(1);
        }
    }
    groups.max(1)
}

/// Flesch Reading Ease.
///
/// Evaluated over integer thousandths so that only the final division rounds:
/// `(206835·s·w − 1015·w² − 84600·syl·s) / (1000·s·w)`.
pub fn flesch(stats: &TextStats) -> Result<f64, ReadabilityError> {
    if stats.words == 0 || stats.sentences == 0 {
        return Err(ReadabilityError::UndefinedScore {
            words: stats.words,
            sentences: stats.sentences,
        });
    }
    let w = i128::from(stats.words);
    let s = i128::from(stats.sentences);
    let syl = i128::from(stats.syllables);
    let mut num = 206_835 * s * w - 1_015 * w * w - 84_600 * syl * s;
    let mut den = 1_000 * s * w;
    let g = gcd(num.unsigned_abs(), den.unsigned_abs()) as i128;
    if g > 1 {
        num /= g;
        den /= g;
    }
    Ok(num as f64 / den as f64)
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Maps a score onto its band. Total over `f64`; NaN lands in the last band.
pub fn classify(fre: f64) -> GradeBand {
    if fre >= 90.0 {
        GradeBand::Fifth
    } else if fre >= 80.0 {
        GradeBand::Sixth
    } else if fre >= 70.0 {
        GradeBand::Seventh
    } else if fre >= 60.0 {
        GradeBand::EighthNinth
    } else if fre >= 50.0 {
        GradeBand::TenthTwelfth
    } else if fre >= 30.0 {
        GradeBand::College
    } else {
        GradeBand::CollegeGraduate
    }
}

/// The learner-visible text of a body, one field per entry.
pub fn visible_text(body: &ElementBody) -> Vec<&str> {
    match body {
        ElementBody::Flashcard(card) => vec![&card.front, &card.back],
        ElementBody::Quiz(quiz) => {
            let mut fields = vec![quiz.stem.as_str()];
            fields.extend(quiz.options.iter().map(|o| o.text.as_str()));
            fields.extend(quiz.explanation.as_deref());
            fields
        }
        ElementBody::MiniLesson(lesson) => vec![&lesson.content],
        ElementBody::Scenario(s) => vec![
            &s.scenario,
            &s.task,
            &s.activity.introduction,
            &s.activity.hands_on,
            &s.activity.assessment,
        ],
    }
}

/// Stats are summed field by field so that a field without closing
/// punctuation still counts as its own sentence.
pub fn body_stats(body: &ElementBody) -> TextStats {
    visible_text(body)
        .into_iter()
        .map(count_stats)
        .fold(TextStats::default(), |acc, s| acc + s)
}

pub fn score_item(item: &MicroItem) -> Result<MicroItem, ReadabilityError> {
    let report = ReadabilityReport::from_stats(body_stats(item.body()))?;
    Ok(item.with_readability(report))
}

/// One row of the per-kind table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub kind: ElementKind,
    pub items: usize,
    pub mean_fre: f64,
    pub band: GradeBand,
}

/// Mean of per-item scores for every kind present, in kind order. Items that
/// cannot be scored are skipped.
pub fn kind_means<'a>(items: impl IntoIterator<Item = &'a MicroItem>) -> Vec<KindSummary> {
    let mut sums = [(0usize, 0.0f64); 4];
    for item in items {
        let fre = match item.readability() {
            Some(report) => report.fre,
            None => match ReadabilityReport::from_stats(body_stats(item.body())) {
                Ok(report) => report.fre,
                Err(_) => continue,
            },
        };
        let slot = &mut sums[kind_slot(item.kind())];
        slot.0 += 1;
        slot.1 += fre;
    }
    ElementKind::ALL
        .into_iter()
        .zip(sums)
        .filter(|(_, (n, _))| *n > 0)
        .map(|(kind, (n, total))| {
            let mean_fre = total / n as f64;
            KindSummary {
                kind,
                items: n,
                mean_fre,
                band: classify(mean_fre),
            }
        })
        .collect()
}

fn kind_slot(kind: ElementKind) -> usize {
    match kind {
        ElementKind::Flashcard => 0,
        ElementKind::Quiz => 1,
        ElementKind::MiniLesson => 2,
        ElementKind::Scenario => 3,
    }
}
