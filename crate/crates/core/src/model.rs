//! Shared domain types: lecture inputs, microlearning items, review statuses,
//! provenance records and the package container.
//!
//! Every value here is immutable once built. Operations such as
//! [`MicroItem::transition`] consume or borrow a value and hand back a new one.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::sync::Mutex;

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;
use ulid::Ulid;

use crate::generate::ElementBody;
use crate::readability::ReadabilityReport;
use crate::review::ReviewLogEntry;

/// Package schema understood by this build and by the player.
pub const SCHEMA_VERSION: &str = "1.0";

/// Identifies the producing pipeline in provenance records.
pub const PIPELINE_VERSION: &str = concat!("microforge/", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid {kind} body: {}", .violations.join("; "))]
    InvalidBody { kind: ElementKind, violations: Vec<String> },
    #[error("illegal status transition {from} -> {to}")]
    IllegalTransition { from: Status, to: Status },
    #[error("duplicate item id {0}")]
    DuplicateItemId(ItemId),
    #[error("invalid lecture source: {0}")]
    InvalidSource(String),
    #[error("invalid provenance: {0}")]
    InvalidProvenance(String),
}

// ---------------------------------------------------------------------------
// Time
// ---------------------------------------------------------------------------

/// UTC instant with millisecond precision, serialized as
/// `YYYY-MM-DDTHH:MM:SS.mmmZ` so that files round-trip byte for byte.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(DateTime<Utc>);

impl Timestamp {
    pub fn now() -> Self {
        Self::from_millis(Utc::now().timestamp_millis())
    }

    pub fn from_millis(ms: i64) -> Self {
        Timestamp(
            Utc.timestamp_millis_opt(ms)
                .single()
                .unwrap_or(DateTime::<Utc>::UNIX_EPOCH),
        )
    }

    pub fn millis(&self) -> i64 {
        self.0.timestamp_millis()
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        let dt = DateTime::parse_from_rfc3339(s).map_err(|e| format!("bad timestamp {s:?}: {e}"))?;
        Ok(Self::from_millis(dt.timestamp_millis()))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.to_rfc3339_opts(SecondsFormat::Millis, true))
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        Timestamp::parse(&raw).map_err(serde::de::Error::custom)
    }
}

/// Source of "now". Replay runs pin the clock so that output bytes are stable.
#[derive(Clone, Debug, Default)]
pub enum Clock {
    #[default]
    System,
    Fixed(Timestamp),
}

impl Clock {
    pub fn now(&self) -> Timestamp {
        match self {
            Clock::System => Timestamp::now(),
            Clock::Fixed(ts) => *ts,
        }
    }
}

// ---------------------------------------------------------------------------
// Identifiers
// ---------------------------------------------------------------------------

/// Opaque 26-character, lexicographically sortable identifier.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(String);

impl ItemId {
    pub fn new(raw: impl Into<String>) -> Self {
        ItemId(raw.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

enum IdSource {
    System(ulid::Generator),
    Seeded(Ulid),
}

/// Hands out unique, monotonically increasing ids.
///
/// `seeded` ids are a pure function of the seed and the call count, which is
/// what makes replay runs byte-identical.
pub struct IdGenerator {
    source: Mutex<IdSource>,
}

impl IdGenerator {
    pub fn system() -> Self {
        IdGenerator {
            source: Mutex::new(IdSource::System(ulid::Generator::new())),
        }
    }

    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Leave headroom below 2^80 so the monotonic increment never overflows.
        let random: u128 = rng.random::<u128>() & ((1u128 << 79) - 1);
        IdGenerator {
            source: Mutex::new(IdSource::Seeded(Ulid::from_parts(0, random))),
        }
    }

    pub fn next_id(&self) -> ItemId {
        let mut source = self.source.lock().unwrap_or_else(|e| e.into_inner());
        let ulid = match &mut *source {
            IdSource::System(generator) => generator.generate().unwrap_or_else(|_| Ulid::new()),
            IdSource::Seeded(next) => {
                let current = *next;
                *next = current.increment().unwrap_or(current);
                current
            }
        };
        ItemId(ulid.to_string())
    }
}

impl fmt::Debug for IdGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IdGenerator").finish_non_exhaustive()
    }
}

// ---------------------------------------------------------------------------
// Lecture inputs
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptSegment {
    pub index: u32,
    pub start_ms: Option<u64>,
    pub end_ms: Option<u64>,
    pub text: String,
}

impl TranscriptSegment {
    pub fn untimed(index: u32, text: impl Into<String>) -> Self {
        TranscriptSegment {
            index,
            start_ms: None,
            end_ms: None,
            text: text.into(),
        }
    }

    pub fn timed(index: u32, start_ms: u64, end_ms: u64, text: impl Into<String>) -> Self {
        TranscriptSegment {
            index,
            start_ms: Some(start_ms),
            end_ms: Some(end_ms),
            text: text.into(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if let (Some(start), Some(end)) = (self.start_ms, self.end_ms) {
            if end < start {
                return Err(format!(
                    "segment {} ends ({end} ms) before it starts ({start} ms)",
                    self.index
                ));
            }
        }
        if self.text.trim().is_empty() {
            return Err(format!("segment {} has no text", self.index));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlidePage {
    /// 1-based.
    pub page_no: u32,
    pub text: String,
    pub notes: Option<String>,
}

/// Everything known about one lecture before refinement.
#[derive(Clone, Debug, PartialEq)]
pub struct LectureSource {
    pub lecture_id: String,
    pub title: String,
    pub transcript: Vec<TranscriptSegment>,
    pub slides: Vec<SlidePage>,
    pub created_at: Timestamp,
}

impl LectureSource {
    pub fn new(
        lecture_id: impl Into<String>,
        title: impl Into<String>,
        transcript: Vec<TranscriptSegment>,
        slides: Vec<SlidePage>,
        created_at: Timestamp,
    ) -> Result<Self, ModelError> {
        let source = LectureSource {
            lecture_id: lecture_id.into(),
            title: title.into(),
            transcript,
            slides,
            created_at,
        };
        source.validate()?;
        Ok(source)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let invalid = |msg: String| Err(ModelError::InvalidSource(msg));
        if self.transcript.is_empty() && self.slides.is_empty() {
            return invalid("lecture has neither transcript nor slides".into());
        }
        let mut last_start = None;
        for segment in &self.transcript {
            segment.validate().map_err(ModelError::InvalidSource)?;
            if let Some(start) = segment.start_ms {
                if last_start.is_some_and(|prev| start < prev) {
                    return invalid(format!("segment {} starts before its predecessor", segment.index));
                }
                last_start = Some(start);
            }
        }
        for pair in self.slides.windows(2) {
            if pair[1].page_no <= pair[0].page_no {
                return invalid(format!("slide page numbers not increasing at page {}", pair[1].page_no));
            }
        }
        Ok(())
    }

    pub fn summary(&self) -> SourceSummary {
        SourceSummary {
            lecture_id: self.lecture_id.clone(),
            title: self.title.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// Items
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Flashcard,
    Quiz,
    MiniLesson,
    Scenario,
}

impl ElementKind {
    pub const ALL: [ElementKind; 4] = [
        ElementKind::Flashcard,
        ElementKind::Quiz,
        ElementKind::MiniLesson,
        ElementKind::Scenario,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ElementKind::Flashcard => "flashcard",
            ElementKind::Quiz => "quiz",
            ElementKind::MiniLesson => "mini_lesson",
            ElementKind::Scenario => "scenario",
        }
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ElementKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ElementKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown element kind {s:?}"))
    }
}

/// Review status. Allowed moves: `generated -> {approved, rejected, edited}`
/// and `edited -> {approved, rejected}`. Everything else is terminal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Generated,
    Approved,
    Rejected,
    Edited,
}

impl Status {
    pub const ALL: [Status; 4] = [Status::Generated, Status::Approved, Status::Rejected, Status::Edited];

    pub fn can_transition_to(self, to: Status) -> bool {
        use Status::*;
        matches!(
            (self, to),
            (Generated, Approved | Rejected | Edited) | (Edited, Approved | Rejected)
        )
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Generated => "generated",
            Status::Approved => "approved",
            Status::Rejected => "rejected",
            Status::Edited => "edited",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Producer {
    Llm,
    Rules,
    Human,
}

/// Who or what produced a piece of content.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub producer: Producer,
    pub model_id: Option<String>,
    pub prompt_hash: Option<String>,
    pub pipeline_version: String,
    pub timestamp: Timestamp,
}

impl Provenance {
    pub fn llm(model_id: impl Into<String>, prompt_hash: impl Into<String>, at: Timestamp) -> Self {
        Provenance {
            producer: Producer::Llm,
            model_id: Some(model_id.into()),
            prompt_hash: Some(prompt_hash.into()),
            pipeline_version: PIPELINE_VERSION.to_string(),
            timestamp: at,
        }
    }

    pub fn rules(at: Timestamp) -> Self {
        Provenance {
            producer: Producer::Rules,
            model_id: None,
            prompt_hash: None,
            pipeline_version: PIPELINE_VERSION.to_string(),
            timestamp: at,
        }
    }

    pub fn human(at: Timestamp) -> Self {
        Provenance {
            producer: Producer::Human,
            ..Provenance::rules(at)
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.producer == Producer::Llm && (self.model_id.is_none() || self.prompt_hash.is_none()) {
            return Err(ModelError::InvalidProvenance(
                "llm-produced content must record model_id and prompt_hash".into(),
            ));
        }
        Ok(())
    }
}

/// One microlearning element together with its review state.
#[derive(Clone, Debug, PartialEq)]
pub struct MicroItem {
    item_id: ItemId,
    kind: ElementKind,
    body: ElementBody,
    status: Status,
    readability: Option<ReadabilityReport>,
    provenance: Provenance,
}

impl MicroItem {
    /// Builds a freshly generated item. The body is normalized (derived fields
    /// recomputed) and must pass its kind's validator.
    pub fn new(
        kind: ElementKind,
        body: ElementBody,
        provenance: Provenance,
        ids: &IdGenerator,
    ) -> Result<Self, ModelError> {
        let body = checked_body(kind, body)?;
        provenance.validate()?;
        Ok(MicroItem {
            item_id: ids.next_id(),
            kind,
            body,
            status: Status::Generated,
            readability: None,
            provenance,
        })
    }

    /// Reassembles an item from stored parts, re-checking every invariant.
    pub fn from_parts(
        item_id: ItemId,
        kind: ElementKind,
        body: ElementBody,
        status: Status,
        readability: Option<ReadabilityReport>,
        provenance: Provenance,
    ) -> Result<Self, ModelError> {
        if body.kind() != kind {
            return Err(ModelError::InvalidBody {
                kind,
                violations: vec![format!("body is a {} but item kind is {kind}", body.kind())],
            });
        }
        body.validate()
            .map_err(|violations| ModelError::InvalidBody { kind, violations })?;
        provenance.validate()?;
        Ok(MicroItem {
            item_id,
            kind,
            body,
            status,
            readability,
            provenance,
        })
    }

    pub fn item_id(&self) -> &ItemId {
        &self.item_id
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    pub fn body(&self) -> &ElementBody {
        &self.body
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn readability(&self) -> Option<&ReadabilityReport> {
        self.readability.as_ref()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn transition(&self, to: Status) -> Result<MicroItem, ModelError> {
        if !self.status.can_transition_to(to) {
            return Err(ModelError::IllegalTransition { from: self.status, to });
        }
        Ok(MicroItem {
            status: to,
            ..self.clone()
        })
    }

    pub fn with_readability(&self, report: ReadabilityReport) -> MicroItem {
        MicroItem {
            readability: Some(report),
            ..self.clone()
        }
    }

    /// Swaps in a human-edited body. Status is left alone; callers pair this
    /// with a transition to [`Status::Edited`].
    pub(crate) fn with_edited_body(&self, body: ElementBody, at: Timestamp) -> Result<MicroItem, ModelError> {
        let body = checked_body(self.kind, body)?;
        Ok(MicroItem {
            body,
            readability: None,
            provenance: Provenance::human(at),
            ..self.clone()
        })
    }
}

fn checked_body(kind: ElementKind, body: ElementBody) -> Result<ElementBody, ModelError> {
    if body.kind() != kind {
        return Err(ModelError::InvalidBody {
            kind,
            violations: vec![format!("body is a {} but item kind is {kind}", body.kind())],
        });
    }
    let body = body.normalized();
    body.validate()
        .map_err(|violations| ModelError::InvalidBody { kind, violations })?;
    Ok(body)
}

// ---------------------------------------------------------------------------
// Package
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSummary {
    pub lecture_id: String,
    pub title: String,
}

/// Versioned container handed from the pipeline to reviewers and the player.
#[derive(Clone, Debug, PartialEq)]
pub struct Package {
    pub schema_version: String,
    pub source: SourceSummary,
    pub items: Vec<MicroItem>,
    pub review_log: Vec<ReviewLogEntry>,
    pub manifest: BTreeMap<String, serde_json::Value>,
}

impl Package {
    pub fn new(source: SourceSummary, items: Vec<MicroItem>) -> Result<Self, ModelError> {
        let package = Package {
            schema_version: SCHEMA_VERSION.to_string(),
            source,
            items,
            review_log: Vec::new(),
            manifest: BTreeMap::new(),
        };
        package.check_unique_ids()?;
        Ok(package)
    }

    pub fn check_unique_ids(&self) -> Result<(), ModelError> {
        let mut seen = HashSet::new();
        for item in &self.items {
            if !seen.insert(item.item_id()) {
                return Err(ModelError::DuplicateItemId(item.item_id().clone()));
            }
        }
        Ok(())
    }

    pub fn item(&self, id: &ItemId) -> Option<&MicroItem> {
        self.items.iter().find(|item| item.item_id() == id)
    }

    pub fn items_of(&self, kind: ElementKind) -> impl Iterator<Item = &MicroItem> {
        self.items.iter().filter(move |item| item.kind() == kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{FlashcardBody, MiniLessonBody, QuizBody};

    fn prov() -> Provenance {
        Provenance::llm("gpt-4o", "ab".repeat(32), Timestamp::from_millis(0))
    }

    fn flashcard() -> ElementBody {
        ElementBody::Flashcard(FlashcardBody {
            front: "What does *p denote?".into(),
            back: "the value at the address p points to".into(),
            media: vec![],
        })
    }

    #[test]
    fn new_item_is_generated() {
        let ids = IdGenerator::system();
        let item = MicroItem::new(ElementKind::Flashcard, flashcard(), prov(), &ids).unwrap();
        assert_eq!(item.status(), Status::Generated);
        assert_eq!(item.kind(), ElementKind::Flashcard);
        assert_eq!(item.item_id().as_str().len(), 26);
    }

    #[test]
    fn quiz_without_options_is_invalid() {
        let body = ElementBody::Quiz(QuizBody {
            stem: "Which?".into(),
            options: vec![],
            correct_label: 'A',
            explanation: None,
            hint: None,
            topic: None,
        });
        let err = MicroItem::new(ElementKind::Quiz, body, prov(), &IdGenerator::system()).unwrap_err();
        assert!(matches!(
            err,
            ModelError::InvalidBody {
                kind: ElementKind::Quiz,
                ..
            }
        ));
    }

    #[test]
    fn kind_tag_must_match_body() {
        let err = MicroItem::new(ElementKind::Quiz, flashcard(), prov(), &IdGenerator::system()).unwrap_err();
        assert!(matches!(err, ModelError::InvalidBody { .. }));
    }

    #[test]
    fn llm_provenance_requires_model_and_hash() {
        let mut p = prov();
        p.prompt_hash = None;
        let err = MicroItem::new(ElementKind::Flashcard, flashcard(), p, &IdGenerator::system()).unwrap_err();
        assert!(matches!(err, ModelError::InvalidProvenance(_)));
    }

    #[test]
    fn ten_thousand_ids_are_unique_and_sorted() {
        let ids = IdGenerator::system();
        let body = ElementBody::MiniLesson(MiniLessonBody::new(
            "Pointers",
            "Declare a pointer",
            "A pointer stores an address.",
        ));
        let items: Vec<_> = (0..10_000)
            .map(|_| MicroItem::new(ElementKind::MiniLesson, body.clone(), prov(), &ids).unwrap())
            .collect();
        let set: HashSet<_> = items.iter().map(|i| i.item_id().clone()).collect();
        assert_eq!(set.len(), 10_000);
        assert!(items.windows(2).all(|w| w[0].item_id() < w[1].item_id()));
        assert!(items.iter().all(|i| i.status() == Status::Generated));
    }

    #[test]
    fn seeded_ids_repeat_per_seed() {
        let a: Vec<_> = {
            let g = IdGenerator::seeded(7);
            (0..5).map(|_| g.next_id()).collect()
        };
        let b: Vec<_> = {
            let g = IdGenerator::seeded(7);
            (0..5).map(|_| g.next_id()).collect()
        };
        let c = IdGenerator::seeded(8).next_id();
        assert_eq!(a, b);
        assert_ne!(a[0], c);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn allowed_and_forbidden_edges() {
        let item = MicroItem::new(ElementKind::Flashcard, flashcard(), prov(), &IdGenerator::system()).unwrap();
        let approved = item.transition(Status::Approved).unwrap();
        assert_eq!(approved.status(), Status::Approved);
        assert_eq!(approved.body(), item.body());
        assert!(matches!(
            approved.transition(Status::Generated),
            Err(ModelError::IllegalTransition {
                from: Status::Approved,
                to: Status::Generated
            })
        ));
        let path = item
            .transition(Status::Edited)
            .and_then(|i| i.transition(Status::Approved))
            .unwrap();
        assert_eq!(path.status(), Status::Approved);
    }

    #[test]
    fn status_graph_matches_enumeration() {
        // All edges reachable from `generated`, enumerated by hand.
        let allowed = [
            (Status::Generated, Status::Approved),
            (Status::Generated, Status::Rejected),
            (Status::Generated, Status::Edited),
            (Status::Edited, Status::Approved),
            (Status::Edited, Status::Rejected),
        ];
        for from in Status::ALL {
            for to in Status::ALL {
                assert_eq!(
                    from.can_transition_to(to),
                    allowed.contains(&(from, to)),
                    "{from} -> {to}"
                );
            }
        }
    }

    #[test]
    fn duplicate_ids_rejected_in_package() {
        let item = MicroItem::new(ElementKind::Flashcard, flashcard(), prov(), &IdGenerator::system()).unwrap();
        let source = SourceSummary {
            lecture_id: "L1".into(),
            title: "Pointers".into(),
        };
        let err = Package::new(source, vec![item.clone(), item]).unwrap_err();
        assert!(matches!(err, ModelError::DuplicateItemId(_)));
    }

    #[test]
    fn lecture_source_needs_an_input() {
        let err = LectureSource::new("L", "T", vec![], vec![], Timestamp::from_millis(0)).unwrap_err();
        assert!(matches!(err, ModelError::InvalidSource(_)));
    }

    #[test]
    fn lecture_source_rejects_time_regression() {
        let segs = vec![
            TranscriptSegment::timed(1, 5000, 6000, "b"),
            TranscriptSegment::timed(2, 1000, 2000, "a"),
        ];
        assert!(LectureSource::new("L", "T", segs, vec![], Timestamp::from_millis(0)).is_err());
    }

    #[test]
    fn timestamp_text_round_trips() {
        let ts = Timestamp::from_millis(1_717_000_123_456);
        let text = ts.to_string();
        assert_eq!(text, "2024-05-29T16:28:43.456Z");
        assert_eq!(Timestamp::parse(&text).unwrap(), ts);
    }
}
