//! Human review of generated items and serialization of packages.
//!
//! The package file is canonical JSON: keys sorted at every level, two-space
//! indentation, shortest round-trip float formatting, explicit `null`s and a
//! trailing newline. Reading a file and writing it back gives the same bytes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::generate::ElementBody;
use crate::model::{
    Clock, ElementKind, ItemId, MicroItem, ModelError, Package, Provenance, SourceSummary, Status, Timestamp,
    SCHEMA_VERSION,
};
use crate::readability::{classify, score_item, ReadabilityError, ReadabilityReport};

/// Manifest key set when an export deliberately includes unreviewed items.
pub const UNREVIEWED_KEY: &str = "unreviewed";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReviewError {
    #[error("no item with id {0}")]
    UnknownItem(ItemId),
    #[error("actor must not be empty")]
    MissingActor,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Readability(#[from] ReadabilityError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExportError {
    #[error("{} item(s) have not been approved: {}", .0.len(), join_ids(.0))]
    UnreviewedContent(Vec<ItemId>),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImportError {
    #[error("unsupported schema_version {found:?} (expected {SCHEMA_VERSION:?})")]
    SchemaVersionMismatch { found: String },
    #[error("cannot decode package: {0}")]
    DecodeError(String),
}

fn join_ids(ids: &[ItemId]) -> String {
    ids.iter().map(ItemId::as_str).collect::<Vec<_>>().join(", ")
}

// ---------------------------------------------------------------------------
// Review
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReviewAction {
    Approve,
    Reject,
    Edit,
}

impl ReviewAction {
    fn target(self) -> Status {
        match self {
            ReviewAction::Approve => Status::Approved,
            ReviewAction::Reject => Status::Rejected,
            ReviewAction::Edit => Status::Edited,
        }
    }
}

impl fmt::Display for ReviewAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReviewAction::Approve => "approve",
            ReviewAction::Reject => "reject",
            ReviewAction::Edit => "edit",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewLogEntry {
    pub item_id: ItemId,
    pub action: ReviewAction,
    pub actor: String,
    pub timestamp: Timestamp,
    pub diff_summary: Option<String>,
}

/// A reviewer's decision on one item.
#[derive(Clone, Debug, PartialEq)]
pub enum ReviewDecision {
    Approve,
    Reject,
    Edit(ElementBody),
}

impl ReviewDecision {
    pub fn action(&self) -> ReviewAction {
        match self {
            ReviewDecision::Approve => ReviewAction::Approve,
            ReviewDecision::Reject => ReviewAction::Reject,
            ReviewDecision::Edit(_) => ReviewAction::Edit,
        }
    }
}

/// Applies one decision and appends its log entry, returning a new package.
/// The input package is untouched, including on error.
///
/// Edits replace the body, mark the provenance as human and re-score
/// readability. Log timestamps never go backwards for an item, even if the
/// clock does.
pub fn apply_review(
    package: &Package,
    item_id: &ItemId,
    decision: ReviewDecision,
    actor: &str,
    clock: &Clock,
) -> Result<Package, ReviewError> {
    if actor.trim().is_empty() {
        return Err(ReviewError::MissingActor);
    }
    let index = package
        .items
        .iter()
        .position(|i| i.item_id() == item_id)
        .ok_or_else(|| ReviewError::UnknownItem(item_id.clone()))?;
    let current = &package.items[index];
    let action = decision.action();

    let last_for_item = package
        .review_log
        .iter()
        .filter(|e| &e.item_id == item_id)
        .map(|e| e.timestamp)
        .max();
    let at = last_for_item.map_or(clock.now(), |last| last.max(clock.now()));

    let moved = current.transition(action.target())?;
    let (updated, diff_summary) = match decision {
        ReviewDecision::Edit(body) => {
            let edited = moved.with_edited_body(body, at)?;
            let diff = diff_fields(current.body(), edited.body());
            (score_item(&edited)?, Some(diff))
        }
        _ => (moved, None),
    };

    let mut next = package.clone();
    next.items[index] = updated;
    next.review_log.push(ReviewLogEntry {
        item_id: item_id.clone(),
        action,
        actor: actor.trim().to_string(),
        timestamp: at,
        diff_summary,
    });
    Ok(next)
}

/// Names of top-level body fields whose values differ.
fn diff_fields(before: &ElementBody, after: &ElementBody) -> String {
    let (Value::Object(a), Value::Object(b)) = (before.to_json(), after.to_json()) else {
        return "body replaced".into();
    };
    let changed: Vec<&str> = a
        .keys()
        .chain(b.keys().filter(|k| !a.contains_key(*k)))
        .filter(|k| a.get(*k) != b.get(*k))
        .map(String::as_str)
        .collect();
    if changed.is_empty() {
        "no changes".into()
    } else {
        format!("changed: {}", changed.join(", "))
    }
}

// ---------------------------------------------------------------------------
// Package file
// ---------------------------------------------------------------------------

fn item_json(item: &MicroItem) -> Value {
    json!({
        "item_id": item.item_id(),
        "kind": item.kind(),
        "status": item.status(),
        "readability": item.readability(),
        "provenance": item.provenance(),
        "body": item.body().to_json(),
    })
}

fn package_json(package: &Package) -> Value {
    json!({
        "schema_version": package.schema_version,
        "source": package.source,
        "items": package.items.iter().map(item_json).collect::<Vec<_>>(),
        "review_log": package.review_log,
        "manifest": package.manifest,
    })
}

fn canonical_bytes(value: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("json values serialize");
    out.push(b'\n');
    out
}

/// Canonical bytes of the whole package, review state included. This is the
/// working file the review commands read and write; it is not gated.
pub fn write_package(package: &Package) -> Vec<u8> {
    canonical_bytes(&package_json(package))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawItem {
    item_id: ItemId,
    kind: ElementKind,
    status: Status,
    readability: Option<ReadabilityReport>,
    provenance: Provenance,
    body: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPackage {
    #[allow(dead_code)]
    schema_version: String,
    source: SourceSummary,
    items: Vec<RawItem>,
    review_log: Vec<ReviewLogEntry>,
    manifest: BTreeMap<String, Value>,
}

pub fn import_package(bytes: &[u8]) -> Result<Package, ImportError> {
    let decode = |msg: String| ImportError::DecodeError(msg);
    let value: Value = serde_json::from_slice(bytes).map_err(|e| decode(e.to_string()))?;
    match value.get("schema_version") {
        Some(Value::String(v)) if v == SCHEMA_VERSION => {}
        Some(Value::String(v)) => return Err(ImportError::SchemaVersionMismatch { found: v.clone() }),
        Some(_) => return Err(decode("schema_version must be a string".into())),
        None => return Err(decode("missing schema_version".into())),
    }
    let raw: RawPackage = serde_json::from_value(value).map_err(|e| decode(e.to_string()))?;

    let mut items = Vec::with_capacity(raw.items.len());
    for item in raw.items {
        let id = item.item_id.clone();
        let body = ElementBody::from_json(item.kind, item.body).map_err(|e| decode(format!("item {id}: {e}")))?;
        if let Some(report) = &item.readability {
            if classify(report.fre) != report.band {
                return Err(decode(format!(
                    "item {id}: band does not match reading ease {}",
                    report.fre
                )));
            }
        }
        let item = MicroItem::from_parts(
            item.item_id,
            item.kind,
            body,
            item.status,
            item.readability,
            item.provenance,
        )
        .map_err(|e| decode(format!("item {id}: {e}")))?;
        items.push(item);
    }
    let package = Package {
        schema_version: SCHEMA_VERSION.to_string(),
        source: raw.source,
        items,
        review_log: raw.review_log,
        manifest: raw.manifest,
    };
    package.check_unique_ids().map_err(|e| decode(e.to_string()))?;
    Ok(package)
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    PackageFile,
    Markdown,
    FlashcardsTsv,
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "package" | "package_file" | "json" => Ok(ExportFormat::PackageFile),
            "markdown" | "md" => Ok(ExportFormat::Markdown),
            "tsv" | "flashcards_tsv" => Ok(ExportFormat::FlashcardsTsv),
            other => Err(format!("unknown export format {other:?}")),
        }
    }
}

/// The package as it would be exported: rejected items always dropped,
/// unapproved items either refused or, with `allow_unreviewed`, kept and
/// flagged in the manifest.
pub fn exportable(package: &Package, allow_unreviewed: bool) -> Result<Package, ExportError> {
    let pending: Vec<ItemId> = package
        .items
        .iter()
        .filter(|i| matches!(i.status(), Status::Generated | Status::Edited))
        .map(|i| i.item_id().clone())
        .collect();
    if !pending.is_empty() && !allow_unreviewed {
        return Err(ExportError::UnreviewedContent(pending));
    }
    let items: Vec<MicroItem> = package
        .items
        .iter()
        .filter(|i| i.status() != Status::Rejected)
        .cloned()
        .collect();
    let review_log = package
        .review_log
        .iter()
        .filter(|e| items.iter().any(|i| i.item_id() == &e.item_id))
        .cloned()
        .collect();
    let mut manifest = package.manifest.clone();
    if !pending.is_empty() {
        manifest.insert(UNREVIEWED_KEY.to_string(), Value::Bool(true));
    }
    Ok(Package {
        schema_version: package.schema_version.clone(),
        source: package.source.clone(),
        items,
        review_log,
        manifest,
    })
}

pub fn export(package: &Package, format: ExportFormat, allow_unreviewed: bool) -> Result<Vec<u8>, ExportError> {
    let shipped = exportable(package, allow_unreviewed)?;
    Ok(match format {
        ExportFormat::PackageFile => write_package(&shipped),
        ExportFormat::Markdown => to_markdown(&shipped).into_bytes(),
        ExportFormat::FlashcardsTsv => to_tsv(&shipped).into_bytes(),
    })
}

/// Backslash, tab, newline and carriage return become `\\`, `\t`, `\n`, `\r`.
pub fn escape_tsv(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    for c in field.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            other => out.push(other),
        }
    }
    out
}

fn to_tsv(package: &Package) -> String {
    package
        .items
        .iter()
        .filter_map(|item| match item.body() {
            ElementBody::Flashcard(card) => Some(format!("{}\t{}\n", escape_tsv(&card.front), escape_tsv(&card.back))),
            _ => None,
        })
        .collect()
}

fn heading(kind: ElementKind) -> &'static str {
    match kind {
        ElementKind::Flashcard => "Flashcards",
        ElementKind::Quiz => "Quizzes",
        ElementKind::MiniLesson => "Mini lessons",
        ElementKind::Scenario => "Scenarios",
    }
}

fn to_markdown(package: &Package) -> String {
    let mut md = format!("# {}\n", package.source.title);
    if package.manifest.get(UNREVIEWED_KEY) == Some(&Value::Bool(true)) {
        md.push_str("\n> Contains items that have not been reviewed.\n");
    }
    for kind in ElementKind::ALL {
        let items: Vec<&MicroItem> = package.items_of(kind).collect();
        if items.is_empty() {
            continue;
        }
        md.push_str(&format!("\n## {}\n", heading(kind)));
        for (n, item) in items.iter().enumerate() {
            md.push('\n');
            md.push_str(&item_markdown(n + 1, item.body()));
        }
    }
    md
}

fn item_markdown(n: usize, body: &ElementBody) -> String {
    match body {
        ElementBody::Flashcard(card) => format!("**{n}. {}**\n\n{}\n", card.front.trim(), card.back.trim()),
        ElementBody::Quiz(quiz) => {
            let mut s = format!("**{n}. {}**\n\n", quiz.stem.trim());
            for o in &quiz.options {
                s.push_str(&format!("- {}) {}\n", o.label, o.text.trim()));
            }
            s.push_str(&format!("\nAnswer: {}\n", quiz.correct_label));
            if let Some(hint) = &quiz.hint {
                s.push_str(&format!("\nHint: {}\n", hint.trim()));
            }
            if let Some(explanation) = &quiz.explanation {
                s.push_str(&format!("\nExplanation: {}\n", explanation.trim()));
            }
            s
        }
        ElementBody::MiniLesson(lesson) => format!(
            "### {}\n\n*Objective:* {}\n\n*Estimated time:* {:.1} min\n\n{}\n",
            lesson.title.trim(),
            lesson.objective.trim(),
            lesson.estimated_minutes,
            lesson.content.trim()
        ),
        ElementBody::Scenario(s) => format!(
            "### Objective: {}\n\n**Scenario:** {}\n\n**Task:** {}\n\n**Introduction:** {}\n\n**Hands-on activity:** {}\n\n**Assessment:** {}\n",
            s.objective.trim(),
            s.scenario.trim(),
            s.task.trim(),
            s.activity.introduction.trim(),
            s.activity.hands_on.trim(),
            s.activity.assessment.trim()
        ),
    }
}
