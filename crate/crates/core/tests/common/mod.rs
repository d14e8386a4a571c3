#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use microforge_core::config::Config;
use microforge_core::gateway::template::{
    FLASHCARD_INSTRUCTION, MINI_LESSON_INSTRUCTION, QUIZ_INSTRUCTION, REFINE_INSTRUCTION, SCENARIO_INSTRUCTION,
};
use microforge_core::gateway::{
    ApiKey, FixtureStore, Gateway, GatewayConfig, GatewayMode, HttpReply, Transport, TransportError,
};
use microforge_core::ingest::FormatHint;
use microforge_core::model::{Clock, IdGenerator, Package, Timestamp};
use microforge_core::pipeline::{self, PipelineInput, RunOutput};
use microforge_core::review::{apply_review, ReviewDecision};

pub const SEED: u64 = 42;
pub const LECTURE_ID: &str = "pointer-lecture";
pub const TITLE: &str = "Pointers";

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn pointer_dir() -> PathBuf {
    workspace_root().join("fixtures/pointer-lecture")
}

pub fn read(path: impl Into<PathBuf>) -> String {
    let path = path.into();
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn pointer_response(name: &str) -> String {
    read(pointer_dir().join("responses").join(name))
}

pub fn pointer_config() -> Config {
    Config::load(&pointer_dir().join("microforge.toml")).expect("pointer config")
}

/// Answers the built-in prompts with the hand-written pointer-lecture
/// responses.
pub struct CannedProvider {
    pub calls: AtomicUsize,
}

impl CannedProvider {
    pub fn new() -> Arc<Self> {
        Arc::new(CannedProvider {
            calls: AtomicUsize::new(0),
        })
    }

    pub fn answer(prompt: &str) -> Option<String> {
        let file = [
            (REFINE_INSTRUCTION, "refine.txt"),
            (FLASHCARD_INSTRUCTION, "flashcards.json"),
            (QUIZ_INSTRUCTION, "quiz.json"),
            (MINI_LESSON_INSTRUCTION, "mini_lesson.json"),
            (SCENARIO_INSTRUCTION, "scenario.json"),
        ]
        .into_iter()
        .find(|(prefix, _)| prompt.starts_with(prefix))?
        .1;
        Some(pointer_response(file))
    }
}

impl Transport for CannedProvider {
    fn post_json(&self, _url: &str, _bearer: &str, body: &str) -> Result<HttpReply, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let request: serde_json::Value = serde_json::from_str(body).unwrap();
        let prompt = request["messages"][0]["content"].as_str().unwrap();
        let content = Self::answer(prompt).unwrap_or_else(|| panic!("unexpected prompt: {prompt}"));
        Ok(HttpReply {
            status: 200,
            body: serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string(),
        })
    }
}

pub fn seeded() -> (IdGenerator, Clock) {
    (IdGenerator::seeded(SEED), Clock::Fixed(Timestamp::from_millis(0)))
}

pub fn pointer_input<'a>(transcript: &'a [u8], slides: &'a [u8]) -> PipelineInput<'a> {
    PipelineInput {
        lecture_id: LECTURE_ID.into(),
        title: TITLE.into(),
        transcript,
        format: FormatHint::Auto,
        slides: Some(slides),
    }
}

/// Runs the pointer lecture in record mode against the canned provider and
/// returns the fixture store it produced.
pub fn record_pointer_store() -> FixtureStore {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fixtures.json");
    let config = pointer_config();
    let gw_config = GatewayConfig {
        api_key: Some(ApiKey::new("sk-fixture-authoring")),
        ..config.gateway_config()
    };
    let gateway = Gateway::new(
        GatewayMode::Record,
        gw_config,
        Some(FixtureStore::open_or_create(&path).unwrap()),
    )
    .unwrap()
    .with_transport(CannedProvider::new());
    let transcript = read(pointer_dir().join("transcript.txt"));
    let slides = read(pointer_dir().join("slides.txt"));
    let (ids, clock) = seeded();
    let out = pipeline::run(
        pointer_input(transcript.as_bytes(), slides.as_bytes()),
        &config,
        Some(&gateway),
        &ids,
        &clock,
    )
    .unwrap();
    assert!(out.report.failures.is_empty(), "{:?}", out.report.failures);
    gateway.fixtures().unwrap()
}

/// Replays the committed pointer-lecture fixtures.
pub fn replay_pointer() -> RunOutput {
    let config = pointer_config();
    let store = FixtureStore::load(config.fixtures.as_ref().unwrap()).unwrap();
    let gateway = Gateway::replay(&config.provider.model_id, store);
    let transcript = read(pointer_dir().join("transcript.txt"));
    let slides = read(pointer_dir().join("slides.txt"));
    let (ids, clock) = seeded();
    let out = pipeline::run(
        pointer_input(transcript.as_bytes(), slides.as_bytes()),
        &config,
        Some(&gateway),
        &ids,
        &clock,
    )
    .unwrap();
    assert_eq!(gateway.stats().network_attempts, 0);
    out
}

/// The replayed pointer package with every item approved.
pub fn golden_package() -> Package {
    let mut package = replay_pointer().package;
    let clock = Clock::Fixed(Timestamp::from_millis(60_000));
    let ids: Vec<_> = package.items.iter().map(|i| i.item_id().clone()).collect();
    for id in ids {
        package = apply_review(&package, &id, ReviewDecision::Approve, "instructor", &clock).unwrap();
    }
    package
}

/// Writes `bytes` to `path` when MICROFORGE_BLESS is set, otherwise asserts
/// the committed file matches.
pub fn check_committed(path: PathBuf, bytes: &[u8]) {
    if std::env::var_os("MICROFORGE_BLESS").is_some() {
        std::fs::write(&path, bytes).unwrap();
        return;
    }
    let committed = std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(
        committed == bytes,
        "{} is stale; rerun with MICROFORGE_BLESS=1 to regenerate",
        path.display()
    );
}
