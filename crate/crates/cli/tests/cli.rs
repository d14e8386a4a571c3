mod common;

use std::fs::File;

use common::*;
use serde_json::Value;

fn ids_of(package: &std::path::Path, kind: &str) -> Vec<String> {
    let json: Value = serde_json::from_slice(&std::fs::read(package).unwrap()).unwrap();
    json["items"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|i| i["kind"] == kind)
        .map(|i| i["item_id"].as_str().unwrap().to_string())
        .collect()
}

fn replayed(dir: &std::path::Path) -> std::path::PathBuf {
    let out = dir.join("out");
    let args = pointer_run_args(&pointer_dir().join("microforge.toml"), &pointer_dir(), &out);
    let result = microforge().args(&args).output().unwrap();
    assert!(result.status.success(), "{}", stderr(&result));
    out.join("package.json")
}

#[test]
fn missing_transcript_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.txt");
    let out = run(&["run", "--transcript", s(&missing), "--out", s(&dir.path().join("out"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains(s(&missing)), "{}", stderr(&out));
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "mode = \"replay\"\nsurprise = 1\n").unwrap();
    let out = run(&["--config", s(&config), "score", s(&golden())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn replay_run_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let first = std::fs::read(replayed(&dir.path().join("a"))).unwrap();
    let second = std::fs::read(replayed(&dir.path().join("b"))).unwrap();
    assert_eq!(first, second);
    let report: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a/out/run_report.json")).unwrap()).unwrap();
    assert_eq!(report["gateway"]["network_attempts"], 0);
    assert_eq!(report["items"], 6);
}

#[test]
fn rules_mode_makes_no_model_calls() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "run",
        "--transcript",
        s(&pointer_dir().join("transcript.txt")),
        "--mode",
        "rules",
        "--seed",
        "1",
        "--out",
        s(&out_dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(!stdout(&out).contains("gateway:"));
    let report: Value = serde_json::from_slice(&std::fs::read(out_dir.join("run_report.json")).unwrap()).unwrap();
    assert_eq!(report["gateway"], Value::Null);
    assert_eq!(report["refine_mode"], "rules");
    assert_eq!(report["items"], 0);
}

#[test]
fn live_mode_without_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "run",
        "--transcript",
        s(&pointer_dir().join("transcript.txt")),
        "--mode",
        "live",
        "--out",
        s(&dir.path().join("out")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("MICROFORGE_API_KEY"));
}

#[test]
fn list_shows_every_kind() {
    let out = run(&["review", s(&golden()), "list"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for kind in ["flashcard", "quiz", "mini_lesson", "scenario"] {
        assert!(text.contains(kind), "{kind} missing from\n{text}");
    }
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn approving_an_unknown_id_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let package = dir.path().join("package.json");
    std::fs::copy(golden(), &package).unwrap();
    let out = run(&["review", s(&package), "approve", "01NOSUCHITEM0000000000000"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(std::fs::read(&package).unwrap(), std::fs::read(golden()).unwrap());
}

#[test]
fn illegal_transition_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let package = dir.path().join("package.json");
    std::fs::copy(golden(), &package).unwrap();
    let id = &ids_of(&package, "quiz")[0];
    let out = run(&["review", s(&package), "reject", id]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn score_prints_one_row_per_kind() {
    let first = run(&["score", s(&golden())]);
    assert!(first.status.success());
    let text = stdout(&first);
    assert_eq!(text.lines().count(), 5, "{text}");
    assert!(text.lines().next().unwrap().starts_with("KIND"));
    assert_eq!(stdout(&run(&["score", s(&golden())])), text);
}

#[test]
fn score_of_an_empty_package_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let package = dir.path().join("empty.json");
    let empty = microforge_core::model::Package::new(
        microforge_core::model::SourceSummary {
            lecture_id: "empty".into(),
            title: "Empty".into(),
        },
        vec![],
    )
    .unwrap();
    std::fs::write(&package, microforge_core::review::write_package(&empty)).unwrap();
    let out = run(&["score", s(&package)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).lines().count(), 1);
}

#[test]
fn review_then_export() {
    let dir = tempfile::tempdir().unwrap();
    let package = replayed(dir.path());

    let gated = run(&["export", s(&package), "--format", "tsv"]);
    assert_eq!(gated.status.code(), Some(1));
    assert!(stderr(&gated).contains("not been approved"), "{}", stderr(&gated));

    let flagged = run(&["export", s(&package), "--allow-unreviewed"]);
    assert!(flagged.status.success());
    let manifest: Value = serde_json::from_slice(&flagged.stdout).unwrap();
    assert_eq!(manifest["manifest"]["unreviewed"], true);

    let cards = ids_of(&package, "flashcard");
    assert_eq!(cards.len(), 3);
    let approve = run(&["review", s(&package), "approve", &cards[0], "--actor", "alex"]);
    assert!(approve.status.success(), "{}", stderr(&approve));
    assert!(stdout(&approve).contains("approved"));
    for id in &cards[1..] {
        assert!(run(&["review", s(&package), "reject", id]).status.success());
    }
    let edit = run(&[
        "review",
        s(&package),
        "edit",
        &ids_of(&package, "quiz")[0],
        "--body",
        r#"{"stem": "What does p1 = p2 do?", "options": ["A) Copies the address", "B) Copies the value", "C) Nothing"], "correct_label": "A"}"#,
    ]);
    assert!(edit.status.success(), "{}", stderr(&edit));
    let bad_edit = run(&[
        "review",
        s(&package),
        "edit",
        &ids_of(&package, "scenario")[0],
        "--body",
        "{}",
    ]);
    assert_eq!(bad_edit.status.code(), Some(2));
    for kind in ["quiz", "mini_lesson", "scenario"] {
        assert!(run(&["review", s(&package), "approve", &ids_of(&package, kind)[0]])
            .status
            .success());
    }

    let tsv_path = dir.path().join("cards.tsv");
    let tsv = run(&["export", s(&package), "--format", "tsv", "--out", s(&tsv_path)]);
    assert!(tsv.status.success(), "{}", stderr(&tsv));
    let text = std::fs::read_to_string(&tsv_path).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert_eq!(text.matches('\t').count(), 1);

    let shipped = run(&["export", s(&package)]);
    assert!(shipped.status.success());
    let json: Value = serde_json::from_slice(&shipped.stdout).unwrap();
    assert_eq!(json["items"].as_array().unwrap().len(), 4);
    assert!(json["manifest"].get("unreviewed").is_none());

    let md = run(&["export", s(&package), "--format", "markdown"]);
    assert!(stdout(&md).contains("What does p1 = p2 do?"));
}

#[test]
fn busy_package_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let package = dir.path().join("package.json");
    std::fs::copy(golden(), &package).unwrap();
    let lock = File::create(dir.path().join("package.json.lock")).unwrap();
    lock.lock().unwrap();
    let id = &ids_of(&package, "quiz")[0];
    let out = run(&["review", s(&package), "reject", id]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("locked"), "{}", stderr(&out));
    lock.unlock().unwrap();
}

#[test]
fn synthetic_recording_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = dir.path().join("fixtures.json");
    let transcript = pointer_dir().join("transcript.txt");
    let record = run(&[
        "fixtures",
        "record",
        "--synthetic",
        "--transcript",
        s(&transcript),
        "--fixtures",
        s(&fixtures),
        "--seed",
        "3",
        "--out",
        s(&dir.path().join("rec")),
    ]);
    assert!(record.status.success(), "{}", stderr(&record));
    let replay = run(&[
        "run",
        "--mode",
        "replay",
        "--transcript",
        s(&transcript),
        "--fixtures",
        s(&fixtures),
        "--seed",
        "3",
        "--out",
        s(&dir.path().join("rep")),
    ]);
    assert!(replay.status.success(), "{}", stderr(&replay));
    let items = |name: &str| {
        let json: Value = serde_json::from_slice(&std::fs::read(dir.path().join(name)).unwrap()).unwrap();
        json["items"].clone()
    };
    assert_eq!(items("rec/package.json"), items("rep/package.json"));
}

#[test]
fn replay_stays_off_the_network() {
    let trap = Trap::new();
    let dir = tempfile::tempdir().unwrap();
    let config = trap_config(dir.path(), &trap.url());
    let out = run_offline(
        &trap,
        dir.path(),
        &pointer_run_args(&config, dir.path(), &dir.path().join("out")),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(!trap.sprung());
}
