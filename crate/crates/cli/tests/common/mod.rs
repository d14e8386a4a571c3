#![allow(dead_code)]

use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn pointer_dir() -> PathBuf {
    workspace_root().join("fixtures/pointer-lecture")
}

pub fn golden() -> PathBuf {
    workspace_root().join("fixtures/golden/package.json")
}

pub fn microforge() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_microforge"));
    cmd.env_remove("MICROFORGE_API_KEY").env_remove("MICROFORGE_LOG");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    microforge().args(args).output().expect("spawn microforge")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn s(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// Arguments for a seeded replay of the pointer lecture in `dir` into `out`.
pub fn pointer_run_args(config: &Path, dir: &Path, out: &Path) -> Vec<String> {
    vec![
        "--config".into(),
        s(config).into(),
        "run".into(),
        "--transcript".into(),
        s(&dir.join("transcript.txt")).into(),
        "--slides".into(),
        s(&dir.join("slides.txt")).into(),
        "--lecture-id".into(),
        "pointer-lecture".into(),
        "--title".into(),
        "Pointers".into(),
        "--out".into(),
        s(out).into(),
    ]
}

/// Copies the pointer lecture inputs into `dir` and writes a replay config
/// whose provider URL points at `url`, so that any attempt to reach the
/// network lands on a listener the test controls.
pub fn trap_config(dir: &Path, url: &str) -> PathBuf {
    for name in ["transcript.txt", "slides.txt", "fixtures.json"] {
        std::fs::copy(pointer_dir().join(name), dir.join(name)).unwrap();
    }
    let path = dir.join("microforge.toml");
    let fixtures = dir.join("fixtures.json");
    let text = format!(
        "mode = \"replay\"\nfixtures = {:?}\nseed = 42\n\n[provider]\nbase_url = {url:?}\n\n[counts]\nflashcards = 3\nquizzes = 1\nmini_lessons = 1\nscenarios = 1\n",
        s(&fixtures)
    );
    std::fs::write(&path, text).unwrap();
    path
}

/// Listener standing in for the provider and any proxy.
pub struct Trap {
    listener: TcpListener,
}

impl Trap {
    pub fn new() -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        listener.set_nonblocking(true).unwrap();
        Trap { listener }
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.listener.local_addr().unwrap())
    }

    /// Whether anything connected since the trap was set.
    pub fn sprung(&self) -> bool {
        self.listener.accept().is_ok()
    }

    pub fn arm(&self, cmd: &mut Command) {
        let url = self.url();
        for var in [
            "HTTP_PROXY",
            "HTTPS_PROXY",
            "ALL_PROXY",
            "http_proxy",
            "https_proxy",
            "all_proxy",
        ] {
            cmd.env(var, &url);
        }
        cmd.env_remove("NO_PROXY").env_remove("no_proxy");
    }
}

/// Whether this host lets an unprivileged process enter a fresh network
/// namespace.
pub fn unshare_available() -> bool {
    Command::new("unshare")
        .args(["-rn", "true"])
        .output()
        .is_ok_and(|o| o.status.success())
}

/// Runs a copy of the binary staged in `dir` inside an empty network
/// namespace with the trap armed. The namespace drops access to directories
/// private to the real user, so the binary and its inputs must live in `dir`.
pub fn run_offline(trap: &Trap, dir: &Path, args: &[String]) -> Output {
    let binary = dir.join("microforge");
    std::fs::copy(env!("CARGO_BIN_EXE_microforge"), &binary).unwrap();
    let mut cmd = if unshare_available() {
        let mut c = Command::new("unshare");
        c.arg("-rn").arg(&binary);
        c
    } else {
        Command::new(&binary)
    };
    cmd.args(args).env_remove("MICROFORGE_API_KEY");
    trap.arm(&mut cmd);
    cmd.output().expect("spawn microforge")
}
