//! `microforge`: run the pipeline, review items, print readability, export.
//!
//! Exit codes: 0 success, 1 pipeline failure (generation failed, unreviewed
//! content blocked an export), 2 usage, configuration or input error.

mod files;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing::info;
use tracing_subscriber::EnvFilter;

use microforge_core::config::{Config, RunMode};
use microforge_core::gateway::{ApiKey, FixtureStore, Gateway, GatewayMode};
use microforge_core::generate::parse_structured;
use microforge_core::ingest::FormatHint;
use microforge_core::model::{Clock, IdGenerator, ItemId, Package, Status, Timestamp};
use microforge_core::pipeline::{self, PipelineInput};
use microforge_core::readability::kind_means;
use microforge_core::review::{apply_review, export, import_package, write_package, ExportFormat, ReviewDecision};
use microforge_core::synthetic::SyntheticProvider;

const PACKAGE_FILE: &str = "package.json";
const REPORT_FILE: &str = "run_report.json";

#[derive(Parser)]
#[command(
    name = "microforge",
    version,
    about = "Turn lecture transcripts and slides into reviewed microlearning packages"
)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output on stderr (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest, refine, generate and score one lecture.
    Run(RunArgs),
    /// List, approve, reject or edit items in a package.
    Review {
        package: PathBuf,
        #[command(subcommand)]
        action: ReviewCmd,
    },
    /// Per-kind mean reading ease of a package.
    Score { package: PathBuf },
    /// Export approved items.
    Export {
        package: PathBuf,
        #[arg(long, value_enum, default_value = "package")]
        format: Format,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include items that are not approved and flag the manifest.
        #[arg(long)]
        allow_unreviewed: bool,
    },
    /// Fixture store maintenance.
    Fixtures {
        #[command(subcommand)]
        action: FixturesCmd,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    transcript: PathBuf,
    #[arg(long)]
    slides: Option<PathBuf>,
    /// Directory receiving package.json and run_report.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    transcript_format: TranscriptFormat,
    /// Defaults to the transcript file name.
    #[arg(long)]
    lecture_id: Option<String>,
    #[arg(long)]
    title: Option<String>,
    /// Overrides the configured mode.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Overrides the configured fixture store.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Seeded ids and a pinned clock, for byte-identical output.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum ReviewCmd {
    List,
    Approve {
        item_id: String,
        #[arg(long, default_value = "reviewer")]
        actor: String,
    },
    Reject {
        item_id: String,
        #[arg(long, default_value = "reviewer")]
        actor: String,
    },
    /// Replace an item's body; the item moves to `edited`.
    Edit {
        item_id: String,
        /// Body as a JSON object with the kind's fields.
        #[arg(long, conflicts_with = "body_file", required_unless_present = "body_file")]
        body: Option<String>,
        #[arg(long)]
        body_file: Option<PathBuf>,
        #[arg(long, default_value = "reviewer")]
        actor: String,
    },
}

#[derive(Subcommand)]
enum FixturesCmd {
    /// Run the pipeline in record mode, storing every completion.
    Record {
        #[command(flatten)]
        run: RunArgs,
        /// Answer with offline placeholder content instead of calling the
        /// provider. Useful for demos and load tests.
        #[arg(long)]
        synthetic: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Package,
    Markdown,
    Tsv,
}

#[derive(Clone, Copy, ValueEnum)]
enum TranscriptFormat {
    Auto,
    Plain,
    Srt,
    Vtt,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Live,
    Record,
    Replay,
    Rules,
}

/// A failed command: exit status plus the message for stderr.
struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn failed(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(EnvFilter::try_from_env("MICROFORGE_LOG").unwrap_or_else(|_| EnvFilter::new(default_level)))
        .init();

    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let config = match &cli.config {
        Some(path) => Config::load(path).map_err(|e| usage(e.to_string()))?,
        None => Config::default(),
    };
    match cli.command {
        Command::Run(args) => cmd_run(args, config, None),
        Command::Fixtures {
            action: FixturesCmd::Record { run, synthetic },
        } => cmd_run(run, config, Some(synthetic)),
        Command::Review { package, action } => cmd_review(&package, action),
        Command::Score { package } => cmd_score(&package),
        Command::Export {
            package,
            format,
            out,
            allow_unreviewed,
        } => cmd_export(&package, format, out.as_deref(), allow_unreviewed),
    }
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

/// `record` is `Some(synthetic)` for `fixtures record`.
fn cmd_run(args: RunArgs, mut config: Config, record: Option<bool>) -> Result<(), Failure> {
    if let Some(mode) = args.mode {
        config.mode = match mode {
            ModeArg::Live => RunMode::Live,
            ModeArg::Record => RunMode::Record,
            ModeArg::Replay => RunMode::Replay,
            ModeArg::Rules => RunMode::Rules,
        };
    }
    if record.is_some() {
        config.mode = RunMode::Record;
    }
    if let Some(fixtures) = args.fixtures {
        config.fixtures = Some(fixtures);
    }
    if args.seed.is_some() {
        config.seed = args.seed;
    }
    config.validate().map_err(|e| usage(e.to_string()))?;

    let transcript = files::read(&args.transcript).map_err(usage)?;
    let slides = args.slides.as_deref().map(files::read).transpose().map_err(usage)?;
    let gateway = build_gateway(&config, record == Some(true))?;

    let (ids, clock) = match config.seed {
        Some(seed) => (IdGenerator::seeded(seed), Clock::Fixed(Timestamp::from_millis(0))),
        None => (IdGenerator::system(), Clock::System),
    };
    let stem = args
        .transcript
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "lecture".into());
    let input = PipelineInput {
        lecture_id: args.lecture_id.unwrap_or_else(|| stem.clone()),
        title: args.title.unwrap_or(stem),
        transcript: &transcript,
        format: match args.transcript_format {
            TranscriptFormat::Auto => FormatHint::Auto,
            TranscriptFormat::Plain => FormatHint::Plain,
            TranscriptFormat::Srt => FormatHint::Srt,
            TranscriptFormat::Vtt => FormatHint::Vtt,
        },
        slides: slides.as_deref(),
    };

    let output = pipeline::run(input, &config, gateway.as_ref(), &ids, &clock).map_err(|e| {
        let message = match &e {
            pipeline::PipelineError::Transcript(_) => format!("{}: {e}", args.transcript.display()),
            pipeline::PipelineError::Slides(_) => format!(
                "{}: {e}",
                args.slides.as_deref().unwrap_or(Path::new("slides")).display()
            ),
            _ => e.to_string(),
        };
        Failure {
            code: if e.is_usage_error() { 2 } else { 1 },
            message,
        }
    })?;

    std::fs::create_dir_all(&args.out).map_err(|e| usage(format!("cannot create {}: {e}", args.out.display())))?;
    let package_path = args.out.join(PACKAGE_FILE);
    files::write_atomic(&package_path, &write_package(&output.package))
        .map_err(|e| failed(format!("cannot write {}: {e}", package_path.display())))?;
    let mut report = serde_json::to_vec_pretty(&output.report).expect("report serializes");
    report.push(b'\n');
    files::write_atomic(&args.out.join(REPORT_FILE), &report)
        .map_err(|e| failed(format!("cannot write run report: {e}")))?;

    let r = &output.report;
    println!(
        "{} items from {} chunks ({} words, {} slides) written to {}",
        r.items,
        r.chunks,
        r.words,
        r.slides,
        package_path.display()
    );
    if let Some(stats) = &r.gateway {
        println!(
            "gateway: {} completions, {} network attempts, {} fixture hits, {} recorded",
            stats.completions, stats.network_attempts, stats.fixture_hits, stats.recorded
        );
    }
    if config.readability.report_means && !r.kind_means.is_empty() {
        print!("{}", score_table(&r.kind_means));
    }
    let timings: Vec<String> = r.stage_ms.iter().map(|(k, v)| format!("{k} {v} ms")).collect();
    println!("stages: {}", timings.join(", "));

    if !r.failures.is_empty() {
        for f in &r.failures {
            eprintln!("generation failed: {} chunk {}: {}", f.kind, f.chunk_no, f.error);
        }
        return Err(failed(format!("{} generation call(s) failed", r.failures.len())));
    }
    info!(items = r.items, "run complete");
    Ok(())
}

fn build_gateway(config: &Config, synthetic: bool) -> Result<Option<Gateway>, Failure> {
    let gw_config = config.gateway_config();
    let fixtures_path = config.fixtures.as_deref();
    let load = |path: &Path| {
        FixtureStore::load(path).map_err(|e| usage(format!("cannot load fixtures {}: {e}", path.display())))
    };
    let gateway = match config.mode {
        RunMode::Rules => match fixtures_path {
            Some(path) => Some(Gateway::new(GatewayMode::Replay, gw_config, Some(load(path)?))),
            None => None,
        },
        RunMode::Replay => {
            let path = fixtures_path.ok_or_else(|| usage("replay mode needs a fixtures path"))?;
            Some(Gateway::new(GatewayMode::Replay, gw_config, Some(load(path)?)))
        }
        RunMode::Live | RunMode::Record => {
            let api_key = match (ApiKey::from_env(), synthetic) {
                (Some(key), _) => key,
                (None, true) => ApiKey::new("synthetic"),
                (None, false) => return Err(usage("MICROFORGE_API_KEY is not set")),
            };
            let gw_config = microforge_core::gateway::GatewayConfig {
                api_key: Some(api_key),
                ..gw_config
            };
            if config.mode == RunMode::Live {
                Some(Gateway::new(GatewayMode::Live, gw_config, None))
            } else {
                let path = fixtures_path.ok_or_else(|| usage("record mode needs a fixtures path"))?;
                let store = FixtureStore::open_or_create(path)
                    .map_err(|e| usage(format!("cannot open fixtures {}: {e}", path.display())))?;
                Some(Gateway::new(GatewayMode::Record, gw_config, Some(store)))
            }
        }
    };
    match gateway.transpose().map_err(|e| usage(e.to_string()))? {
        Some(gw) if synthetic => Ok(Some(gw.with_transport(Arc::new(SyntheticProvider::new())))),
        other => Ok(other),
    }
}

// ---------------------------------------------------------------------------
// review / score / export
// ---------------------------------------------------------------------------

fn load_package(path: &Path) -> Result<Package, Failure> {
    let bytes = files::read(path).map_err(usage)?;
    import_package(&bytes).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn cmd_review(path: &Path, action: ReviewCmd) -> Result<(), Failure> {
    if matches!(action, ReviewCmd::List) {
        let package = load_package(path)?;
        print!("{}", item_table(&package));
        return Ok(());
    }

    let _lock = files::PackageLock::acquire(path).map_err(failed)?;
    let package = load_package(path)?;
    let (item_id, decision, actor) = match action {
        ReviewCmd::List => unreachable!("handled above"),
        ReviewCmd::Approve { item_id, actor } => (item_id, ReviewDecision::Approve, actor),
        ReviewCmd::Reject { item_id, actor } => (item_id, ReviewDecision::Reject, actor),
        ReviewCmd::Edit {
            item_id,
            body,
            body_file,
            actor,
        } => {
            let id = ItemId::new(&item_id);
            let item = package
                .item(&id)
                .ok_or_else(|| usage(format!("no item with id {item_id}")))?;
            let raw = match (body, body_file) {
                (Some(text), _) => text,
                (None, Some(file)) => String::from_utf8(files::read(&file).map_err(usage)?)
                    .map_err(|_| usage(format!("{} is not UTF-8", file.display())))?,
                (None, None) => return Err(usage("edit needs --body or --body-file")),
            };
            let mut bodies = parse_structured(item.kind(), &format!("[{}]", raw.trim()))
                .map_err(|e| usage(format!("invalid {} body: {e}", item.kind())))?;
            if bodies.len() != 1 {
                return Err(usage("edit takes exactly one body object"));
            }
            (item_id, ReviewDecision::Edit(bodies.remove(0)), actor)
        }
    };

    let id = ItemId::new(item_id);
    let next = apply_review(&package, &id, decision, &actor, &Clock::System).map_err(|e| usage(e.to_string()))?;
    files::write_atomic(path, &write_package(&next))
        .map_err(|e| failed(format!("cannot write {}: {e}", path.display())))?;
    let item = next.item(&id).expect("reviewed item exists");
    println!("{} is now {}", id, item.status());
    Ok(())
}

fn item_table(package: &Package) -> String {
    let mut out = format!(
        "{:<26}  {:<11}  {:<9}  {:>7}  {}\n",
        "ITEM", "KIND", "STATUS", "FRE", "BAND"
    );
    for item in &package.items {
        let (fre, band) = match item.readability() {
            Some(r) => (format!("{:.2}", r.fre), r.band.label().to_string()),
            None => ("-".into(), "-".into()),
        };
        let _ = writeln!(
            out,
            "{:<26}  {:<11}  {:<9}  {:>7}  {}",
            item.item_id().as_str(),
            item.kind().as_str(),
            item.status().as_str(),
            fre,
            band
        );
    }
    out
}

fn score_table(rows: &[microforge_core::readability::KindSummary]) -> String {
    let mut out = format!("{:<11}  {:>5}  {:>8}  {}\n", "KIND", "ITEMS", "MEAN FRE", "BAND");
    for row in rows {
        let _ = writeln!(
            out,
            "{:<11}  {:>5}  {:>8.2}  {}",
            row.kind.as_str(),
            row.items,
            row.mean_fre,
            row.band.label()
        );
    }
    out
}

fn cmd_score(path: &Path) -> Result<(), Failure> {
    let package = load_package(path)?;
    let rows = kind_means(package.items.iter().filter(|i| i.status() != Status::Rejected));
    print!("{}", score_table(&rows));
    Ok(())
}

fn cmd_export(path: &Path, format: Format, out: Option<&Path>, allow_unreviewed: bool) -> Result<(), Failure> {
    let package = load_package(path)?;
    let format = match format {
        Format::Package => ExportFormat::PackageFile,
        Format::Markdown => ExportFormat::Markdown,
        Format::Tsv => ExportFormat::FlashcardsTsv,
    };
    let bytes = export(&package, format, allow_unreviewed).map_err(|e| failed(e.to_string()))?;
    match out {
        Some(target) => {
            files::write_atomic(target, &bytes).map_err(|e| failed(format!("cannot write {}: {e}", target.display())))
        }
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(&bytes)
                .map_err(|e| failed(format!("cannot write to stdout: {e}")))
        }
    }
}
