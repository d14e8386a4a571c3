//! End-to-end run: ingest, chunk, refine, generate, score, package.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;
use tracing::{info, warn};

use crate::config::{Config, RunMode};
use crate::gateway::{Gateway, GatewayStats};
use crate::generate::{
    generate_all, CallFailure, CallSummary, ElementCounts, GenerateError, GenerationContext, Sampling,
};
use crate::ingest::{parse_slides, parse_transcript, FormatHint, IngestError};
use crate::model::{Clock, IdGenerator, LectureSource, ModelError, Package, PIPELINE_VERSION};
use crate::readability::{kind_means, score_item, KindSummary};
use crate::refine::{chunk_transcript, refine_all_llm, refine_all_rules, FillerLexicon, RefineError, RefineMode};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("transcript: {0}")]
    Transcript(IngestError),
    #[error("slides: {0}")]
    Slides(IngestError),
    #[error(transparent)]
    Refine(#[from] RefineError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("mode {0} needs a configured gateway")]
    NoGateway(RunMode),
}

impl PipelineError {
    /// True when the inputs or settings are at fault rather than a stage.
    pub fn is_usage_error(&self) -> bool {
        matches!(
            self,
            PipelineError::Transcript(_)
                | PipelineError::Slides(_)
                | PipelineError::NoGateway(_)
                | PipelineError::Refine(RefineError::BadChunkConfig(_))
                | PipelineError::Model(ModelError::InvalidSource(_))
        )
    }
}

pub struct PipelineInput<'a> {
    pub lecture_id: String,
    pub title: String,
    pub transcript: &'a [u8],
    pub format: FormatHint,
    pub slides: Option<&'a [u8]>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub lecture_id: String,
    pub mode: RunMode,
    pub refine_mode: RefineMode,
    pub words: usize,
    pub chunks: usize,
    pub slides: usize,
    pub refine_calls: usize,
    /// Planned generation prompts per chunk, indexed by chunk number.
    pub generation_calls_per_chunk: Vec<usize>,
    pub generation_calls: Vec<CallSummary>,
    pub failures: Vec<CallFailure>,
    pub duplicates_dropped: usize,
    pub items: usize,
    pub gateway: Option<GatewayStats>,
    pub kind_means: Vec<KindSummary>,
    pub stage_ms: BTreeMap<String, u64>,
    pub warnings: Vec<String>,
}

pub struct RunOutput {
    pub package: Package,
    pub report: RunReport,
}

struct Stopwatch {
    at: Instant,
    stages: BTreeMap<String, u64>,
}

impl Stopwatch {
    fn start() -> Self {
        Stopwatch {
            at: Instant::now(),
            stages: BTreeMap::new(),
        }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.stages
            .insert(stage.to_string(), now.duration_since(self.at).as_millis() as u64);
        self.at = now;
    }
}

/// Runs the whole pipeline. In rules mode `gateway` is optional and, when
/// present, used for generation only; every other mode requires it.
///
/// Individual generation failures do not abort the run. They are listed in
/// the report and the package holds whatever succeeded.
pub fn run(
    input: PipelineInput<'_>,
    config: &Config,
    gateway: Option<&Gateway>,
    ids: &IdGenerator,
    clock: &Clock,
) -> Result<RunOutput, PipelineError> {
    if config.mode != RunMode::Rules && gateway.is_none() {
        return Err(PipelineError::NoGateway(config.mode));
    }
    let mut watch = Stopwatch::start();

    let parsed = parse_transcript(input.transcript, input.format).map_err(PipelineError::Transcript)?;
    let slides = match input.slides {
        Some(raw) => parse_slides(raw).map_err(PipelineError::Slides)?,
        None => Vec::new(),
    };
    let mut warnings = parsed.warnings.clone();
    let source = LectureSource::new(input.lecture_id, input.title, parsed.segments, slides, clock.now())?;
    watch.lap("ingest");

    let chunks = chunk_transcript(
        &source.transcript,
        config.chunking.chunk_words,
        config.chunking.overlap_words,
    )?;
    let words = chunks.last().map_or(0, |c| c.end_word);
    watch.lap("chunk");
    info!(
        words,
        chunks = chunks.len(),
        slides = source.slides.len(),
        "ingested lecture"
    );

    let refined = match (config.mode, gateway) {
        (RunMode::Rules, _) => refine_all_rules(&source.lecture_id, &chunks, &FillerLexicon::default(), clock),
        (_, Some(gw)) => refine_all_llm(
            &source.lecture_id,
            &chunks,
            gw,
            config.provider.temperature_refine,
            config.provider.max_tokens,
            clock,
        )?,
        (mode, None) => return Err(PipelineError::NoGateway(mode)),
    };
    let refine_calls = if refined.mode == RefineMode::Llm {
        chunks.len()
    } else {
        0
    };
    watch.lap("refine");

    let generation = match gateway {
        Some(gw) => {
            let ctx = GenerationContext {
                gateway: gw,
                ids,
                clock,
                sampling: Sampling {
                    temperature: config.provider.temperature_generate,
                    max_tokens: config.provider.max_tokens,
                },
            };
            Some(generate_all(
                &refined,
                &source.slides,
                &ElementCounts::from(&config.counts),
                &ctx,
            )?)
        }
        None => {
            warnings.push("no gateway configured; generation skipped".into());
            None
        }
    };
    watch.lap("generate");

    let generation = generation.unwrap_or_default();
    let mut items = Vec::with_capacity(generation.items.len());
    for item in &generation.items {
        match score_item(item) {
            Ok(scored) => items.push(scored),
            Err(e) => {
                warn!(item = %item.item_id(), error = %e, "item left unscored");
                warnings.push(format!("item {} left unscored: {e}", item.item_id()));
                items.push(item.clone());
            }
        }
    }
    let means = kind_means(&items);
    watch.lap("score");

    let mut package = Package::new(source.summary(), items)?;
    package
        .manifest
        .insert("pipeline_version".into(), Value::from(PIPELINE_VERSION));
    package
        .manifest
        .insert("mode".into(), Value::from(config.mode.to_string()));
    package
        .manifest
        .insert("created_at".into(), Value::from(source.created_at.to_string()));
    if let Some(gw) = gateway {
        package.manifest.insert("model_id".into(), Value::from(gw.model_id()));
    }
    watch.lap("package");

    let mut per_chunk = vec![0usize; chunks.len()];
    let planned = generation
        .calls
        .iter()
        .map(|c| c.chunk_no)
        .chain(generation.failures.iter().map(|f| f.chunk_no));
    for chunk_no in planned {
        if let Some(n) = per_chunk.get_mut(chunk_no as usize) {
            *n += 1;
        }
    }

    let report = RunReport {
        lecture_id: package.source.lecture_id.clone(),
        mode: config.mode,
        refine_mode: refined.mode,
        words,
        chunks: chunks.len(),
        slides: source.slides.len(),
        refine_calls,
        generation_calls_per_chunk: per_chunk,
        generation_calls: generation.calls,
        failures: generation.failures,
        duplicates_dropped: generation.duplicates_dropped,
        items: package.items.len(),
        gateway: gateway.map(Gateway::stats),
        kind_means: means,
        stage_ms: watch.stages,
        warnings,
    };
    Ok(RunOutput { package, report })
}
