//! End-to-end resolution workflow: registry lookup, enrichment,
//! classification, legal-form check, code issuance and the review queue.
//!
//! A run directory produced by [`run_pipeline`] contains:
//!
//! | file | content |
//! |---|---|
//! | `resolutions.csv` | one row per input case |
//! | `metrics.json`, `metrics.csv`, `metrics.md` | per-backend and final metrics (when ground truth is present) |
//! | `training_balanced.csv` | labeled cases after random oversampling |
//! | `report.json` | counts, enqueued ids, backend calls, per-case errors |
//! | `run.json` | manifest pointing at the registry store |
//! | `queue/` | the review-queue journal |

pub mod config;
mod journal;
pub mod queue;
pub mod reference;
pub mod registry;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{AbbreviationPrecedence, ConfigError, RunConfig};
pub use journal::JournalError;
pub use queue::{AuditAction, AuditEntry, CaseStatus, Clock, FixedClock, QueueEntry, ReviewQueue, SystemClock};
pub use reference::{EnrichError, MissingIdentifier, ReferenceSourceClient};
pub use registry::{registry_lookup, RegistryStore};

use crate::classify::{
    classify_case, ensemble_vote, BackendDescriptor, ChatRequest, ChatTransport, ThresholdPolicy,
    TransportError,
};
use crate::entity_model::{
    load_dataset, write_dataset, CaseId, DatasetFormat, MatchCase, RejectReason, ResolutionLabel,
};
use crate::evaluate::{
    class_distribution, compute_metrics, confusion_from_cases, emit_report, random_oversample, ClassCounts,
    ConfusionSummary, MetricsRow, ReportFormat,
};
use crate::legal_form::{compare_legal_forms, LegalFormCodeMap, LegalFormRegistry, LegalFormVerdict, VerdictClass};
use crate::similarity::{score_pair, VectorizerConfig};
use crate::text_normalize::{normalize_name, NormalizationProfile};
use queue::QueueCommitError;

pub const SCHEMA_VERSION: u32 = 1;
pub const RESOLUTIONS_FILE: &str = "resolutions.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "run.json";
pub const BALANCED_FILE: &str = "training_balanced.csv";
pub const QUEUE_DIR: &str = "queue";
/// Method name of the metrics row scoring the final resolutions.
pub const FINAL_METHOD: &str = "resolution";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot load input: {0}")]
    Input(#[from] crate::entity_model::DatasetError),
    #[error(transparent)]
    Store(#[from] JournalError),
    #[error("{path}: {message}")]
    Output { path: String, message: String },
    #[error("{0} is not a run directory (no {MANIFEST_FILE})")]
    NotARun(String),
}

fn output_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::Output {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Everything needed to classify a case, built once per run.
pub struct Engine {
    pub profile: NormalizationProfile,
    pub vectorizer: VectorizerConfig,
    pub legal_forms: LegalFormRegistry,
    pub legal_form_codes: LegalFormCodeMap,
    pub backends: Vec<BackendDescriptor>,
    pub decision: Vec<String>,
    pub policies: BTreeMap<String, ThresholdPolicy>,
    pub transports: BTreeMap<String, Arc<dyn ChatTransport>>,
    pub abbreviation_precedence: AbbreviationPrecedence,
}

impl Engine {
    pub fn from_config(config: &RunConfig) -> Result<Self, ConfigError> {
        let (legal_forms, legal_form_codes) = config.legal_form_tables()?;
        let backends = config.effective_backends();
        let policies = backends
            .iter()
            .filter_map(|b| b.metric.as_deref())
            .map(|m| (m.to_string(), config.policy_for(m)))
            .collect();
        Ok(Self {
            profile: config.profile()?,
            vectorizer: config.vectorizer.clone(),
            legal_forms,
            legal_form_codes,
            backends,
            decision: config.effective_decision(),
            policies,
            transports: config.transports()?,
            abbreviation_precedence: config.abbreviation_precedence,
        })
    }

    /// Distance backends only, with default thresholds; `decision` names
    /// the metrics that vote.
    pub fn distance_only(decision: &[&str]) -> Self {
        let config = RunConfig::new("", "", "");
        let mut engine = Self::from_config(&config).expect("builtin tables are valid");
        engine.decision = decision.iter().map(|s| s.to_string()).collect();
        engine
    }

    /// Adds (or replaces) a chat backend with its transport.
    pub fn with_chat_backend(mut self, backend: BackendDescriptor, transport: Arc<dyn ChatTransport>) -> Self {
        self.backends.retain(|b| b.name != backend.name);
        self.transports.insert(backend.name.clone(), transport);
        self.backends.push(backend);
        self
    }

    fn policy(&self, backend: &BackendDescriptor) -> ThresholdPolicy {
        backend
            .metric
            .as_deref()
            .and_then(|m| self.policies.get(m))
            .copied()
            .unwrap_or_default()
    }
}

/// Result of classifying one case, before any store is touched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub case: MatchCase,
    /// Label from the name comparison alone.
    pub name_label: ResolutionLabel,
    /// Present iff the name comparison returned Accepted.
    pub legal_form: Option<LegalFormVerdict>,
    pub raw_responses: BTreeMap<String, String>,
    pub errors: Vec<String>,
}

/// Scores the case against its official and previous names (best per
/// metric), runs every backend, votes over the decision backends and, for an
/// Accepted name match, checks legal-form consistency.
pub fn classify_and_check(mut case: MatchCase, engine: &Engine) -> CaseOutcome {
    case.verdicts.clear();
    case.reject_reasons.clear();
    case.assigned_code = None;
    score_case(&mut case, engine);

    let mut raw_responses = BTreeMap::new();
    let mut errors = Vec::new();
    let mut failures: BTreeMap<String, String> = BTreeMap::new();
    for backend in &engine.backends {
        let transport = engine.transports.get(&backend.name).map(|t| t.as_ref());
        match classify_case(&case, backend, &engine.policy(backend), transport) {
            Ok(c) => {
                case.verdicts.insert(backend.name.clone(), c.label);
                if let Some(raw) = c.raw_response {
                    raw_responses.insert(backend.name.clone(), raw);
                }
            }
            Err(e) => {
                errors.push(e.to_string());
                failures.insert(backend.name.clone(), e.message);
            }
        }
    }

    let failed: Vec<&String> = engine.decision.iter().filter(|d| failures.contains_key(*d)).collect();
    let name_label = if let Some(name) = failed.first() {
        case.reject_reasons
            .push(RejectReason::Other(format!("backend failure: {name}: {}", failures[*name])));
        ResolutionLabel::Doubtful
    } else {
        let votes: Vec<ResolutionLabel> = engine.decision.iter().filter_map(|d| case.verdicts.get(d).copied()).collect();
        ensemble_vote(&votes).unwrap_or(ResolutionLabel::Doubtful)
    };

    let mut resolution = name_label;
    let mut legal_form = None;
    match name_label {
        ResolutionLabel::Rejected => case.reject_reasons.push(RejectReason::NameMismatch),
        ResolutionLabel::Accepted => {
            let verdict = check_legal_form(&case, engine);
            match verdict.class {
                VerdictClass::Consistent => {}
                VerdictClass::Inconsistent => {
                    resolution = ResolutionLabel::Rejected;
                    case.reject_reasons.push(RejectReason::LegalFormMismatch);
                }
                VerdictClass::Indeterminate => {
                    resolution = ResolutionLabel::Doubtful;
                    if let Some(msg) = verdict.detail.strip_prefix(CONFIG_PREFIX) {
                        case.reject_reasons.push(RejectReason::Other(format!("{CONFIG_PREFIX}{msg}")));
                    }
                }
            }
            legal_form = Some(verdict);
        }
        ResolutionLabel::Doubtful => {}
    }
    case.resolution = Some(resolution);
    CaseOutcome {
        case,
        name_label,
        legal_form,
        raw_responses,
        errors,
    }
}

/// Sets each metric's score to its best value over the reference
/// candidates; a case without reference gets no scores.
pub fn score_case(case: &mut MatchCase, engine: &Engine) {
    case.scores.clear();
    for candidate in case.reference.candidates() {
        let triple = score_pair(&case.record.company_name, candidate, &engine.profile, &engine.vectorizer);
        for (metric, value) in triple.entries() {
            let slot = case.scores.entry(metric.to_string()).or_insert(value);
            *slot = slot.max(value);
        }
    }
}

const CONFIG_PREFIX: &str = "configuration: ";

fn check_legal_form(case: &MatchCase, engine: &Engine) -> LegalFormVerdict {
    let full = NormalizationProfile::full(engine.profile.abbreviation_dictionary.clone());
    let forms = &engine.legal_forms;
    let from_name = forms.extract_legal_form(&normalize_name(&case.record.company_name, &full)).1;
    let from_column = case
        .record
        .legal_form_abbreviation
        .as_deref()
        .and_then(|a| forms.canonicalize_abbreviation(a));
    let declared = match engine.abbreviation_precedence {
        AbbreviationPrecedence::NameSuffix => from_name.or(from_column),
        AbbreviationPrecedence::AbbreviationColumn => from_column.or(from_name),
    };
    let official = case
        .reference
        .candidates()
        .next()
        .and_then(|n| forms.extract_legal_form(&normalize_name(n, &full)).1);
    compare_legal_forms(case.record.legal_form_code.as_ref(), declared, official, &engine.legal_form_codes)
        .unwrap_or_else(|e| LegalFormVerdict {
            class: VerdictClass::Indeterminate,
            detail: format!("{CONFIG_PREFIX}{e}"),
        })
}

/// Applies an outcome to the stores: Accepted cases get a code, Doubtful
/// cases join the review queue.
pub fn finalize(
    outcome: &mut CaseOutcome,
    registry: &mut RegistryStore,
    queue: &mut ReviewQueue,
    clock: &dyn Clock,
) -> Result<(), JournalError> {
    match outcome.case.resolution {
        Some(ResolutionLabel::Accepted) => {
            let code = registry.code_for(&outcome.case.record, outcome.case.reference.official_name.as_deref())?;
            outcome.case.assigned_code = Some(code);
        }
        Some(ResolutionLabel::Doubtful) => {
            queue.enqueue(
                outcome.case.clone(),
                outcome.raw_responses.clone(),
                outcome.legal_form.clone(),
                clock.now(),
            )?;
        }
        _ => {}
    }
    Ok(())
}

/// Classifies one enriched case and records the result in the stores.
pub fn resolve_case(
    case: MatchCase,
    engine: &Engine,
    registry: &mut RegistryStore,
    queue: &mut ReviewQueue,
    clock: &dyn Clock,
) -> Result<CaseOutcome, JournalError> {
    let mut outcome = classify_and_check(case, engine);
    finalize(&mut outcome, registry, queue, clock)?;
    Ok(outcome)
}

/// Fills in the reference entry from `client` unless the input already
/// carried one.
pub fn enrich(case: &mut MatchCase, client: &dyn ReferenceSourceClient) -> Result<(), EnrichError> {
    if !case.reference.is_empty() {
        return Ok(());
    }
    let r = &case.record;
    case.reference = client.fetch(&r.country, r.national_identifier.as_deref(), &r.company_name)?;
    Ok(())
}

/// Counts calls per case on the way to the real transport.
struct CountingTransport {
    inner: Arc<dyn ChatTransport>,
    calls: Mutex<BTreeMap<CaseId, u64>>,
}

impl ChatTransport for CountingTransport {
    fn complete(&self, case_id: &CaseId, request: &ChatRequest) -> Result<String, TransportError> {
        *self.calls.lock().expect("counter lock").entry(case_id.clone()).or_default() += 1;
        self.inner.complete(case_id, request)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseError {
    pub case_id: CaseId,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub cases_total: usize,
    /// Ground-truth labels of the input.
    pub class_distribution: ClassCounts,
    /// Final resolutions.
    pub resolved: ClassCounts,
    pub registry_hits: Vec<CaseId>,
    /// Backend calls made for registry-hit cases; always zero.
    pub registry_hit_backend_calls: u64,
    pub backend_calls: BTreeMap<String, u64>,
    pub enqueued: Vec<CaseId>,
    pub codes_issued: usize,
    pub metrics: Vec<MetricsRow>,
    /// Doubtful predictions and excluded cases behind each metrics row.
    pub confusion: BTreeMap<String, ConfusionSummary>,
    pub errors: Vec<CaseError>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub input: PathBuf,
    pub registry: PathBuf,
    pub seed: u64,
}

impl RunManifest {
    pub fn load(run_dir: &Path) -> Result<Self, PipelineError> {
        let path = run_dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|_| PipelineError::NotARun(run_dir.display().to_string()))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Output {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub schema_version: u32,
    pub rows: Vec<MetricsRow>,
}

pub fn run_pipeline(config: &RunConfig) -> Result<RunReport, PipelineError> {
    run_pipeline_with(config, &SystemClock)
}

/// Runs the whole workflow. Per-case failures are collected in the report;
/// only configuration, input and store errors abort.
pub fn run_pipeline_with(config: &RunConfig, clock: &dyn Clock) -> Result<RunReport, PipelineError> {
    config.validate()?;
    let mut engine = Engine::from_config(config)?;
    let counters: BTreeMap<String, Arc<CountingTransport>> = engine
        .transports
        .iter()
        .map(|(name, t)| {
            let counted = Arc::new(CountingTransport {
                inner: t.clone(),
                calls: Mutex::new(BTreeMap::new()),
            });
            (name.clone(), counted)
        })
        .collect();
    for (name, c) in &counters {
        engine.transports.insert(name.clone(), c.clone());
    }
    let client = config.reference_client()?;
    let cases = load_dataset(&config.input, DatasetFormat::Auto)?;

    std::fs::create_dir_all(&config.out_dir).map_err(output_err(&config.out_dir))?;
    let seed = config.registry_seed_file()?;
    let mut registry = RegistryStore::open(&config.registry)?;
    if let Some(seed) = &seed {
        registry.seed(seed)?;
    }
    let mut queue = ReviewQueue::open(config.out_dir.join(QUEUE_DIR))?;

    let hits: Vec<Option<String>> = cases
        .iter()
        .map(|c| registry_lookup(&c.record, &registry).map(str::to_string))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.concurrency)
        .build()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let outcomes: Vec<Option<CaseOutcome>> = pool.install(|| {
        cases
            .par_iter()
            .zip(hits.par_iter())
            .map(|(case, hit)| {
                if hit.is_some() {
                    return None;
                }
                let mut case = case.clone();
                let enrich_error = enrich(&mut case, client.as_ref()).err();
                let mut outcome = classify_and_check(case, &engine);
                if let Some(e) = enrich_error {
                    outcome.errors.insert(0, e.to_string());
                }
                Some(outcome)
            })
            .collect()
    });

    let mut final_cases = Vec::with_capacity(cases.len());
    let mut legal_forms = Vec::with_capacity(cases.len());
    let mut enqueued = Vec::new();
    let mut registry_hits = Vec::new();
    let mut errors = Vec::new();
    let mut codes_issued = 0;
    for ((case, hit), outcome) in cases.iter().zip(hits).zip(outcomes) {
        match (hit, outcome) {
            (Some(code), _) => {
                let mut case = case.clone();
                case.resolution = Some(ResolutionLabel::Accepted);
                case.assigned_code = Some(code);
                registry_hits.push(case.case_id.clone());
                final_cases.push(case);
                legal_forms.push(None);
            }
            (None, Some(mut outcome)) => {
                let before = registry.entries().count();
                let was_pending = queue
                    .get(&outcome.case.case_id)
                    .is_some_and(|e| e.status == CaseStatus::Pending);
                finalize(&mut outcome, &mut registry, &mut queue, clock)?;
                codes_issued += registry.entries().count() - before;
                if outcome.case.resolution == Some(ResolutionLabel::Doubtful) && !was_pending {
                    enqueued.push(outcome.case.case_id.clone());
                }
                errors.extend(outcome.errors.iter().map(|m| CaseError {
                    case_id: outcome.case.case_id.clone(),
                    message: m.clone(),
                }));
                legal_forms.push(outcome.legal_form);
                final_cases.push(outcome.case);
            }
            (None, None) => unreachable!("non-hit cases are classified"),
        }
    }

    let mut backend_calls = BTreeMap::new();
    let mut registry_hit_backend_calls = 0;
    for (name, c) in &counters {
        let calls = c.calls.lock().expect("counter lock");
        backend_calls.insert(name.clone(), calls.values().sum());
        registry_hit_backend_calls += registry_hits.iter().filter_map(|id| calls.get(id)).sum::<u64>();
    }

    let (metrics, confusion) = evaluate_run(&final_cases, &engine, &mut errors);
    for e in &errors {
        log::warn!("{}: {}", e.case_id, e.message);
    }
    let out = &config.out_dir;
    write_resolutions(&out.join(RESOLUTIONS_FILE), &final_cases, &legal_forms, &registry_hits)?;
    if !metrics.is_empty() {
        write_json(
            &out.join(METRICS_FILE),
            &MetricsFile {
                schema_version: SCHEMA_VERSION,
                rows: metrics.clone(),
            },
        )?;
        for (format, file) in [(ReportFormat::Delimited, "metrics.csv"), (ReportFormat::Markdown, "metrics.md")] {
            let text = emit_report(&metrics, format).expect("rows present");
            let path = out.join(file);
            std::fs::write(&path, text).map_err(output_err(&path))?;
        }
    }
    let labeled: Vec<MatchCase> = cases
        .iter()
        .filter(|c| matches!(c.ground_truth, Some(ResolutionLabel::Accepted | ResolutionLabel::Rejected)))
        .cloned()
        .collect();
    if let Ok(balanced) = random_oversample(&labeled, config.seed) {
        let path = out.join(BALANCED_FILE);
        let file = std::fs::File::create(&path).map_err(output_err(&path))?;
        write_dataset(&balanced, file).map_err(|e| PipelineError::Output {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    }

    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        cases_total: cases.len(),
        class_distribution: class_distribution(&cases),
        resolved: resolution_counts(&final_cases),
        registry_hits,
        registry_hit_backend_calls,
        backend_calls,
        enqueued,
        codes_issued,
        metrics,
        confusion,
        errors,
    };
    write_json(&out.join(REPORT_FILE), &report)?;
    write_json(
        &out.join(MANIFEST_FILE),
        &RunManifest {
            schema_version: SCHEMA_VERSION,
            input: config.input.clone(),
            registry: config.registry.clone(),
            seed: config.seed,
        },
    )?;
    registry.compact()?;
    queue.compact()?;
    log::info!(
        "{} cases: {} registry hits, {} accepted, {} rejected, {} doubtful",
        report.cases_total,
        report.registry_hits.len(),
        report.resolved.accepted,
        report.resolved.rejected,
        report.resolved.doubtful
    );
    Ok(report)
}

fn resolution_counts(cases: &[MatchCase]) -> ClassCounts {
    let mut c = ClassCounts::default();
    for case in cases {
        match case.resolution {
            Some(ResolutionLabel::Accepted) => c.accepted += 1,
            Some(ResolutionLabel::Rejected) => c.rejected += 1,
            Some(ResolutionLabel::Doubtful) => c.doubtful += 1,
            None => c.unlabeled += 1,
        }
    }
    c
}

/// One metrics row per backend (over the cases it classified) plus a final
/// row over every resolution, restricted to cases with ground truth.
fn evaluate_run(
    cases: &[MatchCase],
    engine: &Engine,
    errors: &mut Vec<CaseError>,
) -> (Vec<MetricsRow>, BTreeMap<String, ConfusionSummary>) {
    let labeled: Vec<&MatchCase> = cases.iter().filter(|c| c.ground_truth.is_some()).collect();
    let mut rows = Vec::new();
    let mut confusion = BTreeMap::new();
    if labeled.is_empty() {
        return (rows, confusion);
    }
    let owned: Vec<MatchCase> = labeled.iter().map(|c| (*c).clone()).collect();
    let mut methods: Vec<(String, HashMap<CaseId, ResolutionLabel>)> = engine
        .backends
        .iter()
        .map(|b| {
            let preds = labeled
                .iter()
                .filter_map(|c| c.verdicts.get(&b.name).map(|l| (c.case_id.clone(), *l)))
                .collect();
            (b.name.clone(), preds)
        })
        .collect();
    methods.push((
        FINAL_METHOD.to_string(),
        labeled
            .iter()
            .filter_map(|c| c.resolution.map(|l| (c.case_id.clone(), l)))
            .collect(),
    ));
    for (name, preds) in methods {
        if preds.is_empty() {
            continue;
        }
        let result = confusion_from_cases(&owned, &preds)
            .and_then(|s| compute_metrics(&name, &s.matrix).map(|row| (s, row)));
        match result {
            Ok((summary, row)) => {
                confusion.insert(name, summary);
                rows.push(row);
            }
            Err(e) => errors.push(CaseError {
                case_id: CaseId(String::new()),
                message: format!("metrics for {name}: {e}"),
            }),
        }
    }
    (rows, confusion)
}

pub const RESOLUTION_COLUMNS: [&str; 11] = [
    "case_id",
    "company_name",
    "resolution",
    "reasons",
    "levenshtein",
    "cosine",
    "jaccard",
    "verdicts",
    "legal_form",
    "assigned_code",
    "source",
];

fn write_resolutions(
    path: &Path,
    cases: &[MatchCase],
    legal_forms: &[Option<LegalFormVerdict>],
    hits: &[CaseId],
) -> Result<(), PipelineError> {
    let err = |e: csv::Error| PipelineError::Output {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(RESOLUTION_COLUMNS).map_err(err)?;
    for (case, lf) in cases.iter().zip(legal_forms) {
        let score = |m: &str| case.scores.get(m).map(|s| format!("{s:.6}")).unwrap_or_default();
        let reasons: Vec<String> = case.reject_reasons.iter().map(ToString::to_string).collect();
        let verdicts: Vec<String> = case.verdicts.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let lf = lf.as_ref().map(|v| format!("{:?}", v.class)).unwrap_or_default();
        let source = if hits.contains(&case.case_id) { "registry" } else { "classified" };
        w.write_record([
            case.case_id.as_str(),
            &case.record.company_name,
            case.resolution.map(|l| l.as_str()).unwrap_or(""),
            &reasons.join(";"),
            &score(crate::similarity::LEVENSHTEIN),
            &score(crate::similarity::COSINE),
            &score(crate::similarity::JACCARD),
            &verdicts.join(";"),
            &lf,
            case.assigned_code.as_deref().unwrap_or(""),
            source,
        ])
        .map_err(err)?;
    }
    w.flush().map_err(output_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(output_err(path))
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReviewError {
    #[error("unknown case {0}")]
    NotFound(CaseId),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Storage(String),
}

impl From<JournalError> for ReviewError {
    fn from(e: JournalError) -> Self {
        Self::Storage(e.to_string())
    }
}

/// Single writer for review decisions: owns the queue and opens the registry
/// for each mutation so that concurrent CLI use is seen.
pub struct ReviewDesk {
    queue: ReviewQueue,
    registry_dir: Option<PathBuf>,
    memory_registry: Option<RegistryStore>,
    clock: Box<dyn Clock>,
}

impl ReviewDesk {
    pub fn open(run_dir: impl AsRef<Path>, clock: Box<dyn Clock>) -> Result<Self, PipelineError> {
        let run_dir = run_dir.as_ref();
        let manifest = RunManifest::load(run_dir)?;
        Ok(Self {
            queue: ReviewQueue::open(run_dir.join(QUEUE_DIR))?,
            registry_dir: Some(manifest.registry),
            memory_registry: None,
            clock,
        })
    }

    pub fn in_memory(queue: ReviewQueue, registry: RegistryStore, clock: Box<dyn Clock>) -> Self {
        Self {
            queue,
            registry_dir: None,
            memory_registry: Some(registry),
            clock,
        }
    }

    /// Current queue, reloaded if another process changed it.
    pub fn queue(&mut self) -> Result<&ReviewQueue, ReviewError> {
        self.queue.refresh()?;
        Ok(&self.queue)
    }

    fn with_registry<T>(
        &mut self,
        f: impl FnOnce(&mut RegistryStore) -> Result<T, JournalError>,
    ) -> Result<T, ReviewError> {
        match (&self.registry_dir, &mut self.memory_registry) {
            (_, Some(store)) => Ok(f(store)?),
            (Some(dir), None) => {
                let mut store = RegistryStore::open(dir)?;
                Ok(f(&mut store)?)
            }
            (None, None) => unreachable!("desk has a registry"),
        }
    }

    pub fn registry_snapshot(&self) -> Result<RegistryStore, ReviewError> {
        match (&self.registry_dir, &self.memory_registry) {
            (Some(dir), None) => Ok(RegistryStore::open(dir)?),
            _ => Err(ReviewError::Validation("in-memory registry cannot be snapshotted".into())),
        }
    }

    fn pending(&mut self, case_id: &CaseId) -> Result<QueueEntry, ReviewError> {
        self.queue.refresh()?;
        let entry = self.queue.get(case_id).ok_or_else(|| ReviewError::NotFound(case_id.clone()))?;
        if entry.status != CaseStatus::Pending {
            return Err(ReviewError::Conflict(format!("case {case_id} is already resolved")));
        }
        Ok(entry.clone())
    }

    /// Resolves a pending case. Accepted issues (or reuses) a code; Rejected
    /// needs a reason.
    pub fn apply_review_decision(
        &mut self,
        case_id: &CaseId,
        decision: ResolutionLabel,
        reviewer: &str,
        reason: Option<RejectReason>,
    ) -> Result<QueueEntry, ReviewError> {
        let entry = self.pending(case_id)?;
        if reviewer.trim().is_empty() {
            return Err(ReviewError::Validation("reviewer is required".into()));
        }
        match (decision, &reason) {
            (ResolutionLabel::Doubtful, _) => {
                return Err(ReviewError::Validation("a review decision must be Accepted or Rejected".into()))
            }
            (ResolutionLabel::Rejected, None) => {
                return Err(ReviewError::Validation("a rejection needs a reason".into()))
            }
            (ResolutionLabel::Accepted, Some(_)) => {
                return Err(ReviewError::Validation("reasons apply only to rejections".into()))
            }
            _ => {}
        }
        let code = if decision == ResolutionLabel::Accepted {
            let case = &entry.case;
            Some(self.with_registry(|r| r.code_for(&case.record, case.reference.official_name.as_deref()))?)
        } else {
            None
        };
        let at = self.clock.now();
        self.commit(queue::QueueEvent::Decided {
            case_id: case_id.clone(),
            decision,
            reviewer: reviewer.to_string(),
            reason,
            code,
            at,
        })?;
        Ok(self.queue.get(case_id).expect("committed").clone())
    }

    /// Returns a resolved case to pending; an issued code is superseded.
    pub fn reprocess_case(&mut self, case_id: &CaseId, reviewer: &str) -> Result<QueueEntry, ReviewError> {
        self.queue.refresh()?;
        let entry = self.queue.get(case_id).ok_or_else(|| ReviewError::NotFound(case_id.clone()))?;
        if entry.status != CaseStatus::Resolved {
            return Err(ReviewError::Conflict(format!("case {case_id} has not been resolved")));
        }
        if reviewer.trim().is_empty() {
            return Err(ReviewError::Validation("reviewer is required".into()));
        }
        let code = entry.case.assigned_code.clone();
        if let Some(c) = &code {
            self.with_registry(|r| r.supersede(c))?;
        }
        let at = self.clock.now();
        self.commit(queue::QueueEvent::Reprocessed {
            case_id: case_id.clone(),
            reviewer: reviewer.to_string(),
            superseded_code: code,
            at,
        })?;
        Ok(self.queue.get(case_id).expect("committed").clone())
    }

    fn commit(&mut self, event: queue::QueueEvent) -> Result<(), ReviewError> {
        self.queue.commit(event).map_err(|e| match e {
            QueueCommitError::Invalid(m) => ReviewError::Conflict(m),
            QueueCommitError::Storage(e) => e.into(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{MockScript, MockTransport};
    use crate::entity_model::{EntityRecord, ReferenceEntry};
    use chrono::TimeZone;

    fn record(name: &str, nif: Option<&str>, field: Option<&str>) -> EntityRecord {
        EntityRecord {
            country: "PT".parse().unwrap(),
            company_name: name.into(),
            entity_app: "E".into(),
            national_identifier: nif.map(str::to_string),
            identifier_type: None,
            lei: None,
            sector: None,
            legal_form_code: field.map(|f| f.parse().unwrap()),
            legal_form_abbreviation: None,
        }
    }

    fn case(id: &str, name: &str, official: Option<&str>, field: Option<&str>) -> MatchCase {
        MatchCase::new(
            id.into(),
            record(name, Some(id), field),
            ReferenceEntry::new(official.map(str::to_string), Vec::<String>::new(), "t"),
        )
    }

    fn clock() -> FixedClock {
        FixedClock(chrono::Utc.with_ymd_and_hms(2025, 3, 1, 9, 0, 0).unwrap())
    }

    fn mock_engine(pairs: &[(&str, &str)]) -> (Engine, Arc<MockTransport>) {
        let t = Arc::new(MockTransport::new(MockScript::from_pairs(pairs.iter().copied())));
        let engine = Engine::distance_only(&["mock"]).with_chat_backend(BackendDescriptor::mock("mock"), t.clone());
        (engine, t)
    }

    #[test]
    fn legal_form_runs_only_after_accepted_name() {
        let engine = Engine::distance_only(&["levenshtein"]);
        let ok = classify_and_check(
            case("1", "SOLARSHOP, UNIPESSOAL, LDA", Some("SOLARSHOP, UNIPESSOAL, LDA"), Some("PT104")),
            &engine,
        );
        assert_eq!(ok.case.resolution, Some(ResolutionLabel::Accepted));
        assert_eq!(ok.legal_form.unwrap().class, VerdictClass::Consistent);

        let rejected = classify_and_check(case("2", "ALTRAD SPAIN SA", Some("ZETA HOLDINGS GMBH"), None), &engine);
        assert_eq!(rejected.case.resolution, Some(ResolutionLabel::Rejected));
        assert_eq!(rejected.case.reject_reasons, vec![RejectReason::NameMismatch]);
        assert!(rejected.legal_form.is_none());

        let (engine, _) = mock_engine(&[("3", "Equal")]);
        let clash = classify_and_check(case("3", "SILVER HORSE, S.A.", Some("SILVER HORSE, LDA"), None), &engine);
        assert_eq!(clash.name_label, ResolutionLabel::Accepted);
        assert_eq!(clash.case.resolution, Some(ResolutionLabel::Rejected));
        assert_eq!(clash.case.reject_reasons, vec![RejectReason::LegalFormMismatch]);
    }

    #[test]
    fn indeterminate_and_unmapped_forms_are_doubtful() {
        let engine = Engine::distance_only(&["levenshtein"]);
        let o = classify_and_check(case("1", "ACME", Some("ACME"), None), &engine);
        assert_eq!(o.name_label, ResolutionLabel::Accepted);
        assert_eq!(o.case.resolution, Some(ResolutionLabel::Doubtful));
        assert!(o.case.reject_reasons.is_empty());

        let o = classify_and_check(case("2", "ACME LDA", Some("ACME LDA"), Some("PT999")), &engine);
        assert_eq!(o.case.resolution, Some(ResolutionLabel::Doubtful));
        assert!(matches!(&o.case.reject_reasons[0], RejectReason::Other(t) if t.starts_with("configuration: ")));
    }

    #[test]
    fn scores_take_best_candidate() {
        let engine = Engine::distance_only(&["levenshtein"]);
        let mut c = case("1", "NOME ANTIGO LDA", Some("NOVO NOME COMPLETAMENTE DIFERENTE LDA"), None);
        c.reference.previous_names = vec!["NOME ANTIGO LDA".into()];
        let o = classify_and_check(c, &engine);
        assert_eq!(o.case.scores["levenshtein"], 1.0);
    }

    #[test]
    fn backend_failure_is_doubtful() {
        let (engine, t) = mock_engine(&[]);
        let o = classify_and_check(case("1", "ACME LDA", Some("ACME LDA"), None), &engine);
        assert_eq!(o.case.resolution, Some(ResolutionLabel::Doubtful));
        assert!(matches!(&o.case.reject_reasons[0], RejectReason::Other(t) if t.starts_with("backend failure")));
        assert_eq!(t.calls(), 1);
        assert!(!o.errors.is_empty());
    }

    #[test]
    fn resolve_assigns_codes_and_enqueues() {
        let (engine, _) = mock_engine(&[("1", "Equal"), ("2", "Different"), ("3", "Not sure")]);
        let mut registry = RegistryStore::in_memory();
        let mut queue = ReviewQueue::in_memory();
        let c = clock();
        let a = resolve_case(case("1", "ACME LDA", Some("ACME, LDA"), None), &engine, &mut registry, &mut queue, &c).unwrap();
        assert_eq!(a.case.assigned_code.as_deref(), Some("PT0000000"));
        let r = resolve_case(case("2", "ACME LDA", Some("ACME LDA"), None), &engine, &mut registry, &mut queue, &c).unwrap();
        assert_eq!(r.case.assigned_code, None);
        let d = resolve_case(case("3", "ACME LDA", Some("ACME LDA"), None), &engine, &mut registry, &mut queue, &c).unwrap();
        assert_eq!(d.case.resolution, Some(ResolutionLabel::Doubtful));
        let pending = queue.list(Some(CaseStatus::Pending));
        assert_eq!(pending.len(), 1);
        assert_eq!(pending[0].raw_responses["mock"], "Not sure");
        // no reference at all: Doubtful without calling the backend
        let n = resolve_case(case("4", "SIMBOLO II", None, None), &engine, &mut registry, &mut queue, &c).unwrap();
        assert_eq!(n.case.resolution, Some(ResolutionLabel::Doubtful));
        assert_eq!(queue.len(), 2);
    }

    fn desk_with_pending() -> ReviewDesk {
        let mut queue = ReviewQueue::in_memory();
        let c = case("9", "SIMBOLO II - INFORMATICA DE GESTAO LDA", None, None);
        queue.enqueue(c, BTreeMap::new(), None, clock().now()).unwrap();
        ReviewDesk::in_memory(queue, RegistryStore::in_memory(), Box::new(clock()))
    }

    #[test]
    fn review_decisions() {
        let mut desk = desk_with_pending();
        let id = CaseId::from("9");
        let unknown = CaseId::from("nope");
        assert_eq!(
            desk.apply_review_decision(&unknown, ResolutionLabel::Accepted, "jr", None),
            Err(ReviewError::NotFound(unknown.clone()))
        );
        assert!(matches!(
            desk.apply_review_decision(&id, ResolutionLabel::Rejected, "jr", None),
            Err(ReviewError::Validation(_))
        ));
        assert!(matches!(
            desk.apply_review_decision(&id, ResolutionLabel::Doubtful, "jr", None),
            Err(ReviewError::Validation(_))
        ));
        let e = desk
            .apply_review_decision(&id, ResolutionLabel::Rejected, "jr", Some(RejectReason::MissingReference))
            .unwrap();
        assert_eq!(e.status, CaseStatus::Resolved);
        assert_eq!(e.audit.len(), 2);
        assert_eq!(e.audit[1].reason, Some(RejectReason::MissingReference));
        assert!(matches!(
            desk.apply_review_decision(&id, ResolutionLabel::Accepted, "jr", None),
            Err(ReviewError::Conflict(_))
        ));
    }

    #[test]
    fn reprocess_supersedes_codes() {
        let mut desk = desk_with_pending();
        let id = CaseId::from("9");
        assert!(matches!(desk.reprocess_case(&id, "jr"), Err(ReviewError::Conflict(_))));
        let first = desk.apply_review_decision(&id, ResolutionLabel::Accepted, "jr", None).unwrap();
        let code = first.case.assigned_code.clone().unwrap();
        let back = desk.reprocess_case(&id, "mk").unwrap();
        assert_eq!(back.status, CaseStatus::Pending);
        assert_eq!(back.audit.len(), 3);
        assert_eq!(back.audit[2].superseded_code.as_deref(), Some(code.as_str()));
        let again = desk.apply_review_decision(&id, ResolutionLabel::Accepted, "mk", None).unwrap();
        assert_ne!(again.case.assigned_code.as_deref(), Some(code.as_str()));
        let registry = desk.memory_registry.as_ref().unwrap();
        assert!(registry.entry(&code).unwrap().superseded);
        assert_eq!(desk.queue().unwrap().len(), 1);
    }
}
