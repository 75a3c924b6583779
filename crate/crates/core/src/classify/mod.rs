//! Turning scores or model answers into resolution labels.
//!
//! Distance backends threshold a similarity score. Chat backends (remote or
//! scripted mock) are asked a two-label question and their answer is parsed
//! back into `Equal` / `Different`; anything else becomes `Doubtful`.

mod transport;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entity_model::{CaseId, MatchCase, ResolutionLabel};
use crate::similarity;

pub use transport::{
    ChatMessage, ChatRequest, ChatTransport, HttpChatTransport, MockScript, MockTransport, TransportError,
    REQUEST_SCHEMA,
};

#[derive(Debug, Error, PartialEq)]
pub enum ClassifyError {
    #[error("invalid threshold policy: need 0 <= reject_below ({reject_below}) <= accept_at ({accept_at}) <= 1")]
    Policy { accept_at: f64, reject_below: f64 },
    #[error("backend {name}: {message}")]
    Descriptor { name: String, message: String },
    #[error("nothing to compare against: no official name and no previous names")]
    MissingReference,
    #[error("ensemble vote over an empty label list")]
    EmptyEnsemble,
}

/// Failure of a single backend on a single case. The pipeline turns this
/// into a Doubtful resolution and keeps going.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("backend {backend} failed on case {case_id}: {message}")]
pub struct BackendError {
    pub case_id: CaseId,
    pub backend: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyRepr", into = "PolicyRepr")]
pub struct ThresholdPolicy {
    accept_at: f64,
    reject_below: f64,
}

#[derive(Serialize, Deserialize)]
struct PolicyRepr {
    accept_at: f64,
    reject_below: f64,
}

impl TryFrom<PolicyRepr> for ThresholdPolicy {
    type Error = ClassifyError;
    fn try_from(r: PolicyRepr) -> Result<Self, Self::Error> {
        Self::new(r.accept_at, r.reject_below)
    }
}

impl From<ThresholdPolicy> for PolicyRepr {
    fn from(p: ThresholdPolicy) -> Self {
        Self {
            accept_at: p.accept_at,
            reject_below: p.reject_below,
        }
    }
}

impl ThresholdPolicy {
    pub fn new(accept_at: f64, reject_below: f64) -> Result<Self, ClassifyError> {
        if !(0.0 <= reject_below && reject_below <= accept_at && accept_at <= 1.0) {
            return Err(ClassifyError::Policy {
                accept_at,
                reject_below,
            });
        }
        Ok(Self {
            accept_at,
            reject_below,
        })
    }

    pub fn accept_at(&self) -> f64 {
        self.accept_at
    }

    pub fn reject_below(&self) -> f64 {
        self.reject_below
    }
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self {
            accept_at: 0.95,
            reject_below: 0.80,
        }
    }
}

/// Accepted at or above `accept_at`, Rejected below `reject_below`,
/// Doubtful in between.
pub fn threshold_classify(score: f64, policy: &ThresholdPolicy) -> ResolutionLabel {
    if score >= policy.accept_at {
        ResolutionLabel::Accepted
    } else if score < policy.reject_below {
        ResolutionLabel::Rejected
    } else {
        ResolutionLabel::Doubtful
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZscLabel {
    Equal,
    Different,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZscVerdict {
    pub label: ZscLabel,
    pub raw_response: String,
}

impl ZscVerdict {
    pub fn resolution(&self) -> ResolutionLabel {
        match self.label {
            ZscLabel::Equal => ResolutionLabel::Accepted,
            ZscLabel::Different => ResolutionLabel::Rejected,
            ZscLabel::Unknown => ResolutionLabel::Doubtful,
        }
    }
}

/// Builds the two-label question for a declared name and its reference.
pub fn build_zsc_prompt(
    declared: &str,
    official: Option<&str>,
    previous_names: &[String],
) -> Result<String, ClassifyError> {
    if official.is_none() && previous_names.is_empty() {
        return Err(ClassifyError::MissingReference);
    }
    let mut prompt = String::from(
        "You compare company names from a regulatory filing against an official business registry.\n\
         Decide whether the declared name designates the same legal entity as the registry record.\n\
         Treat differences in punctuation, accents, letter case and common abbreviations as equal.\n\
         Answer with exactly one word: Equal or Different.\n\n",
    );
    prompt.push_str(&format!("Declared name: {declared}\n"));
    match official {
        Some(name) => prompt.push_str(&format!("Official name: {name}\n")),
        None => prompt.push_str("Official name: (not found in the registry)\n"),
    }
    for name in previous_names {
        prompt.push_str(&format!("Previous official name: {name}\n"));
    }
    prompt.push_str("\nAnswer:");
    Ok(prompt)
}

/// Reads the first label word in a response, case-insensitively.
///
/// A response mentioning both labels, or neither, is `Unknown`.
pub fn parse_zsc_response(text: &str) -> ZscVerdict {
    let words: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect();
    let equal = words.iter().position(|w| w == "equal");
    let different = words.iter().position(|w| w == "different");
    let label = match (equal, different) {
        (Some(_), None) => ZscLabel::Equal,
        (None, Some(_)) => ZscLabel::Different,
        _ => ZscLabel::Unknown,
    };
    ZscVerdict {
        label,
        raw_response: text.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    DistanceThreshold,
    RemoteChat,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub name: String,
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model_id: Option<String>,
    /// Similarity metric thresholded by a distance backend.
    #[serde(default)]
    pub metric: Option<String>,
    /// Scripted responses for a mock backend.
    #[serde(default)]
    pub script: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_retries() -> u32 {
    2
}

impl BackendDescriptor {
    pub fn distance(metric: &str) -> Self {
        Self {
            name: metric.to_string(),
            kind: BackendKind::DistanceThreshold,
            endpoint: None,
            model_id: None,
            metric: Some(metric.to_string()),
            script: None,
            timeout_ms: default_timeout_ms(),
            max_retries: 0,
        }
    }

    pub fn mock(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: BackendKind::Mock,
            endpoint: None,
            model_id: None,
            metric: None,
            script: None,
            timeout_ms: default_timeout_ms(),
            max_retries: 0,
        }
    }

    pub fn remote(name: &str, endpoint: &str, model_id: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: BackendKind::RemoteChat,
            endpoint: Some(endpoint.to_string()),
            model_id: Some(model_id.to_string()),
            metric: None,
            script: None,
            timeout_ms: default_timeout_ms(),
            max_retries: default_retries(),
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn validate(&self) -> Result<(), ClassifyError> {
        let fail = |message: &str| ClassifyError::Descriptor {
            name: self.name.clone(),
            message: message.to_string(),
        };
        if self.name.trim().is_empty() {
            return Err(fail("name is empty"));
        }
        match self.kind {
            BackendKind::RemoteChat => {
                if self.endpoint.is_none() || self.model_id.is_none() {
                    return Err(fail("remote_chat requires endpoint and model_id"));
                }
            }
            BackendKind::DistanceThreshold => match self.metric.as_deref() {
                Some(similarity::LEVENSHTEIN | similarity::COSINE | similarity::JACCARD) => {}
                Some(other) => return Err(fail(&format!("unknown metric {other:?}"))),
                None => return Err(fail("distance_threshold requires a metric")),
            },
            BackendKind::Mock => {}
        }
        Ok(())
    }
}

/// Label plus whatever the backend said, kept for audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub label: ResolutionLabel,
    pub raw_response: Option<String>,
}

impl Classification {
    fn bare(label: ResolutionLabel) -> Self {
        Self {
            label,
            raw_response: None,
        }
    }
}

/// Classifies one case with one backend.
///
/// Distance backends read the case's precomputed score for their metric.
/// Chat backends need `transport`; it is retried `max_retries` times before
/// the failure is reported. A case with nothing to compare against is
/// Doubtful without contacting any backend.
pub fn classify_case(
    case: &MatchCase,
    backend: &BackendDescriptor,
    policy: &ThresholdPolicy,
    transport: Option<&dyn ChatTransport>,
) -> Result<Classification, BackendError> {
    let fail = |message: String| BackendError {
        case_id: case.case_id.clone(),
        backend: backend.name.clone(),
        message,
    };
    backend.validate().map_err(|e| fail(e.to_string()))?;
    if case.reference.is_empty() {
        return Ok(Classification::bare(ResolutionLabel::Doubtful));
    }
    match backend.kind {
        BackendKind::DistanceThreshold => {
            let metric = backend.metric.as_deref().unwrap_or_default();
            let score = case
                .scores
                .get(metric)
                .copied()
                .ok_or_else(|| fail(format!("no {metric} score on case")))?;
            Ok(Classification::bare(threshold_classify(score, policy)))
        }
        BackendKind::RemoteChat | BackendKind::Mock => {
            let transport = transport.ok_or_else(|| fail("no transport configured".into()))?;
            let prompt = build_zsc_prompt(
                &case.record.company_name,
                case.reference.official_name.as_deref(),
                &case.reference.previous_names,
            )
            .map_err(|e| fail(e.to_string()))?;
            let request = ChatRequest::new(backend.model_id.as_deref().unwrap_or(&backend.name), prompt);
            let mut last = None;
            for _ in 0..=backend.max_retries {
                match transport.complete(&case.case_id, &request) {
                    Ok(text) => {
                        let verdict = parse_zsc_response(&text);
                        return Ok(Classification {
                            label: verdict.resolution(),
                            raw_response: Some(verdict.raw_response),
                        });
                    }
                    Err(e) => {
                        let retryable = e.is_retryable();
                        last = Some(e);
                        if !retryable {
                            break;
                        }
                    }
                }
            }
            Err(fail(last.map(|e| e.to_string()).unwrap_or_default()))
        }
    }
}

/// Majority vote. A label wins only with a count strictly above each other
/// label's; a Doubtful win or any tie yields Doubtful.
pub fn ensemble_vote(labels: &[ResolutionLabel]) -> Result<ResolutionLabel, ClassifyError> {
    if labels.is_empty() {
        return Err(ClassifyError::EmptyEnsemble);
    }
    let count = |l: ResolutionLabel| labels.iter().filter(|&&x| x == l).count();
    let (a, r, d) = (
        count(ResolutionLabel::Accepted),
        count(ResolutionLabel::Rejected),
        count(ResolutionLabel::Doubtful),
    );
    Ok(if a > r && a > d {
        ResolutionLabel::Accepted
    } else if r > a && r > d {
        ResolutionLabel::Rejected
    } else {
        ResolutionLabel::Doubtful
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entity_model::{EntityRecord, ReferenceEntry};
    use proptest::prelude::*;
    use ResolutionLabel::*;

    fn case(id: &str, declared: &str, official: Option<&str>, previous: &[&str]) -> MatchCase {
        let record = EntityRecord {
            country: "PT".parse().unwrap(),
            company_name: declared.into(),
            entity_app: "E".into(),
            national_identifier: None,
            identifier_type: None,
            lei: None,
            sector: None,
            legal_form_code: None,
            legal_form_abbreviation: None,
        };
        let reference = ReferenceEntry::new(
            official.map(str::to_string),
            previous.iter().map(|s| s.to_string()),
            "test",
        );
        MatchCase::new(id.into(), record, reference)
    }

    #[test]
    fn threshold_examples() {
        let p = ThresholdPolicy::new(0.95, 0.80).unwrap();
        assert_eq!(threshold_classify(1.0, &p), Accepted);
        assert_eq!(threshold_classify(0.0, &p), Rejected);
        assert_eq!(threshold_classify(0.90, &p), Doubtful);
        assert_eq!(threshold_classify(0.80, &p), Doubtful);
        assert!(ThresholdPolicy::new(0.5, 0.6).is_err());
        assert!(ThresholdPolicy::new(1.1, 0.6).is_err());
        assert!(ThresholdPolicy::new(0.5, -0.1).is_err());
    }

    #[test]
    fn prompt_embeds_names() {
        let p = build_zsc_prompt("SOLARSHOP, UNIPESSOAL LDA", Some("SOLARSHOP, UNIPESSOAL, LDA"), &[]).unwrap();
        assert!(p.contains("Declared name: SOLARSHOP, UNIPESSOAL LDA\n"));
        assert!(p.contains("Official name: SOLARSHOP, UNIPESSOAL, LDA\n"));
        assert!(p.contains("Equal or Different"));
        assert_eq!(p, build_zsc_prompt("SOLARSHOP, UNIPESSOAL LDA", Some("SOLARSHOP, UNIPESSOAL, LDA"), &[]).unwrap());

        assert!(build_zsc_prompt("ACME", Some("ACME"), &[]).is_ok());

        let p = build_zsc_prompt("X", None, &["OLD X LDA".to_string()]).unwrap();
        assert!(p.contains("Previous official name: OLD X LDA"));
        assert!(p.contains("not found"));

        assert_eq!(build_zsc_prompt("X", None, &[]), Err(ClassifyError::MissingReference));
    }

    #[test]
    fn response_parsing() {
        assert_eq!(parse_zsc_response("Equal").label, ZscLabel::Equal);
        assert_eq!(parse_zsc_response("different.").label, ZscLabel::Different);
        assert_eq!(parse_zsc_response("  EQUAL\n").label, ZscLabel::Equal);
        let v = parse_zsc_response("They might be the same");
        assert_eq!(v.label, ZscLabel::Unknown);
        assert_eq!(v.raw_response, "They might be the same");
        assert_eq!(parse_zsc_response("Equal or Different").label, ZscLabel::Unknown);
        assert_eq!(parse_zsc_response("").label, ZscLabel::Unknown);
        assert_eq!(parse_zsc_response("unequal").label, ZscLabel::Unknown);
    }

    #[test]
    fn descriptor_validation() {
        assert!(BackendDescriptor::distance("cosine").validate().is_ok());
        assert!(BackendDescriptor::distance("hamming").validate().is_err());
        let mut remote = BackendDescriptor::remote("qwen", "http://127.0.0.1:1/v1", "qwen2.5");
        assert!(remote.validate().is_ok());
        remote.model_id = None;
        assert!(remote.validate().is_err());
    }

    #[test]
    fn mock_backend_cases() {
        let mock = MockTransport::new(MockScript::from_pairs([("altrad", "Different"), ("solar", "Equal")]));
        let backend = BackendDescriptor::mock("mock");
        let policy = ThresholdPolicy::default();

        let altrad = case(
            "altrad",
            "ALTRAD PREFAL, UNIPESSOAL LDA",
            Some("LTRAD SERVICES INDUSTRIE, UNIPESSOAL LDA"),
            &[],
        );
        let c = classify_case(&altrad, &backend, &policy, Some(&mock)).unwrap();
        assert_eq!(c.label, Rejected);
        assert_eq!(c.raw_response.as_deref(), Some("Different"));

        let simbolo = case("simbolo", "SIMBOLO II - INFORMATICA DE GESTAO LDA", None, &[]);
        assert_eq!(classify_case(&simbolo, &backend, &policy, Some(&mock)).unwrap().label, Doubtful);
        assert_eq!(mock.calls(), 1);

        let mut same = case("same", "ACME LDA", Some("ACME LDA"), &[]);
        same.scores.insert("levenshtein".into(), 1.0);
        let dist = BackendDescriptor::distance("levenshtein");
        assert_eq!(classify_case(&same, &dist, &policy, None).unwrap().label, Accepted);

        let unscripted = case("nobody", "A", Some("B"), &[]);
        let err = classify_case(&unscripted, &backend, &policy, Some(&mock)).unwrap_err();
        assert_eq!(err.case_id, CaseId::from("nobody"));
    }

    #[test]
    fn transport_failures_are_retried() {
        struct Flaky(std::sync::atomic::AtomicUsize);
        impl ChatTransport for Flaky {
            fn complete(&self, _: &CaseId, _: &ChatRequest) -> Result<String, TransportError> {
                let n = self.0.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if n < 2 {
                    Err(TransportError::Http("connection reset".into()))
                } else {
                    Ok("Equal".into())
                }
            }
        }
        let c = case("c", "A", Some("A"), &[]);
        let mut backend = BackendDescriptor::remote("r", "http://x", "m");
        let flaky = Flaky(0.into());
        assert_eq!(
            classify_case(&c, &backend, &ThresholdPolicy::default(), Some(&flaky)).unwrap().label,
            Accepted
        );
        backend.max_retries = 0;
        let flaky = Flaky(0.into());
        let err = classify_case(&c, &backend, &ThresholdPolicy::default(), Some(&flaky)).unwrap_err();
        assert!(err.message.contains("connection reset"));
    }

    #[test]
    fn ensemble_examples() {
        assert_eq!(ensemble_vote(&[Accepted, Accepted, Rejected]).unwrap(), Accepted);
        assert_eq!(ensemble_vote(&[Accepted, Rejected]).unwrap(), Doubtful);
        assert_eq!(ensemble_vote(&[Doubtful]).unwrap(), Doubtful);
        assert_eq!(ensemble_vote(&[Rejected, Doubtful, Doubtful]).unwrap(), Doubtful);
        assert_eq!(ensemble_vote(&[Rejected]).unwrap(), Rejected);
        assert_eq!(ensemble_vote(&[]), Err(ClassifyError::EmptyEnsemble));
    }

    proptest! {
        #[test]
        fn threshold_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0, hi in 0.0f64..=1.0, lo_frac in 0.0f64..=1.0) {
            let policy = ThresholdPolicy::new(hi, hi * lo_frac).unwrap();
            let rank = |l: ResolutionLabel| match l { Rejected => 0, Doubtful => 1, Accepted => 2 };
            let (lo_s, hi_s) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(rank(threshold_classify(hi_s, &policy)) >= rank(threshold_classify(lo_s, &policy)));
        }

        #[test]
        fn parser_is_total(s in "\\PC{0,40}") {
            let v = parse_zsc_response(&s);
            prop_assert_eq!(v.raw_response, s);
        }

        #[test]
        fn no_reference_never_accepted(name in "[A-Z ]{1,20}", respond_equal in any::<bool>()) {
            let mock = MockTransport::new(MockScript::default())
                .with_default(if respond_equal { "Equal" } else { "Different" });
            let c = case("x", &name, None, &[]);
            for backend in [BackendDescriptor::mock("m"), BackendDescriptor::distance("cosine")] {
                let out = classify_case(&c, &backend, &ThresholdPolicy::default(), Some(&mock)).unwrap();
                prop_assert_ne!(out.label, Accepted);
            }
        }
    }
}
