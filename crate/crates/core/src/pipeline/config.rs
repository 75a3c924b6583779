//! Run configuration (TOML). Relative paths resolve against the directory
//! holding the config file.
//!
//! ```toml
//! input = "cases.csv"
//! out_dir = "out"
//! registry = "registry"
//! registry_seed = "registry_seed.json"  # optional, loaded into an empty registry
//! seed = 42
//! concurrency = 4
//! decision = ["mock"]                  # backends whose vote resolves a case
//! missing_identifier = "skip"          # or "name_search"
//! abbreviation_precedence = "name_suffix"  # or "abbreviation_column"
//! abbreviations = "abbreviations.txt"  # optional, extends the builtin pairs
//! legal_forms = "legal_forms.txt"      # optional, replaces the builtin registry
//! legal_form_codes = "codes.txt"       # optional, replaces the builtin code map
//!
//! [normalization]
//! fold_diacritics = true
//! strip_punctuation = true
//! collapse_whitespace = true
//! uppercase = true
//! builtin_abbreviations = true
//!
//! [vectorizer]
//! mode = "char_ngram"
//! n = 2
//!
//! [thresholds.levenshtein]
//! accept_at = 0.95
//! reject_below = 0.80
//!
//! [reference]
//! kind = "fixture"                     # fixture | remote | none
//! path = "reference.json"
//!
//! [[backends]]
//! name = "mock"
//! kind = "mock"
//! script = "mock_script.json"
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::reference::{FixtureClient, MissingIdentifier, NullClient, ReferenceSourceClient, RemoteClient};
use crate::classify::{
    BackendDescriptor, BackendKind, ChatTransport, HttpChatTransport, MockScript, MockTransport, ThresholdPolicy,
};
use crate::legal_form::{LegalFormCodeMap, LegalFormRegistry};
use crate::similarity::{self, VectorizerConfig};
use crate::text_normalize::{AbbreviationDictionary, NormalizationProfile};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{what} {path} does not exist")]
    MissingFile { what: String, path: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbbreviationPrecedence {
    /// The designator found at the end of the declared name wins; the
    /// Abbreviation column is used only when the name has none.
    #[default]
    NameSuffix,
    AbbreviationColumn,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizationConfig {
    pub fold_diacritics: bool,
    pub strip_punctuation: bool,
    pub collapse_whitespace: bool,
    pub uppercase: bool,
    pub builtin_abbreviations: bool,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        Self {
            fold_diacritics: true,
            strip_punctuation: true,
            collapse_whitespace: true,
            uppercase: true,
            builtin_abbreviations: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    Fixture,
    Remote,
    #[default]
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReferenceConfig {
    #[serde(default)]
    pub kind: ReferenceKind,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_reference_timeout")]
    pub timeout_ms: u64,
}

fn default_reference_timeout() -> u64 {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: PathBuf,
    pub out_dir: PathBuf,
    pub registry: PathBuf,
    #[serde(default)]
    pub registry_seed: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default)]
    pub decision: Vec<String>,
    #[serde(default)]
    pub missing_identifier: MissingIdentifier,
    #[serde(default)]
    pub abbreviation_precedence: AbbreviationPrecedence,
    #[serde(default)]
    pub abbreviations: Option<PathBuf>,
    #[serde(default)]
    pub legal_forms: Option<PathBuf>,
    #[serde(default)]
    pub legal_form_codes: Option<PathBuf>,
    #[serde(default)]
    pub normalization: NormalizationConfig,
    #[serde(default)]
    pub vectorizer: VectorizerConfig,
    #[serde(default)]
    pub thresholds: BTreeMap<String, ThresholdPolicy>,
    #[serde(default)]
    pub reference: ReferenceConfig,
    #[serde(default)]
    pub backends: Vec<BackendDescriptor>,
}

fn default_concurrency() -> usize {
    4
}

impl RunConfig {
    /// Minimal config: distance backends only, Levenshtein decides.
    pub fn new(input: impl Into<PathBuf>, out_dir: impl Into<PathBuf>, registry: impl Into<PathBuf>) -> Self {
        Self {
            input: input.into(),
            out_dir: out_dir.into(),
            registry: registry.into(),
            registry_seed: None,
            seed: 0,
            concurrency: default_concurrency(),
            decision: Vec::new(),
            missing_identifier: MissingIdentifier::default(),
            abbreviation_precedence: AbbreviationPrecedence::default(),
            abbreviations: None,
            legal_forms: None,
            legal_form_codes: None,
            normalization: NormalizationConfig::default(),
            vectorizer: VectorizerConfig::default(),
            thresholds: BTreeMap::new(),
            reference: ReferenceConfig::default(),
            backends: Vec::new(),
        }
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.resolve_paths(base_dir);
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.input);
        fix(&mut self.out_dir);
        fix(&mut self.registry);
        for p in [&mut self.registry_seed, &mut self.abbreviations, &mut self.legal_forms, &mut self.legal_form_codes, &mut self.reference.path]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        for b in &mut self.backends {
            if let Some(s) = &b.script {
                let p = Path::new(s);
                if p.is_relative() {
                    b.script = Some(base.join(p).display().to_string());
                }
            }
        }
    }

    /// Configured backends, or the three distance matchers when none are.
    pub fn effective_backends(&self) -> Vec<BackendDescriptor> {
        if self.backends.is_empty() {
            [similarity::LEVENSHTEIN, similarity::COSINE, similarity::JACCARD]
                .into_iter()
                .map(BackendDescriptor::distance)
                .collect()
        } else {
            self.backends.clone()
        }
    }

    pub fn effective_decision(&self) -> Vec<String> {
        if self.decision.is_empty() {
            vec![self.effective_backends()[0].name.clone()]
        } else {
            self.decision.clone()
        }
    }

    /// Makes `names` the deciding backends. A name that is not configured
    /// but is a metric adds that distance backend.
    pub fn select_backends(&mut self, names: &[String]) {
        if names.is_empty() {
            return;
        }
        if self.backends.is_empty() {
            self.backends = self.effective_backends();
        }
        for n in names {
            let known_metric = [similarity::LEVENSHTEIN, similarity::COSINE, similarity::JACCARD].contains(&n.as_str());
            if known_metric && !self.backends.iter().any(|b| &b.name == n) {
                self.backends.push(BackendDescriptor::distance(n));
            }
        }
        self.decision = names.to_vec();
    }

    pub fn policy_for(&self, metric: &str) -> ThresholdPolicy {
        self.thresholds.get(metric).copied().unwrap_or_default()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let exists = |what: &str, p: &Path| {
            if p.exists() {
                Ok(())
            } else {
                Err(ConfigError::MissingFile {
                    what: what.into(),
                    path: p.display().to_string(),
                })
            }
        };
        exists("input", &self.input)?;
        for (what, p) in [
            ("registry seed", &self.registry_seed),
            ("abbreviation dictionary", &self.abbreviations),
            ("legal-form registry", &self.legal_forms),
            ("legal-form code map", &self.legal_form_codes),
        ] {
            if let Some(p) = p {
                exists(what, p)?;
            }
        }
        if self.concurrency == 0 {
            return Err(ConfigError::Invalid("concurrency must be at least 1".into()));
        }
        match self.reference.kind {
            ReferenceKind::Fixture => match &self.reference.path {
                Some(p) => exists("reference fixture", p)?,
                None => return Err(ConfigError::Invalid("reference.kind = fixture needs reference.path".into())),
            },
            ReferenceKind::Remote if self.reference.endpoint.is_none() => {
                return Err(ConfigError::Invalid("reference.kind = remote needs reference.endpoint".into()))
            }
            _ => {}
        }
        let backends = self.effective_backends();
        for b in &backends {
            b.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
            if let Some(s) = &b.script {
                exists("mock script", Path::new(s))?;
            }
        }
        let mut names: Vec<&str> = backends.iter().map(|b| b.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(ConfigError::Invalid("backend names must be unique".into()));
        }
        for d in self.effective_decision() {
            if !names.contains(&d.as_str()) {
                return Err(ConfigError::Invalid(format!("decision backend {d:?} is not configured")));
            }
        }
        Ok(())
    }

    pub fn profile(&self) -> Result<NormalizationProfile, ConfigError> {
        let n = &self.normalization;
        let mut dict = if n.builtin_abbreviations {
            AbbreviationDictionary::builtin()
        } else {
            AbbreviationDictionary::default()
        };
        if let Some(p) = &self.abbreviations {
            let extra = AbbreviationDictionary::load(p).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            dict.extend(&extra).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(NormalizationProfile {
            fold_diacritics: n.fold_diacritics,
            strip_punctuation: n.strip_punctuation,
            collapse_whitespace: n.collapse_whitespace,
            uppercase: n.uppercase,
            abbreviation_dictionary: dict,
        })
    }

    pub fn registry_seed_file(&self) -> Result<Option<super::registry::SeedFile>, ConfigError> {
        let Some(path) = &self.registry_seed else { return Ok(None) };
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))
    }

    pub fn legal_form_tables(&self) -> Result<(LegalFormRegistry, LegalFormCodeMap), ConfigError> {
        let invalid = |e: crate::legal_form::LegalFormError| ConfigError::Invalid(e.to_string());
        let registry = match &self.legal_forms {
            Some(p) => LegalFormRegistry::load(p).map_err(invalid)?,
            None => LegalFormRegistry::builtin(),
        };
        let codes = match &self.legal_form_codes {
            Some(p) => LegalFormCodeMap::load(p, &registry).map_err(invalid)?,
            None => LegalFormCodeMap::builtin(&registry),
        };
        Ok((registry, codes))
    }

    pub fn reference_client(&self) -> Result<Box<dyn ReferenceSourceClient>, ConfigError> {
        let r = &self.reference;
        Ok(match r.kind {
            ReferenceKind::None => Box::new(NullClient),
            ReferenceKind::Fixture => {
                let path = r.path.as_ref().ok_or_else(|| ConfigError::Invalid("reference.path missing".into()))?;
                Box::new(FixtureClient::load(path, self.missing_identifier).map_err(|e| ConfigError::Invalid(e.to_string()))?)
            }
            ReferenceKind::Remote => {
                let endpoint = r
                    .endpoint
                    .as_deref()
                    .ok_or_else(|| ConfigError::Invalid("reference.endpoint missing".into()))?;
                Box::new(
                    RemoteClient::new(endpoint, std::time::Duration::from_millis(r.timeout_ms), self.missing_identifier)
                        .map_err(|e| ConfigError::Invalid(e.to_string()))?,
                )
            }
        })
    }

    /// Builds the transport for every chat backend, keyed by backend name.
    pub fn transports(&self) -> Result<BTreeMap<String, Arc<dyn ChatTransport>>, ConfigError> {
        let mut out: BTreeMap<String, Arc<dyn ChatTransport>> = BTreeMap::new();
        for b in self.effective_backends() {
            match b.kind {
                BackendKind::DistanceThreshold => {}
                BackendKind::Mock => {
                    let script = match &b.script {
                        Some(p) => MockScript::load(p).map_err(ConfigError::Invalid)?,
                        None => MockScript::default(),
                    };
                    out.insert(b.name.clone(), Arc::new(MockTransport::new(script)));
                }
                BackendKind::RemoteChat => {
                    let endpoint = b.endpoint.as_deref().unwrap_or_default();
                    let t = HttpChatTransport::new(endpoint, b.timeout()).map_err(|e| ConfigError::Invalid(e.to_string()))?;
                    out.insert(b.name.clone(), Arc::new(t));
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves_paths() {
        let text = r#"
            input = "cases.csv"
            out_dir = "/abs/out"
            registry = "reg"
            seed = 9
            decision = ["mock", "cosine"]

            [vectorizer]
            mode = "token"

            [thresholds.cosine]
            accept_at = 0.9
            reject_below = 0.5

            [[backends]]
            name = "mock"
            kind = "mock"
            script = "script.json"

            [[backends]]
            name = "cosine"
            kind = "distance_threshold"
            metric = "cosine"
        "#;
        let cfg = RunConfig::from_toml(text, Path::new("/base")).unwrap();
        assert_eq!(cfg.input, PathBuf::from("/base/cases.csv"));
        assert_eq!(cfg.out_dir, PathBuf::from("/abs/out"));
        assert_eq!(cfg.backends[0].script.as_deref(), Some("/base/script.json"));
        assert_eq!(cfg.policy_for("cosine").accept_at(), 0.9);
        assert_eq!(cfg.policy_for("jaccard"), ThresholdPolicy::default());
        assert_eq!(cfg.concurrency, 4);
        assert_eq!(cfg.vectorizer.mode, crate::similarity::VectorMode::Token);
    }

    #[test]
    fn invalid_thresholds_rejected_at_parse() {
        let text = "input='a'\nout_dir='b'\nregistry='c'\n[thresholds.cosine]\naccept_at=0.5\nreject_below=0.9\n";
        assert!(RunConfig::from_toml(text, Path::new(".")).is_err());
    }

    #[test]
    fn validation() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.csv");
        let mut cfg = RunConfig::new(&input, dir.path().join("out"), dir.path().join("reg"));
        assert!(matches!(cfg.validate(), Err(ConfigError::MissingFile { .. })));
        std::fs::write(&input, "").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.effective_decision(), vec!["levenshtein"]);
        cfg.concurrency = 0;
        assert!(cfg.validate().is_err());
        cfg.concurrency = 1;
        cfg.decision = vec!["nope".into()];
        assert!(cfg.validate().is_err());
        cfg.decision.clear();
        cfg.reference.kind = ReferenceKind::Fixture;
        assert!(cfg.validate().is_err());
    }
}
