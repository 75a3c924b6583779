//! Reference-source clients: where official names come from.
//!
//! Fixture file (JSON):
//!
//! ```json
//! {"entries": [{"country": "PT", "national_identifier": "501234567",
//!               "official_name": "SOLARSHOP, UNIPESSOAL, LDA",
//!               "previous_names": [], "search_names": []}]}
//! ```
//!
//! The remote client issues `GET <endpoint>?country=..&identifier=..&name=..`
//! and expects `{"official_name": ..., "previous_names": [...]}`; a 404 means
//! the registry has no record.

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entity_model::{CountryCode, ReferenceEntry};
use crate::text_normalize::{normalize_name, NormalizationProfile};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnrichError {
    #[error("reference source unavailable: {0}")]
    Transport(String),
    #[error("reference source returned malformed data: {0}")]
    Malformed(String),
}

/// What to do when a record carries no national identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingIdentifier {
    #[default]
    Skip,
    NameSearch,
}

pub trait ReferenceSourceClient: Send + Sync {
    fn fetch(
        &self,
        country: &CountryCode,
        national_identifier: Option<&str>,
        declared_name: &str,
    ) -> Result<ReferenceEntry, EnrichError>;
}

/// Always answers "no record".
#[derive(Debug, Default)]
pub struct NullClient;

impl ReferenceSourceClient for NullClient {
    fn fetch(&self, _: &CountryCode, _: Option<&str>, _: &str) -> Result<ReferenceEntry, EnrichError> {
        Ok(ReferenceEntry::empty("null"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub country: CountryCode,
    #[serde(default)]
    pub national_identifier: Option<String>,
    #[serde(default)]
    pub official_name: Option<String>,
    #[serde(default)]
    pub previous_names: Vec<String>,
    /// Extra names the entry can be found by when searching by name.
    #[serde(default)]
    pub search_names: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FixtureFile {
    pub entries: Vec<FixtureEntry>,
}

/// Deterministic client backed by a fixture file.
#[derive(Debug)]
pub struct FixtureClient {
    source_id: String,
    entries: Vec<FixtureEntry>,
    by_identifier: HashMap<(String, String), usize>,
    by_name: HashMap<(String, String), usize>,
    missing_identifier: MissingIdentifier,
}

fn name_key(name: &str) -> String {
    normalize_name(name, &NormalizationProfile::default())
}

impl FixtureClient {
    pub fn new(file: FixtureFile, source_id: &str, missing_identifier: MissingIdentifier) -> Self {
        let mut by_identifier = HashMap::new();
        let mut by_name = HashMap::new();
        for (i, e) in file.entries.iter().enumerate() {
            let country = e.country.as_str().to_string();
            if let Some(id) = &e.national_identifier {
                by_identifier.entry((country.clone(), id.clone())).or_insert(i);
            }
            for n in e.official_name.iter().chain(&e.previous_names).chain(&e.search_names) {
                by_name.entry((country.clone(), name_key(n))).or_insert(i);
            }
        }
        Self {
            source_id: source_id.to_string(),
            entries: file.entries,
            by_identifier,
            by_name,
            missing_identifier,
        }
    }

    pub fn load(path: impl AsRef<Path>, missing_identifier: MissingIdentifier) -> Result<Self, EnrichError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| EnrichError::Transport(format!("{}: {e}", path.display())))?;
        let file: FixtureFile =
            serde_json::from_str(&text).map_err(|e| EnrichError::Malformed(format!("{}: {e}", path.display())))?;
        Ok(Self::new(file, &format!("fixture:{}", path.display()), missing_identifier))
    }
}

impl ReferenceSourceClient for FixtureClient {
    fn fetch(
        &self,
        country: &CountryCode,
        national_identifier: Option<&str>,
        declared_name: &str,
    ) -> Result<ReferenceEntry, EnrichError> {
        let country = country.as_str().to_string();
        let hit = match national_identifier {
            Some(id) => self.by_identifier.get(&(country, id.to_string())),
            None => match self.missing_identifier {
                MissingIdentifier::Skip => None,
                MissingIdentifier::NameSearch => self.by_name.get(&(country, name_key(declared_name))),
            },
        };
        Ok(match hit {
            Some(&i) => {
                let e = &self.entries[i];
                ReferenceEntry::new(e.official_name.clone(), e.previous_names.clone(), self.source_id.clone())
            }
            None => ReferenceEntry::empty(self.source_id.clone()),
        })
    }
}

#[derive(Debug, Deserialize)]
struct RemoteBody {
    #[serde(default)]
    official_name: Option<String>,
    #[serde(default)]
    previous_names: Vec<String>,
}

/// HTTP client for a registry lookup service.
pub struct RemoteClient {
    endpoint: String,
    client: reqwest::blocking::Client,
    missing_identifier: MissingIdentifier,
}

impl RemoteClient {
    pub fn new(endpoint: &str, timeout: Duration, missing_identifier: MissingIdentifier) -> Result<Self, EnrichError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EnrichError::Transport(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.to_string(),
            client,
            missing_identifier,
        })
    }
}

impl ReferenceSourceClient for RemoteClient {
    fn fetch(
        &self,
        country: &CountryCode,
        national_identifier: Option<&str>,
        declared_name: &str,
    ) -> Result<ReferenceEntry, EnrichError> {
        if national_identifier.is_none() && self.missing_identifier == MissingIdentifier::Skip {
            return Ok(ReferenceEntry::empty(self.endpoint.clone()));
        }
        let mut query = vec![("country", country.as_str()), ("name", declared_name)];
        if let Some(id) = national_identifier {
            query.push(("identifier", id));
        }
        let response = self
            .client
            .get(&self.endpoint)
            .query(&query)
            .send()
            .map_err(|e| EnrichError::Transport(e.to_string()))?;
        if response.status() == reqwest::StatusCode::NOT_FOUND {
            return Ok(ReferenceEntry::empty(self.endpoint.clone()));
        }
        if !response.status().is_success() {
            return Err(EnrichError::Transport(format!("status {}", response.status())));
        }
        let body: RemoteBody = response.json().map_err(|e| EnrichError::Malformed(e.to_string()))?;
        Ok(ReferenceEntry::new(body.official_name, body.previous_names, self.endpoint.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(missing: MissingIdentifier) -> FixtureClient {
        let file: FixtureFile = serde_json::from_str(
            r#"{"entries": [
                {"country": "PT", "national_identifier": "501", "official_name": "SOLARSHOP, UNIPESSOAL, LDA"},
                {"country": "PT", "national_identifier": "502", "official_name": "NOVO NOME LDA",
                 "previous_names": ["NOME ANTIGO LDA"]},
                {"country": "PT", "official_name": "SIMBOLO II INFORMATICA DE GESTAO LDA"}
            ]}"#,
        )
        .unwrap();
        FixtureClient::new(file, "fx", missing)
    }

    #[test]
    fn fixture_lookups() {
        let c = fixture(MissingIdentifier::Skip);
        let pt: CountryCode = "PT".parse().unwrap();
        let r = c.fetch(&pt, Some("501"), "whatever").unwrap();
        assert_eq!(r.official_name.as_deref(), Some("SOLARSHOP, UNIPESSOAL, LDA"));
        assert_eq!(r.source_id, "fx");
        assert!(c.fetch(&pt, Some("999"), "x").unwrap().official_name.is_none());
        assert_eq!(c.fetch(&pt, Some("502"), "x").unwrap().previous_names, vec!["NOME ANTIGO LDA"]);
        // no identifier: skipped by default
        assert!(c.fetch(&pt, None, "SIMBOLO II - INFORMATICA DE GESTAO LDA").unwrap().is_empty());
    }

    #[test]
    fn name_search_fallback() {
        let c = fixture(MissingIdentifier::NameSearch);
        let pt: CountryCode = "PT".parse().unwrap();
        let r = c.fetch(&pt, None, "Simbolo II - Informatica de Gestao, Lda").unwrap();
        assert!(r.official_name.is_some());
        assert!(c.fetch(&pt, None, "nobody").unwrap().is_empty());
    }

    #[test]
    fn remote_unreachable_is_transport_error() {
        let c = RemoteClient::new("http://127.0.0.1:9/lookup", Duration::from_millis(300), MissingIdentifier::Skip).unwrap();
        let pt: CountryCode = "PT".parse().unwrap();
        assert!(matches!(c.fetch(&pt, Some("1"), "x"), Err(EnrichError::Transport(_))));
        assert!(c.fetch(&pt, None, "x").unwrap().is_empty());
    }
}
