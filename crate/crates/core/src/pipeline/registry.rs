//! Local registry of already-identified entities and their assigned codes.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::journal::{Journal, JournalError, Replay};
use crate::entity_model::EntityRecord;
use crate::text_normalize::{normalize_name, NormalizationProfile};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub code: String,
    pub country: String,
    pub national_identifier: Option<String>,
    /// Normalized names known for the entity.
    pub names: Vec<String>,
    #[serde(default)]
    pub superseded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum RegistryEvent {
    Issued(RegistryEntry),
    Superseded { code: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryState {
    entries: BTreeMap<String, RegistryEntry>,
    next_serial: u64,
}

impl Replay for RegistryState {
    type Event = RegistryEvent;

    fn apply(&mut self, event: &RegistryEvent) -> Result<(), String> {
        match event {
            RegistryEvent::Issued(entry) => {
                if self.entries.contains_key(&entry.code) {
                    return Err(format!("code {} issued twice", entry.code));
                }
                if let Some(serial) = entry.code.get(2..).and_then(|s| s.parse::<u64>().ok()) {
                    self.next_serial = self.next_serial.max(serial + 1);
                }
                self.entries.insert(entry.code.clone(), entry.clone());
            }
            RegistryEvent::Superseded { code } => {
                let entry = self.entries.get_mut(code).ok_or_else(|| format!("unknown code {code}"))?;
                entry.superseded = true;
            }
        }
        Ok(())
    }
}

/// Entity known before any run, as listed in a registry seed file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub code: String,
    pub country: String,
    #[serde(default)]
    pub national_identifier: Option<String>,
    /// Raw names; normalized on import.
    pub names: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedFile {
    pub entries: Vec<SeedEntry>,
}

/// Key used for name lookups: country plus the fully normalized name.
pub fn name_key(country: &str, name: &str) -> String {
    format!("{country}:{}", normalize_name(name, &NormalizationProfile::default()))
}

/// Registry store with identifier and name indexes over active codes.
///
/// Mutations go through one owner (`&mut self`); every mutation is journaled
/// before it is applied.
#[derive(Debug)]
pub struct RegistryStore {
    state: RegistryState,
    by_identifier: HashMap<(String, String), String>,
    by_name: HashMap<String, String>,
    journal: Option<Journal<RegistryState>>,
}

impl RegistryStore {
    pub fn in_memory() -> Self {
        Self::from_state(RegistryState::default(), None)
    }

    /// Opens (or creates) the store kept in `dir`.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, JournalError> {
        let journal = Journal::new(dir, "registry");
        let state = journal.load()?;
        Ok(Self::from_state(state, Some(journal)))
    }

    fn from_state(state: RegistryState, journal: Option<Journal<RegistryState>>) -> Self {
        let mut store = Self {
            state,
            by_identifier: HashMap::new(),
            by_name: HashMap::new(),
            journal,
        };
        store.reindex();
        store
    }

    fn reindex(&mut self) {
        self.by_identifier.clear();
        self.by_name.clear();
        for e in self.state.entries.values().filter(|e| !e.superseded) {
            if let Some(id) = &e.national_identifier {
                self.by_identifier.insert((e.country.clone(), id.clone()), e.code.clone());
            }
            for n in &e.names {
                self.by_name.insert(format!("{}:{n}", e.country), e.code.clone());
            }
        }
    }

    fn commit(&mut self, event: RegistryEvent) -> Result<(), JournalError> {
        if let Some(j) = &self.journal {
            j.append(&event)?;
        }
        self.state.apply(&event).expect("event validated before commit");
        self.reindex();
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.state.entries.is_empty()
    }

    /// Imports seed entries into an empty store; a non-empty store is left
    /// alone so reruns keep their history.
    pub fn seed(&mut self, file: &SeedFile) -> Result<usize, JournalError> {
        if !self.is_empty() {
            return Ok(0);
        }
        let mut next = self.state.clone();
        let events: Vec<RegistryEvent> = file
            .entries
            .iter()
            .map(|e| {
                let mut names: Vec<String> = e
                    .names
                    .iter()
                    .map(|n| normalize_name(n, &NormalizationProfile::default()))
                    .filter(|n| !n.is_empty())
                    .collect();
                names.dedup();
                RegistryEvent::Issued(RegistryEntry {
                    code: e.code.clone(),
                    country: e.country.clone(),
                    national_identifier: e.national_identifier.clone(),
                    names,
                    superseded: false,
                })
            })
            .collect();
        for event in &events {
            next.apply(event).map_err(|message| JournalError::Replay {
                path: "registry seed".into(),
                line: 0,
                message,
            })?;
        }
        for event in events {
            self.commit(event)?;
        }
        Ok(file.entries.len())
    }

    pub fn entry(&self, code: &str) -> Option<&RegistryEntry> {
        self.state.entries.get(code)
    }

    pub fn entries(&self) -> impl Iterator<Item = &RegistryEntry> {
        self.state.entries.values()
    }

    pub fn by_identifier(&self, country: &str, identifier: &str) -> Option<&str> {
        self.by_identifier
            .get(&(country.to_string(), identifier.to_string()))
            .map(String::as_str)
    }

    pub fn by_name(&self, country: &str, name: &str) -> Option<&str> {
        self.by_name.get(&name_key(country, name)).map(String::as_str)
    }

    /// Issues a new code (`PT0000117` style) for an entity.
    pub fn issue(&mut self, record: &EntityRecord, official_name: Option<&str>) -> Result<String, JournalError> {
        let country = record.country.as_str();
        let code = format!("{country}{:07}", self.state.next_serial);
        let mut names: Vec<String> = std::iter::once(record.company_name.as_str())
            .chain(official_name)
            .map(|n| normalize_name(n, &NormalizationProfile::default()))
            .filter(|n| !n.is_empty())
            .collect();
        names.dedup();
        self.commit(RegistryEvent::Issued(RegistryEntry {
            code: code.clone(),
            country: country.to_string(),
            national_identifier: record.national_identifier.clone(),
            names,
            superseded: false,
        }))?;
        Ok(code)
    }

    /// Active code for the entity, or a freshly issued one.
    pub fn code_for(&mut self, record: &EntityRecord, official_name: Option<&str>) -> Result<String, JournalError> {
        let existing = registry_lookup(record, self)
            .or_else(|| official_name.and_then(|n| self.by_name(record.country.as_str(), n)))
            .map(str::to_string);
        match existing {
            Some(code) => Ok(code),
            None => self.issue(record, official_name),
        }
    }

    /// Marks a code as superseded. The entry stays in the store.
    pub fn supersede(&mut self, code: &str) -> Result<(), JournalError> {
        match self.state.entries.get(code) {
            Some(e) if !e.superseded => self.commit(RegistryEvent::Superseded { code: code.to_string() }),
            _ => Ok(()),
        }
    }

    /// Writes a snapshot and truncates the log.
    pub fn compact(&self) -> Result<(), JournalError> {
        match &self.journal {
            Some(j) => j.compact(&self.state),
            None => Ok(()),
        }
    }
}

/// Identifier match first, then normalized declared-name match.
pub fn registry_lookup<'a>(record: &EntityRecord, store: &'a RegistryStore) -> Option<&'a str> {
    let country = record.country.as_str();
    record
        .national_identifier
        .as_deref()
        .and_then(|id| store.by_identifier(country, id))
        .or_else(|| store.by_name(country, &record.company_name))
}
