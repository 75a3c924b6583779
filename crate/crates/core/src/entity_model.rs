//! Dataset schema: declared filings, registry references and the three-way
//! resolution vocabulary.
//!
//! The on-disk dataset is delimited UTF-8 text with a fixed header (see
//! [`DATASET_COLUMNS`]); comma or semicolon separators are detected from the
//! header line.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::legal_form::LegalFormCode;

/// Header columns of the input dataset, in order.
pub const DATASET_COLUMNS: [&str; 12] = [
    "Country",
    "CompanyName",
    "Entity",
    "NationalIdentifier",
    "IdentifierType",
    "LEI",
    "Sector",
    "LegalForm",
    "Abbreviation",
    "OfficialName",
    "PreviousNames",
    "Result",
];

/// Optional extra column carrying an explicit case identifier.
pub const CASE_ID_COLUMN: &str = "CaseId";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid country code {0:?}: expected two uppercase ASCII letters")]
    Country(String),
    #[error("company name is empty")]
    EmptyName,
    #[error("LEI {0:?} must be exactly 20 characters")]
    Lei(String),
    #[error("unknown resolution label {0:?}; allowed: Accepted, Rejected, Doubtful (or Aceptado, Rechazado, Duda)")]
    Label(String),
    #[error("unknown reject reason {0:?}")]
    Reason(String),
    #[error("score for {matcher} is {score}, outside [0,1]")]
    Score { matcher: String, score: f64 },
    #[error("resolution {resolution} is inconsistent with {count} reject reason(s)")]
    ReasonConsistency { resolution: ResolutionLabel, count: usize },
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset is not valid UTF-8: {0}")]
    Encoding(String),
    #[error("header mismatch: expected columns {expected:?}, found {found:?}")]
    Header { expected: Vec<String>, found: Vec<String> },
    #[error("row {row}, column {column}: {message}")]
    Row { row: usize, column: String, message: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// ISO-3166 alpha-2 country code.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CountryCode(String);

impl CountryCode {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for CountryCode {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() == 2 && s.bytes().all(|b| b.is_ascii_uppercase()) {
            Ok(Self(s.to_string()))
        } else {
            Err(ModelError::Country(s.to_string()))
        }
    }
}

impl TryFrom<String> for CountryCode {
    type Error = ModelError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<CountryCode> for String {
    fn from(c: CountryCode) -> String {
        c.0
    }
}

impl fmt::Display for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One declared filing from a reporting institution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub country: CountryCode,
    pub company_name: String,
    pub entity_app: String,
    pub national_identifier: Option<String>,
    pub identifier_type: Option<String>,
    pub lei: Option<String>,
    pub sector: Option<String>,
    pub legal_form_code: Option<LegalFormCode>,
    pub legal_form_abbreviation: Option<String>,
}

impl EntityRecord {
    /// Checks the record invariants (non-empty name, 20-char LEI).
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.company_name.trim().is_empty() {
            return Err(ModelError::EmptyName);
        }
        if let Some(lei) = &self.lei {
            if lei.chars().count() != 20 {
                return Err(ModelError::Lei(lei.clone()));
            }
        }
        Ok(())
    }
}

/// Official registry view of an entity.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceEntry {
    pub official_name: Option<String>,
    pub previous_names: Vec<String>,
    pub source_id: String,
}

impl ReferenceEntry {
    /// Builds an entry, dropping blank official/previous names.
    pub fn new(
        official_name: Option<String>,
        previous_names: impl IntoIterator<Item = String>,
        source_id: impl Into<String>,
    ) -> Self {
        Self {
            official_name: official_name.filter(|n| !n.trim().is_empty()),
            previous_names: previous_names
                .into_iter()
                .filter(|n| !n.trim().is_empty())
                .collect(),
            source_id: source_id.into(),
        }
    }

    pub fn empty(source_id: impl Into<String>) -> Self {
        Self {
            official_name: None,
            previous_names: Vec::new(),
            source_id: source_id.into(),
        }
    }

    /// True when there is nothing to compare the declared name against.
    pub fn is_empty(&self) -> bool {
        self.official_name.is_none() && self.previous_names.is_empty()
    }

    /// Official name first, then previous names.
    pub fn candidates(&self) -> impl Iterator<Item = &str> {
        self.official_name.iter().chain(&self.previous_names).map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ResolutionLabel {
    Accepted,
    Rejected,
    Doubtful,
}

impl ResolutionLabel {
    pub const ALL: [ResolutionLabel; 3] = [Self::Accepted, Self::Rejected, Self::Doubtful];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Accepted => "Accepted",
            Self::Rejected => "Rejected",
            Self::Doubtful => "Doubtful",
        }
    }
}

impl fmt::Display for ResolutionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ResolutionLabel {
    type Err = ModelError;

    /// Accepts the English labels and the Spanish "Aceptado/Rechazado/Duda",
    /// case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "accepted" | "aceptado" => Ok(Self::Accepted),
            "rejected" | "rechazado" => Ok(Self::Rejected),
            "doubtful" | "duda" => Ok(Self::Doubtful),
            _ => Err(ModelError::Label(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RejectReasonRepr", into = "RejectReasonRepr")]
pub enum RejectReason {
    NameMismatch,
    LegalFormMismatch,
    IdentifierMismatch,
    MissingReference,
    Other(String),
}

impl RejectReason {
    pub fn other(text: impl Into<String>) -> Result<Self, ModelError> {
        let text = text.into();
        if text.trim().is_empty() {
            Err(ModelError::Reason(text))
        } else {
            Ok(Self::Other(text))
        }
    }

    /// Names of the fixed variants, plus `Other` for free text.
    pub const KINDS: [&'static str; 5] = [
        "NameMismatch",
        "LegalFormMismatch",
        "IdentifierMismatch",
        "MissingReference",
        "Other",
    ];
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NameMismatch => f.write_str("NameMismatch"),
            Self::LegalFormMismatch => f.write_str("LegalFormMismatch"),
            Self::IdentifierMismatch => f.write_str("IdentifierMismatch"),
            Self::MissingReference => f.write_str("MissingReference"),
            Self::Other(text) => write!(f, "Other({text})"),
        }
    }
}

impl FromStr for RejectReason {
    type Err = ModelError;

    /// Parses the `Display` form; any other non-empty text becomes `Other`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "NameMismatch" => Ok(Self::NameMismatch),
            "LegalFormMismatch" => Ok(Self::LegalFormMismatch),
            "IdentifierMismatch" => Ok(Self::IdentifierMismatch),
            "MissingReference" => Ok(Self::MissingReference),
            _ => {
                let text = s
                    .strip_prefix("Other(")
                    .and_then(|t| t.strip_suffix(')'))
                    .unwrap_or(s);
                Self::other(text)
            }
        }
    }
}

/// Wire shape: `{"kind": "MissingReference"}` or `{"kind": "Other", "text": "..."}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct RejectReasonRepr {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
}

impl TryFrom<RejectReasonRepr> for RejectReason {
    type Error = ModelError;
    fn try_from(r: RejectReasonRepr) -> Result<Self, Self::Error> {
        match (r.kind.as_str(), r.text) {
            ("NameMismatch", None) => Ok(Self::NameMismatch),
            ("LegalFormMismatch", None) => Ok(Self::LegalFormMismatch),
            ("IdentifierMismatch", None) => Ok(Self::IdentifierMismatch),
            ("MissingReference", None) => Ok(Self::MissingReference),
            ("Other", Some(text)) => Self::other(text),
            (kind, _) => Err(ModelError::Reason(kind.to_string())),
        }
    }
}

impl From<RejectReason> for RejectReasonRepr {
    fn from(r: RejectReason) -> Self {
        match r {
            RejectReason::Other(text) => Self {
                kind: "Other".into(),
                text: Some(text),
            },
            other => Self {
                kind: other.to_string(),
                text: None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CaseId(pub String);

impl CaseId {
    /// Deterministic id from (country, company name, national identifier).
    pub fn derive(country: &CountryCode, company_name: &str, national_identifier: Option<&str>) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(country.as_str().as_bytes());
        hasher.update([0x1f]);
        hasher.update(company_name.as_bytes());
        hasher.update([0x1f]);
        hasher.update(national_identifier.unwrap_or("").as_bytes());
        let digest = hasher.finalize();
        Self(format!("c{}", &hex::encode(digest)[..12]))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for CaseId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// A declared/official pairing together with everything the engine learned
/// about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchCase {
    pub case_id: CaseId,
    pub record: EntityRecord,
    pub reference: ReferenceEntry,
    #[serde(default)]
    pub scores: BTreeMap<String, f64>,
    #[serde(default)]
    pub verdicts: BTreeMap<String, ResolutionLabel>,
    #[serde(default)]
    pub resolution: Option<ResolutionLabel>,
    #[serde(default)]
    pub reject_reasons: Vec<RejectReason>,
    #[serde(default)]
    pub ground_truth: Option<ResolutionLabel>,
    #[serde(default)]
    pub assigned_code: Option<String>,
}

impl MatchCase {
    pub fn new(case_id: CaseId, record: EntityRecord, reference: ReferenceEntry) -> Self {
        Self {
            case_id,
            record,
            reference,
            scores: BTreeMap::new(),
            verdicts: BTreeMap::new(),
            resolution: None,
            reject_reasons: Vec::new(),
            ground_truth: None,
            assigned_code: None,
        }
    }

    /// Rows with Doubtful ground truth are kept but never scored.
    pub fn is_scorable(&self) -> bool {
        matches!(
            self.ground_truth,
            Some(ResolutionLabel::Accepted | ResolutionLabel::Rejected)
        )
    }

    /// Checks score ranges and the resolution/reason coupling.
    pub fn validate(&self) -> Result<(), ModelError> {
        for (matcher, &score) in &self.scores {
            if !(0.0..=1.0).contains(&score) {
                return Err(ModelError::Score {
                    matcher: matcher.clone(),
                    score,
                });
            }
        }
        match self.resolution {
            Some(ResolutionLabel::Rejected) if self.reject_reasons.is_empty() => {
                Err(ModelError::ReasonConsistency {
                    resolution: ResolutionLabel::Rejected,
                    count: 0,
                })
            }
            Some(ResolutionLabel::Accepted) if !self.reject_reasons.is_empty() => {
                Err(ModelError::ReasonConsistency {
                    resolution: ResolutionLabel::Accepted,
                    count: self.reject_reasons.len(),
                })
            }
            _ => Ok(()),
        }
    }
}

/// Source tag recorded on references read straight from the dataset.
pub const DATASET_SOURCE: &str = "dataset";

/// Supported on-disk dataset encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DatasetFormat {
    /// Delimiter detected from the header line.
    #[default]
    Auto,
    Comma,
    Semicolon,
}

impl FromStr for DatasetFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(Self::Auto),
            "csv" | "comma" => Ok(Self::Comma),
            "semicolon" | "ssv" => Ok(Self::Semicolon),
            _ => Err(format!("unknown dataset format {s:?} (auto, comma, semicolon)")),
        }
    }
}

fn detect_delimiter(text: &str, format: DatasetFormat) -> u8 {
    match format {
        DatasetFormat::Comma => b',',
        DatasetFormat::Semicolon => b';',
        DatasetFormat::Auto => {
            let header = text.lines().next().unwrap_or("");
            if header.matches(';').count() > header.matches(',').count() {
                b';'
            } else {
                b','
            }
        }
    }
}

/// Loads a dataset file. See [`parse_dataset`].
pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Vec<MatchCase>, DatasetError> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
    let text = String::from_utf8(bytes).map_err(|e| DatasetError::Encoding(e.to_string()))?;
    parse_dataset(&text, format)
}

/// Parses dataset text into one [`MatchCase`] per data row.
///
/// Row numbers in errors count data rows from 1 (the header is row 0).
pub fn parse_dataset(text: &str, format: DatasetFormat) -> Result<Vec<MatchCase>, DatasetError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let delimiter = detect_delimiter(text, format);
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());

    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        index.insert(h.as_str(), i);
    }
    let data_columns: Vec<&str> = headers
        .iter()
        .map(String::as_str)
        .filter(|h| *h != CASE_ID_COLUMN)
        .collect();
    let id_columns = headers.len() - data_columns.len();
    if data_columns != DATASET_COLUMNS || id_columns > 1 {
        return Err(DatasetError::Header {
            expected: DATASET_COLUMNS.iter().map(|s| s.to_string()).collect(),
            found: headers,
        });
    }

    let mut cases = Vec::new();
    let mut seen: HashMap<CaseId, usize> = HashMap::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| DatasetError::Row {
            row: row_no,
            column: "*".into(),
            message: e.to_string(),
        })?;
        let cell = |col: &str| -> &str { row.get(index[col]).unwrap_or("").trim() };
        let opt = |col: &str| -> Option<String> {
            let v = cell(col);
            (!v.is_empty()).then(|| v.to_string())
        };
        let row_err = |column: &str, message: String| DatasetError::Row {
            row: row_no,
            column: column.to_string(),
            message,
        };

        let country: CountryCode = cell("Country")
            .parse()
            .map_err(|e: ModelError| row_err("Country", e.to_string()))?;
        let company_name = cell("CompanyName").to_string();
        if company_name.is_empty() {
            return Err(row_err("CompanyName", ModelError::EmptyName.to_string()));
        }
        let lei = opt("LEI");
        if let Some(l) = &lei {
            if l.chars().count() != 20 {
                return Err(row_err("LEI", ModelError::Lei(l.clone()).to_string()));
            }
        }
        let legal_form_code = match opt("LegalForm") {
            Some(v) => Some(
                v.parse::<LegalFormCode>()
                    .map_err(|e| row_err("LegalForm", e.to_string()))?,
            ),
            None => None,
        };
        let ground_truth = match opt("Result") {
            Some(v) => Some(
                v.parse::<ResolutionLabel>()
                    .map_err(|e| row_err("Result", e.to_string()))?,
            ),
            None => None,
        };
        let record = EntityRecord {
            country,
            company_name,
            entity_app: cell("Entity").to_string(),
            national_identifier: opt("NationalIdentifier"),
            identifier_type: opt("IdentifierType"),
            lei,
            sector: opt("Sector"),
            legal_form_code,
            legal_form_abbreviation: opt("Abbreviation"),
        };
        let previous = cell("PreviousNames")
            .split('|')
            .map(|s| s.trim().to_string())
            .collect::<Vec<_>>();
        let reference = ReferenceEntry::new(opt("OfficialName"), previous, DATASET_SOURCE);

        let case_id = match index.get(CASE_ID_COLUMN).and_then(|&i| row.get(i)).map(str::trim) {
            Some(id) if !id.is_empty() => CaseId(id.to_string()),
            _ => {
                let base = CaseId::derive(
                    &record.country,
                    &record.company_name,
                    record.national_identifier.as_deref(),
                );
                let n = seen.entry(base.clone()).or_insert(0);
                *n += 1;
                if *n == 1 {
                    base
                } else {
                    CaseId(format!("{}-{}", base.0, n))
                }
            }
        };
        let mut case = MatchCase::new(case_id, record, reference);
        case.ground_truth = ground_truth;
        cases.push(case);
    }
    Ok(cases)
}

/// Writes cases back in the dataset schema (comma-separated, with a `CaseId`
/// column), so that [`parse_dataset`] reproduces the same records.
pub fn write_dataset<W: Write>(cases: &[MatchCase], out: W) -> Result<(), DatasetError> {
    let mut writer = csv::WriterBuilder::new().from_writer(out);
    let mut header: Vec<&str> = vec![CASE_ID_COLUMN];
    header.extend(DATASET_COLUMNS);
    writer.write_record(&header)?;
    for case in cases {
        let r = &case.record;
        let code = r.legal_form_code.as_ref().map(|c| c.to_string()).unwrap_or_default();
        writer.write_record([
            case.case_id.as_str(),
            r.country.as_str(),
            &r.company_name,
            &r.entity_app,
            r.national_identifier.as_deref().unwrap_or(""),
            r.identifier_type.as_deref().unwrap_or(""),
            r.lei.as_deref().unwrap_or(""),
            r.sector.as_deref().unwrap_or(""),
            &code,
            r.legal_form_abbreviation.as_deref().unwrap_or(""),
            case.reference.official_name.as_deref().unwrap_or(""),
            &case.reference.previous_names.join("|"),
            case.ground_truth.map(|l| l.as_str()).unwrap_or(""),
        ])?;
    }
    writer.flush().map_err(|e| DatasetError::Csv(e.into()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "Country,CompanyName,Entity,NationalIdentifier,IdentifierType,LEI,Sector,LegalForm,Abbreviation,OfficialName,PreviousNames,Result";

    #[test]
    fn loads_published_rows() {
        let text = format!(
            "{HEADER}\n\
             PT,\"SOLARSHOP, UNIPESSOAL LDA\",E1,501234567,PT_NIF_CD,,S11,PT101,LDA,\"SOLARSHOP, UNIPESSOAL, LDA\",,Accepted\n\
             PT,SIMBOLO II - INFORMATICA DE GESTAO LDA,E1,,,529900T8BM49AURSDO55,S11,PT101,LDA,,,Doubtful\n"
        );
        let cases = parse_dataset(&text, DatasetFormat::Auto).unwrap();
        assert_eq!(cases.len(), 2);
        assert_eq!(cases[0].ground_truth, Some(ResolutionLabel::Accepted));
        assert_eq!(
            cases[0].reference.official_name.as_deref(),
            Some("SOLARSHOP, UNIPESSOAL, LDA")
        );
        assert_eq!(cases[1].reference.official_name, None);
        assert_eq!(cases[1].ground_truth, Some(ResolutionLabel::Doubtful));
        assert!(!cases[1].is_scorable());
    }

    #[test]
    fn empty_file_is_empty_list() {
        assert!(parse_dataset("", DatasetFormat::Auto).unwrap().is_empty());
        assert!(parse_dataset(HEADER, DatasetFormat::Auto).unwrap().is_empty());
    }

    #[test]
    fn semicolon_detected_and_utf8_survives() {
        let text = format!(
            "{}\nPT;DOÇARIA ÃO LDA;E;1;;;;;;PASTELARIA, DOÇARIA;OLD A|OLD B;Aceptado\n",
            HEADER.replace(',', ";")
        );
        let cases = parse_dataset(&text, DatasetFormat::Auto).unwrap();
        assert_eq!(cases[0].record.company_name, "DOÇARIA ÃO LDA");
        assert_eq!(cases[0].reference.previous_names, vec!["OLD A", "OLD B"]);
        assert_eq!(cases[0].ground_truth, Some(ResolutionLabel::Accepted));
    }

    #[test]
    fn unknown_label_lists_allowed() {
        let text = format!("{HEADER}\nPT,ACME,E,,,,,,,,,Maybe\n");
        let err = parse_dataset(&text, DatasetFormat::Auto).unwrap_err().to_string();
        assert!(err.contains("row 1"), "{err}");
        assert!(err.contains("Result"), "{err}");
        assert!(err.contains("Accepted, Rejected, Doubtful"), "{err}");
    }

    #[test]
    fn malformed_row_names_row_and_column() {
        let text = format!("{HEADER}\nPT,ACME,E,,,,,,,,,\npt,ACME,E,,,,,,,,,\n");
        match parse_dataset(&text, DatasetFormat::Auto).unwrap_err() {
            DatasetError::Row { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "Country");
            }
            e => panic!("unexpected {e}"),
        }
        let text = format!("{HEADER}\nPT,ACME,E,,,SHORT,,,,,,\n");
        assert!(matches!(
            parse_dataset(&text, DatasetFormat::Auto),
            Err(DatasetError::Row { ref column, .. }) if column == "LEI"
        ));
        let text = format!("{HEADER}\nPT,ACME,E,,,,,PTX1,,,,\n");
        assert!(matches!(
            parse_dataset(&text, DatasetFormat::Auto),
            Err(DatasetError::Row { ref column, .. }) if column == "LegalForm"
        ));
    }

    #[test]
    fn header_must_match() {
        let text = "Country,Name\nPT,ACME\n";
        assert!(matches!(
            parse_dataset(text, DatasetFormat::Auto),
            Err(DatasetError::Header { .. })
        ));
    }

    #[test]
    fn duplicate_rows_get_distinct_ids() {
        let text = format!("{HEADER}\nPT,ACME,E,1,,,,,,,,\nPT,ACME,E,1,,,,,,,,\n");
        let cases = parse_dataset(&text, DatasetFormat::Auto).unwrap();
        assert_ne!(cases[0].case_id, cases[1].case_id);
        assert!(cases[1].case_id.0.ends_with("-2"));
    }

    #[test]
    fn case_validation() {
        let record = EntityRecord {
            country: "PT".parse().unwrap(),
            company_name: "ACME".into(),
            entity_app: String::new(),
            national_identifier: None,
            identifier_type: None,
            lei: None,
            sector: None,
            legal_form_code: None,
            legal_form_abbreviation: None,
        };
        let mut case = MatchCase::new("x".into(), record, ReferenceEntry::empty("t"));
        case.resolution = Some(ResolutionLabel::Rejected);
        assert!(case.validate().is_err());
        case.reject_reasons.push(RejectReason::NameMismatch);
        assert!(case.validate().is_ok());
        case.resolution = Some(ResolutionLabel::Accepted);
        assert!(case.validate().is_err());
        case.reject_reasons.clear();
        case.scores.insert("cosine".into(), 1.2);
        assert!(case.validate().is_err());
    }

    #[test]
    fn reject_reason_wire_and_text_forms() {
        let r: RejectReason = serde_json::from_str(r#"{"kind":"MissingReference"}"#).unwrap();
        assert_eq!(r, RejectReason::MissingReference);
        let o = RejectReason::other("typo in NIF").unwrap();
        let json = serde_json::to_string(&o).unwrap();
        assert_eq!(json, r#"{"kind":"Other","text":"typo in NIF"}"#);
        assert!(serde_json::from_str::<RejectReason>(r#"{"kind":"Other","text":" "}"#).is_err());
        assert_eq!("Other(x)".parse::<RejectReason>().unwrap(), RejectReason::Other("x".into()));
        assert!(RejectReason::other("").is_err());
    }
}
