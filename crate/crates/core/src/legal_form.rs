//! Legal-form designators: suffix extraction, abbreviation canonicalization,
//! the country-coded legal-form field and the declared/official/field
//! consistency check.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text_normalize::{normalize_name, AbbreviationDictionary, NormalizationProfile};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LegalFormError {
    #[error("invalid legal-form code {0:?}: expected two uppercase letters followed by three digits")]
    Format(String),
    #[error("legal-form code {0} is not present in the code map")]
    UnmappedCode(LegalFormCode),
    #[error("code map entry {code} refers to unknown canonical form {canonical_id}")]
    UnknownCanonical { code: String, canonical_id: String },
    #[error("surface form {surface:?} is claimed by both {first} and {second}")]
    Overlap { surface: String, first: String, second: String },
    #[error("canonical form {0} has no surface forms")]
    NoSurfaceForms(String),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

/// Country prefix plus three digits, e.g. `PT101`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LegalFormCode {
    country: String,
    numeric: String,
}

impl LegalFormCode {
    pub fn country(&self) -> &str {
        &self.country
    }

    pub fn numeric(&self) -> &str {
        &self.numeric
    }
}

/// Splits a legal-form field into its country prefix and numeric suffix.
pub fn parse_legal_form_code(field: &str) -> Result<LegalFormCode, LegalFormError> {
    let b = field.as_bytes();
    let valid = b.len() == 5
        && b[..2].iter().all(u8::is_ascii_uppercase)
        && b[2..].iter().all(u8::is_ascii_digit);
    if !valid {
        return Err(LegalFormError::Format(field.to_string()));
    }
    Ok(LegalFormCode {
        country: field[..2].to_string(),
        numeric: field[2..].to_string(),
    })
}

impl FromStr for LegalFormCode {
    type Err = LegalFormError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_legal_form_code(s)
    }
}

impl TryFrom<String> for LegalFormCode {
    type Error = LegalFormError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        parse_legal_form_code(&s)
    }
}

impl From<LegalFormCode> for String {
    fn from(c: LegalFormCode) -> String {
        c.to_string()
    }
}

impl fmt::Display for LegalFormCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.country, self.numeric)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CanonicalLegalForm {
    pub canonical_id: String,
    /// Normalized spellings (uppercase, punctuation replaced by spaces).
    pub surface_forms: BTreeSet<String>,
}

fn surface_key(raw: &str) -> String {
    normalize_name(raw, &NormalizationProfile::full(AbbreviationDictionary::default()))
}

impl CanonicalLegalForm {
    /// Builds a form, normalizing every spelling. The canonical spelling is
    /// the first one given.
    pub fn new<S: AsRef<str>>(canonical_id: impl Into<String>, spellings: &[S]) -> Result<Self, LegalFormError> {
        let canonical_id = canonical_id.into();
        let surface_forms: BTreeSet<String> = spellings
            .iter()
            .map(|s| surface_key(s.as_ref()))
            .filter(|s| !s.is_empty())
            .collect();
        if surface_forms.is_empty() {
            return Err(LegalFormError::NoSurfaceForms(canonical_id));
        }
        Ok(Self {
            canonical_id,
            surface_forms,
        })
    }
}

/// The set of known canonical legal forms, with a reverse index from
/// surface spelling to form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LegalFormRegistry {
    forms: BTreeMap<String, CanonicalLegalForm>,
    by_surface: HashMap<String, String>,
    max_tokens: usize,
}

/// Shipped registry, `ID=spelling|spelling` per line.
pub const BUILTIN_REGISTRY: &str = "\
# Portuguese forms
PT_LDA=LDA|LTDA|L DA|LIMITADA
PT_SA=SA|S A|SOCIEDADE ANONIMA
PT_SC=SC|S C|SOCIEDADE CIVIL
PT_UNIPESSOAL_LDA=UNIPESSOAL LDA|UNIPESSOAL
# foreign forms seen in filings
IT_SRL=SRL|S R L
DK_AS=A S
";

impl LegalFormRegistry {
    pub fn new(forms: impl IntoIterator<Item = CanonicalLegalForm>) -> Result<Self, LegalFormError> {
        let mut by_id = BTreeMap::new();
        let mut by_surface: HashMap<String, String> = HashMap::new();
        let mut max_tokens = 0;
        for form in forms {
            for s in &form.surface_forms {
                if let Some(first) = by_surface.get(s) {
                    if *first != form.canonical_id {
                        return Err(LegalFormError::Overlap {
                            surface: s.clone(),
                            first: first.clone(),
                            second: form.canonical_id.clone(),
                        });
                    }
                }
                by_surface.insert(s.clone(), form.canonical_id.clone());
                max_tokens = max_tokens.max(s.split(' ').count());
            }
            by_id.insert(form.canonical_id.clone(), form);
        }
        Ok(Self {
            forms: by_id,
            by_surface,
            max_tokens,
        })
    }

    pub fn builtin() -> Self {
        Self::parse(BUILTIN_REGISTRY).expect("builtin registry is valid")
    }

    /// Parses `PT_LDA=LDA|LTDA|LIMITADA` lines.
    pub fn parse(text: &str) -> Result<Self, LegalFormError> {
        let mut forms = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (id, spellings) = line.split_once('=').ok_or_else(|| LegalFormError::Syntax {
                line: i + 1,
                message: format!("expected ID=SPELLING|..., found {raw:?}"),
            })?;
            let spellings: Vec<&str> = spellings.split('|').map(str::trim).collect();
            forms.push(CanonicalLegalForm::new(id.trim(), &spellings)?);
        }
        Self::new(forms)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LegalFormError> {
        Self::parse(&read(path.as_ref())?)
    }

    pub fn get(&self, canonical_id: &str) -> Option<&CanonicalLegalForm> {
        self.forms.get(canonical_id)
    }

    pub fn forms(&self) -> impl Iterator<Item = &CanonicalLegalForm> {
        self.forms.values()
    }

    fn lookup(&self, surface: &str) -> Option<&CanonicalLegalForm> {
        self.by_surface.get(surface).and_then(|id| self.forms.get(id))
    }

    /// Maps a raw designator (any case or punctuation) to its canonical form.
    pub fn canonicalize_abbreviation(&self, raw: &str) -> Option<&CanonicalLegalForm> {
        self.lookup(&surface_key(raw))
    }

    /// Removes the longest trailing token sequence that spells a known form.
    ///
    /// `name` should already be normalized with the full profile.
    pub fn extract_legal_form<'a>(&'a self, name: &str) -> (String, Option<&'a CanonicalLegalForm>) {
        let tokens: Vec<&str> = name.split_whitespace().collect();
        let longest = self.max_tokens.min(tokens.len());
        for width in (1..=longest).rev() {
            let split = tokens.len() - width;
            let suffix = tokens[split..].join(" ");
            if let Some(form) = self.lookup(&suffix) {
                return (tokens[..split].join(" "), Some(form));
            }
        }
        (tokens.join(" "), None)
    }
}

fn read(path: &Path) -> Result<String, LegalFormError> {
    std::fs::read_to_string(path).map_err(|e| LegalFormError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Legal-form code -> canonical form id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LegalFormCodeMap {
    codes: BTreeMap<LegalFormCode, String>,
}

/// Shipped code assignments. The real numeric codes are not public; these
/// are placeholders to be replaced by the deployment's mapping file.
pub const BUILTIN_CODE_MAP: &str = "\
PT101=PT_LDA
PT102=PT_SA
PT103=PT_SC
PT104=PT_UNIPESSOAL_LDA
IT101=IT_SRL
DK101=DK_AS
";

impl LegalFormCodeMap {
    /// Parses `PT101=PT_LDA` lines, checking every target against `registry`.
    pub fn parse(text: &str, registry: &LegalFormRegistry) -> Result<Self, LegalFormError> {
        let mut codes = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (code, id) = line.split_once('=').ok_or_else(|| LegalFormError::Syntax {
                line: i + 1,
                message: format!("expected CODE=CANONICAL_ID, found {raw:?}"),
            })?;
            let (code, id) = (code.trim(), id.trim());
            let parsed = parse_legal_form_code(code)?;
            if registry.get(id).is_none() {
                return Err(LegalFormError::UnknownCanonical {
                    code: code.to_string(),
                    canonical_id: id.to_string(),
                });
            }
            codes.insert(parsed, id.to_string());
        }
        Ok(Self { codes })
    }

    pub fn builtin(registry: &LegalFormRegistry) -> Self {
        Self::parse(BUILTIN_CODE_MAP, registry).expect("builtin code map is valid")
    }

    pub fn load(path: impl AsRef<Path>, registry: &LegalFormRegistry) -> Result<Self, LegalFormError> {
        Self::parse(&read(path.as_ref())?, registry)
    }

    pub fn insert(&mut self, code: LegalFormCode, canonical_id: impl Into<String>) {
        self.codes.insert(code, canonical_id.into());
    }

    pub fn resolve(&self, code: &LegalFormCode) -> Option<&str> {
        self.codes.get(code).map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictClass {
    Consistent,
    Inconsistent,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegalFormVerdict {
    pub class: VerdictClass,
    pub detail: String,
}

/// Three-way consistency check between the legal-form field, the form found
/// in the declared name and the form found in the official name.
///
/// Fewer than two present inputs is `Indeterminate`; otherwise the verdict
/// is `Consistent` iff every present input resolves to the same canonical id.
pub fn compare_legal_forms(
    declared_field: Option<&LegalFormCode>,
    declared_name_form: Option<&CanonicalLegalForm>,
    official_name_form: Option<&CanonicalLegalForm>,
    code_map: &LegalFormCodeMap,
) -> Result<LegalFormVerdict, LegalFormError> {
    let field_id = match declared_field {
        Some(code) => Some(
            code_map
                .resolve(code)
                .ok_or_else(|| LegalFormError::UnmappedCode(code.clone()))?,
        ),
        None => None,
    };
    let present: Vec<(&str, &str)> = [
        ("legal-form field", field_id),
        ("declared name", declared_name_form.map(|f| f.canonical_id.as_str())),
        ("official name", official_name_form.map(|f| f.canonical_id.as_str())),
    ]
    .into_iter()
    .filter_map(|(label, id)| id.map(|id| (label, id)))
    .collect();

    if present.len() < 2 {
        return Ok(LegalFormVerdict {
            class: VerdictClass::Indeterminate,
            detail: format!("only {} legal-form source(s) available", present.len()),
        });
    }
    let clashes: Vec<String> = present
        .iter()
        .enumerate()
        .flat_map(|(i, a)| present[i + 1..].iter().map(move |b| (a, b)))
        .filter(|(a, b)| a.1 != b.1)
        .map(|(a, b)| format!("{} {} vs {} {}", a.0, a.1, b.0, b.1))
        .collect();
    if clashes.is_empty() {
        Ok(LegalFormVerdict {
            class: VerdictClass::Consistent,
            detail: present[0].1.to_string(),
        })
    } else {
        Ok(LegalFormVerdict {
            class: VerdictClass::Inconsistent,
            detail: clashes.join("; "),
        })
    }
}
