//! Company-name canonicalization: case, diacritics, punctuation, spacing and
//! abbreviation expansion.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DictionaryError {
    #[error("line {line}: expected ABBR=EXPANSION, found {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: {token:?} is not an uppercase punctuation-free token")]
    Token { line: usize, token: String },
    #[error("expansion {0:?} is itself an abbreviation key")]
    Chained(String),
    #[error("cannot read dictionary {path}: {message}")]
    Io { path: String, message: String },
}

/// Abbreviation token -> expansion token.
///
/// Keys and values are non-empty `[A-Z0-9]+` tokens and no expansion is also
/// a key, so expanding twice is the same as expanding once.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, String>", into = "BTreeMap<String, String>")]
pub struct AbbreviationDictionary {
    pairs: BTreeMap<String, String>,
}

fn is_plain_token(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_uppercase() || b.is_ascii_digit())
}

impl AbbreviationDictionary {
    /// Pairs observed in the reference material: `IND`, `COM`.
    pub fn builtin() -> Self {
        Self::from_pairs([("IND", "INDUSTRIA"), ("COM", "COMERCIO")]).expect("builtin dictionary is valid")
    }

    pub fn from_pairs<K: Into<String>, V: Into<String>>(
        pairs: impl IntoIterator<Item = (K, V)>,
    ) -> Result<Self, DictionaryError> {
        let mut map = BTreeMap::new();
        for (i, (k, v)) in pairs.into_iter().enumerate() {
            let (k, v) = (k.into(), v.into());
            for token in [&k, &v] {
                if !is_plain_token(token) {
                    return Err(DictionaryError::Token {
                        line: i + 1,
                        token: token.clone(),
                    });
                }
            }
            map.insert(k, v);
        }
        if let Some(v) = map.values().find(|v| map.contains_key(*v)) {
            return Err(DictionaryError::Chained(v.clone()));
        }
        Ok(Self { pairs: map })
    }

    /// Parses `ABBR=EXPANSION` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, DictionaryError> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| DictionaryError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            let (k, v) = (k.trim(), v.trim());
            for token in [k, v] {
                if !is_plain_token(token) {
                    return Err(DictionaryError::Token {
                        line: i + 1,
                        token: token.to_string(),
                    });
                }
            }
            pairs.push((k.to_string(), v.to_string()));
        }
        Self::from_pairs(pairs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DictionaryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| DictionaryError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Adds pairs from `other`, overriding existing keys.
    pub fn extend(&mut self, other: &AbbreviationDictionary) -> Result<(), DictionaryError> {
        let merged = self
            .pairs
            .iter()
            .chain(other.pairs.iter())
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect::<Vec<_>>();
        *self = Self::from_pairs(merged)?;
        Ok(())
    }

    pub fn get(&self, token: &str) -> Option<&str> {
        self.pairs.get(token).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

impl TryFrom<BTreeMap<String, String>> for AbbreviationDictionary {
    type Error = DictionaryError;
    fn try_from(map: BTreeMap<String, String>) -> Result<Self, Self::Error> {
        Self::from_pairs(map)
    }
}

impl From<AbbreviationDictionary> for BTreeMap<String, String> {
    fn from(d: AbbreviationDictionary) -> Self {
        d.pairs
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizationProfile {
    pub fold_diacritics: bool,
    pub strip_punctuation: bool,
    pub collapse_whitespace: bool,
    pub uppercase: bool,
    pub abbreviation_dictionary: AbbreviationDictionary,
}

impl NormalizationProfile {
    /// Every step enabled, with the given dictionary.
    pub fn full(dictionary: AbbreviationDictionary) -> Self {
        Self {
            fold_diacritics: true,
            strip_punctuation: true,
            collapse_whitespace: true,
            uppercase: true,
            abbreviation_dictionary: dictionary,
        }
    }

    /// No-op profile: names are compared as given.
    pub fn raw() -> Self {
        Self {
            fold_diacritics: false,
            strip_punctuation: false,
            collapse_whitespace: false,
            uppercase: false,
            abbreviation_dictionary: AbbreviationDictionary::default(),
        }
    }
}

impl Default for NormalizationProfile {
    fn default() -> Self {
        Self::full(AbbreviationDictionary::builtin())
    }
}

/// Letters that have no canonical decomposition but still carry a stroke or
/// similar mark.
fn fold_override(c: char) -> Option<char> {
    Some(match c {
        'ł' => 'l',
        'Ł' => 'L',
        'đ' => 'd',
        'Đ' => 'D',
        'ø' => 'o',
        'Ø' => 'O',
        'ħ' => 'h',
        'Ħ' => 'H',
        'ŧ' => 't',
        'Ŧ' => 'T',
        'ı' => 'i',
        'ŀ' => 'l',
        'Ŀ' => 'L',
        'ƀ' => 'b',
        'Ɨ' => 'I',
        'ɨ' => 'i',
        _ => return None,
    })
}

/// Maps Latin letters with diacritics to their base letter: canonical
/// decomposition, combining marks dropped, then the override table for
/// letters such as `ł`. Everything else passes through.
pub fn fold_diacritics(s: &str) -> String {
    s.nfd()
        .filter(|c| !is_combining_mark(*c))
        .map(|c| fold_override(c).unwrap_or(c))
        .nfc()
        .collect()
}

/// Replaces each token found in `dictionary` by its expansion.
pub fn expand_abbreviations(tokens: &[String], dictionary: &AbbreviationDictionary) -> Vec<String> {
    tokens
        .iter()
        .map(|t| dictionary.get(t).map_or_else(|| t.clone(), str::to_string))
        .collect()
}

/// Canonicalizes a raw name. Steps run in order: uppercase, diacritic
/// folding, punctuation to space, whitespace collapse, abbreviation
/// expansion. Each can be switched off in the profile.
///
/// When both folding and punctuation stripping are enabled, characters left
/// outside ASCII after folding are treated as separators, so the full
/// profile only ever emits `[A-Z0-9]` and single spaces.
pub fn normalize_name(raw: &str, profile: &NormalizationProfile) -> String {
    let mut s = if profile.uppercase {
        raw.to_uppercase()
    } else {
        raw.to_string()
    };
    if profile.fold_diacritics {
        s = fold_diacritics(&s);
        if profile.uppercase {
            // a handful of letters only gain their uppercase form once folded
            s = s.to_uppercase();
        }
    }
    if profile.strip_punctuation {
        let ascii_only = profile.fold_diacritics;
        s = s
            .chars()
            .map(|c| {
                let keep = c.is_whitespace() || (c.is_alphanumeric() && (!ascii_only || c.is_ascii()));
                if keep {
                    c
                } else {
                    ' '
                }
            })
            .collect();
    }
    if profile.collapse_whitespace {
        s = s.split_whitespace().collect::<Vec<_>>().join(" ");
    }
    if !profile.abbreviation_dictionary.is_empty() {
        s = s
            .split(' ')
            .map(|t| profile.abbreviation_dictionary.get(t).unwrap_or(t))
            .collect::<Vec<_>>()
            .join(" ");
    }
    s
}

/// Whitespace tokens of an already-normalized name.
pub fn tokens(normalized: &str) -> Vec<String> {
    normalized.split_whitespace().map(str::to_string).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn full_empty() -> NormalizationProfile {
        NormalizationProfile::full(AbbreviationDictionary::default())
    }

    #[test]
    fn umlaut_folds() {
        assert_eq!(normalize_name("Müller AG", &full_empty()), "MULLER AG");
    }

    #[test]
    fn punctuation_becomes_space() {
        assert_eq!(
            normalize_name("BRENNTAG PORUTGAL - PRODUTOS QUIMICOS, LDA", &full_empty()),
            "BRENNTAG PORUTGAL PRODUTOS QUIMICOS LDA"
        );
        assert_eq!(normalize_name("A/S", &full_empty()), "A S");
        assert_eq!(normalize_name("S.A.", &full_empty()), "S A");
        assert_eq!(normalize_name("", &full_empty()), "");
    }

    #[test]
    fn fold_examples() {
        assert_eq!(fold_diacritics("DOÇARIA"), "DOCARIA");
        assert_eq!(fold_diacritics("ABC"), "ABC");
        assert_eq!(fold_diacritics("INDÚSTRIA E COMÉRCIO"), "INDUSTRIA E COMERCIO");
        assert_eq!(fold_diacritics("ÔŁÇŠÒ"), "OLCSO");
        assert_eq!(fold_diacritics("łódź"), "lodz");
        assert_eq!(fold_diacritics("東京"), "東京");
    }

    #[test]
    fn expansion_examples() {
        let dict = AbbreviationDictionary::builtin();
        let toks: Vec<String> = ["PASTIGEST", "IND", "E", "COM", "PASTELARIA"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(
            expand_abbreviations(&toks, &dict),
            vec!["PASTIGEST", "INDUSTRIA", "E", "COMERCIO", "PASTELARIA"]
        );
        assert_eq!(expand_abbreviations(&toks, &AbbreviationDictionary::default()), toks);
        assert_eq!(expand_abbreviations(&["IND".to_string()], &dict), vec!["INDUSTRIA"]);
    }

    #[test]
    fn pastigest_pair_converges() {
        let p = NormalizationProfile::default();
        let declared = normalize_name("PASTIGEST IND E COM PASTELARIA DOCARIA", &p);
        let official = normalize_name("PASTIGEST - INDÚSTRIA E COMÉRCIO DE PASTELARIA, DOÇARIA", &p);
        assert_eq!(declared, "PASTIGEST INDUSTRIA E COMERCIO PASTELARIA DOCARIA");
        assert_eq!(official, "PASTIGEST INDUSTRIA E COMERCIO DE PASTELARIA DOCARIA");
    }

    #[test]
    fn dictionary_file_format() {
        let d = AbbreviationDictionary::parse("# comment\nIND=INDUSTRIA\n\n COM = COMERCIO # trailing\n").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.get("COM"), Some("COMERCIO"));
        assert!(matches!(
            AbbreviationDictionary::parse("IND INDUSTRIA"),
            Err(DictionaryError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            AbbreviationDictionary::parse("ind=INDUSTRIA"),
            Err(DictionaryError::Token { .. })
        ));
        assert!(matches!(
            AbbreviationDictionary::parse("A=B\nB=C"),
            Err(DictionaryError::Chained(_))
        ));
    }

    fn any_profile() -> impl Strategy<Value = NormalizationProfile> {
        (any::<bool>(), any::<bool>(), any::<bool>(), any::<bool>(), any::<bool>()).prop_map(
            |(fold, strip, collapse, upper, dict)| NormalizationProfile {
                fold_diacritics: fold,
                strip_punctuation: strip,
                collapse_whitespace: collapse,
                uppercase: upper,
                abbreviation_dictionary: if dict {
                    AbbreviationDictionary::builtin()
                } else {
                    AbbreviationDictionary::default()
                },
            },
        )
    }

    proptest! {
        #[test]
        fn idempotent_under_any_profile(s in "\\PC{0,24}", p in any_profile()) {
            let once = normalize_name(&s, &p);
            prop_assert_eq!(normalize_name(&once, &p), once);
        }

        #[test]
        fn expansion_preserves_length(toks in proptest::collection::vec("[A-Z]{1,4}", 0..8)) {
            let out = expand_abbreviations(&toks, &AbbreviationDictionary::builtin());
            prop_assert_eq!(out.len(), toks.len());
        }

        #[test]
        fn folding_keeps_ascii(s in "[ -~]{0,32}") {
            prop_assert_eq!(fold_diacritics(&s), s);
        }
    }
}
