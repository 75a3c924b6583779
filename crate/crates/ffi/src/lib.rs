//! C ABI over the ermatch engine.
//!
//! Every function returns an [`ErmStatus`]; results come back through out
//! pointers. On failure the thread's last error message is set and can be read
//! with [`erm_last_error_message`]. Strings handed out by the library must be
//! released with [`erm_string_free`]; handles with their matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ermatch::classify::{parse_zsc_response, ZscLabel};
use ermatch::evaluate::{compute_metrics, ConfusionMatrix};
use ermatch::legal_form::{
    compare_legal_forms, parse_legal_form_code, LegalFormCodeMap, LegalFormError, LegalFormRegistry, VerdictClass,
};
use ermatch::similarity::{levenshtein_distance, levenshtein_similarity, score_pair, VectorizerConfig};
use ermatch::text_normalize::{normalize_name, AbbreviationDictionary, NormalizationProfile};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    /// A legal-form code with no entry in the code map.
    UnmappedCode = 4,
    Io = 5,
    /// A Rust panic was caught at the boundary.
    Internal = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErmVerdict {
    Consistent = 0,
    Inconsistent = 1,
    Indeterminate = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErmZscLabel {
    Equal = 0,
    Different = 1,
    Unknown = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ErmScores {
    pub levenshtein: f64,
    pub cosine: f64,
    pub jaccard: f64,
}

/// Percentages in hundredths, e.g. 9206 for 92.06%.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ErmMetrics {
    pub accuracy: u32,
    pub precision: u32,
    pub recall: u32,
    pub f1: u32,
    pub roc_auc: u32,
    pub fpr: u32,
    /// Bit i set when metric i (in field order) had a zero denominator and
    /// is reported as 0.
    pub undefined: u32,
}

const METRIC_FIELDS: [&str; 6] = ["accuracy", "precision", "recall", "f1", "roc_auc", "fpr"];

/// Opaque normalization profile.
pub struct ErmProfile(NormalizationProfile);

/// Opaque legal-form registry together with its code map.
pub struct ErmLegalForms {
    registry: LegalFormRegistry,
    codes: LegalFormCodeMap,
}

struct Failure(ErmStatus, String);

impl Failure {
    fn arg(msg: impl Into<String>) -> Self {
        Failure(ErmStatus::InvalidArgument, msg.into())
    }
}

impl From<LegalFormError> for Failure {
    fn from(e: LegalFormError) -> Self {
        let status = match e {
            LegalFormError::UnmappedCode(_) => ErmStatus::UnmappedCode,
            LegalFormError::Io { .. } => ErmStatus::Io,
            _ => ErmStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ErmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ErmStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal error".into());
            ErmStatus::Internal
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(ErmStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(ErmStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn opt_text<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, what).map(Some)
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(ErmStatus::NullPointer, format!("{what} is null")))
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(ErmStatus::NullPointer, "output pointer is null".into()));
    }
    out.write(value);
    Ok(())
}

fn owned(s: String) -> *mut c_char {
    CString::new(s).map(CString::into_raw).unwrap_or(ptr::null_mut())
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn erm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn erm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn erm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Full profile (fold, strip, collapse, uppercase) with the builtin
/// abbreviations; `raw` selects the no-op profile instead.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn erm_profile_new(raw: bool, out: *mut *mut ErmProfile) -> ErmStatus {
    guard(|| {
        let profile = if raw {
            NormalizationProfile::raw()
        } else {
            NormalizationProfile::full(AbbreviationDictionary::builtin())
        };
        write(out, Box::into_raw(Box::new(ErmProfile(profile))))
    })
}

/// Adds `ABBR=EXPANSION` lines to the profile's dictionary.
///
/// # Safety
/// `profile` must be a live handle and `lines` a C string.
#[no_mangle]
pub unsafe extern "C" fn erm_profile_add_abbreviations(profile: *mut ErmProfile, lines: *const c_char) -> ErmStatus {
    guard(|| {
        let profile = profile
            .as_mut()
            .ok_or_else(|| Failure(ErmStatus::NullPointer, "profile is null".into()))?;
        let extra = AbbreviationDictionary::parse(text(lines, "lines")?).map_err(|e| Failure::arg(e.to_string()))?;
        profile
            .0
            .abbreviation_dictionary
            .extend(&extra)
            .map_err(|e| Failure::arg(e.to_string()))
    })
}

/// # Safety
/// `profile` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn erm_profile_free(profile: *mut ErmProfile) {
    if !profile.is_null() {
        drop(Box::from_raw(profile));
    }
}

/// # Safety
/// Pointers must be valid; `*out` must be freed with [`erm_string_free`].
#[no_mangle]
pub unsafe extern "C" fn erm_normalize(
    profile: *const ErmProfile,
    name: *const c_char,
    out: *mut *mut c_char,
) -> ErmStatus {
    guard(|| {
        let profile = handle(profile, "profile")?;
        write(out, owned(normalize_name(text(name, "name")?, &profile.0)))
    })
}

/// Edit distance in Unicode scalar values.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn erm_levenshtein_distance(a: *const c_char, b: *const c_char, out: *mut usize) -> ErmStatus {
    guard(|| write(out, levenshtein_distance(text(a, "a")?, text(b, "b")?)))
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn erm_levenshtein_similarity(a: *const c_char, b: *const c_char, out: *mut f64) -> ErmStatus {
    guard(|| write(out, levenshtein_similarity(text(a, "a")?, text(b, "b")?)))
}

/// Normalizes both names and scores them with character bigrams for cosine.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn erm_score_pair(
    profile: *const ErmProfile,
    declared: *const c_char,
    official: *const c_char,
    out: *mut ErmScores,
) -> ErmStatus {
    guard(|| {
        let profile = handle(profile, "profile")?;
        let s = score_pair(
            text(declared, "declared")?,
            text(official, "official")?,
            &profile.0,
            &VectorizerConfig::char_ngram(2),
        );
        write(
            out,
            ErmScores {
                levenshtein: s.levenshtein,
                cosine: s.cosine,
                jaccard: s.jaccard,
            },
        )
    })
}

/// Loads a registry and code map from files; a null path selects the builtin
/// table for that part.
///
/// # Safety
/// Paths must be null or C strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn erm_legal_forms_new(
    registry_path: *const c_char,
    codes_path: *const c_char,
    out: *mut *mut ErmLegalForms,
) -> ErmStatus {
    guard(|| {
        let registry = match opt_text(registry_path, "registry_path")? {
            Some(p) => LegalFormRegistry::load(p)?,
            None => LegalFormRegistry::builtin(),
        };
        let codes = match opt_text(codes_path, "codes_path")? {
            Some(p) => LegalFormCodeMap::load(p, &registry)?,
            None => LegalFormCodeMap::builtin(&registry),
        };
        write(out, Box::into_raw(Box::new(ErmLegalForms { registry, codes })))
    })
}

/// # Safety
/// `forms` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn erm_legal_forms_free(forms: *mut ErmLegalForms) {
    if !forms.is_null() {
        drop(Box::from_raw(forms));
    }
}

/// Canonical id of the legal form ending `name`, or null in `*out` when the
/// name carries none. The name is normalized with `profile` first.
///
/// # Safety
/// Pointers must be valid; a non-null `*out` must be freed with
/// [`erm_string_free`].
#[no_mangle]
pub unsafe extern "C" fn erm_extract_legal_form(
    forms: *const ErmLegalForms,
    profile: *const ErmProfile,
    name: *const c_char,
    out: *mut *mut c_char,
) -> ErmStatus {
    guard(|| {
        let forms = handle(forms, "forms")?;
        let profile = handle(profile, "profile")?;
        let normalized = normalize_name(text(name, "name")?, &profile.0);
        let id = forms.registry.extract_legal_form(&normalized).1;
        write(out, id.map_or(ptr::null_mut(), |f| owned(f.canonical_id.clone())))
    })
}

/// Compares the legal-form code field with the forms ending the declared and
/// official names. Any input may be null; fewer than two present inputs is
/// indeterminate. An unknown code yields `UnmappedCode`.
///
/// # Safety
/// Handles must be live; strings must be null or C strings.
#[no_mangle]
pub unsafe extern "C" fn erm_compare_legal_forms(
    forms: *const ErmLegalForms,
    profile: *const ErmProfile,
    code: *const c_char,
    declared_name: *const c_char,
    official_name: *const c_char,
    out: *mut ErmVerdict,
) -> ErmStatus {
    guard(|| {
        let forms = handle(forms, "forms")?;
        let profile = handle(profile, "profile")?;
        let code = opt_text(code, "code")?.map(parse_legal_form_code).transpose()?;
        let form_of = |name: Option<&str>| {
            name.and_then(|n| forms.registry.extract_legal_form(&normalize_name(n, &profile.0)).1)
        };
        let declared = form_of(opt_text(declared_name, "declared_name")?);
        let official = form_of(opt_text(official_name, "official_name")?);
        let verdict = compare_legal_forms(code.as_ref(), declared, official, &forms.codes)?;
        write(
            out,
            match verdict.class {
                VerdictClass::Consistent => ErmVerdict::Consistent,
                VerdictClass::Inconsistent => ErmVerdict::Inconsistent,
                VerdictClass::Indeterminate => ErmVerdict::Indeterminate,
            },
        )
    })
}

/// Reads the label out of a zero-shot classifier response.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn erm_parse_zsc_response(response: *const c_char, out: *mut ErmZscLabel) -> ErmStatus {
    guard(|| {
        let label = match parse_zsc_response(text(response, "response")?).label {
            ZscLabel::Equal => ErmZscLabel::Equal,
            ZscLabel::Different => ErmZscLabel::Different,
            ZscLabel::Unknown => ErmZscLabel::Unknown,
        };
        write(out, label)
    })
}

/// Metrics of a confusion matrix. Fails only on an empty matrix.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn erm_compute_metrics(tp: u64, fp: u64, tn: u64, fn_: u64, out: *mut ErmMetrics) -> ErmStatus {
    guard(|| {
        let row = compute_metrics("ffi", &ConfusionMatrix::new(tp, fp, tn, fn_)).map_err(|e| Failure::arg(e.to_string()))?;
        write(
            out,
            ErmMetrics {
                accuracy: row.accuracy.hundredths(),
                precision: row.precision.hundredths(),
                recall: row.recall.hundredths(),
                f1: row.f1.hundredths(),
                roc_auc: row.roc_auc.hundredths(),
                fpr: row.fpr.hundredths(),
                undefined: METRIC_FIELDS
                    .iter()
                    .enumerate()
                    .filter(|(_, name)| row.undefined.iter().any(|u| u == *name))
                    .fold(0, |mask, (i, _)| mask | 1 << i),
            },
        )
    })
}
