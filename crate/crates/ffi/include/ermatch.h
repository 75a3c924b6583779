#ifndef ERMATCH_H
#define ERMATCH_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  ERM_STATUS_OK = 0,
  ERM_STATUS_NULL_POINTER = 1,
  ERM_STATUS_INVALID_UTF8 = 2,
  ERM_STATUS_INVALID_ARGUMENT = 3,
  /**
   * A legal-form code with no entry in the code map.
   */
  ERM_STATUS_UNMAPPED_CODE = 4,
  ERM_STATUS_IO = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  ERM_STATUS_INTERNAL = 6,
} ErmStatus;

typedef enum {
  ERM_VERDICT_CONSISTENT = 0,
  ERM_VERDICT_INCONSISTENT = 1,
  ERM_VERDICT_INDETERMINATE = 2,
} ErmVerdict;

typedef enum {
  ERM_ZSC_LABEL_EQUAL = 0,
  ERM_ZSC_LABEL_DIFFERENT = 1,
  ERM_ZSC_LABEL_UNKNOWN = 2,
} ErmZscLabel;

/**
 * Opaque legal-form registry together with its code map.
 */
typedef struct ErmLegalForms ErmLegalForms;

/**
 * Opaque normalization profile.
 */
typedef struct ErmProfile ErmProfile;

typedef struct {
  double levenshtein;
  double cosine;
  double jaccard;
} ErmScores;

/**
 * Percentages in hundredths, e.g. 9206 for 92.06%.
 */
typedef struct {
  uint32_t accuracy;
  uint32_t precision;
  uint32_t recall;
  uint32_t f1;
  uint32_t roc_auc;
  uint32_t fpr;
  /**
   * Bit i set when metric i (in field order) had a zero denominator and
   * is reported as 0.
   */
  uint32_t undefined;
} ErmMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *erm_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void erm_string_free(char *s);

/**
 * Library version as a static string.
 */
const char *erm_version(void);

/**
 * Full profile (fold, strip, collapse, uppercase) with the builtin
 * abbreviations; `raw` selects the no-op profile instead.
 *
 * # Safety
 * `out` must be writable.
 */
ErmStatus erm_profile_new(bool raw, ErmProfile **out);

/**
 * Adds `ABBR=EXPANSION` lines to the profile's dictionary.
 *
 * # Safety
 * `profile` must be a live handle and `lines` a C string.
 */
ErmStatus erm_profile_add_abbreviations(ErmProfile *profile, const char *lines);

/**
 * # Safety
 * `profile` must be null or a live handle.
 */
void erm_profile_free(ErmProfile *profile);

/**
 * # Safety
 * Pointers must be valid; `*out` must be freed with [`erm_string_free`].
 */
ErmStatus erm_normalize(const ErmProfile *profile, const char *name, char **out);

/**
 * Edit distance in Unicode scalar values.
 *
 * # Safety
 * Pointers must be valid.
 */
ErmStatus erm_levenshtein_distance(const char *a, const char *b, size_t *out);

/**
 * # Safety
 * Pointers must be valid.
 */
ErmStatus erm_levenshtein_similarity(const char *a, const char *b, double *out);

/**
 * Normalizes both names and scores them with character bigrams for cosine.
 *
 * # Safety
 * Pointers must be valid.
 */
ErmStatus erm_score_pair(const ErmProfile *profile,
                         const char *declared,
                         const char *official,
                         ErmScores *out);

/**
 * Loads a registry and code map from files; a null path selects the builtin
 * table for that part.
 *
 * # Safety
 * Paths must be null or C strings; `out` must be writable.
 */
ErmStatus erm_legal_forms_new(const char *registry_path,
                              const char *codes_path,
                              ErmLegalForms **out);

/**
 * # Safety
 * `forms` must be null or a live handle.
 */
void erm_legal_forms_free(ErmLegalForms *forms);

/**
 * Canonical id of the legal form ending `name`, or null in `*out` when the
 * name carries none. The name is normalized with `profile` first.
 *
 * # Safety
 * Pointers must be valid; a non-null `*out` must be freed with
 * [`erm_string_free`].
 */
ErmStatus erm_extract_legal_form(const ErmLegalForms *forms,
                                 const ErmProfile *profile,
                                 const char *name,
                                 char **out);

/**
 * Compares the legal-form code field with the forms ending the declared and
 * official names. Any input may be null; fewer than two present inputs is
 * indeterminate. An unknown code yields `UnmappedCode`.
 *
 * # Safety
 * Handles must be live; strings must be null or C strings.
 */
ErmStatus erm_compare_legal_forms(const ErmLegalForms *forms,
                                  const ErmProfile *profile,
                                  const char *code,
                                  const char *declared_name,
                                  const char *official_name,
                                  ErmVerdict *out);

/**
 * Reads the label out of a zero-shot classifier response.
 *
 * # Safety
 * Pointers must be valid.
 */
ErmStatus erm_parse_zsc_response(const char *response, ErmZscLabel *out);

/**
 * Metrics of a confusion matrix. Fails only on an empty matrix.
 *
 * # Safety
 * `out` must be writable.
 */
ErmStatus erm_compute_metrics(uint64_t tp, uint64_t fp, uint64_t tn, uint64_t fn_, ErmMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ERMATCH_H */
