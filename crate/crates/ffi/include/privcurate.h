#ifndef PRIVCURATE_H
#define PRIVCURATE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every `pc_*` function.
typedef enum PcStatus {
  PC_STATUS_OK = 0,
  PC_STATUS_NULL_POINTER = 1,
  PC_STATUS_INVALID_UTF8 = 2,
  // Malformed input, bad configuration or a violated precondition.
  PC_STATUS_INVALID = 3,
  PC_STATUS_IO = 4,
  // The ledger refused a release; nothing was recorded.
  PC_STATUS_BUDGET_REFUSED = 5,
  PC_STATUS_NOT_FOUND = 6,
  // A Rust panic was caught at the boundary.
  PC_STATUS_INTERNAL = 7,
} PcStatus;

// A document collection and its update history.
typedef struct PcCorpus PcCorpus;

// A privacy budget ledger.
typedef struct PcLedger PcLedger;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Returns a copy of the calling thread's last error message, or NULL when
// the last call succeeded. Free it with `pc_string_free`.
char *pc_last_error(void);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and must not be used afterwards.
void pc_string_free(char *s);

// Creates an empty corpus.
//
// # Safety
// `out` must be a valid pointer.
enum PcStatus pc_corpus_new(struct PcCorpus **out);

// Loads a corpus from a record file or a history directory.
//
// # Safety
// `path` must be a NUL-terminated string; `out` a valid pointer.
enum PcStatus pc_corpus_load(const char *path, struct PcCorpus **out);

// Applies one update given as line-delimited records. `update_index` must
// equal the corpus epoch. On failure the corpus is unchanged.
//
// # Safety
// `corpus` must be a live handle and `records` a NUL-terminated string.
enum PcStatus pc_corpus_apply(struct PcCorpus *corpus, const char *records, uint64_t update_index);

// # Safety
// `corpus` must be a live handle; `out` a valid pointer.
enum PcStatus pc_corpus_len(const struct PcCorpus *corpus, size_t *out);

// Number of updates applied so far.
//
// # Safety
// `corpus` must be a live handle; `out` a valid pointer.
enum PcStatus pc_corpus_epoch(const struct PcCorpus *corpus, uint64_t *out);

// # Safety
// `corpus` must come from this library and not be used afterwards. NULL is
// ignored.
void pc_corpus_free(struct PcCorpus *corpus);

// Detected spans of one document as a JSON array. `config_json` may be NULL
// for the default detector.
//
// # Safety
// Pointers must be valid; strings NUL-terminated.
enum PcStatus pc_detect(const struct PcCorpus *corpus,
                        const char *doc_id,
                        const char *config_json,
                        char **out_json);

// Disclosure probabilities and losses of one document as JSON.
//
// # Safety
// Pointers must be valid; strings NUL-terminated.
enum PcStatus pc_assess(const struct PcCorpus *corpus,
                        const char *doc_id,
                        const char *config_json,
                        char **out_json);

// Total loss for given content and metadata disclosure probabilities.
//
// # Safety
// `out` must be a valid pointer.
enum PcStatus pc_privacy_loss(double p_content, double p_metadata, double *out);

// Shannon entropy in bits of one distribution, scaled by `weight`. An
// empty distribution has entropy 0.
//
// # Safety
// `probabilities` must point to `len` doubles (or be NULL with `len` 0).
enum PcStatus pc_entropy(const double *probabilities, size_t len, double weight, double *out);

// Weighted entropy of a JSON array of groups
// (`[{"label": .., "weight": .., "outcomes": [[name, p], ..]}]`).
//
// # Safety
// `groups_json` must be NUL-terminated; `out` valid.
enum PcStatus pc_entropy_groups(const char *groups_json, double *out);

// Laplace release of a JSON query. Writes `{"release": .., "receipt": ..}`.
// The ledger is not consulted; pass the receipt to `pc_ledger_authorize`.
//
// # Safety
// Pointers must be valid; strings NUL-terminated.
enum PcStatus pc_laplace_release(const struct PcCorpus *corpus,
                                 const char *query_json,
                                 double epsilon,
                                 uint64_t seed,
                                 bool test_mode,
                                 char **out_json);

// # Safety
// `out` must be a valid pointer.
enum PcStatus pc_ledger_new(double epsilon_budget, struct PcLedger **out);

// # Safety
// `path` must be NUL-terminated; `out` valid.
enum PcStatus pc_ledger_load(const char *path, struct PcLedger **out);

// Writes the ledger atomically.
//
// # Safety
// `ledger` must be a live handle; `path` NUL-terminated.
enum PcStatus pc_ledger_save(const struct PcLedger *ledger, const char *path);

// # Safety
// `ledger` must be a live handle; outputs valid.
enum PcStatus pc_ledger_epsilon(const struct PcLedger *ledger, double *spent, double *remaining);

// Records a JSON receipt if the budget allows it; otherwise returns
// `PC_STATUS_BUDGET_REFUSED` and leaves the ledger unchanged.
//
// # Safety
// `ledger` must be a live handle; `receipt_json` NUL-terminated.
enum PcStatus pc_ledger_authorize(struct PcLedger *ledger, const char *receipt_json);

// Post-hoc analysis report as JSON.
//
// # Safety
// `ledger` must be a live handle; `out_json` valid.
enum PcStatus pc_ledger_analyze(const struct PcLedger *ledger, char **out_json);

// # Safety
// `ledger` must come from this library and not be used afterwards. NULL is
// ignored.
void pc_ledger_free(struct PcLedger *ledger);

// Runs one update cycle: applies `records` as update `update_index`,
// transforms and assesses the changed documents, runs the configured
// releases and records entropy. `config_json` is a cycle configuration,
// e.g. `{"transform": "MASK", "seed": 7, "releases": [..]}`;
// `key` (may be NULL) is the pseudonymization key. Both handles are
// updated only when the whole cycle succeeds.
//
// # Safety
// Handles must be live; strings NUL-terminated; `out_json` valid.
enum PcStatus pc_run_cycle(struct PcCorpus *corpus,
                           struct PcLedger *ledger,
                           const char *records,
                           uint64_t update_index,
                           const char *config_json,
                           const char *key,
                           char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PRIVCURATE_H */
