#ifndef QOC_FFI_H
#define QOC_FFI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QocStatus {
  QOC_STATUS_OK = 0,
  QOC_STATUS_NULL_ARGUMENT = 1,
  QOC_STATUS_INVALID_UTF8 = 2,
  QOC_STATUS_PARSE = 3,
  QOC_STATUS_VALIDATION = 4,
  QOC_STATUS_STATE = 5,
  QOC_STATUS_NOT_FOUND = 6,
  QOC_STATUS_BACKEND = 7,
  QOC_STATUS_DOMAIN = 8,
  QOC_STATUS_IO = 9,
  QOC_STATUS_PANIC = 10,
} QocStatus;

typedef enum QocVoteState {
  QOC_VOTE_STATE_OPEN = 0,
  QOC_VOTE_STATE_CLOSED = 1,
  QOC_VOTE_STATE_AWAITING_HUMAN_DECISION = 2,
  QOC_VOTE_STATE_DECIDED = 3,
} QocVoteState;

// Opaque vote handle.
typedef struct QocVote QocVote;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or NULL.
const char *qoc_last_error(void);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void qoc_string_free(char *s);

// Library version, statically allocated.
const char *qoc_version(void);

// Opens a vote with the proposal's id as vote id.
//
// `config_toml` is a governance configuration; `proposal_json` holds `id`,
// `title`, `body` and `created_at` (plus optional `proposer`,
// `requested_amount`).
//
// # Safety
// String arguments must be NUL-terminated; `out` must be writable.
enum QocStatus qoc_vote_open(const char *config_toml,
                             const char *proposal_json,
                             const char *at,
                             struct QocVote **out);

// Restores a vote saved with `qoc_vote_to_json`. The ledger must verify.
//
// # Safety
// As for `qoc_vote_open`.
enum QocStatus qoc_vote_from_json(const char *vote_json, struct QocVote **out);

// Frees a vote. NULL is ignored.
//
// # Safety
// `vote` must come from `qoc_vote_open`/`qoc_vote_from_json` and not have been freed.
void qoc_vote_free(struct QocVote *vote);

// Submits a human ballot: `{"voter", "voting_power", "evaluations": {option: {criterion: 0..100}}}`.
//
// # Safety
// `vote` must be a live handle; strings NUL-terminated.
enum QocStatus qoc_vote_submit_ballot(struct QocVote *vote,
                                      const char *ballot_json,
                                      const char *at);

// Runs the agents of a mode-2/3 vote. `backend` is "mock" or "http"
// (configured through QOC_BACKEND_URL / QOC_BACKEND_TOKEN).
//
// # Safety
// `vote` must be a live handle; strings NUL-terminated.
enum QocStatus qoc_vote_run_agents(struct QocVote *vote, const char *backend_name, const char *at);

// Closes the vote, running the agents first when the mode needs them.
//
// # Safety
// `vote` must be a live handle; strings NUL-terminated.
enum QocStatus qoc_vote_close(struct QocVote *vote, const char *backend_name, const char *at);

// Records the human decision ("yes" or "no") on a human-in-the-loop vote.
//
// # Safety
// `vote` must be a live handle; strings NUL-terminated.
enum QocStatus qoc_vote_decide(struct QocVote *vote,
                               const char *winner,
                               const char *actor,
                               const char *at);

// # Safety
// `vote` must be a live handle; `out` writable.
enum QocStatus qoc_vote_state(const struct QocVote *vote, enum QocVoteState *out);

// Decision report as JSON. Fails with `QOC_STATUS_STATE` before the vote is decided.
//
// # Safety
// `vote` must be a live handle; `out` writable.
enum QocStatus qoc_vote_report_json(const struct QocVote *vote, char **out);

// The vote's ledger, one JSON record per line.
//
// # Safety
// `vote` must be a live handle; `out` writable.
enum QocStatus qoc_vote_ledger_ndjson(const struct QocVote *vote, char **out);

// Whole vote state as JSON, for `qoc_vote_from_json`.
//
// # Safety
// `vote` must be a live handle; `out` writable.
enum QocStatus qoc_vote_to_json(const struct QocVote *vote, char **out);

// Verifies a ledger. Tampering is a result, not an error: `out_valid` is
// false and `out_first_break` the index of the first bad record (-1 when valid).
//
// # Safety
// `ndjson` NUL-terminated; out-pointers writable.
enum QocStatus qoc_ledger_verify(const char *ndjson, bool *out_valid, int64_t *out_first_break);

// Uncorrected McNemar test on a 2×2 table (rows AI yes/no, columns DAO yes/no).
//
// # Safety
// Out-pointers must be writable.
enum QocStatus qoc_mcnemar(uint64_t yy,
                           uint64_t yn,
                           uint64_t ny,
                           uint64_t nn,
                           double *out_chi_square,
                           double *out_p_value);

// c = fn_weight · ny + fp_weight · yn.
//
// # Safety
// `out` must be writable.
enum QocStatus qoc_cost(uint64_t ny, uint64_t yn, double fn_weight, double fp_weight, double *out);

// S(o) = Σ w_j · e_j for one option. `weights_json` maps criterion to
// weight in (0, 100]; `scores_json` maps the same criteria to 0..100.
//
// # Safety
// Strings NUL-terminated; `out` writable.
enum QocStatus qoc_score(const char *weights_json, const char *scores_json, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QOC_FFI_H */
