#ifndef CASCADE_HYBRID_H
#define CASCADE_HYBRID_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum ChbStatus {
  CHB_STATUS_OK = 0,
  CHB_STATUS_NULL_POINTER = 1,
  CHB_STATUS_INVALID_ARGUMENT = 2,
  CHB_STATUS_DIMENSION_MISMATCH = 3,
  CHB_STATUS_NUMERICAL = 4,
  CHB_STATUS_PARSE = 5,
  CHB_STATUS_BUFFER_TOO_SMALL = 6,
  CHB_STATUS_PANIC = 7,
} ChbStatus;

// Learner variants.
typedef enum ChbPolicy {
  // Relevance and topic coverage.
  CHB_POLICY_HYBRID = 0,
  // Linear relevance only.
  CHB_POLICY_LIN_UCB = 1,
  // Linear on topic and relevance features.
  CHB_POLICY_LIN_UCB_FULL = 2,
  // Topic coverage only.
  CHB_POLICY_LSB = 3,
  // Coverage on topic and clamped relevance features.
  CHB_POLICY_LSB_FULL = 4,
} ChbPolicy;

typedef struct ChbCatalog ChbCatalog;

typedef struct ChbLearner ChbLearner;

typedef struct ChbRng ChbRng;

typedef struct ChbUser ChbUser;

// Outcome of one simulated interaction.
typedef struct ChbStep {
  // 1-based position of the click; `k + 1` when nothing was clicked.
  size_t click_pos;
  // Expected clicks of the displayed list under the true attraction.
  double expected_reward;
  // Attractions that had to be clamped into `[0, 1]`.
  size_t clamp_count;
} ChbStep;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Description of the last failure on this thread. The pointer stays valid
// until the next failing call on the same thread.
const char *chb_last_error(void);

// Builds a catalog of `n_items` items from row-major `n_items x d` topic
// coverage probabilities and `n_items x m` relevance features.
//
// # Safety
// `topic` and `rel` must point to arrays of the stated sizes; `out` must be
// writable.
enum ChbStatus chb_catalog_new(size_t n_items,
                               size_t d,
                               size_t m,
                               const double *topic,
                               const double *rel,
                               struct ChbCatalog **out);

// Number of items in the catalog; 0 for a null handle.
//
// # Safety
// `catalog` must be null or a live handle.
size_t chb_catalog_len(const struct ChbCatalog *catalog);

// # Safety
// `catalog` must be null or a handle not yet freed.
void chb_catalog_free(struct ChbCatalog *catalog);

// Simulated user with topic preference `theta` (length d), relevance
// preference `beta` (length m) and mixing weight `lambda` in `[0, 1]`.
//
// # Safety
// `theta` and `beta` must point to arrays of the stated lengths.
enum ChbStatus chb_user_new(const double *theta,
                            size_t d,
                            const double *beta,
                            size_t m,
                            double lambda,
                            struct ChbUser **out);

// # Safety
// `user` must be null or a handle not yet freed.
void chb_user_free(struct ChbUser *user);

// Random stream of run `(user, repeat)` under `master_seed`; the same
// triple always yields the same stream.
//
// # Safety
// `out` must be writable.
enum ChbStatus chb_rng_new(uint64_t master_seed,
                           uint64_t user,
                           uint64_t repeat,
                           struct ChbRng **out);

// # Safety
// `rng` must be null or a handle not yet freed.
void chb_rng_free(struct ChbRng *rng);

// Fresh learner of kind `policy`, a [`ChbPolicy`] code, over `catalog`
// with exploration `gamma`.
//
// # Safety
// `catalog` must be a live handle and `out` writable.
enum ChbStatus chb_learner_new(const struct ChbCatalog *catalog,
                               uint32_t policy,
                               double gamma,
                               struct ChbLearner **out);

// # Safety
// `learner` must be null or a handle not yet freed.
void chb_learner_free(struct ChbLearner *learner);

// Topic and relevance dimensions the learner estimates.
//
// # Safety
// `learner` must be a live handle; `d` and `m` writable.
enum ChbStatus chb_learner_dims(const struct ChbLearner *learner, size_t *d, size_t *m);

// Writes the `k` item ids of the learner's next list to `out_ids`.
//
// # Safety
// `out_ids` must have room for `k` entries.
enum ChbStatus chb_learner_select(const struct ChbLearner *learner, size_t k, size_t *out_ids);

// Learns from a displayed list of `k` ids and the 1-based click position
// (`k + 1` for no click).
//
// # Safety
// `ids` must point to `k` entries.
enum ChbStatus chb_learner_update(struct ChbLearner *learner,
                                  const size_t *ids,
                                  size_t k,
                                  size_t click_pos);

// Current estimates: `theta_hat` (length d) and `beta_hat` (length m).
//
// # Safety
// The output arrays must have the lengths passed; lengths must match the
// learner's dimensions.
enum ChbStatus chb_learner_estimate(const struct ChbLearner *learner,
                                    double *theta_out,
                                    size_t d,
                                    double *beta_out,
                                    size_t m);

// Writes the learner state as versioned text plus a terminating NUL. The
// size needed, NUL included, is always stored in `needed`; a buffer that
// is too small (or null) yields `BufferTooSmall` and is left untouched.
//
// # Safety
// `buf` must be null or have room for `len` bytes; `needed` writable.
enum ChbStatus chb_learner_snapshot(const struct ChbLearner *learner,
                                    char *buf,
                                    size_t len,
                                    size_t *needed);

// Learner of kind `policy` (a [`ChbPolicy`] code) over `catalog` resumed from a snapshot.
//
// # Safety
// `snapshot` must be a NUL-terminated string; `catalog` a live handle.
enum ChbStatus chb_learner_restore(const struct ChbCatalog *catalog,
                                   uint32_t policy,
                                   const char *snapshot,
                                   struct ChbLearner **out);

// One interaction: the learner shows `k` items to `user`, a click is drawn
// from `rng` and the learner is updated. The displayed ids go to `out_ids`
// when it is not null.
//
// # Safety
// All handles must be live; `out_ids` null or with room for `k` entries.
enum ChbStatus chb_env_step(struct ChbLearner *learner,
                            const struct ChbUser *user,
                            const struct ChbCatalog *catalog,
                            size_t k,
                            struct ChbRng *rng,
                            struct ChbStep *out,
                            size_t *out_ids);

// Expected clicks of the greedy benchmark list of length `k`; its ids go to
// `out_ids` when it is not null.
//
// # Safety
// Handles must be live; `reward` writable; `out_ids` null or with room for
// `k` entries.
enum ChbStatus chb_greedy_reward(const struct ChbUser *user,
                                 const struct ChbCatalog *catalog,
                                 size_t k,
                                 double *reward,
                                 size_t *out_ids);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CASCADE_HYBRID_H */
