/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef MRAC_H
#define MRAC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MracStatus {
  MRAC_STATUS_OK = 0,
  MRAC_STATUS_NULL_POINTER = 1,
  MRAC_STATUS_INVALID_ARGUMENT = 2,
  MRAC_STATUS_CONFIG_ERROR = 3,
  MRAC_STATUS_RUNTIME_ERROR = 4,
  MRAC_STATUS_OUT_OF_RANGE = 5,
  MRAC_STATUS_PANIC = 6,
} MracStatus;

/**
 * A factored Bernoulli belief over grid cells with a fixed sensor model.
 */
typedef struct MracBelief MracBelief;

/**
 * A validated run configuration.
 */
typedef struct MracConfig MracConfig;

/**
 * The outcome of one simulated episode.
 */
typedef struct MracEpisode MracEpisode;

typedef struct MracEpisodeSummary {
  uint64_t seed;
  uint32_t horizon;
  uint32_t not_ac_count;
  uint32_t comm_count;
  double mean_j;
  uint64_t evaluated;
} MracEpisodeSummary;

/**
 * One step of an episode. Probabilities that the algorithm does not
 * report are NaN.
 */
typedef struct MracStepRecord {
  uint32_t t;
  uint32_t action_r;
  uint32_t action_rp;
  bool not_ac;
  uint32_t comms;
  uint32_t rounds;
  double j_r;
  double j_rp;
  uint32_t p_r;
  uint32_t p_rp;
  bool declared;
  bool forced;
  double p_ac;
  double p_not_ac;
  double p_comm;
  double p_ac_lb;
  double p_ac_ub;
  uint64_t evaluated;
} MracStepRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL after a
 * successful call. The pointer stays valid until the next call on the
 * same thread.
 */
const char *mrac_last_error(void);

/**
 * Parses a TOML run configuration.
 *
 * # Safety
 * `toml` must be a NUL-terminated UTF-8 string and `out` a valid pointer.
 */
enum MracStatus mrac_config_from_toml(const char *toml, struct MracConfig **out);

/**
 * # Safety
 * `config` must come from [`mrac_config_from_toml`] or be NULL.
 */
void mrac_config_free(struct MracConfig *config);

/**
 * Number of seeds listed in the configuration.
 *
 * # Safety
 * `config` must be a live handle and `out` a valid pointer.
 */
enum MracStatus mrac_config_seed_count(const struct MracConfig *config, size_t *out);

/**
 * Runs one episode of the configured scenario and algorithm.
 *
 * # Safety
 * `config` must be a live handle and `out` a valid pointer.
 */
enum MracStatus mrac_run_episode(const struct MracConfig *config,
                                 uint64_t seed,
                                 struct MracEpisode **out);

/**
 * # Safety
 * `episode` must come from [`mrac_run_episode`] or be NULL.
 */
void mrac_episode_free(struct MracEpisode *episode);

/**
 * # Safety
 * `episode` must be a live handle and `out` a valid pointer.
 */
enum MracStatus mrac_episode_summary(const struct MracEpisode *episode,
                                     struct MracEpisodeSummary *out);

/**
 * Copies step `index` (zero-based; step `t = index + 1`).
 *
 * # Safety
 * `episode` must be a live handle and `out` a valid pointer.
 */
enum MracStatus mrac_episode_step(const struct MracEpisode *episode,
                                  size_t index,
                                  struct MracStepRecord *out);

/**
 * A belief of `cells` cells, each with prior `p`, under the sensor model
 * `(p_detect, p_false_alarm)`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum MracStatus mrac_belief_new(size_t cells,
                                double p,
                                double p_detect,
                                double p_false_alarm,
                                struct MracBelief **out);

/**
 * # Safety
 * `belief` must come from [`mrac_belief_new`] or be NULL.
 */
void mrac_belief_free(struct MracBelief *belief);

/**
 * # Safety
 * `belief` must be a live handle and `out` a valid pointer.
 */
enum MracStatus mrac_belief_get(const struct MracBelief *belief, size_t cell, double *out);

/**
 * Bayes update of one cell with a binary observation.
 *
 * # Safety
 * `belief` must be a live handle.
 */
enum MracStatus mrac_belief_update(struct MracBelief *belief, size_t cell, bool value);

/**
 * Removes a previously applied observation of one cell.
 *
 * # Safety
 * `belief` must be a live handle.
 */
enum MracStatus mrac_belief_downdate(struct MracBelief *belief, size_t cell, bool value);

/**
 * Negative entropy of the belief, in nats.
 *
 * # Safety
 * `belief` must be a live handle and `out` a valid pointer.
 */
enum MracStatus mrac_belief_entropy_reward(const struct MracBelief *belief, double *out);

/**
 * Hoeffding half-width `sqrt(ln(2/delta) / 2n)`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum MracStatus mrac_hoeffding_half_width(size_t n, double delta, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MRAC_H */
