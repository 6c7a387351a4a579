#ifndef CSQPT_H
#define CSQPT_H

#pragma once

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum csqpt_status {
  CSQPT_STATUS_OK = 0,
  CSQPT_STATUS_NULL_POINTER = 1,
  CSQPT_STATUS_INVALID_ARGUMENT = 2,
  CSQPT_STATUS_CONFIG = 3,
  /**
   * Non-PSD drift, invalid process or failed numerics.
   */
  CSQPT_STATUS_NUMERIC = 4,
  CSQPT_STATUS_UNDEFINED_PHASE = 5,
  CSQPT_STATUS_IO = 6,
  CSQPT_STATUS_PANIC = 7,
  CSQPT_STATUS_OTHER = 8,
} csqpt_status;

/**
 * Process tensor `E_kl^mn`.
 */
typedef struct csqpt_process csqpt_process;

/**
 * Density matrix truncated at some `n_max`.
 */
typedef struct csqpt_state csqpt_state;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the
 * next failing call on the same thread; do not free.
 */
const char *csqpt_last_error(void);

/**
 * Library version as a static string.
 */
const char *csqpt_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library and not yet freed.
 */
void csqpt_string_free(char *s);

/**
 * Coherent state `|α⟩` with `α = re + i·im`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum csqpt_status csqpt_state_coherent(double re,
                                       double im,
                                       size_t n_max,
                                       struct csqpt_state **out);

/**
 * Pure squeezed vacuum, `±|squeezing_db|` about vacuum noise. `phase` is the
 * argument of the squeezing parameter; the squeezed quadrature sits at half of it.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum csqpt_status csqpt_state_squeezed_vacuum(double squeezing_db,
                                              double phase,
                                              size_t n_max,
                                              struct csqpt_state **out);

/**
 * Parses the density-matrix JSON format written by the CLI.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum csqpt_status csqpt_state_from_json(const char *json, struct csqpt_state **out);

/**
 * # Safety
 * `state` must be a live handle; `out` must be writable.
 */
enum csqpt_status csqpt_state_to_json(const struct csqpt_state *state, char **out);

/**
 * # Safety
 * `state` must be null or a handle from this library, freed at most once.
 */
void csqpt_state_free(struct csqpt_state *state);

/**
 * Matrix size `n_max + 1`, or 0 for a null handle.
 *
 * # Safety
 * `state` must be null or a live handle.
 */
size_t csqpt_state_size(const struct csqpt_state *state);

/**
 * Element `ρ_mn`.
 *
 * # Safety
 * `state` must be a live handle; `re` and `im` must be writable.
 */
enum csqpt_status csqpt_state_element(const struct csqpt_state *state,
                                      size_t m,
                                      size_t n,
                                      double *re,
                                      double *im);

/**
 * Uhlmann fidelity between two states of equal dimension.
 *
 * # Safety
 * `a` and `b` must be live handles; `out` must be writable.
 */
enum csqpt_status csqpt_state_fidelity(const struct csqpt_state *a,
                                       const struct csqpt_state *b,
                                       double *out);

/**
 * Closed-form phase-shift-and-loss process.
 *
 * # Safety
 * `out` must be writable.
 */
enum csqpt_status csqpt_process_oracle(double phase_shift,
                                       double transmission,
                                       size_t n_max,
                                       struct csqpt_process **out);

/**
 * Parses the tensor JSON format written by the CLI.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum csqpt_status csqpt_process_from_json(const char *json, struct csqpt_process **out);

/**
 * # Safety
 * `process` must be a live handle; `out` must be writable.
 */
enum csqpt_status csqpt_process_to_json(const struct csqpt_process *process, char **out);

/**
 * # Safety
 * `process` must be null or a handle from this library, freed at most once.
 */
void csqpt_process_free(struct csqpt_process *process);

/**
 * Element `E_kl^mn`.
 *
 * # Safety
 * `process` must be a live handle; `re` and `im` must be writable.
 */
enum csqpt_status csqpt_process_element(const struct csqpt_process *process,
                                        size_t k,
                                        size_t l,
                                        size_t m,
                                        size_t n,
                                        double *re,
                                        double *im);

/**
 * Applies a process to a state. The output is returned unnormalized;
 * its trace goes to `trace` when that pointer is non-null.
 *
 * # Safety
 * `process` and `state` must be live handles; `out` must be writable;
 * `trace` may be null.
 */
enum csqpt_status csqpt_process_apply(const struct csqpt_process *process,
                                      const struct csqpt_state *state,
                                      struct csqpt_state **out,
                                      double *trace);

/**
 * Jamiolkowski fidelity of two processes.
 *
 * # Safety
 * `a` and `b` must be live handles; `out` must be writable.
 */
enum csqpt_status csqpt_process_fidelity(const struct csqpt_process *a,
                                         const struct csqpt_process *b,
                                         double *out);

/**
 * Phase of output element `ρ_kl` for input `state`. Returns
 * `UndefinedPhase` when the element is indistinguishable from zero.
 *
 * # Safety
 * `process` and `state` must be live handles; `out` must be writable.
 */
enum csqpt_status csqpt_output_phase(const struct csqpt_process *process,
                                     const struct csqpt_state *state,
                                     size_t k,
                                     size_t l,
                                     double *out);

/**
 * Output squeezing and antisqueezing, in dB relative to vacuum, and the
 * rotation of the squeezed axis for a pure squeezed-vacuum input.
 *
 * # Safety
 * `process` must be a live handle; the three outputs must be writable.
 */
enum csqpt_status csqpt_predict_squeezed(const struct csqpt_process *process,
                                         double squeezing_db,
                                         double phase,
                                         double *min_db,
                                         double *max_db,
                                         double *axis_shift);

/**
 * Runs one experiment (`state-demo`, `csqpt`, `squeezed-predict`,
 * `bootstrap` or `sweep-signal-power`) into `out_dir`, as the CLI does.
 * `config_toml` may be null for defaults; a non-negative `seed` overrides
 * the config's. The manifest summary is returned as JSON in `summary`
 * when that pointer is non-null.
 *
 * # Safety
 * String arguments must be NUL-terminated; `summary` may be null.
 */
enum csqpt_status csqpt_run(const char *experiment,
                            const char *config_toml,
                            int64_t seed,
                            const char *out_dir,
                            char **summary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CSQPT_H */
