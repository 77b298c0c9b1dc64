#ifndef EAKROUTE_H
#define EAKROUTE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call. Values 3 to 8 match the CLI exit codes.
 */
typedef enum EakrStatus {
  EAKR_STATUS_OK = 0,
  EAKR_STATUS_NULL_ARGUMENT = 1,
  EAKR_STATUS_INVALID_UTF8 = 2,
  EAKR_STATUS_CONFIG = 3,
  EAKR_STATUS_UNREACHABLE = 4,
  EAKR_STATUS_NON_CONVERGENCE = 5,
  EAKR_STATUS_PROTOCOL = 6,
  EAKR_STATUS_IO = 7,
  EAKR_STATUS_MODE_MISMATCH = 8,
  EAKR_STATUS_SIMULATION = 9,
  EAKR_STATUS_UNKNOWN_COMMAND = 10,
  EAKR_STATUS_NOT_RUN = 11,
  EAKR_STATUS_NO_SUCH_FILE = 12,
  EAKR_STATUS_PANIC = 13,
} EakrStatus;

/**
 * Opaque to C callers.
 */
typedef struct EakrScenario EakrScenario;

/**
 * Parses a JSON scenario config. On success `*out` receives a handle that
 * must be released with `eakr_scenario_free`.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum EakrStatus eakr_scenario_from_json(const char *json, struct EakrScenario **out);

/**
 * Overrides the master seed. Clears any previous run.
 *
 * # Safety
 * `h` must come from `eakr_scenario_from_json`.
 */
enum EakrStatus eakr_scenario_set_seed(struct EakrScenario *h, uint64_t seed);

/**
 * Runs one pipeline command: generate, eka, keys, routes, mc, adversary
 * or all. Outputs stay in the handle until the next run.
 *
 * # Safety
 * `h` must come from `eakr_scenario_from_json`; `command` must be a
 * NUL-terminated string.
 */
enum EakrStatus eakr_scenario_run(struct EakrScenario *h, const char *command);

/**
 * Number of files produced by the last run.
 *
 * # Safety
 * `h` must come from `eakr_scenario_from_json`; `out` must be valid.
 */
enum EakrStatus eakr_scenario_file_count(const struct EakrScenario *h, size_t *out);

/**
 * Name of the `index`-th output file in sorted order. Free the result
 * with `eakr_string_free`.
 *
 * # Safety
 * `h` must come from `eakr_scenario_from_json`; `out` must be valid.
 */
enum EakrStatus eakr_scenario_file_name(const struct EakrScenario *h, size_t index, char **out);

/**
 * Contents of one output file, e.g. "eak.json". Free the result with
 * `eakr_string_free`.
 *
 * # Safety
 * `h` must come from `eakr_scenario_from_json`; `name` must be a
 * NUL-terminated string and `out` valid.
 */
enum EakrStatus eakr_scenario_file(const struct EakrScenario *h, const char *name, char **out);

/**
 * SHA-256 manifest of the last run's outputs.
 *
 * # Safety
 * `h` must come from `eakr_scenario_from_json`; `out` must be valid.
 */
enum EakrStatus eakr_scenario_manifest(const struct EakrScenario *h, char **out);

/**
 * Writes the last run's outputs into `dir`, creating it if needed.
 *
 * # Safety
 * `h` must come from `eakr_scenario_from_json`; `dir` must be a
 * NUL-terminated string.
 */
enum EakrStatus eakr_scenario_write(const struct EakrScenario *h, const char *dir);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `h` must come from `eakr_scenario_from_json` and not be used afterwards.
 */
void eakr_scenario_free(struct EakrScenario *h);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void eakr_string_free(char *s);

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call into the library on the same thread.
 */
const char *eakr_last_error(void);

/**
 * Library version as a static string.
 */
const char *eakr_version(void);

#endif  /* EAKROUTE_H */
