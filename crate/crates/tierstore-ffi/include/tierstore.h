/* C interface to the tierstore two-tier storage simulator and codec. */

#ifndef TIERSTORE_H
#define TIERSTORE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call. Anything but `Ok` leaves a description
// in [`tierstore_last_error`].
typedef enum TierstoreStatus {
  TIERSTORE_STATUS_OK = 0,
  // A required pointer argument was NULL.
  TIERSTORE_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  TIERSTORE_STATUS_UTF8 = 2,
  // Code or scenario parameters were rejected.
  TIERSTORE_STATUS_INVALID_PARAMS = 3,
  // The scenario JSON did not parse or validate.
  TIERSTORE_STATUS_BAD_SCENARIO = 4,
  // A buffer length or node index disagrees with the code's geometry.
  TIERSTORE_STATUS_BAD_INPUT = 5,
  // The codec refused the operation (dependent points, wrong counts).
  TIERSTORE_STATUS_CODEC_FAILURE = 6,
  // An unknown mutation or check name was supplied.
  TIERSTORE_STATUS_UNKNOWN_NAME = 7,
  // Serialization failed; indicates a bug in this library.
  TIERSTORE_STATUS_INTERNAL = 8,
} TierstoreStatus;

// Opaque handle to a regenerating code.
typedef struct TierstoreCode TierstoreCode;

// Opaque handle to one executed scenario: its trace and parameters.
typedef struct TierstoreRun TierstoreRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Description of the most recent failure on the calling thread. The
// pointer stays valid until the next failing call on the same thread;
// never free it.
const char *tierstore_last_error(void);

// Frees a string returned through any `char **` out-parameter. NULL is
// ignored.
//
// # Safety
// `s` must be a pointer previously written by this library and not yet
// freed.
void tierstore_string_free(char *s);

// Builds a regenerating code over `n` nodes with reconstruction degree
// `k`, repair degree `d`, `beta` stripes, and prime field modulus `q`,
// and writes its handle to `out`. Requires `1 <= k <= d`, `k <= n`, and
// `q > n`; release the handle with [`tierstore_code_free`].
//
// # Safety
// `out` must point to writable storage for one pointer.
enum TierstoreStatus tierstore_code_new(uint32_t n,
                                        uint32_t k,
                                        uint32_t d,
                                        uint32_t beta,
                                        uint64_t q,
                                        struct TierstoreCode **out);

// Releases a code handle. NULL is ignored.
//
// # Safety
// `code` must come from [`tierstore_code_new`] and not be used afterward.
void tierstore_code_free(struct TierstoreCode *code);

// Number of nodes `n`; 0 if `code` is NULL.
//
// # Safety
// `code` must be NULL or a live handle from [`tierstore_code_new`].
uint32_t tierstore_code_nodes(const struct TierstoreCode *code);

// Symbols per stored element, `alpha = d * beta`; 0 if `code` is NULL.
//
// # Safety
// `code` must be NULL or a live handle from [`tierstore_code_new`].
uint32_t tierstore_code_element_len(const struct TierstoreCode *code);

// Symbols per value, `b`; 0 if `code` is NULL.
//
// # Safety
// `code` must be NULL or a live handle from [`tierstore_code_new`].
uint32_t tierstore_code_value_len(const struct TierstoreCode *code);

// Symbols per repair helper, `beta`; 0 if `code` is NULL.
//
// # Safety
// `code` must be NULL or a live handle from [`tierstore_code_new`].
uint32_t tierstore_code_helper_len(const struct TierstoreCode *code);

// Encodes a value of `value_len == b` symbols into all `n` elements,
// written to `elements_out` as `n * alpha` symbols, node 1 first.
//
// # Safety
// `value` must hold `value_len` readable symbols and `elements_out` must
// hold `elements_len` writable symbols.
enum TierstoreStatus tierstore_code_encode(const struct TierstoreCode *code,
                                           const uint64_t *value,
                                           size_t value_len,
                                           uint64_t *elements_out,
                                           size_t elements_len);

// Decodes a value from `count >= k` elements. `nodes` names the 1-based
// node of each element; `elements` concatenates the elements in the same
// order, `count * alpha` symbols in all.
//
// # Safety
// `nodes` must hold `count` readable indices, `elements` must hold
// `count * alpha` readable symbols, and `value_out` must hold
// `value_len` writable symbols.
enum TierstoreStatus tierstore_code_decode(const struct TierstoreCode *code,
                                           const uint32_t *nodes,
                                           const uint64_t *elements,
                                           size_t count,
                                           uint64_t *value_out,
                                           size_t value_len);

// Computes the repair helper a node derives from its own element for the
// 1-based `target` node: `helper_len == beta` symbols.
//
// # Safety
// `element` must hold `element_len` readable symbols and `helper_out`
// must hold `helper_len` writable symbols.
enum TierstoreStatus tierstore_code_helper(const struct TierstoreCode *code,
                                           const uint64_t *element,
                                           size_t element_len,
                                           uint32_t target,
                                           uint64_t *helper_out,
                                           size_t helper_len);

// Rebuilds the 1-based `target` node's element from `count >= d` helpers.
// `helper_nodes` names the 1-based sender of each helper; `helpers`
// concatenates the helpers in the same order, `count * beta` symbols.
//
// # Safety
// `helper_nodes` must hold `count` readable indices, `helpers` must hold
// `count * beta` readable symbols, and `element_out` must hold
// `element_len` writable symbols.
enum TierstoreStatus tierstore_code_regenerate(const struct TierstoreCode *code,
                                               uint32_t target,
                                               const uint32_t *helper_nodes,
                                               const uint64_t *helpers,
                                               size_t count,
                                               uint64_t *element_out,
                                               size_t element_len);

// Parses a scenario from JSON, executes it, and writes the run handle to
// `out`. `mutation` is NULL for a faithful run or one of the planted
// defect names (`skip-broadcast-wait`, `ack-at-k`, `skip-write-back`,
// `allow-tc-decrease`, `decode-k-minus-1`). Release the handle with
// [`tierstore_run_free`].
//
// # Safety
// `scenario_json` must be a NUL-terminated string, `mutation` NULL or
// the same, and `out` must point to writable storage for one pointer.
enum TierstoreStatus tierstore_run_scenario(const char *scenario_json,
                                            const char *mutation,
                                            struct TierstoreRun **out);

// Releases a run handle. NULL is ignored.
//
// # Safety
// `run` must come from [`tierstore_run_scenario`] and not be used
// afterward.
void tierstore_run_free(struct TierstoreRun *run);

// Number of trace records in the run; 0 if `run` is NULL.
//
// # Safety
// `run` must be NULL or a live handle from [`tierstore_run_scenario`].
uint64_t tierstore_run_record_count(const struct TierstoreRun *run);

// Messages still in flight when the run ended; 0 if `run` is NULL.
//
// # Safety
// `run` must be NULL or a live handle from [`tierstore_run_scenario`].
uint64_t tierstore_run_undelivered(const struct TierstoreRun *run);

// Checks the run's trace and reports the verdict. `checks` is NULL for
// all checks or a comma-separated subset of `atomicity`, `liveness`,
// `invariants`, `latency`, `costs`. Writes overall pass/fail to
// `pass_out` and, when `json_out` is non-NULL, the full verdict as JSON;
// free it with [`tierstore_string_free`].
//
// # Safety
// `run` must be a live handle, `checks` NULL or a NUL-terminated string,
// `pass_out` NULL or writable, and `json_out` NULL or writable.
enum TierstoreStatus tierstore_run_verdict_json(const struct TierstoreRun *run,
                                                const char *checks,
                                                bool *pass_out,
                                                char **json_out);

// Writes the run's trace as JSON Lines, one record per line; free the
// string with [`tierstore_string_free`].
//
// # Safety
// `run` must be a live handle and `out` must point to writable storage
// for one pointer.
enum TierstoreStatus tierstore_run_trace_jsonl(const struct TierstoreRun *run, char **out);

// Writes the run's per-operation cost table as CSV; free the string with
// [`tierstore_string_free`].
//
// # Safety
// `run` must be a live handle and `out` must point to writable storage
// for one pointer.
enum TierstoreStatus tierstore_run_ops_csv(const struct TierstoreRun *run, char **out);

// Writes the run's storage timeline as CSV; free the string with
// [`tierstore_string_free`].
//
// # Safety
// `run` must be a live handle and `out` must point to writable storage
// for one pointer.
enum TierstoreStatus tierstore_run_storage_csv(const struct TierstoreRun *run, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TIERSTORE_H */
