#ifndef BISIMLEARN_H
#define BISIMLEARN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BisimStatus {
  BISIM_STATUS_OK = 0,
  BISIM_STATUS_NULL_POINTER = 1,
  BISIM_STATUS_INVALID_UTF8 = 2,
  BISIM_STATUS_PARSE = 3,
  BISIM_STATUS_LEARN_FAILED = 4,
  BISIM_STATUS_SOLVER = 5,
  BISIM_STATUS_CHECK = 6,
  BISIM_STATUS_INVALID_ARGUMENT = 7,
  BISIM_STATUS_PANIC = 8,
} BisimStatus;

/**
 * A classifier with concrete parameters, tied to the system it was
 * learned or loaded for.
 */
typedef struct BisimClassifier BisimClassifier;

typedef struct BisimQuotient BisimQuotient;

/**
 * A parsed transition system.
 */
typedef struct BisimSystem BisimSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *bisim_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void bisim_string_free(char *s);

/**
 * Parses a system description.
 *
 * # Safety
 * `source` must be a NUL-terminated string; `out` must be writable.
 */
enum BisimStatus bisim_system_parse(const char *source, struct BisimSystem **out);

/**
 * # Safety
 * `sys` must be null or a handle from [`bisim_system_parse`], not yet freed.
 */
void bisim_system_free(struct BisimSystem *sys);

/**
 * Number of state variables, or 0 for a null handle.
 *
 * # Safety
 * `sys` must be null or a live system handle.
 */
size_t bisim_system_num_vars(const struct BisimSystem *sys);

/**
 * Learns a classifier. `solver_cmd` may be null to use the default solver;
 * `timeout_ms` 0 selects the default per-query timeout; `max_iters` 0
 * selects the default budget.
 *
 * # Safety
 * `sys` must be a live system handle; `solver_cmd` null or NUL-terminated;
 * `out` writable.
 */
enum BisimStatus bisim_learn(const struct BisimSystem *sys,
                             const char *solver_cmd,
                             uint64_t seed,
                             uint64_t timeout_ms,
                             size_t max_iters,
                             struct BisimClassifier **out);

/**
 * Loads a classifier saved as JSON for `sys`.
 *
 * # Safety
 * `sys` must be a live system handle; `json` NUL-terminated; `out` writable.
 */
enum BisimStatus bisim_classifier_from_json(const struct BisimSystem *sys,
                                            const char *json,
                                            struct BisimClassifier **out);

/**
 * Serializes a classifier to JSON.
 *
 * # Safety
 * Handles must be live; `out` writable. The result must be released with
 * [`bisim_string_free`].
 */
enum BisimStatus bisim_classifier_to_json(const struct BisimSystem *sys,
                                          const struct BisimClassifier *classifier,
                                          char **out);

/**
 * Number of template classes, or 0 for a null handle.
 *
 * # Safety
 * `classifier` must be null or a live handle.
 */
size_t bisim_classifier_num_classes(const struct BisimClassifier *classifier);

/**
 * # Safety
 * `classifier` must be null or a live handle, not yet freed.
 */
void bisim_classifier_free(struct BisimClassifier *classifier);

/**
 * Builds the quotient induced by a classifier.
 *
 * # Safety
 * Handles must be live; `solver_cmd` null or NUL-terminated; `out`
 * writable.
 */
enum BisimStatus bisim_quotient_extract(const struct BisimSystem *sys,
                                        const struct BisimClassifier *classifier,
                                        const char *solver_cmd,
                                        uint64_t timeout_ms,
                                        struct BisimQuotient **out);

/**
 * Number of nonempty classes, or 0 for a null handle.
 *
 * # Safety
 * `q` must be null or a live handle.
 */
size_t bisim_quotient_num_classes(const struct BisimQuotient *q);

/**
 * Number of edges, or 0 for a null handle.
 *
 * # Safety
 * `q` must be null or a live handle.
 */
size_t bisim_quotient_num_edges(const struct BisimQuotient *q);

/**
 * Renders the quotient as `"dot"` or `"json"`.
 *
 * # Safety
 * `q` must be live; `format` NUL-terminated; `out` writable.
 */
enum BisimStatus bisim_quotient_export(const struct BisimQuotient *q,
                                       const char *format,
                                       char **out);

/**
 * # Safety
 * `q` must be null or a live handle, not yet freed.
 */
void bisim_quotient_free(struct BisimQuotient *q);

/**
 * Checks `property` on the quotient. Writes whether every initial class
 * satisfies it to `holds` and, if `condition` is non-null, the initial
 * states satisfying it as a predicate in the system syntax.
 *
 * # Safety
 * Handles must be live and belong together; `property` NUL-terminated;
 * `holds` writable; `condition` null or writable.
 */
enum BisimStatus bisim_check(const struct BisimSystem *sys,
                             const struct BisimClassifier *classifier,
                             const struct BisimQuotient *q,
                             const char *property,
                             bool *holds,
                             char **condition);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BISIMLEARN_H */
