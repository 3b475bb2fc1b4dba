#ifndef CLOSEST_BALANCED_H
#define CLOSEST_BALANCED_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome codes of fallible calls.
 */
typedef enum CbgStatus {
  CBG_STATUS_OK = 0,
  CBG_STATUS_NULL_POINTER = 1,
  CBG_STATUS_INVALID_ARGUMENT = 2,
  CBG_STATUS_INVALID_GAME = 3,
  CBG_STATUS_NUMERICAL = 4,
  CBG_STATUS_NOT_CERTIFIED = 5,
  CBG_STATUS_IO = 6,
  CBG_STATUS_PANIC = 7,
} CbgStatus;

typedef struct CbgCatalog CbgCatalog;

typedef struct CbgGame CbgGame;

typedef struct CbgResult CbgResult;

/**
 * Solver settings; obtain defaults from [`cbg_options_default`].
 */
typedef struct CbgOptions {
  size_t max_iters;
  size_t max_restarts;
  uint64_t seed;
  double tie_tol;
} CbgOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *cbg_last_error(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *cbg_version(void);

struct CbgOptions cbg_options_default(void);

/**
 * Builds a game from `2^n` values indexed by bitmask.
 *
 * # Safety
 * `values` must point to `len` readable doubles and `out` must be writable.
 */
enum CbgStatus cbg_game_from_values(size_t n,
                                    const double *values,
                                    size_t len,
                                    struct CbgGame **out);

/**
 * Parses a game from its JSON form.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` must be writable.
 */
enum CbgStatus cbg_game_from_json(const char *json, struct CbgGame **out);

/**
 * Number of players, or 0 for a null handle.
 *
 * # Safety
 * `game` must be null or a live handle.
 */
size_t cbg_game_players(const struct CbgGame *game);

/**
 * Copies the `2^n` values into `buf`.
 *
 * # Safety
 * `game` must be a live handle and `buf` must hold `len` doubles.
 */
enum CbgStatus cbg_game_values(const struct CbgGame *game, double *buf, size_t len);

/**
 * # Safety
 * `game` must be null or a handle not yet freed.
 */
void cbg_game_free(struct CbgGame *game);

/**
 * Projects `game` with uniform weights. `weights` may be null, or point to
 * `2^n` positive values indexed by bitmask (only proper coalitions are read).
 *
 * A run that ends in an unresolved cycle still yields a result; check
 * [`cbg_result_converged`].
 *
 * # Safety
 * Pointers must be null or valid as described; `out` must be writable.
 */
enum CbgStatus cbg_project(const struct CbgGame *game,
                           const double *weights,
                           const struct CbgOptions *options,
                           struct CbgResult **out);

/**
 * 1 when the solver certified optimality, 0 otherwise (or for null).
 *
 * # Safety
 * `result` must be null or a live handle.
 */
int32_t cbg_result_converged(const struct CbgResult *result);

/**
 * # Safety
 * `result` must be null or a live handle.
 */
size_t cbg_result_iterations(const struct CbgResult *result);

/**
 * # Safety
 * `result` must be null or a live handle.
 */
size_t cbg_result_restarts(const struct CbgResult *result);

/**
 * Weighted squared distance between the input and its projection; NaN for null.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
double cbg_result_objective(const struct CbgResult *result);

/**
 * Copies the core allocation x* (n values).
 *
 * # Safety
 * `result` must be a live handle and `buf` must hold `len` doubles.
 */
enum CbgStatus cbg_result_allocation(const struct CbgResult *result, double *buf, size_t len);

/**
 * New game handle holding the projection v*.
 *
 * # Safety
 * `result` must be a live handle and `out` writable.
 */
enum CbgStatus cbg_result_game(const struct CbgResult *result, struct CbgGame **out);

/**
 * Full result as JSON; release with [`cbg_string_free`].
 *
 * # Safety
 * `result` must be null or a live handle.
 */
char *cbg_result_json(const struct CbgResult *result);

/**
 * # Safety
 * `result` must be null or a handle not yet freed.
 */
void cbg_result_free(struct CbgResult *result);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void cbg_string_free(char *s);

/**
 * Enumerates the minimal balanced collections for `n ≤ 5` players, or
 * `n = 6` when `allow_long` is nonzero.
 *
 * # Safety
 * `out` must be writable.
 */
enum CbgStatus cbg_catalog_enumerate(size_t n,
                                     int32_t include_trivial,
                                     int32_t allow_long,
                                     struct CbgCatalog **out);

/**
 * Loads a catalog cache file.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` writable.
 */
enum CbgStatus cbg_catalog_load(const char *path, struct CbgCatalog **out);

/**
 * Number of collections in the catalog.
 *
 * # Safety
 * `catalog` must be null or a live handle.
 */
size_t cbg_catalog_len(const struct CbgCatalog *catalog);

/**
 * # Safety
 * `catalog` must be null or a handle not yet freed.
 */
void cbg_catalog_free(struct CbgCatalog *catalog);

/**
 * Writes 1 to `balanced` when the game has a nonempty core, else 0. A
 * negative `tol` selects the default tolerance.
 *
 * # Safety
 * Handles must be live and `balanced` writable.
 */
enum CbgStatus cbg_is_balanced(const struct CbgGame *game,
                               const struct CbgCatalog *catalog,
                               double tol,
                               int32_t *balanced);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CLOSEST_BALANCED_H */
