#ifndef VIC_H
#define VIC_H

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

typedef enum VicStatus {
  VIC_STATUS_OK = 0,
  VIC_STATUS_NULL_ARGUMENT = 1,
  VIC_STATUS_INVALID_UTF8 = 2,
  VIC_STATUS_INVALID_INPUT = 3,
  VIC_STATUS_IO = 4,
  VIC_STATUS_BUFFER_TOO_SMALL = 5,
  VIC_STATUS_PANIC = 6,
} VicStatus;

typedef enum VicPermutationStatus {
  VIC_PERMUTATION_STATUS_CLEAN = 0,
  VIC_PERMUTATION_STATUS_REPAIRED = 1,
  VIC_PERMUTATION_STATUS_IDENTITY_FALLBACK = 2,
} VicPermutationStatus;

/**
 * An assembled candidate sequence.
 */
typedef struct VicCandidates VicCandidates;

/**
 * A parsed run: one ranked list per query.
 */
typedef struct VicRunSet VicRunSet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *vic_last_error_message(void);

/**
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void vic_string_free(char *s);

/**
 * Loads a run file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum VicStatus vic_run_load(const char *path, struct VicRunSet **out);

/**
 * Parses run-file text.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum VicStatus vic_run_parse(const char *text, struct VicRunSet **out);

/**
 * # Safety
 * `run` must come from this library and not have been freed.
 */
void vic_run_free(struct VicRunSet *run);

/**
 * Number of queries in `run`; 0 for NULL.
 *
 * # Safety
 * `run` must be NULL or a live handle.
 */
size_t vic_run_query_count(const struct VicRunSet *run);

/**
 * Renders `run` in run-file format into a new string.
 *
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
enum VicStatus vic_run_render(const struct VicRunSet *run, char **out);

/**
 * Reciprocal rank fusion of `count` runs, `depth` items per query.
 *
 * # Safety
 * `runs` must point to `count` live handles; `out` must be writable.
 */
enum VicStatus vic_rrf_fuse(const struct VicRunSet *const *runs,
                            size_t count,
                            double k,
                            size_t depth,
                            struct VicRunSet **out);

/**
 * Round-robin assembly of `query`'s lists from `count` runs. A run without
 * the query contributes nothing.
 *
 * # Safety
 * `runs` must point to `count` live handles, `query` must be a
 * NUL-terminated string and `out` must be writable.
 */
enum VicStatus vic_assemble(const struct VicRunSet *const *runs,
                            size_t count,
                            const char *query,
                            size_t k,
                            bool keep_duplicates,
                            struct VicCandidates **out);

/**
 * # Safety
 * `c` must come from this library and not have been freed.
 */
void vic_candidates_free(struct VicCandidates *c);

/**
 * # Safety
 * `c` must be NULL or a live handle.
 */
size_t vic_candidates_len(const struct VicCandidates *c);

/**
 * Item id of slot `index` (0-based), borrowed from the handle; NULL when
 * out of range.
 *
 * # Safety
 * `c` must be NULL or a live handle.
 */
const char *vic_candidates_item(const struct VicCandidates *c, size_t index);

/**
 * Retriever tag of slot `index`, borrowed from the handle.
 *
 * # Safety
 * `c` must be NULL or a live handle.
 */
const char *vic_candidates_source_tag(const struct VicCandidates *c, size_t index);

/**
 * 1-based rank of slot `index` in its source list; 0 when out of range.
 *
 * # Safety
 * `c` must be NULL or a live handle.
 */
size_t vic_candidates_source_rank(const struct VicCandidates *c, size_t index);

/**
 * Parses a model reply into a permutation of `1..=k`, written to
 * `order[0..k]`.
 *
 * # Safety
 * `reply` must be a NUL-terminated string, `order` must hold `k` values
 * and `status` must be writable.
 */
enum VicStatus vic_parse_permutation(const char *reply,
                                     size_t k,
                                     size_t *order,
                                     enum VicPermutationStatus *status);

/**
 * Zero-based frame indices of an `s` x `s` grid over `frame_count`
 * frames, written to `out[0..s*s]`.
 *
 * # Safety
 * `out` must hold `out_len` values.
 */
enum VicStatus vic_select_indices(size_t frame_count, uint32_t s, size_t *out, size_t out_len);

/**
 * `ceil(k / m)`, or 0 when either argument is 0.
 */
size_t vic_per_list_depth(size_t k, size_t m);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VIC_H */
