#ifndef WDGNN_H
#define WDGNN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every fallible call.
 */
typedef enum WdgnnStatus {
  WDGNN_STATUS_OK = 0,
  /*
   A required pointer was null.
   */
  WDGNN_STATUS_NULL_POINTER = 1,
  WDGNN_STATUS_INVALID_ARGUMENT = 2,
  /*
   A buffer length or shape disagrees with the handle it is used with.
   */
  WDGNN_STATUS_DIMENSION_MISMATCH = 3,
  /*
   Non-finite values or a numerical failure.
   */
  WDGNN_STATUS_NUMERIC = 4,
  WDGNN_STATUS_IO = 5,
  WDGNN_STATUS_PARSE = 6,
  /*
   A bug inside the library; the message carries the panic payload.
   */
  WDGNN_STATUS_PANIC = 7,
} WdgnnStatus;

/*
 WD-GNN parameters plus the signal history used by [`wdgnn_model_step`].
 */
typedef struct WdgnnModel WdgnnModel;

/*
 A sparse graph support matrix.
 */
typedef struct WdgnnSupport WdgnnSupport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Version and build of the library, as a static NUL-terminated string.
 */
const char *wdgnn_version(void);

/*
 Message of the last failed call on this thread, or null if none failed.
 The pointer stays valid until the next failing call on the same thread.
 */
const char *wdgnn_last_error_message(void);

/*
 Binary symmetric support from `n_edges` undirected edges, given as
 `2 * n_edges` node indices `(i0, j0, i1, j1, ...)`.

 # Safety
 `edges` must be valid for `2 * n_edges` reads and `out` for one write.
 */
enum WdgnnStatus wdgnn_support_from_edges(size_t n_nodes,
                                          const size_t *edges,
                                          size_t n_edges,
                                          struct WdgnnSupport **out);

/*
 Weighted support from `nnz` entries `S[rows[k], cols[k]] = weights[k]`.

 # Safety
 `rows`, `cols` and `weights` must be valid for `nnz` reads and `out` for
 one write.
 */
enum WdgnnStatus wdgnn_support_from_triplets(size_t n_nodes,
                                             const size_t *rows,
                                             const size_t *cols,
                                             const double *weights,
                                             size_t nnz,
                                             struct WdgnnSupport **out);

/*
 Node count of `support`, or 0 for a null handle.

 # Safety
 `support` must be null or a live handle.
 */
size_t wdgnn_support_n_nodes(const struct WdgnnSupport *support);

/*
 # Safety
 `support` must be null or a handle not yet freed.
 */
void wdgnn_support_free(struct WdgnnSupport *support);

/*
 Graph filter `Σ_k S^k X B_k` for `k = 0..=order`. `x` is
 `n_nodes × in_features`, `taps` holds `order + 1` matrices of
 `in_features × out_features` back to back, and `out` receives
 `n_nodes × out_features` values.

 # Safety
 Every buffer must be valid for the stated number of elements.
 */
enum WdgnnStatus wdgnn_filter_apply(const struct WdgnnSupport *support,
                                    const double *x,
                                    size_t n_nodes,
                                    size_t in_features,
                                    const double *taps,
                                    size_t order,
                                    size_t out_features,
                                    double *out);

/*
 Randomly initialized WD-GNN with tanh nonlinearities, reproducible from
 `seed`.

 # Safety
 `out` must be valid for one write.
 */
enum WdgnnStatus wdgnn_model_random(size_t in_features,
                                    size_t hidden,
                                    size_t out_features,
                                    size_t order,
                                    size_t layers,
                                    uint64_t seed,
                                    struct WdgnnModel **out);

/*
 Loads a JSON checkpoint written by the `wdgnn` tools.

 # Safety
 `path` must be a NUL-terminated string and `out` valid for one write.
 */
enum WdgnnStatus wdgnn_model_load(const char *path, struct WdgnnModel **out);

/*
 # Safety
 `m` must be a live handle and `path` a NUL-terminated string.
 */
enum WdgnnStatus wdgnn_model_save(const struct WdgnnModel *m, const char *path);

/*
 Input features per node, or 0 for a null handle.

 # Safety
 `m` must be null or a live handle.
 */
size_t wdgnn_model_in_features(const struct WdgnnModel *m);

/*
 Output features per node, or 0 for a null handle.

 # Safety
 `m` must be null or a live handle.
 */
size_t wdgnn_model_out_features(const struct WdgnnModel *m);

/*
 Past frames [`wdgnn_model_step`] keeps besides the current one.

 # Safety
 `m` must be null or a live handle.
 */
size_t wdgnn_model_temporal_depth(const struct WdgnnModel *m);

/*
 Output for one graph and signal, with every filter using powers of the
 same support. `out_len` must equal `n_nodes * out_features`.

 # Safety
 `x` must be valid for `n_nodes * in_features` reads and `out` for
 `out_len` writes.
 */
enum WdgnnStatus wdgnn_model_forward(const struct WdgnnModel *m,
                                     const struct WdgnnSupport *support,
                                     const double *x,
                                     size_t n_nodes,
                                     size_t in_features,
                                     double *out,
                                     size_t out_len);

/*
 Records this step's graph and signal in the model's history and writes
 the output of the delayed (time-varying graph) filters. Use once per
 time step; [`wdgnn_model_reset`] clears the history.

 # Safety
 As for [`wdgnn_model_forward`], with `m` mutable.
 */
enum WdgnnStatus wdgnn_model_step(struct WdgnnModel *m,
                                  const struct WdgnnSupport *support,
                                  const double *x,
                                  size_t n_nodes,
                                  size_t in_features,
                                  double *out,
                                  size_t out_len);

/*
 Clears the history used by [`wdgnn_model_step`].

 # Safety
 `m` must be a live handle.
 */
enum WdgnnStatus wdgnn_model_reset(struct WdgnnModel *m);

/*
 # Safety
 `m` must be null or a handle not yet freed.
 */
void wdgnn_model_free(struct WdgnnModel *m);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WDGNN_H */
