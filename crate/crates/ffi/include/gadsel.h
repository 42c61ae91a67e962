#ifndef GADSEL_H
#define GADSEL_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum GadselStatus {
  GADSEL_STATUS_OK = 0,
  GADSEL_STATUS_NULL_POINTER = 1,
  /**
   * Bad argument, shape mismatch or violated precondition.
   */
  GADSEL_STATUS_INVALID_ARGUMENT = 2,
  GADSEL_STATUS_PARSE = 3,
  /**
   * Input too large for the detector (dense structure reconstruction).
   */
  GADSEL_STATUS_CAPACITY = 4,
  GADSEL_STATUS_NON_FINITE = 5,
  GADSEL_STATUS_NUMERICAL = 6,
  /**
   * Every trial of a search failed.
   */
  GADSEL_STATUS_SEARCH = 7,
  GADSEL_STATUS_CONFIG = 8,
  GADSEL_STATUS_IO = 9,
  /**
   * Caller-provided buffer is too small.
   */
  GADSEL_STATUS_BUFFER_TOO_SMALL = 10,
  GADSEL_STATUS_PANIC = 11,
} GadselStatus;

/**
 * Detector family selector.
 */
typedef enum GadselDetector {
  GADSEL_DETECTOR_GENERATIVE_AE = 0,
  GADSEL_DETECTOR_CONTRASTIVE_EGONET = 1,
} GadselDetector;

typedef enum GadselCsmVariant {
  GADSEL_CSM_VARIANT_ORIGINAL = 0,
  GADSEL_CSM_VARIANT_IMPROVED = 1,
} GadselCsmVariant;

/**
 * Opaque attributed graph. Never carries labels.
 */
typedef struct GadselGraph GadselGraph;

/**
 * Training settings; obtain defaults from [`gadsel_training_defaults`].
 */
typedef struct GadselTraining {
  size_t epochs;
  double learning_rate;
  size_t hidden_dim;
  size_t embed_dim;
  /**
   * Contrastive scoring rounds.
   */
  size_t rounds;
  /**
   * Node ceiling of the generative detector.
   */
  size_t max_nodes;
  /**
   * Contrastive mini-batch size; 0 trains full batch.
   */
  size_t batch_size;
} GadselTraining;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *gadsel_version(void);

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to fit). Returns the full message length without
 * the terminator; 0 when the last call succeeded.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t gadsel_last_error_message(char *buf, size_t len);

/**
 * Default training settings.
 */
struct GadselTraining gadsel_training_defaults(void);

/**
 * Builds a graph from `edge_count` pairs in `edges` (flattened, length
 * `2 * edge_count`) and a row-major `n x d` attribute matrix.
 *
 * # Safety
 * `edges` and `attributes` must be valid for the stated lengths; `out`
 * must be writable.
 */
enum GadselStatus gadsel_graph_new(size_t n,
                                   const uint64_t *edges,
                                   size_t edge_count,
                                   const double *attributes,
                                   size_t d,
                                   struct GadselGraph **out);

/**
 * Samples a community-structured graph with Gaussian attributes.
 *
 * # Safety
 * `out` must be writable.
 */
enum GadselStatus gadsel_graph_synthetic(size_t n,
                                         size_t d,
                                         size_t communities,
                                         double intra_p,
                                         double inter_p,
                                         uint64_t seed,
                                         struct GadselGraph **out);

/**
 * Reads an edge list and an attribute CSV.
 *
 * # Safety
 * Paths must be NUL-terminated UTF-8; `out` must be writable.
 */
enum GadselStatus gadsel_graph_load(const char *edges_path,
                                    const char *attributes_path,
                                    struct GadselGraph **out);

/**
 * Releases a graph. Null is ignored.
 *
 * # Safety
 * `g` must come from this library and not be used afterwards.
 */
void gadsel_graph_free(struct GadselGraph *g);

/**
 * Node count, or 0 for a null handle.
 *
 * # Safety
 * `g` must be null or a live handle.
 */
size_t gadsel_graph_node_count(const struct GadselGraph *g);

/**
 * Attribute dimension, or 0 for a null handle.
 *
 * # Safety
 * `g` must be null or a live handle.
 */
size_t gadsel_graph_attribute_dim(const struct GadselGraph *g);

/**
 * Undirected edge count, or 0 for a null handle.
 *
 * # Safety
 * `g` must be null or a live handle.
 */
size_t gadsel_graph_edge_count(const struct GadselGraph *g);

/**
 * Plants `anomalies` nodes (cliques plus attribute swaps) into a copy of
 * `g`. The new graph goes to `out`; its 0/1 ground truth is written to
 * `labels`, which must hold `labels_len >= node count` bytes.
 *
 * # Safety
 * `g` must be live; `labels` valid for `labels_len` bytes; `out` writable.
 */
enum GadselStatus gadsel_graph_inject(const struct GadselGraph *g,
                                      size_t anomalies,
                                      size_t clique_size,
                                      size_t candidate_pool,
                                      uint64_t seed,
                                      uint8_t *labels,
                                      size_t labels_len,
                                      struct GadselGraph **out);

/**
 * Trains one detector and writes its per-node scores. `egonet_size` is
 * ignored by the generative detector.
 *
 * # Safety
 * `g` must be live; `training` readable; `scores` valid for `scores_len`
 * doubles.
 */
enum GadselStatus gadsel_train(const struct GadselGraph *g,
                               enum GadselDetector detector,
                               double alpha,
                               size_t egonet_size,
                               const struct GadselTraining *training,
                               uint64_t seed,
                               double *scores,
                               size_t scores_len);

/**
 * Contrast score margin of `scores` with `k` predicted anomalies. Infinite
 * margins are reported as `+INFINITY` / `-INFINITY`.
 *
 * # Safety
 * `scores` valid for `n` doubles; `out` writable.
 */
enum GadselStatus gadsel_csm(const double *scores,
                             size_t n,
                             size_t k,
                             enum GadselCsmVariant variant,
                             double *out);

/**
 * Area under the ROC curve; `labels` holds 0 or 1 per node.
 *
 * # Safety
 * `scores` and `labels` valid for `n` elements; `out` writable.
 */
enum GadselStatus gadsel_roc_auc(const double *scores,
                                 const uint8_t *labels,
                                 size_t n,
                                 double *out);

/**
 * Expected improvement of a Gaussian prediction over `incumbent`.
 *
 * # Safety
 * `out` writable.
 */
enum GadselStatus gadsel_expected_improvement(double mean,
                                              double std_dev,
                                              double incumbent,
                                              double *out);

/**
 * Runs the experiment described by a TOML config and writes
 * `trials.csv`, `summary.csv` and `manifest.json` into `out_dir`.
 *
 * # Safety
 * Paths must be NUL-terminated UTF-8.
 */
enum GadselStatus gadsel_run_experiment(const char *config_path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GADSEL_H */
