/* C API for the blade envelope pipeline library.
 *
 * All functions return a bev_status (0 on success). On failure,
 * bev_last_error() describes what went wrong for the calling thread.
 * Pipelines are opaque handles created from a config file and a run
 * directory; artifacts are exchanged through files.
 */
#ifndef BLADEENVELOPES_H
#define BLADEENVELOPES_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bev_status {
  BEV_OK = 0,
  BEV_ERR_CONFIG = 2,     /* bad config, schema violation, missing file */
  BEV_ERR_NUMERIC = 3,    /* numerical failure */
  BEV_ERR_INFEASIBLE = 4, /* sampling slice does not meet the hypercube */
} bev_status;

typedef struct bev_pipeline bev_pipeline;

const char* bev_version(void);

/* Message for the most recent failure on this thread; empty if none. */
const char* bev_last_error(void);

bev_status bev_pipeline_open(const char* config_path, const char* out_dir,
                             bev_pipeline** out);
void bev_pipeline_close(bev_pipeline* p);

/* Replaces the sampler seed before running. */
bev_status bev_pipeline_seed_override(bev_pipeline* p, uint64_t seed);

/* Deletes artifacts of `stage` and everything downstream, forcing a
 * re-run from that stage. */
bev_status bev_pipeline_invalidate_from(bev_pipeline* p, const char* stage);

/* Runs all stages (stage == NULL) or up to and including `stage`.
 * Stage names: training, fit, covariance, subspace, intersect, sample,
 * envelope, manifest. */
bev_status bev_pipeline_run(bev_pipeline* p, const char* stage);

/* Scrap-or-use decision for a profile CSV (node,x,y,arc_fraction).
 * Any output pointer may be NULL. */
bev_status bev_pipeline_classify(bev_pipeline* p, const char* profile_csv,
                                 int* accept, double* accept_probability,
                                 double* mahalanobis_distance);

bev_status bev_pipeline_export_mesh(bev_pipeline* p, const char* obj_path);
bev_status bev_pipeline_export_plots(bev_pipeline* p);

/* Hex manifest hash into buf (buf_len >= 17). */
bev_status bev_pipeline_manifest_hash(bev_pipeline* p, char* buf,
                                      size_t buf_len);

/* Dimension of the intersected inactive subspace; negative on error. */
long bev_pipeline_intersection_dim(bev_pipeline* p);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* BLADEENVELOPES_H */
