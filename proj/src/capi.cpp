#include "bladeenvelopes.h"

#include <cstring>
#include <functional>
#include <string>

#include "bev/pipeline.hpp"

struct bev_pipeline {
  bev::Pipeline impl;
};

namespace {

thread_local std::string g_last_error;

bev_status wrap(const std::function<void()>& body) {
  try {
    body();
    g_last_error.clear();
    return BEV_OK;
  } catch (const bev::Error& e) {
    g_last_error = e.what();
    return static_cast<bev_status>(e.exit_code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return BEV_ERR_NUMERIC;
  }
}

}  // namespace

extern "C" {

const char* bev_version(void) { return "0.1.0"; }

const char* bev_last_error(void) { return g_last_error.c_str(); }

bev_status bev_pipeline_open(const char* config_path, const char* out_dir,
                             bev_pipeline** out) {
  if (!config_path || !out_dir || !out) {
    g_last_error = "null argument";
    return BEV_ERR_CONFIG;
  }
  *out = nullptr;
  return wrap([&] {
    auto config = bev::PipelineConfig::load(config_path);
    *out = new bev_pipeline{bev::Pipeline(std::move(config), out_dir)};
  });
}

void bev_pipeline_close(bev_pipeline* p) { delete p; }

bev_status bev_pipeline_seed_override(bev_pipeline* p, uint64_t seed) {
  if (!p) return BEV_ERR_CONFIG;
  return wrap([&] { p->impl.set_seed_override(seed); });
}

bev_status bev_pipeline_invalidate_from(bev_pipeline* p, const char* stage) {
  if (!p || !stage) return BEV_ERR_CONFIG;
  return wrap([&] { p->impl.invalidate_from(stage); });
}

bev_status bev_pipeline_run(bev_pipeline* p, const char* stage) {
  if (!p) return BEV_ERR_CONFIG;
  return wrap([&] {
    if (stage) {
      p->impl.run_through(stage);
    } else {
      p->impl.run();
    }
  });
}

bev_status bev_pipeline_classify(bev_pipeline* p, const char* profile_csv,
                                 int* accept, double* accept_probability,
                                 double* mahalanobis_distance) {
  if (!p || !profile_csv) return BEV_ERR_CONFIG;
  return wrap([&] {
    const bev::Classification c = p->impl.classify_profile_csv(profile_csv);
    if (accept) *accept = c.accept ? 1 : 0;
    if (accept_probability) *accept_probability = c.accept_probability;
    if (mahalanobis_distance) *mahalanobis_distance = c.distance;
  });
}

bev_status bev_pipeline_export_mesh(bev_pipeline* p, const char* obj_path) {
  if (!p || !obj_path) return BEV_ERR_CONFIG;
  return wrap([&] { p->impl.export_mesh(obj_path); });
}

bev_status bev_pipeline_export_plots(bev_pipeline* p) {
  if (!p) return BEV_ERR_CONFIG;
  return wrap([&] { p->impl.export_plots(); });
}

bev_status bev_pipeline_manifest_hash(bev_pipeline* p, char* buf,
                                      size_t buf_len) {
  if (!p || !buf || buf_len < 17) return BEV_ERR_CONFIG;
  return wrap([&] {
    const std::string h = p->impl.manifest_hash();
    std::strncpy(buf, h.c_str(), buf_len - 1);
    buf[buf_len - 1] = '\0';
  });
}

long bev_pipeline_intersection_dim(bev_pipeline* p) {
  if (!p) return -static_cast<long>(BEV_ERR_CONFIG);
  long dim = -1;
  const bev_status st =
      wrap([&] { dim = static_cast<long>(p->impl.intersection_dim()); });
  return st == BEV_OK ? dim : -static_cast<long>(st);
}

}  // extern "C"
