#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "bladeenvelopes.h"

namespace fs = std::filesystem;

namespace {

// Everything goes through the shared-library boundary: the config is a
// file on disk and results come back as files or plain C values.
const char* kConfig = R"({
  "version": 1,
  "design": {"d": 12},
  "training": {"samples": 400},
  "covariance": {"n_mc": 400},
  "objectives": {
    "scalars": [
      {"label": "loss", "source": "loss", "degree": 1},
      {"label": "mass_flow", "source": "mass_flow", "degree": 1}
    ]
  },
  "sampler": {
    "h": 300, "burn_in": 200, "thinning": 2,
    "targets": {"loss": [0.0], "mass_flow": [0.0]}
  },
  "envelope": {"reject_samples": 100}
})";

struct TempDir {
  fs::path dir;
  explicit TempDir(const std::string& tag) {
    dir = fs::temp_directory_path() / ("bev_capi_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~TempDir() { fs::remove_all(dir); }
};

std::string write_config(const TempDir& tmp) {
  const std::string path = (tmp.dir / "config.json").string();
  std::ofstream out(path);
  out << kConfig;
  return path;
}

}  // namespace

TEST_CASE("version string is present") {
  const char* v = bev_version();
  REQUIRE(v != nullptr);
  CHECK(std::strlen(v) > 0);
}

TEST_CASE("full workflow through the C boundary") {
  TempDir tmp("workflow");
  const std::string cfg = write_config(tmp);
  const std::string run_dir = (tmp.dir / "run").string();

  bev_pipeline* p = nullptr;
  REQUIRE(bev_pipeline_open(cfg.c_str(), run_dir.c_str(), &p) == BEV_OK);
  REQUIRE(p != nullptr);

  CHECK(bev_pipeline_run(p, nullptr) == BEV_OK);
  CHECK(bev_pipeline_intersection_dim(p) == 10);

  char hash[17] = {};
  CHECK(bev_pipeline_manifest_hash(p, hash, sizeof(hash)) == BEV_OK);
  CHECK(std::strlen(hash) == 16);

  const std::string nominal = run_dir + "/nominal_profile.csv";
  int accept = -1;
  double prob = -1.0, dist = -1.0;
  CHECK(bev_pipeline_classify(p, nominal.c_str(), &accept, &prob, &dist) ==
        BEV_OK);
  CHECK(accept == 1);
  CHECK(prob > 0.5);
  CHECK(dist >= 0.0);
  // Null output pointers are allowed.
  CHECK(bev_pipeline_classify(p, nominal.c_str(), nullptr, nullptr, nullptr) ==
        BEV_OK);

  const std::string obj = (tmp.dir / "envelope.obj").string();
  CHECK(bev_pipeline_export_mesh(p, obj.c_str()) == BEV_OK);
  CHECK(fs::exists(obj));
  CHECK(bev_pipeline_export_plots(p) == BEV_OK);
  CHECK(fs::exists(fs::path(run_dir) / "plots/spectrum_loss.csv"));

  bev_pipeline_close(p);
}

TEST_CASE("seed override and stage invalidation") {
  TempDir tmp("seed");
  const std::string cfg = write_config(tmp);
  const std::string run_a = (tmp.dir / "a").string();
  const std::string run_b = (tmp.dir / "b").string();

  bev_pipeline* pa = nullptr;
  bev_pipeline* pb = nullptr;
  REQUIRE(bev_pipeline_open(cfg.c_str(), run_a.c_str(), &pa) == BEV_OK);
  REQUIRE(bev_pipeline_open(cfg.c_str(), run_b.c_str(), &pb) == BEV_OK);
  CHECK(bev_pipeline_seed_override(pb, 999) == BEV_OK);
  CHECK(bev_pipeline_run(pa, nullptr) == BEV_OK);
  CHECK(bev_pipeline_run(pb, nullptr) == BEV_OK);

  char ha[17] = {}, hb[17] = {};
  CHECK(bev_pipeline_manifest_hash(pa, ha, sizeof(ha)) == BEV_OK);
  CHECK(bev_pipeline_manifest_hash(pb, hb, sizeof(hb)) == BEV_OK);
  CHECK(std::string(ha) != std::string(hb));

  // Invalidate + rerun with the same seed reproduces the same manifest.
  CHECK(bev_pipeline_invalidate_from(pa, "sample") == BEV_OK);
  CHECK(!fs::exists(fs::path(run_a) / "ensemble.csv"));
  CHECK(bev_pipeline_run(pa, nullptr) == BEV_OK);
  char ha2[17] = {};
  CHECK(bev_pipeline_manifest_hash(pa, ha2, sizeof(ha2)) == BEV_OK);
  CHECK(std::string(ha2) == std::string(ha));

  bev_pipeline_close(pa);
  bev_pipeline_close(pb);
}

TEST_CASE("partial run stops at the requested stage") {
  TempDir tmp("partial");
  const std::string cfg = write_config(tmp);
  const std::string run_dir = (tmp.dir / "run").string();
  bev_pipeline* p = nullptr;
  REQUIRE(bev_pipeline_open(cfg.c_str(), run_dir.c_str(), &p) == BEV_OK);
  CHECK(bev_pipeline_run(p, "intersect") == BEV_OK);
  CHECK(fs::exists(fs::path(run_dir) / "coordinate_spec.json"));
  CHECK(!fs::exists(fs::path(run_dir) / "ensemble.csv"));
  CHECK(bev_pipeline_intersection_dim(p) == 10);
  bev_pipeline_close(p);
}

TEST_CASE("bad config path reports BEV_ERR_CONFIG with a message") {
  TempDir tmp("badcfg");
  bev_pipeline* p = reinterpret_cast<bev_pipeline*>(static_cast<uintptr_t>(1));
  const std::string run_dir = (tmp.dir / "run").string();
  CHECK(bev_pipeline_open("/does/not/exist.json", run_dir.c_str(), &p) ==
        BEV_ERR_CONFIG);
  CHECK(p == nullptr);  // output reset on failure
  CHECK(std::strlen(bev_last_error()) > 0);
}

TEST_CASE("malformed config JSON is a config error") {
  TempDir tmp("badjson");
  const std::string path = (tmp.dir / "broken.json").string();
  {
    std::ofstream out(path);
    out << "{\"version\": 1, \"unknown_key\": 5}";
  }
  bev_pipeline* p = nullptr;
  const std::string run_dir = (tmp.dir / "run").string();
  CHECK(bev_pipeline_open(path.c_str(), run_dir.c_str(), &p) ==
        BEV_ERR_CONFIG);
  const std::string msg = bev_last_error();
  CHECK(msg.find("unknown_key") != std::string::npos);
}

TEST_CASE("null arguments are rejected, not crashed on") {
  CHECK(bev_pipeline_open(nullptr, "x", nullptr) == BEV_ERR_CONFIG);
  CHECK(bev_pipeline_run(nullptr, nullptr) == BEV_ERR_CONFIG);
  CHECK(bev_pipeline_intersection_dim(nullptr) < 0);
  char buf[17];
  CHECK(bev_pipeline_manifest_hash(nullptr, buf, sizeof(buf)) ==
        BEV_ERR_CONFIG);
  bev_pipeline_close(nullptr);  // no-op
}

TEST_CASE("infeasible target surfaces through the status code") {
  TempDir tmp("infeasible");
  const std::string path = (tmp.dir / "config.json").string();
  {
    std::string cfg = kConfig;
    const std::string from = "\"targets\": {\"loss\": [0.0]";
    cfg.replace(cfg.find(from), from.size(),
                "\"targets\": {\"loss\": [50.0]");
    std::ofstream out(path);
    out << cfg;
  }
  bev_pipeline* p = nullptr;
  const std::string run_dir = (tmp.dir / "run").string();
  REQUIRE(bev_pipeline_open(path.c_str(), run_dir.c_str(), &p) == BEV_OK);
  CHECK(bev_pipeline_run(p, nullptr) == BEV_ERR_INFEASIBLE);
  CHECK(std::strlen(bev_last_error()) > 0);
  CHECK(fs::exists(fs::path(run_dir) / "error.json"));
  bev_pipeline_close(p);
}

TEST_CASE("manifest hash needs a big enough buffer") {
  TempDir tmp("buf");
  const std::string cfg = write_config(tmp);
  const std::string run_dir = (tmp.dir / "run").string();
  bev_pipeline* p = nullptr;
  REQUIRE(bev_pipeline_open(cfg.c_str(), run_dir.c_str(), &p) == BEV_OK);
  CHECK(bev_pipeline_run(p, nullptr) == BEV_OK);
  char small_buf[8];
  CHECK(bev_pipeline_manifest_hash(p, small_buf, sizeof(small_buf)) ==
        BEV_ERR_CONFIG);
  bev_pipeline_close(p);
}
