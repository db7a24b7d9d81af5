#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bev/covariance.hpp"
#include "bev/envelope.hpp"
#include "bev/oracle.hpp"
#include "bev/sampling.hpp"
#include "bev/surrogate.hpp"

namespace bev {

struct ScalarObjectiveConfig {
  std::string label;
  std::string source;  // "loss" or "mass_flow"
  int degree = 1;
};

struct VectorObjectiveConfig {
  std::string label;
  int degree = 2;
  std::string region;                // "peak", "leading_edge" or "" for nodes
  std::vector<Eigen::Index> nodes;   // explicit core nodes when region == ""
  Eigen::Index radius = 8;           // weight taper radius in node steps
  std::optional<Eigen::Index> r_override;
};

/// Strictly validated configuration: unknown keys are errors.
struct PipelineConfig {
  int version = 1;

  struct Design {
    Eigen::Index d = 20;
    Eigen::Index n_nodes = 128;
    double amplitude = 0.01;
    double gamma = 1.4;
    std::uint64_t oracle_seed = 7;
  } design;

  struct Training {
    Eigen::Index samples = 1000;
    double train_fraction = 0.8;
    std::uint64_t seed = 11;
  } training;

  std::vector<ScalarObjectiveConfig> scalars;
  std::vector<VectorObjectiveConfig> vectors;

  struct Covariance {
    Eigen::Index n_mc = 0;  // 0: default 100*d
    std::uint64_t seed = 13;
  } covariance;

  struct Subspace {
    double min_ratio = 10.0;
    double rank_tol = 1e-8;
  } subspace;

  struct Sampler {
    Eigen::Index h = 5000;
    Eigen::Index burn_in = 1000;
    Eigen::Index thinning = 10;
    std::uint64_t seed = 5;
    std::map<std::string, std::vector<double>> targets;  // label -> u*
  } sampler;

  struct Envelope {
    double quantile = 1.0;
    double delta_threshold = 3.0;
    Eigen::Index reject_samples = 500;
    std::uint64_t reject_seed = 21;
  } envelope;

  struct Export {
    double span = 0.5;
    std::vector<double> contour_levels = {0.33, 0.66};
    bool levels_absolute = false;
    double scale_mm = 100.0;
  } export_;

  void validate() const;
  nlohmann::json to_json() const;
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::string& path);
};

// FNV-1a 64-bit over the file bytes, hex encoded.
std::string hash_file(const std::string& path);

// Atomic write: temp file then rename.
void write_file_atomic(const std::string& path, const std::string& content);

/// Runs the workflow as a chain of file-backed stages in a run directory:
/// training -> fit -> covariance -> subspace -> intersect -> sample ->
/// envelope -> manifest. A stage whose artifacts already exist is skipped,
/// so deleting downstream artifacts resumes from the last valid stage.
class Pipeline {
 public:
  Pipeline(PipelineConfig config, std::string out_dir);

  static const std::vector<std::string>& stage_names();

  // Replaces the sampler seed before any stage runs.
  void set_seed_override(std::uint64_t seed);

  // Deletes the named stage's artifacts and everything downstream.
  void invalidate_from(const std::string& stage);

  void run();  // all stages
  void run_through(const std::string& stage);

  Classification classify_profile_csv(const std::string& profile_csv) const;
  void export_mesh(const std::string& obj_path) const;
  void export_plots() const;

  std::string manifest_hash() const;
  Eigen::Index intersection_dim() const;
  const std::string& out_dir() const { return out_dir_; }
  const PipelineConfig& config() const { return config_; }

 private:
  PipelineConfig config_;
  std::string out_dir_;

  GeometryOracle make_oracle() const;
  WeightVector vector_weights(const VectorObjectiveConfig& vc,
                              const GeometryOracle& oracle) const;

  std::vector<std::string> stage_artifacts(const std::string& stage) const;
  bool stage_done(const std::string& stage) const;
  void run_stage(const std::string& stage);

  void stage_training();
  void stage_fit();
  void stage_covariance();
  void stage_subspace();
  void stage_intersect();
  void stage_sample();
  void stage_envelope();
  void stage_manifest();

  std::string path(const std::string& rel) const;
};

}  // namespace bev
