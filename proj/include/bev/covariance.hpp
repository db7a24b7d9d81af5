#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bev/linalg.hpp"
#include "bev/surrogate.hpp"

namespace bev {

/// Per-component weights for a vector-valued objective (diagonal of R).
struct WeightVector {
  Eigen::VectorXd weights;
  std::string description;

  void validate() const;
};

// Weights of 1 on the given nodes, tapering linearly to 0 over `radius`
// index steps. Node indices live on a closed curve, so distance wraps.
WeightVector smooth_weights(Eigen::Index n_nodes,
                            const std::vector<Eigen::Index>& core_nodes,
                            Eigen::Index radius, const std::string& description);

struct GradientCovariance {
  Eigen::MatrixXd matrix;  // d x d, symmetric PSD
  Eigen::Index n_samples = 0;  // 0 for closed-form
  std::uint64_t seed = 0;
  std::string source;

  void validate() const;
  nlohmann::json to_json() const;
  static GradientCovariance from_json(const nlohmann::json& j);
};

// The shared Monte Carlo sample set for (seed, d, n_mc): row k is sample k.
Eigen::MatrixXd covariance_samples(Eigen::Index d, Eigen::Index n_mc,
                                   std::uint64_t seed);

// E[grad f grad f^T] over the uniform hypercube. Degree-1 models use the
// exact closed form g g^T; degree-2 models are averaged over n_mc samples
// with pairwise summation so the result is reduction-order independent.
GradientCovariance scalar_covariance(const SurrogateModel& model,
                                     Eigen::Index n_mc, std::uint64_t seed,
                                     const std::string& source = "");

// H = sum_i w_i C_i with one shared sample set across components, which
// makes the weighted-sum identity exact rather than statistical.
GradientCovariance vector_covariance(const std::vector<SurrogateModel>& models,
                                     const WeightVector& w, Eigen::Index n_mc,
                                     std::uint64_t seed,
                                     const std::string& source = "");

// Eigendecompose and split at the spectral gap (or at r_override).
SubspacePair subspace_from_covariance(const GradientCovariance& c,
                                      std::optional<Eigen::Index> r_override,
                                      double min_ratio = 10.0);

}  // namespace bev
