#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "bev/error.hpp"
#include "bev/oracle.hpp"
#include "bev/sampling.hpp"
#include "json.hpp"

namespace bev {

/// Per-node displacement bounds around the nominal profile.
struct EnvelopeBand {
  BladeProfile nominal;
  Eigen::VectorXd lower;  // signed normal displacement, <= 0
  Eigen::VectorXd upper;  // >= 0
  double quantile = 1.0;

  void validate() const;
  void save_csv(const std::string& path) const;
  static EnvelopeBand load_csv(const std::string& path);
};

// Empirical (1-q, q) quantiles of signed normal displacement per node
// across the ensemble's deformed profiles; the zero design is always
// included so the nominal profile stays inside the band. quantile = 1
// gives min/max.
EnvelopeBand build_band(const GeometryOracle& oracle,
                        const SampleEnsemble& ensemble, double quantile = 1.0);

// Signed displacement of a profile versus the nominal, measured along the
// nominal outward normals.
Eigen::VectorXd signed_displacement(const BladeProfile& nominal,
                                    const Eigen::MatrixXd& normals,
                                    const BladeProfile& test);

/// Mean/covariance over a set of vectors with a Mahalanobis distance.
/// Ridge defaults to 1e-8 * trace(S)/n, added before factorization.
class MahalanobisModel {
 public:
  static MahalanobisModel fit(const Eigen::MatrixXd& rows,
                              double ridge_scale = 1e-8);

  double distance(const Eigen::VectorXd& v) const;
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return covariance_; }
  double ridge() const { return ridge_; }

  nlohmann::json to_json() const;
  static MahalanobisModel from_json(const nlohmann::json& j);

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd covariance_;
  Eigen::MatrixXd chol_lower_;
  double ridge_ = 0.0;
  double ridge_mul_ = 1.0;

  void factorize();
};

// The output-space distance delta: ensemble mean/covariance of the output
// vectors, then sqrt((y - mu)^T S^-1 (y - mu)). Needs >= 3 output rows.
double output_mahalanobis(const Eigen::MatrixXd& outputs,
                          const Eigen::VectorXd& y_test,
                          double ridge_scale = 1e-8);

struct LogisticFit {
  double slope = 0.0;      // negative: accept probability falls with distance
  double intercept = 0.0;
  bool separable = false;
  int iterations = 0;
};

// One-dimensional maximum-likelihood logistic regression of accept (1) /
// reject (0) labels on distance. Perfectly separable data converges to a
// capped-slope solution (|slope| <= 1e3) with the separable flag set.
LogisticFit train_logistic(const Eigen::VectorXd& distances,
                           const std::vector<int>& labels);

/// Geometry statistics plus the trained scrap-or-use classifier.
struct DecisionModel {
  MahalanobisModel geometry;  // over per-node signed displacements
  LogisticFit logistic;
  double threshold_distance = 0.0;  // distance at accept probability 0.5
  double delta_threshold = 3.0;     // output-space accept bound
  bool trained = false;

  double accept_probability(double distance) const;

  nlohmann::json to_json() const;
  static DecisionModel from_json(const nlohmann::json& j);
};

struct Classification {
  double distance = 0.0;
  double accept_probability = 0.0;
  bool accept = false;
};

Classification classify(const DecisionModel& model,
                        const Eigen::VectorXd& displacement);
Classification classify_profile(const DecisionModel& model,
                                const GeometryOracle& oracle,
                                const BladeProfile& profile);

}  // namespace bev
