#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>

#include "bev/error.hpp"
#include "json.hpp"

namespace bev {

/// Closed blade-like profile: trailing edge -> suction side -> leading
/// edge -> pressure side -> trailing edge.
struct BladeProfile {
  Eigen::MatrixXd nodes;        // N x 2, (x_chord, y)
  Eigen::VectorXd arc_fraction; // N, in [0,1)

  Eigen::Index n_nodes() const { return nodes.rows(); }

  // N >= 64 and no self-intersection (segment-pair sweep).
  void validate() const;

  void save_csv(const std::string& path) const;
  static BladeProfile load_csv(const std::string& path);
};

struct FlowSample {
  double loss = 0.0;
  double mass_flow = 0.0;
  Eigen::VectorXd mach_distribution;  // N, entries >= 0
};

// Surface Mach number from the stagnation-to-static pressure ratio,
// M = sqrt(2/(gamma-1) * ((p01/p)^((gamma-1)/gamma) - 1)).
// Throws for p_ratio < 1 (imaginary M).
double isentropic_mach(double p_ratio, double gamma = 1.4);

/// Synthetic flow oracle over a bump-deformed blade profile. The loss,
/// mass flow and Mach-distribution responses have known low-dimensional
/// structure: loss is a ridge in one direction plus a small orthogonal
/// quadratic, mass flow is exactly affine, and the Mach distribution is
/// the nominal distribution plus six rank-one modes localized near the
/// suction peak and the leading edge. All generator quantities are fixed
/// by the seed and exported so tests can build independent checks.
class GeometryOracle {
 public:
  struct Settings {
    Eigen::Index d = 20;        // design space dimension (bump count)
    Eigen::Index n_nodes = 128; // surface nodes
    double amplitude = 0.01;    // per-bump displacement scale
    double gamma = 1.4;
    std::uint64_t seed = 7;
  };

  explicit GeometryOracle(const Settings& settings);

  const Settings& settings() const { return settings_; }
  Eigen::Index ambient_dim() const { return settings_.d; }
  const BladeProfile& nominal() const { return nominal_; }
  const Eigen::MatrixXd& normals() const { return normals_; }

  // Signed normal displacement field as a linear map of the design:
  // displacement(x) = bump_matrix() * x.
  const Eigen::MatrixXd& bump_matrix() const { return bump_matrix_; }
  Eigen::VectorXd displacement(const Eigen::VectorXd& x) const;

  BladeProfile deform(const Eigen::VectorXd& x) const;
  FlowSample evaluate_flow(const Eigen::VectorXd& x) const;

  // Exact generator structure.
  const Eigen::VectorXd& loss_direction() const { return w_loss_; }   // unit
  const Eigen::VectorXd& mass_flow_coefficients() const { return w_fm_; }
  double nominal_loss() const { return loss_offset_; }
  double nominal_mass_flow() const { return mass_flow_offset_; }
  double loss_ridge(double u) const;  // the 1-D ridge profile g_loss
  double loss_ridge_orthogonal_bound() const { return loss_eps_; }
  const Eigen::MatrixXd& mach_mode_directions() const { return mach_dirs_; }  // d x 6
  const Eigen::MatrixXd& mach_mode_profiles() const { return mach_profiles_; } // N x 6 (scaled)
  const Eigen::VectorXd& nominal_mach() const { return nominal_mach_; }
  Eigen::Index peak_node() const { return peak_node_; }
  Eigen::Index leading_edge_node() const { return le_node_; }

  nlohmann::json generator_to_json() const;

 private:
  Settings settings_;
  BladeProfile nominal_;
  Eigen::MatrixXd normals_;      // N x 2 outward unit normals
  Eigen::MatrixXd bump_matrix_;  // N x d

  Eigen::VectorXd w_loss_;  // unit
  Eigen::VectorXd w_fm_;    // coefficient vector, orthogonal to w_loss_
  double loss_offset_ = 5.0;
  double loss_linear_ = 1.0;
  double loss_quadratic_ = 0.4;
  double loss_eps_ = 1e-3;
  double mass_flow_offset_ = 15.0;

  Eigen::MatrixXd mach_dirs_;      // d x 6, orthonormal, orthogonal to w_loss_, w_fm_
  Eigen::MatrixXd mach_profiles_;  // N x 6, mode k scaled by its magnitude
  Eigen::VectorXd nominal_mach_;
  Eigen::Index peak_node_ = 0;
  Eigen::Index le_node_ = 0;
};

// The fixed nominal profile used by every oracle with the same node count.
BladeProfile nominal_blade_profile(Eigen::Index n_nodes);

// Outward unit normals at every node, from central-difference tangents.
Eigen::MatrixXd profile_normals(const BladeProfile& profile);

}  // namespace bev
