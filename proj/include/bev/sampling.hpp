#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "bev/linalg.hpp"

namespace bev {

/// One active block: orthonormal directions pinned to target coordinates.
struct ActiveBlock {
  std::string label;
  OrthonormalBasis basis;   // W_i, d x r_i
  Eigen::VectorXd target;   // u_i, length r_i
};

/// The coordinate split D = [W_1 ... W_n V] with targets for the active part.
struct ActiveCoordinateSpec {
  std::vector<ActiveBlock> blocks;
  OrthonormalBasis inactive;  // V

  Eigen::Index ambient_dim() const { return inactive.ambient_dim(); }
  Eigen::Index inactive_dim() const { return inactive.subspace_dim(); }

  // Throws if [W_1 ... W_n V] is not orthonormal within 1e-9 or targets
  // have wrong lengths.
  void validate() const;

  // sum_i W_i u_i, the unique point of the slice within span(W_1..W_n).
  Eigen::VectorXd base_point() const;

  nlohmann::json to_json() const;
  static ActiveCoordinateSpec from_json(const nlohmann::json& j);
};

// Assembles a spec from raw active bases that need not be mutually
// orthogonal: each block is orthogonalized against its predecessors
// (rotations are tiny when the bases are nearly orthogonal already), and
// V is the orthogonal complement of the union. Throws numeric_error when
// a block collapses (fully contained in earlier blocks).
ActiveCoordinateSpec make_coordinate_spec(
    const std::vector<ActiveBlock>& raw_blocks, double rank_tol = 1e-8);

struct SampleEnsemble {
  Eigen::MatrixXd designs;  // h x d, rows in [-1,1]^d
  ActiveCoordinateSpec spec;
  std::uint64_t seed = 0;
  Eigen::Index burn_in = 0;
  Eigen::Index thinning = 1;

  // Cube bounds within 1e-12 and every block constraint within 1e-9,
  // checked for every row.
  void validate() const;

  void save_csv(const std::string& designs_path,
                const std::string& sidecar_path) const;
  static SampleEnsemble load_csv(const std::string& designs_path,
                                 const std::string& sidecar_path);
};

// Uniform samples from {x in [-1,1]^d : W_i^T x = u_i for all blocks} by
// hit-and-run on the inactive coordinates z, x = base + V z. Every step
// picks a uniform direction in z-space, intersects it exactly with the
// hypercube to get the feasible chord, and draws uniformly on the chord.
SampleEnsemble hit_and_run(const ActiveCoordinateSpec& spec, Eigen::Index h,
                           std::uint64_t seed, Eigen::Index burn_in = 1000,
                           Eigen::Index thinning = 10);

// x = sum_i W_i u_i + V V^T x_base: active coordinates overwritten,
// inactive coordinates inherited. out_of_box reports hypercube exit.
Eigen::VectorXd set_active_coordinates(const Eigen::VectorXd& x_base,
                                       const ActiveCoordinateSpec& spec,
                                       bool* out_of_box = nullptr);

}  // namespace bev
