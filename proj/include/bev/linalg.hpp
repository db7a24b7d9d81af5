#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "bev/error.hpp"
#include "json.hpp"

namespace bev {

/// Matrix with orthonormal columns spanning a k-dimensional subspace of R^d.
struct OrthonormalBasis {
  Eigen::MatrixXd columns;  // d x k

  Eigen::Index ambient_dim() const { return columns.rows(); }
  Eigen::Index subspace_dim() const { return columns.cols(); }

  // Max |Q^T Q - I| entry; zero for an exactly orthonormal basis.
  double orthonormality_defect() const;

  // Throws numeric_error if the defect exceeds tol (default 1e-10).
  void validate(double tol = 1e-10) const;
};

/// Active/inactive split of R^d from an eigendecomposition.
struct SubspacePair {
  OrthonormalBasis active;      // W, d x r
  OrthonormalBasis inactive;    // V, d x (d-r)
  Eigen::VectorXd eigenvalues;  // length d, descending, nonnegative
  Eigen::Index gap_index = 0;   // r

  void validate() const;
};

struct EigenDecomposition {
  Eigen::VectorXd eigenvalues;  // descending, clamped at 0
  OrthonormalBasis eigenvectors;
};

// Eigendecomposition of a symmetric PSD matrix. Eigenvalues descending;
// small negatives (within -1e-12) clamped to zero; each eigenvector's first
// entry of magnitude > 1e-12 is made positive for reproducibility.
EigenDecomposition eigendecompose_spsd(const Eigen::MatrixXd& c,
                                       double symmetry_tol = 1e-10);

// Index r of the largest ratio eigenvalues[r-1]/eigenvalues[r], 1 <= r <= d-1.
// Returns nullopt when the best ratio is below min_ratio or all eigenvalues
// sit below eps_floor ("no active directions").
std::optional<Eigen::Index> select_gap(const Eigen::VectorXd& eigenvalues,
                                       double min_ratio,
                                       double eps_floor = 1e-14);

// Numerical rank from singular values: count of s_i > tol * s_max.
Eigen::Index numerical_rank(const Eigen::MatrixXd& m, double rel_tol);

// Orthonormal basis for the orthogonal complement of the direct sum of the
// given active subspaces. Rank of [W_1 ... W_n] is computed from singular
// values with relative threshold rank_tol, so duplicated or near-parallel
// active directions are handled. Throws numeric_error when the complement
// is trivial (rank == d).
OrthonormalBasis intersect_inactive(const std::vector<OrthonormalBasis>& active_bases,
                                    double rank_tol = 1e-8);

// JSON matrix schema: {"rows": r, "cols": c, "data": [row-major doubles]}.
nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);

nlohmann::json subspace_pair_to_json(const SubspacePair& sp);
SubspacePair subspace_pair_from_json(const nlohmann::json& j);

}  // namespace bev
