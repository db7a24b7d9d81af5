#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "bev/error.hpp"
#include "bev/linalg.hpp"
#include "json.hpp"

namespace bev {

/// Designs and observed outputs with a fixed train/validation split.
struct TrainingSet {
  Eigen::MatrixXd inputs;   // M x d, rows in [-1,1]^d
  Eigen::MatrixXd outputs;  // M x n_out
  std::vector<Eigen::Index> train_rows;
  std::vector<Eigen::Index> validation_rows;

  Eigen::Index ambient_dim() const { return inputs.cols(); }
  Eigen::Index n_outputs() const { return outputs.cols(); }

  void validate() const;

  // First ceil(fraction*M) rows train, the remainder validate.
  static TrainingSet with_split(Eigen::MatrixXd inputs, Eigen::MatrixXd outputs,
                                double train_fraction);
};

// CSV rows are d inputs followed by the output columns.
TrainingSet load_training_csv(const std::string& path, Eigen::Index d,
                              double train_fraction);
void save_training_csv(const std::string& path, const TrainingSet& ts);

/// Total-degree Legendre polynomial response surface with exact gradients.
/// The basis is orthonormal under the uniform measure on [-1,1]^d.
class SurrogateModel {
 public:
  SurrogateModel() = default;

  int degree() const { return degree_; }
  Eigen::Index ambient_dim() const { return ambient_dim_; }
  const Eigen::VectorXd& coefficients() const { return coefficients_; }
  const std::vector<std::vector<int>>& multi_indices() const {
    return multi_indices_;
  }
  double training_r2() const { return training_r2_; }
  double validation_r2() const { return validation_r2_; }
  double condition_number() const { return condition_number_; }

  double evaluate(const Eigen::VectorXd& x) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const;

  // For degree-1 models: the constant gradient expressed in monomial form,
  // i.e. f(x) = c0 + g^T x  with g the returned vector.
  Eigen::VectorXd linear_coefficients() const;

  // Unit vector spanning the one-dimensional active subspace of a
  // degree-1 model. Throws on zero gradient ("constant objective").
  OrthonormalBasis active_direction_linear() const;

  nlohmann::json to_json() const;
  static SurrogateModel from_json(const nlohmann::json& j);

  // Least-squares fit over the training rows of ts, output column out_col.
  static SurrogateModel fit(const TrainingSet& ts, int degree,
                            Eigen::Index out_col = 0);

 private:
  int degree_ = 0;
  Eigen::Index ambient_dim_ = 0;
  std::vector<std::vector<int>> multi_indices_;
  Eigen::VectorXd coefficients_;
  double training_r2_ = 0.0;
  double validation_r2_ = 0.0;
  double condition_number_ = 0.0;
};

// Multi-indices of the total-degree basis, graded lexicographic order.
std::vector<std::vector<int>> total_degree_indices(Eigen::Index d, int degree);

}  // namespace bev
