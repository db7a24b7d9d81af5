#include "bev/surrogate.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unordered_set>

namespace bev {

namespace {

constexpr double kSqrt3 = 1.7320508075688772;
constexpr double kSqrt5 = 2.23606797749979;

// Normalized Legendre polynomials on [-1,1] under the uniform measure.
double leg(int order, double t) {
  switch (order) {
    case 0:
      return 1.0;
    case 1:
      return kSqrt3 * t;
    case 2:
      return kSqrt5 * 0.5 * (3.0 * t * t - 1.0);
    default:
      throw numeric_error("unsupported Legendre order");
  }
}

double leg_deriv(int order, double t) {
  switch (order) {
    case 0:
      return 0.0;
    case 1:
      return kSqrt3;
    case 2:
      return 3.0 * kSqrt5 * t;
    default:
      throw numeric_error("unsupported Legendre order");
  }
}

double r_squared(const Eigen::VectorXd& y, const Eigen::VectorXd& pred) {
  const double mean = y.mean();
  const double ss_tot = (y.array() - mean).square().sum();
  const double ss_res = (y - pred).squaredNorm();
  if (ss_tot <= 0.0) return ss_res <= 1e-24 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

std::string index_name(const std::vector<int>& alpha) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (i) os << ",";
    os << alpha[i];
  }
  os << ")";
  return os.str();
}

}  // namespace

void TrainingSet::validate() const {
  if (inputs.rows() != outputs.rows()) {
    throw config_error("training inputs and outputs disagree on row count");
  }
  if ((inputs.array().abs() > 1.0 + 1e-12).any()) {
    throw config_error("training inputs must lie in [-1,1]^d");
  }
  if (!outputs.allFinite()) {
    throw config_error("training outputs must be finite");
  }
  std::unordered_set<Eigen::Index> seen(train_rows.begin(), train_rows.end());
  for (Eigen::Index r : validation_rows) {
    if (seen.count(r)) {
      throw config_error("validation rows overlap training rows");
    }
  }
}

TrainingSet TrainingSet::with_split(Eigen::MatrixXd inputs,
                                    Eigen::MatrixXd outputs,
                                    double train_fraction) {
  if (train_fraction <= 0.0 || train_fraction > 1.0) {
    throw config_error("train_fraction must be in (0,1]");
  }
  TrainingSet ts;
  ts.inputs = std::move(inputs);
  ts.outputs = std::move(outputs);
  const Eigen::Index m = ts.inputs.rows();
  const Eigen::Index n_train = static_cast<Eigen::Index>(
      std::ceil(train_fraction * static_cast<double>(m)));
  for (Eigen::Index i = 0; i < m; ++i) {
    (i < n_train ? ts.train_rows : ts.validation_rows).push_back(i);
  }
  ts.validate();
  return ts;
}

TrainingSet load_training_csv(const std::string& path, Eigen::Index d,
                              double train_fraction) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open training CSV: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (static_cast<Eigen::Index>(row.size()) <= d) {
      throw config_error("training CSV row has no output columns");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw config_error("training CSV is empty: " + path);
  const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index n_out = static_cast<Eigen::Index>(rows[0].size()) - d;
  Eigen::MatrixXd inputs(m, d), outputs(m, n_out);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != d + n_out) {
      throw config_error("training CSV rows have inconsistent widths");
    }
    for (Eigen::Index j = 0; j < d; ++j) inputs(i, j) = rows[i][j];
    for (Eigen::Index j = 0; j < n_out; ++j) outputs(i, j) = rows[i][d + j];
  }
  return TrainingSet::with_split(std::move(inputs), std::move(outputs),
                                 train_fraction);
}

void save_training_csv(const std::string& path, const TrainingSet& ts) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot write training CSV: " + path);
  out.precision(17);
  for (Eigen::Index i = 0; i < ts.inputs.rows(); ++i) {
    for (Eigen::Index j = 0; j < ts.inputs.cols(); ++j) {
      if (j) out << ",";
      out << ts.inputs(i, j);
    }
    for (Eigen::Index j = 0; j < ts.outputs.cols(); ++j) {
      out << "," << ts.outputs(i, j);
    }
    out << "\n";
  }
}

std::vector<std::vector<int>> total_degree_indices(Eigen::Index d, int degree) {
  if (degree < 1 || degree > 2) {
    throw config_error("surrogate degree must be 1 or 2");
  }
  std::vector<std::vector<int>> out;
  out.emplace_back(d, 0);  // constant term
  for (Eigen::Index i = 0; i < d; ++i) {
    std::vector<int> a(d, 0);
    a[i] = 1;
    out.push_back(a);
  }
  if (degree == 2) {
    for (Eigen::Index i = 0; i < d; ++i) {
      std::vector<int> a(d, 0);
      a[i] = 2;
      out.push_back(a);
    }
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = i + 1; j < d; ++j) {
        std::vector<int> a(d, 0);
        a[i] = 1;
        a[j] = 1;
        out.push_back(a);
      }
    }
  }
  return out;
}

namespace {

double basis_value(const std::vector<int>& alpha, const Eigen::VectorXd& x) {
  double v = 1.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (alpha[i]) v *= leg(alpha[i], x[i]);
  }
  return v;
}

}  // namespace

double SurrogateModel::evaluate(const Eigen::VectorXd& x) const {
  if (x.size() != ambient_dim_) throw numeric_error("dimension mismatch");
  double v = 0.0;
  for (std::size_t t = 0; t < multi_indices_.size(); ++t) {
    v += coefficients_[static_cast<Eigen::Index>(t)] *
         basis_value(multi_indices_[t], x);
  }
  return v;
}

Eigen::VectorXd SurrogateModel::gradient(const Eigen::VectorXd& x) const {
  if (x.size() != ambient_dim_) throw numeric_error("dimension mismatch");
  Eigen::VectorXd g = Eigen::VectorXd::Zero(ambient_dim_);
  for (std::size_t t = 0; t < multi_indices_.size(); ++t) {
    const auto& alpha = multi_indices_[t];
    const double c = coefficients_[static_cast<Eigen::Index>(t)];
    if (c == 0.0) continue;
    for (Eigen::Index k = 0; k < ambient_dim_; ++k) {
      if (alpha[k] == 0) continue;
      double term = c * leg_deriv(alpha[k], x[k]);
      for (Eigen::Index i = 0; i < ambient_dim_; ++i) {
        if (i != k && alpha[i]) term *= leg(alpha[i], x[i]);
      }
      g[k] += term;
    }
  }
  return g;
}

Eigen::VectorXd SurrogateModel::linear_coefficients() const {
  if (degree_ != 1) {
    throw numeric_error("linear_coefficients requires a degree-1 model");
  }
  // Gradient is constant; evaluate at the origin.
  return gradient(Eigen::VectorXd::Zero(ambient_dim_));
}

OrthonormalBasis SurrogateModel::active_direction_linear() const {
  const Eigen::VectorXd g = linear_coefficients();
  const double norm = g.norm();
  if (norm < 1e-14) {
    throw numeric_error("constant objective: zero gradient, no active direction");
  }
  OrthonormalBasis b;
  b.columns = g / norm;
  return b;
}

SurrogateModel SurrogateModel::fit(const TrainingSet& ts, int degree,
                                   Eigen::Index out_col) {
  ts.validate();
  if (out_col < 0 || out_col >= ts.n_outputs()) {
    throw config_error("output column out of range");
  }
  const Eigen::Index d = ts.ambient_dim();
  SurrogateModel m;
  m.degree_ = degree;
  m.ambient_dim_ = d;
  m.multi_indices_ = total_degree_indices(d, degree);
  const Eigen::Index n_terms = static_cast<Eigen::Index>(m.multi_indices_.size());
  const Eigen::Index n_train = static_cast<Eigen::Index>(ts.train_rows.size());
  if (n_train < n_terms) {
    std::ostringstream os;
    os << "insufficient training rows: " << n_train << " < " << n_terms
       << " basis terms";
    throw config_error(os.str());
  }

  Eigen::MatrixXd vand(n_train, n_terms);
  Eigen::VectorXd y(n_train);
  for (Eigen::Index i = 0; i < n_train; ++i) {
    const Eigen::VectorXd x = ts.inputs.row(ts.train_rows[i]).transpose();
    for (Eigen::Index t = 0; t < n_terms; ++t) {
      vand(i, t) = basis_value(m.multi_indices_[static_cast<std::size_t>(t)], x);
    }
    y[i] = ts.outputs(ts.train_rows[i], out_col);
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(vand);
  qr.setThreshold(1e-10);
  if (qr.rank() < n_terms) {
    // Name the basis terms the pivoting pushed past the numerical rank.
    std::ostringstream os;
    os << "rank-deficient design matrix; deficient basis terms:";
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index t = qr.rank(); t < n_terms; ++t) {
      os << " "
         << index_name(m.multi_indices_[static_cast<std::size_t>(perm[t])]);
    }
    throw numeric_error(os.str());
  }
  m.coefficients_ = qr.solve(y);

  {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(vand);
    const auto& s = svd.singularValues();
    m.condition_number_ = s[s.size() - 1] > 0 ? s[0] / s[s.size() - 1]
                                              : std::numeric_limits<double>::infinity();
    if (m.condition_number_ > 1e8) {
      std::cerr << "warning: surrogate design matrix condition number "
                << m.condition_number_ << "\n";
    }
  }

  m.training_r2_ = r_squared(y, vand * m.coefficients_);
  if (!ts.validation_rows.empty()) {
    const Eigen::Index n_val = static_cast<Eigen::Index>(ts.validation_rows.size());
    Eigen::VectorXd yv(n_val), pv(n_val);
    for (Eigen::Index i = 0; i < n_val; ++i) {
      const Eigen::VectorXd x = ts.inputs.row(ts.validation_rows[i]).transpose();
      yv[i] = ts.outputs(ts.validation_rows[i], out_col);
      pv[i] = m.evaluate(x);
    }
    m.validation_r2_ = r_squared(yv, pv);
  } else {
    m.validation_r2_ = m.training_r2_;
  }
  return m;
}

nlohmann::json SurrogateModel::to_json() const {
  nlohmann::json j;
  j["degree"] = degree_;
  j["ambient_dim"] = ambient_dim_;
  j["multi_indices"] = multi_indices_;
  j["coefficients"] = std::vector<double>(
      coefficients_.data(), coefficients_.data() + coefficients_.size());
  j["training_r2"] = training_r2_;
  j["validation_r2"] = validation_r2_;
  j["condition_number"] = condition_number_;
  return j;
}

SurrogateModel SurrogateModel::from_json(const nlohmann::json& j) {
  SurrogateModel m;
  m.degree_ = j.at("degree").get<int>();
  m.ambient_dim_ = j.at("ambient_dim").get<Eigen::Index>();
  m.multi_indices_ = j.at("multi_indices").get<std::vector<std::vector<int>>>();
  const auto c = j.at("coefficients").get<std::vector<double>>();
  m.coefficients_ = Eigen::Map<const Eigen::VectorXd>(
      c.data(), static_cast<Eigen::Index>(c.size()));
  m.training_r2_ = j.at("training_r2").get<double>();
  m.validation_r2_ = j.at("validation_r2").get<double>();
  m.condition_number_ = j.value("condition_number", 0.0);
  return m;
}

}  // namespace bev
