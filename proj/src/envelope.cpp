#include "bev/envelope.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace bev {

namespace {

double empirical_quantile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - std::floor(pos);
  return (1.0 - frac) * values[lo] + frac * values[hi];
}

double sigmoid(double t) {
  if (t >= 0) {
    const double e = std::exp(-t);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace

void EnvelopeBand::validate() const {
  const Eigen::Index n = nominal.n_nodes();
  if (lower.size() != n || upper.size() != n) {
    throw numeric_error("band bounds do not match node count");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (lower[i] > 1e-12 || upper[i] < -1e-12 || lower[i] > upper[i]) {
      throw numeric_error("band must satisfy lower <= 0 <= upper nodewise");
    }
  }
}

EnvelopeBand build_band(const GeometryOracle& oracle,
                        const SampleEnsemble& ensemble, double quantile) {
  if (ensemble.designs.rows() < 1) throw config_error("empty ensemble");
  if (quantile <= 0.5 || quantile > 1.0) {
    throw config_error("band quantile must be in (0.5, 1]");
  }
  const Eigen::Index n = oracle.settings().n_nodes;
  const Eigen::Index h = ensemble.designs.rows();
  // Displacements are linear in the design, one row per ensemble member,
  // plus the zero design.
  Eigen::MatrixXd disp =
      ensemble.designs * oracle.bump_matrix().transpose();  // h x N
  EnvelopeBand band;
  band.nominal = oracle.nominal();
  band.quantile = quantile;
  band.lower.resize(n);
  band.upper.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> values(static_cast<std::size_t>(h) + 1, 0.0);
    for (Eigen::Index k = 0; k < h; ++k) {
      values[static_cast<std::size_t>(k)] = disp(k, i);
    }
    band.lower[i] = empirical_quantile(values, 1.0 - quantile);
    band.upper[i] = empirical_quantile(values, quantile);
  }
  band.validate();
  return band;
}

void EnvelopeBand::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw config_error("cannot write band CSV: " + path);
  out.precision(17);
  out << "node,x,y,lower,upper\n";
  for (Eigen::Index i = 0; i < nominal.n_nodes(); ++i) {
    out << i << "," << nominal.nodes(i, 0) << "," << nominal.nodes(i, 1) << ","
        << lower[i] << "," << upper[i] << "\n";
  }
}

EnvelopeBand EnvelopeBand::load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open band CSV: " + path);
  std::string line;
  std::getline(in, line);
  std::vector<std::array<double, 4>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() != 5) throw config_error("band CSV row needs 5 columns");
    rows.push_back({vals[1], vals[2], vals[3], vals[4]});
  }
  EnvelopeBand band;
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  band.nominal.nodes.resize(n, 2);
  band.nominal.arc_fraction = Eigen::VectorXd::Zero(n);
  band.lower.resize(n);
  band.upper.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    band.nominal.nodes(i, 0) = rows[i][0];
    band.nominal.nodes(i, 1) = rows[i][1];
    band.lower[i] = rows[i][2];
    band.upper[i] = rows[i][3];
  }
  return band;
}

Eigen::VectorXd signed_displacement(const BladeProfile& nominal,
                                    const Eigen::MatrixXd& normals,
                                    const BladeProfile& test) {
  if (test.n_nodes() != nominal.n_nodes()) {
    throw config_error("profile node count does not match nominal");
  }
  Eigen::VectorXd disp(nominal.n_nodes());
  for (Eigen::Index i = 0; i < nominal.n_nodes(); ++i) {
    disp[i] = (test.nodes.row(i) - nominal.nodes.row(i)).dot(normals.row(i));
  }
  return disp;
}

void MahalanobisModel::factorize() {
  const Eigen::Index n = covariance_.rows();
  ridge_ = 1e-8 * covariance_.trace() / static_cast<double>(n) * ridge_mul_;
  Eigen::MatrixXd reg = covariance_;
  reg.diagonal().array() += ridge_;
  Eigen::LLT<Eigen::MatrixXd> llt(reg);
  if (llt.info() != Eigen::Success) {
    throw numeric_error(
        "covariance not positive definite after ridge; increase ridge");
  }
  chol_lower_ = llt.matrixL();
}

MahalanobisModel MahalanobisModel::fit(const Eigen::MatrixXd& rows,
                                       double ridge_scale) {
  if (rows.rows() < 2) throw config_error("need at least two rows");
  MahalanobisModel m;
  m.mean_ = rows.colwise().mean();
  const Eigen::MatrixXd centered = rows.rowwise() - m.mean_.transpose();
  m.covariance_ = (centered.transpose() * centered) /
                  static_cast<double>(rows.rows() - 1);
  m.ridge_mul_ = ridge_scale / 1e-8;
  m.factorize();
  return m;
}

double MahalanobisModel::distance(const Eigen::VectorXd& v) const {
  if (v.size() != mean_.size()) {
    throw config_error("vector length does not match model dimension");
  }
  const Eigen::VectorXd w =
      chol_lower_.triangularView<Eigen::Lower>().solve(v - mean_);
  return w.norm();
}

nlohmann::json MahalanobisModel::to_json() const {
  nlohmann::json j;
  j["mean"] = std::vector<double>(mean_.data(), mean_.data() + mean_.size());
  j["covariance"] = matrix_to_json(covariance_);
  j["ridge"] = ridge_;
  j["ridge_mul"] = ridge_mul_;
  return j;
}

MahalanobisModel MahalanobisModel::from_json(const nlohmann::json& j) {
  MahalanobisModel m;
  const auto mean = j.at("mean").get<std::vector<double>>();
  m.mean_ = Eigen::Map<const Eigen::VectorXd>(
      mean.data(), static_cast<Eigen::Index>(mean.size()));
  m.covariance_ = matrix_from_json(j.at("covariance"));
  m.ridge_mul_ = j.value("ridge_mul", 1.0);
  m.factorize();
  return m;
}

double output_mahalanobis(const Eigen::MatrixXd& outputs,
                          const Eigen::VectorXd& y_test, double ridge_scale) {
  if (outputs.rows() < 3) {
    throw config_error("output Mahalanobis needs at least 3 output vectors");
  }
  const auto model = MahalanobisModel::fit(outputs, ridge_scale);
  return model.distance(y_test);
}

LogisticFit train_logistic(const Eigen::VectorXd& distances,
                           const std::vector<int>& labels) {
  const Eigen::Index m = distances.size();
  if (static_cast<Eigen::Index>(labels.size()) != m || m < 2) {
    throw config_error("distances and labels must match and have >= 2 rows");
  }
  double min_acc = std::numeric_limits<double>::infinity();
  double max_acc = -std::numeric_limits<double>::infinity();
  double min_rej = std::numeric_limits<double>::infinity();
  double max_rej = -std::numeric_limits<double>::infinity();
  Eigen::Index n_acc = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (labels[static_cast<std::size_t>(i)]) {
      ++n_acc;
      min_acc = std::min(min_acc, distances[i]);
      max_acc = std::max(max_acc, distances[i]);
    } else {
      min_rej = std::min(min_rej, distances[i]);
      max_rej = std::max(max_rej, distances[i]);
    }
  }
  if (n_acc == 0 || n_acc == m) {
    throw config_error("logistic training needs both classes present");
  }

  constexpr double kSlopeCap = 1e3;
  LogisticFit fit;
  if (max_acc < min_rej) {
    // Perfectly separable with accepts at small distance: capped slope,
    // boundary midway between the classes.
    fit.separable = true;
    fit.slope = -kSlopeCap;
    fit.intercept = kSlopeCap * 0.5 * (max_acc + min_rej);
    return fit;
  }
  if (max_rej < min_acc) {
    fit.separable = true;
    fit.slope = kSlopeCap;
    fit.intercept = -kSlopeCap * 0.5 * (max_rej + min_acc);
    return fit;
  }

  Eigen::Vector2d theta(0.0, 0.0);  // (slope, intercept)
  for (int iter = 0; iter < 500; ++iter) {
    Eigen::Vector2d grad = Eigen::Vector2d::Zero();
    Eigen::Matrix2d hess = Eigen::Matrix2d::Zero();
    for (Eigen::Index i = 0; i < m; ++i) {
      const Eigen::Vector2d phi(distances[i], 1.0);
      const double p = sigmoid(theta.dot(phi));
      const double y = labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
      grad += (y - p) * phi;
      hess -= p * (1.0 - p) * phi * phi.transpose();
    }
    fit.iterations = iter + 1;
    if (grad.norm() <= 1e-8) break;
    hess.diagonal().array() -= 1e-12;  // keep invertible near separation
    theta -= hess.inverse() * grad;
    if (std::abs(theta[0]) > kSlopeCap) {
      theta[0] = theta[0] > 0 ? kSlopeCap : -kSlopeCap;
      fit.separable = true;
      break;
    }
  }
  fit.slope = theta[0];
  fit.intercept = theta[1];
  return fit;
}

double DecisionModel::accept_probability(double distance) const {
  if (!trained) throw config_error("decision model is not trained");
  return sigmoid(logistic.slope * distance + logistic.intercept);
}

nlohmann::json DecisionModel::to_json() const {
  nlohmann::json j;
  j["geometry"] = geometry.to_json();
  j["logistic"] = {{"slope", logistic.slope},
                   {"intercept", logistic.intercept},
                   {"separable", logistic.separable},
                   {"iterations", logistic.iterations}};
  j["threshold_distance"] = threshold_distance;
  j["delta_threshold"] = delta_threshold;
  j["trained"] = trained;
  return j;
}

DecisionModel DecisionModel::from_json(const nlohmann::json& j) {
  DecisionModel m;
  m.geometry = MahalanobisModel::from_json(j.at("geometry"));
  m.logistic.slope = j.at("logistic").at("slope").get<double>();
  m.logistic.intercept = j.at("logistic").at("intercept").get<double>();
  m.logistic.separable = j.at("logistic").at("separable").get<bool>();
  m.logistic.iterations = j.at("logistic").at("iterations").get<int>();
  m.threshold_distance = j.at("threshold_distance").get<double>();
  m.delta_threshold = j.at("delta_threshold").get<double>();
  m.trained = j.at("trained").get<bool>();
  return m;
}

Classification classify(const DecisionModel& model,
                        const Eigen::VectorXd& displacement) {
  Classification c;
  c.distance = model.geometry.distance(displacement);
  c.accept_probability = model.accept_probability(c.distance);
  c.accept = c.accept_probability >= 0.5;
  return c;
}

Classification classify_profile(const DecisionModel& model,
                                const GeometryOracle& oracle,
                                const BladeProfile& profile) {
  return classify(model, signed_displacement(oracle.nominal(),
                                             oracle.normals(), profile));
}

}  // namespace bev
