#include "bev/covariance.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "bev/rng.hpp"

namespace bev {

void WeightVector::validate() const {
  if (weights.size() < 1) throw config_error("weight vector is empty");
  if ((weights.array() < 0.0).any()) {
    throw config_error("weights must be nonnegative");
  }
  if (weights.maxCoeff() <= 0.0) {
    throw config_error("at least one weight must be positive");
  }
}

WeightVector smooth_weights(Eigen::Index n_nodes,
                            const std::vector<Eigen::Index>& core_nodes,
                            Eigen::Index radius,
                            const std::string& description) {
  if (n_nodes < 1 || core_nodes.empty() || radius < 1) {
    throw config_error("smooth_weights needs nodes, core set and radius >= 1");
  }
  WeightVector w;
  w.description = description;
  w.weights = Eigen::VectorXd::Zero(n_nodes);
  for (Eigen::Index i = 0; i < n_nodes; ++i) {
    double best = 0.0;
    for (Eigen::Index c : core_nodes) {
      Eigen::Index delta = std::abs(i - c);
      delta = std::min(delta, n_nodes - delta);  // closed curve
      const double taper =
          1.0 - static_cast<double>(delta) / static_cast<double>(radius);
      best = std::max(best, taper);
    }
    w.weights[i] = std::max(0.0, best);
  }
  w.validate();
  return w;
}

void GradientCovariance::validate() const {
  const double asym = (matrix - matrix.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10) {
    std::ostringstream os;
    os << "gradient covariance not symmetric: " << asym;
    throw numeric_error(os.str());
  }
}

nlohmann::json GradientCovariance::to_json() const {
  nlohmann::json j;
  j["matrix"] = matrix_to_json(matrix);
  j["n_samples"] = n_samples;
  j["seed"] = seed;
  j["source"] = source;
  return j;
}

GradientCovariance GradientCovariance::from_json(const nlohmann::json& j) {
  GradientCovariance c;
  c.matrix = matrix_from_json(j.at("matrix"));
  c.n_samples = j.at("n_samples").get<Eigen::Index>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.source = j.at("source").get<std::string>();
  c.validate();
  return c;
}

Eigen::MatrixXd covariance_samples(Eigen::Index d, Eigen::Index n_mc,
                                   std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd samples(n_mc, d);
  for (Eigen::Index k = 0; k < n_mc; ++k) {
    samples.row(k) = rng.cube_point(d).transpose();
  }
  return samples;
}

namespace {

// Pairwise reduction over sample indices [lo, hi); result is independent
// of how a parallel caller would split the range.
Eigen::MatrixXd pairwise_sum(
    Eigen::Index lo, Eigen::Index hi,
    const std::function<Eigen::MatrixXd(Eigen::Index)>& term) {
  if (hi - lo == 1) return term(lo);
  const Eigen::Index mid = lo + (hi - lo) / 2;
  return pairwise_sum(lo, mid, term) + pairwise_sum(mid, hi, term);
}

}  // namespace

GradientCovariance scalar_covariance(const SurrogateModel& model,
                                     Eigen::Index n_mc, std::uint64_t seed,
                                     const std::string& source) {
  GradientCovariance out;
  out.seed = seed;
  out.source = source;
  if (model.degree() == 1) {
    const Eigen::VectorXd g = model.linear_coefficients();
    out.matrix = g * g.transpose();
    out.n_samples = 0;
    return out;
  }
  if (n_mc < 1) throw config_error("n_mc must be >= 1 for degree-2 models");
  const Eigen::MatrixXd samples =
      covariance_samples(model.ambient_dim(), n_mc, seed);
  Eigen::MatrixXd sum = pairwise_sum(0, n_mc, [&](Eigen::Index k) {
    const Eigen::VectorXd g = model.gradient(samples.row(k).transpose());
    return Eigen::MatrixXd(g * g.transpose());
  });
  out.matrix = (sum / static_cast<double>(n_mc)).eval();
  out.matrix = 0.5 * (out.matrix + out.matrix.transpose()).eval();
  out.n_samples = n_mc;
  return out;
}

GradientCovariance vector_covariance(const std::vector<SurrogateModel>& models,
                                     const WeightVector& w, Eigen::Index n_mc,
                                     std::uint64_t seed,
                                     const std::string& source) {
  w.validate();
  if (models.empty()) throw config_error("no component models supplied");
  if (static_cast<Eigen::Index>(models.size()) != w.weights.size()) {
    std::ostringstream os;
    os << "weight count " << w.weights.size() << " does not match component count "
       << models.size();
    throw config_error(os.str());
  }
  const Eigen::Index d = models.front().ambient_dim();
  for (const auto& m : models) {
    if (m.ambient_dim() != d) {
      throw config_error("component models disagree on ambient dimension");
    }
  }
  if (n_mc < 1) throw config_error("n_mc must be >= 1");
  const Eigen::MatrixXd samples = covariance_samples(d, n_mc, seed);

  GradientCovariance out;
  out.seed = seed;
  out.source = source;
  out.n_samples = n_mc;
  // Per sample this is J R J^T; summed and averaged it equals
  // sum_i w_i C_i with the same sample set.
  Eigen::MatrixXd sum = pairwise_sum(0, n_mc, [&](Eigen::Index k) {
    const Eigen::VectorXd x = samples.row(k).transpose();
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t i = 0; i < models.size(); ++i) {
      const double wi = w.weights[static_cast<Eigen::Index>(i)];
      if (wi == 0.0) continue;
      const Eigen::VectorXd g = models[i].gradient(x);
      h.noalias() += wi * (g * g.transpose());
    }
    return h;
  });
  out.matrix = (sum / static_cast<double>(n_mc)).eval();
  out.matrix = 0.5 * (out.matrix + out.matrix.transpose()).eval();
  return out;
}

SubspacePair subspace_from_covariance(const GradientCovariance& c,
                                      std::optional<Eigen::Index> r_override,
                                      double min_ratio) {
  c.validate();
  const EigenDecomposition ed = eigendecompose_spsd(c.matrix);
  const Eigen::Index d = ed.eigenvalues.size();
  Eigen::Index r;
  if (r_override) {
    r = *r_override;
    if (r < 1 || r >= d) throw config_error("r_override out of range");
  } else {
    const auto gap = select_gap(ed.eigenvalues, min_ratio);
    if (!gap) {
      throw numeric_error(
          "no active directions: eigenvalue gap below min_ratio");
    }
    r = *gap;
  }
  SubspacePair sp;
  sp.active.columns = ed.eigenvectors.columns.leftCols(r);
  sp.inactive.columns = ed.eigenvectors.columns.rightCols(d - r);
  sp.eigenvalues = ed.eigenvalues;
  sp.gap_index = r;
  sp.validate();
  return sp;
}

}  // namespace bev
