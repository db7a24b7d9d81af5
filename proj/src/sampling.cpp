#include "bev/sampling.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "bev/rng.hpp"

namespace bev {

void ActiveCoordinateSpec::validate() const {
  const Eigen::Index d = ambient_dim();
  Eigen::Index total = inactive_dim();
  for (const auto& b : blocks) {
    if (b.basis.ambient_dim() != d) {
      throw config_error("block '" + b.label + "' has wrong ambient dimension");
    }
    if (b.target.size() != b.basis.subspace_dim()) {
      throw config_error("block '" + b.label +
                         "' target length does not match its rank");
    }
    total += b.basis.subspace_dim();
  }
  if (total != d) {
    throw numeric_error("coordinate blocks do not span the design space");
  }
  Eigen::MatrixXd full(d, d);
  Eigen::Index col = 0;
  for (const auto& b : blocks) {
    full.middleCols(col, b.basis.subspace_dim()) = b.basis.columns;
    col += b.basis.subspace_dim();
  }
  full.middleCols(col, inactive_dim()) = inactive.columns;
  OrthonormalBasis d_matrix{full};
  const double defect = d_matrix.orthonormality_defect();
  if (defect > 1e-9) {
    std::ostringstream os;
    os << "coordinate matrix D not orthonormal: defect " << defect;
    throw numeric_error(os.str());
  }
}

Eigen::VectorXd ActiveCoordinateSpec::base_point() const {
  Eigen::VectorXd base = Eigen::VectorXd::Zero(ambient_dim());
  for (const auto& b : blocks) {
    base.noalias() += b.basis.columns * b.target;
  }
  return base;
}

nlohmann::json ActiveCoordinateSpec::to_json() const {
  nlohmann::json j;
  j["blocks"] = nlohmann::json::array();
  for (const auto& b : blocks) {
    nlohmann::json jb;
    jb["label"] = b.label;
    jb["basis"] = matrix_to_json(b.basis.columns);
    jb["target"] =
        std::vector<double>(b.target.data(), b.target.data() + b.target.size());
    j["blocks"].push_back(jb);
  }
  j["inactive"] = matrix_to_json(inactive.columns);
  return j;
}

ActiveCoordinateSpec ActiveCoordinateSpec::from_json(const nlohmann::json& j) {
  ActiveCoordinateSpec spec;
  for (const auto& jb : j.at("blocks")) {
    ActiveBlock b;
    b.label = jb.at("label").get<std::string>();
    b.basis.columns = matrix_from_json(jb.at("basis"));
    const auto t = jb.at("target").get<std::vector<double>>();
    b.target = Eigen::Map<const Eigen::VectorXd>(
        t.data(), static_cast<Eigen::Index>(t.size()));
    spec.blocks.push_back(std::move(b));
  }
  spec.inactive.columns = matrix_from_json(j.at("inactive"));
  spec.validate();
  return spec;
}

ActiveCoordinateSpec make_coordinate_spec(
    const std::vector<ActiveBlock>& raw_blocks, double rank_tol) {
  if (raw_blocks.empty()) throw config_error("no active blocks supplied");
  const Eigen::Index d = raw_blocks.front().basis.ambient_dim();

  ActiveCoordinateSpec spec;
  Eigen::MatrixXd accumulated(d, 0);
  for (const auto& raw : raw_blocks) {
    Eigen::MatrixXd w = raw.basis.columns;
    if (accumulated.cols() > 0) {
      w -= accumulated * (accumulated.transpose() * w);
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(w);
    Eigen::MatrixXd r = qr.matrixQR().topRows(w.cols()).triangularView<Eigen::Upper>();
    for (Eigen::Index i = 0; i < w.cols(); ++i) {
      if (std::abs(r(i, i)) < rank_tol) {
        throw numeric_error("active block '" + raw.label +
                            "' is linearly dependent on earlier blocks");
      }
    }
    Eigen::MatrixXd q = Eigen::MatrixXd(qr.householderQ()).leftCols(w.cols());
    // Keep column orientation close to the input basis.
    for (Eigen::Index i = 0; i < q.cols(); ++i) {
      if (q.col(i).dot(raw.basis.columns.col(i)) < 0) q.col(i) = -q.col(i);
    }
    ActiveBlock b;
    b.label = raw.label;
    b.basis.columns = q;
    b.target = raw.target;
    spec.blocks.push_back(std::move(b));

    Eigen::MatrixXd next(d, accumulated.cols() + q.cols());
    next << accumulated, q;
    accumulated = std::move(next);
  }

  std::vector<OrthonormalBasis> actives;
  for (const auto& b : spec.blocks) actives.push_back(b.basis);
  spec.inactive = intersect_inactive(actives, rank_tol);
  spec.validate();
  return spec;
}

void SampleEnsemble::validate() const {
  for (Eigen::Index i = 0; i < designs.rows(); ++i) {
    const Eigen::VectorXd x = designs.row(i).transpose();
    if ((x.array().abs() > 1.0 + 1e-12).any()) {
      throw numeric_error("ensemble design leaves the hypercube");
    }
    for (const auto& b : spec.blocks) {
      const double err =
          (b.basis.columns.transpose() * x - b.target).cwiseAbs().maxCoeff();
      if (err > 1e-9) {
        std::ostringstream os;
        os << "design violates active block '" << b.label << "' by " << err;
        throw numeric_error(os.str());
      }
    }
  }
}

void SampleEnsemble::save_csv(const std::string& designs_path,
                              const std::string& sidecar_path) const {
  std::ofstream out(designs_path);
  if (!out) throw config_error("cannot write ensemble CSV: " + designs_path);
  out.precision(17);
  for (Eigen::Index i = 0; i < designs.rows(); ++i) {
    for (Eigen::Index j = 0; j < designs.cols(); ++j) {
      if (j) out << ",";
      out << designs(i, j);
    }
    out << "\n";
  }
  nlohmann::json j;
  j["spec"] = spec.to_json();
  j["seed"] = seed;
  j["burn_in"] = burn_in;
  j["thinning"] = thinning;
  j["n_samples"] = designs.rows();
  std::ofstream side(sidecar_path);
  if (!side) throw config_error("cannot write ensemble sidecar: " + sidecar_path);
  side << j.dump(2) << "\n";
}

SampleEnsemble SampleEnsemble::load_csv(const std::string& designs_path,
                                        const std::string& sidecar_path) {
  std::ifstream side(sidecar_path);
  if (!side) throw config_error("cannot open ensemble sidecar: " + sidecar_path);
  nlohmann::json j = nlohmann::json::parse(side);
  SampleEnsemble e;
  e.spec = ActiveCoordinateSpec::from_json(j.at("spec"));
  e.seed = j.at("seed").get<std::uint64_t>();
  e.burn_in = j.at("burn_in").get<Eigen::Index>();
  e.thinning = j.at("thinning").get<Eigen::Index>();

  std::ifstream in(designs_path);
  if (!in) throw config_error("cannot open ensemble CSV: " + designs_path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  const Eigen::Index h = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index d = e.spec.ambient_dim();
  e.designs.resize(h, d);
  for (Eigen::Index i = 0; i < h; ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != d) {
      throw config_error("ensemble CSV width does not match spec dimension");
    }
    for (Eigen::Index k = 0; k < d; ++k) e.designs(i, k) = rows[i][k];
  }
  e.validate();
  return e;
}

namespace {

// Feasible t-interval of {t : |base_j + t dir_j| <= 1 for all j}, valid
// whether or not t = 0 is feasible. Returns false if empty.
bool chord_interval(const Eigen::VectorXd& point, const Eigen::VectorXd& dir,
                    double* t_lo, double* t_hi) {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < point.size(); ++j) {
    const double dj = dir[j];
    if (std::abs(dj) < 1e-300) {
      if (std::abs(point[j]) > 1.0) return false;
      continue;
    }
    const double a = (-1.0 - point[j]) / dj;
    const double b = (1.0 - point[j]) / dj;
    lo = std::max(lo, std::min(a, b));
    hi = std::min(hi, std::max(a, b));
  }
  if (!(lo <= hi)) return false;
  *t_lo = lo;
  *t_hi = hi;
  return true;
}

}  // namespace

SampleEnsemble hit_and_run(const ActiveCoordinateSpec& spec, Eigen::Index h,
                           std::uint64_t seed, Eigen::Index burn_in,
                           Eigen::Index thinning) {
  spec.validate();
  if (h < 1 || thinning < 1 || burn_in < 0) {
    throw config_error("sampler needs h >= 1, thinning >= 1, burn_in >= 0");
  }
  const Eigen::Index d = spec.ambient_dim();
  const Eigen::Index m = spec.inactive_dim();
  const Eigen::VectorXd base = spec.base_point();
  const Eigen::MatrixXd& v = spec.inactive.columns;

  Rng rng(seed);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(m);

  if ((base.array().abs() > 1.0).any()) {
    // z = 0 lies outside the cube; restart at the midpoint of the first
    // random direction whose chord is nonempty.
    bool found = false;
    for (int attempt = 0; attempt < 100 && !found; ++attempt) {
      const Eigen::VectorXd dz = rng.sphere_direction(m);
      const Eigen::VectorXd dir = v * dz;
      double t_lo, t_hi;
      if (chord_interval(base, dir, &t_lo, &t_hi) && t_hi - t_lo > 1e-12) {
        z = 0.5 * (t_lo + t_hi) * dz;
        found = true;
      }
    }
    if (!found) {
      Eigen::Index worst;
      base.cwiseAbs().maxCoeff(&worst);
      std::ostringstream os;
      os << "empty slice: active targets place coordinate " << worst << " at "
         << base[worst] << ", outside [-1,1]";
      throw infeasible_error(os.str());
    }
  }

  SampleEnsemble ensemble;
  ensemble.spec = spec;
  ensemble.seed = seed;
  ensemble.burn_in = burn_in;
  ensemble.thinning = thinning;
  ensemble.designs.resize(h, d);

  Eigen::Index emitted = 0;
  Eigen::Index stuck_streak = 0;
  const Eigen::Index total_steps = burn_in + h * thinning;
  for (Eigen::Index step = 0; step < total_steps; ++step) {
    const Eigen::VectorXd dz = rng.sphere_direction(m);
    const Eigen::VectorXd x = base + v * z;
    const Eigen::VectorXd dir = v * dz;
    double t_lo, t_hi;
    if (!chord_interval(x, dir, &t_lo, &t_hi) || t_hi - t_lo < 1e-12) {
      if (++stuck_streak == 100) {
        std::cerr << "warning: hit-and-run chain stuck for 100 consecutive "
                     "steps (chord length < 1e-12)\n";
      }
    } else {
      stuck_streak = 0;
      z += rng.uniform(t_lo, t_hi) * dz;
    }
    if (step >= burn_in && (step - burn_in) % thinning == thinning - 1) {
      ensemble.designs.row(emitted++) = (base + v * z).transpose();
    }
  }
  ensemble.validate();
  return ensemble;
}

Eigen::VectorXd set_active_coordinates(const Eigen::VectorXd& x_base,
                                       const ActiveCoordinateSpec& spec,
                                       bool* out_of_box) {
  spec.validate();
  Eigen::VectorXd x = spec.base_point();
  x.noalias() +=
      spec.inactive.columns * (spec.inactive.columns.transpose() * x_base);
  if (out_of_box) *out_of_box = (x.array().abs() > 1.0).any();
  return x;
}

}  // namespace bev
