#include "bev/oracle.hpp"

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <vector>

#include "bev/linalg.hpp"
#include "bev/rng.hpp"

namespace bev {

namespace {

constexpr double kPi = std::numbers::pi;

bool segments_intersect(const Eigen::Vector2d& p1, const Eigen::Vector2d& p2,
                        const Eigen::Vector2d& q1, const Eigen::Vector2d& q2) {
  auto cross = [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return a.x() * b.y() - a.y() * b.x();
  };
  const Eigen::Vector2d r = p2 - p1;
  const Eigen::Vector2d s = q2 - q1;
  const double denom = cross(r, s);
  if (std::abs(denom) < 1e-15) return false;  // parallel; overlap ignored
  const double t = cross(q1 - p1, s) / denom;
  const double u = cross(q1 - p1, r) / denom;
  return t > 1e-12 && t < 1.0 - 1e-12 && u > 1e-12 && u < 1.0 - 1e-12;
}

double circular_distance(double a, double b) {
  const double delta = std::abs(a - b);
  return std::min(delta, 1.0 - delta);
}

// Compactly supported cos^2 bump of half-width hw around center c,
// measured in arc fraction (wrapping).
double bump(double s, double center, double half_width) {
  const double delta = circular_distance(s, center);
  if (delta >= half_width) return 0.0;
  const double t = std::cos(0.5 * kPi * delta / half_width);
  return t * t;
}

// Smooth periodic field from a few random Fourier modes.
Eigen::VectorXd fourier_field(const Eigen::VectorXd& arc, Rng& rng, int modes) {
  Eigen::VectorXd field = Eigen::VectorXd::Zero(arc.size());
  for (int k = 1; k <= modes; ++k) {
    const double a = rng.normal() / k;
    const double b = rng.normal() / k;
    for (Eigen::Index i = 0; i < arc.size(); ++i) {
      field[i] += a * std::cos(2.0 * kPi * k * arc[i]) +
                  b * std::sin(2.0 * kPi * k * arc[i]);
    }
  }
  return field;
}

}  // namespace

void BladeProfile::validate() const {
  const Eigen::Index n = n_nodes();
  if (n < 64) throw numeric_error("profile needs at least 64 nodes");
  if (arc_fraction.size() != n) {
    throw numeric_error("arc_fraction length does not match node count");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector2d p1 = nodes.row(i);
    const Eigen::Vector2d p2 = nodes.row((i + 1) % n);
    for (Eigen::Index j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;  // adjacent around the seam
      const Eigen::Vector2d q1 = nodes.row(j);
      const Eigen::Vector2d q2 = nodes.row((j + 1) % n);
      if (segments_intersect(p1, p2, q1, q2)) {
        std::ostringstream os;
        os << "profile self-intersects: segments " << i << " and " << j;
        throw numeric_error(os.str());
      }
    }
  }
}

void BladeProfile::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw config_error("cannot write profile CSV: " + path);
  out.precision(17);
  out << "node,x,y,arc_fraction\n";
  for (Eigen::Index i = 0; i < n_nodes(); ++i) {
    out << i << "," << nodes(i, 0) << "," << nodes(i, 1) << ","
        << arc_fraction[i] << "\n";
  }
}

BladeProfile BladeProfile::load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open profile CSV: " + path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::array<double, 3>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() != 4) throw config_error("profile CSV row needs 4 columns");
    rows.push_back({vals[1], vals[2], vals[3]});
  }
  BladeProfile p;
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  p.nodes.resize(n, 2);
  p.arc_fraction.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    p.nodes(i, 0) = rows[i][0];
    p.nodes(i, 1) = rows[i][1];
    p.arc_fraction[i] = rows[i][2];
  }
  return p;
}

double isentropic_mach(double p_ratio, double gamma) {
  if (gamma <= 1.0) throw config_error("gamma must exceed 1");
  if (p_ratio < 1.0) {
    std::ostringstream os;
    os << "pressure ratio " << p_ratio << " below 1 gives imaginary Mach";
    throw numeric_error(os.str());
  }
  const double e = (gamma - 1.0) / gamma;
  return std::sqrt(2.0 / (gamma - 1.0) * (std::pow(p_ratio, e) - 1.0));
}

BladeProfile nominal_blade_profile(Eigen::Index n_nodes) {
  if (n_nodes < 64) throw config_error("need at least 64 surface nodes");
  // Cambered profile with cosine node clustering near the leading and
  // trailing edges. Parameter t in [0,1): t=0 trailing edge, suction side
  // to t=0.5 (leading edge), pressure side back.
  BladeProfile p;
  p.nodes.resize(n_nodes, 2);
  for (Eigen::Index i = 0; i < n_nodes; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(n_nodes);
    const double c = 0.5 * (1.0 + std::cos(2.0 * kPi * t));
    const double camber = 0.28 * std::sin(kPi * c);
    const double thickness = 0.16 * std::sqrt(std::max(c, 0.0)) * (1.0 - c);
    const double side = (t < 0.5) ? 1.0 : -1.0;
    p.nodes(i, 0) = c;
    p.nodes(i, 1) = camber + side * 0.5 * thickness;
  }
  // Arc fraction from cumulative polyline length.
  p.arc_fraction.resize(n_nodes);
  double total = 0.0;
  std::vector<double> cumulative(static_cast<std::size_t>(n_nodes), 0.0);
  for (Eigen::Index i = 0; i < n_nodes; ++i) {
    cumulative[static_cast<std::size_t>(i)] = total;
    total += (p.nodes.row((i + 1) % n_nodes) - p.nodes.row(i)).norm();
  }
  for (Eigen::Index i = 0; i < n_nodes; ++i) {
    p.arc_fraction[i] = cumulative[static_cast<std::size_t>(i)] / total;
  }
  p.validate();
  return p;
}

Eigen::MatrixXd profile_normals(const BladeProfile& profile) {
  const Eigen::Index n = profile.n_nodes();
  // Signed area decides the orientation; the outward normal of tangent
  // (tx, ty) is (ty, -tx) for counterclockwise traversal, (-ty, tx) for
  // clockwise.
  double area2 = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto p = profile.nodes.row(i);
    const auto q = profile.nodes.row((i + 1) % n);
    area2 += p.x() * q.y() - q.x() * p.y();
  }
  const double sign = area2 > 0.0 ? 1.0 : -1.0;
  Eigen::MatrixXd normals(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector2d tangent =
        (profile.nodes.row((i + 1) % n) - profile.nodes.row((i + n - 1) % n))
            .normalized();
    normals(i, 0) = sign * tangent.y();
    normals(i, 1) = -sign * tangent.x();
  }
  return normals;
}

Eigen::VectorXd GeometryOracle::displacement(const Eigen::VectorXd& x) const {
  if (x.size() != settings_.d) throw numeric_error("design dimension mismatch");
  return bump_matrix_ * x;
}

BladeProfile GeometryOracle::deform(const Eigen::VectorXd& x) const {
  if ((x.array().abs() > 1.0 + 1e-12).any()) {
    throw config_error("design outside [-1,1]^d");
  }
  const Eigen::VectorXd disp = displacement(x);
  BladeProfile out = nominal_;
  for (Eigen::Index i = 0; i < out.n_nodes(); ++i) {
    out.nodes.row(i) += disp[i] * normals_.row(i);
  }
  out.validate();
  return out;
}

double GeometryOracle::loss_ridge(double u) const {
  return loss_offset_ + loss_linear_ * u + loss_quadratic_ * u * u;
}

FlowSample GeometryOracle::evaluate_flow(const Eigen::VectorXd& x) const {
  if ((x.array().abs() > 1.0 + 1e-12).any()) {
    throw config_error("design outside [-1,1]^d");
  }
  FlowSample fs;
  const double u = w_loss_.dot(x);
  const double orth2 = std::max(x.squaredNorm() - u * u, 0.0);
  fs.loss = loss_ridge(u) +
            loss_eps_ * orth2 / static_cast<double>(settings_.d);
  fs.mass_flow = mass_flow_offset_ + w_fm_.dot(x);
  fs.mach_distribution =
      nominal_mach_ + mach_profiles_ * (mach_dirs_.transpose() * x);
  if ((fs.mach_distribution.array() < 0.0).any()) {
    throw numeric_error("mach distribution went negative; generator scales bad");
  }
  return fs;
}

GeometryOracle::GeometryOracle(const Settings& settings) : settings_(settings) {
  const Eigen::Index d = settings_.d;
  const Eigen::Index n = settings_.n_nodes;
  if (d < 8) throw config_error("oracle needs d >= 8");
  nominal_ = nominal_blade_profile(n);

  normals_ = profile_normals(nominal_);

  // Bump displacement map: d smooth compactly supported bumps spread
  // evenly in arc fraction, half on each side of the blade.
  bump_matrix_.resize(n, d);
  const double half_width = 1.2 / static_cast<double>(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double center = (static_cast<double>(j) + 0.5) / static_cast<double>(d);
    for (Eigen::Index i = 0; i < n; ++i) {
      bump_matrix_(i, j) =
          settings_.amplitude * bump(nominal_.arc_fraction[i], center, half_width);
    }
  }
  // Taper toward the sharp leading and trailing edges: capping each node's
  // worst-case displacement at a quarter of the local thickness keeps every
  // deformed profile simple (non-self-intersecting) for any design in the
  // cube, where the suction and pressure sides would otherwise cross.
  for (Eigen::Index i = 0; i < n; ++i) {
    const double c = nominal_.nodes(i, 0);
    const double thickness =
        0.16 * std::sqrt(std::max(c, 0.0)) * (1.0 - c);
    const double worst = bump_matrix_.row(i).cwiseAbs().sum();
    if (worst > 0.0) {
      bump_matrix_.row(i) *= std::min(1.0, 0.25 * thickness / worst);
    }
  }

  // Sensitivity fields shared across design spaces of the same seed.
  Rng rng(settings_.seed);
  const Eigen::VectorXd phi_loss = fourier_field(nominal_.arc_fraction, rng, 4);
  const Eigen::VectorXd phi_fm = fourier_field(nominal_.arc_fraction, rng, 4);
  Eigen::MatrixXd psi(n, 6);
  for (int k = 0; k < 6; ++k) {
    psi.col(k) = fourier_field(nominal_.arc_fraction, rng, 6);
  }

  w_loss_ = (bump_matrix_.transpose() * phi_loss).normalized();
  {
    Eigen::VectorXd raw = bump_matrix_.transpose() * phi_fm;
    raw -= w_loss_ * w_loss_.dot(raw);
    w_fm_ = raw.normalized();  // unit coefficient vector
  }

  // Nominal Mach distribution via the isentropic relation applied to a
  // synthetic pressure-ratio profile: suction-side peak near s = 0.3,
  // moderate leading-edge level, low pressure side.
  nominal_mach_.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = nominal_.arc_fraction[i];
    const double pr = 1.05 +
                      0.85 * std::exp(-std::pow((s - 0.30) / 0.12, 2)) +
                      0.45 * std::exp(-std::pow((s - 0.50) / 0.10, 2));
    nominal_mach_[i] = isentropic_mach(pr, settings_.gamma);
  }
  nominal_mach_.maxCoeff(&peak_node_);
  (nominal_.arc_fraction.array() - 0.5).abs().minCoeff(&le_node_);

  // Six rank-one Mach modes: two localized at the peak, four at the
  // leading edge. Directions are orthonormalized against the loss and
  // mass-flow directions so the active blocks are exactly independent.
  const double s_peak = nominal_.arc_fraction[peak_node_];
  const double s_le = nominal_.arc_fraction[le_node_];
  const double centers[6] = {s_peak - 0.02, s_peak + 0.03, s_le - 0.06,
                             s_le - 0.02,   s_le + 0.02,   s_le + 0.06};
  const double widths[6] = {0.07, 0.07, 0.05, 0.05, 0.05, 0.05};
  const double magnitudes[6] = {0.050, 0.020, 0.040, 0.025, 0.015, 0.008};

  mach_profiles_.resize(n, 6);
  for (int k = 0; k < 6; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      mach_profiles_(i, k) =
          magnitudes[k] * bump(nominal_.arc_fraction[i], centers[k], widths[k]);
    }
  }
  mach_dirs_.resize(d, 6);
  for (int k = 0; k < 6; ++k) {
    Eigen::VectorXd t = bump_matrix_.transpose() * psi.col(k);
    t -= w_loss_ * w_loss_.dot(t);
    t -= w_fm_ * w_fm_.dot(t);
    for (int m = 0; m < k; ++m) {
      t -= mach_dirs_.col(m) * mach_dirs_.col(m).dot(t);
    }
    const double norm = t.norm();
    if (norm < 1e-8) throw numeric_error("degenerate mach mode direction");
    mach_dirs_.col(k) = t / norm;
  }
}

nlohmann::json GeometryOracle::generator_to_json() const {
  nlohmann::json j;
  j["d"] = settings_.d;
  j["n_nodes"] = settings_.n_nodes;
  j["amplitude"] = settings_.amplitude;
  j["gamma"] = settings_.gamma;
  j["seed"] = settings_.seed;
  auto vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  j["loss_direction"] = vec(w_loss_);
  j["loss_ridge"] = {{"offset", loss_offset_},
                     {"linear", loss_linear_},
                     {"quadratic", loss_quadratic_},
                     {"orthogonal_eps", loss_eps_}};
  j["mass_flow_coefficients"] = vec(w_fm_);
  j["mass_flow_offset"] = mass_flow_offset_;
  j["mach_mode_directions"] = matrix_to_json(mach_dirs_);
  j["mach_mode_profiles"] = matrix_to_json(mach_profiles_);
  j["nominal_mach"] = vec(nominal_mach_);
  j["peak_node"] = peak_node_;
  j["leading_edge_node"] = le_node_;
  return j;
}

}  // namespace bev
