#include "bev/linalg.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <sstream>

namespace bev {

double OrthonormalBasis::orthonormality_defect() const {
  const Eigen::MatrixXd gram = columns.transpose() * columns;
  const Eigen::MatrixXd eye =
      Eigen::MatrixXd::Identity(columns.cols(), columns.cols());
  return (gram - eye).cwiseAbs().maxCoeff();
}

void OrthonormalBasis::validate(double tol) const {
  if (columns.cols() < 1 || columns.cols() > columns.rows()) {
    std::ostringstream os;
    os << "basis dimensions invalid: " << columns.rows() << "x"
       << columns.cols();
    throw numeric_error(os.str());
  }
  const double defect = orthonormality_defect();
  if (defect > tol) {
    std::ostringstream os;
    os << "basis not orthonormal, defect " << defect << " > " << tol;
    throw numeric_error(os.str());
  }
}

void SubspacePair::validate() const {
  const Eigen::Index d = active.ambient_dim();
  const Eigen::Index r = active.subspace_dim();
  if (inactive.ambient_dim() != d || r + inactive.subspace_dim() != d ||
      eigenvalues.size() != d || gap_index != r) {
    throw numeric_error("subspace pair dimensions inconsistent");
  }
  Eigen::MatrixXd q(d, d);
  q << active.columns, inactive.columns;
  OrthonormalBasis full{q};
  full.validate();
  for (Eigen::Index i = 1; i < d; ++i) {
    if (eigenvalues[i] > eigenvalues[i - 1] + 1e-12) {
      throw numeric_error("eigenvalues not in descending order");
    }
  }
}

namespace {

// First entry of each column with magnitude > 1e-12 made positive.
void fix_column_signs(Eigen::MatrixXd& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if (std::abs(m(i, j)) > 1e-12) {
        if (m(i, j) < 0) m.col(j) = -m.col(j);
        break;
      }
    }
  }
}

}  // namespace

EigenDecomposition eigendecompose_spsd(const Eigen::MatrixXd& c,
                                       double symmetry_tol) {
  if (c.rows() != c.cols() || c.rows() < 1) {
    throw numeric_error("matrix must be square and nonempty");
  }
  const double asym = (c - c.transpose()).cwiseAbs().maxCoeff();
  if (asym > symmetry_tol) {
    std::ostringstream os;
    os << "matrix not symmetric: max asymmetry " << asym << " exceeds "
       << symmetry_tol;
    throw numeric_error(os.str());
  }
  const Eigen::MatrixXd sym = 0.5 * (c + c.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) {
    throw numeric_error("eigendecomposition failed to converge");
  }
  const Eigen::Index d = c.rows();
  EigenDecomposition out;
  out.eigenvalues.resize(d);
  out.eigenvectors.columns.resize(d, d);
  // Eigen returns ascending order; reverse to descending.
  for (Eigen::Index i = 0; i < d; ++i) {
    double lambda = solver.eigenvalues()[d - 1 - i];
    if (lambda < 0.0) {
      if (lambda < -1e-12) {
        std::ostringstream os;
        os << "matrix not PSD: eigenvalue " << lambda;
        throw numeric_error(os.str());
      }
      lambda = 0.0;
    }
    out.eigenvalues[i] = lambda;
    out.eigenvectors.columns.col(i) = solver.eigenvectors().col(d - 1 - i);
  }
  fix_column_signs(out.eigenvectors.columns);
  return out;
}

std::optional<Eigen::Index> select_gap(const Eigen::VectorXd& eigenvalues,
                                       double min_ratio, double eps_floor) {
  const Eigen::Index d = eigenvalues.size();
  if (d < 2) throw numeric_error("need at least two eigenvalues");
  if (eigenvalues.maxCoeff() < eps_floor) return std::nullopt;
  Eigen::Index best_r = 0;
  double best_ratio = -1.0;
  for (Eigen::Index r = 1; r < d; ++r) {
    const double ratio =
        eigenvalues[r - 1] / std::max(eigenvalues[r], eps_floor);
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best_r = r;
    }
  }
  if (best_ratio < min_ratio) return std::nullopt;
  return best_r;
}

Eigen::Index numerical_rank(const Eigen::MatrixXd& m, double rel_tol) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s[0] == 0.0) return 0;
  const double cutoff = rel_tol * s[0];
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > cutoff) ++rank;
  }
  return rank;
}

OrthonormalBasis intersect_inactive(
    const std::vector<OrthonormalBasis>& active_bases, double rank_tol) {
  if (active_bases.empty()) {
    throw numeric_error("need at least one active basis");
  }
  const Eigen::Index d = active_bases.front().ambient_dim();
  Eigen::Index total_cols = 0;
  for (const auto& b : active_bases) {
    if (b.ambient_dim() != d) {
      throw numeric_error("active bases have mismatched ambient dimensions");
    }
    total_cols += b.subspace_dim();
  }
  if (total_cols < 1) throw numeric_error("no active columns supplied");

  Eigen::MatrixXd w_both(d, total_cols);
  Eigen::Index col = 0;
  for (const auto& b : active_bases) {
    w_both.middleCols(col, b.subspace_dim()) = b.columns;
    col += b.subspace_dim();
  }

  // Full left singular basis orders colspan(W_both) first; the trailing
  // d - rank columns span the orthogonal complement. Rank from singular
  // values keeps the recipe stable under duplicated active directions.
  Eigen::BDCSVD<Eigen::MatrixXd> svd(w_both, Eigen::ComputeFullU);
  const auto& s = svd.singularValues();
  const double cutoff = rank_tol * s[0];
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > cutoff) ++rank;
  }
  if (rank >= d) {
    throw numeric_error(
        "trivial intersection: active subspaces span the full design space");
  }
  OrthonormalBasis v_int{svd.matrixU().rightCols(d - rank)};
  fix_column_signs(v_int.columns);
  v_int.validate();
  return v_int;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) {
      data.push_back(m(i, k));
    }
  }
  j["data"] = data;
  return j;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  if (!j.contains("rows") || !j.contains("cols") || !j.contains("data")) {
    throw config_error("matrix JSON requires rows, cols, data");
  }
  const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw config_error("matrix JSON data length does not match rows*cols");
  }
  Eigen::MatrixXd m(rows, cols);
  std::size_t idx = 0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index k = 0; k < cols; ++k) {
      m(i, k) = data[idx++];
    }
  }
  return m;
}

nlohmann::json subspace_pair_to_json(const SubspacePair& sp) {
  nlohmann::json j;
  j["active"] = matrix_to_json(sp.active.columns);
  j["inactive"] = matrix_to_json(sp.inactive.columns);
  j["eigenvalues"] = std::vector<double>(
      sp.eigenvalues.data(), sp.eigenvalues.data() + sp.eigenvalues.size());
  j["gap_index"] = sp.gap_index;
  return j;
}

SubspacePair subspace_pair_from_json(const nlohmann::json& j) {
  SubspacePair sp;
  sp.active.columns = matrix_from_json(j.at("active"));
  sp.inactive.columns = matrix_from_json(j.at("inactive"));
  const auto ev = j.at("eigenvalues").get<std::vector<double>>();
  sp.eigenvalues =
      Eigen::Map<const Eigen::VectorXd>(ev.data(), static_cast<Eigen::Index>(ev.size()));
  sp.gap_index = j.at("gap_index").get<Eigen::Index>();
  sp.validate();
  return sp;
}

}  // namespace bev
