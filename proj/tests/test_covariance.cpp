#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <functional>

#include "bev/covariance.hpp"
#include "bev/rng.hpp"
#include "test_util.hpp"

using namespace bev;

namespace {

SurrogateModel fit_function(
    Eigen::Index d, int degree,
    const std::function<double(const Eigen::VectorXd&)>& f,
    Eigen::Index m = 400, std::uint64_t seed = 1) {
  Rng rng(seed);
  Eigen::MatrixXd inputs(m, d);
  Eigen::MatrixXd outputs(m, 1);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::VectorXd x = rng.cube_point(d);
    inputs.row(i) = x.transpose();
    outputs(i, 0) = f(x);
  }
  const auto ts =
      TrainingSet::with_split(std::move(inputs), std::move(outputs), 0.8);
  return SurrogateModel::fit(ts, degree);
}

}  // namespace

TEST_CASE("scalar_covariance: constant gradient e1") {
  const auto m =
      fit_function(2, 1, [](const Eigen::VectorXd& x) { return x[0]; });
  const auto c = scalar_covariance(m, 100, 3);
  CHECK(c.n_samples == 0);  // closed form for p=1
  Eigen::Matrix2d expected;
  expected << 1, 0, 0, 0;
  CHECK((c.matrix - expected).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("scalar_covariance: outer product of (3,-2)") {
  const auto m = fit_function(
      2, 1, [](const Eigen::VectorXd& x) { return 3.0 * x[0] - 2.0 * x[1]; });
  const auto c = scalar_covariance(m, 100, 3);
  Eigen::Matrix2d expected;
  expected << 9, -6, -6, 4;
  CHECK((c.matrix - expected).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("scalar_covariance: x^2 in d=1 against the quadrature oracle") {
  const auto m = fit_function(
      1, 2, [](const Eigen::VectorXd& x) { return x[0] * x[0]; }, 100);
  // Exact value: E[(2x)^2] = 4/3 under uniform on [-1,1].
  const Eigen::MatrixXd exact = test::tensor_quadrature(
      1, [&](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
        const Eigen::VectorXd g = m.gradient(x);
        return g * g.transpose();
      });
  CHECK(exact(0, 0) == doctest::Approx(4.0 / 3.0).epsilon(1e-8));

  const Eigen::Index n_mc = 2000;
  const auto c = scalar_covariance(m, n_mc, 17);
  CHECK(c.n_samples == n_mc);
  // MC standard error of the (0,0) entry: std of (2x)^4-ish terms.
  const Eigen::MatrixXd samples = covariance_samples(1, n_mc, 17);
  double mean = 0.0, m2 = 0.0;
  for (Eigen::Index k = 0; k < n_mc; ++k) {
    const double gk = m.gradient(samples.row(k).transpose())[0];
    const double v = gk * gk;
    mean += v;
    m2 += v * v;
  }
  mean /= static_cast<double>(n_mc);
  const double var = m2 / static_cast<double>(n_mc) - mean * mean;
  const double se = std::sqrt(var / static_cast<double>(n_mc));
  CHECK(std::abs(c.matrix(0, 0) - 4.0 / 3.0) <= 3.0 * se);
}

TEST_CASE("vector_covariance: single nonzero weight returns that component") {
  std::vector<SurrogateModel> models;
  models.push_back(fit_function(
      3, 2, [](const Eigen::VectorXd& x) { return x[0] * x[1]; }));
  models.push_back(fit_function(
      3, 2, [](const Eigen::VectorXd& x) { return x[2] * x[2]; }));
  WeightVector w;
  w.weights = Eigen::Vector2d(1.0, 0.0);
  w.description = "first-only";
  const auto h = vector_covariance(models, w, 500, 7);
  const auto c1 = scalar_covariance(models[0], 500, 7);
  CHECK((h.matrix - c1.matrix).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("vector_covariance: all-zero weights rejected") {
  WeightVector w;
  w.weights = Eigen::Vector2d::Zero();
  CHECK_THROWS_AS(w.validate(), Error);
  std::vector<SurrogateModel> models(
      2, fit_function(2, 1, [](const Eigen::VectorXd& x) { return x[0]; }));
  CHECK_THROWS_AS(vector_covariance(models, w, 100, 1), Error);
}

TEST_CASE("vector_covariance: hand-computable diagonal") {
  std::vector<SurrogateModel> models;
  models.push_back(
      fit_function(2, 1, [](const Eigen::VectorXd& x) { return x[0]; }));
  models.push_back(
      fit_function(2, 1, [](const Eigen::VectorXd& x) { return x[1]; }));
  WeightVector w;
  w.weights = Eigen::Vector2d(2.0, 3.0);
  const auto h = vector_covariance(models, w, 100, 1);
  Eigen::Matrix2d expected;
  expected << 2, 0, 0, 3;
  CHECK((h.matrix - expected).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("weighted-sum identity with shared samples") {
  Rng rng(29);
  std::vector<SurrogateModel> models;
  const Eigen::Index d = 5;
  for (int i = 0; i < 4; ++i) {
    const double a = rng.normal(), b = rng.normal(), c = rng.normal();
    models.push_back(fit_function(
        d, 2,
        [&](const Eigen::VectorXd& x) {
          return a * x[0] + b * x[1] * x[2] + c * x[3] * x[3];
        },
        400, 100 + i));
  }
  WeightVector w;
  w.weights = Eigen::Vector4d(0.5, 1.5, 0.1, 2.0);
  const Eigen::Index n_mc = 300;
  const auto h = vector_covariance(models, w, n_mc, 41);
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < 4; ++i) {
    sum += w.weights[i] * scalar_covariance(models[i], n_mc, 41).matrix;
  }
  CHECK((h.matrix - sum).norm() <= 1e-10);
}

TEST_CASE("linearity in the weights") {
  std::vector<SurrogateModel> models;
  for (int i = 0; i < 3; ++i) {
    models.push_back(fit_function(
        3, 2,
        [&](const Eigen::VectorXd& x) { return x[i] * x[(i + 1) % 3]; }, 300,
        50 + i));
  }
  WeightVector a, b, ab;
  a.weights = Eigen::Vector3d(1.0, 0.2, 0.0);
  b.weights = Eigen::Vector3d(0.3, 0.0, 2.0);
  ab.weights = a.weights + b.weights;
  const auto ha = vector_covariance(models, a, 400, 9);
  const auto hb = vector_covariance(models, b, 400, 9);
  const auto hab = vector_covariance(models, ab, 400, 9);
  CHECK((hab.matrix - ha.matrix - hb.matrix).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("weight scaling scales H and keeps the eigenvectors") {
  std::vector<SurrogateModel> models;
  models.push_back(fit_function(
      4, 2, [](const Eigen::VectorXd& x) { return x[0] + 0.5 * x[1] * x[1]; }));
  models.push_back(fit_function(
      4, 2, [](const Eigen::VectorXd& x) { return x[2] - x[0] * x[3]; }, 400,
      2));
  WeightVector w, cw;
  w.weights = Eigen::Vector2d(1.0, 0.7);
  const double c = 3.5;
  cw.weights = c * w.weights;
  const auto h = vector_covariance(models, w, 400, 11);
  const auto hc = vector_covariance(models, cw, 400, 11);
  CHECK((hc.matrix - c * h.matrix).cwiseAbs().maxCoeff() /
            h.matrix.cwiseAbs().maxCoeff() <
        1e-10);
  const auto e1 = eigendecompose_spsd(h.matrix);
  const auto e2 = eigendecompose_spsd(hc.matrix);
  CHECK((e2.eigenvectors.columns - e1.eigenvectors.columns)
            .cwiseAbs()
            .maxCoeff() < 1e-9);
  for (Eigen::Index i = 0; i < 4; ++i) {
    if (e1.eigenvalues[i] > 1e-12) {
      CHECK(e2.eigenvalues[i] / e1.eigenvalues[i] ==
            doctest::Approx(c).epsilon(1e-10));
    }
  }
}

TEST_CASE("trace identity: trace(C) is the MC mean of the gradient norm") {
  const auto m = fit_function(3, 2, [](const Eigen::VectorXd& x) {
    return x[0] * x[0] - 0.4 * x[1] * x[2];
  });
  const Eigen::Index n_mc = 777;
  const std::uint64_t seed = 13;
  const auto c = scalar_covariance(m, n_mc, seed);
  const Eigen::MatrixXd samples = covariance_samples(3, n_mc, seed);
  double acc = 0.0;
  for (Eigen::Index k = 0; k < n_mc; ++k) {
    acc += m.gradient(samples.row(k).transpose()).squaredNorm();
  }
  acc /= static_cast<double>(n_mc);
  CHECK(std::abs(c.matrix.trace() - acc) <= 1e-12 * std::max(1.0, acc));
}

TEST_CASE("subspace_from_covariance") {
  SUBCASE("rank-1 covariance from a linear objective") {
    const auto m = fit_function(3, 1, [](const Eigen::VectorXd& x) {
      return 2.0 * x[0] + x[2];
    });
    const auto sp =
        subspace_from_covariance(scalar_covariance(m, 100, 1), std::nullopt);
    CHECK(sp.gap_index == 1);
    const Eigen::VectorXd w = sp.active.columns.col(0);
    const Eigen::Vector3d expected =
        Eigen::Vector3d(2.0, 0.0, 1.0).normalized();
    CHECK((w.cwiseAbs() - expected.cwiseAbs()).cwiseAbs().maxCoeff() < 1e-6);
    sp.validate();
  }
  SUBCASE("two dominant directions give r=2") {
    Rng rng(3);
    const Eigen::MatrixXd t = test::random_orthonormal(6, 2, rng);
    GradientCovariance c;
    c.matrix = 4.0 * t.col(0) * t.col(0).transpose() +
               2.5 * t.col(1) * t.col(1).transpose() +
               1e-6 * Eigen::MatrixXd::Identity(6, 6);
    const auto sp = subspace_from_covariance(c, std::nullopt);
    CHECK(sp.gap_index == 2);
  }
  SUBCASE("four dominant directions via override") {
    Rng rng(5);
    const Eigen::MatrixXd t = test::random_orthonormal(8, 4, rng);
    GradientCovariance c;
    c.matrix = Eigen::MatrixXd::Zero(8, 8);
    const double mags[4] = {4.0, 2.0, 1.0, 0.5};
    for (int k = 0; k < 4; ++k) {
      c.matrix += mags[k] * t.col(k) * t.col(k).transpose();
    }
    c.matrix += 1e-8 * Eigen::MatrixXd::Identity(8, 8);
    const auto sp = subspace_from_covariance(c, 4);
    CHECK(sp.gap_index == 4);
    CHECK(sp.inactive.subspace_dim() == 4);
    // The active block spans the constructed modes.
    const Eigen::MatrixXd p =
        sp.active.columns * sp.active.columns.transpose();
    CHECK((p * t - t).cwiseAbs().maxCoeff() < 1e-3);
  }
  SUBCASE("no usable gap propagates the error") {
    GradientCovariance c;
    c.matrix = Eigen::Vector3d(3.0, 2.0, 1.5).asDiagonal();
    CHECK_THROWS_WITH_AS(subspace_from_covariance(c, std::nullopt),
                         doctest::Contains("no active directions"), Error);
  }
}

TEST_CASE("weak versus strong inactive subspaces") {
  // Three linear components with orthogonal directions; weights emphasize
  // the first two. The weak inactive space of H still carries the third
  // component, while the strong intersection suppresses every component.
  Rng rng(61);
  const Eigen::Index d = 6;
  const Eigen::MatrixXd dirs = test::random_orthonormal(d, 3, rng);
  std::vector<SurrogateModel> linear_models;   // exact, for the strong case
  std::vector<SurrogateModel> noisy_models;    // contaminated, for H
  std::vector<OrthonormalBasis> active_bases;
  const double contamination = 0.005;
  for (int i = 0; i < 3; ++i) {
    linear_models.push_back(fit_function(
        d, 1, [&](const Eigen::VectorXd& x) { return dirs.col(i).dot(x); },
        300, 200 + i));
    active_bases.push_back(linear_models[i].active_direction_linear());
    // A touch of curvature gives H a realistic noise floor well below the
    // weakest genuine eigenvalue, so the spectral gap sits at r=2.
    noisy_models.push_back(fit_function(
        d, 2,
        [&](const Eigen::VectorXd& x) {
          return dirs.col(i).dot(x) + contamination * x.squaredNorm();
        },
        300, 200 + i));
  }
  WeightVector w;
  w.weights = Eigen::Vector3d(1.0, 1.0, 3e-3);
  const auto h = vector_covariance(noisy_models, w, 500, 19);
  const auto weak = subspace_from_covariance(h, std::nullopt);
  CHECK(weak.gap_index == 2);

  const OrthonormalBasis strong = intersect_inactive(active_bases);
  CHECK(strong.subspace_dim() == 3);

  const auto weighted_change = [&](const Eigen::VectorXd& step) {
    double acc = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double delta = dirs.col(i).dot(step);
      acc += w.weights[i] * delta * delta;
    }
    return std::sqrt(acc);
  };

  // Strong: every component is flat along every intersection direction.
  for (Eigen::Index j = 0; j < strong.subspace_dim(); ++j) {
    for (int i = 0; i < 3; ++i) {
      CHECK(std::abs(dirs.col(i).dot(strong.columns.col(j))) < 1e-6);
    }
  }
  // Weak: the weighted output barely moves along weak-inactive directions,
  // far less than along the active ones.
  double max_weak = 0.0;
  for (Eigen::Index j = 0; j < weak.inactive.subspace_dim(); ++j) {
    max_weak = std::max(max_weak, weighted_change(weak.inactive.columns.col(j)));
  }
  double min_active = 1e300;
  for (Eigen::Index j = 0; j < weak.gap_index; ++j) {
    min_active = std::min(min_active, weighted_change(weak.active.columns.col(j)));
  }
  CHECK(max_weak < 0.1 * min_active);
  // ... but the third component itself is NOT suppressed in the weak space.
  double max_third = 0.0;
  for (Eigen::Index j = 0; j < weak.inactive.subspace_dim(); ++j) {
    max_third = std::max(
        max_third, std::abs(dirs.col(2).dot(weak.inactive.columns.col(j))));
  }
  CHECK(max_third > 0.1);
}

TEST_CASE("smooth_weights") {
  const auto w = smooth_weights(16, {4}, 3, "core");
  CHECK(w.weights.size() == 16);
  CHECK(w.weights[4] == doctest::Approx(1.0));
  CHECK(w.weights[5] == doctest::Approx(2.0 / 3.0));
  CHECK(w.weights[7] == doctest::Approx(0.0));
  CHECK(w.weights[12] == doctest::Approx(0.0));
  // Circular distance: a core at index 0 reaches node 15.
  const auto w0 = smooth_weights(16, {0}, 2, "wrap");
  CHECK(w0.weights[15] == doctest::Approx(0.5));
  CHECK(w0.weights[1] == doctest::Approx(0.5));
  w.validate();
}

TEST_CASE("covariance JSON round trip keeps provenance") {
  const auto m = fit_function(
      3, 2, [](const Eigen::VectorXd& x) { return x[0] * x[1]; });
  const auto c = scalar_covariance(m, 250, 99, "demo");
  const auto back = GradientCovariance::from_json(c.to_json());
  CHECK(back.n_samples == 250);
  CHECK(back.seed == 99);
  CHECK(back.source == "demo");
  CHECK((back.matrix - c.matrix).cwiseAbs().maxCoeff() == 0.0);
  back.validate();
}
