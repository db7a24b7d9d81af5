#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <numeric>
#include <vector>

#include "bev/envelope.hpp"
#include "bev/rng.hpp"
#include "test_util.hpp"

using namespace bev;

namespace {

GeometryOracle make_oracle(Eigen::Index d = 20) {
  GeometryOracle::Settings s;
  s.d = d;
  s.n_nodes = 128;
  return GeometryOracle(s);
}

// An ensemble wrapper around explicitly chosen designs (free spec).
SampleEnsemble fixed_designs(const Eigen::MatrixXd& designs) {
  SampleEnsemble e;
  e.designs = designs;
  e.spec.inactive.columns =
      Eigen::MatrixXd::Identity(designs.cols(), designs.cols());
  return e;
}

SampleEnsemble slice_ensemble(const GeometryOracle& oracle, bool with_fm,
                              Eigen::Index h, std::uint64_t seed) {
  std::vector<ActiveBlock> raw;
  ActiveBlock loss;
  loss.label = "loss";
  loss.basis.columns = oracle.loss_direction();
  loss.target = Eigen::VectorXd::Zero(1);
  raw.push_back(loss);
  if (with_fm) {
    ActiveBlock fm;
    fm.label = "fm";
    fm.basis.columns = oracle.mass_flow_coefficients().normalized();
    fm.target = Eigen::VectorXd::Zero(1);
    raw.push_back(fm);
  }
  return hit_and_run(make_coordinate_spec(raw), h, seed, 500, 3);
}

}  // namespace

TEST_CASE("build_band: zero ensemble gives the zero band") {
  const auto oracle = make_oracle();
  const auto band = build_band(
      oracle, fixed_designs(Eigen::MatrixXd::Zero(1, 20)), 1.0);
  CHECK(band.lower.cwiseAbs().maxCoeff() == 0.0);
  CHECK(band.upper.cwiseAbs().maxCoeff() == 0.0);
  band.validate();
}

TEST_CASE("build_band: +-e1 band is symmetric and local") {
  const auto oracle = make_oracle();
  Eigen::MatrixXd designs = Eigen::MatrixXd::Zero(2, 20);
  designs(0, 0) = 1.0;
  designs(1, 0) = -1.0;
  const auto band = build_band(oracle, fixed_designs(designs), 1.0);
  for (Eigen::Index i = 0; i < 128; ++i) {
    CHECK(band.upper[i] == doctest::Approx(-band.lower[i]).epsilon(1e-12));
    if (oracle.bump_matrix()(i, 0) == 0.0) {
      CHECK(band.upper[i] == 0.0);
    } else {
      CHECK(band.upper[i] > 0.0);
    }
  }
}

TEST_CASE("build_band: adding the mass-flow constraint narrows the band") {
  const auto oracle = make_oracle();
  const auto loss_only = slice_ensemble(oracle, false, 4000, 41);
  const auto both = slice_ensemble(oracle, true, 4000, 42);
  const auto band_loss = build_band(oracle, loss_only, 1.0);
  const auto band_both = build_band(oracle, both, 1.0);
  int narrower = 0, populated = 0;
  for (Eigen::Index i = 0; i < 128; ++i) {
    const double w_loss = band_loss.upper[i] - band_loss.lower[i];
    const double w_both = band_both.upper[i] - band_both.lower[i];
    if (w_loss > 1e-9) {
      ++populated;
      if (w_both < w_loss) ++narrower;
    }
  }
  REQUIRE(populated > 64);
  CHECK(static_cast<double>(narrower) >= 0.6 * static_cast<double>(populated));
}

TEST_CASE("band CSV round trip") {
  const auto oracle = make_oracle();
  Eigen::MatrixXd designs = Eigen::MatrixXd::Zero(2, 20);
  designs(0, 5) = 0.8;
  designs(1, 5) = -0.3;
  const auto band = build_band(oracle, fixed_designs(designs), 1.0);
  band.save_csv("test_envelope_band.csv");
  const auto back = EnvelopeBand::load_csv("test_envelope_band.csv");
  CHECK((back.lower - band.lower).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.upper - band.upper).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.nominal.nodes - band.nominal.nodes).cwiseAbs().maxCoeff() == 0.0);
  std::remove("test_envelope_band.csv");
}

TEST_CASE("MahalanobisModel basics") {
  SUBCASE("displacement equal to the mean gives zero") {
    Rng rng(5);
    Eigen::MatrixXd rows(50, 4);
    for (Eigen::Index i = 0; i < 50; ++i)
      for (Eigen::Index j = 0; j < 4; ++j) rows(i, j) = rng.normal();
    const auto m = MahalanobisModel::fit(rows);
    CHECK(m.distance(m.mean()) == 0.0);
  }
  SUBCASE("identity covariance, unit displacement at one node") {
    nlohmann::json j;
    j["mean"] = std::vector<double>(3, 0.0);
    j["covariance"] = matrix_to_json(Eigen::MatrixXd::Identity(3, 3));
    j["ridge_mul"] = 1.0;
    const auto m = MahalanobisModel::from_json(j);
    CHECK(m.distance(Eigen::Vector3d(1.0, 0.0, 0.0)) ==
          doctest::Approx(1.0).epsilon(1e-7));
  }
  SUBCASE("scaling a displacement scales the distance exactly") {
    Rng rng(6);
    Eigen::MatrixXd rows(60, 3);
    for (Eigen::Index i = 0; i < 60; ++i)
      for (Eigen::Index j = 0; j < 3; ++j) rows(i, j) = rng.normal();
    // Zero-mean model so the scaling property is exact.
    nlohmann::json j;
    j["mean"] = std::vector<double>(3, 0.0);
    const auto fitted = MahalanobisModel::fit(rows);
    j["covariance"] = matrix_to_json(fitted.covariance());
    const auto m = MahalanobisModel::from_json(j);
    const Eigen::Vector3d v(0.3, -0.2, 0.9);
    const double c = 3.7;
    CHECK(m.distance(c * v) == doctest::Approx(c * m.distance(v)).epsilon(1e-12));
  }
}

TEST_CASE("geometric distance: held-out member is not an outlier") {
  const auto oracle = make_oracle();
  const auto ensemble = slice_ensemble(oracle, true, 600, 17);
  const Eigen::MatrixXd disp =
      ensemble.designs * oracle.bump_matrix().transpose();
  const auto model = MahalanobisModel::fit(disp.bottomRows(599));
  std::vector<double> in_model;
  for (Eigen::Index i = 1; i < 600; ++i) {
    in_model.push_back(model.distance(disp.row(i).transpose()));
  }
  std::sort(in_model.begin(), in_model.end());
  const double p99 = in_model[static_cast<std::size_t>(0.99 * 599)];
  CHECK(model.distance(disp.row(0).transpose()) < p99);
}

TEST_CASE("geometric distance is invariant under consistent re-indexing") {
  Rng rng(9);
  Eigen::MatrixXd rows(80, 6);
  for (Eigen::Index i = 0; i < 80; ++i)
    for (Eigen::Index j = 0; j < 6; ++j) rows(i, j) = rng.normal();
  std::vector<int> perm(6);
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[0], perm[4]);
  std::swap(perm[2], perm[5]);
  Eigen::MatrixXd permuted(80, 6);
  for (int j = 0; j < 6; ++j) permuted.col(j) = rows.col(perm[j]);
  const auto m1 = MahalanobisModel::fit(rows);
  const auto m2 = MahalanobisModel::fit(permuted);
  Eigen::VectorXd v(6);
  for (int j = 0; j < 6; ++j) v[j] = 0.1 * (j + 1);
  Eigen::VectorXd pv(6);
  for (int j = 0; j < 6; ++j) pv[j] = v[perm[j]];
  CHECK(m2.distance(pv) == doctest::Approx(m1.distance(v)).epsilon(1e-9));
}

TEST_CASE("output_mahalanobis") {
  SUBCASE("mean gives zero") {
    Eigen::MatrixXd outputs(4, 2);
    outputs << 1, 2, 3, 4, 5, 6, 7, 8;
    const Eigen::Vector2d mu = outputs.colwise().mean();
    CHECK(output_mahalanobis(outputs, mu) == 0.0);
  }
  SUBCASE("one standard deviation in 1-D") {
    // Sample variance (n-1 convention) of {a,-a,a,-a} is 4a^2/3; a=sqrt(3)
    // gives exactly 4, so y = mu + 2 sits one standard deviation out.
    const double a = std::sqrt(3.0);
    Eigen::MatrixXd outputs(4, 1);
    outputs << a, -a, a, -a;
    CHECK(output_mahalanobis(outputs, Eigen::VectorXd::Constant(1, 2.0)) ==
          doctest::Approx(1.0).epsilon(1e-7));
  }
  SUBCASE("2-D correlated case against a direct solve") {
    Rng rng(12);
    Eigen::MatrixXd outputs(40, 2);
    for (Eigen::Index i = 0; i < 40; ++i) {
      const double base = rng.normal();
      outputs(i, 0) = base + 0.1 * rng.normal();
      outputs(i, 1) = 2.0 * base + 0.3 * rng.normal();
    }
    const Eigen::Vector2d y(1.0, 1.5);
    const double got = output_mahalanobis(outputs, y);
    const Eigen::Vector2d mu = outputs.colwise().mean();
    const Eigen::MatrixXd centered = outputs.rowwise() - mu.transpose();
    Eigen::Matrix2d s = centered.transpose() * centered / 39.0;
    s.diagonal().array() += 1e-8 * s.trace() / 2.0;
    const Eigen::Vector2d solved = s.ldlt().solve(y - mu);
    CHECK(got == doctest::Approx(std::sqrt(solved.dot(y - mu))).epsilon(1e-10));
  }
  SUBCASE("needs at least three outputs") {
    CHECK_THROWS_AS(
        output_mahalanobis(Eigen::MatrixXd::Zero(2, 1), Eigen::VectorXd::Zero(1)),
        Error);
  }
}

TEST_CASE("train_logistic") {
  SUBCASE("perfectly separable data") {
    Eigen::VectorXd d(4);
    d << 0.0, 0.0, 10.0, 10.0;
    const auto fit = train_logistic(d, {1, 1, 0, 0});
    CHECK(fit.separable);
    CHECK(std::abs(fit.slope) <= 1e3);
    const double boundary = -fit.intercept / fit.slope;
    CHECK(boundary > 0.0);
    CHECK(boundary < 10.0);
  }
  SUBCASE("single class is an error") {
    Eigen::VectorXd d(3);
    d << 1.0, 2.0, 3.0;
    CHECK_THROWS_AS(train_logistic(d, {1, 1, 1}), Error);
  }
  SUBCASE("overlapping Gaussian classes recover the midpoint boundary") {
    Rng rng(2718);
    const int n = 2000;
    Eigen::VectorXd d(2 * n);
    std::vector<int> labels(2 * n);
    for (int i = 0; i < n; ++i) {
      d[i] = 2.0 + rng.normal();  // accepts
      labels[static_cast<std::size_t>(i)] = 1;
      d[n + i] = 4.0 + rng.normal();  // rejects
      labels[static_cast<std::size_t>(n + i)] = 0;
    }
    const auto fit = train_logistic(d, labels);
    CHECK(!fit.separable);
    CHECK(fit.slope < 0.0);  // accept probability falls with distance
    const double boundary = -fit.intercept / fit.slope;
    // Equal-variance Gaussians: equal-likelihood point is the midpoint 3.
    CHECK(boundary == doctest::Approx(3.0).epsilon(0.05));
  }
}

TEST_CASE("decision model classify") {
  const auto oracle = make_oracle();
  const auto ensemble = slice_ensemble(oracle, true, 400, 23);
  const Eigen::MatrixXd disp =
      ensemble.designs * oracle.bump_matrix().transpose();
  DecisionModel model;
  model.geometry = MahalanobisModel::fit(disp);

  Rng rng(3);
  std::vector<double> distances;
  std::vector<int> labels;
  for (Eigen::Index i = 0; i < disp.rows(); ++i) {
    distances.push_back(model.geometry.distance(disp.row(i).transpose()));
    labels.push_back(1);
  }
  for (int i = 0; i < 200; ++i) {
    distances.push_back(model.geometry.distance(
        oracle.displacement(rng.cube_point(20))));
    labels.push_back(0);
  }
  model.logistic = train_logistic(
      Eigen::Map<const Eigen::VectorXd>(
          distances.data(), static_cast<Eigen::Index>(distances.size())),
      labels);
  model.threshold_distance = -model.logistic.intercept / model.logistic.slope;
  model.trained = true;

  SUBCASE("nominal profile accepts") {
    const auto c = classify_profile(model, oracle, oracle.nominal());
    CHECK(c.accept);
    CHECK(c.accept_probability >= 0.5);
  }
  SUBCASE("ensemble member accepts, loss-direction deformation rejects") {
    const auto member = classify(
        model, Eigen::VectorXd(disp.row(7).transpose()));
    CHECK(member.accept);
    const auto bad = classify(model, oracle.displacement(oracle.loss_direction()));
    CHECK(!bad.accept);
  }
  SUBCASE("accept probability is monotone decreasing in distance") {
    double prev = model.accept_probability(0.0);
    for (double dist = 0.5; dist < 50.0; dist += 0.5) {
      const double p = model.accept_probability(dist);
      CHECK(p <= prev + 1e-15);
      prev = p;
    }
  }
  SUBCASE("JSON round trip preserves decisions") {
    const auto back = DecisionModel::from_json(model.to_json());
    const Eigen::VectorXd probe = oracle.displacement(
        Eigen::VectorXd::Constant(20, 0.2));
    CHECK(back.geometry.distance(probe) ==
          doctest::Approx(model.geometry.distance(probe)).epsilon(1e-12));
    CHECK(back.logistic.slope == model.logistic.slope);
    CHECK(back.threshold_distance == model.threshold_distance);
  }
  SUBCASE("untrained model refuses to classify") {
    DecisionModel blank;
    blank.geometry = model.geometry;
    CHECK_THROWS_AS(
        classify(blank, Eigen::VectorXd(disp.row(0).transpose())), Error);
  }
}

TEST_CASE("signed_displacement recovers the oracle displacement") {
  const auto oracle = make_oracle();
  Rng rng(44);
  const Eigen::VectorXd x = 0.8 * rng.cube_point(20);
  const Eigen::VectorXd direct = oracle.displacement(x);
  const Eigen::VectorXd via_profile = signed_displacement(
      oracle.nominal(), oracle.normals(), oracle.deform(x));
  CHECK((direct - via_profile).cwiseAbs().maxCoeff() < 1e-12);
}
