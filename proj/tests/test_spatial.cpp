#include <algorithm>
#include <cmath>
#include <numbers>

#include <doctest.h>

#include "alphareg/error.hpp"
#include "alphareg/io.hpp"
#include "alphareg/spatial.hpp"
#include "support.hpp"

using namespace alphareg;

namespace {

GeoCoordinates coords_of(std::initializer_list<std::pair<double, double>> pts) {
  VectorXd lat(static_cast<Eigen::Index>(pts.size()));
  VectorXd lon(lat.size());
  Eigen::Index i = 0;
  for (const auto& [a, b] : pts) {
    lat[i] = a;
    lon[i] = b;
    ++i;
  }
  return {lat, lon};
}

void check_contiguity(const SpatialWeightMatrix& w, int k) {
  const MatrixXd& m = w.values();
  CHECK(m.diagonal().cwiseAbs().maxCoeff() == 0.0);
  CHECK(m.minCoeff() >= 0.0);
  CHECK((m.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  for (Eigen::Index i = 0; i < m.rows(); ++i) CHECK((m.row(i).array() > 0.0).count() == k);
}

}  // namespace

TEST_CASE("Cartesian coordinates") {
  const Vector3 a = to_cartesian(0.0, 0.0);
  CHECK((a - Vector3(1, 0, 0)).norm() < 1e-15);
  const Vector3 b = to_cartesian(90.0, 0.0);
  CHECK((b - Vector3(0, 1, 0)).norm() < 1e-15);

  auto rng = testsupport::rng_for(30);
  std::uniform_real_distribution<double> la(-90.0, 90.0);
  std::uniform_real_distribution<double> lo(-179.999, 180.0);
  for (int i = 0; i < 100; ++i) {
    const double lat = la(rng);
    const double lon = lo(rng);
    const Vector3 c = to_cartesian(lat, lon);
    CHECK(std::abs(c.norm() - 1.0) < 1e-12);
    const double nu = lat * std::numbers::pi / 180.0;
    const double v = lon * std::numbers::pi / 180.0;
    CHECK((c - Vector3(std::cos(nu), std::sin(nu) * std::cos(v), std::sin(nu) * std::sin(v))).norm() < 1e-15);
  }
  CHECK_THROWS_AS(to_cartesian(91.0, 0.0), Error);
  CHECK_THROWS_AS(to_cartesian(0.0, -180.0), Error);
  CHECK_NOTHROW(to_cartesian(0.0, 180.0));
}

TEST_CASE("chordal distances") {
  const Vector3 a(1, 0, 0);
  const Vector3 b(0, 1, 0);
  CHECK(chordal_distance_sq(a, a) == 0.0);
  CHECK(chordal_distance_sq(a, b) == doctest::Approx(2.0));

  auto rng = testsupport::rng_for(31);
  const GeoCoordinates g = testsupport::random_coords(rng, 60, -80, 80, -179, 179);
  for (Eigen::Index i = 0; i + 1 < g.size(); ++i) {
    const double d = chordal_distance_sq(g.point(i), g.point(i + 1));
    CHECK(std::abs(d - (g.point(i) - g.point(i + 1)).squaredNorm()) < 1e-12);
    CHECK(d == chordal_distance_sq(g.point(i + 1), g.point(i)));
    CHECK(d >= 0.0);
    CHECK(d <= 4.0);
  }
}

TEST_CASE("wraparound across the antimeridian") {
  const double far = chordal_distance_sq(to_cartesian(0, 179), to_cartesian(0, -179));
  const double near = chordal_distance_sq(to_cartesian(0, 1), to_cartesian(0, -1));
  CHECK(std::abs(far - near) < 1e-12);
  for (double lat : {15.0, 45.0, 75.0}) {
    const double f = chordal_distance_sq(to_cartesian(lat, 179), to_cartesian(lat, -179));
    const double n = chordal_distance_sq(to_cartesian(lat, 1), to_cartesian(lat, -1));
    CHECK(std::abs(f - n) < 1e-12);
    CHECK(f > 0.0);
    CHECK(f < 0.01);
  }
}

TEST_CASE("contiguity examples") {
  const SpatialWeightMatrix two = contiguity_matrix(coords_of({{40, 0}, {41, 1}}), 1);
  CHECK(two.values()(0, 1) == 1.0);
  CHECK(two.values()(1, 0) == 1.0);
  CHECK(two.values()(0, 0) == 0.0);

  // Middle point at lon 1 is nearer to lon 0 than to lon 3.
  const SpatialWeightMatrix line = contiguity_matrix(coords_of({{45, 0}, {45, 1}, {45, 3}}), 1);
  CHECK(line.values()(1, 0) == 1.0);
  CHECK(line.values()(1, 2) == 0.0);

  // Weights proportional to inverse squared distance before standardization.
  const GeoCoordinates g = coords_of({{45, 0}, {45, 1}, {45, 3}});
  const SpatialWeightMatrix w2 = contiguity_matrix(g, 2);
  const double d10 = chordal_distance_sq(g.point(1), g.point(0));
  const double d12 = chordal_distance_sq(g.point(1), g.point(2));
  CHECK(w2.values()(1, 0) == doctest::Approx((1 / d10) / (1 / d10 + 1 / d12)).epsilon(1e-13));

  CHECK_THROWS_AS(contiguity_matrix(g, 0), Error);
  CHECK_THROWS_AS(contiguity_matrix(g, 3), Error);
}

TEST_CASE("contiguity invariants on random configurations") {
  auto rng = testsupport::rng_for(32);
  for (Eigen::Index n : {2, 5, 17, 60}) {
    const GeoCoordinates g = testsupport::random_coords(rng, n);
    for (int k = 1; k <= std::min<Eigen::Index>(n - 1, 12); ++k) check_contiguity(contiguity_matrix(g, k), k);
  }
}

TEST_CASE("contiguity ties and coincident points") {
  // Points 1 and 2 are exactly equidistant from point 0; the lower index wins.
  const GeoCoordinates tie = coords_of({{45, 0}, {45, 1}, {45, -1}, {45, 20}});
  const SpatialWeightMatrix w = contiguity_matrix(tie, 1);
  CHECK(w.values()(0, 1) == 1.0);
  CHECK(w.values()(0, 2) == 0.0);

  const GeoCoordinates dup = coords_of({{45, 10}, {45, 10}, {46, 12}, {44, 8}});
  const SpatialWeightMatrix wd = contiguity_matrix(dup, 2);
  check_contiguity(wd, 2);
  CHECK(wd.values()(0, 1) > 0.999);
}

TEST_CASE("Gaussian kernel weights") {
  auto rng = testsupport::rng_for(33);
  const GeoCoordinates g = testsupport::random_coords(rng, 40);
  const KernelWeights kw = gaussian_kernel_weights(g, 3, 0.05);
  CHECK(kw.values[3] == 1.0);
  CHECK((kw.values.array() > 0.0).all());
  CHECK((kw.values.array() <= 1.0).all());
  for (Eigen::Index j = 0; j < g.size(); ++j) {
    const double d2 = chordal_distance_sq(g.point(3), g.point(j));
    CHECK(std::abs(kw.values[j] - std::exp(-d2 / (2 * 0.05 * 0.05))) < 1e-14);
  }
  const KernelWeights flat = gaussian_kernel_weights(g, 0, 1e6);
  CHECK((flat.values.array() - 1.0).abs().maxCoeff() < 1e-9);
  CHECK_THROWS_AS(gaussian_kernel_weights(g, 0, 0.0), Error);
  CHECK_THROWS_AS(gaussian_kernel_weights(g, 0, -1.0), Error);
}

TEST_CASE("spatial lag") {
  const GeoCoordinates g = coords_of({{45, 0}, {45, 1}, {45, 2}, {45, 10}});
  const SpatialWeightMatrix w = contiguity_matrix(g, 2);
  MatrixXd cov(4, 2);
  cov << 1, 7, 2, 7, 3, 7, 4, 7;
  const DesignMatrix x = DesignMatrix::with_intercept(cov);
  const MatrixXd lag = spatial_lag(w, x);
  REQUIRE(lag.cols() == 2);
  // Point 1 has equidistant neighbours 0 and 2: the lag is their mean.
  CHECK(lag(1, 0) == doctest::Approx(2.0));
  CHECK((lag.col(1).array() - 7.0).abs().maxCoeff() < 1e-12);

  auto rng = testsupport::rng_for(34);
  const GeoCoordinates r = testsupport::random_coords(rng, 15);
  const DesignMatrix xr = testsupport::random_design(rng, 15, 3);
  const SpatialWeightMatrix wr = contiguity_matrix(r, 4);
  std::vector<Eigen::Index> perm(15);
  for (Eigen::Index i = 0; i < 15; ++i) perm[static_cast<std::size_t>(i)] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  const SpatialWeightMatrix wp(wr.values()(perm, perm), 4);
  const MatrixXd a = spatial_lag(wp, xr.select_rows(perm));
  const MatrixXd b = spatial_lag(wr, xr)(perm, Eigen::all);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((contiguity_matrix(r.select_rows(perm), 4).values() - wp.values()).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(spatial_lag(w, xr), Error);
}

TEST_CASE("SLX fit equals the plain fit on the augmented design") {
  SyntheticOptions o;
  o.n = 500;
  o.seed = 40;
  const SyntheticData data = generate_synthetic(o);
  const SpatialWeightMatrix w = contiguity_matrix(data.coords, 5);
  const SlxFit slx = fit_alpha_slx(data.y, data.x, w, 0.5);
  // The generator ignores W here, so the true Gamma is zero.
  CHECK((slx.beta - data.b).cwiseAbs().maxCoeff() < 1e-3);
  CHECK(slx.gamma.cwiseAbs().maxCoeff() < 1e-3);
  CHECK(slx.gamma.rows() == 2);
  const FitResult plain = fit_alpha_regression(data.y, data.x.augmented(spatial_lag(w, data.x)), 0.5);
  CHECK((plain.coefficients.topRows(3) - slx.beta).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((plain.coefficients.bottomRows(2) - slx.gamma).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((slx.fit.fitted.values().rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("SLX recovers spillover coefficients") {
  SyntheticOptions o;
  o.n = 400;
  o.spatial_mode = SpatialMode::Slx;
  o.k = 5;
  o.seed = 41;
  const SyntheticData data = generate_synthetic(o);
  const SlxFit slx = fit_alpha_slx(data.y, data.x, contiguity_matrix(data.coords, 5), 0.5);
  CHECK((slx.beta - data.b).cwiseAbs().maxCoeff() < 1e-4);
  CHECK((slx.gamma - data.gamma).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("GWaR flat kernel matches the global fit") {
  SyntheticOptions o;
  o.n = 60;
  o.noise_scale = 0.05;
  o.seed = 42;
  const SyntheticData data = generate_synthetic(o);
  const GwarFit g = fit_gwar(data.y, data.x, data.coords, 0.5, 1e6);
  const FitResult global = fit_alpha_regression(data.y, data.x, 0.5);
  double worst = 0.0;
  for (const auto& b : g.local_coefficients) worst = std::max(worst, (b - global.coefficients).cwiseAbs().maxCoeff());
  CHECK(worst < 1e-6);
  CHECK((g.fitted.values().rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  for (Eigen::Index i = 0; i < 60; ++i) {
    const CompositionMatrix mi =
        fitted_mean(data.x.select_rows({i}), g.local_coefficients[static_cast<std::size_t>(i)]);
    CHECK((mi.values().row(0) - g.fitted.values().row(i)).cwiseAbs().maxCoeff() < 1e-15);
  }
  const CompositionMatrix pg = predict_gwar(g, data.x.select_rows({0, 5}), data.coords.select_rows({0, 5}));
  CHECK((pg.values() - predict(data.x.select_rows({0, 5}), global).values()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("GWaR recovers a sign flip between clusters") {
  SyntheticOptions o;
  o.n = 200;
  o.spatial_mode = SpatialMode::TwoCluster;
  o.noise_scale = 0.02;
  o.seed = 43;
  const SyntheticData data = generate_synthetic(o);
  const double h = 0.3 * median_heuristic_bandwidth(data.coords);
  const GwarFit g = fit_gwar(data.y, data.x, data.coords, 0.5, h);
  const std::vector<CoefficientMatrix> truth = data.row_coefficients();
  int agree = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const MatrixXd t = truth[i].bottomRows(2);
    const MatrixXd e = g.local_coefficients[i].bottomRows(2);
    if (((t.array() > 0) == (e.array() > 0)).all()) ++agree;
  }
  CHECK(agree >= static_cast<int>(0.95 * truth.size()));
}

TEST_CASE("GWaR prediction at a training location and degenerate bandwidths") {
  SyntheticOptions o;
  o.n = 50;
  o.noise_scale = 0.05;
  o.seed = 44;
  const SyntheticData data = generate_synthetic(o);
  const double h = median_heuristic_bandwidth(data.coords);
  const GwarFit g = fit_gwar(data.y, data.x, data.coords, 0.5, h);
  const CompositionMatrix p = predict_gwar(g, data.x.select_rows({7}), data.coords.select_rows({7}));
  CHECK((p.values().row(0) - g.fitted.values().row(7)).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(std::abs(p.values().sum() - 1.0) < 1e-12);

  try {
    fit_gwar(data.y, data.x, data.coords, 0.5, 1e-9);
    FAIL("expected DegenerateWeights");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateWeights);
  }
  CHECK_THROWS_AS(fit_gwar(data.y, data.x, data.coords, 0.5, 0.0), Error);
}

TEST_CASE("GWaR tolerates a duplicated location") {
  SyntheticOptions o;
  o.n = 40;
  o.noise_scale = 0.05;
  o.seed = 45;
  const SyntheticData data = generate_synthetic(o);
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < 40; ++i) rows.push_back(i);
  rows.push_back(3);
  const GwarFit g = fit_gwar(data.y.select_rows(rows), data.x.select_rows(rows), data.coords.select_rows(rows), 0.5,
                             median_heuristic_bandwidth(data.coords));
  CHECK(g.local_coefficients.size() == 41);
  CHECK((g.local_coefficients[3] - g.local_coefficients[40]).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("GWaR results do not depend on the thread count") {
  SyntheticOptions o;
  o.n = 40;
  o.noise_scale = 0.05;
  o.seed = 46;
  const SyntheticData data = generate_synthetic(o);
  const double h = median_heuristic_bandwidth(data.coords);
  const GwarFit a = fit_gwar(data.y, data.x, data.coords, 0.5, h, {}, 1);
  const GwarFit b = fit_gwar(data.y, data.x, data.coords, 0.5, h, {}, 4);
  for (std::size_t i = 0; i < a.local_coefficients.size(); ++i) {
    CHECK((a.local_coefficients[i] - b.local_coefficients[i]).cwiseAbs().maxCoeff() == 0.0);
  }
}
