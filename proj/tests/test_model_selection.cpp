#include <algorithm>
#include <cmath>

#include <doctest.h>

#include "alphareg/error.hpp"
#include "alphareg/io.hpp"
#include "alphareg/model_selection.hpp"
#include "support.hpp"

using namespace alphareg;

namespace {

SyntheticData make(int n, std::uint64_t seed, double noise, double alpha = 0.5,
                   SpatialMode mode = SpatialMode::None) {
  SyntheticOptions o;
  o.n = n;
  o.noise_scale = noise;
  o.alpha = alpha;
  o.seed = seed;
  o.spatial_mode = mode;
  return generate_synthetic(o);
}

// Serial leave-one-out with the same warm-start chain over alpha.
MatrixXd brute_force_alpha(const CompositionMatrix& y, const DesignMatrix& x, const std::vector<double>& alphas) {
  const Eigen::Index n = y.rows();
  MatrixXd scores = MatrixXd::Zero(static_cast<Eigen::Index>(alphas.size()), 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) keep.push_back(j);
    }
    CoefficientMatrix start = CoefficientMatrix::Zero(x.cols(), y.parts() - 1);
    for (std::size_t a = 0; a < alphas.size(); ++a) {
      const FitResult f = fit_alpha_regression(y.select_rows(keep), x.select_rows(keep), alphas[a], {}, start);
      const CompositionMatrix mu = predict(x.select_rows({i}), f);
      scores(static_cast<Eigen::Index>(a), 0) += kld(y.select_rows({i}), mu);
      start = f.coefficients;
    }
  }
  return scores;
}

}  // namespace

TEST_CASE("KLD examples") {
  auto rng = testsupport::rng_for(70);
  const CompositionMatrix y = testsupport::random_composition(rng, 30, 4);
  CHECK(kld(y, y) == 0.0);

  MatrixXd o(1, 2);
  o << 1.0, 0.0;
  MatrixXd f(1, 2);
  f << 0.5, 0.5;
  CHECK(kld(CompositionMatrix(o), CompositionMatrix(f)) == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  for (int rep = 0; rep < 20; ++rep) {
    const CompositionMatrix a = testsupport::random_composition(rng, 10, 3, 0.2);
    const CompositionMatrix b = testsupport::random_composition(rng, 10, 3);
    CHECK(kld(a, b) >= 0.0);
  }
  CHECK_THROWS_AS(kld(y, testsupport::random_composition(rng, 29, 4)), Error);
  MatrixXd zf(1, 2);
  zf << 1.0, 0.0;
  try {
    kld(CompositionMatrix(f), CompositionMatrix(zf));
    FAIL("expected NonpositiveFitted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonpositiveFitted);
  }
}

TEST_CASE("in-sample KLD beats the uniform baseline") {
  const SyntheticData data = make(500, 71, 0.05);
  const FitResult fit = fit_alpha_regression(data.y, data.x, 0.5);
  const CompositionMatrix uniform = fitted_mean(data.x, CoefficientMatrix::Zero(3, 2));
  CHECK(fit.kld <= kld(data.y, uniform));
}

TEST_CASE("median heuristic") {
  VectorXd lat(2);
  VectorXd lon(2);
  lat << 40, 42;
  lon << 10, 11;
  const GeoCoordinates two(lat, lon);
  CHECK(median_heuristic_bandwidth(two) == doctest::Approx(std::sqrt(chordal_distance_sq(two.point(0), two.point(1)))));

  const GeoCoordinates same(VectorXd::Constant(4, 45.0), VectorXd::Constant(4, 3.0));
  try {
    median_heuristic_bandwidth(same);
    FAIL("expected AllCoincident");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AllCoincident);
  }

  auto rng = testsupport::rng_for(72);
  for (Eigen::Index n : {3, 4, 9, 30}) {
    const GeoCoordinates g = testsupport::random_coords(rng, n);
    std::vector<double> d;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) d.push_back((g.point(i) - g.point(j)).norm());
    }
    std::sort(d.begin(), d.end());
    const std::size_t m = d.size();
    const double median = m % 2 ? d[m / 2] : 0.5 * (d[m / 2 - 1] + d[m / 2]);
    CHECK(median_heuristic_bandwidth(g) == doctest::Approx(median).epsilon(1e-12));
  }
}

TEST_CASE("default bandwidth grid") {
  auto rng = testsupport::rng_for(73);
  const GeoCoordinates g = testsupport::random_coords(rng, 25);
  const std::vector<double> grid = default_h_grid(g);
  const double median = median_heuristic_bandwidth(g);
  REQUIRE(grid.size() == 10);
  for (std::size_t i = 1; i < grid.size(); ++i) CHECK(grid[i] > grid[i - 1]);
  CHECK(std::abs(grid.front() - median / 16.0) < 1e-12);
  CHECK(std::abs(grid.back() - 4.0 * median) < 1e-12);
  CHECK(grid.front() < median);
  CHECK(grid.back() > median);
}

TEST_CASE("LOOCV over alpha equals a serial brute-force recomputation") {
  const SyntheticData data = make(30, 74, 0.05);
  CvGrid grid;
  CvOptions opts;
  opts.threads = 3;
  const CvResult cv = loocv_alpha(data.y, data.x, grid, opts);
  const MatrixXd brute = brute_force_alpha(data.y, data.x, grid.alphas);
  CHECK((cv.scores - brute).cwiseAbs().maxCoeff() < 1e-10);
  Eigen::Index best = 0;
  cv.scores.col(0).minCoeff(&best);
  CHECK(cv.best_alpha_index == best);
  CHECK(cv.best_alpha == grid.alphas[static_cast<std::size_t>(best)]);
  CHECK((cv.scores.array() >= 0.0).all());

  opts.threads = 1;
  const CvResult serial = loocv_alpha(data.y, data.x, grid, opts);
  CHECK((serial.scores - cv.scores).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("LOOCV selects the generating alpha") {
  // The mean does not depend on alpha, so single datasets separate grid
  // points weakly; scores are pooled over replicate datasets.
  for (double alpha : {0.25, 0.5, 1.0}) {
    VectorXd pooled = VectorXd::Zero(5);
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      const SyntheticData data = make(100, 300 + seed, 0.02, alpha);
      pooled += loocv_alpha(data.y, data.x, CvGrid{}).scores.col(0);
    }
    Eigen::Index best = 0;
    pooled.minCoeff(&best);
    CHECK(CvGrid{}.alphas[static_cast<std::size_t>(best)] == alpha);
  }
}

TEST_CASE("LOOCV single grid point, predictions and ties") {
  const SyntheticData data = make(20, 76, 0.05);
  CvGrid grid;
  grid.alphas = {0.5};
  CvOptions opts;
  opts.keep_predictions = true;
  const CvResult cv = loocv_alpha(data.y, data.x, grid, opts);
  CHECK(cv.best_alpha == 0.5);
  REQUIRE(cv.predictions.size() == 1);
  CHECK(cv.predictions[0].rows() == 20);
  CHECK(std::abs(kld(data.y, CompositionMatrix(cv.predictions[0])) - cv.scores(0, 0)) < 1e-10);

  grid.alphas = {-0.5};
  MatrixXd z = data.y.values();
  z(0, 0) = 0.0;
  CHECK_THROWS_AS(loocv_alpha(closure(z), data.x, grid), Error);
}

TEST_CASE("SLX LOOCV boundaries and determinism") {
  const SyntheticData data = make(12, 77, 0.05, 0.5, SpatialMode::Slx);
  CvGrid grid;
  grid.alphas = {0.5, 1.0};
  grid.ks = {1, 10, 11};
  CvOptions opts;
  opts.threads = 1;
  const CvResult a = loocv_slx(data.y, data.x, data.coords, grid, opts);
  opts.threads = 4;
  const CvResult b = loocv_slx(data.y, data.x, data.coords, grid, opts);
  CHECK((a.scores - b.scores).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.scores.allFinite());
  CHECK(a.scores.cols() == 3);
  CHECK(a.best_second.has_value());

  grid.ks = {12};
  CHECK_THROWS_AS(loocv_slx(data.y, data.x, data.coords, grid), Error);
}

TEST_CASE("SLX LOOCV with no spillover stays close to the plain model") {
  int plain_or_close = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const SyntheticData data = make(40, 100 + seed, 0.1);
    CvGrid grid;
    grid.alphas = {0.5};
    grid.ks = {5};
    const double slx = loocv_slx(data.y, data.x, data.coords, grid).scores(0, 0);
    const double plain = loocv_alpha(data.y, data.x, grid).scores(0, 0);
    if (slx >= plain * 0.95) ++plain_or_close;
  }
  CHECK(plain_or_close == 10);
}

TEST_CASE("GWaR LOOCV: flat bandwidth reduces to plain LOOCV") {
  const SyntheticData data = make(25, 78, 0.05);
  CvGrid grid;
  grid.alphas = {0.5, 1.0};
  grid.hs = {1e6, median_heuristic_bandwidth(data.coords)};
  const CvResult g = loocv_gwar(data.y, data.x, data.coords, grid);
  const CvResult p = loocv_alpha(data.y, data.x, grid);
  CHECK(std::abs(g.scores(0, 0) - p.scores(0, 0)) < 1e-4);
  CHECK(std::abs(g.scores(1, 0) - p.scores(1, 0)) < 1e-4);

  CvOptions one;
  one.threads = 1;
  CvOptions many;
  many.threads = 5;
  const CvResult a = loocv_gwar(data.y, data.x, data.coords, grid, one);
  const CvResult b = loocv_gwar(data.y, data.x, data.coords, grid, many);
  CHECK((a.scores - b.scores).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("GWaR LOOCV marks degenerate bandwidths as failed") {
  const SyntheticData data = make(20, 79, 0.05);
  CvGrid grid;
  grid.alphas = {0.5};
  grid.hs = {1e-9, 1.0};
  const CvResult g = loocv_gwar(data.y, data.x, data.coords, grid);
  CHECK(std::isinf(g.scores(0, 0)));
  CHECK(std::isfinite(g.scores(0, 1)));
  CHECK(g.best_second_index == 1);
  grid.hs = {-1.0};
  CHECK_THROWS_AS(loocv_gwar(data.y, data.x, data.coords, grid), Error);
}

TEST_CASE("GWaR LOOCV prefers a finite bandwidth on two-cluster data") {
  const SyntheticData data = make(80, 80, 0.05, 0.5, SpatialMode::TwoCluster);
  CvGrid grid;
  grid.alphas = {0.5};
  const double m = median_heuristic_bandwidth(data.coords);
  grid.hs = {1e6, 0.25 * m, 0.5 * m};
  const CvResult g = loocv_gwar(data.y, data.x, data.coords, grid);
  CHECK(*g.best_second < 1e6);
}
