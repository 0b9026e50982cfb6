#include <cmath>

#include <doctest.h>

#include "alphareg/error.hpp"
#include "alphareg/simplex.hpp"
#include "support.hpp"

using namespace alphareg;

namespace {

CompositionMatrix row(std::initializer_list<double> v) {
  Eigen::RowVectorXd r(static_cast<Eigen::Index>(v.size()));
  Eigen::Index j = 0;
  for (double x : v) r[j++] = x;
  return CompositionMatrix(MatrixXd(r));
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an alphareg::Error");
  return ErrorCode::InvalidParameters;
}

}  // namespace

TEST_CASE("closure divides by the row sum and keeps zeros") {
  MatrixXd raw(3, 3);
  raw << 2, 3, 5, 1, 1, 0, 0, 4, 0;
  const CompositionMatrix c = closure(raw);
  CHECK(c(0, 0) == doctest::Approx(0.2));
  CHECK(c(0, 1) == doctest::Approx(0.3));
  CHECK(c(0, 2) == doctest::Approx(0.5));
  CHECK(c(1, 0) == 0.5);
  CHECK(c(2, 0) == 0.0);
  CHECK(c(2, 1) == 1.0);

  MatrixXd two(1, 2);
  two << 1, 1;
  CHECK(closure(two)(0, 1) == 0.5);
}

TEST_CASE("closure and composition errors") {
  MatrixXd neg(1, 2);
  neg << -0.1, 1.1;
  CHECK(code_of([&] { closure(neg); }) == ErrorCode::NegativeEntry);
  MatrixXd zero = MatrixXd::Zero(1, 3);
  CHECK(code_of([&] { closure(zero); }) == ErrorCode::ZeroRow);
  CHECK(code_of([&] { CompositionMatrix(MatrixXd::Ones(2, 1)); }) == ErrorCode::InvalidDimension);
}

TEST_CASE("composition rows off by more than 1e-10 are re-closed") {
  MatrixXd m(1, 2);
  m << 0.3, 0.7 + 1e-6;
  const CompositionMatrix c(m);
  CHECK(std::abs(c.values().row(0).sum() - 1.0) < 1e-15);
}

TEST_CASE("Helmert sub-matrix entries and invariants") {
  const MatrixXd h2 = helmert_submatrix(2);
  REQUIRE(h2.rows() == 1);
  CHECK(h2(0, 0) == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(h2(0, 1) == doctest::Approx(-1.0 / std::sqrt(2.0)));
  CHECK(code_of([] { helmert_submatrix(1); }) == ErrorCode::InvalidDimension);

  for (Eigen::Index parts = 2; parts <= 20; ++parts) {
    const MatrixXd h = helmert_submatrix(parts);
    REQUIRE(h.rows() == parts - 1);
    REQUIRE(h.cols() == parts);
    CHECK((h * h.transpose() - MatrixXd::Identity(parts - 1, parts - 1)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((h * VectorXd::Ones(parts)).cwiseAbs().maxCoeff() < 1e-12);
    const MatrixXd centring = MatrixXd::Identity(parts, parts) - MatrixXd::Constant(parts, parts, 1.0 / parts);
    CHECK((h.transpose() * h - centring).cwiseAbs().maxCoeff() < 1e-12);
    for (Eigen::Index m = 1; m < parts; ++m) {
      const double s = std::sqrt(static_cast<double>(m * (m + 1)));
      for (Eigen::Index j = 0; j < m; ++j) CHECK(h(m - 1, j) == doctest::Approx(1.0 / s));
      CHECK(h(m - 1, m) == doctest::Approx(-static_cast<double>(m) / s));
    }
  }
}

TEST_CASE("power transform examples") {
  const CompositionMatrix half = power_transform(row({0.5, 0.5}), 0.5);
  CHECK(half(0, 0) == doctest::Approx(0.5));
  const CompositionMatrix ident = power_transform(row({0.2, 0.8}), 1.0);
  CHECK(ident(0, 0) == doctest::Approx(0.2));
  CHECK(ident(0, 1) == doctest::Approx(0.8));

  const double a = 0.5;
  const double s = std::pow(0.2, a) + std::pow(0.3, a) + std::pow(0.5, a);
  const CompositionMatrix u = power_transform(row({0.2, 0.3, 0.5}), a);
  CHECK(u(0, 0) == doctest::Approx(std::pow(0.2, a) / s).epsilon(1e-14));
  CHECK(u(0, 1) == doctest::Approx(std::pow(0.3, a) / s).epsilon(1e-14));
  CHECK(u(0, 2) == doctest::Approx(std::pow(0.5, a) / s).epsilon(1e-14));
}

TEST_CASE("power transform zero rules and properties") {
  const CompositionMatrix z = row({0.0, 0.4, 0.6});
  CHECK(code_of([&] { power_transform(z, -0.5); }) == ErrorCode::ZeroWithNonpositiveAlpha);
  CHECK(code_of([&] { alpha_transform(z, -1.0); }) == ErrorCode::ZeroWithNonpositiveAlpha);
  CHECK(code_of([&] { alpha_transform(z, 0.0); }) == ErrorCode::ZeroWithLogRatio);
  CHECK(code_of([&] { ilr_transform(z); }) == ErrorCode::ZeroWithLogRatio);
  CHECK(code_of([&] { power_transform(row({0.3, 0.7}), 0.0); }) == ErrorCode::InvalidAlpha);
  CHECK(code_of([&] { alpha_transform(row({0.3, 0.7}), 1.5); }) == ErrorCode::InvalidAlpha);

  auto rng = testsupport::rng_for(1);
  const CompositionMatrix y = testsupport::random_composition(rng, 200, 5, 0.3);
  for (double a : {0.1, 0.5, 1.0}) {
    const CompositionMatrix u = power_transform(y, a);
    CHECK((u.values().rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(((u.values().array() == 0.0) == (y.values().array() == 0.0)).all());
  }
}

TEST_CASE("alpha transform examples") {
  for (double a : {-1.0, -0.3, 0.4, 1.0}) {
    const EuclideanScores z = alpha_transform(row({0.5, 0.5}), a);
    CHECK(z.cols() == 1);
    CHECK(std::abs(z(0, 0)) < 1e-15);
  }
  const CompositionMatrix y = row({0.2, 0.3, 0.5});
  const EuclideanScores near = alpha_transform(y, 1e-6);
  const EuclideanScores ilr = ilr_transform(y);
  CHECK((near - ilr).cwiseAbs().maxCoeff() < 1e-5);
  CHECK((alpha_transform(y, 0.0) - ilr).cwiseAbs().maxCoeff() == 0.0);

  // Independent evaluation of (1/a)(D u - 1) H^T for D = 3.
  const double a = 0.5;
  const CompositionMatrix u = power_transform(y, a);
  const double c1 = (3 * u(0, 0) - 1) / a;
  const double c2 = (3 * u(0, 1) - 1) / a;
  const double c3 = (3 * u(0, 2) - 1) / a;
  const EuclideanScores z = alpha_transform(y, a);
  CHECK(z(0, 0) == doctest::Approx((c1 - c2) / std::sqrt(2.0)));
  CHECK(z(0, 1) == doctest::Approx((c1 + c2 - 2 * c3) / std::sqrt(6.0)));

  const CompositionMatrix back = alpha_transform_inverse(alpha_transform(row({0.1, 0.2, 0.7}), 0.5), 0.5);
  CHECK(back(0, 0) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(back(0, 2) == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("ilr examples") {
  const EuclideanScores z = ilr_transform(row({1.0 / 3, 1.0 / 3, 1.0 / 3}));
  CHECK(z.cwiseAbs().maxCoeff() < 1e-15);
  const EuclideanScores z2 = ilr_transform(row({0.2, 0.8}));
  CHECK(z2(0, 0) == doctest::Approx(std::log(0.2 / 0.8) / std::sqrt(2.0)));

  // clr scores recovered through H sum to zero.
  auto rng = testsupport::rng_for(2);
  const CompositionMatrix y = testsupport::random_composition(rng, 50, 4);
  const MatrixXd clr = ilr_transform(y) * helmert_submatrix(4);
  CHECK(clr.rowwise().sum().cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("inverse transform examples and errors") {
  for (double a : {-0.5, 0.0, 0.5}) {
    const CompositionMatrix y = alpha_transform_inverse(MatrixXd::Zero(1, 2), a);
    for (Eigen::Index j = 0; j < 3; ++j) CHECK(y(0, j) == doctest::Approx(1.0 / 3.0));
  }
  const CompositionMatrix back = alpha_transform_inverse(alpha_transform(row({0.3, 0.7}), 0.25), 0.25);
  CHECK(back(0, 0) == doctest::Approx(0.3).epsilon(1e-12));

  // Far outside the image for alpha = 1: u_2 = (1 + z H)/2 < 0.
  MatrixXd out(1, 1);
  out << 5.0;
  CHECK(code_of([&] { alpha_transform_inverse(out, 1.0); }) == ErrorCode::OutOfImage);

  // ilr inverse on random scores.
  auto rng = testsupport::rng_for(3);
  std::normal_distribution<double> nz(0.0, 2.0);
  MatrixXd z(40, 4);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = nz(rng);
  CHECK((ilr_transform(alpha_transform_inverse(z, 0.0)) - z).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("round trip and ilr limit on random positive compositions") {
  auto rng = testsupport::rng_for(4);
  for (Eigen::Index parts : {2, 3, 5, 8}) {
    const CompositionMatrix y = testsupport::random_composition(rng, 100, parts);
    for (double a : {-1.0, -0.5, 0.5, 1.0}) {
      const CompositionMatrix back = alpha_transform_inverse(alpha_transform(y, a), a);
      CHECK((back.values() - y.values()).cwiseAbs().maxCoeff() < 1e-9);
    }
    CHECK((alpha_transform(y, 1e-6) - ilr_transform(y)).cwiseAbs().maxCoeff() < 1e-4);
  }
}

TEST_CASE("round trip with zeros for positive alpha") {
  auto rng = testsupport::rng_for(5);
  const CompositionMatrix y = testsupport::random_composition(rng, 100, 4, 0.3);
  for (double a : {0.1, 0.5, 1.0}) {
    const CompositionMatrix back = alpha_transform_inverse(alpha_transform(y, a), a);
    CHECK((back.values() - y.values()).cwiseAbs().maxCoeff() < 1e-9);
  }
}
