#pragma once

// Random instances and finite-difference helpers shared by the test suites.

#include <cstdint>
#include <functional>
#include <random>

#include <Eigen/Dense>

#include "alphareg/alpha_model.hpp"
#include "alphareg/spatial.hpp"

namespace testsupport {

using alphareg::CoefficientMatrix;
using alphareg::CompositionMatrix;
using alphareg::DesignMatrix;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline std::mt19937_64 rng_for(std::uint64_t seed) { return std::mt19937_64(seed * 0x9E3779B97F4A7C15ull + 17); }

// Strictly positive rows unless zero_fraction > 0.
inline CompositionMatrix random_composition(std::mt19937_64& rng, Eigen::Index n, Eigen::Index parts,
                                            double zero_fraction = 0.0) {
  std::gamma_distribution<double> g(2.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MatrixXd m(n, parts);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < parts; ++j) m(i, j) = g(rng) + 1e-3;
    for (Eigen::Index j = 0; j < parts; ++j) {
      if (u(rng) < zero_fraction) m(i, j) = 0.0;
    }
    if (m.row(i).sum() == 0.0) m(i, 0) = 1.0;
  }
  return alphareg::closure(m);
}

inline DesignMatrix random_design(std::mt19937_64& rng, Eigen::Index n, Eigen::Index p) {
  std::normal_distribution<double> z(0.0, 1.0);
  MatrixXd c(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) c(i, j) = z(rng);
  }
  return DesignMatrix::with_intercept(c);
}

inline CoefficientMatrix random_coefficients(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols,
                                             double scale = 0.5) {
  std::normal_distribution<double> z(0.0, scale);
  CoefficientMatrix b(rows, cols);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = z(rng);
  return b;
}

inline alphareg::GeoCoordinates random_coords(std::mt19937_64& rng, Eigen::Index n, double lat_lo = 30.0,
                                              double lat_hi = 60.0, double lon_lo = -10.0, double lon_hi = 30.0) {
  std::uniform_real_distribution<double> la(lat_lo, lat_hi);
  std::uniform_real_distribution<double> lo(lon_lo, lon_hi);
  VectorXd lat(n);
  VectorXd lon(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    lat[i] = la(rng);
    lon[i] = lo(rng);
  }
  return {lat, lon};
}

// Central differences of a scalar function of a vector.
inline VectorXd fd_gradient(const std::function<double(const VectorXd&)>& f, const VectorXd& x, double h = 1e-6) {
  VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    VectorXd a = x;
    VectorXd b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

// Central differences of a vector function; column i is d f / d x_i.
inline MatrixXd fd_jacobian(const std::function<VectorXd(const VectorXd&)>& f, const VectorXd& x, double h = 1e-6) {
  const VectorXd f0 = f(x);
  MatrixXd j(f0.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    VectorXd a = x;
    VectorXd b = x;
    a[i] += h;
    b[i] -= h;
    j.col(i) = (f(a) - f(b)) / (2.0 * h);
  }
  return j;
}

// max |a - b| / max(1, max |b|).
inline double rel_error(const MatrixXd& a, const MatrixXd& b) {
  const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace testsupport
