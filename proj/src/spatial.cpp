#include "alphareg/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "alphareg/error.hpp"
#include "alphareg/model_selection.hpp"
#include "alphareg/parallel.hpp"

namespace alphareg {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

void check_coordinate(double lat, double lon) {
  if (!(lat >= -90.0 && lat <= 90.0) || !(lon > -180.0 && lon <= 180.0)) {
    std::ostringstream os;
    os << "latitude " << lat << " / longitude " << lon << " outside [-90, 90] x (-180, 180]";
    throw Error(ErrorCode::OutOfRangeCoordinate, os.str());
  }
}

void check_bandwidth(double h) {
  if (!(h > 0.0) || !std::isfinite(h)) {
    std::ostringstream os;
    os << "bandwidth must be positive, got " << h;
    throw Error(ErrorCode::NonpositiveBandwidth, os.str());
  }
}

}  // namespace

Vector3 to_cartesian(double lat_deg, double lon_deg) {
  check_coordinate(lat_deg, lon_deg);
  const double nu = lat_deg * kDegToRad;
  const double v = lon_deg * kDegToRad;
  return {std::cos(nu), std::sin(nu) * std::cos(v), std::sin(nu) * std::sin(v)};
}

double chordal_distance_sq(const Vector3& a, const Vector3& b) { return std::max(0.0, 2.0 * (1.0 - a.dot(b))); }

GeoCoordinates::GeoCoordinates(VectorXd lat, VectorXd lon) : lat_(std::move(lat)), lon_(std::move(lon)) {
  if (lat_.size() != lon_.size()) throw Error(ErrorCode::DimensionMismatch, "latitude and longitude lengths differ");
  cart_.resize(lat_.size(), 3);
  for (Eigen::Index i = 0; i < lat_.size(); ++i) cart_.row(i) = to_cartesian(lat_[i], lon_[i]).transpose();
}

GeoCoordinates GeoCoordinates::select_rows(const std::vector<Eigen::Index>& rows) const {
  GeoCoordinates out;
  out.lat_ = lat_(rows);
  out.lon_ = lon_(rows);
  out.cart_ = cart_(rows, Eigen::all);
  return out;
}

VectorXd chordal_distances_sq(const GeoCoordinates& coords, const Vector3& focal) {
  return (2.0 * (1.0 - (coords.cartesian() * focal).array())).cwiseMax(0.0).matrix();
}

VectorXd neighbour_weights(const GeoCoordinates& coords, const Vector3& focal, int k,
                           std::optional<Eigen::Index> exclude) {
  const Eigen::Index n = coords.size();
  const Eigen::Index available = n - (exclude ? 1 : 0);
  if (k < 1 || k > available) {
    std::ostringstream os;
    os << "k = " << k << " must lie in [1, " << available << "]";
    throw Error(ErrorCode::InvalidK, os.str());
  }
  const VectorXd dist = chordal_distances_sq(coords, focal);
  std::vector<Eigen::Index> order;
  order.reserve(static_cast<std::size_t>(available));
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!exclude || j != *exclude) order.push_back(j);
  }
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
  });
  VectorXd w = VectorXd::Zero(n);
  for (int m = 0; m < k; ++m) {
    const Eigen::Index j = order[static_cast<std::size_t>(m)];
    w[j] = 1.0 / std::max(dist[j], kCoincidentEpsilon);
  }
  return w / w.sum();
}

SpatialWeightMatrix contiguity_matrix(const GeoCoordinates& coords, int k) {
  const Eigen::Index n = coords.size();
  if (n < 2 || k < 1 || k > n - 1) {
    std::ostringstream os;
    os << "k = " << k << " invalid for " << n << " locations";
    throw Error(ErrorCode::InvalidK, os.str());
  }
  MatrixXd w(n, n);
  for (Eigen::Index i = 0; i < n; ++i) w.row(i) = neighbour_weights(coords, coords.point(i), k, i).transpose();
  return {std::move(w), k};
}

KernelWeights gaussian_kernel_weights(const GeoCoordinates& coords, const Vector3& focal, double h) {
  check_bandwidth(h);
  const VectorXd dots = coords.cartesian() * focal;
  // std::exp, not Eigen's packet exp: the latter clamps its argument and never underflows to zero.
  const VectorXd w = ((dots.array() - 1.0) / (h * h)).unaryExpr([](double v) { return std::min(1.0, std::exp(v)); });
  return {w, h};
}

KernelWeights gaussian_kernel_weights(const GeoCoordinates& coords, Eigen::Index focal, double h) {
  if (focal < 0 || focal >= coords.size()) throw Error(ErrorCode::InvalidParameters, "focal index out of range");
  KernelWeights k = gaussian_kernel_weights(coords, coords.point(focal), h);
  k.values[focal] = 1.0;
  return k;
}

MatrixXd spatial_lag(const SpatialWeightMatrix& w, const DesignMatrix& x) {
  if (w.size() != x.rows()) {
    std::ostringstream os;
    os << "weight matrix is " << w.size() << " x " << w.size() << " but design has " << x.rows() << " rows";
    throw Error(ErrorCode::DimensionMismatch, os.str());
  }
  return w.values() * x.covariate_block();
}

SlxFit fit_alpha_slx(const CompositionMatrix& y, const DesignMatrix& x, const SpatialWeightMatrix& w, double alpha,
                     const LmOptions& opts, const std::optional<CoefficientMatrix>& start) {
  const DesignMatrix augmented = x.augmented(spatial_lag(w, x));
  SlxFit out;
  out.fit = fit_alpha_regression(y, augmented, alpha, opts, start);
  out.beta = out.fit.coefficients.topRows(x.cols());
  out.gamma = out.fit.coefficients.bottomRows(x.covariates());
  return out;
}

AlphaNlsSolution fit_gwar_local(const EuclideanScores& y_alpha, const DesignMatrix& x, const GeoCoordinates& coords,
                                 const Vector3& focal, double alpha, double h, const LmOptions& opts,
                                 const CoefficientMatrix& start, std::optional<Eigen::Index> self) {
  if (coords.size() != x.rows()) throw Error(ErrorCode::DimensionMismatch, "coordinates and design differ in length");
  KernelWeights kw = gaussian_kernel_weights(coords, focal, h);
  if (self) kw.values[*self] = 1.0;
  bool informative = false;
  for (Eigen::Index j = 0; j < kw.values.size() && !informative; ++j) {
    informative = (!self || j != *self) && kw.values[j] > 0.0;
  }
  if (!informative) {
    std::ostringstream os;
    if (self) os << "location " << *self << ": every non-self kernel weight";
    else os << "every kernel weight";
    os << " underflows to zero at h = " << h;
    throw Error(ErrorCode::DegenerateWeights, os.str());
  }
  return solve_alpha_nls(y_alpha, x, alpha, opts, start, &kw.values);
}

GwarFit fit_gwar(const CompositionMatrix& y, const DesignMatrix& x, const GeoCoordinates& coords, double alpha,
                 double h, const LmOptions& opts, int threads) {
  check_fit_inputs(y, x, alpha);
  check_bandwidth(h);
  if (coords.size() != x.rows()) throw Error(ErrorCode::DimensionMismatch, "coordinates and design differ in length");

  const Eigen::Index n = x.rows();
  const EuclideanScores y_alpha = alpha_transform(y, alpha);
  GwarFit out;
  out.global_coefficients =
      solve_alpha_nls(y_alpha, x, alpha, opts, CoefficientMatrix::Zero(x.cols(), y.parts() - 1)).coefficients;
  out.local_coefficients.resize(static_cast<std::size_t>(n));
  out.iterations.resize(static_cast<std::size_t>(n));

  MatrixXd fitted(n, y.parts());
  parallel_for(
      static_cast<std::size_t>(n),
      [&](std::size_t idx) {
        const auto i = static_cast<Eigen::Index>(idx);
        AlphaNlsSolution sol =
            fit_gwar_local(y_alpha, x, coords, coords.point(i), alpha, h, opts, out.global_coefficients, i);
        const DesignMatrix xi = x.select_rows({i});
        fitted.row(i) = fitted_mean(xi, sol.coefficients).values();
        out.iterations[idx] = sol.lm.iterations;
        out.local_coefficients[idx] = std::move(sol.coefficients);
      },
      threads);

  out.alpha = alpha;
  out.bandwidth = h;
  out.fitted = CompositionMatrix(std::move(fitted));
  out.kld = kld(y, out.fitted);
  out.y = y;
  out.x = x;
  out.coords = coords;
  out.options = opts;
  return out;
}

CompositionMatrix predict_gwar(const GwarFit& fit, const DesignMatrix& x_new, const GeoCoordinates& coords_new,
                               int threads) {
  if (x_new.cols() != fit.x.cols()) throw Error(ErrorCode::DimensionMismatch, "new design has the wrong column count");
  if (coords_new.size() != x_new.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "new coordinates and design differ in length");
  }
  const EuclideanScores y_alpha = alpha_transform(fit.y, fit.alpha);
  MatrixXd mu(x_new.rows(), fit.y.parts());
  parallel_for(
      static_cast<std::size_t>(x_new.rows()),
      [&](std::size_t idx) {
        const auto j = static_cast<Eigen::Index>(idx);
        const CoefficientMatrix local = fit_gwar_local(y_alpha, fit.x, fit.coords, coords_new.point(j), fit.alpha,
                                                       fit.bandwidth, fit.options, fit.global_coefficients)
                                            .coefficients;
        mu.row(j) = fitted_mean(x_new.select_rows({j}), local).values();
      },
      threads);
  return CompositionMatrix(std::move(mu));
}

}  // namespace alphareg
