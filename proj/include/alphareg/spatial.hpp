#pragma once

// Geographic machinery and the two spatial alpha-models: k-nearest-neighbour
// contiguity weights, Gaussian kernels on chordal distance, the alpha-SLX fit
// and the geographically weighted alpha-regression (GWaR).

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "alphareg/alpha_model.hpp"

namespace alphareg {

using Vector3 = Eigen::Vector3d;

// (cos v, sin v cos l, sin v sin l) with v = latitude and l = longitude in radians.
Vector3 to_cartesian(double lat_deg, double lon_deg);

// 2 (1 - c_i' c_j), clamped at zero.
double chordal_distance_sq(const Vector3& a, const Vector3& b);

class GeoCoordinates {
 public:
  GeoCoordinates() = default;
  GeoCoordinates(VectorXd lat, VectorXd lon);

  Eigen::Index size() const noexcept { return lat_.size(); }
  const VectorXd& lat() const noexcept { return lat_; }
  const VectorXd& lon() const noexcept { return lon_; }
  const Eigen::Matrix<double, Eigen::Dynamic, 3>& cartesian() const noexcept { return cart_; }
  Vector3 point(Eigen::Index i) const { return cart_.row(i).transpose(); }

  GeoCoordinates select_rows(const std::vector<Eigen::Index>& rows) const;

 private:
  VectorXd lat_;
  VectorXd lon_;
  Eigen::Matrix<double, Eigen::Dynamic, 3> cart_;
};

// Squared chordal distances from `focal` to every point.
VectorXd chordal_distances_sq(const GeoCoordinates& coords, const Vector3& focal);

inline constexpr double kCoincidentEpsilon = 1e-12;

class SpatialWeightMatrix {
 public:
  SpatialWeightMatrix(MatrixXd values, int k) : values_(std::move(values)), k_(k) {}

  const MatrixXd& values() const noexcept { return values_; }
  int k() const noexcept { return k_; }
  Eigen::Index size() const noexcept { return values_.rows(); }

 private:
  MatrixXd values_;
  int k_;
};

// Row-standardized inverse squared chordal distances over the k nearest
// neighbours (ties keep the lower index; coincident points weigh 1/eps).
SpatialWeightMatrix contiguity_matrix(const GeoCoordinates& coords, int k);

// Standardized weights of the k nearest points of `coords` to `focal`,
// excluding index `exclude` when given. Row of a contiguity matrix.
VectorXd neighbour_weights(const GeoCoordinates& coords, const Vector3& focal, int k,
                           std::optional<Eigen::Index> exclude = std::nullopt);

struct KernelWeights {
  VectorXd values;
  double bandwidth;
};

// exp((c_i' c_j - 1) / h^2) for all j.
KernelWeights gaussian_kernel_weights(const GeoCoordinates& coords, Eigen::Index focal, double h);
KernelWeights gaussian_kernel_weights(const GeoCoordinates& coords, const Vector3& focal, double h);

// W times the covariate block (the intercept is never lagged), n x p.
MatrixXd spatial_lag(const SpatialWeightMatrix& w, const DesignMatrix& x);

struct SlxFit {
  CoefficientMatrix beta;   // (p+1) x d
  CoefficientMatrix gamma;  // p x d, coefficients of the lagged covariates
  FitResult fit;            // fit on the augmented design [X | WX]
};

SlxFit fit_alpha_slx(const CompositionMatrix& y, const DesignMatrix& x, const SpatialWeightMatrix& w, double alpha,
                     const LmOptions& opts = {}, const std::optional<CoefficientMatrix>& start = {});

struct GwarFit {
  std::vector<CoefficientMatrix> local_coefficients;  // one (p+1) x d matrix per location
  CoefficientMatrix global_coefficients;
  double alpha = 0.0;
  double bandwidth = 0.0;
  CompositionMatrix fitted;
  double kld = 0.0;
  std::vector<int> iterations;

  // Training data kept for out-of-sample prediction.
  CompositionMatrix y;
  DesignMatrix x;
  GeoCoordinates coords;
  LmOptions options;
};

// Runs one kernel-weighted alpha-regression per location. Local fits start
// from the global fit and run in parallel (threads <= 0: default count).
GwarFit fit_gwar(const CompositionMatrix& y, const DesignMatrix& x, const GeoCoordinates& coords, double alpha,
                 double h, const LmOptions& opts = {}, int threads = 0);

// One weighted fit at an arbitrary focal point using training data only.
// `self` marks a training row sitting at the focal point: its weight is 1 and
// it does not count towards the DegenerateWeights check.
AlphaNlsSolution fit_gwar_local(const EuclideanScores& y_alpha, const DesignMatrix& x, const GeoCoordinates& coords,
                                const Vector3& focal, double alpha, double h, const LmOptions& opts,
                                const CoefficientMatrix& start, std::optional<Eigen::Index> self = std::nullopt);

// Refits the local problem at each new location and evaluates the mean there.
CompositionMatrix predict_gwar(const GwarFit& fit, const DesignMatrix& x_new, const GeoCoordinates& coords_new,
                               int threads = 0);

}  // namespace alphareg
