#pragma once

// Kullback-Leibler scoring and leave-one-out cross-validation over the
// hyper-parameter grids of the three models.

#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "alphareg/alpha_model.hpp"
#include "alphareg/spatial.hpp"

namespace alphareg {

// sum_i sum_j y_ij log(y_ij / mu_ij) with 0 log 0 = 0.
double kld(const CompositionMatrix& observed, const CompositionMatrix& fitted);

// Per-row divergence, same convention.
double kld_row(const Eigen::Ref<const Eigen::RowVectorXd>& observed, const Eigen::Ref<const Eigen::RowVectorXd>& fitted);

// Median of the n(n-1)/2 pairwise chordal distances (not squared).
double median_heuristic_bandwidth(const GeoCoordinates& coords);

// Ten log-spaced bandwidths from median/16 to 4 * median.
std::vector<double> default_h_grid(const GeoCoordinates& coords);

struct CvGrid {
  std::vector<double> alphas{0.1, 0.25, 0.5, 0.75, 1.0};
  std::vector<int> ks;
  std::vector<double> hs;
};

struct CvOptions {
  LmOptions solver;
  int threads = 0;          // <= 0: default count
  bool keep_predictions = false;
};

inline constexpr double kFailedScore = std::numeric_limits<double>::infinity();

struct CvResult {
  std::vector<double> alphas;
  std::vector<double> second;  // ks or hs; empty for the plain model
  MatrixXd scores;             // alphas x max(1, second.size()); +inf marks a failed grid point
  double best_alpha = 0.0;
  std::optional<double> best_second;
  Eigen::Index best_alpha_index = 0;
  Eigen::Index best_second_index = 0;
  // predictions[grid point](i, :) = held-out prediction for row i, grid
  // points ordered alpha-major. Filled when CvOptions::keep_predictions.
  std::vector<MatrixXd> predictions;
};

// Leave-one-out KLD of the alpha-regression for each alpha.
CvResult loocv_alpha(const CompositionMatrix& y, const DesignMatrix& x, const CvGrid& grid,
                     const CvOptions& opts = {});

// Leave-one-out KLD of the alpha-SLX over (alpha, k). Each fold rebuilds the
// contiguity matrix on the retained points and lags the held-out row through
// its k nearest retained neighbours.
CvResult loocv_slx(const CompositionMatrix& y, const DesignMatrix& x, const GeoCoordinates& coords,
                   const CvGrid& grid, const CvOptions& opts = {});

// Leave-one-out KLD of GWaR over (alpha, h): fold i fits the local model at
// location i from the other n-1 observations.
CvResult loocv_gwar(const CompositionMatrix& y, const DesignMatrix& x, const GeoCoordinates& coords,
                    const CvGrid& grid, const CvOptions& opts = {});

// Lagged covariates of a held-out point from its k nearest retained neighbours.
Eigen::RowVectorXd held_out_lag(const GeoCoordinates& retained_coords, const DesignMatrix& retained_x,
                                const Vector3& focal, int k);

}  // namespace alphareg
