#pragma once

// The alpha-regression: multinomial-logit mean with the first component as
// reference, least squares in alpha-transformed space, analytic derivatives
// and the Levenberg-Marquardt fit.
//
// Coefficients are a (p+1) x d matrix B; column j holds the coefficients of
// component j+1 against the reference. The solver's parameter vector is
// vec(B) in column-major order, theta[k*(p+1) + j] = B(j, k).

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "alphareg/nls.hpp"
#include "alphareg/simplex.hpp"

namespace alphareg {

using CoefficientMatrix = MatrixXd;

inline constexpr double kLinearPredictorClamp = 700.0;
inline constexpr double kMeanFloor = 1e-300;

// n x (p+1) regressors whose first column is identically one.
class DesignMatrix {
 public:
  DesignMatrix() = default;
  explicit DesignMatrix(MatrixXd values);

  static DesignMatrix with_intercept(const MatrixXd& covariates);

  const MatrixXd& values() const noexcept { return values_; }
  Eigen::Index rows() const noexcept { return values_.rows(); }
  Eigen::Index cols() const noexcept { return values_.cols(); }
  Eigen::Index covariates() const noexcept { return values_.cols() - 1; }

  // Covariate block without the intercept, n x p.
  MatrixXd covariate_block() const { return values_.rightCols(covariates()); }

  DesignMatrix select_rows(const std::vector<Eigen::Index>& rows) const;

  // Appends extra covariate columns on the right.
  DesignMatrix augmented(const MatrixXd& extra) const;

 private:
  MatrixXd values_;
};

inline VectorXd vectorize(const CoefficientMatrix& b) { return Eigen::Map<const VectorXd>(b.data(), b.size()); }

inline CoefficientMatrix unvectorize(const VectorXd& theta, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const MatrixXd>(theta.data(), rows, cols);
}

// mu_1 = 1 / (1 + sum_j e^{x b_j}), mu_{j+1} = e^{x b_j} / (1 + sum_j e^{x b_j}).
CompositionMatrix fitted_mean(const DesignMatrix& x, const CoefficientMatrix& b);

// alpha_transform(fitted_mean(x, b), alpha) evaluated from the linear
// predictor scaled by alpha, without forming mu. alpha == 0 gives the ilr limit.
EuclideanScores transformed_mean(const DesignMatrix& x, const CoefficientMatrix& b, double alpha);

double sse(const CompositionMatrix& y, const DesignMatrix& x, double alpha, const CoefficientMatrix& b);

// Gradient of l = -SSE/2 with respect to vec(B), assembled through the
// power-transform and multinomial-logit Jacobians.
VectorXd gradient(const CompositionMatrix& y, const DesignMatrix& x, double alpha, const CoefficientMatrix& b);

// Gauss-Newton part of the Hessian of l; negative semi-definite.
MatrixXd hessian_gauss_newton(const CompositionMatrix& y, const DesignMatrix& x, double alpha,
                              const CoefficientMatrix& b);

// Full Hessian of l including the residual-weighted second derivatives.
MatrixXd hessian_exact(const CompositionMatrix& y, const DesignMatrix& x, double alpha, const CoefficientMatrix& b);

// Stacked residuals r[i*d + m] = y_alpha(i, m) - mu_alpha(i, m).
VectorXd stacked_residuals(const EuclideanScores& y_alpha, const DesignMatrix& x, double alpha,
                           const CoefficientMatrix& b);

// d r / d vec(B), (n d) x ((p+1) d), from the softmax-of-scaled-predictor form.
MatrixXd residual_jacobian(const DesignMatrix& x, double alpha, const CoefficientMatrix& b);

struct AlphaNlsSolution {
  CoefficientMatrix coefficients;
  LmResult lm;
};

// Minimizes sum_i w_i ||y_alpha_i - mu_alpha_i||^2 from `start`. Observation
// weights default to one.
AlphaNlsSolution solve_alpha_nls(const EuclideanScores& y_alpha, const DesignMatrix& x, double alpha,
                                 const LmOptions& opts, const CoefficientMatrix& start,
                                 const VectorXd* observation_weights = nullptr);

struct FitResult {
  CoefficientMatrix coefficients;
  CompositionMatrix fitted;
  double sse = 0.0;
  double kld = 0.0;
  double alpha = 0.0;
  LmResult lm;
  std::optional<MatrixXd> covariance;
};

// Least-squares alpha-regression. Starts from B = 0 unless `start` is given.
FitResult fit_alpha_regression(const CompositionMatrix& y, const DesignMatrix& x, double alpha,
                               const LmOptions& opts = {}, const std::optional<CoefficientMatrix>& start = {});

CompositionMatrix predict(const DesignMatrix& x_new, const FitResult& fit);

// Shared precondition checks for fits.
void check_fit_inputs(const CompositionMatrix& y, const DesignMatrix& x, double alpha);

}  // namespace alphareg
