#pragma once

// Maps between the simplex and Euclidean space: closure, the stay-in-simplex
// power transform, the alpha-transformation with its inverse, and the ilr limit.

#include <vector>

#include <Eigen/Dense>

namespace alphareg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Rows of alpha-transformed scores, n x (D-1).
using EuclideanScores = MatrixXd;

inline constexpr double kRowSumTolerance = 1e-10;

// n x D matrix of nonnegative rows summing to one.
class CompositionMatrix {
 public:
  CompositionMatrix() = default;

  // Validates entries. Rows whose sums deviate from 1 by more than
  // kRowSumTolerance are re-closed with a warning.
  explicit CompositionMatrix(MatrixXd values);

  const MatrixXd& values() const noexcept { return values_; }
  Eigen::Index rows() const noexcept { return values_.rows(); }
  Eigen::Index parts() const noexcept { return values_.cols(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return values_(i, j); }
  bool has_zeros() const;

  CompositionMatrix select_rows(const std::vector<Eigen::Index>& rows) const;

 private:
  MatrixXd values_;
};

// Divides each row of nonnegative raw amounts by its sum.
CompositionMatrix closure(const MatrixXd& raw);

// Standard d x D Helmert sub-matrix: row m (1-based) holds m copies of
// 1/sqrt(m(m+1)), then -m/sqrt(m(m+1)), then zeros.
MatrixXd helmert_submatrix(Eigen::Index parts);

// Throws InvalidAlpha unless alpha lies in [-1, 1].
void check_alpha(double alpha);

// Throws ZeroWithNonpositiveAlpha / ZeroWithLogRatio when y has zeros and
// alpha <= 0.
void check_zeros_rule(const CompositionMatrix& y, double alpha);

// u_i = y_i^a / sum_j y_j^a row by row; alpha must be nonzero.
CompositionMatrix power_transform(const CompositionMatrix& y, double alpha);

// z = (1/a) (D u - 1) H^T; alpha == 0 dispatches to ilr_transform.
EuclideanScores alpha_transform(const CompositionMatrix& y, double alpha);

// clr scores post-multiplied by H^T. Requires strictly positive rows.
EuclideanScores ilr_transform(const CompositionMatrix& y);

// Recovers compositions from scores: u = (a z H + 1) / D, y ~ u^(1/a).
// alpha == 0 inverts the ilr through a softmax of the clr scores.
CompositionMatrix alpha_transform_inverse(const EuclideanScores& z, double alpha);

}  // namespace alphareg
