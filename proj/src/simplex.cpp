#include "alphareg/simplex.hpp"

#include <cmath>
#include <sstream>

#include "alphareg/error.hpp"

namespace alphareg {

namespace {

void close_row(MatrixXd& m, Eigen::Index i) {
  const double s = m.row(i).sum();
  if (!(s > 0.0)) {
    std::ostringstream os;
    os << "row " << i << " sums to " << s;
    throw Error(ErrorCode::ZeroRow, os.str());
  }
  m.row(i) /= s;
}

void check_nonnegative(const MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      if (!std::isfinite(v) || v < 0.0) {
        std::ostringstream os;
        os << "entry (" << i << ", " << j << ") = " << v;
        throw Error(ErrorCode::NegativeEntry, os.str());
      }
    }
  }
}

void check_shape(const MatrixXd& m) {
  if (m.cols() < 2 || m.rows() < 1) {
    std::ostringstream os;
    os << "composition must be n x D with n >= 1 and D >= 2, got " << m.rows() << " x " << m.cols();
    throw Error(ErrorCode::InvalidDimension, os.str());
  }
}

}  // namespace

CompositionMatrix::CompositionMatrix(MatrixXd values) : values_(std::move(values)) {
  check_shape(values_);
  check_nonnegative(values_);
  Eigen::Index reclosed = 0;
  for (Eigen::Index i = 0; i < values_.rows(); ++i) {
    const double s = values_.row(i).sum();
    if (std::abs(s - 1.0) > kRowSumTolerance) {
      close_row(values_, i);
      ++reclosed;
    }
  }
  if (reclosed > 0) {
    std::ostringstream os;
    os << reclosed << " composition row(s) did not sum to 1 and were re-closed";
    warn(os.str());
  }
}

bool CompositionMatrix::has_zeros() const { return (values_.array() == 0.0).any(); }

CompositionMatrix CompositionMatrix::select_rows(const std::vector<Eigen::Index>& rows) const {
  CompositionMatrix out;
  out.values_ = values_(rows, Eigen::all);
  return out;
}

CompositionMatrix closure(const MatrixXd& raw) {
  check_shape(raw);
  check_nonnegative(raw);
  MatrixXd m = raw;
  for (Eigen::Index i = 0; i < m.rows(); ++i) close_row(m, i);
  return CompositionMatrix(std::move(m));
}

MatrixXd helmert_submatrix(Eigen::Index parts) {
  if (parts < 2) {
    throw Error(ErrorCode::InvalidDimension, "Helmert sub-matrix needs D >= 2, got " + std::to_string(parts));
  }
  MatrixXd h = MatrixXd::Zero(parts - 1, parts);
  for (Eigen::Index m = 1; m < parts; ++m) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(m * (m + 1)));
    h.row(m - 1).head(m).setConstant(scale);
    h(m - 1, m) = -static_cast<double>(m) * scale;
  }
  return h;
}

void check_alpha(double alpha) {
  if (!(alpha >= -1.0 && alpha <= 1.0)) {
    std::ostringstream os;
    os << "alpha must lie in [-1, 1], got " << alpha;
    throw Error(ErrorCode::InvalidAlpha, os.str());
  }
}

void check_zeros_rule(const CompositionMatrix& y, double alpha) {
  if (alpha > 0.0 || !y.has_zeros()) return;
  if (alpha == 0.0) {
    throw Error(ErrorCode::ZeroWithLogRatio, "log-ratio transform (alpha = 0) is undefined for zero components");
  }
  std::ostringstream os;
  os << "alpha = " << alpha << " requires strictly positive compositions";
  throw Error(ErrorCode::ZeroWithNonpositiveAlpha, os.str());
}

CompositionMatrix power_transform(const CompositionMatrix& y, double alpha) {
  check_alpha(alpha);
  if (alpha == 0.0) throw Error(ErrorCode::InvalidAlpha, "power transform needs alpha != 0");
  check_zeros_rule(y, alpha);
  MatrixXd u = y.values().array().pow(alpha).matrix();
  for (Eigen::Index i = 0; i < u.rows(); ++i) u.row(i) /= u.row(i).sum();
  return CompositionMatrix(std::move(u));
}

EuclideanScores ilr_transform(const CompositionMatrix& y) {
  check_zeros_rule(y, 0.0);
  MatrixXd clr = y.values().array().log().matrix();
  for (Eigen::Index i = 0; i < clr.rows(); ++i) clr.row(i).array() -= clr.row(i).mean();
  return clr * helmert_submatrix(y.parts()).transpose();
}

EuclideanScores alpha_transform(const CompositionMatrix& y, double alpha) {
  check_alpha(alpha);
  if (alpha == 0.0) return ilr_transform(y);
  const auto parts = static_cast<double>(y.parts());
  const MatrixXd u = power_transform(y, alpha).values();
  const MatrixXd centred = (parts * u.array() - 1.0).matrix() / alpha;
  return centred * helmert_submatrix(y.parts()).transpose();
}

CompositionMatrix alpha_transform_inverse(const EuclideanScores& z, double alpha) {
  check_alpha(alpha);
  const Eigen::Index parts = z.cols() + 1;
  const MatrixXd h = helmert_submatrix(parts);
  MatrixXd back = z * h;  // n x D, rows sum to zero
  if (alpha == 0.0) {
    for (Eigen::Index i = 0; i < back.rows(); ++i) {
      const double top = back.row(i).maxCoeff();
      back.row(i) = (back.row(i).array() - top).exp().matrix();
      back.row(i) /= back.row(i).sum();
    }
    return CompositionMatrix(std::move(back));
  }

  const double d = static_cast<double>(parts);
  MatrixXd u = ((alpha * back).array() + 1.0).matrix() / d;
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    for (Eigen::Index j = 0; j < parts; ++j) {
      double& v = u(i, j);
      if (!std::isfinite(v) || v < -1e-12 || (alpha < 0.0 && v <= 0.0)) {
        std::ostringstream os;
        os << "scores row " << i << " is outside the image of the alpha-transformation (u_" << j << " = " << v << ")";
        throw Error(ErrorCode::OutOfImage, os.str());
      }
      v = v <= 0.0 ? 0.0 : std::pow(v, 1.0 / alpha);
    }
    u.row(i) /= u.row(i).sum();
  }
  return CompositionMatrix(std::move(u));
}

}  // namespace alphareg
