#include "alphareg/alpha_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "alphareg/error.hpp"
#include "alphareg/model_selection.hpp"

namespace alphareg {

namespace {

void check_conformable(const DesignMatrix& x, const CoefficientMatrix& b) {
  if (x.cols() != b.rows()) {
    std::ostringstream os;
    os << "design has " << x.cols() << " columns but coefficients have " << b.rows() << " rows";
    throw Error(ErrorCode::DimensionMismatch, os.str());
  }
  if (b.cols() < 1) throw Error(ErrorCode::DimensionMismatch, "coefficient matrix needs at least one column");
}

// Linear predictors with the reference component prepended: n x D, column 0 is 0.
MatrixXd full_predictor(const DesignMatrix& x, const CoefficientMatrix& b) {
  check_conformable(x, b);
  MatrixXd eta(x.rows(), b.cols() + 1);
  eta.col(0).setZero();
  eta.rightCols(b.cols()) = (x.values() * b).cwiseMax(-kLinearPredictorClamp).cwiseMin(kLinearPredictorClamp);
  return eta;
}

// Row-wise softmax of scale * logits.
void softmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& logits, double scale, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> out) {
  const Eigen::RowVectorXd s = scale * logits;
  const double top = s.maxCoeff();
  out = (s.array() - top).exp().matrix();
  out /= out.sum();
}

// (D u - 1) / alpha with u = softmax(alpha * logits), written through expm1 so
// that small alpha does not cancel. alpha == 0 yields the centred logits.
void centred_power_row(const Eigen::Ref<const Eigen::RowVectorXd>& logits, double alpha,
                       Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> out) {
  const Eigen::Index parts = logits.size();
  if (alpha == 0.0) {
    out = logits.array() - logits.mean();
    return;
  }
  Eigen::RowVectorXd w = alpha * logits;
  const double top = w.maxCoeff();
  for (Eigen::Index l = 0; l < parts; ++l) w[l] = std::exp(w[l] - top);
  const double total = w.sum();
  for (Eigen::Index j = 0; j < parts; ++j) {
    double acc = 0.0;
    for (Eigen::Index l = 0; l < parts; ++l) {
      if (w[l] == 0.0 || l == j) continue;
      acc += w[l] * std::expm1(alpha * (logits[j] - logits[l]));
    }
    out[j] = acc / (alpha * total);
  }
}

struct ObservationDerivatives {
  VectorXd mu;          // D
  VectorXd u;           // D, power transform of mu
  MatrixXd power_jac;   // D x D, (D/alpha) du_l/dmu_p
  MatrixXd logit_jac;   // D x d, dmu_p/deta_k
  MatrixXd dm;          // d x d, column k = d m_alpha / d eta_k
};

// Chain through the fitted composition: power-transform Jacobian times
// multinomial-logit Jacobian. The 1/alpha of the Helmert step is folded into
// the power-transform factors so alpha == 0 is the continuous limit.
class ChainRule {
 public:
  ChainRule(Eigen::Index parts, double alpha) : parts_(parts), alpha_(alpha), helmert_(helmert_submatrix(parts)) {}

  ObservationDerivatives first(const Eigen::RowVectorXd& mu_row) const {
    const Eigen::Index dd = parts_ - 1;
    const double dparts = static_cast<double>(parts_);
    ObservationDerivatives out;
    out.mu = mu_row.transpose().cwiseMax(kMeanFloor);
    out.u = power_weights(out.mu);
    const VectorXd& u = out.u;

    out.power_jac.resize(parts_, parts_);
    for (Eigen::Index l = 0; l < parts_; ++l) {
      for (Eigen::Index p = 0; p < parts_; ++p) {
        out.power_jac(l, p) = dparts * (u[p] / out.mu[p]) * ((l == p ? 1.0 : 0.0) - u[l]);
      }
    }
    out.logit_jac.resize(parts_, dd);
    for (Eigen::Index p = 0; p < parts_; ++p) {
      for (Eigen::Index k = 0; k < dd; ++k) {
        out.logit_jac(p, k) = out.mu[p] * ((p == k + 1 ? 1.0 : 0.0) - out.mu[k + 1]);
      }
    }
    out.dm = helmert_ * out.power_jac * out.logit_jac;
    return out;
  }

  // d^2 m_alpha / d eta_k d eta_k2.
  VectorXd second(const ObservationDerivatives& obs, Eigen::Index k, Eigen::Index k2) const {
    const VectorXd& mu = obs.mu;
    const VectorXd& u = obs.u;
    const double dparts = static_cast<double>(parts_);

    // Power-transform curvature contracted with the two logit directions.
    VectorXd curvature = VectorXd::Zero(parts_);
    for (Eigen::Index l = 0; l < parts_; ++l) {
      double acc = 0.0;
      for (Eigen::Index p = 0; p < parts_; ++p) {
        const double dlp = (l == p ? 1.0 : 0.0) - u[l];
        const double ap = u[p] / mu[p];
        for (Eigen::Index q = 0; q < parts_; ++q) {
          const double dlq = (l == q ? 1.0 : 0.0) - u[l];
          const double aq = u[q] / mu[q];
          double hess = -alpha_ * ap * aq * (dlp + dlq);
          if (p == q) hess += (alpha_ - 1.0) * (u[p] / (mu[p] * mu[p])) * dlp;
          acc += dparts * hess * obs.logit_jac(p, k2) * obs.logit_jac(q, k);
        }
      }
      curvature[l] = acc;
    }

    // Multinomial-logit curvature.
    VectorXd logit2(parts_);
    const double mk = mu[k + 1];
    const double mk2 = mu[k2 + 1];
    for (Eigen::Index p = 0; p < parts_; ++p) {
      const double a = (p == k + 1 ? 1.0 : 0.0) - mk;
      const double b = (p == k2 + 1 ? 1.0 : 0.0) - mk2;
      logit2[p] = mu[p] * (a * b - mk * ((k == k2 ? 1.0 : 0.0) - mk2));
    }
    return helmert_ * (curvature + obs.power_jac * logit2);
  }

 private:
  VectorXd power_weights(const VectorXd& mu) const {
    Eigen::RowVectorXd u(parts_);
    softmax_row(mu.transpose().array().log().matrix(), alpha_, u);
    return u.transpose();
  }

  Eigen::Index parts_;
  double alpha_;
  MatrixXd helmert_;
};

struct Prepared {
  EuclideanScores y_alpha;
  MatrixXd mu;
  MatrixXd residuals;  // n x d
};

Prepared prepare(const CompositionMatrix& y, const DesignMatrix& x, double alpha, const CoefficientMatrix& b) {
  check_conformable(x, b);
  if (y.rows() != x.rows() || y.parts() != b.cols() + 1) {
    throw Error(ErrorCode::DimensionMismatch, "response, design and coefficients are not conformable");
  }
  Prepared out;
  out.y_alpha = alpha_transform(y, alpha);
  out.mu = fitted_mean(x, b).values();
  out.residuals = out.y_alpha - transformed_mean(x, b, alpha);
  return out;
}

template <typename Fn>
MatrixXd assemble_blocks(const DesignMatrix& x, Eigen::Index dd, Fn&& weight_of) {
  const Eigen::Index pp = x.cols();
  const Eigen::Index n = x.rows();
  MatrixXd out = MatrixXd::Zero(pp * dd, pp * dd);
  VectorXd w(n);
  for (Eigen::Index k = 0; k < dd; ++k) {
    for (Eigen::Index k2 = k; k2 < dd; ++k2) {
      for (Eigen::Index i = 0; i < n; ++i) w[i] = weight_of(i, k, k2);
      const MatrixXd block = x.values().transpose() * w.asDiagonal() * x.values();
      out.block(k * pp, k2 * pp, pp, pp) = block;
      if (k2 != k) out.block(k2 * pp, k * pp, pp, pp) = block.transpose();
    }
  }
  return out;
}

}  // namespace

DesignMatrix::DesignMatrix(MatrixXd values) : values_(std::move(values)) {
  if (values_.cols() < 1 || values_.rows() < 1) {
    throw Error(ErrorCode::DimensionMismatch, "design matrix needs at least one row and the intercept column");
  }
  if (!values_.allFinite()) throw Error(ErrorCode::InvalidParameters, "design matrix has non-finite entries");
  if (!(values_.col(0).array() == 1.0).all()) {
    throw Error(ErrorCode::InvalidParameters, "first design column must be the intercept (all ones)");
  }
}

DesignMatrix DesignMatrix::with_intercept(const MatrixXd& covariates) {
  MatrixXd v(covariates.rows(), covariates.cols() + 1);
  v.col(0).setOnes();
  v.rightCols(covariates.cols()) = covariates;
  return DesignMatrix(std::move(v));
}

DesignMatrix DesignMatrix::select_rows(const std::vector<Eigen::Index>& rows) const {
  DesignMatrix out;
  out.values_ = values_(rows, Eigen::all);
  return out;
}

DesignMatrix DesignMatrix::augmented(const MatrixXd& extra) const {
  if (extra.rows() != rows()) throw Error(ErrorCode::DimensionMismatch, "augmenting block has the wrong row count");
  MatrixXd v(rows(), cols() + extra.cols());
  v << values_, extra;
  return DesignMatrix(std::move(v));
}

CompositionMatrix fitted_mean(const DesignMatrix& x, const CoefficientMatrix& b) {
  const MatrixXd eta = full_predictor(x, b);
  MatrixXd mu(eta.rows(), eta.cols());
  for (Eigen::Index i = 0; i < eta.rows(); ++i) {
    softmax_row(eta.row(i), 1.0, mu.row(i));
    mu.row(i) = mu.row(i).cwiseMax(kMeanFloor);
  }
  return CompositionMatrix(std::move(mu));
}

EuclideanScores transformed_mean(const DesignMatrix& x, const CoefficientMatrix& b, double alpha) {
  check_alpha(alpha);
  const MatrixXd eta = full_predictor(x, b);
  MatrixXd centred(eta.rows(), eta.cols());
  for (Eigen::Index i = 0; i < eta.rows(); ++i) centred_power_row(eta.row(i), alpha, centred.row(i));
  return centred * helmert_submatrix(eta.cols()).transpose();
}

double sse(const CompositionMatrix& y, const DesignMatrix& x, double alpha, const CoefficientMatrix& b) {
  return prepare(y, x, alpha, b).residuals.squaredNorm();
}

VectorXd gradient(const CompositionMatrix& y, const DesignMatrix& x, double alpha, const CoefficientMatrix& b) {
  const Prepared prep = prepare(y, x, alpha, b);
  const Eigen::Index n = x.rows();
  const Eigen::Index dd = b.cols();
  const ChainRule chain(dd + 1, alpha);
  MatrixXd weights(n, dd);  // w_k(i) = r_i' dm_i/deta_k
  for (Eigen::Index i = 0; i < n; ++i) {
    const ObservationDerivatives obs = chain.first(prep.mu.row(i));
    weights.row(i) = prep.residuals.row(i) * obs.dm;
  }
  const MatrixXd grad = x.values().transpose() * weights;  // (p+1) x d
  return vectorize(grad);
}

MatrixXd hessian_gauss_newton(const CompositionMatrix& y, const DesignMatrix& x, double alpha,
                              const CoefficientMatrix& b) {
  const Prepared prep = prepare(y, x, alpha, b);
  const Eigen::Index dd = b.cols();
  const ChainRule chain(dd + 1, alpha);
  std::vector<MatrixXd> dm(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) dm[i] = chain.first(prep.mu.row(i)).dm;
  return -assemble_blocks(x, dd, [&](Eigen::Index i, Eigen::Index k, Eigen::Index k2) {
    return dm[i].col(k).dot(dm[i].col(k2));
  });
}

MatrixXd hessian_exact(const CompositionMatrix& y, const DesignMatrix& x, double alpha, const CoefficientMatrix& b) {
  const Prepared prep = prepare(y, x, alpha, b);
  const Eigen::Index n = x.rows();
  const Eigen::Index dd = b.cols();
  const ChainRule chain(dd + 1, alpha);
  // Per observation, d x d table of (second-order - first-order) weights.
  std::vector<MatrixXd> table(n, MatrixXd(dd, dd));
  for (Eigen::Index i = 0; i < n; ++i) {
    const ObservationDerivatives obs = chain.first(prep.mu.row(i));
    const VectorXd r = prep.residuals.row(i).transpose();
    for (Eigen::Index k = 0; k < dd; ++k) {
      for (Eigen::Index k2 = k; k2 < dd; ++k2) {
        const double gn = obs.dm.col(k).dot(obs.dm.col(k2));
        const double second = r.dot(chain.second(obs, k, k2));
        table[i](k, k2) = second - gn;
      }
    }
  }
  return assemble_blocks(x, dd, [&](Eigen::Index i, Eigen::Index k, Eigen::Index k2) { return table[i](k, k2); });
}

VectorXd stacked_residuals(const EuclideanScores& y_alpha, const DesignMatrix& x, double alpha,
                           const CoefficientMatrix& b) {
  const MatrixXd r = y_alpha - transformed_mean(x, b, alpha);
  const MatrixXd rt = r.transpose();  // d x n, column-major gives observation-major stacking
  return Eigen::Map<const VectorXd>(rt.data(), rt.size());
}

MatrixXd residual_jacobian(const DesignMatrix& x, double alpha, const CoefficientMatrix& b) {
  const MatrixXd eta = full_predictor(x, b);
  const Eigen::Index n = x.rows();
  const Eigen::Index pp = x.cols();
  const Eigen::Index parts = eta.cols();
  const Eigen::Index dd = parts - 1;
  const double dparts = static_cast<double>(parts);
  const MatrixXd h = helmert_submatrix(parts);

  MatrixXd jac(n * dd, pp * dd);
  Eigen::RowVectorXd u(parts);
  VectorXd du(parts);
  for (Eigen::Index i = 0; i < n; ++i) {
    softmax_row(eta.row(i), alpha, u);
    for (Eigen::Index k = 0; k < dd; ++k) {
      // d m / d eta_k = D H (u o (e_{k+1} - u_{k+1}))
      for (Eigen::Index l = 0; l < parts; ++l) du[l] = u[l] * ((l == k + 1 ? 1.0 : 0.0) - u[k + 1]);
      const VectorXd dm = dparts * (h * du);
      for (Eigen::Index m = 0; m < dd; ++m) {
        jac.block(i * dd + m, k * pp, 1, pp) = -dm[m] * x.values().row(i);
      }
    }
  }
  return jac;
}

AlphaNlsSolution solve_alpha_nls(const EuclideanScores& y_alpha, const DesignMatrix& x, double alpha,
                                 const LmOptions& opts, const CoefficientMatrix& start,
                                 const VectorXd* observation_weights) {
  check_conformable(x, start);
  if (y_alpha.rows() != x.rows() || y_alpha.cols() != start.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "transformed response does not match design and coefficients");
  }
  const Eigen::Index pp = x.cols();
  const Eigen::Index dd = start.cols();

  ResidualSystem system;
  system.residual = [&](const VectorXd& theta) {
    return stacked_residuals(y_alpha, x, alpha, unvectorize(theta, pp, dd));
  };
  system.jacobian = [&](const VectorXd& theta) { return residual_jacobian(x, alpha, unvectorize(theta, pp, dd)); };
  if (observation_weights) {
    if (observation_weights->size() != x.rows()) {
      throw Error(ErrorCode::DimensionMismatch, "one weight per observation is required");
    }
    VectorXd w(x.rows() * dd);
    for (Eigen::Index i = 0; i < x.rows(); ++i) w.segment(i * dd, dd).setConstant((*observation_weights)[i]);
    system.weights = std::move(w);
  }

  AlphaNlsSolution out;
  out.lm = levenberg_marquardt(system, vectorize(start), opts);
  out.coefficients = unvectorize(out.lm.theta_hat, pp, dd);
  return out;
}

void check_fit_inputs(const CompositionMatrix& y, const DesignMatrix& x, double alpha) {
  check_alpha(alpha);
  check_zeros_rule(y, alpha);
  if (y.rows() != x.rows()) {
    std::ostringstream os;
    os << "response has " << y.rows() << " rows but design has " << x.rows();
    throw Error(ErrorCode::DimensionMismatch, os.str());
  }
  if (x.rows() <= x.cols()) {
    std::ostringstream os;
    os << "need more observations (" << x.rows() << ") than regressors (" << x.cols() << ")";
    throw Error(ErrorCode::DimensionMismatch, os.str());
  }
}

FitResult fit_alpha_regression(const CompositionMatrix& y, const DesignMatrix& x, double alpha, const LmOptions& opts,
                               const std::optional<CoefficientMatrix>& start) {
  check_fit_inputs(y, x, alpha);
  const CoefficientMatrix b0 = start ? *start : CoefficientMatrix::Zero(x.cols(), y.parts() - 1);
  const EuclideanScores y_alpha = alpha_transform(y, alpha);
  AlphaNlsSolution sol = solve_alpha_nls(y_alpha, x, alpha, opts, b0);

  FitResult fit;
  fit.coefficients = std::move(sol.coefficients);
  fit.lm = std::move(sol.lm);
  fit.alpha = alpha;
  fit.fitted = fitted_mean(x, fit.coefficients);
  fit.sse = (y_alpha - transformed_mean(x, fit.coefficients, alpha)).squaredNorm();
  fit.kld = kld(y, fit.fitted);
  return fit;
}

CompositionMatrix predict(const DesignMatrix& x_new, const FitResult& fit) { return fitted_mean(x_new, fit.coefficients); }

}  // namespace alphareg
