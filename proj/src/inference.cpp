#include "alphareg/inference.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "alphareg/error.hpp"
#include "alphareg/parallel.hpp"

namespace alphareg {

namespace {

void check_covariate(int k, Eigen::Index covariates) {
  if (k == 0) throw Error(ErrorCode::InterceptEffectRequested, "marginal effects are not defined for the intercept");
  if (k < 0 || k > covariates) {
    std::ostringstream os;
    os << "covariate index " << k << " outside [1, " << covariates << "]";
    throw Error(ErrorCode::InvalidParameters, os.str());
  }
}

// Effects for one composition row given the coefficient row of covariate k.
void effects_row(const Eigen::Ref<const Eigen::RowVectorXd>& coef, const Eigen::Ref<const Eigen::RowVectorXd>& mu,
                 Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> out) {
  const Eigen::Index dd = coef.size();
  const double pulled = coef.dot(mu.tail(dd));
  out[0] = -mu[0] * pulled;
  for (Eigen::Index l = 1; l <= dd; ++l) out[l] = mu[l] * (coef[l - 1] - pulled);
}

MatrixXd effects(const Eigen::Ref<const Eigen::RowVectorXd>& coef, const MatrixXd& mu) {
  MatrixXd out(mu.rows(), mu.cols());
  for (Eigen::Index i = 0; i < mu.rows(); ++i) effects_row(coef, mu.row(i), out.row(i));
  return out;
}

}  // namespace

MarginalEffectsTable marginal_effects(const CoefficientMatrix& b, const CompositionMatrix& mu, int k) {
  check_covariate(k, b.rows() - 1);
  if (mu.parts() != b.cols() + 1) throw Error(ErrorCode::DimensionMismatch, "compositions and coefficients differ in D");
  return {k, effects(b.row(k), mu.values())};
}

VectorXd average_marginal_effects(const FitResult& fit, int k) {
  return marginal_effects(fit.coefficients, fit.fitted, k).values.colwise().mean().transpose();
}

SlxEffects slx_effects(const SlxFit& fit, int k) {
  check_covariate(k, fit.beta.rows() - 1);
  const MatrixXd& mu = fit.fit.fitted.values();
  SlxEffects out;
  out.direct = {k, effects(fit.beta.row(k), mu)};
  out.indirect = {k, effects(fit.gamma.row(k - 1), mu)};
  out.total = {k, effects(fit.beta.row(k) + fit.gamma.row(k - 1), mu)};
  return out;
}

MarginalEffectsTable gwar_marginal_effects(const GwarFit& fit, int k) {
  const MatrixXd& mu = fit.fitted.values();
  if (fit.local_coefficients.empty()) throw Error(ErrorCode::InvalidParameters, "empty GWaR fit");
  check_covariate(k, fit.local_coefficients.front().rows() - 1);
  MarginalEffectsTable out{k, MatrixXd(mu.rows(), mu.cols())};
  for (Eigen::Index i = 0; i < mu.rows(); ++i) {
    effects_row(fit.local_coefficients[static_cast<std::size_t>(i)].row(k), mu.row(i), out.values.row(i));
  }
  return out;
}

const char* to_string(CovarianceKind kind) {
  switch (kind) {
    case CovarianceKind::Sandwich: return "sandwich";
    case CovarianceKind::Spherical: return "spherical";
    case CovarianceKind::Bootstrap: return "bootstrap";
  }
  return "unknown";
}

namespace {

// Symmetrizes and clips rounding-level negative eigenvalues.
MatrixXd enforce_psd(const MatrixXd& m) {
  const MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sym);
  VectorXd values = eig.eigenvalues();
  const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
  if (values.minCoeff() < -1e-10 * scale) {
    std::ostringstream os;
    os << "covariance has eigenvalue " << values.minCoeff();
    throw Error(ErrorCode::NotPositiveSemiDefinite, os.str());
  }
  if (values.minCoeff() >= 0.0) return sym;
  values = values.cwiseMax(0.0);
  MatrixXd out = eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace

CovarianceEstimate sandwich_covariance(const CompositionMatrix& y, const DesignMatrix& x, double alpha,
                                       const CoefficientMatrix& b_hat, CovarianceKind kind) {
  if (kind == CovarianceKind::Bootstrap) {
    throw Error(ErrorCode::InvalidParameters, "use bootstrap_covariance for bootstrap estimates");
  }
  check_fit_inputs(y, x, alpha);
  const Eigen::Index n = x.rows();
  const Eigen::Index dd = b_hat.cols();
  const Eigen::Index np = b_hat.size();

  const EuclideanScores y_alpha = alpha_transform(y, alpha);
  const VectorXd resid = stacked_residuals(y_alpha, x, alpha, b_hat);
  // Rows of -d r / d theta are the per-observation mean Jacobians G_i.
  const MatrixXd g = -residual_jacobian(x, alpha, b_hat);

  MatrixXd bread = MatrixXd::Zero(np, np);
  MatrixXd meat = MatrixXd::Zero(np, np);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto gi = g.middleRows(i * dd, dd);
    bread.noalias() += gi.transpose() * gi;
    const VectorXd score = gi.transpose() * resid.segment(i * dd, dd);
    meat.noalias() += score * score.transpose();
  }
  bread /= static_cast<double>(n);
  meat /= static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(bread);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > kMaxHessianCondition) {
    std::ostringstream os;
    os << "H has condition number " << (lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity());
    throw Error(ErrorCode::SingularH, os.str());
  }
  const MatrixXd bread_inv =
      eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();

  CovarianceEstimate out;
  out.kind = kind;
  if (kind == CovarianceKind::Sandwich) {
    out.matrix = enforce_psd(bread_inv * meat * bread_inv / static_cast<double>(n));
  } else {
    const double dof = static_cast<double>(n * dd - x.cols() * dd);
    if (!(dof > 0)) throw Error(ErrorCode::DimensionMismatch, "no residual degrees of freedom");
    const double sigma2 = resid.squaredNorm() / dof;
    out.matrix = enforce_psd(sigma2 * bread_inv / static_cast<double>(n));
  }
  return out;
}

MatrixXd empirical_covariance(const MatrixXd& draws) {
  if (draws.rows() < 2) throw Error(ErrorCode::InvalidParameters, "need at least two draws for a covariance");
  const Eigen::RowVectorXd mean = draws.colwise().mean();
  const MatrixXd centred = draws.rowwise() - mean;
  return centred.transpose() * centred / static_cast<double>(draws.rows() - 1);
}

BootstrapDraws bootstrap_coefficients(const CompositionMatrix& y, const DesignMatrix& x, double alpha,
                                      const LmOptions& opts, int replicates, std::uint64_t seed, int threads) {
  if (replicates < 2) throw Error(ErrorCode::InvalidParameters, "bootstrap needs at least two replicates");
  check_fit_inputs(y, x, alpha);
  const FitResult full = fit_alpha_regression(y, x, alpha, opts);
  const Eigen::Index n = x.rows();
  const Eigen::Index np = full.coefficients.size();

  MatrixXd draws(replicates, np);
  std::vector<char> ok(static_cast<std::size_t>(replicates), 0);
  parallel_for(
      static_cast<std::size_t>(replicates),
      [&](std::size_t r) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(r >> 32)};
        std::mt19937_64 rng(seq);
        std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
        std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
        for (auto& row : rows) row = pick(rng);
        try {
          const FitResult f =
              fit_alpha_regression(y.select_rows(rows), x.select_rows(rows), alpha, opts, full.coefficients);
          if (f.coefficients.allFinite()) {
            draws.row(static_cast<Eigen::Index>(r)) = vectorize(f.coefficients).transpose();
            ok[r] = 1;
          }
        } catch (const Error&) {
          // counted as a failed replicate below
        }
      },
      threads);

  BootstrapDraws out;
  out.requested = replicates;
  std::vector<Eigen::Index> kept;
  for (std::size_t r = 0; r < ok.size(); ++r) {
    if (ok[r]) kept.push_back(static_cast<Eigen::Index>(r));
  }
  out.failed = replicates - static_cast<int>(kept.size());
  if (out.failed > kMaxBootstrapFailureRate * replicates) {
    std::ostringstream os;
    os << out.failed << " of " << replicates << " bootstrap replicates failed";
    throw Error(ErrorCode::TooManyFailedReplicates, os.str());
  }
  out.coefficients = draws(kept, Eigen::all);
  return out;
}

CovarianceEstimate bootstrap_covariance(const CompositionMatrix& y, const DesignMatrix& x, double alpha,
                                        const LmOptions& opts, int replicates, std::uint64_t seed, int threads) {
  const BootstrapDraws draws = bootstrap_coefficients(y, x, alpha, opts, replicates, seed, threads);
  CovarianceEstimate out;
  out.kind = CovarianceKind::Bootstrap;
  out.matrix = enforce_psd(empirical_covariance(draws.coefficients));
  out.replicates = static_cast<int>(draws.coefficients.rows());
  out.failed_replicates = draws.failed;
  return out;
}

VectorXd bootstrap_ame_standard_errors(const BootstrapDraws& draws, const DesignMatrix& x, int k) {
  const Eigen::Index pp = x.cols();
  const Eigen::Index dd = draws.coefficients.cols() / pp;
  MatrixXd ames(draws.coefficients.rows(), dd + 1);
  for (Eigen::Index r = 0; r < draws.coefficients.rows(); ++r) {
    const CoefficientMatrix b = unvectorize(draws.coefficients.row(r).transpose(), pp, dd);
    ames.row(r) = marginal_effects(b, fitted_mean(x, b), k).values.colwise().mean();
  }
  return empirical_covariance(ames).diagonal().cwiseMax(0.0).cwiseSqrt();
}

}  // namespace alphareg
