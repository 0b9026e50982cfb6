#pragma once

// Marginal effects (plain, SLX direct/indirect/total, location-specific),
// average marginal effects, sandwich covariance and pairs-bootstrap
// covariance for the alpha-regression coefficients.

#include <cstdint>

#include <Eigen/Dense>

#include "alphareg/alpha_model.hpp"
#include "alphareg/spatial.hpp"

namespace alphareg {

// n x D derivatives d mu / d x_k; every row sums to zero.
struct MarginalEffectsTable {
  int covariate = 1;  // 1-based index into the covariates, the intercept is 0
  MatrixXd values;
};

// d mu_1 / d x_k = -mu_1 sum_j b_jk mu_{j+1};
// d mu_l / d x_k = mu_l (b_{l-1,k} - sum_j b_jk mu_{j+1}) for l >= 2.
MarginalEffectsTable marginal_effects(const CoefficientMatrix& b, const CompositionMatrix& mu, int k);

// Column means of the marginal effects at the fitted compositions.
VectorXd average_marginal_effects(const FitResult& fit, int k);

struct SlxEffects {
  MarginalEffectsTable direct;
  MarginalEffectsTable indirect;
  MarginalEffectsTable total;
};

SlxEffects slx_effects(const SlxFit& fit, int k);

// Each row evaluated with that location's own coefficients and fitted mean.
MarginalEffectsTable gwar_marginal_effects(const GwarFit& fit, int k);

enum class CovarianceKind { Sandwich, Spherical, Bootstrap };

const char* to_string(CovarianceKind kind);

struct CovarianceEstimate {
  MatrixXd matrix;  // over vec(B)
  CovarianceKind kind = CovarianceKind::Sandwich;
  int replicates = 0;
  int failed_replicates = 0;

  VectorXd standard_errors() const { return matrix.diagonal().cwiseMax(0.0).cwiseSqrt(); }
};

inline constexpr double kMaxHessianCondition = 1e12;

// H^-1 J H^-1 / n with H = mean G_i'G_i and J = mean G_i' e_i e_i' G_i, where
// G_i is the Jacobian of observation i's transformed mean and e_i its
// transformed-space residual. Spherical: sigma^2 H^-1 / n with
// sigma^2 = SSE / (n d - (p+1) d).
CovarianceEstimate sandwich_covariance(const CompositionMatrix& y, const DesignMatrix& x, double alpha,
                                       const CoefficientMatrix& b_hat,
                                       CovarianceKind kind = CovarianceKind::Sandwich);

struct BootstrapDraws {
  MatrixXd coefficients;  // replicates x (p+1)d, successful replicates only
  int requested = 0;
  int failed = 0;
};

inline constexpr double kMaxBootstrapFailureRate = 0.2;

// Pairs bootstrap: resample rows with replacement and refit. Replicate r
// draws from its own generator seeded by (seed, r); failures are dropped and
// counted, and more than 20% failures raise TooManyFailedReplicates.
BootstrapDraws bootstrap_coefficients(const CompositionMatrix& y, const DesignMatrix& x, double alpha,
                                      const LmOptions& opts, int replicates, std::uint64_t seed, int threads = 0);

CovarianceEstimate bootstrap_covariance(const CompositionMatrix& y, const DesignMatrix& x, double alpha,
                                        const LmOptions& opts, int replicates, std::uint64_t seed, int threads = 0);

// Bootstrap standard errors of the average marginal effects of covariate k,
// re-evaluating the AME on the original design for every draw. Returns D values.
VectorXd bootstrap_ame_standard_errors(const BootstrapDraws& draws, const DesignMatrix& x, int k);

// Empirical covariance of the rows of `draws` (divisor rows - 1).
MatrixXd empirical_covariance(const MatrixXd& draws);

}  // namespace alphareg
