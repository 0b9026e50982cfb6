#pragma once

// Levenberg-Marquardt for stacked residual systems with analytic Jacobians.

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace alphareg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct ResidualSystem {
  std::function<VectorXd(const VectorXd&)> residual;
  std::function<MatrixXd(const VectorXd&)> jacobian;  // d residual / d theta, N x P
  std::optional<VectorXd> weights;                    // per-residual, nonnegative
};

struct LmOptions {
  int max_iterations = 200;
  double sse_rel_tol = 1e-10;
  double grad_inf_tol = 1e-8;
  double initial_damping_scale = 1e-3;
  double damping_increase = 2.0;
  double damping_decrease = 1.0 / 3.0;

  void validate() const;
};

enum class Convergence { SseTol, GradTol, MaxIter };

const char* to_string(Convergence c);

struct LmTraceEntry {
  double sse;      // objective at the iterate after this trial
  double damping;  // damping used for the trial step
  bool accepted;
};

struct LmResult {
  VectorXd theta_hat;
  double initial_sse = 0.0;
  double final_sse = 0.0;
  int iterations = 0;  // accepted steps
  Convergence converged_by = Convergence::MaxIter;
  std::vector<LmTraceEntry> trace;
};

// Scales residuals and Jacobian rows by sqrt(w) so an unweighted solve
// minimizes sum_k w_k r_k^2. The returned system carries no weights.
ResidualSystem apply_weights(const ResidualSystem& system);

LmResult levenberg_marquardt(const ResidualSystem& system, const VectorXd& theta0, const LmOptions& opts = {});

}  // namespace alphareg
