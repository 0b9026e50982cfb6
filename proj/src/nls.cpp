#include "alphareg/nls.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "alphareg/error.hpp"

namespace alphareg {

namespace {

constexpr double kMaxDamping = 1e12;

std::string format_theta(const VectorXd& theta) {
  std::ostringstream os;
  os.precision(17);
  os << "theta = [";
  for (Eigen::Index i = 0; i < theta.size(); ++i) os << (i ? ", " : "") << theta[i];
  os << "]";
  return os.str();
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what, const VectorXd& theta) {
  if (!m.allFinite()) {
    throw Error(ErrorCode::NonFiniteResidual, std::string(what) + " is not finite at " + format_theta(theta));
  }
}

}  // namespace

void LmOptions::validate() const {
  if (max_iterations < 1 || !(sse_rel_tol > 0) || !(grad_inf_tol > 0) || !(initial_damping_scale > 0) ||
      !(damping_increase > 1) || !(damping_decrease > 0 && damping_decrease < 1)) {
    throw Error(ErrorCode::InvalidParameters, "Levenberg-Marquardt options out of range");
  }
}

const char* to_string(Convergence c) {
  switch (c) {
    case Convergence::SseTol: return "sse_tol";
    case Convergence::GradTol: return "grad_tol";
    case Convergence::MaxIter: return "max_iter";
  }
  return "unknown";
}

ResidualSystem apply_weights(const ResidualSystem& system) {
  if (!system.weights) return system;
  const VectorXd& w = *system.weights;
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    if (!(w[k] >= 0.0)) {
      std::ostringstream os;
      os << "weight " << k << " = " << w[k];
      throw Error(ErrorCode::NegativeWeight, os.str());
    }
  }
  VectorXd root = w.cwiseSqrt();
  ResidualSystem out;
  out.residual = [f = system.residual, root](const VectorXd& theta) -> VectorXd {
    VectorXd r = f(theta);
    if (r.size() != root.size()) throw Error(ErrorCode::DimensionMismatch, "weights and residuals differ in length");
    return r.cwiseProduct(root);
  };
  out.jacobian = [f = system.jacobian, root](const VectorXd& theta) -> MatrixXd {
    MatrixXd j = f(theta);
    if (j.rows() != root.size()) throw Error(ErrorCode::DimensionMismatch, "weights and Jacobian rows differ in length");
    return root.asDiagonal() * j;
  };
  return out;
}

LmResult levenberg_marquardt(const ResidualSystem& system, const VectorXd& theta0, const LmOptions& opts) {
  opts.validate();
  const ResidualSystem sys = apply_weights(system);

  LmResult result;
  VectorXd theta = theta0;
  require_finite(theta, "starting point", theta);
  VectorXd r = sys.residual(theta);
  require_finite(r, "residual", theta);
  MatrixXd jac = sys.jacobian(theta);
  require_finite(jac, "Jacobian", theta);
  if (jac.rows() != r.size() || jac.cols() != theta.size()) {
    throw Error(ErrorCode::DimensionMismatch, "Jacobian shape does not match residuals and parameters");
  }
  if (r.size() < theta.size()) {
    throw Error(ErrorCode::DimensionMismatch, "fewer residuals than parameters");
  }

  double sse = r.squaredNorm();
  result.initial_sse = sse;
  MatrixXd normal = jac.transpose() * jac;
  VectorXd grad = jac.transpose() * r;
  double damping = opts.initial_damping_scale;

  for (;;) {
    if (grad.lpNorm<Eigen::Infinity>() <= opts.grad_inf_tol) {
      result.converged_by = Convergence::GradTol;
      break;
    }
    if (result.iterations >= opts.max_iterations) {
      result.converged_by = Convergence::MaxIter;
      break;
    }

    // Marquardt scaling; a vanishing diagonal entry keeps a small floor so
    // large damping still shrinks that direction.
    VectorXd scaling = normal.diagonal();
    const double floor = std::max(scaling.maxCoeff() * 1e-14, 1e-300);
    scaling = scaling.cwiseMax(floor);

    MatrixXd damped = normal;
    damped.diagonal() += damping * scaling;
    VectorXd step;
    Eigen::LLT<MatrixXd> llt(damped);
    if (llt.info() == Eigen::Success) {
      step = llt.solve(-grad);
    }
    if (llt.info() != Eigen::Success || !step.allFinite()) {
      step = damped.completeOrthogonalDecomposition().solve(-grad);
    }
    if (!step.allFinite()) {
      if (damping >= kMaxDamping) {
        throw Error(ErrorCode::SingularNormalEquations,
                    "damped normal equations unsolvable at maximum damping, " + format_theta(theta));
      }
      damping *= opts.damping_increase;
      continue;
    }

    VectorXd candidate = theta + step;
    VectorXd r_new = sys.residual(candidate);
    const double sse_new = r_new.allFinite() ? r_new.squaredNorm() : std::numeric_limits<double>::infinity();

    if (sse_new <= sse) {
      const double predicted = sse - (r + jac * step).squaredNorm();
      const double actual = sse - sse_new;
      result.trace.push_back({sse_new, damping, true});
      theta = std::move(candidate);
      r = std::move(r_new);
      jac = sys.jacobian(theta);
      require_finite(jac, "Jacobian", theta);
      normal = jac.transpose() * jac;
      grad = jac.transpose() * r;
      damping *= opts.damping_decrease;
      ++result.iterations;
      const double old = sse;
      sse = sse_new;
      if (sse == 0.0) {
        result.converged_by = Convergence::SseTol;
        break;
      }
      if (actual <= opts.sse_rel_tol * old && std::abs(predicted) <= opts.sse_rel_tol * old) {
        result.converged_by = Convergence::SseTol;
        break;
      }
    } else {
      result.trace.push_back({sse_new, damping, false});
      if (damping >= kMaxDamping) {
        // No decrease even along a vanishing gradient step: numerically stationary.
        result.converged_by = Convergence::SseTol;
        break;
      }
      damping *= opts.damping_increase;
    }
  }

  result.theta_hat = std::move(theta);
  result.final_sse = sse;
  return result;
}

}  // namespace alphareg
