#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <utility>
#include <vector>

#include "eot/cost.hpp"

namespace eot {

/// Weighted family of Gaussians to average under the regularized cost.
struct BarycenterProblem {
  std::vector<Gaussian> components;
  std::vector<double> weights;
  double eps = 0.0;
};

inline void validate(const BarycenterProblem& problem) {
  if (problem.components.empty()) {
    throw ValidationError("barycenter problem needs at least one component");
  }
  if (problem.weights.size() != problem.components.size()) {
    std::ostringstream os;
    os << "got " << problem.weights.size() << " weights for " << problem.components.size()
       << " components";
    throw ValidationError(os.str());
  }
  const Eigen::Index d = problem.components.front().dim();
  for (const auto& component : problem.components) {
    if (component.dim() != d) {
      std::ostringstream os;
      os << "components mix dimensions " << d << " and " << component.dim();
      throw ValidationError(os.str());
    }
  }
  double sum = 0.0;
  for (double w : problem.weights) {
    if (!(w > 0.0)) {
      throw ValidationError("weights must be strictly positive");
    }
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    std::ostringstream os;
    os << "weights sum to " << sum << ", expected 1 within 1e-12";
    throw ValidationError(os.str());
  }
  if (!(problem.eps >= 0.0)) {
    throw ValidationError("eps must be nonnegative");
  }
}

/// Result of the fixed-point solve. Non-convergence is reported through the
/// flag and the final residual, never as an exception.
struct BarycenterSolution {
  Gaussian barycenter;
  double residual;
  int iterations;
  bool converged;
};

/// Called once per iterate with the current covariance, before it is updated.
using BarycenterObserver = std::function<void(const Eigen::MatrixXd&)>;

namespace detail {

struct BarycenterStep {
  Eigen::MatrixXd next;  // G(S) = sum_i w_i ((S^{1/2} S_i S^{1/2} + (eps/4)^2 I)^{1/2} + (eps/4) I)
  double residual;       // || S^{-1/2} G(S) S^{-1/2} - I ||_F
};

inline BarycenterStep barycenter_step(const SpdMatrix& sigma, const BarycenterProblem& problem) {
  const Eigen::Index d = sigma.dim();
  const auto fs = spd_factor(sigma);
  const double quarter = problem.eps / 4.0;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);

  Eigen::MatrixXd mixed = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t i = 0; i < problem.components.size(); ++i) {
    Eigen::MatrixXd inner =
        fs.sqrt.matrix() * problem.components[i].cov().matrix() * fs.sqrt.matrix() +
        quarter * quarter * eye;
    inner = 0.5 * (inner + inner.transpose()).eval();
    mixed += problem.weights[i] * spd_factor(SpdMatrix(std::move(inner))).sqrt.matrix();
  }

  Eigen::MatrixXd lhs = fs.inv_sqrt.matrix() * mixed * fs.inv_sqrt.matrix() +
                        quarter * fs.inv.matrix();
  const double residual = (lhs - eye).norm();
  Eigen::MatrixXd next = mixed + quarter * eye;  // weights sum to 1
  next = 0.5 * (next + next.transpose()).eval();
  return BarycenterStep{std::move(next), residual};
}

}  // namespace detail

/// Residual of the barycenter matrix equation at sigma:
///   || sum_i w_i (S^{-1/2} (S^{1/2} S_i S^{1/2} + (eps/4)^2 I)^{1/2} S^{-1/2}
///                 + (eps/4) S^{-1}) - I ||_F.
inline double barycenter_residual(const SpdMatrix& sigma, const BarycenterProblem& problem) {
  validate(problem);
  if (sigma.dim() != problem.components.front().dim()) {
    std::ostringstream os;
    os << "candidate covariance is " << sigma.dim() << "-dimensional, components are "
       << problem.components.front().dim() << "-dimensional";
    throw ValidationError(os.str());
  }
  return detail::barycenter_step(sigma, problem).residual;
}

/// Fixed-point iteration on G. Starts from sum_i w_i S_i + (eps/2) I, which
/// lies in the invariant set of the map and is exact for a single component.
/// If the residual fails to decrease for 5 consecutive iterations the update
/// switches to the damped form S <- (S + G(S))/2. The returned mean is the
/// weighted mean of the component means.
inline BarycenterSolution solve_barycenter(const BarycenterProblem& problem, double tol = 1e-10,
                                           int max_iter = 500,
                                           const std::optional<SpdMatrix>& initial = std::nullopt,
                                           const BarycenterObserver& observer = {}) {
  validate(problem);
  if (!(tol > 0.0)) {
    throw ValidationError("tol must be positive");
  }
  if (max_iter < 1) {
    throw ValidationError("max_iter must be at least 1");
  }
  const Eigen::Index d = problem.components.front().dim();

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (std::size_t i = 0; i < problem.components.size(); ++i) {
    mean += problem.weights[i] * problem.components[i].mean();
  }

  Eigen::MatrixXd start;
  if (initial.has_value()) {
    if (initial->dim() != d) {
      throw ValidationError("initial covariance has the wrong dimension");
    }
    start = initial->matrix();
  } else {
    start = (problem.eps / 2.0) * Eigen::MatrixXd::Identity(d, d);
    for (std::size_t i = 0; i < problem.components.size(); ++i) {
      start += problem.weights[i] * problem.components[i].cov().matrix();
    }
  }

  SpdMatrix sigma(std::move(start));
  double previous_residual = std::numeric_limits<double>::infinity();
  int stalled = 0;
  bool damped = false;

  for (int iter = 0;; ++iter) {
    auto step = detail::barycenter_step(sigma, problem);
    if (observer) observer(sigma.matrix());
    if (step.residual <= tol) {
      return BarycenterSolution{Gaussian(mean, std::move(sigma)), step.residual, iter, true};
    }
    if (iter >= max_iter) {
      return BarycenterSolution{Gaussian(mean, std::move(sigma)), step.residual, iter, false};
    }
    if (step.residual >= previous_residual) {
      if (++stalled >= 5) damped = true;
    } else {
      stalled = 0;
    }
    previous_residual = step.residual;
    if (damped) {
      sigma = SpdMatrix(0.5 * (sigma.matrix() + step.next));
    } else {
      sigma = SpdMatrix(std::move(step.next));
    }
  }
}

/// Barycenter objective: the weighted sum of regularized costs to q.
inline double eval_objective(const BarycenterProblem& problem, const Gaussian& q) {
  validate(problem);
  if (q.dim() != problem.components.front().dim()) {
    std::ostringstream os;
    os << "candidate is " << q.dim() << "-dimensional, components are "
       << problem.components.front().dim() << "-dimensional";
    throw ValidationError(os.str());
  }
  double value = 0.0;
  for (std::size_t i = 0; i < problem.components.size(); ++i) {
    value += problem.weights[i] * entropic_cost(problem.components[i], q, problem.eps).total;
  }
  return value;
}

}  // namespace eot
