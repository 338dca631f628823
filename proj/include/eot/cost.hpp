#pragma once

#include <cmath>
#include <numbers>
#include <sstream>
#include <utility>

#include "eot/riccati.hpp"

namespace eot {

/// Three-term decomposition of a regularized transport cost. total is the
/// exact sum of the parts so tests can target each term separately.
struct CostBreakdown {
  double total;
  double mean_term;       // squared distance between the means
  double transport_term;  // Tr S1 + Tr S2 - 2 Tr(S1 X)
  double entropy_term;    // regularizer contribution; 0 in the classical branch
  double eps;
};

/// Entropy-regularized quadratic transport cost between Gaussians:
///   ||m1 - m2||^2 + Tr S1 + Tr S2 - 2 Tr(S1 X)
///     - (eps/2) log((2 pi e)^{2d} (eps/2)^d |S1 X|),
/// with X the Riccati matrix of the pair. eps = 0 selects the classical
/// Bures-Wasserstein branch (no log term) rather than a limit evaluation.
inline CostBreakdown entropic_cost(const Gaussian& p, const Gaussian& q, double eps) {
  if (p.dim() != q.dim()) {
    std::ostringstream os;
    os << "Gaussian dimensions differ: " << p.dim() << " vs " << q.dim();
    throw ValidationError(os.str());
  }
  const Eigen::Index d = p.dim();
  const auto ric = solve_riccati(p.cov(), q.cov(), eps);

  const double mean_term = (p.mean() - q.mean()).squaredNorm();
  const double trace_cross = (p.cov().matrix() * ric.solution.matrix()).trace();
  const double transport_term = p.cov().trace() + q.cov().trace() - 2.0 * trace_cross;

  double entropy_term = 0.0;
  if (eps > 0.0) {
    const double logdet_cross = spd_factor(p.cov()).logdet + spd_factor(ric.solution).logdet;
    const double two_pi_e = 2.0 * std::numbers::pi * std::numbers::e;
    entropy_term = -(eps / 2.0) *
                   (2.0 * d * std::log(two_pi_e) + d * std::log(eps / 2.0) + logdet_cross);
  }

  return CostBreakdown{mean_term + transport_term + entropy_term, mean_term, transport_term,
                       entropy_term, eps};
}

/// Variance scale of the reference N(0, lambda I_d) used by the
/// relative-entropy regularizer.
struct ReferenceMeasure {
  double lambda = 1.0;
};

/// Transport cost regularized by KL against N(0, lambda I)^{x2} instead of
/// differential entropy. Replacing the regularizer shifts the objective of
/// every coupling with these marginals by the constant
///   eps * d * log(2 pi lambda) + eps/(2 lambda) * (Tr S1 + Tr S2 + ||m1||^2 + ||m2||^2),
/// so the minimizing plan is unchanged and only the value moves.
inline CostBreakdown relative_entropic_cost(const Gaussian& p, const Gaussian& q, double eps,
                                            const ReferenceMeasure& ref) {
  if (!(eps > 0.0)) {
    throw ValidationError("eps must be positive");
  }
  if (!(ref.lambda > 0.0)) {
    throw ValidationError("reference measure scale lambda must be positive");
  }
  const CostBreakdown base = entropic_cost(p, q, eps);
  const double d = static_cast<double>(p.dim());
  const double lambda = ref.lambda;

  const double mean_term =
      base.mean_term + (eps / (2.0 * lambda)) * (p.mean().squaredNorm() + q.mean().squaredNorm());
  const double entropy_term = base.entropy_term +
                              eps * d * std::log(2.0 * std::numbers::pi * lambda) +
                              (eps / (2.0 * lambda)) * (p.cov().trace() + q.cov().trace());
  return CostBreakdown{mean_term + base.transport_term + entropy_term, mean_term,
                       base.transport_term, entropy_term, eps};
}

/// Lower bound on the regularized transport cost between any two measures
/// with the given first and second moments. Tight exactly when both measures
/// are Gaussian, where it coincides with entropic_cost.
inline double gelbrich_lower_bound(const Eigen::VectorXd& mean1, const Eigen::MatrixXd& cov1,
                                   const Eigen::VectorXd& mean2, const Eigen::MatrixXd& cov2,
                                   double eps) {
  if (!(eps > 0.0)) {
    throw ValidationError("eps must be positive");
  }
  return entropic_cost(validate_gaussian(mean1, cov1), validate_gaussian(mean2, cov2), eps)
      .total;
}

/// Minimizer of q -> cost(p, q) over all probability measures, together with
/// the minimal value.
struct BestApproximation {
  Gaussian minimizer;
  double value;
};

/// The closest measure to a Gaussian under the regularized cost is its
/// convolution with N(0, (eps/2) I), i.e. the same mean with covariance
/// S + (eps/2) I. The minimal value is
///   -(eps/2) log|S| - (d eps/2) log(2 pi^2 e eps).
inline BestApproximation best_approximation(const Gaussian& p, double eps) {
  if (!(eps > 0.0)) {
    throw ValidationError("eps must be positive");
  }
  const Eigen::Index d = p.dim();
  Eigen::MatrixXd cov =
      p.cov().matrix() + (eps / 2.0) * Eigen::MatrixXd::Identity(d, d);
  const double pi = std::numbers::pi;
  const double value = -(eps / 2.0) * spd_factor(p.cov()).logdet -
                       (d * eps / 2.0) * std::log(2.0 * pi * pi * std::numbers::e * eps);
  return BestApproximation{Gaussian(p.mean(), SpdMatrix(std::move(cov))), value};
}

/// One-dimensional specialization of entropic_cost for N(0, var1), N(0, var2).
/// Agrees with the matrix path at d = 1 to machine precision.
inline double cost_1d(double var1, double var2, double eps) {
  if (!(var1 > 0.0) || !(var2 > 0.0) || !(eps > 0.0)) {
    throw ValidationError("cost_1d requires positive variances and positive eps");
  }
  const double quarter = eps / 4.0;
  // s = sigma1^2 * X at d = 1
  const double s = std::sqrt(var1 * var2 + quarter * quarter) - quarter;
  const double two_pi_e = 2.0 * std::numbers::pi * std::numbers::e;
  return var1 + var2 - 2.0 * s - (eps / 2.0) * std::log(two_pi_e * two_pi_e * (eps / 2.0) * s);
}

}  // namespace eot
