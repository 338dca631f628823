#pragma once

#include <cmath>
#include <numbers>
#include <sstream>

#include "eot/spd.hpp"

namespace eot {

/// Solution of X*S1*X + (eps/2)*X = S2 together with its certification
/// residual ||X*S1*X + (eps/2)*X - S2||_F. At eps = 0 the same expression
/// certifies the classical relation X*S1*X = S2.
struct RiccatiSolution {
  SpdMatrix solution;
  double eps;
  double residual;
};

/// Solve X*S1*X + (eps/2)*X = S2 for the unique SPD solution via the closed
/// form
///   X = S1^{-1/2} (S1^{1/2} S2 S1^{1/2} + (eps/4)^2 I)^{1/2} S1^{-1/2} - (eps/4) S1^{-1}.
/// eps = 0 is permitted and yields the classical optimal-map matrix.
inline RiccatiSolution solve_riccati(const SpdMatrix& sigma1, const SpdMatrix& sigma2,
                                     double eps) {
  if (sigma1.dim() != sigma2.dim()) {
    std::ostringstream os;
    os << "covariance dimensions differ: " << sigma1.dim() << " vs " << sigma2.dim();
    throw ValidationError(os.str());
  }
  if (!(eps >= 0.0)) {
    throw ValidationError("eps must be nonnegative");
  }
  const Eigen::Index d = sigma1.dim();
  const auto f1 = spd_factor(sigma1);
  const double quarter = eps / 4.0;

  Eigen::MatrixXd inner =
      f1.sqrt.matrix() * sigma2.matrix() * f1.sqrt.matrix() +
      quarter * quarter * Eigen::MatrixXd::Identity(d, d);
  inner = 0.5 * (inner + inner.transpose()).eval();
  const SpdMatrix inner_sqrt = spd_factor(SpdMatrix(std::move(inner))).sqrt;

  Eigen::MatrixXd x = f1.inv_sqrt.matrix() * inner_sqrt.matrix() * f1.inv_sqrt.matrix() -
                      quarter * f1.inv.matrix();
  x = 0.5 * (x + x.transpose()).eval();

  try {
    SpdMatrix solution(std::move(x));
    const double residual = (solution.matrix() * sigma1.matrix() * solution.matrix() +
                             0.5 * eps * solution.matrix() - sigma2.matrix())
                                .norm();
    if (residual > 1e-9 * (1.0 + sigma2.matrix().norm())) {
      std::ostringstream os;
      os << "Riccati residual " << residual << " exceeds the certification bound"
         << " (cond(sigma1) = " << sigma1.condition_number()
         << ", cond(sigma2) = " << sigma2.condition_number() << ")";
      throw NumericalError(os.str());
    }
    return RiccatiSolution{std::move(solution), eps, residual};
  } catch (const ValidationError& e) {
    std::ostringstream os;
    os << "Riccati solution lost positive definiteness, likely ill-conditioning"
       << " (cond(sigma1) = " << sigma1.condition_number()
       << ", cond(sigma2) = " << sigma2.condition_number() << ", eps = " << eps
       << "): " << e.what();
    throw NumericalError(os.str());
  }
}

/// Solve the exchanged equation Y*S2*Y + (eps/2)*Y = S1. The result satisfies
/// (2/eps) X^{-1} = S2^{-1} + (2/eps) Y with X from solve_riccati(S1, S2, eps).
inline RiccatiSolution alt_riccati(const SpdMatrix& sigma1, const SpdMatrix& sigma2,
                                   double eps) {
  if (!(eps > 0.0)) {
    throw ValidationError("eps must be positive for the alternative equation");
  }
  return solve_riccati(sigma2, sigma1, eps);
}

/// The map x -> x^T * matrix * x + constant with a symmetric matrix.
struct QuadraticPotential {
  Eigen::MatrixXd matrix;
  double constant = 0.0;

  [[nodiscard]] double operator()(const Eigen::VectorXd& x) const {
    return x.dot(matrix * x) + constant;
  }
};

/// Optimal Gaussian coupling of two Gaussians under entropic regularization:
/// stacked mean, 2d x 2d covariance with blocks [S1, S1*X; X*S1, S2], the
/// Riccati matrix X, and the dual potentials (f, g) of the plan density.
///
/// In centered coordinates u = x - mean1, v = y - mean2 the density of the
/// coupling factorizes as exp((f(u) + g(v) - ||u - v||^2) / eps).
class EntropicPlan {
 public:
  EntropicPlan(Eigen::VectorXd mean, SpdMatrix covariance, SpdMatrix riccati, double eps,
               QuadraticPotential source_potential, QuadraticPotential target_potential)
      : mean_(std::move(mean)),
        covariance_(std::move(covariance)),
        riccati_(std::move(riccati)),
        eps_(eps),
        source_potential_(std::move(source_potential)),
        target_potential_(std::move(target_potential)) {}

  [[nodiscard]] const Eigen::VectorXd& mean() const { return mean_; }
  [[nodiscard]] const SpdMatrix& covariance() const { return covariance_; }
  [[nodiscard]] const SpdMatrix& riccati() const { return riccati_; }
  [[nodiscard]] double eps() const { return eps_; }
  [[nodiscard]] const QuadraticPotential& source_potential() const { return source_potential_; }
  [[nodiscard]] const QuadraticPotential& target_potential() const { return target_potential_; }
  [[nodiscard]] Eigen::Index dim() const { return riccati_.dim(); }

  /// Closed-form inverse of the coupling covariance,
  /// [S1^{-1} + (2/eps) X, -(2/eps) I; -(2/eps) I, (2/eps) X^{-1}].
  [[nodiscard]] Eigen::MatrixXd covariance_inverse() const {
    const Eigen::Index d = dim();
    const Eigen::MatrixXd sigma1 = covariance_.matrix().topLeftCorner(d, d);
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
    const double scale = 2.0 / eps_;
    Eigen::MatrixXd out(2 * d, 2 * d);
    out.topLeftCorner(d, d) =
        spd_factor(SpdMatrix(sigma1)).inv.matrix() + scale * riccati_.matrix();
    out.topRightCorner(d, d) = -scale * eye;
    out.bottomLeftCorner(d, d) = -scale * eye;
    out.bottomRightCorner(d, d) = scale * spd_factor(riccati_).inv.matrix();
    return out;
  }

 private:
  Eigen::VectorXd mean_;
  SpdMatrix covariance_;
  SpdMatrix riccati_;
  double eps_;
  QuadraticPotential source_potential_;
  QuadraticPotential target_potential_;
};

/// Assemble the optimal entropic coupling of p and q. Requires eps > 0: the
/// coupling covariance is singular in the eps -> 0 limit, where the plan
/// degenerates to a deterministic map.
inline EntropicPlan assemble_plan(const Gaussian& p, const Gaussian& q, double eps) {
  if (p.dim() != q.dim()) {
    std::ostringstream os;
    os << "Gaussian dimensions differ: " << p.dim() << " vs " << q.dim();
    throw ValidationError(os.str());
  }
  if (!(eps > 0.0)) {
    throw ValidationError("eps must be positive: the coupling is singular at eps = 0");
  }
  const Eigen::Index d = p.dim();
  const auto ric = solve_riccati(p.cov(), q.cov(), eps);

  const Eigen::MatrixXd cross = p.cov().matrix() * ric.solution.matrix();
  Eigen::MatrixXd big(2 * d, 2 * d);
  big.topLeftCorner(d, d) = p.cov().matrix();
  big.topRightCorner(d, d) = cross;
  big.bottomLeftCorner(d, d) = cross.transpose();
  big.bottomRightCorner(d, d) = q.cov().matrix();

  Eigen::VectorXd mean(2 * d);
  mean << p.mean(), q.mean();

  const auto f1 = spd_factor(p.cov());
  const auto fx = spd_factor(ric.solution);
  // det(Sigma_eps) = (eps/2)^d * det(S1) * det(X); avoids the 2d x 2d determinant.
  const double logdet_coupling = d * std::log(eps / 2.0) + f1.logdet + fx.logdet;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);

  QuadraticPotential f{eye - ric.solution.matrix() - (eps / 2.0) * f1.inv.matrix(),
                       -(eps / 2.0) *
                           (2.0 * d * std::log(2.0 * std::numbers::pi) + logdet_coupling)};
  QuadraticPotential g{eye - fx.inv.matrix(), 0.0};

  try {
    SpdMatrix covariance(std::move(big));
    return EntropicPlan(std::move(mean), std::move(covariance), ric.solution, eps,
                        std::move(f), std::move(g));
  } catch (const ValidationError& e) {
    throw NumericalError(std::string("assembled coupling covariance failed the positive"
                                     " definiteness check (internal consistency): ") +
                         e.what());
  }
}

}  // namespace eot
