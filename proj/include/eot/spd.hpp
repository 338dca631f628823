#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <utility>

#include "eot/errors.hpp"

namespace eot {

/// Symmetric positive definite matrix with validated invariants.
///
/// Construction symmetrizes the input as (A + A^T)/2 when the asymmetry is
/// within tolerance and rejects it otherwise. Definiteness is checked against
/// a relative floor on the spectrum; near-singular inputs are rejected rather
/// than clamped so that user errors surface instead of being masked.
/// Instances are immutable after construction.
class SpdMatrix {
 public:
  static constexpr double symmetry_tolerance = 1e-9;    // absolute, entrywise
  static constexpr double definiteness_floor = 1e-12;   // lambda_min / lambda_max

  explicit SpdMatrix(Eigen::MatrixXd raw) : m_(std::move(raw)) {
    if (m_.rows() == 0 || m_.rows() != m_.cols()) {
      std::ostringstream os;
      os << "SPD matrix must be square and non-empty, got " << m_.rows() << "x" << m_.cols();
      throw ValidationError(os.str());
    }
    const double asymmetry = (m_ - m_.transpose()).cwiseAbs().maxCoeff();
    if (!(asymmetry <= symmetry_tolerance)) {
      std::ostringstream os;
      os << "matrix is not symmetric: max |A - A^T| = " << asymmetry
         << " exceeds tolerance " << symmetry_tolerance;
      throw ValidationError(os.str());
    }
    Eigen::MatrixXd sym = 0.5 * (m_ + m_.transpose());
    m_ = std::move(sym);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m_, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) {
      throw NumericalError("eigenvalue computation failed during SPD validation");
    }
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (!(hi > 0.0) || !(lo > definiteness_floor * hi)) {
      std::ostringstream os;
      os << "matrix is not positive definite: offending eigenvalue " << lo
         << " (largest eigenvalue " << hi << ", relative floor " << definiteness_floor << ")";
      throw ValidationError(os.str());
    }
    min_eigenvalue_ = lo;
    max_eigenvalue_ = hi;
  }

  [[nodiscard]] const Eigen::MatrixXd& matrix() const { return m_; }
  [[nodiscard]] Eigen::Index dim() const { return m_.rows(); }
  [[nodiscard]] double trace() const { return m_.trace(); }
  [[nodiscard]] double min_eigenvalue() const { return min_eigenvalue_; }
  [[nodiscard]] double max_eigenvalue() const { return max_eigenvalue_; }
  [[nodiscard]] double condition_number() const { return max_eigenvalue_ / min_eigenvalue_; }

 private:
  Eigen::MatrixXd m_;
  double min_eigenvalue_ = 0.0;
  double max_eigenvalue_ = 0.0;
};

/// Eigendecomposition-backed factorization bundle: principal square root,
/// inverse square root, inverse, and log-determinant, all from one pass.
struct SpdFactorization {
  SpdMatrix source;
  SpdMatrix sqrt;
  SpdMatrix inv_sqrt;
  SpdMatrix inv;
  double logdet;
};

/// Factor an SPD matrix via symmetric eigendecomposition. The principal
/// (SPD) branch of the square root is returned.
inline SpdFactorization spd_factor(const SpdMatrix& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a.matrix());
  if (es.info() != Eigen::Success) {
    throw NumericalError("eigendecomposition failed in spd_factor");
  }
  const Eigen::VectorXd& lam = es.eigenvalues();
  const Eigen::MatrixXd& v = es.eigenvectors();

  auto rebuild = [&](auto&& transform) {
    Eigen::VectorXd d(lam.size());
    for (Eigen::Index i = 0; i < lam.size(); ++i) d[i] = transform(lam[i]);
    Eigen::MatrixXd m = v * d.asDiagonal() * v.transpose();
    Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    return SpdMatrix(std::move(sym));
  };

  return SpdFactorization{
      a,
      rebuild([](double x) { return std::sqrt(x); }),
      rebuild([](double x) { return 1.0 / std::sqrt(x); }),
      rebuild([](double x) { return 1.0 / x; }),
      lam.array().log().sum()};
}

/// Gaussian measure N(mean, cov) on R^d.
class Gaussian {
 public:
  Gaussian(Eigen::VectorXd mean, SpdMatrix cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
    if (mean_.size() != cov_.dim()) {
      std::ostringstream os;
      os << "mean has length " << mean_.size() << " but covariance is " << cov_.dim() << "x"
         << cov_.dim();
      throw ValidationError(os.str());
    }
  }

  [[nodiscard]] const Eigen::VectorXd& mean() const { return mean_; }
  [[nodiscard]] const SpdMatrix& cov() const { return cov_; }
  [[nodiscard]] Eigen::Index dim() const { return mean_.size(); }

 private:
  Eigen::VectorXd mean_;
  SpdMatrix cov_;
};

/// Build a Gaussian from raw arrays, reporting structured errors for
/// dimension mismatch, asymmetry, or indefiniteness.
inline Gaussian validate_gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov) {
  if (cov.rows() != cov.cols()) {
    std::ostringstream os;
    os << "covariance must be square, got " << cov.rows() << "x" << cov.cols();
    throw ValidationError(os.str());
  }
  if (mean.size() != cov.rows()) {
    std::ostringstream os;
    os << "mean has length " << mean.size() << " but covariance is " << cov.rows() << "x"
       << cov.cols();
    throw ValidationError(os.str());
  }
  return Gaussian(std::move(mean), SpdMatrix(std::move(cov)));
}

}  // namespace eot
