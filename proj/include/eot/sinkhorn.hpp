#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

#include "eot/spd.hpp"

namespace eot {

/// Measure supported on finitely many points, tagged with the volume of one
/// grid cell so discrete plan entropy can be converted into an estimate of
/// differential entropy.
struct DiscreteMeasure {
  Eigen::MatrixXd points;   // one support point per row
  Eigen::VectorXd weights;  // nonnegative, sums to 1
  double cell_volume = 1.0;
};

inline void validate(const DiscreteMeasure& measure) {
  const Eigen::Index n = measure.points.rows();
  if (n == 0) {
    throw ValidationError("discrete measure has no support points");
  }
  if (measure.weights.size() != n) {
    std::ostringstream os;
    os << "got " << measure.weights.size() << " weights for " << n << " points";
    throw ValidationError(os.str());
  }
  if (!(measure.cell_volume > 0.0)) {
    throw ValidationError("cell_volume must be positive");
  }
  if (measure.weights.minCoeff() < 0.0) {
    throw ValidationError("weights must be nonnegative");
  }
  if (std::abs(measure.weights.sum() - 1.0) > 1e-12) {
    std::ostringstream os;
    os << "weights sum to " << measure.weights.sum() << ", expected 1 within 1e-12";
    throw ValidationError(os.str());
  }
  // pairwise-distinct support: lexicographic sort, then compare neighbours
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  auto lex_less = [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index k = 0; k < measure.points.cols(); ++k) {
      if (measure.points(a, k) != measure.points(b, k)) {
        return measure.points(a, k) < measure.points(b, k);
      }
    }
    return false;
  };
  std::sort(order.begin(), order.end(), lex_less);
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (!lex_less(order[i - 1], order[i]) && !lex_less(order[i], order[i - 1])) {
      throw ValidationError("support points must be pairwise distinct");
    }
  }
}

/// Converged state of the discrete regularized problem
///   min <c, plan> + eps * sum plan_ij log plan_ij   over couplings of (a, b),
/// with c_ij the squared distance between support points. The returned
/// potentials follow the scaling convention
///   plan_ij = a_i * b_j * exp((f_i + g_j - c_ij) / eps).
struct SinkhornResult {
  Eigen::MatrixXd plan;
  Eigen::VectorXd potentials_f;
  Eigen::VectorXd potentials_g;
  double discrete_objective;   // <c, plan> + eps * sum plan log plan
  double corrected_objective;  // discrete_objective - eps * log(va * vb)
  int iterations;
  double marginal_error;       // max abs deviation of row/column sums on the final plan
  std::vector<double> objective_trace;  // discrete objective sampled every 10 sweeps
};

/// Reference measure entering the regularizer. Both choices produce the same
/// optimal plan (the difference of the objectives is constant over couplings
/// with fixed marginals); only the potentials are shifted.
enum class EntropyReference {
  product_marginals,  // KL against a (x) b; the default scaling convention
  lebesgue            // plain entropy: plan_ij = exp((f_i + g_j - c_ij) / eps)
};

namespace detail {

// log(sum exp(x)) with max extraction; tolerates -inf entries.
inline double log_sum_exp(const Eigen::ArrayXd& x) {
  const double m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((x - m).exp().sum());
}

inline Eigen::ArrayXd safe_log(const Eigen::VectorXd& w) {
  Eigen::ArrayXd out(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    out[i] = w[i] > 0.0 ? std::log(w[i]) : -std::numeric_limits<double>::infinity();
  }
  return out;
}

}  // namespace detail

/// Log-domain Sinkhorn with squared-distance cost built from the support
/// points. Marginal feasibility is tracked through the row sums after each
/// column update; the solver never forms the kernel outside log space, so
/// small eps cannot underflow the updates. Non-convergence is reported
/// through marginal_error rather than an exception.
inline SinkhornResult sinkhorn_solve(const DiscreteMeasure& a, const DiscreteMeasure& b,
                                     double eps, double tol = 1e-9, int max_iter = 20000,
                                     EntropyReference reference = EntropyReference::product_marginals) {
  validate(a);
  validate(b);
  if (a.points.cols() != b.points.cols()) {
    std::ostringstream os;
    os << "support dimensions differ: " << a.points.cols() << " vs " << b.points.cols();
    throw ValidationError(os.str());
  }
  if (!(eps > 0.0)) {
    throw ValidationError("eps must be positive");
  }
  if (!(tol > 0.0) || max_iter < 1) {
    throw ValidationError("tol must be positive and max_iter at least 1");
  }

  const Eigen::Index n = a.points.rows();
  const Eigen::Index m = b.points.rows();

  Eigen::MatrixXd cost(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      cost(i, j) = (a.points.row(i) - b.points.row(j)).squaredNorm();
    }
  }

  const Eigen::ArrayXd log_a = detail::safe_log(a.weights);
  const Eigen::ArrayXd log_b = detail::safe_log(b.weights);
  const bool product = (reference == EntropyReference::product_marginals);
  // plan_ij = exp(qa_i + qb_j + (f_i + g_j - c_ij)/eps); qa, qb hold the prior.
  const Eigen::ArrayXd qa = product ? log_a : Eigen::ArrayXd::Zero(n);
  const Eigen::ArrayXd qb = product ? log_b : Eigen::ArrayXd::Zero(m);
  const Eigen::ArrayXd row_target = product ? Eigen::ArrayXd::Zero(n) : (eps * log_a).eval();
  const Eigen::ArrayXd col_target = product ? Eigen::ArrayXd::Zero(m) : (eps * log_b).eval();

  Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(m);

  auto update_rows = [&](Eigen::VectorXd& out) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::ArrayXd terms = qb + (g.array() - cost.row(i).transpose().array()) / eps;
      out[i] = row_target[i] - eps * detail::log_sum_exp(terms);
    }
  };
  auto update_cols = [&]() {
    for (Eigen::Index j = 0; j < m; ++j) {
      const Eigen::ArrayXd terms = qa + (f.array() - cost.col(j).array()) / eps;
      g[j] = col_target[j] - eps * detail::log_sum_exp(terms);
    }
  };
  auto build_plan = [&]() {
    Eigen::MatrixXd plan(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        plan(i, j) = std::exp(qa[i] + qb[j] + (f[i] + g[j] - cost(i, j)) / eps);
      }
    }
    return plan;
  };
  auto discrete_objective_of = [&](const Eigen::MatrixXd& plan) {
    double linear = 0.0, entropy = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        const double p = plan(i, j);
        if (p > 0.0) {
          linear += cost(i, j) * p;
          entropy += p * std::log(p);
        }
      }
    }
    return linear + eps * entropy;
  };

  std::vector<double> trace;
  Eigen::VectorXd f_next(n);
  int iterations = max_iter;
  update_rows(f);
  for (int iter = 1; iter <= max_iter; ++iter) {
    update_cols();
    update_rows(f_next);
    // rows after the column update: r_i = a_i * exp((f_i - f_next_i)/eps)
    double row_error = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = a.weights[i] > 0.0
                           ? a.weights[i] * std::exp((f[i] - f_next[i]) / eps)
                           : 0.0;
      row_error = std::max(row_error, std::abs(r - a.weights[i]));
    }
    if (iter % 10 == 0) {
      trace.push_back(discrete_objective_of(build_plan()));
    }
    if (row_error <= tol) {
      iterations = iter;
      break;
    }
    if (iter < max_iter) f = f_next;
  }

  Eigen::MatrixXd plan = build_plan();
  const double row_err = (plan.rowwise().sum() - a.weights).cwiseAbs().maxCoeff();
  const double col_err = (plan.colwise().sum().transpose() - b.weights).cwiseAbs().maxCoeff();
  const double discrete_objective = discrete_objective_of(plan);
  if (trace.empty() || trace.back() != discrete_objective) {
    trace.push_back(discrete_objective);
  }
  const double corrected = discrete_objective - eps * std::log(a.cell_volume * b.cell_volume);
  return SinkhornResult{std::move(plan),  f,
                        g,                discrete_objective,
                        corrected,        iterations,
                        std::max(row_err, col_err), std::move(trace)};
}

/// Cell-centered regular grid over mean +- extent_std standard deviations per
/// principal axis of the covariance, with weights proportional to the density
/// at the cell centers, renormalized to sum 1.
inline DiscreteMeasure discretize_gaussian(const Gaussian& p, int points_per_axis,
                                           double extent_std) {
  const Eigen::Index d = p.dim();
  if (d > 3) {
    std::ostringstream os;
    os << "grids are limited to dimension 3, got " << d;
    throw ValidationError(os.str());
  }
  if (points_per_axis < 8) {
    std::ostringstream os;
    os << "points_per_axis must be at least 8, got " << points_per_axis;
    throw ValidationError(os.str());
  }
  if (!(extent_std > 0.0)) {
    throw ValidationError("extent_std must be positive");
  }
  double total_points = 1.0;
  for (Eigen::Index k = 0; k < d; ++k) total_points *= points_per_axis;
  if (total_points > 1e6) {
    std::ostringstream os;
    os << "grid of " << total_points << " points exceeds the 1e6 resource limit";
    throw ValidationError(os.str());
  }
  const Eigen::Index n = static_cast<Eigen::Index>(total_points);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p.cov().matrix());
  if (es.info() != Eigen::Success) {
    throw NumericalError("eigendecomposition failed while building the grid");
  }
  const Eigen::VectorXd axis_std = es.eigenvalues().cwiseSqrt();
  const Eigen::MatrixXd& axes = es.eigenvectors();

  Eigen::VectorXd spacing(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    spacing[k] = 2.0 * extent_std * axis_std[k] / points_per_axis;
  }

  Eigen::MatrixXd points(n, d);
  Eigen::VectorXd weights(n);
  std::vector<int> multi(static_cast<std::size_t>(d), 0);
  for (Eigen::Index row = 0; row < n; ++row) {
    Eigen::VectorXd z(d);
    double quad = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
      z[k] = -extent_std * axis_std[k] + (multi[static_cast<std::size_t>(k)] + 0.5) * spacing[k];
      const double ratio = z[k] / axis_std[k];
      quad += ratio * ratio;
    }
    points.row(row) = (p.mean() + axes * z).transpose();
    weights[row] = std::exp(-0.5 * quad);
    for (Eigen::Index k = d - 1; k >= 0; --k) {
      if (++multi[static_cast<std::size_t>(k)] < points_per_axis) break;
      multi[static_cast<std::size_t>(k)] = 0;
    }
  }
  weights /= weights.sum();

  double cell_volume = 1.0;
  for (Eigen::Index k = 0; k < d; ++k) cell_volume *= spacing[k];
  return DiscreteMeasure{std::move(points), std::move(weights), cell_volume};
}

/// Ground-truth estimate of the continuous regularized cost: discretize both
/// Gaussians, solve the discrete problem, and subtract eps * log(va * vb).
/// The correction converts the discrete plan entropy into a differential
/// estimate, since plan_ij approximates density(x_i, y_j) * va * vb.
inline double oracle_cost(const Gaussian& p, const Gaussian& q, double eps,
                          int points_per_axis = 400, double extent_std = 6.0,
                          double tol = 1e-9, int max_iter = 20000) {
  const auto result = sinkhorn_solve(discretize_gaussian(p, points_per_axis, extent_std),
                                     discretize_gaussian(q, points_per_axis, extent_std), eps,
                                     tol, max_iter);
  if (result.marginal_error > tol) {
    std::ostringstream os;
    os << "Sinkhorn stopped at marginal error " << result.marginal_error << " after "
       << result.iterations << " sweeps (tolerance " << tol << ")";
    throw NumericalError(os.str());
  }
  return result.corrected_objective;
}

}  // namespace eot
