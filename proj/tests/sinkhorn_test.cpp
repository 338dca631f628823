#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "eot/cost.hpp"
#include "eot/sinkhorn.hpp"
#include "test_support.hpp"

using eot::cost_1d;
using eot::DiscreteMeasure;
using eot::discretize_gaussian;
using eot::entropic_cost;
using eot::EntropyReference;
using eot::Gaussian;
using eot::oracle_cost;
using eot::sinkhorn_solve;
using eot::SinkhornResult;
using eot::SpdMatrix;
using eot::ValidationError;

namespace {

DiscreteMeasure two_point_measure() {
  Eigen::MatrixXd points(2, 1);
  points << 0.0, 1.0;
  return DiscreteMeasure{points, Eigen::Vector2d(0.5, 0.5), 1.0};
}

Gaussian gaussian_1d(double mean, double var) {
  Eigen::MatrixXd cov(1, 1);
  cov << var;
  Eigen::VectorXd mu(1);
  mu << mean;
  return Gaussian(mu, SpdMatrix(cov));
}

}  // namespace

TEST_CASE("symmetric two-point problem has a closed-form plan") {
  const DiscreteMeasure m = two_point_measure();
  const SinkhornResult result = sinkhorn_solve(m, m, 1.0, 1e-12);
  // stationarity of the one-parameter objective: diagonal mass e/(1+e)
  const double expected = 0.5 * std::numbers::e / (1.0 + std::numbers::e);
  REQUIRE(std::abs(result.plan(0, 0) - expected) < 1e-9);
  REQUIRE(std::abs(result.plan(1, 1) - expected) < 1e-9);
  REQUIRE(std::abs(result.plan(0, 1) - (0.5 - expected)) < 1e-9);
}

TEST_CASE("entropy dominates for huge eps") {
  const DiscreteMeasure m = two_point_measure();
  const SinkhornResult result = sinkhorn_solve(m, m, 1e6, 1e-12);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      REQUIRE(std::abs(result.plan(i, j) - 0.25) < 1e-6);
    }
  }
}

TEST_CASE("converged plans meet both marginals") {
  const DiscreteMeasure a = discretize_gaussian(gaussian_1d(0.0, 1.0), 80, 6.0);
  const DiscreteMeasure b = discretize_gaussian(gaussian_1d(0.5, 2.0), 90, 6.0);
  const double tol = 1e-10;
  const SinkhornResult result = sinkhorn_solve(a, b, 0.7, tol);
  REQUIRE(result.marginal_error <= tol);
  REQUIRE((result.plan.rowwise().sum() - a.weights).cwiseAbs().maxCoeff() <= tol);
  REQUIRE((result.plan.colwise().sum().transpose() - b.weights).cwiseAbs().maxCoeff() <= tol);
}

TEST_CASE("potentials reproduce the plan through the scaling convention") {
  const DiscreteMeasure a = discretize_gaussian(gaussian_1d(0.0, 1.0), 60, 6.0);
  const DiscreteMeasure b = discretize_gaussian(gaussian_1d(0.3, 1.5), 60, 6.0);
  const double eps = 1.1;
  const SinkhornResult result = sinkhorn_solve(a, b, eps);
  for (Eigen::Index i = 0; i < 60; i += 7) {
    for (Eigen::Index j = 0; j < 60; j += 7) {
      const double cost = (a.points.row(i) - b.points.row(j)).squaredNorm();
      const double reconstructed =
          a.weights[i] * b.weights[j] *
          std::exp((result.potentials_f[i] + result.potentials_g[j] - cost) / eps);
      if (result.plan(i, j) > 1e-300) {
        REQUIRE(std::abs(reconstructed - result.plan(i, j)) <=
                1e-8 * result.plan(i, j));
      }
    }
  }
}

TEST_CASE("plain-entropy and product-reference objectives share the optimal plan") {
  const DiscreteMeasure a = discretize_gaussian(gaussian_1d(0.0, 1.0), 70, 6.0);
  const DiscreteMeasure b = discretize_gaussian(gaussian_1d(0.4, 1.3), 70, 6.0);
  const double eps = 0.8;
  const SinkhornResult kl = sinkhorn_solve(a, b, eps, 1e-11, 20000,
                                           EntropyReference::product_marginals);
  const SinkhornResult plain =
      sinkhorn_solve(a, b, eps, 1e-11, 20000, EntropyReference::lebesgue);
  REQUIRE((kl.plan - plain.plan).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("discrete objective climbs monotonically to the constrained optimum") {
  const DiscreteMeasure a = discretize_gaussian(gaussian_1d(0.0, 1.0), 200, 6.0);
  const DiscreteMeasure b = discretize_gaussian(gaussian_1d(0.0, 4.0), 200, 6.0);
  const SinkhornResult result = sinkhorn_solve(a, b, 0.5, 1e-10);
  REQUIRE(result.objective_trace.size() >= 3);
  for (std::size_t i = 1; i < result.objective_trace.size(); ++i) {
    REQUIRE(result.objective_trace[i] >=
            result.objective_trace[i - 1] - 1e-9 * (1.0 + std::abs(result.objective_trace[i])));
  }
  REQUIRE(result.objective_trace.back() > result.objective_trace.front());
  REQUIRE(result.discrete_objective == result.objective_trace.back());
}

TEST_CASE("cell-volume correction ties the two objectives together") {
  const DiscreteMeasure a = discretize_gaussian(gaussian_1d(0.0, 1.0), 50, 6.0);
  const DiscreteMeasure b = discretize_gaussian(gaussian_1d(0.0, 1.0), 50, 6.0);
  const SinkhornResult result = sinkhorn_solve(a, b, 2.0);
  REQUIRE(result.corrected_objective ==
          result.discrete_objective - 2.0 * std::log(a.cell_volume * b.cell_volume));
}

TEST_CASE("discretization matches the first two moments") {
  const DiscreteMeasure m = discretize_gaussian(gaussian_1d(0.0, 1.0), 200, 6.0);
  REQUIRE(std::abs(m.weights.sum() - 1.0) < 1e-12);
  const double mean = (m.weights.array() * m.points.col(0).array()).sum();
  REQUIRE(std::abs(mean) < 1e-6);
  const double var =
      (m.weights.array() * (m.points.col(0).array() - mean).square()).sum();
  REQUIRE(std::abs(var - 1.0) < 1e-3);
}

TEST_CASE("discretization is translation equivariant") {
  const DiscreteMeasure base = discretize_gaussian(gaussian_1d(0.0, 2.25), 120, 6.0);
  const DiscreteMeasure moved = discretize_gaussian(gaussian_1d(1.75, 2.25), 120, 6.0);
  REQUIRE(base.weights == moved.weights);
  REQUIRE(base.cell_volume == moved.cell_volume);
  REQUIRE(((base.points.col(0).array() + 1.75) == moved.points.col(0).array()).all());
}

TEST_CASE("grids follow the principal axes in higher dimension") {
  std::mt19937_64 rng(307);
  // d = 3 exercises the full multi-index enumeration
  const Eigen::MatrixXd cov = eot::testing::random_spd(3, rng);
  const Eigen::VectorXd mean = eot::testing::random_vector(3, rng);
  const Gaussian g(mean, SpdMatrix(cov));
  const DiscreteMeasure m = discretize_gaussian(g, 20, 6.0);
  REQUIRE(m.points.rows() == 20 * 20 * 20);
  REQUIRE(std::abs(m.weights.sum() - 1.0) < 1e-12);

  Eigen::VectorXd empirical_mean = Eigen::VectorXd::Zero(3);
  for (Eigen::Index i = 0; i < m.points.rows(); ++i) {
    empirical_mean += m.weights[i] * m.points.row(i).transpose();
  }
  REQUIRE((empirical_mean - mean).cwiseAbs().maxCoeff() < 1e-6);

  Eigen::MatrixXd empirical_cov = Eigen::MatrixXd::Zero(3, 3);
  for (Eigen::Index i = 0; i < m.points.rows(); ++i) {
    const Eigen::VectorXd centered = m.points.row(i).transpose() - empirical_mean;
    empirical_cov += m.weights[i] * centered * centered.transpose();
  }
  REQUIRE((empirical_cov - cov).cwiseAbs().maxCoeff() < 1e-3);

  // translation equivariance holds coordinate-wise in any dimension
  const Eigen::VectorXd shift = eot::testing::random_vector(3, rng);
  const DiscreteMeasure moved = discretize_gaussian(Gaussian(mean + shift, SpdMatrix(cov)), 20, 6.0);
  REQUIRE(moved.weights == m.weights);
  REQUIRE((moved.points - (m.points.rowwise() + shift.transpose())).cwiseAbs().maxCoeff() <
          1e-12);
}

TEST_CASE("six standard deviations leave negligible tail mass") {
  const DiscreteMeasure m = discretize_gaussian(gaussian_1d(0.0, 1.0), 200, 6.0);
  // unnormalized cell masses: density times spacing
  double raw = 0.0;
  for (Eigen::Index i = 0; i < m.points.rows(); ++i) {
    const double x = m.points(i, 0);
    raw += std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi) * m.cell_volume;
  }
  REQUIRE(1.0 - raw > 0.0);
  REQUIRE(1.0 - raw < 1e-8);
}

TEST_CASE("grid limits are enforced") {
  std::mt19937_64 rng(311);
  REQUIRE_THROWS_AS(discretize_gaussian(eot::testing::random_gaussian(4, rng), 10, 6.0),
                    ValidationError);
  REQUIRE_THROWS_AS(discretize_gaussian(gaussian_1d(0.0, 1.0), 7, 6.0), ValidationError);
  REQUIRE_THROWS_AS(discretize_gaussian(gaussian_1d(0.0, 1.0), 100, 0.0), ValidationError);
  REQUIRE_THROWS_AS(discretize_gaussian(eot::testing::random_gaussian(3, rng), 101, 6.0),
                    ValidationError);
}

TEST_CASE("measure validation") {
  Eigen::MatrixXd points(2, 1);
  points << 0.0, 0.0;
  REQUIRE_THROWS_AS(
      sinkhorn_solve(DiscreteMeasure{points, Eigen::Vector2d(0.5, 0.5), 1.0},
                     two_point_measure(), 1.0),
      ValidationError);

  Eigen::MatrixXd distinct(2, 1);
  distinct << 0.0, 1.0;
  REQUIRE_THROWS_AS(
      sinkhorn_solve(DiscreteMeasure{distinct, Eigen::Vector2d(0.7, 0.7), 1.0},
                     two_point_measure(), 1.0),
      ValidationError);
  REQUIRE_THROWS_AS(
      sinkhorn_solve(DiscreteMeasure{distinct, Eigen::Vector2d(1.5, -0.5), 1.0},
                     two_point_measure(), 1.0),
      ValidationError);
  REQUIRE_THROWS_AS(sinkhorn_solve(two_point_measure(), two_point_measure(), 0.0),
                    ValidationError);
}

TEST_CASE("oracle reproduces the closed form in one dimension") {
  const double closed = cost_1d(1.0, 1.0, 2.0);
  const double oracle = oracle_cost(gaussian_1d(0.0, 1.0), gaussian_1d(0.0, 1.0), 2.0, 400, 6.0);
  REQUIRE(std::abs(oracle - closed) <= 0.02);

  // displacing one mean adds exactly the squared shift
  const double shifted =
      oracle_cost(gaussian_1d(0.0, 1.0), gaussian_1d(1.0, 1.0), 2.0, 400, 6.0);
  REQUIRE(std::abs(shifted - (closed + 1.0)) <= 0.02);
}

TEST_CASE("oracle error decays under refinement until it saturates") {
  const double closed = cost_1d(1.0, 4.0, 0.5);
  const Gaussian p = gaussian_1d(0.0, 1.0);
  const Gaussian q = gaussian_1d(0.0, 4.0);
  // coarse grids resolve progressively more of the thin coupling band
  double previous = std::numeric_limits<double>::infinity();
  for (int n : {12, 16, 24, 32}) {
    const double gap = std::abs(oracle_cost(p, q, 0.5, n, 6.0) - closed);
    REQUIRE(gap < previous);
    previous = gap;
  }
  // production grids sit at the truncation floor, far below the tolerance
  for (int n : {100, 200, 400}) {
    REQUIRE(std::abs(oracle_cost(p, q, 0.5, n, 6.0) - closed) < 1e-5);
  }
}

TEST_CASE("oracle agrees with the closed form in two dimensions") {
  Eigen::MatrixXd cov1(2, 2), cov2(2, 2);
  cov1 << 1.0, 0.3, 0.3, 0.8;
  cov2 << 1.4, -0.2, -0.2, 0.9;
  const Gaussian p(Eigen::Vector2d(0.0, 0.0), SpdMatrix(cov1));
  const Gaussian q(Eigen::Vector2d(0.5, -0.2), SpdMatrix(cov2));
  const double closed = entropic_cost(p, q, 1.5).total;
  const double oracle = oracle_cost(p, q, 1.5, 28, 5.0);
  REQUIRE(std::abs(oracle - closed) < 1e-3);
}
