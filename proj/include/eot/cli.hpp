#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "eot/barycenter.hpp"
#include "eot/cost.hpp"
#include "eot/sinkhorn.hpp"

namespace eot {

/// Input that could not be read at all: bad flags, missing files, malformed
/// JSON. Maps to exit code 1; semantic validation maps to 2.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& message) : std::runtime_error(message) {}
};

struct OracleSettings {
  int points_per_axis = 400;
  double extent_std = 6.0;
};

/// Parsed problem description: either a pairwise problem (p required, q
/// required by the commands that consume it) or a barycenter problem, plus
/// optional oracle grid settings and reference-measure scale.
struct ProblemFile {
  double epsilon = 0.0;
  std::optional<Gaussian> p;
  std::optional<Gaussian> q;
  std::optional<std::vector<Gaussian>> components;
  std::optional<std::vector<double>> weights;
  OracleSettings oracle;
  std::optional<double> lambda;
};

namespace io {

inline Eigen::VectorXd to_vector(const nlohmann::json& j, const std::string& name) {
  if (!j.is_array()) throw ParseError("field '" + name + "' must be an array of numbers");
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ParseError("field '" + name + "' must contain only numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

inline Eigen::MatrixXd to_matrix(const nlohmann::json& j, const std::string& name) {
  if (!j.is_array() || j.empty()) {
    throw ParseError("field '" + name + "' must be a non-empty array of rows");
  }
  const std::size_t rows = j.size();
  if (!j[0].is_array()) throw ParseError("field '" + name + "' must hold arrays as rows");
  const std::size_t cols = j[0].size();
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) {
      throw ValidationError("rows of '" + name + "' have inconsistent lengths");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) {
        throw ParseError("field '" + name + "' must contain only numbers");
      }
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
  }
  return m;
}

inline Gaussian to_gaussian(const nlohmann::json& j, const std::string& name) {
  if (!j.is_object() || !j.contains("mean") || !j.contains("cov")) {
    throw ParseError("Gaussian '" + name + "' needs 'mean' and 'cov' fields");
  }
  return validate_gaussian(to_vector(j["mean"], name + ".mean"),
                           to_matrix(j["cov"], name + ".cov"));
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf);
}

inline void write_vector(std::ostream& out, const Eigen::VectorXd& v) {
  out << '[';
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out << ", ";
    out << format_double(v[i]);
  }
  out << ']';
}

inline void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  out << '[';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (r) out << ", ";
    out << '[';
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out << ", ";
      out << format_double(m(r, c));
    }
    out << ']';
  }
  out << ']';
}

inline void write_potential(std::ostream& out, const QuadraticPotential& potential) {
  out << "{\"matrix\": ";
  write_matrix(out, potential.matrix);
  out << ", \"constant\": " << format_double(potential.constant) << '}';
}

}  // namespace io

inline ProblemFile parse_problem_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open input file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed JSON in '" + path + "': " + e.what());
  }
  if (!j.is_object()) throw ParseError("problem file must hold a JSON object");
  if (!j.contains("epsilon") || !j["epsilon"].is_number()) {
    throw ParseError("problem file needs a numeric 'epsilon' field");
  }

  ProblemFile file;
  file.epsilon = j["epsilon"].get<double>();
  if (file.epsilon < 0.0) throw ValidationError("epsilon must be nonnegative");

  if (j.contains("p")) file.p = io::to_gaussian(j["p"], "p");
  if (j.contains("q")) file.q = io::to_gaussian(j["q"], "q");
  if (j.contains("components")) {
    if (!j["components"].is_array() || j["components"].empty()) {
      throw ParseError("'components' must be a non-empty array of Gaussians");
    }
    std::vector<Gaussian> components;
    for (std::size_t i = 0; i < j["components"].size(); ++i) {
      components.push_back(
          io::to_gaussian(j["components"][i], "components[" + std::to_string(i) + "]"));
    }
    file.components = std::move(components);
  }
  if (j.contains("weights")) {
    const auto w = io::to_vector(j["weights"], "weights");
    file.weights = std::vector<double>(w.data(), w.data() + w.size());
  }
  if (j.contains("points_per_axis")) {
    if (!j["points_per_axis"].is_number_integer()) {
      throw ParseError("'points_per_axis' must be an integer");
    }
    file.oracle.points_per_axis = j["points_per_axis"].get<int>();
  }
  if (j.contains("extent_std")) {
    if (!j["extent_std"].is_number()) throw ParseError("'extent_std' must be a number");
    file.oracle.extent_std = j["extent_std"].get<double>();
  }
  if (j.contains("lambda")) {
    if (!j["lambda"].is_number()) throw ParseError("'lambda' must be a number");
    file.lambda = j["lambda"].get<double>();
  }

  const bool pairwise = file.p.has_value() || file.q.has_value();
  const bool barycenter = file.components.has_value() || file.weights.has_value();
  if (pairwise && barycenter) {
    throw ValidationError("problem file mixes a pairwise problem with a barycenter problem");
  }
  if (!pairwise && !barycenter) {
    throw ValidationError("problem file holds neither a pairwise nor a barycenter problem");
  }
  return file;
}

namespace detail {

inline const Gaussian& require_p(const ProblemFile& file) {
  if (!file.p) throw ValidationError("this command needs a Gaussian 'p' in the problem file");
  return *file.p;
}

inline const Gaussian& require_q(const ProblemFile& file) {
  if (!file.q) throw ValidationError("this command needs a Gaussian 'q' in the problem file");
  return *file.q;
}

inline BarycenterProblem require_barycenter(const ProblemFile& file, double eps) {
  if (!file.components) {
    throw ValidationError("this command needs 'components' in the problem file");
  }
  BarycenterProblem problem;
  problem.components = *file.components;
  if (file.weights) {
    problem.weights = *file.weights;
  } else {
    problem.weights.assign(problem.components.size(),
                           1.0 / static_cast<double>(problem.components.size()));
  }
  problem.eps = eps;
  validate(problem);
  return problem;
}

inline void write_cost(std::ostream& out, const CostBreakdown& cost) {
  out << "{\"total\": " << io::format_double(cost.total)
      << ", \"mean_term\": " << io::format_double(cost.mean_term)
      << ", \"transport_term\": " << io::format_double(cost.transport_term)
      << ", \"entropy_term\": " << io::format_double(cost.entropy_term) << "}\n";
}

}  // namespace detail

/// Dispatch a parsed command line. `args` excludes the program name. Output
/// goes to `out` unless --output redirects it to a file; diagnostics go to
/// `err`. Returns the process exit code: 0 success, 1 usage or parse error,
/// 2 validation error, 3 numerical non-convergence.
inline int run_command(const std::vector<std::string>& args, std::ostream& out,
                       std::ostream& err) {
  CLI::App app{"Closed-form entropic optimal transport between Gaussian measures"};
  app.require_subcommand(1);

  std::string input;
  std::string output;
  std::vector<double> eps_flags;
  double tol = -1.0;
  int max_iter = -1;
  int grid = -1;
  double extent = -1.0;
  double lambda_flag = std::numeric_limits<double>::quiet_NaN();

  auto add_common = [&](CLI::App* cmd, bool eps_list) {
    cmd->add_option("--input", input, "problem file (JSON)")->required();
    cmd->add_option("--output", output, "write the result here instead of standard output");
    auto* eps_opt = cmd->add_option("--eps", eps_flags, "override the file's epsilon");
    if (!eps_list) eps_opt->expected(0, 1);
    return cmd;
  };

  auto* cost_cmd = add_common(app.add_subcommand("cost", "regularized cost breakdown"), false);
  cost_cmd->add_option("--lambda", lambda_flag,
                       "use the KL regularizer against N(0, lambda I) references");
  add_common(app.add_subcommand("plan", "optimal coupling, Riccati matrix, and potentials"),
             false);
  add_common(app.add_subcommand("bound", "moment lower bound on the regularized cost"), false);
  add_common(app.add_subcommand("best-approx", "closest measure to p and the minimal value"),
             false);
  auto* bary_cmd =
      add_common(app.add_subcommand("barycenter", "regularized barycenter of the components"),
                 false);
  bary_cmd->add_option("--tol", tol, "fixed-point residual tolerance (default 1e-10)");
  bary_cmd->add_option("--max-iter", max_iter, "iteration cap (default 500)");
  auto* oracle_cmd =
      add_common(app.add_subcommand("oracle", "discretized Sinkhorn estimate of the cost"),
                 false);
  oracle_cmd->add_option("--grid", grid, "points per axis (default 400)");
  oracle_cmd->add_option("--extent", extent, "grid extent in standard deviations (default 6)");
  oracle_cmd->add_option("--tol", tol, "marginal tolerance (default 1e-9)");
  oracle_cmd->add_option("--max-iter", max_iter, "sweep cap (default 20000)");
  auto* sweep_cmd = add_common(
      app.add_subcommand("sweep", "closed form vs oracle over a list of epsilons (CSV)"), true);
  sweep_cmd->add_option("--grid", grid, "points per axis (default 400)");
  sweep_cmd->add_option("--extent", extent, "grid extent in standard deviations (default 6)");

  std::vector<const char*> argv;
  argv.push_back("eot");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    const ProblemFile file = parse_problem_file(input);
    const double eps = eps_flags.empty() ? file.epsilon : eps_flags.front();

    std::ofstream file_out;
    std::ostream* sink = &out;
    if (!output.empty()) {
      file_out.open(output);
      if (!file_out) throw ParseError("cannot open output file '" + output + "'");
      sink = &file_out;
    }

    if (app.got_subcommand("cost")) {
      const Gaussian& p = detail::require_p(file);
      const Gaussian& q = detail::require_q(file);
      std::optional<double> lambda = file.lambda;
      if (!std::isnan(lambda_flag)) lambda = lambda_flag;
      const CostBreakdown cost = lambda ? relative_entropic_cost(p, q, eps, {*lambda})
                                        : entropic_cost(p, q, eps);
      detail::write_cost(*sink, cost);
    } else if (app.got_subcommand("plan")) {
      const EntropicPlan plan = assemble_plan(detail::require_p(file), detail::require_q(file), eps);
      const Eigen::Index d = plan.dim();
      *sink << "{\"eps\": " << io::format_double(plan.eps()) << ", \"mean\": ";
      io::write_vector(*sink, plan.mean());
      *sink << ", \"sigma1\": ";
      io::write_matrix(*sink, plan.covariance().matrix().topLeftCorner(d, d));
      *sink << ", \"sigma2\": ";
      io::write_matrix(*sink, plan.covariance().matrix().bottomRightCorner(d, d));
      *sink << ", \"cross\": ";
      io::write_matrix(*sink, plan.covariance().matrix().topRightCorner(d, d));
      *sink << ", \"riccati\": ";
      io::write_matrix(*sink, plan.riccati().matrix());
      *sink << ", \"potential_source\": ";
      io::write_potential(*sink, plan.source_potential());
      *sink << ", \"potential_target\": ";
      io::write_potential(*sink, plan.target_potential());
      *sink << "}\n";
    } else if (app.got_subcommand("bound")) {
      const Gaussian& p = detail::require_p(file);
      const Gaussian& q = detail::require_q(file);
      const double bound =
          gelbrich_lower_bound(p.mean(), p.cov().matrix(), q.mean(), q.cov().matrix(), eps);
      *sink << "{\"bound\": " << io::format_double(bound) << "}\n";
    } else if (app.got_subcommand("best-approx")) {
      const BestApproximation best = best_approximation(detail::require_p(file), eps);
      *sink << "{\"mean\": ";
      io::write_vector(*sink, best.minimizer.mean());
      *sink << ", \"cov\": ";
      io::write_matrix(*sink, best.minimizer.cov().matrix());
      *sink << ", \"value\": " << io::format_double(best.value) << "}\n";
    } else if (app.got_subcommand("barycenter")) {
      const BarycenterProblem problem = detail::require_barycenter(file, eps);
      const double use_tol = tol > 0.0 ? tol : 1e-10;
      const int use_iter = max_iter > 0 ? max_iter : 500;
      const BarycenterSolution solution = solve_barycenter(problem, use_tol, use_iter);
      *sink << "{\"mean\": ";
      io::write_vector(*sink, solution.barycenter.mean());
      *sink << ", \"cov\": ";
      io::write_matrix(*sink, solution.barycenter.cov().matrix());
      *sink << ", \"residual\": " << io::format_double(solution.residual)
            << ", \"iterations\": " << solution.iterations
            << ", \"converged\": " << (solution.converged ? "true" : "false") << "}\n";
      if (!solution.converged) {
        err << "error: fixed point did not converge within " << use_iter
            << " iterations (residual " << io::format_double(solution.residual) << ")\n";
        return 3;
      }
    } else if (app.got_subcommand("oracle")) {
      const Gaussian& p = detail::require_p(file);
      const Gaussian& q = detail::require_q(file);
      const int use_grid = grid > 0 ? grid : file.oracle.points_per_axis;
      const double use_extent = extent > 0.0 ? extent : file.oracle.extent_std;
      const double use_tol = tol > 0.0 ? tol : 1e-9;
      const int use_iter = max_iter > 0 ? max_iter : 20000;
      const SinkhornResult result =
          sinkhorn_solve(discretize_gaussian(p, use_grid, use_extent),
                         discretize_gaussian(q, use_grid, use_extent), eps, use_tol, use_iter);
      if (result.marginal_error > use_tol) {
        err << "error: Sinkhorn stopped at marginal error "
            << io::format_double(result.marginal_error) << " after " << result.iterations
            << " sweeps (tolerance " << io::format_double(use_tol) << ")\n";
        return 3;
      }
      *sink << "{\"corrected_objective\": " << io::format_double(result.corrected_objective)
            << ", \"marginal_error\": " << io::format_double(result.marginal_error) << "}\n";
    } else if (app.got_subcommand("sweep")) {
      const Gaussian& p = detail::require_p(file);
      const Gaussian& q = detail::require_q(file);
      const int use_grid = grid > 0 ? grid : file.oracle.points_per_axis;
      const double use_extent = extent > 0.0 ? extent : file.oracle.extent_std;
      std::vector<double> eps_values = eps_flags;
      if (eps_values.empty()) eps_values.push_back(file.epsilon);
      *sink << "epsilon,closed_form,oracle,abs_gap\n";
      for (double e : eps_values) {
        const double closed = entropic_cost(p, q, e).total;
        const double oracle = oracle_cost(p, q, e, use_grid, use_extent);
        *sink << io::format_double(e) << ',' << io::format_double(closed) << ','
              << io::format_double(oracle) << ',' << io::format_double(std::abs(closed - oracle))
              << '\n';
      }
    }
    return 0;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace eot
