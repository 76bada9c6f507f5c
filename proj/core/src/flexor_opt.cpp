#include "flexor/flexor_opt.hpp"

#include <cmath>

#include "flexor/parallel.hpp"
#include "flexor/rng.hpp"
#include "optim.hpp"

namespace flexor {

namespace {

void check_fixed_values(const SimplexConstraint& c, int len, double floor,
                        const char* name) {
  if (c.mode != SimplexConstraint::Mode::Fixed) return;
  if (static_cast<int>(c.values.size()) != len) {
    throw DimensionError(std::string(name) + " fixed values have wrong length");
  }
  if (!(c.values.array() > 0.0).all() ||
      std::abs(c.values.sum() - 1.0) > 1e-10 * len) {
    throw NumericError(std::string(name) +
                       " fixed values must be a probability vector");
  }
  (void)floor;
}

// Kish sample ESS of gamma_{s_i} * theta_{z_i} * k_i.
double ess_at(const Eigen::VectorXd& gamma, const Eigen::VectorXd& theta,
              const Eigen::VectorXd& k, const Dataset& d) {
  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < d.n_subjects(); ++i) {
    const double w = gamma[d.study()[i] - 1] * theta[d.group()[i] - 1] * k[i];
    s1 += w;
    s2 += w * w;
  }
  return s1 * s1 / s2;
}

PseudoPopulationSpec flexor_spec(Eigen::VectorXd gamma, Eigen::VectorXd theta) {
  PseudoPopulationSpec spec;
  spec.tilt = TiltKind::Flexor;
  spec.gamma = std::move(gamma);
  spec.theta = std::move(theta);
  return spec;
}

// Sample ESS of the analytic-tilt weights at (gamma, theta).
double flexor_ess(const Eigen::VectorXd& gamma, const Eigen::VectorXd& theta,
                  const MpsProbabilities& probs, const Dataset& d,
                  const TiltOptions& topts) {
  const WeightSet w = compute_weights(flexor_spec(gamma, theta), probs, d, topts);
  return w.ess;
}

struct RestartOutcome {
  Eigen::VectorXd gamma, theta;
  std::vector<double> trajectory;
  bool converged = false;
  int n_outer = 0;
  double ess = 0.0;
};

}  // namespace

void ConstraintSet::validate(int n_studies, int n_groups) const {
  if (!(floor > 0.0)) throw NumericError("floor must be positive");
  if (floor * std::max(n_studies, n_groups) >= 1.0) {
    throw NumericError("floor too large for the simplex dimension");
  }
  check_fixed_values(gamma, n_studies, floor, "gamma");
  check_fixed_values(theta, n_groups, floor, "theta");
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> optimize_gamma_theta(
    const MpsProbabilities& probs, const Dataset& d,
    const ConstraintSet& constraints, const Eigen::VectorXd& eta,
    std::pair<Eigen::VectorXd, Eigen::VectorXd> init) {
  const int J = d.n_studies();
  const int K = d.n_groups();
  constraints.validate(J, K);
  if (eta.size() != d.n_subjects()) {
    throw DimensionError("tilt values and dataset sizes do not match");
  }

  // k_i = eta_i / delta_{own cell}; the objective only sees gamma, theta.
  Eigen::VectorXd k(d.n_subjects());
  for (int i = 0; i < d.n_subjects(); ++i) {
    const double delta = std::max(
        probs.at(i, d.study()[i], d.group()[i]), TiltOptions{}.prob_floor);
    k[i] = eta[i] / delta;
    if (!std::isfinite(k[i]) || k[i] <= 0.0) {
      throw NumericError("non-finite objective at initial point");
    }
  }

  const bool gamma_free =
      constraints.gamma.mode == SimplexConstraint::Mode::Free && J > 1;
  const bool theta_free =
      constraints.theta.mode == SimplexConstraint::Mode::Free && K > 1;
  const double init_ess = ess_at(init.first, init.second, k, d);
  if (!std::isfinite(init_ess)) {
    throw NumericError("objective not finite at the initial point");
  }
  if (!gamma_free && !theta_free) return init;

  const int dim_g = gamma_free ? J - 1 : 0;
  const int dim_t = theta_free ? K - 1 : 0;
  Eigen::VectorXd u0(dim_g + dim_t);
  if (gamma_free) {
    u0.head(dim_g) = detail::free_from_simplex(init.first, constraints.floor);
  }
  if (theta_free) {
    u0.tail(dim_t) = detail::free_from_simplex(init.second, constraints.floor);
  }

  auto unpack = [&](const Eigen::VectorXd& u) {
    Eigen::VectorXd gamma =
        gamma_free ? detail::simplex_from_free(u.head(dim_g), J, constraints.floor)
                   : init.first;
    Eigen::VectorXd theta =
        theta_free ? detail::simplex_from_free(u.tail(dim_t), K, constraints.floor)
                   : init.second;
    return std::make_pair(std::move(gamma), std::move(theta));
  };

  auto objective = [&](const Eigen::VectorXd& u) {
    auto [gamma, theta] = unpack(u);
    return -std::log(ess_at(gamma, theta, k, d));
  };

  const detail::OptimResult opt = detail::minimize_bfgs(objective, u0);
  auto [gamma, theta] = unpack(opt.x);
  if (ess_at(gamma, theta, k, d) < init_ess) return init;  // monotone guard
  return {std::move(gamma), std::move(theta)};
}

FlexorResult optimize_flexor(const MpsProbabilities& probs, const Dataset& d,
                             const ConstraintSet& constraints,
                             const FlexorOptions& options) {
  const int J = d.n_studies();
  const int K = d.n_groups();
  constraints.validate(J, K);
  if (options.n_restarts < 1) throw ConfigError("n_restarts must be >= 1");

  const TiltOptions topts{options.prob_floor};

  auto initial_point = [&](int restart) {
    Rng rng = make_rng(options.seed, static_cast<std::uint64_t>(restart), 0x11);
    auto draw = [&](const SimplexConstraint& c, int len) {
      if (c.mode == SimplexConstraint::Mode::Fixed) return c.values;
      if (restart == 0 || len == 1) {
        return Eigen::VectorXd::Constant(len, 1.0 / len).eval();
      }
      const Eigen::VectorXd raw = dirichlet_uniform(rng, len);
      return (Eigen::VectorXd::Constant(len, constraints.floor) +
              (1.0 - len * constraints.floor) * raw)
          .eval();
    };
    Eigen::VectorXd gamma = draw(constraints.gamma, J);
    Eigen::VectorXd theta = draw(constraints.theta, K);
    return std::make_pair(std::move(gamma), std::move(theta));
  };

  auto run_restart = [&](int restart) {
    RestartOutcome out;
    auto [gamma, theta] = initial_point(restart);

    // Step I at the initial point.
    double ess = flexor_ess(gamma, theta, probs, d, topts);
    out.trajectory.push_back(ess);

    for (int iter = 1; iter <= options.max_outer; ++iter) {
      out.n_outer = iter;
      const Eigen::VectorXd eta =
          evaluate_tilt(flexor_spec(gamma, theta), probs, topts).values;
      auto [g2, t2] = optimize_gamma_theta(probs, d, constraints, eta,
                                           {gamma, theta});
      const double ess_new = flexor_ess(g2, t2, probs, d, topts);
      const double rel = (ess_new - ess) / ess;
      if (ess_new >= ess) {
        gamma = std::move(g2);
        theta = std::move(t2);
        out.trajectory.push_back(ess_new);
        ess = ess_new;
      } else {
        out.trajectory.push_back(ess);  // candidate rejected, keep state
      }
      if (rel < options.outer_tol) {
        out.converged = true;
        break;
      }
    }
    out.gamma = std::move(gamma);
    out.theta = std::move(theta);
    out.ess = ess;
    return out;
  };

  std::vector<RestartOutcome> outcomes(options.n_restarts);
  parallel_for(static_cast<std::size_t>(options.n_restarts), options.threads,
               [&](std::size_t r) { outcomes[r] = run_restart(static_cast<int>(r)); });

  int best = -1;
  bool any_converged = false;
  for (int r = 0; r < options.n_restarts; ++r) {
    any_converged = any_converged || outcomes[r].converged;
    if (best < 0 || outcomes[r].ess > outcomes[best].ess) best = r;
  }
  if (!any_converged) {
    throw ConvergenceError("no restart of the ESS optimization converged within " +
                               std::to_string(options.max_outer) + " iterations",
                           0.0);
  }

  FlexorResult result;
  result.best_restart = best;
  for (const auto& o : outcomes) result.restart_ess.push_back(o.ess);
  RestartOutcome& win = outcomes[best];
  result.spec = flexor_spec(std::move(win.gamma), std::move(win.theta));
  result.weights = compute_weights(result.spec, probs, d, topts);
  result.trajectory = std::move(win.trajectory);
  result.converged = win.converged;
  result.n_outer_iterations = win.n_outer;
  return result;
}

}  // namespace flexor
