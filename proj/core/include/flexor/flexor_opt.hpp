#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "flexor/weights.hpp"

namespace flexor {

// Feasible set for (gamma, theta): each vector is either fixed to given
// values or free on the simplex with a positivity floor on every coordinate.
struct SimplexConstraint {
  enum class Mode { Fixed, Free };
  Mode mode = Mode::Free;
  Eigen::VectorXd values;  // required when mode == Fixed

  static SimplexConstraint fixed(Eigen::VectorXd v) {
    return {Mode::Fixed, std::move(v)};
  }
  static SimplexConstraint free() { return {Mode::Free, {}}; }
};

struct ConstraintSet {
  SimplexConstraint gamma = SimplexConstraint::free();
  SimplexConstraint theta = SimplexConstraint::free();
  double floor = 1e-3;  // lower bound on each free simplex coordinate

  void validate(int n_studies, int n_groups) const;
};

struct FlexorOptions {
  double outer_tol = 1e-6;  // relative ESS change declaring convergence
  int max_outer = 50;
  int n_restarts = 5;
  std::uint64_t seed = 0;
  double prob_floor = 1e-6;
  int threads = 1;
};

// Outcome of the alternating optimization. The trajectory records the sample
// ESS after each accepted outer iteration and is non-decreasing; the final
// weights use the analytic optimal tilt at the converged (gamma, theta).
struct FlexorResult {
  PseudoPopulationSpec spec;
  WeightSet weights;
  std::vector<double> trajectory;
  bool converged = false;
  int n_outer_iterations = 0;
  int best_restart = 0;
  std::vector<double> restart_ess;  // converged ESS per restart
};

// Step II of the two-step procedure: with the per-subject tilt values held
// fixed, maximizes the sample ESS over feasible (gamma, theta) starting from
// init. The result never has lower ESS than init.
std::pair<Eigen::VectorXd, Eigen::VectorXd> optimize_gamma_theta(
    const MpsProbabilities& probs, const Dataset& d,
    const ConstraintSet& constraints, const Eigen::VectorXd& eta,
    std::pair<Eigen::VectorXd, Eigen::VectorXd> init);

// Full alternating procedure: Step I sets the analytic optimal tilt at the
// current (gamma, theta); Step II re-optimizes (gamma, theta) with the tilt
// values fixed. Runs n_restarts independent initializations and returns the
// run with the largest converged ESS (ties broken by lowest restart index).
FlexorResult optimize_flexor(const MpsProbabilities& probs, const Dataset& d,
                             const ConstraintSet& constraints,
                             const FlexorOptions& options = {});

}  // namespace flexor
