#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "flexor/estimation.hpp"
#include "flexor/mps.hpp"
#include "flexor/weights.hpp"

namespace flexor {

struct VarianceOptions {
  double fd_step = 1e-6;          // relative central-difference step
  bool treat_omega_fixed = false; // known-MPS variance (no adjustment term)
};

// Plug-in estimate of the known-MPS asymptotic variance of sqrt(N) times the
// group-z moment estimator: N * sum_i rho~_i^2 1{Z_i=z} (phi_i - lambda_z)
// (phi_i - lambda_z)' / (sum_i rho~_i 1{Z_i=z})^2. Symmetric and positive
// semidefinite by construction.
Eigen::MatrixXd sigma1_plugin(const WeightSet& w, const Dataset& d,
                              const FeatureSpec& f, const GroupMoments& g,
                              int z);

// Estimated-MPS variance: the multinomial-logit score equations are stacked
// with the weighted-moment estimating equations and the standard sandwich
// A^{-1} B A^{-T} is formed, with the moment-by-coefficient Jacobian block
// differentiated numerically. With treat_omega_fixed the adjustment vanishes
// and the result equals sigma1_plugin.
Eigen::MatrixXd sigma2_sandwich(const MpsModel& m, const WeightSet& w,
                                const Dataset& d, const FeatureSpec& f, int z,
                                const VarianceOptions& options = {});

// Joint covariance of the stacked moment estimates for several groups
// (|groups|*M square), accounting for the shared estimated coefficients.
Eigen::MatrixXd sandwich_joint(const MpsModel& m, const WeightSet& w,
                               const Dataset& d, const FeatureSpec& f,
                               const std::vector<int>& groups,
                               const VarianceOptions& options = {});

// Analytic gradient of the per-group functional at lambda; throws
// NumericError for non-differentiable functionals (median) and when the
// gradient vanishes.
Eigen::VectorXd functional_gradient(const FeatureSpec& f,
                                    const Eigen::VectorXd& lambda);

// Delta-method variance tau^2 of psi(lambda_hat_z); SE = sqrt(tau^2 / N).
double delta_method_variance(const Eigen::MatrixXd& sigma,
                             const GroupMoments& g, const FeatureSpec& f,
                             int z);

// Delta-method variance of a contrast functional using the joint covariance
// of the stacked group moments (group order as in `groups`).
double contrast_delta_variance(const Eigen::MatrixXd& joint_sigma,
                               const GroupMoments& g, const FeatureSpec& f,
                               const std::vector<int>& groups);

struct IntervalReport {
  enum class Method { Asymptotic, SimultaneousScheffe, BootstrapPercentile };
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
  Method method = Method::Asymptotic;
  int n_bootstrap = 0;
};

// Scheffe-type interval for sum_z a_z lambda_hat(z, m), valid simultaneously
// over all coefficient vectors: half-width
// sqrt(chi2_K(alpha) * sum_z a_z^2 sigma_z(m, m) / N).
IntervalReport simultaneous_ci(const GroupMoments& g,
                               const std::vector<Eigen::MatrixXd>& sigmas,
                               const Eigen::VectorXd& a, int m, double level,
                               int n_subjects);

// Symmetric normal interval from a point estimate and its standard error.
IntervalReport asymptotic_ci(double point, double se, double level);

// Maps a dataset to the vector of estimand values; used for bootstrapping a
// whole analysis pipeline.
using PipelineFn = std::function<Eigen::VectorXd(const Dataset&)>;

struct BootstrapOptions {
  int B = 100;
  std::uint64_t seed = 0;
  double level = 0.95;
  int threads = 0;
  int max_retries = 20;            // redraws per failed replicate
  double max_failure_rate = 0.2;   // failed draws tolerated relative to B
};

struct BootstrapResult {
  Eigen::VectorXd point;                  // pipeline on the original data
  std::vector<IntervalReport> intervals;  // one per estimand
  Eigen::MatrixXd replicates;             // B x n_estimands
  int n_failed_draws = 0;
};

// Percentile bootstrap over subjects resampled with replacement within each
// (study, group) cell, preserving cell counts (and hence positivity).
// Deterministic given (seed, B, pipeline); replicates run in parallel with
// per-(replicate, retry) RNG streams.
BootstrapResult bootstrap_ci(const Dataset& d, const PipelineFn& pipeline,
                             const BootstrapOptions& options = {});

}  // namespace flexor
