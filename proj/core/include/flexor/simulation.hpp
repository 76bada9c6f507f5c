#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "flexor/analysis.hpp"

namespace flexor {

enum class Similarity { Low, High };

// Monte Carlo scenario: a natural population is built by mixing covariate
// clusters with Dirichlet weights, group propensities follow a logistic
// model in the covariate sum, study-given-group propensities follow a
// log-linear model, and outcomes are Gaussian in the covariate sum with
// noise matched to an R-squared target.
struct ScenarioConfig {
  Similarity similarity = Similarity::Low;
  int n_subjects = 500;
  int n_replicates = 100;
  int n_clusters = 10;
  long long natural_pop_size = 1000000;
  int n_studies = 7;
  int n_groups = 2;  // the generator requires two groups
  int n_covariates = 30;
  double omega1 = 0.0;   // group-propensity slope; 0 resolves by similarity
  double omega_sg = 0.0; // study-propensity slope; 0 resolves by similarity
  double r_squared_target = 0.9;
  std::uint64_t seed = 1;

  void resolve_defaults();
  void validate() const;
};

struct KmeansResult {
  Eigen::MatrixXd centers;      // Q x p
  std::vector<int> assignment;  // 0-based cluster per row
  std::vector<int> counts;      // members per cluster
  int n_iterations = 0;
  int n_reseeds = 0;
};

// Lloyd's algorithm with k-means++ seeding; deterministic given the seed.
// Restarts with a fresh seeding when a cluster empties, up to a retry cap.
KmeansResult kmeans_covariates(const Eigen::MatrixXd& X, int Q,
                               std::uint64_t seed, int max_iter = 100);

// Synthetic covariate pool: a mixture of Gaussian clusters with positive
// mean, standing in for a user-supplied covariate matrix.
Eigen::MatrixXd synthetic_covariate_pool(int n_rows, int p, int n_clusters,
                                         std::uint64_t seed);

// Generating cell-membership probabilities of one replicate, evaluable at
// any covariate vector through its coordinate sum.
struct TrueMps {
  int n_studies = 0;
  int n_groups = 0;
  double omega0 = 0.0;
  double omega1 = 0.0;
  double omega_sg = 0.0;
  double group_norm = 1.0;  // natural-population mean covariate sum
  double study_norm = 1.0;  // sample mean covariate sum

  double group2_probability(double cov_sum) const;
  // J*K lexicographic cell probabilities.
  Eigen::VectorXd cell_probabilities(double cov_sum) const;
};

struct ReplicateData {
  Dataset data;
  Eigen::VectorXd theta_r;     // known group prevalences of the replicate
  TrueMps mps;
  double tau2 = 0.0;           // outcome noise variance
  Eigen::MatrixXd true_probs;  // n x JK generating cell probabilities
  int n_regenerations = 0;
};

// Steps 1-4 of the scenario for replicate r. Regenerates (with a new
// substream) until every (study, group) cell is occupied. Deterministic in
// (cfg, pool, r).
ReplicateData generate_replicate(const ScenarioConfig& cfg,
                                 const Eigen::MatrixXd& pool, int r);

// Exact pseudo-population targets for one method on one replicate, computed
// by summation over the covariate pool (the observed covariate distribution
// is uniform on its rows). Order: lambda1, lambda2, sigma1, sigma2,
// lambda1 - lambda2.
Eigen::VectorXd replicate_truth(const ReplicateData& rep,
                                const Eigen::MatrixXd& pool, TiltKind tilt,
                                double floor = 1e-3);

struct StudyOptions {
  std::vector<TiltKind> methods = {TiltKind::Flexor, TiltKind::IGO, TiltKind::IC};
  int bootstrap_B = 100;
  double level = 0.95;
  int threads = 0;
  bool reoptimize_flexor = true;
  Eigen::MatrixXd pool;  // empty: use the synthetic pool
};

struct EstimandPerformance {
  std::string name;
  double mean_bias = 0.0;       // signed mean of (estimate - truth)
  double mean_abs_error = 0.0;  // mean |estimate - truth|
  double sd_error = 0.0;        // SD of (estimate - truth)
  double coverage_pct = -1.0;   // -1 when no bootstrap was run
};

struct MethodPerformance {
  std::string method;
  std::vector<EstimandPerformance> estimands;
  std::vector<double> percent_ess;  // one entry per replicate
  double ess_min = 0, ess_q1 = 0, ess_median = 0, ess_mean = 0, ess_q3 = 0,
         ess_max = 0;
  double win_fraction = 0.0;  // replicates where this method's ESS is largest
};

struct SimulationReport {
  ScenarioConfig config;
  int bootstrap_B = 0;
  std::vector<MethodPerformance> methods;
  int n_regenerations = 0;
  int n_failed_replicates = 0;
};

// Full study: generate R replicates, fit, weight, estimate, bootstrap, and
// score each method by bias, error SD, coverage and percent ESS.
SimulationReport run_study(const ScenarioConfig& cfg, const StudyOptions& options);

}  // namespace flexor
