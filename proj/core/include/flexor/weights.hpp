#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "flexor/dataset.hpp"
#include "flexor/mps.hpp"

namespace flexor {

// Tilting function selecting a member of the pseudo-population family:
//   IC         constant tilt (integrative combined; generalized IPW)
//   IGO        harmonic tilt (integrative generalized overlap)
//   Flexor     ESS-optimal tilt for fixed (gamma, theta)
//   FixedGroup tilt matching the observed covariate density of one group
enum class TiltKind { IC, IGO, Flexor, FixedGroup };

std::string tilt_name(TiltKind t);

// A pseudo-population: tilt kind plus study-information shares gamma and
// group prevalences theta. Both vectors have strictly positive entries
// summing to 1.
struct PseudoPopulationSpec {
  TiltKind tilt = TiltKind::IC;
  Eigen::VectorXd gamma;  // length J
  Eigen::VectorXd theta;  // length K
  int fixed_group = 1;    // z' for TiltKind::FixedGroup

  void validate(int n_studies, int n_groups) const;
};

struct TiltOptions {
  // Cell probabilities are floored at this value before any division.
  double prob_floor = 1e-6;
};

struct TiltResult {
  Eigen::VectorXd values;  // per-subject tilt, strictly positive
  int n_floored = 0;       // count of floored (subject, cell) probabilities
};

// Unnormalized balancing weights rho_tilde with diagnostics. All weights are
// strictly positive and finite; ess <= n with equality iff all weights are
// equal; for the Flexor tilt, rho_tilde * gamma_s * theta_z <= 1 holds for
// every subject.
struct WeightSet {
  PseudoPopulationSpec spec;
  Eigen::VectorXd rho_tilde;
  Eigen::VectorXd tilt_values;
  double ess = 0.0;
  double percent_ess = 0.0;
  double prob_floor = 1e-6;  // floor applied when the weights were built
  int n_floored_probs = 0;
  std::vector<std::string> warnings;
};

// Evaluates the tilting function at every subject. Throws NumericError on a
// non-finite tilt value; records (in TiltResult) how many probabilities were
// floored.
TiltResult evaluate_tilt(const PseudoPopulationSpec& spec,
                         const MpsProbabilities& probs,
                         const TiltOptions& options = {});

// rho_tilde_i = gamma_{s_i} * theta_{z_i} * eta(x_i) / delta_{s_i z_i}(x_i).
WeightSet compute_weights(const PseudoPopulationSpec& spec,
                          const MpsProbabilities& probs, const Dataset& d,
                          const TiltOptions& options = {});

struct EssResult {
  double ess = 0.0;
  double percent_ess = 0.0;
};

// Kish effective sample size (sum w)^2 / sum w^2; invariant to rescaling
// the weights.
EssResult effective_sample_size(const Eigen::VectorXd& rho_tilde);

// Weighted covariate balance: standardized mean differences per covariate
// and group pair, and weighted (study, group) cell proportions.
struct BalanceDiagnostics {
  std::vector<std::pair<int, int>> group_pairs;      // 1-based (z1, z2), z1 < z2
  Eigen::MatrixXd smd;                               // p x n_pairs
  Eigen::MatrixXd weighted_cell_proportions;         // J x K
  double max_abs_smd = 0.0;
};

BalanceDiagnostics balance_diagnostics(const WeightSet& w, const Dataset& d);

// Writes one row per subject: row_index, study, group, rho_tilde and the
// mean-normalized weight.
void save_weights_csv(const WeightSet& w, const Dataset& d,
                      const std::string& path);

}  // namespace flexor
