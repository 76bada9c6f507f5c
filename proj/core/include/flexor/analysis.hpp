#pragma once

#include <optional>
#include <string>
#include <vector>

#include "flexor/estimation.hpp"
#include "flexor/flexor_opt.hpp"
#include "flexor/uncertainty.hpp"

namespace flexor {

// How gamma or theta is chosen for a method: equal shares, user-supplied
// values, or optimized (Flexor only).
struct SharePolicy {
  enum class Kind { Uniform, Fixed, Free };
  Kind kind = Kind::Uniform;
  Eigen::VectorXd values;

  static SharePolicy uniform() { return {Kind::Uniform, {}}; }
  static SharePolicy fixed(Eigen::VectorXd v) { return {Kind::Fixed, std::move(v)}; }
  static SharePolicy free() { return {Kind::Free, {}}; }
};

struct MethodSpec {
  std::string name;
  TiltKind tilt = TiltKind::IC;
  SharePolicy gamma = SharePolicy::uniform();
  SharePolicy theta = SharePolicy::uniform();
  int fixed_group = 1;  // z' for the FixedGroup tilt
  double floor = 1e-3;  // simplex floor for free coordinates
  FlexorOptions flexor;
};

// A named estimand: the feature applied per group (one row per entry of
// `groups`) or, for contrast functionals, a single cross-group row.
// A MedianFromCdfGrid functional with no transforms is evaluated on the
// default grid of each group's observed outcome values (functional.index
// names the outcome).
struct EstimandSpec {
  std::string name;
  FeatureSpec feature;
  std::vector<int> groups;
};

struct AnalysisPlan {
  std::vector<MethodSpec> methods;
  std::vector<EstimandSpec> estimands;
  FitOptions mps;
  TiltOptions tilt;
  bool asymptotic_se = true;
  int bootstrap_B = 100;
  bool reoptimize_flexor = true;  // re-run the ESS optimization per replicate
  double level = 0.95;
  std::uint64_t seed = 0;
  int threads = 0;
};

struct EstimateRow {
  std::string estimand;
  std::string method;
  int group = 0;  // 0 for cross-group contrasts
  double point = 0.0;
  std::optional<double> se_asymptotic;
  std::optional<IntervalReport> ci_asymptotic;
  std::optional<IntervalReport> ci_bootstrap;
};

struct MethodAnalysis {
  MethodSpec input;
  PseudoPopulationSpec spec;  // resolved; for Flexor the converged one
  WeightSet weights;
  std::optional<FlexorResult> flexor;
  BalanceDiagnostics balance;
};

struct CorrelationFinding {
  std::string method;
  int group = 0;
  int outcome1 = 0, outcome2 = 0;
  IntervalReport ci;
};

struct AnalysisResult {
  MpsModel mps;
  CellTable cells;
  std::vector<MethodAnalysis> methods;
  std::vector<EstimateRow> estimates;
  std::vector<CorrelationFinding> significant_correlations;
  std::vector<std::string> warnings;
};

// Fits the cell-membership model, falling back to a small ridge penalty
// (with a warning) when the unpenalized fit is separated.
MpsModel fit_mps_with_fallback(const Dataset& d, FitOptions options,
                               std::vector<std::string>* warnings);

// Resolves a method on a dataset: builds weights, running the ESS
// optimization when the tilt is Flexor with free shares.
MethodAnalysis resolve_method(const MethodSpec& method,
                              const MpsProbabilities& probs, const Dataset& d,
                              const TiltOptions& tilt, std::uint64_t seed);

// Point estimates for every (method, estimand, group) row in a fixed order;
// this is the function the bootstrap resamples.
Eigen::VectorXd compute_estimates(const Dataset& d, const AnalysisPlan& plan);

// Full pipeline: fit, weights, balance, estimates with asymptotic and
// bootstrap uncertainty, and the significant-correlation listing.
AnalysisResult run_analysis(const Dataset& d, const AnalysisPlan& plan);

// Means, SDs, medians, group differences, SD ratios and pairwise
// correlations for every outcome; the standard per-outcome report.
std::vector<EstimandSpec> default_estimand_battery(const Dataset& d);

}  // namespace flexor
