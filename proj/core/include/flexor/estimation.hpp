#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "flexor/weights.hpp"

namespace flexor {

// One coordinate of the outcome transform Phi. Outcome indices are 1-based.
struct Transform {
  enum class Kind { Component, Product, Power, IndicatorLE };
  Kind kind = Kind::Component;
  int l1 = 1;
  int l2 = 1;            // second outcome for Product
  double power = 2.0;    // exponent for Power
  double threshold = 0;  // cutoff for IndicatorLE
};

// Scalar functional psi applied to the estimated moment vector. Per-group
// kinds produce one value per group; contrast kinds combine per-group values
// (each group reduced by `inner`).
struct Functional {
  enum class Kind {
    Identity,           // t_m
    Mean,               // t_1
    SD,                 // sqrt(t_2 - t_1^2), arity 2
    Covariance,         // t_3 - t_1 t_2, arity 3
    Correlation,        // (t3 - t1 t2) / sqrt((t4 - t1^2)(t5 - t2^2)), arity 5
    CdfAt,              // t_m over indicator transforms
    MedianFromCdfGrid,  // grid point with CDF value closest to 1/2
    Difference,         // inner(z1) - inner(z2)
    Ratio,              // inner(z1) / inner(z2)
    LinearCombination,  // sum_z coeffs[z] * inner(z)
    MeanDiffRatio       // (inner(z3) - inner(z1)) / (inner(z2) - inner(z1))
  };
  Kind kind = Kind::Mean;
  int index = 1;  // m for Identity / CdfAt
  int z1 = 1, z2 = 2, z3 = 3;
  Eigen::VectorXd coeffs;  // length K for LinearCombination

  // Per-group reduction used by the contrast kinds.
  Kind inner = Kind::Identity;
  int inner_index = 1;
};

bool is_contrast(Functional::Kind k);

// Transforms plus functional; arity of the functional must match the number
// of transforms M.
struct FeatureSpec {
  std::vector<Transform> transforms;
  Functional functional;

  void validate(int n_outcomes) const;
};

// Convenience builders for the common shapes.
FeatureSpec make_mean_spec(int outcome);
FeatureSpec make_sd_spec(int outcome);
FeatureSpec make_correlation_spec(int outcome1, int outcome2);
FeatureSpec make_median_spec(int outcome, const std::vector<double>& grid);
FeatureSpec make_mean_difference_spec(int outcome, int z1, int z2);
FeatureSpec make_sd_ratio_spec(int outcome, int z1, int z2);

// Weighted moment estimates: lambda_hat(z, m) is the ratio-form estimate of
// the pseudo-population mean of transform m in group z. Each row lies in the
// convex hull of the observed transformed outcomes of its group.
struct GroupMoments {
  Eigen::MatrixXd lambda_hat;           // K x M
  Eigen::VectorXd weighted_group_mass;  // length K, strictly positive
};

// Per-subject transformed outcomes, n x M.
Eigen::MatrixXd evaluate_transforms(const Dataset& d, const FeatureSpec& f);

GroupMoments weighted_feature_mean(const WeightSet& w, const Dataset& d,
                                   const FeatureSpec& f);

// psi(lambda_hat(z)) for a per-group functional.
double apply_functional(const GroupMoments& g, const FeatureSpec& f, int z);

// Contrast of per-group values for the cross-group functional kinds.
double group_contrast(const GroupMoments& g, const FeatureSpec& f);

// Weighted empirical CDF of outcome l in group z at the given ascending grid.
Eigen::VectorXd weighted_cdf(const WeightSet& w, const Dataset& d, int outcome,
                             int z, const std::vector<double>& grid);

// Pseudo-population median over the default grid (sorted unique observed
// group values): the grid point whose CDF value is closest to 1/2, ties
// resolved toward the smaller point.
double weighted_median(const WeightSet& w, const Dataset& d, int outcome, int z);

}  // namespace flexor
