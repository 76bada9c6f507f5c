#include "flexor/estimation.hpp"

#include <algorithm>
#include <cmath>

namespace flexor {

bool is_contrast(Functional::Kind k) {
  using K = Functional::Kind;
  return k == K::Difference || k == K::Ratio || k == K::LinearCombination ||
         k == K::MeanDiffRatio;
}

namespace {

int functional_arity(const Functional& f, int n_transforms) {
  using K = Functional::Kind;
  switch (f.kind) {
    case K::Mean: return 1;
    case K::SD: return 2;
    case K::Covariance: return 3;
    case K::Correlation: return 5;
    case K::Identity:
    case K::CdfAt:
    case K::MedianFromCdfGrid:
      return n_transforms;  // any M; Identity/CdfAt additionally need index <= M
    default:
      return n_transforms;
  }
}

}  // namespace

void FeatureSpec::validate(int n_outcomes) const {
  if (transforms.empty()) throw SchemaError("feature has no transforms");
  for (const auto& t : transforms) {
    if (t.l1 < 1 || t.l1 > n_outcomes ||
        (t.kind == Transform::Kind::Product && (t.l2 < 1 || t.l2 > n_outcomes))) {
      throw SchemaError("transform outcome index out of range");
    }
  }
  const int m = static_cast<int>(transforms.size());
  using K = Functional::Kind;
  const K kind = is_contrast(functional.kind) ? functional.inner : functional.kind;
  const int arity = functional_arity({.kind = kind}, m);
  if (m != arity) {
    throw SchemaError("functional arity does not match the transform count");
  }
  if ((kind == K::Identity || kind == K::CdfAt)) {
    const int idx = is_contrast(functional.kind) ? functional.inner_index
                                                 : functional.index;
    if (idx < 1 || idx > m) throw SchemaError("functional index out of range");
  }
  if (kind == K::MedianFromCdfGrid) {
    for (const auto& t : transforms) {
      if (t.kind != Transform::Kind::IndicatorLE || t.l1 != transforms[0].l1) {
        throw SchemaError(
            "median functional requires indicator transforms of one outcome");
      }
    }
  }
}

Eigen::MatrixXd evaluate_transforms(const Dataset& d, const FeatureSpec& f) {
  f.validate(d.n_outcomes());
  const int n = d.n_subjects();
  const int m = static_cast<int>(f.transforms.size());
  Eigen::MatrixXd phi(n, m);
  for (int j = 0; j < m; ++j) {
    const Transform& t = f.transforms[j];
    const auto y1 = d.outcomes().col(t.l1 - 1).array();
    switch (t.kind) {
      case Transform::Kind::Component:
        phi.col(j) = y1;
        break;
      case Transform::Kind::Product:
        phi.col(j) = y1 * d.outcomes().col(t.l2 - 1).array();
        break;
      case Transform::Kind::Power:
        phi.col(j) = y1.pow(t.power);
        break;
      case Transform::Kind::IndicatorLE:
        phi.col(j) = (y1 <= t.threshold).cast<double>();
        break;
    }
  }
  return phi;
}

GroupMoments weighted_feature_mean(const WeightSet& w, const Dataset& d,
                                   const FeatureSpec& f) {
  const Eigen::MatrixXd phi = evaluate_transforms(d, f);
  const int n = d.n_subjects();
  const int K = d.n_groups();
  const int m = static_cast<int>(phi.cols());
  if (w.rho_tilde.size() != n) {
    throw DimensionError("weights and dataset sizes do not match");
  }

  GroupMoments g;
  g.lambda_hat = Eigen::MatrixXd::Zero(K, m);
  g.weighted_group_mass = Eigen::VectorXd::Zero(K);
  for (int i = 0; i < n; ++i) {
    const int z = d.group()[i] - 1;
    g.weighted_group_mass[z] += w.rho_tilde[i];
    g.lambda_hat.row(z) += w.rho_tilde[i] * phi.row(i);
  }
  for (int z = 0; z < K; ++z) {
    if (g.weighted_group_mass[z] <= 0.0) {
      throw DegenerateGroupError("group " + std::to_string(z + 1) +
                                 " has zero weighted mass");
    }
    g.lambda_hat.row(z) /= g.weighted_group_mass[z];
  }
  return g;
}

double apply_functional(const GroupMoments& g, const FeatureSpec& f, int z) {
  using K = Functional::Kind;
  if (z < 1 || z > g.lambda_hat.rows()) {
    throw DimensionError("group index out of range");
  }
  const Eigen::VectorXd t = g.lambda_hat.row(z - 1).transpose();
  const K kind = is_contrast(f.functional.kind) ? f.functional.inner
                                                : f.functional.kind;
  const int index = is_contrast(f.functional.kind) ? f.functional.inner_index
                                                   : f.functional.index;
  switch (kind) {
    case K::Identity:
    case K::CdfAt:
      return t[index - 1];
    case K::Mean:
      return t[0];
    case K::SD: {
      double v = t[1] - t[0] * t[0];
      if (v < -1e-12) throw NumericError("negative variance estimate");
      return std::sqrt(std::max(v, 0.0));
    }
    case K::Covariance:
      return t[2] - t[0] * t[1];
    case K::Correlation: {
      const double cov = t[2] - t[0] * t[1];
      const double v1 = std::max(t[3] - t[0] * t[0], 0.0);
      const double v2 = std::max(t[4] - t[1] * t[1], 0.0);
      const double sd1 = std::sqrt(v1);
      const double sd2 = std::sqrt(v2);
      if (sd1 < 1e-12 || sd2 < 1e-12) {
        throw NumericError("correlation undefined: a standard deviation is ~0");
      }
      return cov / (sd1 * sd2);
    }
    case K::MedianFromCdfGrid: {
      int best = 0;
      double best_diff = std::abs(t[0] - 0.5);
      for (int m = 1; m < t.size(); ++m) {
        const double diff = std::abs(t[m] - 0.5);
        if (diff < best_diff) {  // ties keep the smaller grid point
          best = m;
          best_diff = diff;
        }
      }
      return f.transforms[best].threshold;
    }
    default:
      throw SchemaError("contrast functional applied to a single group");
  }
}

double group_contrast(const GroupMoments& g, const FeatureSpec& f) {
  using K = Functional::Kind;
  const Functional& fn = f.functional;
  if (!is_contrast(fn.kind)) {
    throw SchemaError("group_contrast requires a contrast functional");
  }
  auto value = [&](int z) { return apply_functional(g, f, z); };
  switch (fn.kind) {
    case K::Difference:
      return value(fn.z1) - value(fn.z2);
    case K::Ratio: {
      const double denom = value(fn.z2);
      if (std::abs(denom) < 1e-300) {
        throw NumericError("ratio undefined: zero denominator");
      }
      return value(fn.z1) / denom;
    }
    case K::LinearCombination: {
      if (fn.coeffs.size() != g.lambda_hat.rows()) {
        throw DimensionError("linear combination needs one coefficient per group");
      }
      double acc = 0.0;
      for (int z = 1; z <= g.lambda_hat.rows(); ++z) {
        acc += fn.coeffs[z - 1] * value(z);
      }
      return acc;
    }
    case K::MeanDiffRatio: {
      const double denom = value(fn.z2) - value(fn.z1);
      if (std::abs(denom) < 1e-300) {
        throw NumericError("ratio undefined: zero denominator");
      }
      return (value(fn.z3) - value(fn.z1)) / denom;
    }
    default:
      return 0.0;  // unreachable
  }
}

Eigen::VectorXd weighted_cdf(const WeightSet& w, const Dataset& d, int outcome,
                             int z, const std::vector<double>& grid) {
  if (outcome < 1 || outcome > d.n_outcomes()) {
    throw DimensionError("outcome index out of range");
  }
  if (!std::is_sorted(grid.begin(), grid.end())) {
    throw SchemaError("grid must be sorted ascending");
  }
  double mass = 0.0;
  std::vector<std::pair<double, double>> values;  // (y, weight) in group z
  for (int i = 0; i < d.n_subjects(); ++i) {
    if (d.group()[i] != z) continue;
    mass += w.rho_tilde[i];
    values.emplace_back(d.outcomes()(i, outcome - 1), w.rho_tilde[i]);
  }
  if (mass <= 0.0) {
    throw DegenerateGroupError("group " + std::to_string(z) +
                               " has zero weighted mass");
  }
  std::sort(values.begin(), values.end());

  Eigen::VectorXd cdf(static_cast<Eigen::Index>(grid.size()));
  double acc = 0.0;
  std::size_t next = 0;
  for (std::size_t m = 0; m < grid.size(); ++m) {
    while (next < values.size() && values[next].first <= grid[m]) {
      acc += values[next].second;
      ++next;
    }
    cdf[static_cast<Eigen::Index>(m)] = acc / mass;
  }
  return cdf;
}

namespace {

std::vector<double> default_grid(const Dataset& d, int outcome, int z) {
  std::vector<double> grid;
  for (int i = 0; i < d.n_subjects(); ++i) {
    if (d.group()[i] == z) grid.push_back(d.outcomes()(i, outcome - 1));
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

}  // namespace

double weighted_median(const WeightSet& w, const Dataset& d, int outcome, int z) {
  const std::vector<double> grid = default_grid(d, outcome, z);
  const Eigen::VectorXd cdf = weighted_cdf(w, d, outcome, z, grid);
  int best = 0;
  double best_diff = std::abs(cdf[0] - 0.5);
  for (int m = 1; m < cdf.size(); ++m) {
    const double diff = std::abs(cdf[m] - 0.5);
    if (diff < best_diff) {
      best = m;
      best_diff = diff;
    }
  }
  return grid[static_cast<std::size_t>(best)];
}

FeatureSpec make_mean_spec(int outcome) {
  FeatureSpec f;
  f.transforms = {{.kind = Transform::Kind::Component, .l1 = outcome}};
  f.functional.kind = Functional::Kind::Mean;
  return f;
}

FeatureSpec make_sd_spec(int outcome) {
  FeatureSpec f;
  f.transforms = {{.kind = Transform::Kind::Component, .l1 = outcome},
                  {.kind = Transform::Kind::Power, .l1 = outcome, .power = 2.0}};
  f.functional.kind = Functional::Kind::SD;
  return f;
}

FeatureSpec make_correlation_spec(int outcome1, int outcome2) {
  FeatureSpec f;
  f.transforms = {
      {.kind = Transform::Kind::Component, .l1 = outcome1},
      {.kind = Transform::Kind::Component, .l1 = outcome2},
      {.kind = Transform::Kind::Product, .l1 = outcome1, .l2 = outcome2},
      {.kind = Transform::Kind::Power, .l1 = outcome1, .power = 2.0},
      {.kind = Transform::Kind::Power, .l1 = outcome2, .power = 2.0}};
  f.functional.kind = Functional::Kind::Correlation;
  return f;
}

FeatureSpec make_median_spec(int outcome, const std::vector<double>& grid) {
  FeatureSpec f;
  for (double y : grid) {
    f.transforms.push_back(
        {.kind = Transform::Kind::IndicatorLE, .l1 = outcome, .threshold = y});
  }
  f.functional.kind = Functional::Kind::MedianFromCdfGrid;
  return f;
}

FeatureSpec make_mean_difference_spec(int outcome, int z1, int z2) {
  FeatureSpec f = make_mean_spec(outcome);
  f.functional.kind = Functional::Kind::Difference;
  f.functional.z1 = z1;
  f.functional.z2 = z2;
  f.functional.inner = Functional::Kind::Mean;
  return f;
}

FeatureSpec make_sd_ratio_spec(int outcome, int z1, int z2) {
  FeatureSpec f = make_sd_spec(outcome);
  f.functional.kind = Functional::Kind::Ratio;
  f.functional.z1 = z1;
  f.functional.z2 = z2;
  f.functional.inner = Functional::Kind::SD;
  return f;
}

}  // namespace flexor
