#include "flexor/analysis.hpp"

#include <cmath>

#include "flexor/rng.hpp"

namespace flexor {

namespace {

Eigen::VectorXd resolve_shares(const SharePolicy& policy, int len,
                               const char* name) {
  switch (policy.kind) {
    case SharePolicy::Kind::Uniform:
      return Eigen::VectorXd::Constant(len, 1.0 / len);
    case SharePolicy::Kind::Fixed:
      if (static_cast<int>(policy.values.size()) != len) {
        throw ConfigError(std::string(name) + " values have wrong length");
      }
      return policy.values;
    case SharePolicy::Kind::Free:
      throw ConfigError(std::string(name) +
                        " cannot be free for a non-optimized tilt");
  }
  throw ConfigError("unknown share policy");
}

SimplexConstraint to_constraint(const SharePolicy& policy, int len) {
  if (policy.kind == SharePolicy::Kind::Free) return SimplexConstraint::free();
  if (policy.kind == SharePolicy::Kind::Uniform) {
    return SimplexConstraint::fixed(Eigen::VectorXd::Constant(len, 1.0 / len));
  }
  return SimplexConstraint::fixed(policy.values);
}

bool is_dynamic_median(const FeatureSpec& f) {
  return f.functional.kind == Functional::Kind::MedianFromCdfGrid &&
         f.transforms.empty();
}

// Rows are enumerated per method, then per estimand, then per group (or one
// contrast row). The same enumeration drives points, uncertainty and the
// bootstrap, so indexes always line up.
template <typename Fn>
void for_each_row(const AnalysisPlan& plan, Fn&& fn) {
  for (std::size_t m = 0; m < plan.methods.size(); ++m) {
    for (std::size_t e = 0; e < plan.estimands.size(); ++e) {
      const EstimandSpec& est = plan.estimands[e];
      if (is_contrast(est.feature.functional.kind)) {
        fn(m, e, 0);
      } else {
        for (int z : est.groups) fn(m, e, z);
      }
    }
  }
}

double estimand_point(const WeightSet& w, const Dataset& d,
                      const EstimandSpec& est, int group) {
  if (is_dynamic_median(est.feature)) {
    return weighted_median(w, d, est.feature.functional.index, group);
  }
  const GroupMoments g = weighted_feature_mean(w, d, est.feature);
  if (is_contrast(est.feature.functional.kind)) {
    return group_contrast(g, est.feature);
  }
  return apply_functional(g, est.feature, group);
}

std::vector<int> contrast_groups(const Functional& fn, int n_groups) {
  using K = Functional::Kind;
  switch (fn.kind) {
    case K::Difference:
    case K::Ratio:
      return {fn.z1, fn.z2};
    case K::MeanDiffRatio:
      return {fn.z1, fn.z2, fn.z3};
    case K::LinearCombination: {
      std::vector<int> all(n_groups);
      for (int z = 1; z <= n_groups; ++z) all[z - 1] = z;
      return all;
    }
    default:
      return {};
  }
}

}  // namespace

MpsModel fit_mps_with_fallback(const Dataset& d, FitOptions options,
                               std::vector<std::string>* warnings) {
  try {
    return fit_mps(d, options);
  } catch (const SeparationError&) {
    if (options.ridge > 0.0) throw;
    options.ridge = 1e-6;
    if (warnings != nullptr) {
      warnings->push_back(
          "cell-membership fit was separated; refit with ridge 1e-6");
    }
    return fit_mps(d, options);
  }
}

MethodAnalysis resolve_method(const MethodSpec& method,
                              const MpsProbabilities& probs, const Dataset& d,
                              const TiltOptions& tilt, std::uint64_t seed) {
  MethodAnalysis out;
  out.input = method;

  const int J = d.n_studies();
  const int K = d.n_groups();
  const bool optimize =
      method.tilt == TiltKind::Flexor &&
      ((method.gamma.kind == SharePolicy::Kind::Free && J > 1) ||
       (method.theta.kind == SharePolicy::Kind::Free && K > 1));

  if (optimize) {
    ConstraintSet constraints;
    constraints.gamma = to_constraint(method.gamma, J);
    constraints.theta = to_constraint(method.theta, K);
    constraints.floor = method.floor;
    FlexorOptions fopts = method.flexor;
    fopts.prob_floor = tilt.prob_floor;
    if (fopts.seed == 0) fopts.seed = derive_seed(seed, 0x0F1E, 0);
    out.flexor = optimize_flexor(probs, d, constraints, fopts);
    out.spec = out.flexor->spec;
    out.weights = out.flexor->weights;
  } else {
    PseudoPopulationSpec spec;
    spec.tilt = method.tilt;
    spec.gamma = resolve_shares(method.gamma, J, "gamma");
    spec.theta = resolve_shares(method.theta, K, "theta");
    spec.fixed_group = method.fixed_group;
    out.spec = spec;
    out.weights = compute_weights(spec, probs, d, tilt);
  }
  out.balance = balance_diagnostics(out.weights, d);
  return out;
}

Eigen::VectorXd compute_estimates(const Dataset& d, const AnalysisPlan& plan) {
  const MpsModel model = fit_mps_with_fallback(d, plan.mps, nullptr);
  const MpsProbabilities probs = predict_mps(model, d);

  std::vector<WeightSet> weights;
  weights.reserve(plan.methods.size());
  for (std::size_t m = 0; m < plan.methods.size(); ++m) {
    weights.push_back(
        resolve_method(plan.methods[m], probs, d, plan.tilt,
                       derive_seed(plan.seed, static_cast<std::uint64_t>(m)))
            .weights);
  }

  std::vector<double> values;
  for_each_row(plan, [&](std::size_t m, std::size_t e, int z) {
    values.push_back(estimand_point(weights[m], d, plan.estimands[e], z));
  });
  return Eigen::Map<Eigen::VectorXd>(values.data(),
                                     static_cast<Eigen::Index>(values.size()));
}

AnalysisResult run_analysis(const Dataset& d, const AnalysisPlan& plan) {
  AnalysisResult result;
  result.warnings = d.warnings();
  result.mps = fit_mps_with_fallback(d, plan.mps, &result.warnings);
  result.cells = cell_table(d);
  const MpsProbabilities probs = predict_mps(result.mps, d);

  for (std::size_t m = 0; m < plan.methods.size(); ++m) {
    result.methods.push_back(
        resolve_method(plan.methods[m], probs, d, plan.tilt,
                       derive_seed(plan.seed, static_cast<std::uint64_t>(m))));
    for (const auto& warning : result.methods.back().weights.warnings) {
      result.warnings.push_back(plan.methods[m].name + ": " + warning);
    }
  }

  for (const auto& est : plan.estimands) {
    if (!is_dynamic_median(est.feature)) est.feature.validate(d.n_outcomes());
  }

  // Point estimates.
  for_each_row(plan, [&](std::size_t m, std::size_t e, int z) {
    EstimateRow row;
    row.estimand = plan.estimands[e].name;
    row.method = plan.methods[m].name;
    row.group = z;
    row.point = estimand_point(result.methods[m].weights, d, plan.estimands[e], z);
    result.estimates.push_back(row);
  });

  // Asymptotic uncertainty via the stacked sandwich and the delta method.
  if (plan.asymptotic_se) {
    std::size_t row_idx = 0;
    for (std::size_t m = 0; m < plan.methods.size(); ++m) {
      const MethodAnalysis& method = result.methods[m];
      for (std::size_t e = 0; e < plan.estimands.size(); ++e) {
        const EstimandSpec& est = plan.estimands[e];
        const bool contrast = is_contrast(est.feature.functional.kind);
        const std::size_t n_rows = contrast ? 1 : est.groups.size();
        if (is_dynamic_median(est.feature)) {  // bootstrap-only estimand
          row_idx += n_rows;
          continue;
        }
        try {
          const GroupMoments g = weighted_feature_mean(method.weights, d, est.feature);
          const std::vector<int> groups =
              contrast ? contrast_groups(est.feature.functional, d.n_groups())
                       : est.groups;
          const Eigen::MatrixXd joint = sandwich_joint(
              result.mps, method.weights, d, est.feature, groups);
          const int n_mom = static_cast<int>(g.lambda_hat.cols());
          for (std::size_t r = 0; r < n_rows; ++r) {
            EstimateRow& row = result.estimates[row_idx + r];
            double tau2;
            if (contrast) {
              tau2 = contrast_delta_variance(joint, g, est.feature, groups);
            } else {
              int pos = 0;
              while (groups[pos] != est.groups[r]) ++pos;
              const Eigen::MatrixXd sigma =
                  joint.block(pos * n_mom, pos * n_mom, n_mom, n_mom);
              tau2 = delta_method_variance(sigma, g, est.feature, est.groups[r]);
            }
            const double se = std::sqrt(tau2 / double(d.n_subjects()));
            row.se_asymptotic = se;
            row.ci_asymptotic = asymptotic_ci(row.point, se, plan.level);
          }
        } catch (const Error& err) {
          result.warnings.push_back("asymptotic SE unavailable for '" + est.name +
                                    "' (" + plan.methods[m].name + "): " +
                                    err.what());
        }
        row_idx += n_rows;
      }
    }
  }

  // Percentile bootstrap over the whole pipeline; the MPS refit is shared
  // across methods within a replicate.
  if (plan.bootstrap_B > 0) {
    AnalysisPlan replicate_plan = plan;
    replicate_plan.bootstrap_B = 0;
    replicate_plan.asymptotic_se = false;
    replicate_plan.threads = 1;
    if (!plan.reoptimize_flexor) {
      for (std::size_t m = 0; m < plan.methods.size(); ++m) {
        if (plan.methods[m].tilt == TiltKind::Flexor) {
          replicate_plan.methods[m].gamma =
              SharePolicy::fixed(result.methods[m].spec.gamma);
          replicate_plan.methods[m].theta =
              SharePolicy::fixed(result.methods[m].spec.theta);
        }
      }
    }
    BootstrapOptions bopts;
    bopts.B = plan.bootstrap_B;
    bopts.seed = derive_seed(plan.seed, 0xB007);
    bopts.level = plan.level;
    bopts.threads = plan.threads;
    const BootstrapResult boot = bootstrap_ci(
        d,
        [&](const Dataset& rep) { return compute_estimates(rep, replicate_plan); },
        bopts);
    for (std::size_t r = 0; r < result.estimates.size(); ++r) {
      result.estimates[r].ci_bootstrap = boot.intervals[r];
    }
  }

  // Correlation pairs whose bootstrap interval excludes zero.
  for (const auto& row : result.estimates) {
    if (!row.ci_bootstrap.has_value() || row.group == 0) continue;
    const auto& est_list = plan.estimands;
    auto it = std::find_if(est_list.begin(), est_list.end(),
                           [&](const EstimandSpec& e) { return e.name == row.estimand; });
    if (it == est_list.end() ||
        it->feature.functional.kind != Functional::Kind::Correlation) {
      continue;
    }
    if (row.ci_bootstrap->lower > 0.0 || row.ci_bootstrap->upper < 0.0) {
      CorrelationFinding finding;
      finding.method = row.method;
      finding.group = row.group;
      finding.outcome1 = it->feature.transforms[0].l1;
      finding.outcome2 = it->feature.transforms[1].l1;
      finding.ci = *row.ci_bootstrap;
      result.significant_correlations.push_back(finding);
    }
  }
  return result;
}

std::vector<EstimandSpec> default_estimand_battery(const Dataset& d) {
  std::vector<EstimandSpec> out;
  const int K = d.n_groups();
  std::vector<int> all_groups(K);
  for (int z = 1; z <= K; ++z) all_groups[z - 1] = z;

  for (int l = 1; l <= d.n_outcomes(); ++l) {
    const std::string& y = d.outcome_names()[l - 1];
    out.push_back({y + ".mean", make_mean_spec(l), all_groups});
    out.push_back({y + ".sd", make_sd_spec(l), all_groups});

    FeatureSpec median;
    median.functional.kind = Functional::Kind::MedianFromCdfGrid;
    median.functional.index = l;
    out.push_back({y + ".median", median, all_groups});

    for (int z = 2; z <= K; ++z) {
      const std::string suffix = K > 2 ? "_1_" + std::to_string(z) : "";
      out.push_back({y + ".mean_diff" + suffix,
                     make_mean_difference_spec(l, 1, z),
                     {}});
      out.push_back({y + ".sd_ratio" + suffix, make_sd_ratio_spec(l, 1, z), {}});
    }
  }
  for (int l1 = 1; l1 <= d.n_outcomes(); ++l1) {
    for (int l2 = l1 + 1; l2 <= d.n_outcomes(); ++l2) {
      out.push_back({d.outcome_names()[l1 - 1] + "." + d.outcome_names()[l2 - 1] +
                         ".corr",
                     make_correlation_spec(l1, l2), all_groups});
    }
  }
  return out;
}

}  // namespace flexor
