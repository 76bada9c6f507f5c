#include "flexor/uncertainty.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <cmath>

#include "flexor/parallel.hpp"
#include "flexor/rng.hpp"

namespace flexor {

namespace {

Eigen::VectorXd group_masses(const WeightSet& w, const Dataset& d) {
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(d.n_groups());
  for (int i = 0; i < d.n_subjects(); ++i) {
    mass[d.group()[i] - 1] += w.rho_tilde[i];
  }
  return mass;
}

// Tilt and weights from a probability matrix, replaying the floor the
// original WeightSet was built with.
Eigen::VectorXd weights_from_probs(const PseudoPopulationSpec& spec,
                                   const Eigen::MatrixXd& probs,
                                   const Dataset& d, double floor) {
  const int n = d.n_subjects();
  const int J = d.n_studies();
  const int K = d.n_groups();
  Eigen::VectorXd rho(n);
  for (int i = 0; i < n; ++i) {
    double eta = 0.0;
    switch (spec.tilt) {
      case TiltKind::IC:
        eta = 1.0;
        break;
      case TiltKind::IGO: {
        double denom = 0.0;
        for (int c = 0; c < J * K; ++c) {
          denom += 1.0 / std::max(probs(i, c), floor);
        }
        eta = 1.0 / denom;
        break;
      }
      case TiltKind::Flexor: {
        double denom = 0.0;
        for (int s = 0; s < J; ++s) {
          for (int z = 0; z < K; ++z) {
            denom += spec.gamma[s] * spec.gamma[s] * spec.theta[z] *
                     spec.theta[z] / std::max(probs(i, s * K + z), floor);
          }
        }
        eta = 1.0 / denom;
        break;
      }
      case TiltKind::FixedGroup: {
        for (int s = 0; s < J; ++s) {
          eta += probs(i, s * K + (spec.fixed_group - 1));
        }
        break;
      }
    }
    const int cell = d.cell_index(i);
    const double delta = std::max(probs(i, cell), floor);
    rho[i] = spec.gamma[d.study()[i] - 1] * spec.theta[d.group()[i] - 1] * eta /
             delta;
  }
  return rho;
}

}  // namespace

Eigen::MatrixXd sigma1_plugin(const WeightSet& w, const Dataset& d,
                              const FeatureSpec& f, const GroupMoments& g,
                              int z) {
  const Eigen::MatrixXd phi = evaluate_transforms(d, f);
  const int n = d.n_subjects();
  const int m = static_cast<int>(phi.cols());
  if (z < 1 || z > d.n_groups()) throw DimensionError("group index out of range");

  double mass = 0.0;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(m, m);
  const Eigen::VectorXd lambda = g.lambda_hat.row(z - 1).transpose();
  for (int i = 0; i < n; ++i) {
    if (d.group()[i] != z) continue;
    mass += w.rho_tilde[i];
    const Eigen::VectorXd centered = phi.row(i).transpose() - lambda;
    acc.noalias() += w.rho_tilde[i] * w.rho_tilde[i] * centered * centered.transpose();
  }
  if (mass <= 0.0) {
    throw DegenerateGroupError("group " + std::to_string(z) +
                               " has zero weighted mass");
  }
  return double(n) * acc / (mass * mass);
}

Eigen::MatrixXd sandwich_joint(const MpsModel& m, const WeightSet& w,
                               const Dataset& d, const FeatureSpec& f,
                               const std::vector<int>& groups,
                               const VarianceOptions& options) {
  if (!m.converged) throw NumericError("sandwich requires a converged model");
  const Eigen::MatrixXd phi = evaluate_transforms(d, f);
  const int n = d.n_subjects();
  const int n_mom = static_cast<int>(phi.cols());
  const int n_grp = static_cast<int>(groups.size());
  const int dim_lambda = n_grp * n_mom;

  // Moment targets at the solution.
  const GroupMoments gm = weighted_feature_mean(w, d, f);
  const Eigen::VectorXd mass = group_masses(w, d);

  if (options.treat_omega_fixed) {
    // Known coefficients: the adjustment vanishes and the blocks decouple.
    Eigen::MatrixXd joint = Eigen::MatrixXd::Zero(dim_lambda, dim_lambda);
    for (int a = 0; a < n_grp; ++a) {
      joint.block(a * n_mom, a * n_mom, n_mom, n_mom) =
          sigma1_plugin(w, d, f, gm, groups[a]);
    }
    return joint;
  }

  const Eigen::MatrixXd design = detail::mps_design(d);
  const int q = static_cast<int>(design.cols());
  const int c1 = static_cast<int>(m.omega.rows());
  const int dim_omega = c1 * q;
  const int dim = dim_omega + dim_lambda;

  // Meat: per-subject stacked estimating-function contributions.
  const Eigen::MatrixXd score_rows = detail::mps_score_rows(d, m.omega);
  Eigen::MatrixXd g_rows(n, dim);
  g_rows.leftCols(dim_omega) = score_rows;
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < n_grp; ++a) {
      const int z = groups[a];
      Eigen::RowVectorXd block = Eigen::RowVectorXd::Zero(n_mom);
      if (d.group()[i] == z) {
        block = w.rho_tilde[i] * (phi.row(i) - gm.lambda_hat.row(z - 1));
      }
      g_rows.row(i).segment(dim_omega + a * n_mom, n_mom) = block;
    }
  }
  const Eigen::MatrixXd meat = g_rows.transpose() * g_rows / double(n);

  // Bread: block lower triangular.
  Eigen::MatrixXd bread = Eigen::MatrixXd::Zero(dim, dim);
  bread.topLeftCorner(dim_omega, dim_omega) =
      -detail::mps_neg_hessian(d, m.omega, m.ridge) / double(n);
  for (int a = 0; a < n_grp; ++a) {
    bread.block(dim_omega + a * n_mom, dim_omega + a * n_mom, n_mom, n_mom) =
        -(mass[groups[a] - 1] / double(n)) * Eigen::MatrixXd::Identity(n_mom, n_mom);
  }

  // d(moments)/d(omega) by central differences; probabilities are rebuilt
  // from the perturbed linear predictors.
  const Eigen::MatrixXd eta0 = design * m.omega.transpose();
  auto stacked_moments = [&](const Eigen::MatrixXd& eta) {
    const Eigen::MatrixXd probs = detail::softmax_probs(eta);
    const Eigen::VectorXd rho =
        weights_from_probs(w.spec, probs, d, w.prob_floor);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(dim_lambda);
    for (int i = 0; i < n; ++i) {
      for (int a = 0; a < n_grp; ++a) {
        if (d.group()[i] != groups[a]) continue;
        out.segment(a * n_mom, n_mom) +=
            rho[i] * (phi.row(i) - gm.lambda_hat.row(groups[a] - 1)).transpose();
      }
    }
    return (out / double(n)).eval();
  };

  Eigen::MatrixXd eta_pert = eta0;
  for (int c = 0; c < c1; ++c) {
    for (int t = 0; t < q; ++t) {
      const double h = options.fd_step * std::max(1.0, std::abs(m.omega(c, t)));
      eta_pert.col(c) = eta0.col(c) + h * design.col(t);
      const Eigen::VectorXd plus = stacked_moments(eta_pert);
      eta_pert.col(c) = eta0.col(c) - h * design.col(t);
      const Eigen::VectorXd minus = stacked_moments(eta_pert);
      eta_pert.col(c) = eta0.col(c);
      bread.block(dim_omega, c * q + t, dim_lambda, 1) =
          (plus - minus) / (2.0 * h);
    }
  }

  Eigen::FullPivLU<Eigen::MatrixXd> lu(bread);
  if (!lu.isInvertible()) {
    throw NumericError(
        "sandwich bread matrix is singular; use bootstrap intervals instead");
  }
  const Eigen::MatrixXd half = lu.solve(meat);
  Eigen::MatrixXd v = lu.solve(half.transpose()).transpose();
  Eigen::MatrixXd joint =
      v.block(dim_omega, dim_omega, dim_lambda, dim_lambda);
  joint = 0.5 * (joint + joint.transpose()).eval();
  return joint;
}

Eigen::MatrixXd sigma2_sandwich(const MpsModel& m, const WeightSet& w,
                                const Dataset& d, const FeatureSpec& f, int z,
                                const VarianceOptions& options) {
  return sandwich_joint(m, w, d, f, {z}, options);
}

Eigen::VectorXd functional_gradient(const FeatureSpec& f,
                                    const Eigen::VectorXd& lambda) {
  using K = Functional::Kind;
  const K kind = is_contrast(f.functional.kind) ? f.functional.inner
                                                : f.functional.kind;
  const int index = is_contrast(f.functional.kind) ? f.functional.inner_index
                                                   : f.functional.index;
  const int m = static_cast<int>(lambda.size());
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(m);
  switch (kind) {
    case K::Identity:
    case K::CdfAt:
      grad[index - 1] = 1.0;
      break;
    case K::Mean:
      grad[0] = 1.0;
      break;
    case K::SD: {
      const double v = lambda[1] - lambda[0] * lambda[0];
      if (v <= 0.0) throw NumericError("SD gradient undefined at zero variance");
      const double sd = std::sqrt(v);
      grad[0] = -lambda[0] / sd;
      grad[1] = 0.5 / sd;
      break;
    }
    case K::Covariance:
      grad[0] = -lambda[1];
      grad[1] = -lambda[0];
      grad[2] = 1.0;
      break;
    case K::Correlation: {
      const double cov = lambda[2] - lambda[0] * lambda[1];
      const double v1 = lambda[3] - lambda[0] * lambda[0];
      const double v2 = lambda[4] - lambda[1] * lambda[1];
      if (v1 <= 0.0 || v2 <= 0.0) {
        throw NumericError("correlation gradient undefined at zero variance");
      }
      const double s1 = std::sqrt(v1), s2 = std::sqrt(v2);
      grad[0] = -lambda[1] / (s1 * s2) + cov * lambda[0] / (v1 * s1 * s2);
      grad[1] = -lambda[0] / (s1 * s2) + cov * lambda[1] / (s1 * v2 * s2);
      grad[2] = 1.0 / (s1 * s2);
      grad[3] = -cov / (2.0 * v1 * s1 * s2);
      grad[4] = -cov / (2.0 * s1 * v2 * s2);
      break;
    }
    case K::MedianFromCdfGrid:
      throw NumericError(
          "median functional is not differentiable; use bootstrap intervals");
    default:
      throw SchemaError("no per-group gradient for a contrast functional");
  }
  if (grad.norm() < 1e-14) {
    throw NumericError("functional gradient vanishes at the estimate");
  }
  return grad;
}

double delta_method_variance(const Eigen::MatrixXd& sigma,
                             const GroupMoments& g, const FeatureSpec& f,
                             int z) {
  const Eigen::VectorXd grad =
      functional_gradient(f, g.lambda_hat.row(z - 1).transpose());
  return grad.dot(sigma * grad);
}

double contrast_delta_variance(const Eigen::MatrixXd& joint_sigma,
                               const GroupMoments& g, const FeatureSpec& f,
                               const std::vector<int>& groups) {
  using K = Functional::Kind;
  const Functional& fn = f.functional;
  if (!is_contrast(fn.kind)) {
    throw SchemaError("contrast variance requires a contrast functional");
  }
  const int n_mom = static_cast<int>(g.lambda_hat.cols());
  auto position = [&](int z) {
    for (std::size_t a = 0; a < groups.size(); ++a) {
      if (groups[a] == z) return static_cast<int>(a);
    }
    throw DimensionError("group missing from joint covariance");
  };
  auto inner_value = [&](int z) { return apply_functional(g, f, z); };

  // Outer partial derivatives with respect to the per-group inner values.
  std::vector<std::pair<int, double>> outer;
  switch (fn.kind) {
    case K::Difference:
      outer = {{fn.z1, 1.0}, {fn.z2, -1.0}};
      break;
    case K::Ratio: {
      const double s2 = inner_value(fn.z2);
      if (std::abs(s2) < 1e-300) throw NumericError("ratio undefined");
      outer = {{fn.z1, 1.0 / s2}, {fn.z2, -inner_value(fn.z1) / (s2 * s2)}};
      break;
    }
    case K::LinearCombination:
      for (int z = 1; z <= g.lambda_hat.rows(); ++z) {
        outer.emplace_back(z, fn.coeffs[z - 1]);
      }
      break;
    case K::MeanDiffRatio: {
      const double s1 = inner_value(fn.z1);
      const double s2 = inner_value(fn.z2);
      const double s3 = inner_value(fn.z3);
      const double denom = s2 - s1;
      if (std::abs(denom) < 1e-300) throw NumericError("ratio undefined");
      outer = {{fn.z1, (s3 - s2) / (denom * denom)},
               {fn.z2, -(s3 - s1) / (denom * denom)},
               {fn.z3, 1.0 / denom}};
      break;
    }
    default:
      break;
  }

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(joint_sigma.rows());
  for (const auto& [z, coeff] : outer) {
    const Eigen::VectorXd inner_grad =
        functional_gradient(f, g.lambda_hat.row(z - 1).transpose());
    grad.segment(position(z) * n_mom, n_mom) += coeff * inner_grad;
  }
  if (grad.norm() < 1e-14) {
    throw NumericError("contrast gradient vanishes at the estimate");
  }
  return grad.dot(joint_sigma * grad);
}

IntervalReport simultaneous_ci(const GroupMoments& g,
                               const std::vector<Eigen::MatrixXd>& sigmas,
                               const Eigen::VectorXd& a, int m, double level,
                               int n_subjects) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("level must be in (0,1)");
  const int K = static_cast<int>(g.lambda_hat.rows());
  if (a.size() != K || static_cast<int>(sigmas.size()) != K) {
    throw DimensionError("one coefficient and one variance matrix per group");
  }
  boost::math::chi_squared chi2(K);
  const double quantile = boost::math::quantile(chi2, level);
  double point = 0.0, var_sum = 0.0;
  for (int z = 0; z < K; ++z) {
    point += a[z] * g.lambda_hat(z, m - 1);
    var_sum += a[z] * a[z] * sigmas[z](m - 1, m - 1);
  }
  const double half = std::sqrt(quantile * var_sum / double(n_subjects));
  IntervalReport r;
  r.point = point;
  r.lower = point - half;
  r.upper = point + half;
  r.level = level;
  r.method = IntervalReport::Method::SimultaneousScheffe;
  return r;
}

IntervalReport asymptotic_ci(double point, double se, double level) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("level must be in (0,1)");
  boost::math::normal gauss;
  const double zq = boost::math::quantile(gauss, 0.5 + level / 2.0);
  IntervalReport r;
  r.point = point;
  r.lower = point - zq * se;
  r.upper = point + zq * se;
  r.level = level;
  r.method = IntervalReport::Method::Asymptotic;
  return r;
}

namespace {

double percentile(std::vector<double> sorted, double p) {
  const std::size_t n = sorted.size();
  const double h = (static_cast<double>(n) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

BootstrapResult bootstrap_ci(const Dataset& d, const PipelineFn& pipeline,
                             const BootstrapOptions& options) {
  if (options.B < 2) throw ConfigError("bootstrap needs B >= 2");
  if (!(options.level > 0.0 && options.level < 1.0)) {
    throw ConfigError("level must be in (0,1)");
  }

  BootstrapResult result;
  result.point = pipeline(d);
  const int n_est = static_cast<int>(result.point.size());
  result.replicates.resize(options.B, n_est);

  // Per-cell member lists in lexicographic (study, group) order.
  const int n_cells = d.n_studies() * d.n_groups();
  std::vector<std::vector<int>> members(n_cells);
  for (int i = 0; i < d.n_subjects(); ++i) {
    members[d.cell_index(i)].push_back(i);
  }

  std::vector<int> failures(options.B, 0);
  auto run_replicate = [&](std::size_t rep) {
    for (int attempt = 0;; ++attempt) {
      if (attempt > options.max_retries) {
        throw BootstrapError("bootstrap replicate " + std::to_string(rep) +
                             " failed after " +
                             std::to_string(options.max_retries) + " redraws");
      }
      Rng rng = make_rng(options.seed, rep, static_cast<std::uint64_t>(attempt));
      std::vector<int> study, group;
      study.reserve(d.n_subjects());
      group.reserve(d.n_subjects());
      Eigen::MatrixXd covariates(d.n_subjects(), d.n_covariates());
      Eigen::MatrixXd outcomes(d.n_subjects(), d.n_outcomes());
      int row = 0;
      for (const auto& cell : members) {
        std::uniform_int_distribution<int> pick(0, static_cast<int>(cell.size()) - 1);
        for (std::size_t k = 0; k < cell.size(); ++k) {
          const int i = cell[pick(rng)];
          study.push_back(d.study()[i]);
          group.push_back(d.group()[i]);
          covariates.row(row) = d.covariates().row(i);
          outcomes.row(row) = d.outcomes().row(i);
          ++row;
        }
      }
      try {
        const Dataset replicate = Dataset::from_components(
            std::move(study), std::move(group), std::move(covariates),
            std::move(outcomes), d.covariate_names(), d.outcome_names());
        const Eigen::VectorXd est = pipeline(replicate);
        if (est.size() != n_est || !est.allFinite()) {
          throw NumericError("replicate produced invalid estimates");
        }
        result.replicates.row(static_cast<Eigen::Index>(rep)) = est.transpose();
        return;
      } catch (const std::exception&) {
        ++failures[rep];
      }
    }
  };

  parallel_for(static_cast<std::size_t>(options.B), options.threads, run_replicate);

  for (int f : failures) result.n_failed_draws += f;
  if (result.n_failed_draws > options.max_failure_rate * options.B) {
    throw BootstrapError("bootstrap unstable: " +
                         std::to_string(result.n_failed_draws) +
                         " failed draws out of " + std::to_string(options.B) +
                         " replicates");
  }

  const double alpha = 1.0 - options.level;
  for (int e = 0; e < n_est; ++e) {
    std::vector<double> column(options.B);
    for (int b = 0; b < options.B; ++b) column[b] = result.replicates(b, e);
    std::sort(column.begin(), column.end());
    IntervalReport r;
    r.point = result.point[e];
    r.lower = percentile(column, alpha / 2.0);
    r.upper = percentile(std::move(column), 1.0 - alpha / 2.0);
    r.level = options.level;
    r.method = IntervalReport::Method::BootstrapPercentile;
    r.n_bootstrap = options.B;
    result.intervals.push_back(r);
  }
  return result;
}

}  // namespace flexor
