#include "flexor/weights.hpp"

#include <cmath>
#include <sstream>

#include "csv.hpp"

namespace flexor {

std::string tilt_name(TiltKind t) {
  switch (t) {
    case TiltKind::IC: return "ic";
    case TiltKind::IGO: return "igo";
    case TiltKind::Flexor: return "flexor";
    case TiltKind::FixedGroup: return "fixed_group";
  }
  return "?";
}

namespace {

void check_simplex(const Eigen::VectorXd& v, int len, const char* name) {
  if (static_cast<int>(v.size()) != len) {
    throw DimensionError(std::string(name) + " has wrong length");
  }
  if (!(v.array() > 0.0).all()) {
    throw NumericError(std::string(name) + " must have strictly positive entries");
  }
  if (std::abs(v.sum() - 1.0) > 1e-12 * len) {
    throw NumericError(std::string(name) + " must sum to 1");
  }
}

}  // namespace

void PseudoPopulationSpec::validate(int n_studies, int n_groups) const {
  check_simplex(gamma, n_studies, "gamma");
  check_simplex(theta, n_groups, "theta");
  if (tilt == TiltKind::FixedGroup &&
      (fixed_group < 1 || fixed_group > n_groups)) {
    throw DimensionError("fixed_group label out of range");
  }
}

TiltResult evaluate_tilt(const PseudoPopulationSpec& spec,
                         const MpsProbabilities& probs,
                         const TiltOptions& options) {
  const int n = static_cast<int>(probs.probs.rows());
  const int J = probs.n_studies;
  const int K = probs.n_groups;
  spec.validate(J, K);

  TiltResult result;
  result.values.resize(n);

  auto floored = [&](int i, int c) {
    const double v = probs.probs(i, c);
    if (v < options.prob_floor) {
      ++result.n_floored;
      return options.prob_floor;
    }
    return v;
  };

  for (int i = 0; i < n; ++i) {
    double eta = 0.0;
    switch (spec.tilt) {
      case TiltKind::IC:
        eta = 1.0;
        break;
      case TiltKind::IGO: {
        double denom = 0.0;
        for (int c = 0; c < J * K; ++c) denom += 1.0 / floored(i, c);
        eta = 1.0 / denom;
        break;
      }
      case TiltKind::Flexor: {
        double denom = 0.0;
        for (int s = 0; s < J; ++s) {
          const double g2 = spec.gamma[s] * spec.gamma[s];
          for (int z = 0; z < K; ++z) {
            const double t2 = spec.theta[z] * spec.theta[z];
            denom += g2 * t2 / floored(i, s * K + z);
          }
        }
        eta = 1.0 / denom;
        break;
      }
      case TiltKind::FixedGroup: {
        for (int s = 0; s < J; ++s) {
          eta += probs.probs(i, s * K + (spec.fixed_group - 1));
        }
        break;
      }
    }
    if (!std::isfinite(eta) || eta <= 0.0) {
      throw NumericError("non-finite tilt value at subject " + std::to_string(i));
    }
    result.values[i] = eta;
  }
  return result;
}

WeightSet compute_weights(const PseudoPopulationSpec& spec,
                          const MpsProbabilities& probs, const Dataset& d,
                          const TiltOptions& options) {
  if (probs.probs.rows() != d.n_subjects() ||
      probs.n_studies != d.n_studies() || probs.n_groups != d.n_groups()) {
    throw DimensionError("probabilities and dataset dimensions do not match");
  }
  TiltResult tilt = evaluate_tilt(spec, probs, options);

  WeightSet w;
  w.spec = spec;
  w.tilt_values = std::move(tilt.values);
  w.prob_floor = options.prob_floor;
  w.n_floored_probs = tilt.n_floored;
  w.rho_tilde.resize(d.n_subjects());

  const int n = d.n_subjects();
  for (int i = 0; i < n; ++i) {
    const int s = d.study()[i];
    const int z = d.group()[i];
    const double delta =
        std::max(probs.at(i, s, z), options.prob_floor);
    const double rho =
        spec.gamma[s - 1] * spec.theta[z - 1] * w.tilt_values[i] / delta;
    if (!std::isfinite(rho) || rho <= 0.0) {
      throw NumericError("non-finite weight at subject " + std::to_string(i));
    }
    w.rho_tilde[i] = rho;
  }

  const int cells_total = n * d.n_studies() * d.n_groups();
  if (w.n_floored_probs > cells_total / 10) {
    std::ostringstream msg;
    msg << w.n_floored_probs << " of " << cells_total
        << " cell probabilities were floored at " << options.prob_floor
        << "; weights may be unstable";
    w.warnings.push_back(msg.str());
  }

  const EssResult ess = effective_sample_size(w.rho_tilde);
  w.ess = ess.ess;
  w.percent_ess = ess.percent_ess;
  return w;
}

EssResult effective_sample_size(const Eigen::VectorXd& rho_tilde) {
  if (rho_tilde.size() == 0) throw DimensionError("empty weight list");
  const double s1 = rho_tilde.sum();
  const double s2 = rho_tilde.squaredNorm();
  EssResult r;
  r.ess = s1 * s1 / s2;
  r.percent_ess = 100.0 * r.ess / double(rho_tilde.size());
  return r;
}

BalanceDiagnostics balance_diagnostics(const WeightSet& w, const Dataset& d) {
  const int n = d.n_subjects();
  const int p = d.n_covariates();
  const int J = d.n_studies();
  const int K = d.n_groups();
  if (w.rho_tilde.size() != n) {
    throw DimensionError("weights and dataset sizes do not match");
  }

  Eigen::VectorXd group_mass = Eigen::VectorXd::Zero(K);
  for (int i = 0; i < n; ++i) group_mass[d.group()[i] - 1] += w.rho_tilde[i];
  for (int z = 0; z < K; ++z) {
    if (group_mass[z] <= 0.0) {
      throw DegenerateGroupError("group " + std::to_string(z + 1) +
                                 " has zero total weight");
    }
  }

  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(p, K);
  for (int i = 0; i < n; ++i) {
    const int z = d.group()[i] - 1;
    mean.col(z) += w.rho_tilde[i] * d.covariates().row(i).transpose();
  }
  for (int z = 0; z < K; ++z) mean.col(z) /= group_mass[z];

  Eigen::MatrixXd var = Eigen::MatrixXd::Zero(p, K);
  for (int i = 0; i < n; ++i) {
    const int z = d.group()[i] - 1;
    var.col(z) += w.rho_tilde[i] *
                  (d.covariates().row(i).transpose() - mean.col(z))
                      .array()
                      .square()
                      .matrix();
  }
  for (int z = 0; z < K; ++z) var.col(z) /= group_mass[z];

  BalanceDiagnostics out;
  for (int z1 = 0; z1 < K; ++z1) {
    for (int z2 = z1 + 1; z2 < K; ++z2) out.group_pairs.emplace_back(z1 + 1, z2 + 1);
  }
  out.smd.resize(p, static_cast<Eigen::Index>(out.group_pairs.size()));
  for (std::size_t pair = 0; pair < out.group_pairs.size(); ++pair) {
    const int z1 = out.group_pairs[pair].first - 1;
    const int z2 = out.group_pairs[pair].second - 1;
    for (int j = 0; j < p; ++j) {
      const double pooled = std::sqrt(0.5 * (var(j, z1) + var(j, z2)));
      const double diff = std::abs(mean(j, z1) - mean(j, z2));
      out.smd(j, static_cast<Eigen::Index>(pair)) =
          diff <= 1e-12 && pooled <= 1e-12 ? 0.0 : diff / pooled;
    }
  }
  out.max_abs_smd = p > 0 && K > 1 ? out.smd.maxCoeff() : 0.0;

  out.weighted_cell_proportions = Eigen::MatrixXd::Zero(J, K);
  const double total = w.rho_tilde.sum();
  for (int i = 0; i < n; ++i) {
    out.weighted_cell_proportions(d.study()[i] - 1, d.group()[i] - 1) +=
        w.rho_tilde[i];
  }
  out.weighted_cell_proportions /= total;
  return out;
}

void save_weights_csv(const WeightSet& w, const Dataset& d,
                      const std::string& path) {
  const double mean = w.rho_tilde.mean();
  std::ostringstream out;
  out << "row_index,study,group,rho_tilde,normalized_weight\n";
  for (int i = 0; i < d.n_subjects(); ++i) {
    out << i + 1 << ',' << d.study()[i] << ',' << d.group()[i] << ','
        << detail::format_double(w.rho_tilde[i]) << ','
        << detail::format_double(w.rho_tilde[i] / mean) << '\n';
  }
  detail::write_text_file(path, out.str());
}

}  // namespace flexor
