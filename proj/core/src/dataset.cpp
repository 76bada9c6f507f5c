#include "flexor/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "csv.hpp"

namespace flexor {

namespace {

// Maps raw labels to 1..m preserving numeric order. Returns true if the
// labels were already consecutive starting at 1.
bool normalize_labels(std::vector<int>& labels, int& n_levels,
                      std::map<int, int>& mapping) {
  mapping.clear();
  for (int v : labels) mapping[v] = 0;
  int next = 1;
  bool consecutive = true;
  for (auto& [raw, mapped] : mapping) {
    mapped = next++;
    if (raw != mapped) consecutive = false;
  }
  n_levels = next - 1;
  if (!consecutive) {
    for (int& v : labels) v = mapping[v];
  }
  return consecutive;
}

}  // namespace

Dataset Dataset::from_components(std::vector<int> study, std::vector<int> group,
                                 Eigen::MatrixXd covariates,
                                 Eigen::MatrixXd outcomes,
                                 std::vector<std::string> covariate_names,
                                 std::vector<std::string> outcome_names) {
  const auto n = static_cast<Eigen::Index>(study.size());
  if (n == 0) throw DimensionError("dataset has no rows");
  if (static_cast<Eigen::Index>(group.size()) != n ||
      covariates.rows() != n || outcomes.rows() != n) {
    throw DimensionError("study/group/covariate/outcome row counts disagree");
  }

  Dataset d;
  d.study_ = std::move(study);
  d.group_ = std::move(group);
  d.covariates_ = std::move(covariates);
  d.outcomes_ = std::move(outcomes);

  for (int v : d.study_) {
    if (v < 1) throw SchemaError("study labels must be positive integers");
  }
  for (int v : d.group_) {
    if (v < 1) throw SchemaError("group labels must be positive integers");
  }

  std::map<int, int> map_s, map_z;
  if (!normalize_labels(d.study_, d.n_studies_, map_s)) {
    d.warnings_.push_back("study labels were not consecutive; remapped to 1.." +
                          std::to_string(d.n_studies_));
  }
  if (!normalize_labels(d.group_, d.n_groups_, map_z)) {
    d.warnings_.push_back("group labels were not consecutive; remapped to 1.." +
                          std::to_string(d.n_groups_));
  }

  if (!d.covariates_.allFinite() || !d.outcomes_.allFinite()) {
    throw ParseError("non-finite value in covariates or outcomes");
  }

  // Empirical positivity: every (study, group) cell occupied.
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(d.n_studies_, d.n_groups_);
  for (Eigen::Index i = 0; i < n; ++i) {
    counts(d.study_[i] - 1, d.group_[i] - 1) += 1;
  }
  for (int s = 0; s < d.n_studies_; ++s) {
    for (int z = 0; z < d.n_groups_; ++z) {
      if (counts(s, z) == 0) {
        std::ostringstream msg;
        msg << "empty (study, group) cell (" << s + 1 << "," << z + 1 << ")";
        throw PositivityError(msg.str());
      }
    }
  }

  const int p = static_cast<int>(d.covariates_.cols());
  d.cov_mean_ = Eigen::VectorXd::Zero(p);
  d.cov_sd_ = Eigen::VectorXd::Ones(p);
  d.covariates_std_ = d.covariates_;
  for (int j = 0; j < p; ++j) {
    const double mean = d.covariates_.col(j).mean();
    const double var =
        (d.covariates_.col(j).array() - mean).square().sum() / double(n);
    const double sd = std::sqrt(var);
    if (sd <= 1e-12 * (1.0 + std::abs(mean))) {
      std::string name = j < static_cast<int>(covariate_names.size())
                             ? covariate_names[j]
                             : ("column " + std::to_string(j + 1));
      throw SchemaError("covariate '" + name +
                        "' is constant; it would be zero after standardization");
    }
    d.cov_mean_[j] = mean;
    d.cov_sd_[j] = sd;
    d.covariates_std_.col(j) = (d.covariates_.col(j).array() - mean) / sd;
  }

  if (covariate_names.empty()) {
    for (int j = 0; j < p; ++j) covariate_names.push_back("x" + std::to_string(j + 1));
  }
  if (outcome_names.empty()) {
    for (int l = 0; l < d.outcomes_.cols(); ++l) {
      outcome_names.push_back("y" + std::to_string(l + 1));
    }
  }
  if (static_cast<int>(covariate_names.size()) != p ||
      covariate_names.size() != static_cast<std::size_t>(p) ||
      static_cast<Eigen::Index>(outcome_names.size()) != d.outcomes_.cols()) {
    throw DimensionError("name lists do not match matrix dimensions");
  }
  d.covariate_names_ = std::move(covariate_names);
  d.outcome_names_ = std::move(outcome_names);
  return d;
}

Dataset load_dataset(const std::string& path, const DatasetSchema& schema) {
  const detail::CsvTable table = detail::read_csv(path);

  auto require_column = [&](const std::string& name) {
    int idx = table.column_index(name);
    if (idx < 0) throw SchemaError("declared column '" + name + "' not found in " + path);
    return idx;
  };

  const int study_idx = require_column(schema.study_col);
  const int group_idx = require_column(schema.group_col);
  std::vector<int> outcome_idx, covariate_idx;
  for (const auto& c : schema.outcome_cols) outcome_idx.push_back(require_column(c));
  for (const auto& c : schema.covariate_cols) covariate_idx.push_back(require_column(c));

  const auto n = static_cast<Eigen::Index>(table.rows.size());
  if (n == 0) throw DimensionError("no data rows in " + path);

  auto cell_value = [&](Eigen::Index i, int col, const std::string& col_name) {
    const auto& row = table.rows[i];
    if (col >= static_cast<int>(row.size())) {
      throw ParseError("row " + std::to_string(i + 2) + " has too few fields");
    }
    double v;
    if (!detail::parse_double(row[col], v)) {
      throw ParseError("row " + std::to_string(i + 2) + ", column '" + col_name +
                       "': cannot parse '" + row[col] + "' as a number");
    }
    return v;
  };

  auto label_value = [&](Eigen::Index i, int col, const std::string& col_name) {
    double v = cell_value(i, col, col_name);
    double r = std::round(v);
    if (std::abs(v - r) > 1e-9 || r < -2e9 || r > 2e9) {
      throw ParseError("row " + std::to_string(i + 2) + ", column '" + col_name +
                       "': label must be an integer, got '" +
                       detail::format_double(v) + "'");
    }
    return static_cast<int>(r);
  };

  std::vector<int> study(n), group(n);
  Eigen::MatrixXd covariates(n, static_cast<Eigen::Index>(covariate_idx.size()));
  Eigen::MatrixXd outcomes(n, static_cast<Eigen::Index>(outcome_idx.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    study[i] = label_value(i, study_idx, schema.study_col);
    group[i] = label_value(i, group_idx, schema.group_col);
    for (std::size_t l = 0; l < outcome_idx.size(); ++l) {
      outcomes(i, static_cast<Eigen::Index>(l)) =
          cell_value(i, outcome_idx[l], schema.outcome_cols[l]);
    }
    for (std::size_t j = 0; j < covariate_idx.size(); ++j) {
      covariates(i, static_cast<Eigen::Index>(j)) =
          cell_value(i, covariate_idx[j], schema.covariate_cols[j]);
    }
  }

  return Dataset::from_components(std::move(study), std::move(group),
                                  std::move(covariates), std::move(outcomes),
                                  schema.covariate_cols, schema.outcome_cols);
}

void save_dataset(const Dataset& d, const std::string& path) {
  std::ostringstream out;
  out << "study,group";
  for (const auto& name : d.outcome_names()) out << ',' << name;
  for (const auto& name : d.covariate_names()) out << ',' << name;
  out << '\n';
  for (int i = 0; i < d.n_subjects(); ++i) {
    out << d.study()[i] << ',' << d.group()[i];
    for (int l = 0; l < d.n_outcomes(); ++l) {
      out << ',' << detail::format_double(d.outcomes()(i, l));
    }
    for (int j = 0; j < d.n_covariates(); ++j) {
      out << ',' << detail::format_double(d.covariates()(i, j));
    }
    out << '\n';
  }
  detail::write_text_file(path, out.str());
}

CellTable cell_table(const Dataset& d) {
  CellTable t;
  t.counts = Eigen::MatrixXi::Zero(d.n_studies(), d.n_groups());
  for (int i = 0; i < d.n_subjects(); ++i) {
    t.counts(d.study()[i] - 1, d.group()[i] - 1) += 1;
  }
  t.proportions = t.counts.cast<double>() / double(d.n_subjects());
  return t;
}

}  // namespace flexor
