#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "flexor/errors.hpp"

namespace flexor {

// Column declaration for load_dataset. Outcome and covariate lists are
// ordered; that order is preserved in the Dataset.
struct DatasetSchema {
  std::string study_col;
  std::string group_col;
  std::vector<std::string> outcome_cols;
  std::vector<std::string> covariate_cols;
};

// Immutable per-subject table of study label, group label, covariates and
// outcomes. Construction validates:
//   - labels in {1..J} x {1..K}, remapping non-consecutive labels with a
//     warning;
//   - no missing or non-finite values;
//   - every (study, group) cell non-empty;
//   - no zero-variance covariate column (the design matrix would lose rank
//     after standardization).
// Covariates are standardized internally (mean 0, SD 1) for numerics; the
// original-scale matrix is kept and all reported quantities use it.
class Dataset {
 public:
  static Dataset from_components(std::vector<int> study, std::vector<int> group,
                                 Eigen::MatrixXd covariates,
                                 Eigen::MatrixXd outcomes,
                                 std::vector<std::string> covariate_names = {},
                                 std::vector<std::string> outcome_names = {});

  int n_subjects() const { return static_cast<int>(study_.size()); }
  int n_studies() const { return n_studies_; }
  int n_groups() const { return n_groups_; }
  int n_covariates() const { return static_cast<int>(covariates_.cols()); }
  int n_outcomes() const { return static_cast<int>(outcomes_.cols()); }

  // 1-based labels.
  const std::vector<int>& study() const { return study_; }
  const std::vector<int>& group() const { return group_; }

  const Eigen::MatrixXd& covariates() const { return covariates_; }
  const Eigen::MatrixXd& outcomes() const { return outcomes_; }

  const Eigen::MatrixXd& covariates_standardized() const {
    return covariates_std_;
  }
  const Eigen::VectorXd& covariate_means() const { return cov_mean_; }
  const Eigen::VectorXd& covariate_sds() const { return cov_sd_; }

  const std::vector<std::string>& covariate_names() const {
    return covariate_names_;
  }
  const std::vector<std::string>& outcome_names() const {
    return outcome_names_;
  }

  // Label remapping notices collected during construction.
  const std::vector<std::string>& warnings() const { return warnings_; }

  // Lexicographic (study, group) cell index in [0, J*K).
  int cell_index(int i) const {
    return (study_[i] - 1) * n_groups_ + (group_[i] - 1);
  }

 private:
  Dataset() = default;

  int n_studies_ = 0;
  int n_groups_ = 0;
  std::vector<int> study_, group_;
  Eigen::MatrixXd covariates_, outcomes_;
  Eigen::MatrixXd covariates_std_;
  Eigen::VectorXd cov_mean_, cov_sd_;
  std::vector<std::string> covariate_names_, outcome_names_;
  std::vector<std::string> warnings_;
};

// Counts and proportions of the J x K study-group cells.
struct CellTable {
  Eigen::MatrixXi counts;       // J x K
  Eigen::MatrixXd proportions;  // J x K, sums to 1
};

// Reads a CSV file with a header row and builds a validated Dataset.
// Errors: SchemaError for missing columns, ParseError with row and column
// for non-numeric cells, PositivityError naming the first empty cell.
Dataset load_dataset(const std::string& path, const DatasetSchema& schema);

// Writes a Dataset back to CSV such that load_dataset reproduces it exactly.
void save_dataset(const Dataset& d, const std::string& path);

CellTable cell_table(const Dataset& d);

}  // namespace flexor
