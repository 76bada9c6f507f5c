#pragma once

#include <Eigen/Dense>
#include <vector>

#include "flexor/dataset.hpp"

namespace flexor {

struct FitOptions {
  double ridge = 0.0;     // L2 penalty on the coefficients; 0 for plain MLE
  int max_iter = 100;     // Newton iterations
  double grad_tol = 1e-8; // L2 norm of the (penalized) score at convergence
};

// Fitted multinomial-logit model for the J*K study-group cells.
//
// `omega` holds one row per non-reference cell, (JK-1) x (p+1), in
// lexicographic (study, group) order with cell (1,1) as the zero reference;
// column 0 is the intercept and columns 1..p act on internally standardized
// covariates. Use omega_original_scale() for coefficients on the raw scale.
struct MpsModel {
  int n_studies = 0;
  int n_groups = 0;
  int n_design_cols = 0;  // p + 1

  Eigen::MatrixXd omega;
  bool converged = false;
  double final_gradient_norm = 0.0;
  int n_iterations = 0;
  double ridge = 0.0;               // penalty the model was fit with
  std::vector<double> loglik_path;  // accepted objective values, ascending

  // Standardization applied at fit time; predictions reuse it.
  Eigen::VectorXd cov_mean, cov_sd;

  Eigen::MatrixXd omega_original_scale() const;
};

// Per-subject cell probabilities, n x (J*K), lexicographic (study, group)
// columns. Rows sum to 1; every entry is strictly inside (0, 1).
struct MpsProbabilities {
  int n_studies = 0;
  int n_groups = 0;
  Eigen::MatrixXd probs;

  double at(int i, int s, int z) const {
    return probs(i, (s - 1) * n_groups + (z - 1));
  }
};

// Maximizes the multinomial log-likelihood (minus ridge/2 * ||omega||^2)
// by damped Newton steps with step-halving. Throws ConvergenceError if the
// gradient tolerance is not met within max_iter iterations and
// SeparationError when the Hessian is numerically singular with ridge = 0.
MpsModel fit_mps(const Dataset& d, const FitOptions& options = {});

MpsProbabilities predict_mps(const MpsModel& m, const Dataset& d);

// Penalized log-likelihood and score at an arbitrary coefficient matrix on
// the standardized scale; exposed for diagnostics and tests.
double mps_loglik(const Dataset& d, const Eigen::MatrixXd& omega, double ridge);
Eigen::MatrixXd mps_loglik_gradient(const Dataset& d, const Eigen::MatrixXd& omega,
                                    double ridge);

namespace detail {
// Design matrix [1 | standardized covariates].
Eigen::MatrixXd mps_design(const Dataset& d);
// Per-subject score rows, n x (JK-1)(p+1); flattening is row-major in the
// cell index (all design columns of cell 1, then cell 2, ...).
Eigen::MatrixXd mps_score_rows(const Dataset& d, const Eigen::MatrixXd& omega);
// Negated Hessian of the penalized log-likelihood (positive definite away
// from separation).
Eigen::MatrixXd mps_neg_hessian(const Dataset& d, const Eigen::MatrixXd& omega,
                                double ridge);
// Row-wise softmax of [0 | eta] where eta has one column per non-reference
// cell.
Eigen::MatrixXd softmax_probs(const Eigen::MatrixXd& eta);
}  // namespace detail

}  // namespace flexor
