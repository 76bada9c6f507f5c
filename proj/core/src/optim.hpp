#pragma once

#include <Eigen/Dense>
#include <functional>

namespace flexor::detail {

struct OptimResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int n_iterations = 0;
  bool converged = false;
};

// BFGS minimization with central-difference gradients and Armijo
// backtracking. Intended for small, smooth problems (a handful of
// parameters).
OptimResult minimize_bfgs(const std::function<double(const Eigen::VectorXd&)>& f,
                          const Eigen::VectorXd& x0, int max_iter = 200,
                          double grad_tol = 1e-9);

// Floor-respecting softmax parameterization of the k-simplex. The free
// vector has k-1 entries (the first softmax coordinate is pinned at 0):
//   p_i = floor + (1 - k*floor) * softmax([0, u])_i.
Eigen::VectorXd simplex_from_free(const Eigen::VectorXd& u, int k, double floor);
Eigen::VectorXd free_from_simplex(const Eigen::VectorXd& p, double floor);

}  // namespace flexor::detail
