#include "optim.hpp"

#include <algorithm>
#include <cmath>

namespace flexor::detail {

namespace {

Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x) {
  const int k = static_cast<int>(x.size());
  Eigen::VectorXd g(k);
  Eigen::VectorXd xp = x;
  for (int j = 0; j < k; ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(x[j]));
    xp[j] = x[j] + h;
    const double fp = f(xp);
    xp[j] = x[j] - h;
    const double fm = f(xp);
    xp[j] = x[j];
    g[j] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace

OptimResult minimize_bfgs(const std::function<double(const Eigen::VectorXd&)>& f,
                          const Eigen::VectorXd& x0, int max_iter,
                          double grad_tol) {
  OptimResult res;
  res.x = x0;
  res.f = f(x0);

  const int k = static_cast<int>(x0.size());
  if (k == 0) {
    res.converged = true;
    return res;
  }

  Eigen::MatrixXd inv_h = Eigen::MatrixXd::Identity(k, k);
  Eigen::VectorXd g = numeric_gradient(f, res.x);

  for (int iter = 0; iter < max_iter; ++iter) {
    res.n_iterations = iter;
    if (g.lpNorm<Eigen::Infinity>() <= grad_tol) {
      res.converged = true;
      return res;
    }

    Eigen::VectorXd direction = -(inv_h * g);
    double slope = direction.dot(g);
    if (!(slope < 0.0)) {  // reset on loss of descent
      inv_h.setIdentity();
      direction = -g;
      slope = direction.dot(g);
    }

    // Armijo backtracking.
    double step = 1.0;
    double f_new = res.f;
    Eigen::VectorXd x_new = res.x;
    bool accepted = false;
    for (int ls = 0; ls < 50; ++ls) {
      x_new = res.x + step * direction;
      f_new = f(x_new);
      if (std::isfinite(f_new) && f_new <= res.f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      res.converged = g.lpNorm<Eigen::Infinity>() <= 1e3 * grad_tol;
      return res;
    }

    const Eigen::VectorXd g_new = numeric_gradient(f, x_new);
    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-14 * s.norm() * y.norm()) {
      const Eigen::VectorXd hy = inv_h * y;
      const double yhy = y.dot(hy);
      inv_h += ((sy + yhy) / (sy * sy)) * (s * s.transpose()) -
               (hy * s.transpose() + s * hy.transpose()) / sy;
    } else {
      inv_h.setIdentity();
    }

    const double improvement = res.f - f_new;
    res.x = x_new;
    res.f = f_new;
    g = g_new;
    if (improvement <= 1e-14 * (1.0 + std::abs(res.f))) {
      res.converged = true;
      return res;
    }
  }
  res.converged = g.lpNorm<Eigen::Infinity>() <= 1e3 * grad_tol;
  return res;
}

Eigen::VectorXd simplex_from_free(const Eigen::VectorXd& u, int k, double floor) {
  Eigen::VectorXd scores(k);
  scores[0] = 0.0;
  for (int i = 1; i < k; ++i) scores[i] = u[i - 1];
  const double m = scores.maxCoeff();
  Eigen::VectorXd e = (scores.array() - m).exp();
  e /= e.sum();
  return Eigen::VectorXd::Constant(k, floor) + (1.0 - k * floor) * e;
}

Eigen::VectorXd free_from_simplex(const Eigen::VectorXd& p, double floor) {
  const int k = static_cast<int>(p.size());
  Eigen::VectorXd v(k);
  for (int i = 0; i < k; ++i) {
    v[i] = std::max((p[i] - floor) / (1.0 - k * floor), 1e-12);
  }
  Eigen::VectorXd u(k - 1);
  for (int i = 1; i < k; ++i) u[i - 1] = std::log(v[i]) - std::log(v[0]);
  return u;
}

}  // namespace flexor::detail
