#include "flexor/mps.hpp"

#include <cmath>
#include <string>

namespace flexor {

namespace detail {

Eigen::MatrixXd mps_design(const Dataset& d) {
  const int n = d.n_subjects();
  const int p = d.n_covariates();
  Eigen::MatrixXd design(n, p + 1);
  design.col(0).setOnes();
  if (p > 0) design.rightCols(p) = d.covariates_standardized();
  return design;
}

Eigen::MatrixXd softmax_probs(const Eigen::MatrixXd& eta) {
  const Eigen::Index n = eta.rows();
  const Eigen::Index c1 = eta.cols();  // non-reference cells
  Eigen::MatrixXd probs(n, c1 + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    double m = 0.0;  // reference cell has linear predictor 0
    for (Eigen::Index c = 0; c < c1; ++c) m = std::max(m, eta(i, c));
    double denom = std::exp(-m);
    probs(i, 0) = denom;
    for (Eigen::Index c = 0; c < c1; ++c) {
      const double e = std::exp(eta(i, c) - m);
      probs(i, c + 1) = e;
      denom += e;
    }
    probs.row(i) /= denom;
  }
  return probs;
}

Eigen::MatrixXd mps_score_rows(const Dataset& d, const Eigen::MatrixXd& omega) {
  const Eigen::MatrixXd design = mps_design(d);
  const Eigen::MatrixXd probs = softmax_probs(design * omega.transpose());
  const int n = d.n_subjects();
  const int q = static_cast<int>(design.cols());
  const int c1 = static_cast<int>(omega.rows());
  Eigen::MatrixXd rows(n, c1 * q);
  for (int i = 0; i < n; ++i) {
    const int cell = d.cell_index(i);
    for (int c = 0; c < c1; ++c) {
      const double resid = (cell == c + 1 ? 1.0 : 0.0) - probs(i, c + 1);
      rows.row(i).segment(c * q, q) = resid * design.row(i);
    }
  }
  return rows;
}

Eigen::MatrixXd mps_neg_hessian(const Dataset& d, const Eigen::MatrixXd& omega,
                                double ridge) {
  const Eigen::MatrixXd design = mps_design(d);
  const Eigen::MatrixXd probs = softmax_probs(design * omega.transpose());
  const int q = static_cast<int>(design.cols());
  const int c1 = static_cast<int>(omega.rows());
  Eigen::MatrixXd neg_h = Eigen::MatrixXd::Zero(c1 * q, c1 * q);
  Eigen::VectorXd w(design.rows());
  for (int c = 0; c < c1; ++c) {
    for (int e = c; e < c1; ++e) {
      if (c == e) {
        w = probs.col(c + 1).array() * (1.0 - probs.col(c + 1).array());
      } else {
        w = -(probs.col(c + 1).array() * probs.col(e + 1).array());
      }
      const Eigen::MatrixXd block =
          design.transpose() * (design.array().colwise() * w.array()).matrix();
      neg_h.block(c * q, e * q, q, q) = block;
      if (e != c) neg_h.block(e * q, c * q, q, q) = block.transpose();
    }
  }
  if (ridge > 0.0) neg_h.diagonal().array() += ridge;
  return neg_h;
}

}  // namespace detail

double mps_loglik(const Dataset& d, const Eigen::MatrixXd& omega, double ridge) {
  const Eigen::MatrixXd design = detail::mps_design(d);
  const Eigen::MatrixXd eta = design * omega.transpose();
  const int n = d.n_subjects();
  double ll = 0.0;
  for (int i = 0; i < n; ++i) {
    double m = 0.0;
    for (Eigen::Index c = 0; c < eta.cols(); ++c) m = std::max(m, eta(i, c));
    double lse = std::exp(-m);
    for (Eigen::Index c = 0; c < eta.cols(); ++c) lse += std::exp(eta(i, c) - m);
    lse = m + std::log(lse);
    const int cell = d.cell_index(i);
    const double own = cell == 0 ? 0.0 : eta(i, cell - 1);
    ll += own - lse;
  }
  if (ridge > 0.0) ll -= 0.5 * ridge * omega.squaredNorm();
  return ll;
}

Eigen::MatrixXd mps_loglik_gradient(const Dataset& d, const Eigen::MatrixXd& omega,
                                    double ridge) {
  const Eigen::MatrixXd design = detail::mps_design(d);
  const Eigen::MatrixXd probs = detail::softmax_probs(design * omega.transpose());
  const int n = d.n_subjects();
  const int c1 = static_cast<int>(omega.rows());
  Eigen::MatrixXd resid(n, c1);
  for (int i = 0; i < n; ++i) {
    const int cell = d.cell_index(i);
    for (int c = 0; c < c1; ++c) {
      resid(i, c) = (cell == c + 1 ? 1.0 : 0.0) - probs(i, c + 1);
    }
  }
  Eigen::MatrixXd grad = resid.transpose() * design;
  if (ridge > 0.0) grad -= ridge * omega;
  return grad;
}

MpsModel fit_mps(const Dataset& d, const FitOptions& options) {
  const int cells = d.n_studies() * d.n_groups();
  const int c1 = cells - 1;
  const int q = d.n_covariates() + 1;

  MpsModel model;
  model.n_studies = d.n_studies();
  model.n_groups = d.n_groups();
  model.n_design_cols = q;
  model.cov_mean = d.covariate_means();
  model.cov_sd = d.covariate_sds();
  model.ridge = options.ridge;
  model.omega = Eigen::MatrixXd::Zero(c1, q);

  if (c1 == 0) {  // single cell: saturated with probability one
    model.converged = true;
    model.loglik_path.push_back(0.0);
    return model;
  }

  double ll = mps_loglik(d, model.omega, options.ridge);
  model.loglik_path.push_back(ll);

  for (int iter = 0; iter < options.max_iter; ++iter) {
    const Eigen::MatrixXd grad = mps_loglik_gradient(d, model.omega, options.ridge);
    const double grad_norm = grad.norm();
    model.final_gradient_norm = grad_norm;
    model.n_iterations = iter;
    if (grad_norm <= options.grad_tol) {
      model.converged = true;
      return model;
    }

    const Eigen::MatrixXd neg_h = detail::mps_neg_hessian(d, model.omega, options.ridge);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(neg_h);
    bool singular = ldlt.info() != Eigen::Success;
    if (!singular) {
      const double dmax = ldlt.vectorD().maxCoeff();
      const double dmin = ldlt.vectorD().minCoeff();
      singular = !(dmax > 0.0) || dmin <= dmax * 1e-14;
    }
    if (singular) {
      if (options.ridge <= 0.0) {
        throw SeparationError(
            "singular Hessian while fitting the cell-membership model; the data "
            "may be separated, refit with ridge > 0 (e.g. 1e-6)");
      }
      throw NumericError("singular Hessian despite ridge penalty");
    }

    // grad is (c1 x q); the Newton system uses the row-major flattening that
    // matches mps_neg_hessian's block layout.
    Eigen::VectorXd g(c1 * q);
    for (int c = 0; c < c1; ++c) g.segment(c * q, q) = grad.row(c).transpose();
    const Eigen::VectorXd step_flat = ldlt.solve(g);
    Eigen::MatrixXd step(c1, q);
    for (int c = 0; c < c1; ++c) step.row(c) = step_flat.segment(c * q, q).transpose();

    double scale = 1.0;
    bool accepted = false;
    for (int h = 0; h < 40; ++h) {
      const Eigen::MatrixXd candidate = model.omega + scale * step;
      const double cand_ll = mps_loglik(d, candidate, options.ridge);
      if (std::isfinite(cand_ll) && cand_ll >= ll) {
        model.omega = candidate;
        ll = cand_ll;
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    model.loglik_path.push_back(ll);
    if (!accepted) break;  // no ascent possible at machine precision
  }

  const Eigen::MatrixXd grad = mps_loglik_gradient(d, model.omega, options.ridge);
  model.final_gradient_norm = grad.norm();
  model.n_iterations = static_cast<int>(model.loglik_path.size()) - 1;
  if (model.final_gradient_norm <= options.grad_tol) {
    model.converged = true;
    return model;
  }
  throw ConvergenceError(
      "cell-membership model did not reach gradient tolerance " +
          std::to_string(options.grad_tol) + " within " +
          std::to_string(options.max_iter) + " iterations (gradient norm " +
          std::to_string(model.final_gradient_norm) + ")",
      model.final_gradient_norm);
}

MpsProbabilities predict_mps(const MpsModel& m, const Dataset& d) {
  if (d.n_covariates() + 1 != m.n_design_cols ||
      d.n_studies() > m.n_studies || d.n_groups() > m.n_groups) {
    throw DimensionError("model and dataset dimensions do not match");
  }
  const int n = d.n_subjects();
  const int p = d.n_covariates();
  Eigen::MatrixXd design(n, p + 1);
  design.col(0).setOnes();
  for (int j = 0; j < p; ++j) {
    design.col(j + 1) =
        (d.covariates().col(j).array() - m.cov_mean[j]) / m.cov_sd[j];
  }
  MpsProbabilities out;
  out.n_studies = m.n_studies;
  out.n_groups = m.n_groups;
  out.probs = detail::softmax_probs(design * m.omega.transpose());
  return out;
}

Eigen::MatrixXd MpsModel::omega_original_scale() const {
  Eigen::MatrixXd beta = omega;
  const int p = n_design_cols - 1;
  for (int c = 0; c < beta.rows(); ++c) {
    double intercept = beta(c, 0);
    for (int j = 0; j < p; ++j) {
      const double slope = omega(c, j + 1) / cov_sd[j];
      intercept -= slope * cov_mean[j];
      beta(c, j + 1) = slope;
    }
    beta(c, 0) = intercept;
  }
  return beta;
}

}  // namespace flexor
