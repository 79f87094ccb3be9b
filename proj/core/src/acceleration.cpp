#include "lvot/acceleration.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace lvot {

void AndersonWindow::push(const Eigen::VectorXd& x, const Eigen::VectorXd& g) {
  xs_.push_back(x);
  gs_.push_back(g);
  while (xs_.size() > depth_) {
    xs_.pop_front();
    gs_.pop_front();
  }
}

void AndersonWindow::clear() {
  xs_.clear();
  gs_.clear();
}

Proposal AndersonWindow::propose(double ridge, bool relative_ridge) const {
  Proposal out;
  out.x = x() + g();
  const std::size_t m = xs_.size();
  if (m < 2) {
    out.note = "not enough history";
    return out;
  }
  const Eigen::Index n = x().size();
  const auto cols = static_cast<Eigen::Index>(m - 1);
  Eigen::MatrixXd dx(n, cols), dg(n, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    const auto i = static_cast<std::size_t>(j);
    dx.col(j) = xs_[i + 1] - xs_[i];
    dg.col(j) = gs_[i + 1] - gs_[i];
  }
  Eigen::MatrixXd gram = dg.transpose() * dg;
  const double scale = relative_ridge ? gram.cwiseAbs().maxCoeff() : 1.0;
  gram.diagonal().array() += ridge * scale;
  const Eigen::VectorXd rhs = dg.transpose() * g();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  Eigen::VectorXd gamma;
  if (ldlt.info() == Eigen::Success) gamma = ldlt.solve(rhs);
  if (gamma.size() != cols || !gamma.allFinite() || ldlt.info() != Eigen::Success ||
      (ldlt.vectorD().array() <= 0.0).any()) {
    out.note = "singular least-squares system";
    return out;
  }
  out.x.noalias() -= (dx + dg) * gamma;
  out.gamma = std::move(gamma);
  out.accelerated = true;
  return out;
}

Eigen::VectorXd alpha_from_gamma(const Eigen::VectorXd& gamma) {
  const Eigen::Index m = gamma.size();
  Eigen::VectorXd alpha(m + 1);
  if (m == 0) {
    alpha(0) = 1.0;
    return alpha;
  }
  alpha(0) = gamma(0);
  for (Eigen::Index i = 1; i < m; ++i) alpha(i) = gamma(i) - gamma(i - 1);
  alpha(m) = 1.0 - gamma(m - 1);
  return alpha;
}

bool safeguard_accepts(double candidate_residual_l2, double residual_l2, double tau) {
  return candidate_residual_l2 <= tau * residual_l2;
}

bool stop_check(const Eigen::VectorXd& g, double stop_tol) {
  return g.size() == 0 || g.lpNorm<Eigen::Infinity>() < stop_tol;
}

AndersonResult anderson_solve(const FixedPointMap& map, Eigen::VectorXd x0,
                              const AndersonConfig& config,
                              const std::function<void(const AndersonStep&)>& on_step) {
  AndersonResult result;
  AndersonWindow window(config.depth);
  Eigen::VectorXd x = std::move(x0);
  Eigen::VectorXd g = map(x) - x;
  result.evaluations = 1;
  window.push(x, g);
  result.converged = stop_check(g, config.stop_tol);

  while (!result.converged && result.iterations < config.max_iterations) {
    AndersonStep step;
    step.iteration = ++result.iterations;
    step.previous_l2 = g.norm();

    const Proposal prop = window.propose(config.ridge, config.relative_ridge);
    Eigen::VectorXd x_new;
    Eigen::VectorXd g_new;
    step.accelerated = prop.accelerated;
    if (prop.accelerated) {
      Eigen::VectorXd g_cand = map(prop.x) - prop.x;
      ++result.evaluations;
      if (g_cand.allFinite() && safeguard_accepts(g_cand.norm(), step.previous_l2, config.tau)) {
        x_new = prop.x;
        g_new = std::move(g_cand);
        step.accepted = true;
      }
    }
    if (!step.accepted) {
      x_new = x + g;
      g_new = map(x_new) - x_new;
      ++result.evaluations;
    }
    step.step_inf = (x_new - x).lpNorm<Eigen::Infinity>();
    step.iterate_inf = x_new.lpNorm<Eigen::Infinity>();
    step.residual_inf = g_new.lpNorm<Eigen::Infinity>();
    step.residual_l2 = g_new.norm();
    step.evaluations = result.evaluations;
    x = std::move(x_new);
    g = std::move(g_new);
    window.push(x, g);
    result.steps.push_back(step);
    if (on_step) on_step(step);
    result.converged = stop_check(g, config.stop_tol);
  }
  result.x = std::move(x);
  result.g = std::move(g);
  return result;
}

}  // namespace lvot
