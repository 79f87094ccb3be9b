#include "lvot/solvers.hpp"

#include "lvot/errors.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>

namespace lvot {

std::size_t ConstraintSpec::n_instruments() const {
  std::size_t n = 0;
  for (const auto& t : targets) n += static_cast<std::size_t>(t.size());
  return n;
}

std::vector<std::size_t> ConstraintSpec::counts() const {
  std::vector<std::size_t> out;
  for (const auto& t : targets) out.push_back(static_cast<std::size_t>(t.size()));
  return out;
}

ConstraintSpec ConstraintSpec::empty(std::size_t n_steps, std::size_t n_points) {
  ConstraintSpec spec;
  const auto n = static_cast<Eigen::Index>(n_points);
  spec.payoffs.assign(n_steps + 1, Eigen::MatrixXd(n, 0));
  spec.targets.assign(n_steps + 1, Eigen::VectorXd());
  spec.weights.assign(n_steps + 1, Eigen::VectorXd());
  spec.instrument_index.assign(n_steps + 1, {});
  return spec;
}

ConstraintSpec ConstraintSpec::from_instruments(const InstrumentSet& set,
                                                const ReferenceMeasure& ref, double c_mart) {
  if (!(c_mart > 0.0)) throw DomainError("constraints: c_mart must be positive");
  ConstraintSpec spec = empty(ref.n_steps(), ref.n_points());
  spec.c_mart = c_mart;
  spec.instrument_index = ref.time.calib_map(set);
  for (std::size_t k = 0; k <= ref.n_steps(); ++k) {
    const auto& idx = spec.instrument_index[k];
    if (idx.empty()) continue;
    if (k == 0) throw DomainError("constraints: instruments cannot mature at t = 0");
    const auto m = static_cast<Eigen::Index>(idx.size());
    spec.payoffs[k].resize(static_cast<Eigen::Index>(ref.n_points()), m);
    spec.targets[k].resize(m);
    spec.weights[k].resize(m);
    for (Eigen::Index j = 0; j < m; ++j) {
      const Instrument& inst = set.instruments[idx[static_cast<std::size_t>(j)]];
      if (!(inst.penalty_weight > 0.0)) throw DomainError("constraints: penalty weight must be positive");
      spec.payoffs[k].col(j) = payoff_vector(inst.kind, inst.strike, ref.space.points);
      spec.targets[k](j) = inst.target_price;
      spec.weights[k](j) = inst.penalty_weight;
    }
  }
  return spec;
}

SinkhornSolver::SinkhornSolver(const ReferenceMeasure& ref, ConstraintSpec constraints,
                               SolverConfig config, MomentFunction moment)
    : ref_(ref),
      constraints_(std::move(constraints)),
      config_(config),
      moments_(MomentTable::tabulate(moment, ref.space)) {
  if (constraints_.payoffs.size() != ref.n_steps() + 1 ||
      constraints_.targets.size() != ref.n_steps() + 1 ||
      constraints_.weights.size() != ref.n_steps() + 1) {
    throw DomainError("solver: constraints must list every step 0..N");
  }
  if (constraints_.martingale && !(constraints_.c_mart > 0.0)) {
    throw DomainError("solver: c_mart must be positive when the moment block is enabled");
  }
  for (std::size_t k = 0; k <= ref.n_steps(); ++k) {
    if (constraints_.payoffs[k].cols() != constraints_.targets[k].size() ||
        constraints_.weights[k].size() != constraints_.targets[k].size()) {
      throw DomainError("solver: payoff, target and weight counts differ at step " +
                        std::to_string(k));
    }
    if (constraints_.weights[k].size() > 0 && !(constraints_.weights[k].minCoeff() > 0.0)) {
      throw DomainError("solver: penalty weights must be positive");
    }
    if (k == 0 && constraints_.targets[0].size() > 0) {
      throw DomainError("solver: price constraints at step 0 conflict with the initial marginal");
    }
  }
  if (!(config_.stop_tol > 0.0) || !(config_.newton_tol > 0.0)) {
    throw DomainError("solver: tolerances must be positive");
  }
  chain_ = std::make_unique<TiltedChain>(ref_, moments_, constraints_.payoffs);
  reset();
}

void SinkhornSolver::reset() {
  state_ = SinkhornState{};
  state_.potentials = PotentialSet::zeros(ref_.n_steps(), ref_.n_points(), moments_.arity(),
                                          constraints_.counts());
  down_fresh_ = false;
  up_fresh_ = false;
  cond_b_.clear();
}

void SinkhornSolver::set_potentials(const PotentialSet& pot) {
  state_.potentials = pot;
  down_fresh_ = false;
  up_fresh_ = false;
}

void SinkhornSolver::refresh() {
  chain_->forward_sweep(state_.potentials, state_.props);
  backward_with_moments();
  up_fresh_ = true;
}

void SinkhornSolver::backward_with_moments() {
  chain_->backward_sweep(state_.potentials, state_.props, &cond_b_);
  down_fresh_ = true;
}

void SinkhornSolver::solve_marginal_initial() {
  PotentialSet& pot = state_.potentials;
  const Eigen::VectorXd& up = state_.props.psi_up.at(0);
  const Eigen::VectorXd& down = state_.props.psi_down.at(0);
  Eigen::VectorXd price_term = Eigen::VectorXd::Zero(up.size());
  if (constraints_.payoffs[0].cols() > 0) price_term = constraints_.payoffs[0] * pot.lambdas[0];
  for (Eigen::Index i = 0; i < up.size(); ++i) {
    pot.phi_nu[0](i) =
        ref_.rho0(i) > 0.0 ? ref_.log_rho0(i) - up(i) - down(i) - price_term(i) : 0.0;
  }
}

void SinkhornSolver::solve_prices(std::size_t k) {
  const Eigen::MatrixXd& g = constraints_.payoffs.at(k);
  const Eigen::Index m = g.cols();
  if (m == 0) return;
  PotentialSet& pot = state_.potentials;
  const Eigen::VectorXd& c = constraints_.targets[k];
  const Eigen::VectorXd curv = ref_.h() / constraints_.weights[k].array();
  const Eigen::VectorXd base =
      state_.props.psi_up.at(k) + pot.phi_nu.at(k) + state_.props.psi_down.at(k);

  // Minimise f(L) = sum_x exp(base + G L) - L.c + sum_i curv_i L_i^2 / 2.
  auto objective = [&](const Eigen::VectorXd& lam, Eigen::VectorXd* w) {
    const Eigen::VectorXd v = base + g * lam;
    const double top = v.maxCoeff();
    if (!std::isfinite(top) || top > 700.0) return std::numeric_limits<double>::infinity();
    Eigen::VectorXd e = v.array().exp().matrix();
    if (w) *w = e;
    return e.sum() - lam.dot(c) + 0.5 * (curv.array() * lam.array().square()).sum();
  };

  Eigen::VectorXd lam = pot.lambdas.at(k);
  Eigen::VectorXd w;
  double f = objective(lam, &w);
  if (!std::isfinite(f)) throw NewtonFailure("price block: infeasible starting point", f);
  const double tol = config_.newton_tol * std::max(1.0, c.cwiseAbs().maxCoeff());
  double grad_norm = std::numeric_limits<double>::infinity();
  for (int it = 0; it <= config_.max_newton; ++it) {
    const Eigen::VectorXd grad = g.transpose() * w - c + (curv.array() * lam.array()).matrix();
    grad_norm = grad.lpNorm<Eigen::Infinity>();
    if (grad_norm <= tol) {
      pot.lambdas[k] = lam;
      return;
    }
    if (it == config_.max_newton) break;
    Eigen::MatrixXd hess = g.transpose() * w.asDiagonal() * g;
    hess.diagonal() += curv;
    const Eigen::VectorXd dir = -hess.ldlt().solve(grad);
    const double slope = grad.dot(dir);
    if (!dir.allFinite() || !(slope < 0.0)) break;
    double t = 1.0;
    bool moved = false;
    for (int halving = 0; halving <= config_.max_halvings; ++halving, t *= 0.5) {
      const Eigen::VectorXd trial = lam + t * dir;
      Eigen::VectorXd w_trial;
      const double f_trial = objective(trial, &w_trial);
      // Allow for rounding in f once the decrease falls below machine precision.
      const double slack = 64.0 * std::numeric_limits<double>::epsilon() * (std::abs(f) + 1.0);
      if (std::isfinite(f_trial) && f_trial <= f + 1e-4 * t * slope + slack) {
        lam = trial;
        w = std::move(w_trial);
        f = f_trial;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  throw NewtonFailure("price block at step " + std::to_string(k) + " did not converge",
                      grad_norm);
}

void SinkhornSolver::solve_driftvol(std::size_t k) {
  last_driftvol_residual_ = 0.0;
  if (!constraints_.martingale) return;
  if (moments_.arity() != 1) {
    throw DomainError("moment block: only scalar moment functions are supported");
  }
  PotentialSet& pot = state_.potentials;
  const Eigen::Index n = static_cast<Eigen::Index>(ref_.n_points());
  const double h = ref_.h();
  const double c_mart = constraints_.c_mart;
  const double reg = h / (2.0 * c_mart);
  const Eigen::VectorXd w = chain_->node_term(k + 1, pot) + state_.props.psi_down.at(k + 1);
  const Eigen::MatrixXd& logk = ref_.kernels.at(k)->yx;
  const Eigen::MatrixXd& bmat = moments_.yx[0];
  std::size_t flagged = 0;
  double worst = 0.0;

#pragma omp parallel for schedule(dynamic, 8) reduction(+ : flagged) reduction(max : worst)
  for (Eigen::Index i = 0; i < n; ++i) {
    if (k == 0 && !(ref_.rho0(i) > 0.0)) continue;
    const double* lk = logk.col(i).data();
    const double* bi = bmat.col(i).data();
    // Residual E_q[B] + h phi / (2 c) and its derivative Var_q[B] / h + h / (2 c),
    // where q(y) ~ P(x, y) exp(phi B / h + w(y)).
    auto eval = [&](double phi, double* deriv) {
      double top = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < n; ++j) top = std::max(top, lk[j] + w(j) + phi * bi[j] / h);
      double s0 = 0.0, s1 = 0.0, s2 = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        const double p = std::exp(lk[j] + w(j) + phi * bi[j] / h - top);
        s0 += p;
        s1 += p * bi[j];
        s2 += p * bi[j] * bi[j];
      }
      const double mean = s1 / s0;
      if (deriv) *deriv = std::max(s2 / s0 - mean * mean, 0.0) / h + reg;
      return mean + reg * phi;
    };
    double phi = pot.phi_b[k](i, 0);
    double deriv = 0.0;
    double r = eval(phi, &deriv);
    bool ok = std::isfinite(r);
    for (int it = 0; ok && std::abs(r) > config_.newton_tol; ++it) {
      if (it == config_.max_newton) {
        ok = false;
        break;
      }
      const double step = -r / deriv;
      double t = 1.0;
      bool moved = false;
      for (int halving = 0; halving <= config_.max_halvings; ++halving, t *= 0.5) {
        double d_trial = 0.0;
        const double r_trial = eval(phi + t * step, &d_trial);
        if (std::isfinite(r_trial) && std::abs(r_trial) < std::abs(r)) {
          phi += t * step;
          r = r_trial;
          deriv = d_trial;
          moved = true;
          break;
        }
      }
      if (!moved) ok = false;
    }
    if (!ok) {
      ++flagged;
      continue;
    }
    worst = std::max(worst, std::abs(r));
    pot.phi_b[k](i, 0) = phi;
    if (k > 0) pot.phi_nu[k](i) = phi * phi / (4.0 * c_mart);
  }
  stats_.flagged_points += flagged;
  last_driftvol_residual_ = worst;
}

void SinkhornSolver::sweep() {
  PotentialSet& pot = state_.potentials;
  const std::size_t n_steps = ref_.n_steps();
  if (!down_fresh_) chain_->backward_sweep(pot, state_.props);
  state_.props.psi_up.at(0) = ref_.log_rho0;

  for (std::size_t k = 0; k < n_steps; ++k) {
    if (k == 0) {
      if (constraints_.martingale) {
        solve_driftvol(0);
        chain_->propagate_down(0, pot, state_.props);
      }
      solve_marginal_initial();
    } else {
      if (constraints_.targets[k].size() > 0) {
        try {
          solve_prices(k);
        } catch (const NewtonFailure&) {
          ++stats_.rejected_blocks;
        }
      }
      solve_driftvol(k);
    }
    chain_->propagate_up(k, pot, state_.props);
  }
  if (constraints_.targets[n_steps].size() > 0) {
    try {
      solve_prices(n_steps);
    } catch (const NewtonFailure&) {
      ++stats_.rejected_blocks;
    }
  }
  backward_with_moments();
  up_fresh_ = true;
  ++stats_.sweeps;
  ++state_.iteration;
}

Eigen::VectorXd SinkhornSolver::apply(const Eigen::VectorXd& flat) {
  state_.potentials.assign(flat);
  down_fresh_ = false;
  up_fresh_ = false;
  sweep();
  return state_.potentials.flatten();
}

Metrics SinkhornSolver::evaluate() const {
  const PotentialSet& pot = state_.potentials;
  Propagators local;
  std::vector<Eigen::MatrixXd> local_b;
  const Propagators* props = &state_.props;
  const std::vector<Eigen::MatrixXd>* cond_b = &cond_b_;
  if (!(up_fresh_ && down_fresh_ && cond_b_.size() == ref_.n_steps())) {
    chain_->forward_sweep(pot, local);
    chain_->backward_sweep(pot, local, &local_b);
    props = &local;
    cond_b = &local_b;
  }

  Metrics out;
  const double log_z = chain_->log_mass(0, pot, *props);
  out.mass = std::exp(log_z);
  out.model_prices = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(constraints_.n_instruments()));
  double sq = 0.0;
  Eigen::Index slot = 0;
  for (std::size_t k = 0; k <= ref_.n_steps(); ++k) {
    const Eigen::MatrixXd& g = constraints_.payoffs[k];
    if (g.cols() == 0) continue;
    const Eigen::VectorXd nu = chain_->marginal(k, pot, *props) / out.mass;
    const Eigen::VectorXd model = g.transpose() * nu;
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      const double target = constraints_.targets[k](j);
      const double err = model(j) - target;
      sq += err * err;
      out.max_rel_price_err = std::max(out.max_rel_price_err,
                                       std::abs(err) / std::max(std::abs(target), 1e-300));
      const auto& idx = constraints_.instrument_index;
      const Eigen::Index at = k < idx.size() && static_cast<std::size_t>(j) < idx[k].size()
                                  ? static_cast<Eigen::Index>(idx[k][static_cast<std::size_t>(j)])
                                  : slot;
      if (at < out.model_prices.size()) out.model_prices(at) = model(j);
      ++slot;
    }
  }
  out.price_err_l2 = std::sqrt(sq);

  const double h = ref_.h();
  double mart = 0.0;
  for (std::size_t k = 0; k < ref_.n_steps(); ++k) {
    const Eigen::VectorXd nu = chain_->marginal(k, pot, *props) / out.mass;
    const Eigen::VectorXd b2 = ((*cond_b)[k] / h).rowwise().squaredNorm();
    mart += h * nu.dot(b2);
  }
  out.mart_err_l2 = std::sqrt(mart);
  return out;
}

double SinkhornSolver::dual_objective() const {
  const PotentialSet& pot = state_.potentials;
  const Propagators props = chain_->sweeps(pot);
  const double h = ref_.h();
  double j = 0.0;
  for (Eigen::Index i = 0; i < ref_.rho0.size(); ++i) {
    if (!(ref_.rho0(i) > 0.0)) continue;
    j += h * ref_.rho0(i) * pot.phi_nu[0](i);
    if (constraints_.martingale) {
      const double phi = pot.phi_b[0].row(i).squaredNorm();
      j -= h * ref_.rho0(i) * phi / (4.0 * constraints_.c_mart);
    }
  }
  for (std::size_t k = 0; k <= ref_.n_steps(); ++k) {
    const Eigen::VectorXd& lam = pot.lambdas[k];
    if (lam.size() == 0) continue;
    j += h * lam.dot(constraints_.targets[k]);
    j -= 0.5 * h * h * (lam.array().square() / constraints_.weights[k].array()).sum();
  }
  j -= h * (std::exp(chain_->log_mass(0, pot, props)) - 1.0);
  return j;
}

RunReport SinkhornSolver::run() {
  const auto t0 = std::chrono::steady_clock::now();
  RunReport report;
  const std::size_t sweeps_before = stats_.sweeps;
  auto record = [&](std::size_t iteration, bool accepted, double e_max, double residual_inf) {
    const Metrics m = evaluate();
    Residual r{iteration, accepted, e_max, m.price_err_l2, m.mart_err_l2, residual_inf};
    report.history.push_back(r);
    state_.residual_history.push_back(r);
  };

  if (!config_.accelerate) {
    for (std::size_t it = 1; it <= config_.max_iterations; ++it) {
      const Eigen::VectorXd before = state_.potentials.flatten();
      sweep();
      const Eigen::VectorXd after = state_.potentials.flatten();
      const double diff = (after - before).lpNorm<Eigen::Infinity>();
      const double scale = before.lpNorm<Eigen::Infinity>();
      const double e_max = scale < 1e-30 ? diff : diff / scale;
      record(it, false, e_max, diff);
      report.iterations = it;
      if (!std::isfinite(e_max)) break;
      if (e_max < config_.stop_tol) {
        report.converged = true;
        break;
      }
    }
  } else {
    AndersonConfig ac = config_.anderson;
    ac.stop_tol = config_.stop_tol;
    ac.max_iterations = config_.max_iterations;
    const AndersonResult result = anderson_solve(
        [this](const Eigen::VectorXd& x) { return apply(x); }, state_.potentials.flatten(), ac,
        [&](const AndersonStep& step) {
          const double scale = step.iterate_inf;
          record(step.iteration, step.accepted,
                 scale < 1e-30 ? step.residual_inf : step.residual_inf / scale,
                 step.residual_inf);
        });
    report.converged = result.converged;
    report.iterations = result.iterations;
  }
  report.sweeps = stats_.sweeps - sweeps_before;
  report.final = evaluate();
  report.stats = stats_;
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace lvot
