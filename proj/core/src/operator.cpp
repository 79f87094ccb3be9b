#include "lvot/operator.hpp"

#include "lvot/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace lvot {

MomentFunction MomentFunction::martingale() {
  return {{[](double x, double y) { return 1.0 - std::exp(y - x); }}};
}

MomentFunction MomentFunction::increment() {
  return {{[](double x, double y) { return y - x; }}};
}

MomentTable MomentTable::tabulate(const MomentFunction& moment, const SpaceGrid& grid) {
  MomentTable table;
  const Eigen::Index n = static_cast<Eigen::Index>(grid.n_points);
  for (const auto& f : moment.components) {
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) m(i, j) = f(grid.points(i), grid.points(j));
    }
    if (!m.allFinite()) throw DomainError("moment table: non-finite moment value");
    table.yx.push_back(m.transpose());
    table.xy.push_back(std::move(m));
  }
  return table;
}

PotentialSet PotentialSet::zeros(std::size_t n_steps, std::size_t n_points, std::size_t arity,
                                 const std::vector<std::size_t>& constraints_per_step) {
  if (constraints_per_step.size() != n_steps + 1) {
    throw DomainError("potentials: one constraint count per step is required");
  }
  const auto n = static_cast<Eigen::Index>(n_points);
  PotentialSet pot;
  pot.phi_nu.assign(n_steps + 1, Eigen::VectorXd::Zero(n));
  pot.phi_b.assign(n_steps, Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(arity)));
  for (std::size_t count : constraints_per_step) {
    pot.lambdas.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(count)));
  }
  return pot;
}

Eigen::Index PotentialSet::size() const {
  Eigen::Index total = 0;
  for (const auto& v : phi_nu) total += v.size();
  for (const auto& m : phi_b) total += m.size();
  for (const auto& v : lambdas) total += v.size();
  return total;
}

Eigen::VectorXd PotentialSet::flatten() const {
  Eigen::VectorXd flat(size());
  Eigen::Index at = 0;
  for (const auto& v : phi_nu) {
    flat.segment(at, v.size()) = v;
    at += v.size();
  }
  for (const auto& m : phi_b) {
    flat.segment(at, m.size()) = m.reshaped();
    at += m.size();
  }
  for (const auto& v : lambdas) {
    flat.segment(at, v.size()) = v;
    at += v.size();
  }
  return flat;
}

void PotentialSet::assign(const Eigen::VectorXd& flat) {
  if (flat.size() != size()) throw DomainError("potentials: flat vector has the wrong length");
  Eigen::Index at = 0;
  for (auto& v : phi_nu) {
    v = flat.segment(at, v.size());
    at += v.size();
  }
  for (auto& m : phi_b) {
    m.reshaped() = flat.segment(at, m.size());
    at += m.size();
  }
  for (auto& v : lambdas) {
    v = flat.segment(at, v.size());
    at += v.size();
  }
}

TiltedChain::TiltedChain(const ReferenceMeasure& ref, const MomentTable& moments,
                         std::vector<Eigen::MatrixXd> payoffs)
    : ref_(ref), moments_(moments), payoffs_(std::move(payoffs)) {
  const auto n = static_cast<Eigen::Index>(ref.n_points());
  payoffs_.resize(ref.n_steps() + 1);
  for (auto& g : payoffs_) {
    if (g.size() == 0) g.resize(n, 0);
    if (g.rows() != n) throw DomainError("tilted chain: payoff matrix does not match the grid");
  }
  for (const auto& m : moments.xy) {
    if (m.rows() != n || m.cols() != n) {
      throw DomainError("tilted chain: moment table does not match the grid");
    }
  }
}

Eigen::VectorXd TiltedChain::node_term(std::size_t k, const PotentialSet& pot) const {
  Eigen::VectorXd a = pot.phi_nu.at(k);
  if (payoffs_[k].cols() > 0) a.noalias() += payoffs_[k] * pot.lambdas.at(k);
  return a;
}

Eigen::MatrixXd TiltedChain::transition_log_tilt(std::size_t k, const PotentialSet& pot) const {
  Eigen::MatrixXd out = ref_.log_kernel(k);
  out.colwise() += node_term(k, pot);
  const double inv_h = 1.0 / h();
  for (std::size_t c = 0; c < moments_.arity(); ++c) {
    const Eigen::VectorXd coef = pot.phi_b.at(k).col(static_cast<Eigen::Index>(c)) * inv_h;
    out.array() += moments_.xy[c].array().colwise() * coef.array();
  }
  return out;
}

namespace {

// log sum_i exp(v_i) for values produced twice by `value(i)`.
template <typename F>
double log_sum_exp(Eigen::Index n, F&& value) {
  double m = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) m = std::max(m, value(i));
  if (m <= 0.5 * kLogZero) return kLogZero;
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) s += std::exp(value(i) - m);
  return m + std::log(s);
}

void ensure_allocated(Propagators& props, std::size_t n_steps, Eigen::Index n) {
  if (props.psi_up.size() != n_steps + 1) props.psi_up.assign(n_steps + 1, Eigen::VectorXd::Zero(n));
  if (props.psi_down.size() != n_steps + 1) {
    props.psi_down.assign(n_steps + 1, Eigen::VectorXd::Zero(n));
  }
}

}  // namespace

void TiltedChain::propagate_up(std::size_t k, const PotentialSet& pot, Propagators& props) const {
  const auto n = static_cast<Eigen::Index>(n_points());
  const Eigen::VectorXd s = props.psi_up.at(k) + node_term(k, pot);
  const Eigen::MatrixXd coef = pot.phi_b.at(k) / h();
  const Eigen::MatrixXd& logk = ref_.log_kernel(k);
  const std::size_t arity = moments_.arity();
  Eigen::VectorXd& out = props.psi_up.at(k + 1);
  out.resize(n);
  bool degenerate = false;
#pragma omp parallel for schedule(static) reduction(|| : degenerate)
  for (Eigen::Index j = 0; j < n; ++j) {
    const double* lk = logk.col(j).data();
    double v;
    if (arity == 1) {
      const double* bj = moments_.xy[0].col(j).data();
      const double* cf = coef.col(0).data();
      v = log_sum_exp(n, [&](Eigen::Index i) { return s(i) + lk[i] + cf[i] * bj[i]; });
    } else {
      v = log_sum_exp(n, [&](Eigen::Index i) {
        double t = s(i) + lk[i];
        for (std::size_t c = 0; c < arity; ++c) {
          t += coef(i, static_cast<Eigen::Index>(c)) * moments_.xy[c](i, j);
        }
        return t;
      });
    }
    out(j) = v;
    degenerate = degenerate || v <= 0.5 * kLogZero;
  }
  if (degenerate) {
    throw DegenerateMassError("forward propagation reached a point with no mass", k + 1);
  }
}

void TiltedChain::propagate_down(std::size_t k, const PotentialSet& pot, Propagators& props,
                                 Eigen::MatrixXd* cond_b) const {
  const auto n = static_cast<Eigen::Index>(n_points());
  const Eigen::VectorXd w = node_term(k + 1, pot) + props.psi_down.at(k + 1);
  const Eigen::MatrixXd coef = pot.phi_b.at(k) / h();
  const Eigen::MatrixXd& logk = ref_.kernels.at(k)->yx;
  const std::size_t arity = moments_.arity();
  const auto a = static_cast<Eigen::Index>(arity);
  Eigen::VectorXd& out = props.psi_down.at(k);
  out.resize(n);
  if (cond_b) cond_b->resize(n, a);
  bool degenerate = false;
#pragma omp parallel for schedule(static) reduction(|| : degenerate)
  for (Eigen::Index i = 0; i < n; ++i) {
    const double* lk = logk.col(i).data();
    auto value = [&](Eigen::Index j) {
      double t = w(j) + lk[j];
      for (Eigen::Index c = 0; c < a; ++c) t += coef(i, c) * moments_.yx[c](j, i);
      return t;
    };
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) m = std::max(m, value(j));
    if (m <= 0.5 * kLogZero) {
      out(i) = kLogZero;
      degenerate = true;
      continue;
    }
    double s = 0.0;
    Eigen::VectorXd sb = Eigen::VectorXd::Zero(cond_b ? a : 0);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double p = std::exp(value(j) - m);
      s += p;
      if (cond_b) {
        for (Eigen::Index c = 0; c < a; ++c) sb(c) += p * moments_.yx[c](j, i);
      }
    }
    out(i) = m + std::log(s);
    if (cond_b) cond_b->row(i) = (sb / s).transpose();
  }
  if (degenerate) {
    throw DegenerateMassError("backward propagation reached a point with no mass", k);
  }
}

void TiltedChain::forward_sweep(const PotentialSet& pot, Propagators& props) const {
  ensure_allocated(props, n_steps(), static_cast<Eigen::Index>(n_points()));
  props.psi_up[0] = ref_.log_rho0;
  for (std::size_t k = 0; k < n_steps(); ++k) propagate_up(k, pot, props);
}

void TiltedChain::backward_sweep(const PotentialSet& pot, Propagators& props,
                                 std::vector<Eigen::MatrixXd>* cond_b) const {
  ensure_allocated(props, n_steps(), static_cast<Eigen::Index>(n_points()));
  props.psi_down[n_steps()].setZero();
  if (cond_b) cond_b->resize(n_steps());
  for (std::size_t k = n_steps(); k-- > 0;) {
    propagate_down(k, pot, props, cond_b ? &(*cond_b)[k] : nullptr);
  }
}

Propagators TiltedChain::sweeps(const PotentialSet& pot) const {
  Propagators props;
  forward_sweep(pot, props);
  backward_sweep(pot, props);
  return props;
}

Eigen::VectorXd TiltedChain::marginal(std::size_t k, const PotentialSet& pot,
                                      const Propagators& props) const {
  return (props.psi_up.at(k) + node_term(k, pot) + props.psi_down.at(k)).array().exp().matrix();
}

Eigen::MatrixXd TiltedChain::pairwise_joint(std::size_t k, const PotentialSet& pot,
                                            const Propagators& props) const {
  Eigen::MatrixXd out = transition_log_tilt(k, pot);
  out.colwise() += props.psi_up.at(k);
  out.rowwise() += (node_term(k + 1, pot) + props.psi_down.at(k + 1)).transpose();
  return out.array().exp().matrix();
}

double TiltedChain::log_mass(std::size_t k, const PotentialSet& pot,
                             const Propagators& props) const {
  const Eigen::VectorXd v = props.psi_up.at(k) + node_term(k, pot) + props.psi_down.at(k);
  return log_sum_exp(v.size(), [&](Eigen::Index i) { return v(i); });
}

ConditionalMoments TiltedChain::conditional_moments(std::size_t k, const PotentialSet& pot,
                                                    const Propagators& props,
                                                    double rel_mass_floor) const {
  const auto n = static_cast<Eigen::Index>(n_points());
  const std::size_t arity = moments_.arity();
  const Eigen::VectorXd w = node_term(k + 1, pot) + props.psi_down.at(k + 1);
  const Eigen::MatrixXd coef = pot.phi_b.at(k) / h();
  const Eigen::MatrixXd& logk = ref_.kernels.at(k)->yx;
  const Eigen::VectorXd& x = ref_.space.points;

  ConditionalMoments out;
  out.beta.resize(n);
  out.alpha.resize(n);
  out.b.resize(n, static_cast<Eigen::Index>(arity));
  out.local_var.resize(n);
  out.mass = marginal(k, pot, props);
  out.missing.assign(static_cast<std::size_t>(n), false);
  const double floor = rel_mass_floor * out.mass.maxCoeff();

#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::ArrayXd v = w.array() + logk.col(i).array();
    for (std::size_t c = 0; c < arity; ++c) {
      v += coef(i, static_cast<Eigen::Index>(c)) * moments_.yx[c].col(i).array();
    }
    const Eigen::ArrayXd p = (v - v.maxCoeff()).exp();
    const double total = p.sum();
    const Eigen::ArrayXd d = x.array() - x(i);
    out.beta(i) = (p * d).sum() / total / h();
    out.alpha(i) = (p * d * d).sum() / total / h();
    for (std::size_t c = 0; c < arity; ++c) {
      const auto cc = static_cast<Eigen::Index>(c);
      out.b(i, cc) = (p * moments_.yx[c].col(i).array()).sum() / total / h();
    }
    out.local_var(i) = out.alpha(i) - h() * out.beta(i) * out.beta(i);
    out.missing[static_cast<std::size_t>(i)] = !(out.mass(i) > floor);
  }
  return out;
}

ConditionalMoments conditional_moments(const Eigen::MatrixXd& joint, const SpaceGrid& grid,
                                       double h, const MomentTable* moments) {
  const auto n = static_cast<Eigen::Index>(grid.n_points);
  if (joint.rows() != n || joint.cols() != n) {
    throw DomainError("conditional_moments: joint does not match the grid");
  }
  const std::size_t arity = moments ? moments->arity() : 0;
  ConditionalMoments out;
  out.beta = Eigen::VectorXd::Zero(n);
  out.alpha = Eigen::VectorXd::Zero(n);
  out.b = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(arity));
  out.local_var = Eigen::VectorXd::Zero(n);
  out.mass = joint.rowwise().sum();
  out.missing.assign(static_cast<std::size_t>(n), false);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double total = out.mass(i);
    if (!(total > 0.0)) {
      out.missing[static_cast<std::size_t>(i)] = true;
      continue;
    }
    const Eigen::ArrayXd p = joint.row(i).transpose().array() / total;
    const Eigen::ArrayXd d = grid.points.array() - grid.points(i);
    out.beta(i) = (p * d).sum() / h;
    out.alpha(i) = (p * d * d).sum() / h;
    for (std::size_t c = 0; c < arity; ++c) {
      out.b(i, static_cast<Eigen::Index>(c)) =
          (p * moments->xy[c].row(i).transpose().array()).sum() / h;
    }
    out.local_var(i) = out.alpha(i) - h * out.beta(i) * out.beta(i);
  }
  return out;
}

double gaussian_kl(double mu1, double var1, double mu2, double var2) {
  if (!(var1 > 0.0) || !(var2 > 0.0)) throw DomainError("gaussian_kl: variances must be positive");
  const double d = mu1 - mu2;
  return 0.5 * ((var1 + d * d) / var2 - 1.0 - std::log(var1 / var2));
}

double specific_entropy_rate(double sigma2, double sigma_bar2) {
  if (!(sigma2 > 0.0) || !(sigma_bar2 > 0.0)) {
    throw DomainError("specific_entropy_rate: variances must be positive");
  }
  const double r = sigma2 / sigma_bar2;
  return r - 1.0 - std::log(r);
}

double markov_chain_kl(const ReferenceMeasure& p, const ReferenceMeasure& q) {
  if (p.n_steps() != q.n_steps() || p.n_points() != q.n_points()) {
    throw DomainError("markov_chain_kl: chains live on different grids");
  }
  double kl = 0.0;
  for (Eigen::Index i = 0; i < p.rho0.size(); ++i) {
    if (p.rho0(i) > 0.0) kl += p.rho0(i) * (p.log_rho0(i) - q.log_rho0(i));
  }
  Eigen::VectorXd nu = p.rho0;
  for (std::size_t k = 0; k < p.n_steps(); ++k) {
    const Eigen::MatrixXd& lp = p.log_kernel(k);
    const Eigen::MatrixXd& lq = q.log_kernel(k);
    const Eigen::ArrayXXd pk = lp.array().exp();
    const Eigen::VectorXd row_kl = (pk * (lp - lq).array()).rowwise().sum().matrix();
    kl += nu.dot(row_kl);
    nu = pk.matrix().transpose() * nu;
  }
  return kl;
}

}  // namespace lvot
