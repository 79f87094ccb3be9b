#pragma once

// Block-coordinate (multi-marginal Sinkhorn) solver for the dual problem.
//
// Blocks, visited in time order within one sweep:
//   * step 0: hard initial marginal phi_nu_0 (jointly with phi_b_0),
//   * steps with instruments: multipliers Lambda_k, soft quadratic penalty
//     (gamma / 2) (E[G] - c)^2,
//   * steps 0..N-1: moment potential phi_b_k for the soft penalty
//     c_mart * b^2 on b_k = E[B | x] / h, with phi_nu_k = phi_b_k^2 / (4 c_mart).
//
// At the optimum phi_b = -2 c_mart b, so the moment block drives b to zero
// as c_mart grows.

#include "lvot/acceleration.hpp"
#include "lvot/market_model.hpp"
#include "lvot/operator.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <memory>
#include <vector>

namespace lvot {

struct ConstraintSpec {
  std::vector<Eigen::MatrixXd> payoffs;  // per step k = 0..N, n_points x |I_k|
  std::vector<Eigen::VectorXd> targets;  // per step
  std::vector<Eigen::VectorXd> weights;  // per step, gamma_i > 0
  std::vector<std::vector<std::size_t>> instrument_index;  // per step, into the source set
  double c_mart = 1e4;
  bool martingale = true;  // false disables the moment block entirely

  std::size_t n_instruments() const;
  std::vector<std::size_t> counts() const;

  /// No instruments at all on a grid with n_steps steps.
  static ConstraintSpec empty(std::size_t n_steps, std::size_t n_points);
  /// Vanilla payoffs of `set` on the reference grid, placed at their maturity steps.
  static ConstraintSpec from_instruments(const InstrumentSet& set, const ReferenceMeasure& ref,
                                         double c_mart);
};

struct SolverConfig {
  double stop_tol = 1e-9;  // on e_max, or on |g|_inf when accelerated
  std::size_t max_iterations = 2000;
  double newton_tol = 1e-12;
  int max_newton = 100;
  int max_halvings = 30;
  bool accelerate = false;
  AndersonConfig anderson;
};

struct Residual {
  std::size_t iteration = 0;
  bool accepted = false;  // an accelerated candidate passed the safeguard
  double e_max = 0.0;
  double price_err_l2 = 0.0;
  double mart_err_l2 = 0.0;
  double residual_inf = 0.0;  // |s(x) - x|_inf
};

struct Metrics {
  double mass = 0.0;
  double price_err_l2 = 0.0;
  double mart_err_l2 = 0.0;
  double max_rel_price_err = 0.0;
  Eigen::VectorXd model_prices;  // ordered like the source instrument set
};

struct SweepStats {
  std::size_t flagged_points = 0;     // pointwise Newton failures, cumulative
  std::size_t rejected_blocks = 0;    // price-block Newton failures, cumulative
  std::size_t sweeps = 0;
};

struct SinkhornState {
  PotentialSet potentials;
  Propagators props;
  std::size_t iteration = 0;
  std::vector<Residual> residual_history;
};

struct RunReport {
  bool converged = false;
  std::size_t iterations = 0;
  std::size_t sweeps = 0;
  double seconds = 0.0;
  std::vector<Residual> history;
  Metrics final;
  SweepStats stats;
};

class SinkhornSolver {
 public:
  /// ref must outlive the solver.
  SinkhornSolver(const ReferenceMeasure& ref, ConstraintSpec constraints,
                 SolverConfig config = {}, MomentFunction moment = MomentFunction::martingale());

  const TiltedChain& chain() const { return *chain_; }
  const ConstraintSpec& constraints() const { return constraints_; }
  const SolverConfig& config() const { return config_; }
  SolverConfig& config() { return config_; }
  const SinkhornState& state() const { return state_; }
  const PotentialSet& potentials() const { return state_.potentials; }
  const Propagators& props() const { return state_.props; }
  const SweepStats& stats() const { return stats_; }

  /// Replaces the potentials; propagators are rebuilt on demand.
  void set_potentials(const PotentialSet& pot);
  void reset();

  /// Recomputes both propagators from the current potentials.
  void refresh();

  // Individual blocks. Each one reads the propagators it needs, which must
  // be current for the blocks already updated (the sweep guarantees this).
  void solve_marginal_initial();
  void solve_prices(std::size_t k);
  void solve_driftvol(std::size_t k);

  /// One full pass: downward propagation when stale, then the upward pass.
  void sweep();
  /// Fixed-point map used by the accelerator: sweep from a flat potential vector.
  Eigen::VectorXd apply(const Eigen::VectorXd& flat);

  /// Price and moment errors of the current state (propagators must be current).
  Metrics evaluate() const;
  /// Dual objective at the current potentials, from freshly computed propagators.
  double dual_objective() const;

  /// Sweeps until the stopping rule holds or max_iterations is reached.
  RunReport run();

  /// Largest |pointwise residual| over non-flagged points at the last moment solve.
  double last_driftvol_residual() const { return last_driftvol_residual_; }

 private:
  void backward_with_moments();

  const ReferenceMeasure& ref_;
  ConstraintSpec constraints_;
  SolverConfig config_;
  MomentTable moments_;
  std::unique_ptr<TiltedChain> chain_;
  SinkhornState state_;
  SweepStats stats_;
  std::vector<Eigen::MatrixXd> cond_b_;
  bool down_fresh_ = false;
  bool up_fresh_ = false;
  double last_driftvol_residual_ = 0.0;
};

}  // namespace lvot
