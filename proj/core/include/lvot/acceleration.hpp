#pragma once

// Safeguarded Anderson acceleration of a fixed-point map s, with residual
// g(x) = s(x) - x. Differences of consecutive iterates and residuals form
// the least-squares system; a candidate is kept only when its residual does
// not grow by more than a factor tau.

#include <Eigen/Core>

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <vector>

namespace lvot {

struct AndersonConfig {
  std::size_t depth = 5;       // stored iterates; depth 1 is the plain iteration
  double ridge = 1e-10;        // Tikhonov term added to the Gram matrix
  bool relative_ridge = true;  // scale ridge by the largest Gram entry
  double tau = 2.0;            // safeguard factor
  double stop_tol = 1e-9;      // stop when |g|_inf < stop_tol
  std::size_t max_iterations = 1000;
};

struct Proposal {
  Eigen::VectorXd x;
  Eigen::VectorXd gamma;
  bool accelerated = false;  // false: plain step x + g
  std::string note;          // reason for falling back, if any
};

class AndersonWindow {
 public:
  explicit AndersonWindow(std::size_t depth) : depth_(depth == 0 ? 1 : depth) {}

  void push(const Eigen::VectorXd& x, const Eigen::VectorXd& g);
  void clear();
  std::size_t size() const { return xs_.size(); }
  std::size_t depth() const { return depth_; }
  const Eigen::VectorXd& x() const { return xs_.back(); }
  const Eigen::VectorXd& g() const { return gs_.back(); }

  /// Accelerated candidate from the stored history, or the plain step
  /// x + g when fewer than two entries are stored or the solve fails.
  Proposal propose(double ridge, bool relative_ridge) const;

 private:
  std::size_t depth_;
  std::deque<Eigen::VectorXd> xs_;
  std::deque<Eigen::VectorXd> gs_;
};

/// Weights alpha over the stored iterates, oldest first, implied by gamma.
/// They sum to one.
Eigen::VectorXd alpha_from_gamma(const Eigen::VectorXd& gamma);

/// |g(candidate)|_2 <= tau |g(x)|_2.
bool safeguard_accepts(double candidate_residual_l2, double residual_l2, double tau);

/// |g|_inf < stop_tol, strictly.
bool stop_check(const Eigen::VectorXd& g, double stop_tol);

using FixedPointMap = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct AndersonStep {
  std::size_t iteration = 0;
  bool accelerated = false;  // an accelerated candidate was proposed
  bool accepted = false;     // ... and passed the safeguard
  double residual_inf = 0.0;
  double residual_l2 = 0.0;
  double previous_l2 = 0.0;
  double step_inf = 0.0;     // |x_new - x_old|_inf
  double iterate_inf = 0.0;  // |x_new|_inf
  std::size_t evaluations = 0;
};

struct AndersonResult {
  Eigen::VectorXd x;
  Eigen::VectorXd g;
  bool converged = false;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  std::vector<AndersonStep> steps;
};

/// Runs the safeguarded controller from x0. `on_step` sees every iteration
/// after the new iterate and its residual are known.
AndersonResult anderson_solve(const FixedPointMap& map, Eigen::VectorXd x0,
                              const AndersonConfig& config,
                              const std::function<void(const AndersonStep&)>& on_step = {});

}  // namespace lvot
