#pragma once

// Dual potentials and the tilted Markov chain they define.
//
// A path x_0..x_N has log-density, relative to the reference chain,
//
//   sum_k a_k(x_k) + sum_{k<N} phi_b_k(x_k) . B(x_k, x_{k+1}) / h,
//   a_k = phi_nu_k + G_k Lambda_k,
//
// where G_k holds the payoffs of the instruments maturing at step k. The
// forward and backward propagators psi_u / psi_d accumulate this density in
// log domain so that marginals and pairwise joints cost O(N_X^2) per step.

#include "lvot/discretization.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <vector>

namespace lvot {

/// Vector-valued moment B(x, y) of a transition, one function per component.
struct MomentFunction {
  std::vector<std::function<double(double, double)>> components;

  std::size_t arity() const { return components.size(); }

  /// B(x, y) = 1 - exp(y - x); zero conditional mean makes exp(X) a martingale.
  static MomentFunction martingale();
  /// B(x, y) = y - x.
  static MomentFunction increment();
};

/// A moment function tabulated on the pairs of a grid, in both orientations.
struct MomentTable {
  std::vector<Eigen::MatrixXd> xy;  // xy[c](i, j) = B_c(x_i, x_j)
  std::vector<Eigen::MatrixXd> yx;  // transpose of xy[c]

  std::size_t arity() const { return xy.size(); }
  static MomentTable tabulate(const MomentFunction& moment, const SpaceGrid& grid);
};

struct PotentialSet {
  std::vector<Eigen::VectorXd> phi_nu;   // k = 0..N
  std::vector<Eigen::MatrixXd> phi_b;    // k = 0..N-1, n_points x arity
  std::vector<Eigen::VectorXd> lambdas;  // k = 0..N, one entry per instrument at step k

  static PotentialSet zeros(std::size_t n_steps, std::size_t n_points, std::size_t arity,
                            const std::vector<std::size_t>& constraints_per_step);

  std::size_t n_steps() const { return phi_b.size(); }
  Eigen::Index size() const;
  /// phi_nu for every step, then phi_b, then the multipliers.
  Eigen::VectorXd flatten() const;
  void assign(const Eigen::VectorXd& flat);
};

struct Propagators {
  std::vector<Eigen::VectorXd> psi_up;    // k = 0..N
  std::vector<Eigen::VectorXd> psi_down;  // k = 0..N
};

struct ConditionalMoments {
  Eigen::VectorXd beta;       // E[X_{k+1} - X_k | x] / h
  Eigen::VectorXd alpha;      // E[(X_{k+1} - X_k)^2 | x] / h
  Eigen::MatrixXd b;          // E[B | x] / h, n_points x arity
  Eigen::VectorXd local_var;  // alpha - h beta^2
  Eigen::VectorXd mass;       // marginal weight of x
  std::vector<bool> missing;  // rows with no usable mass
};

class TiltedChain {
 public:
  /// payoffs[k] is n_points x |I_k|; steps without instruments may hold an
  /// empty matrix. Both ref and moments must outlive the chain.
  TiltedChain(const ReferenceMeasure& ref, const MomentTable& moments,
              std::vector<Eigen::MatrixXd> payoffs);

  const ReferenceMeasure& reference() const { return ref_; }
  const MomentTable& moments() const { return moments_; }
  const Eigen::MatrixXd& payoffs(std::size_t k) const { return payoffs_.at(k); }
  std::size_t n_steps() const { return ref_.n_steps(); }
  std::size_t n_points() const { return ref_.n_points(); }
  double h() const { return ref_.h(); }

  /// a_k = phi_nu_k + G_k Lambda_k.
  Eigen::VectorXd node_term(std::size_t k, const PotentialSet& pot) const;

  /// L_k(x, y) = a_k(x) + phi_b_k(x) . B(x, y) / h + log P(x -> y).
  Eigen::MatrixXd transition_log_tilt(std::size_t k, const PotentialSet& pot) const;

  /// psi_up[k + 1] from psi_up[k] and the step-k potentials.
  void propagate_up(std::size_t k, const PotentialSet& pot, Propagators& props) const;
  /// psi_down[k] from psi_down[k + 1] and the potentials of steps k, k + 1.
  /// When cond_b is given it receives E[B | x] for the step-k transition
  /// (n_points x arity, not divided by h) at no extra exponentials.
  void propagate_down(std::size_t k, const PotentialSet& pot, Propagators& props,
                      Eigen::MatrixXd* cond_b = nullptr) const;

  /// Allocates props if needed, sets psi_up[0] = log rho0, runs every step.
  void forward_sweep(const PotentialSet& pot, Propagators& props) const;
  /// Allocates props if needed, sets psi_down[N] = 0, runs every step.
  void backward_sweep(const PotentialSet& pot, Propagators& props,
                      std::vector<Eigen::MatrixXd>* cond_b = nullptr) const;
  Propagators sweeps(const PotentialSet& pot) const;

  /// exp(psi_up + a_k + psi_down); sums to the total mass.
  Eigen::VectorXd marginal(std::size_t k, const PotentialSet& pot, const Propagators& props) const;
  /// Joint weight of (x_k, x_{k+1}); rows sum to marginal(k).
  Eigen::MatrixXd pairwise_joint(std::size_t k, const PotentialSet& pot,
                                 const Propagators& props) const;
  /// log of the total mass, read at step k.
  double log_mass(std::size_t k, const PotentialSet& pot, const Propagators& props) const;

  /// Conditional moments of the step-k transition, computed row by row in
  /// log domain. Rows whose mass is at most rel_mass_floor * max mass are
  /// flagged missing (their moments are still filled in).
  ConditionalMoments conditional_moments(std::size_t k, const PotentialSet& pot,
                                         const Propagators& props,
                                         double rel_mass_floor = 0.0) const;

 private:
  const ReferenceMeasure& ref_;
  const MomentTable& moments_;
  std::vector<Eigen::MatrixXd> payoffs_;
};

/// Conditional moments read off an explicit joint matrix on grid x grid.
/// Zero-mass rows are flagged missing and left at zero.
ConditionalMoments conditional_moments(const Eigen::MatrixXd& joint, const SpaceGrid& grid,
                                       double h, const MomentTable* moments = nullptr);

/// KL(N(mu1, var1) | N(mu2, var2)).
double gaussian_kl(double mu1, double var1, double mu2, double var2);

/// Un-halved specific relative entropy integrand r - 1 - log r, r = sigma2 / sigma_bar2.
double specific_entropy_rate(double sigma2, double sigma_bar2);

/// Factor applied to specific_entropy_rate when comparing with h * KL of chains.
inline constexpr double kSpecificEntropyFactor = 0.5;

/// KL divergence between two Markov chains on the same time and space grid.
double markov_chain_kl(const ReferenceMeasure& p, const ReferenceMeasure& q);

}  // namespace lvot
