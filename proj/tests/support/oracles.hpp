#pragma once

// Reference computations used only by the tests. Each one is written
// independently of the library code it checks: brute force, quadrature,
// extended precision or a textbook algorithm.

#include "lvot/discretization.hpp"
#include "lvot/market_model.hpp"
#include "lvot/operator.hpp"

#include <Eigen/Core>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace lvot::oracle {

using Real = long double;

/// Marginals and consecutive joints of the path measure
///   rho0(x_0) prod_k P_k(x_k, x_{k+1}) exp(W(x_0..x_N))
/// with W = sum_k [phi_nu_k + G_k Lambda_k](x_k) + sum_{k<N} phi_b_k(x_k) B(x_k, x_{k+1}) / h,
/// obtained by listing every path. Nothing is normalised.
struct Enumeration {
  std::vector<std::vector<Real>> marginals;  // [k][i]
  std::vector<std::vector<Real>> joints;     // [k][i * n + j]
  Real mass = 0;
};

inline Enumeration enumerate_paths(const ReferenceMeasure& ref, const PotentialSet& pot,
                                   const std::vector<Eigen::MatrixXd>& payoffs,
                                   const std::function<double(double, double)>& moment) {
  const std::size_t n = ref.n_points();
  const std::size_t steps = ref.n_steps();
  const Real h = ref.h();
  Enumeration out;
  out.marginals.assign(steps + 1, std::vector<Real>(n, 0));
  out.joints.assign(steps, std::vector<Real>(n * n, 0));

  std::vector<Eigen::MatrixXd> kernel(steps);
  for (std::size_t k = 0; k < steps; ++k) kernel[k] = ref.kernel(k);

  std::vector<std::size_t> path(steps + 1, 0);
  std::size_t total = 1;
  for (std::size_t k = 0; k <= steps; ++k) total *= n;
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t c = code;
    for (std::size_t k = 0; k <= steps; ++k) {
      path[k] = c % n;
      c /= n;
    }
    Real weight = ref.rho0(static_cast<Eigen::Index>(path[0]));
    if (weight == 0) continue;
    Real exponent = 0;
    for (std::size_t k = 0; k <= steps; ++k) {
      const auto i = static_cast<Eigen::Index>(path[k]);
      exponent += pot.phi_nu[k](i);
      for (Eigen::Index m = 0; m < payoffs[k].cols(); ++m) {
        exponent += static_cast<Real>(payoffs[k](i, m)) * pot.lambdas[k](m);
      }
      if (k < steps) {
        const auto j = static_cast<Eigen::Index>(path[k + 1]);
        weight *= kernel[k](i, j);
        exponent += static_cast<Real>(pot.phi_b[k](i, 0)) *
                    moment(ref.space.points(i), ref.space.points(j)) / h;
      }
    }
    weight *= std::exp(exponent);
    out.mass += weight;
    for (std::size_t k = 0; k <= steps; ++k) {
      out.marginals[k][path[k]] += weight;
      if (k < steps) out.joints[k][path[k] * n + path[k + 1]] += weight;
    }
  }
  return out;
}

/// KL(N(mu1, v1) | N(mu2, v2)) by adaptive Gauss-Kronrod on the real line.
inline double gaussian_kl_quadrature(double mu1, double v1, double mu2, double v2) {
  const double pi = 3.14159265358979323846;
  auto log_p = [&](double x) { return -0.5 * std::log(2 * pi * v1) - (x - mu1) * (x - mu1) / (2 * v1); };
  auto log_q = [&](double x) { return -0.5 * std::log(2 * pi * v2) - (x - mu2) * (x - mu2) / (2 * v2); };
  auto f = [&](double x) { return std::exp(log_p(x)) * (log_p(x) - log_q(x)); };
  const double s = std::sqrt(v1);
  // Substitute x = mu1 + s z and integrate z over a range where the density vanishes.
  auto g = [&](double z) { return s * f(mu1 + s * z); };
  double err = 0;
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(g, -40.0, 40.0, 15, 1e-14,
                                                                       &err);
}

/// Undiscounted Black-Scholes price by integrating the payoff against the
/// lognormal density of the terminal price.
inline double bs_price_quadrature(double forward, double strike, double total_variance,
                                  OptionKind kind) {
  const double pi = 3.14159265358979323846;
  const double s = std::sqrt(total_variance);
  auto integrand = [&](double z) {
    const double st = forward * std::exp(-0.5 * total_variance + s * z);
    const double pay = kind == OptionKind::call ? std::max(st - strike, 0.0)
                                                : std::max(strike - st, 0.0);
    return pay * std::exp(-0.5 * z * z) / std::sqrt(2 * pi);
  };
  // Split at the kink so the integrand is smooth on each piece.
  const double kink = (std::log(strike / forward) + 0.5 * total_variance) / s;
  double err = 0;
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  const double lo = std::min(-40.0, kink - 1.0);
  const double hi = std::max(40.0, kink + 1.0);
  return GK::integrate(integrand, lo, kink, 15, 1e-15, &err) +
         GK::integrate(integrand, kink, hi, 15, 1e-15, &err);
}

/// Power-law SSVI total variance evaluated in 50-digit arithmetic.
inline double ssvi_total_variance_mp(double eta, double lambda, double rho, double slope,
                                     double k_in, double t_in) {
  using mp = boost::multiprecision::cpp_bin_float_50;
  const mp theta = mp(slope) * mp(t_in);
  const mp phi = mp(eta) / pow(theta, mp(lambda));
  const mp k(k_in);
  const mp r(rho);
  const mp pk = phi * k + r;
  return static_cast<double>(theta / 2 * (1 + r * phi * k + sqrt(pk * pk + (1 - r * r))));
}

/// Classical two-marginal Sinkhorn (IPFP) between mu0 and mu1 for the kernel
/// K. Returns the coupling; iterates until both marginals match within tol.
inline Eigen::MatrixXd ipfp(const Eigen::MatrixXd& kernel, const Eigen::VectorXd& mu0,
                            const Eigen::VectorXd& mu1, double tol, std::size_t max_iter,
                            std::size_t* iterations = nullptr) {
  const Eigen::Index n = kernel.rows();
  // Log domain: pi_ij = exp(f_i + log K_ij + g_j).
  Eigen::MatrixXd logk = kernel.array().log().matrix();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n), g = Eigen::VectorXd::Zero(n);
  auto lse = [](const Eigen::VectorXd& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return -std::numeric_limits<double>::infinity();
    return m + std::log((v.array() - m).exp().sum());
  };
  Eigen::MatrixXd pi(n, n);
  std::size_t it = 0;
  for (; it < max_iter; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      f(i) = mu0(i) > 0 ? std::log(mu0(i)) - lse(logk.row(i).transpose() + g)
                        : -std::numeric_limits<double>::infinity();
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      Eigen::VectorXd col = logk.col(j) + f;
      g(j) = mu1(j) > 0 ? std::log(mu1(j)) - lse(col) : -std::numeric_limits<double>::infinity();
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        const double e = f(i) + logk(i, j) + g(j);
        pi(i, j) = std::isfinite(e) ? std::exp(e) : 0.0;
      }
    }
    const double err = (pi.rowwise().sum() - mu0).lpNorm<Eigen::Infinity>();
    if (err < tol) break;
  }
  if (iterations) *iterations = it;
  return pi;
}

/// Uniform draws in [lo, hi] for random potentials.
inline PotentialSet random_potentials(std::size_t steps, std::size_t n,
                                      const std::vector<std::size_t>& counts, double lo,
                                      double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  PotentialSet pot = PotentialSet::zeros(steps, n, 1, counts);
  for (auto& v : pot.phi_nu) for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = u(rng);
  for (auto& m : pot.phi_b) for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  for (auto& v : pot.lambdas) for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = u(rng);
  return pot;
}

}  // namespace lvot::oracle
