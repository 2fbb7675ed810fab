#pragma once

// Reference computations that share no code path with the filters: a dense
// matrix exponential of the lattice death process, direct products of
// one-dimensional binomial thinnings, and a Runge-Kutta solution of the ODE
// for the deterministic dual.

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "measure_filter/errors.hpp"

namespace measure_filter::oracle {

using Dense = std::vector<std::uint32_t>;

/// All integer vectors n with 0 <= n <= m.
inline std::vector<Dense> lattice_below(const Dense& m) {
  std::vector<Dense> out;
  Dense n(m.size(), 0);
  while (true) {
    out.push_back(n);
    std::size_t j = 0;
    for (; j < m.size(); ++j) {
      if (n[j] < m[j]) {
        ++n[j];
        break;
      }
      n[j] = 0;
    }
    if (j == m.size()) return out;
  }
}

/// Row m of exp(Q tau) for the death process that removes one lineage of
/// type i at rate n_i (theta + |n| - 1) / 2.
inline std::map<Dense, double> death_process_row(const Dense& m, double theta, double tau) {
  const auto states = lattice_below(m);
  std::map<Dense, std::size_t> index;
  for (std::size_t k = 0; k < states.size(); ++k) index[states[k]] = k;
  const auto size = static_cast<Eigen::Index>(states.size());
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(size, size);
  for (std::size_t k = 0; k < states.size(); ++k) {
    const auto& n = states[k];
    double total = 0.0;
    for (auto c : n) total += c;
    double out_rate = 0.0;
    for (std::size_t i = 0; i < n.size(); ++i) {
      if (n[i] == 0) continue;
      Dense target = n;
      --target[i];
      const double rate = n[i] * (theta + total - 1.0) / 2.0;
      q(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(index.at(target))) += rate;
      out_rate += rate;
    }
    q(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) = -out_rate;
  }
  const Eigen::MatrixXd p = (q * tau).exp();
  std::map<Dense, double> row;
  const auto from = static_cast<Eigen::Index>(index.at(m));
  for (std::size_t k = 0; k < states.size(); ++k) row[states[k]] = p(from, static_cast<Eigen::Index>(k));
  return row;
}

/// p(t) = S_t / s0 with S_t = beta s0 / ((beta + s0) e^{beta t / 2} - s0).
inline double cir_survival(double s0, double beta, double tau) {
  const double st = beta * s0 / ((beta + s0) * std::exp(beta * tau / 2.0) - s0);
  return st / s0;
}

inline double binomial(std::uint32_t k, std::uint32_t n, double p) {
  double c = 1.0;
  for (std::uint32_t j = 1; j <= k; ++j) c = c * (n - k + j) / j;
  return c * std::pow(p, k) * std::pow(1.0 - p, n - k);
}

/// Weights of the product over coordinates of one-dimensional binomial
/// thinnings of m with survival probability p.
inline std::map<Dense, double> product_thinning(const Dense& m, double p) {
  std::map<Dense, double> out;
  for (const auto& n : lattice_below(m)) {
    double w = 1.0;
    for (std::size_t i = 0; i < m.size(); ++i) w *= binomial(n[i], m[i], p);
    out[n] = w;
  }
  return out;
}

/// Classical fourth-order Runge-Kutta for dS/dt = -S (beta + S) / 2.
inline double rk4_dual(double s0, double beta, double tau, std::size_t steps) {
  auto f = [beta](double s) { return -s * (beta + s) / 2.0; };
  const double h = tau / static_cast<double>(steps);
  double s = s0;
  for (std::size_t k = 0; k < steps; ++k) {
    const double k1 = f(s);
    const double k2 = f(s + h * k1 / 2.0);
    const double k3 = f(s + h * k2 / 2.0);
    const double k4 = f(s + h * k3);
    s += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
  }
  return s;
}

/// Multivariate hypergeometric pmf by counting: prod C(m_j, i_j) / C(|m|, |i|).
inline double hypergeometric_by_counting(const Dense& i, const Dense& m) {
  auto choose = [](std::uint64_t n, std::uint64_t k) -> unsigned __int128 {
    if (k > n) return 0;
    unsigned __int128 r = 1;
    for (std::uint64_t j = 1; j <= k; ++j) r = r * (n - k + j) / j;
    return r;
  };
  unsigned __int128 num = 1;
  std::uint64_t ti = 0;
  std::uint64_t tm = 0;
  for (std::size_t j = 0; j < m.size(); ++j) {
    num *= choose(m[j], i[j]);
    ti += i[j];
    tm += m[j];
  }
  return static_cast<double>(static_cast<long double>(num) / static_cast<long double>(choose(tm, ti)));
}

}  // namespace measure_filter::oracle
