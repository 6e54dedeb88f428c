#pragma once

// Independent reference for unconstrained CTMDPs: enumerate every
// deterministic stationary policy and solve its stationary distribution by
// Gaussian elimination.

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "civitas/atcu.hpp"

namespace civitas::testing {

// Irreducible by construction: every off-diagonal rate is positive.
inline Ctmdp random_ctmdp(std::mt19937_64& rng, std::size_t n, std::size_t m) {
  std::vector<std::string> states, actions;
  for (std::size_t i = 0; i < n; ++i) states.push_back("s" + std::to_string(i));
  for (std::size_t a = 0; a < m; ++a) actions.push_back("a" + std::to_string(a));
  auto c = make_ctmdp(states, actions, 1);
  std::uniform_real_distribution<double> rate(0.1, 2.0), reward(-5.0, 10.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) c.rate[i][a][j] = rate(rng);
      c.reward[0][i][a] = reward(rng);
    }
  return c;
}

// pi Q = 0, sum pi = 1 for the chain where state i uses action pol[i].
inline std::vector<double> stationary(const Ctmdp& c, const std::vector<std::size_t>& pol) {
  const auto n = c.num_states();
  // Rows: balance for states 1..n-1 plus normalization; unknowns pi_0..pi_{n-1}.
  std::vector<std::vector<double>> A(n, std::vector<double>(n + 1, 0.0));
  for (std::size_t j = 1; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) A[j - 1][i] = c.q(i, j, pol[i]);
  for (std::size_t i = 0; i < n; ++i) A[n - 1][i] = 1.0;
  A[n - 1][n] = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
    if (std::abs(A[piv][col]) < 1e-14) throw std::runtime_error("singular stationary system");
    std::swap(A[piv], A[col]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = A[r][col] / A[col][col];
      for (std::size_t k = col; k <= n; ++k) A[r][k] -= f * A[col][k];
    }
  }
  std::vector<double> pi(n);
  for (std::size_t i = 0; i < n; ++i) pi[i] = A[i][n] / A[i][i];
  return pi;
}

inline double policy_value(const Ctmdp& c, const std::vector<std::size_t>& pol) {
  const auto pi = stationary(c, pol);
  double v = 0.0;
  for (std::size_t i = 0; i < c.num_states(); ++i) v += pi[i] * c.reward[0][i][pol[i]];
  return v;
}

inline double best_deterministic(const Ctmdp& c) {
  const auto n = c.num_states();
  std::vector<std::size_t> pol(n, 0);
  double best = -std::numeric_limits<double>::infinity();
  while (true) {
    bool ok = true;
    for (std::size_t i = 0; i < n; ++i) ok = ok && c.admits(i, pol[i]);
    if (ok) best = std::max(best, policy_value(c, pol));
    std::size_t k = 0;
    while (k < n && ++pol[k] == c.num_actions()) pol[k++] = 0;
    if (k == n) break;
  }
  return best;
}

}  // namespace civitas::testing
