// Shared fixtures for the test suite: hand-built reference networks, seeded
// random network generators, and small comparison helpers.
#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "termite/belief_net.hpp"
#include "termite/common.hpp"
#include "termite/oracle.hpp"
#include "termite/session.hpp"

namespace testsup {

using namespace termite;

// Seven binary variables, two root chains joining at D, a spur at G:
// A->B, A->C, B->D, C->D, F->D, E->F, F->G.
inline BeliefNet fig2_net() {
  BeliefNet net;
  net.add_variable("A", {"t", "f"}, {}, {{0.9, 0.1}});
  net.add_variable("B", {"t", "f"}, {"A"}, {{0.8, 0.2}, {0.3, 0.7}});
  net.add_variable("C", {"t", "f"}, {"A"}, {{0.7, 0.3}, {0.4, 0.6}});
  net.add_variable("E", {"t", "f"}, {}, {{0.6, 0.4}});
  net.add_variable("F", {"t", "f"}, {"E"}, {{0.75, 0.25}, {0.2, 0.8}});
  net.add_variable("D", {"t", "f"}, {"B", "C", "F"},
                   {{0.95, 0.05}, {0.9, 0.1}, {0.85, 0.15}, {0.2, 0.8},
                    {0.6, 0.4}, {0.3, 0.7}, {0.25, 0.75}, {0.05, 0.95}});
  net.add_variable("G", {"t", "f"}, {"F"}, {{0.55, 0.45}, {0.1, 0.9}});
  return net;
}

// Four binary variables, A at the top, B and C in the middle, D at the
// bottom; no B->C arc yet, so tests can add one.
inline BeliefNet diamond_net() {
  BeliefNet net;
  net.add_variable("A", {"t", "f"}, {}, {{0.9, 0.1}});
  net.add_variable("B", {"t", "f"}, {"A"}, {{0.8, 0.2}, {0.3, 0.7}});
  net.add_variable("C", {"t", "f"}, {"A"}, {{0.7, 0.3}, {0.4, 0.6}});
  net.add_variable("D", {"t", "f"}, {"B", "C"},
                   {{0.95, 0.05}, {0.9, 0.1}, {0.2, 0.8}, {0.05, 0.95}});
  return net;
}

// X0 -> X1 -> ... -> X(k-1), binary.
inline BeliefNet chain_net(std::size_t k) {
  BeliefNet net;
  net.add_variable("X0", {"t", "f"}, {}, {{0.85, 0.15}});
  for (std::size_t i = 1; i < k; ++i)
    net.add_variable("X" + std::to_string(i), {"t", "f"},
                     {"X" + std::to_string(i - 1)},
                     {{0.9, 0.1}, {0.2, 0.8}});
  return net;
}

// Random binary DAG where every table row keeps at least (n-1)/n of its mass
// on one value; `max_parents` caps the in-degree.
inline BeliefNet random_skewed_net(std::size_t n, std::size_t max_parents,
                                   std::mt19937_64& rng) {
  BeliefNet net;
  const double thr = double(n - 1) / double(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t k = 0;
    if (i > 0 && max_parents > 0)
      k = std::size_t(u01(rng) * double(std::min(i, max_parents) + 1));
    if (k > std::min(i, max_parents)) k = std::min(i, max_parents);
    std::vector<std::size_t> pool(i);
    for (std::size_t j = 0; j < i; ++j) pool[j] = j;
    std::vector<std::string> parents;
    for (std::size_t j = 0; j < k; ++j) {
      std::size_t pick = std::size_t(u01(rng) * double(pool.size()));
      if (pick >= pool.size()) pick = pool.size() - 1;
      parents.push_back("V" + std::to_string(pool[pick]));
      pool.erase(pool.begin() + std::ptrdiff_t(pick));
    }
    std::size_t rows = 1;
    for (std::size_t j = 0; j < parents.size(); ++j) rows *= 2;
    std::vector<std::vector<double>> table;
    for (std::size_t r = 0; r < rows; ++r) {
      double big = thr + u01(rng) * (1.0 - thr) * 0.999;
      std::size_t at = u01(rng) < 0.5 ? 0 : 1;
      std::vector<double> row(2);
      row[at] = big;
      row[1 - at] = 1.0 - big;
      table.push_back(row);
    }
    net.add_variable("V" + std::to_string(i), {"v0", "v1"}, parents, table);
  }
  return net;
}

// Random binary DAG with unconstrained (but nowhere-zero) rows.
inline BeliefNet random_net(std::size_t n, std::size_t max_parents,
                            std::mt19937_64& rng) {
  BeliefNet net;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t k = 0;
    if (i > 0 && max_parents > 0)
      k = std::size_t(u01(rng) * double(std::min(i, max_parents) + 1));
    if (k > std::min(i, max_parents)) k = std::min(i, max_parents);
    std::vector<std::size_t> pool(i);
    for (std::size_t j = 0; j < i; ++j) pool[j] = j;
    std::vector<std::string> parents;
    for (std::size_t j = 0; j < k; ++j) {
      std::size_t pick = std::size_t(u01(rng) * double(pool.size()));
      if (pick >= pool.size()) pick = pool.size() - 1;
      parents.push_back("V" + std::to_string(pool[pick]));
      pool.erase(pool.begin() + std::ptrdiff_t(pick));
    }
    std::size_t rows = 1;
    for (std::size_t j = 0; j < parents.size(); ++j) rows *= 2;
    std::vector<std::vector<double>> table;
    for (std::size_t r = 0; r < rows; ++r) {
      double a = 0.05 + 0.9 * u01(rng);
      table.push_back({a, 1.0 - a});
    }
    net.add_variable("V" + std::to_string(i), {"v0", "v1"}, parents, table);
  }
  return net;
}

// Evidence over `k` random variables not in `avoid`.
inline Binding random_evidence(const BeliefNet& net, std::size_t k,
                               const std::vector<VarId>& avoid,
                               std::mt19937_64& rng) {
  Binding ev;
  std::vector<VarId> pool;
  for (VarId v = 0; v < net.size(); ++v)
    if (!set_contains(avoid, v)) pool.push_back(v);
  for (std::size_t j = 0; j < k && !pool.empty(); ++j) {
    std::size_t pick = std::size_t(u01(rng) * double(pool.size()));
    if (pick >= pool.size()) pick = pool.size() - 1;
    VarId v = pool[pick];
    pool.erase(pool.begin() + std::ptrdiff_t(pick));
    std::size_t nv = net.var(v).values.size();
    std::size_t val = std::size_t(u01(rng) * double(nv));
    if (val >= nv) val = nv - 1;
    ev.set(v, ValIx(val));
  }
  return ev;
}

// Exhausts a query in a fresh session and returns the per-assignment mass.
inline std::map<Binding, double> exhaust_query(Session& s, std::size_t qi) {
  auto rep = s.anytime_query(qi, std::size_t(1) << 24);
  std::map<Binding, double> out;
  for (const auto& cb : rep.combos) out[cb.assignment] = cb.lower;
  return out;
}

}  // namespace testsup
