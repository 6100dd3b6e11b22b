// Brute-force reference: full joint enumeration, exact marginals, exact
// composite hypotheses.  Deliberately independent of the streaming engine so
// the two can be checked against each other.
#pragma once

#include <algorithm>
#include <map>
#include <vector>

#include "termite/belief_net.hpp"

namespace termite {

constexpr std::size_t kOracleGuard = std::size_t(1) << 24;

struct JointEntry {
  Binding assignment;  // binds every variable
  double mass = 0.0;
};

// Every full assignment consistent with `evidence`, descending by mass, ties
// broken lexicographically on the assignment (variable id order).
inline std::vector<JointEntry> enumerate_joint(const BeliefNet& net,
                                               const Binding& evidence) {
  const std::size_t n = net.size();
  std::size_t total = 1;
  for (VarId v = 0; v < n; ++v) {
    total *= net.var(v).values.size();
    if (total > kOracleGuard) throw error("enumerate_joint: joint too large");
  }
  for (const auto& [v, val] : evidence.pairs) {
    if (v >= n) throw error("enumerate_joint: unknown variable");
    if (val >= net.var(v).values.size()) throw error("enumerate_joint: bad value");
  }

  std::vector<JointEntry> out;
  std::vector<ValIx> cur(n, 0);
  Binding b;
  b.pairs.reserve(n);
  for (VarId v = 0; v < n; ++v) b.pairs.emplace_back(v, 0);

  // odometer over all assignments; skip those clashing with evidence
  for (;;) {
    for (VarId v = 0; v < n; ++v) b.pairs[v].second = cur[v];
    bool ok = true;
    for (const auto& [v, val] : evidence.pairs)
      if (cur[v] != val) {
        ok = false;
        break;
      }
    if (ok) {
      double m = 1.0;
      for (VarId v = 0; v < n; ++v) m *= net.mass(v, b);
      out.push_back({b, m});
    }
    std::size_t k = n;
    while (k > 0) {
      --k;
      if (++cur[k] < net.var(VarId(k)).values.size()) break;
      cur[k] = 0;
      if (k == 0) {
        std::stable_sort(out.begin(), out.end(),
                         [](const JointEntry& a, const JointEntry& c) {
                           if (a.mass != c.mass) return a.mass > c.mass;
                           return a.assignment < c.assignment;
                         });
        return out;
      }
    }
  }
}

// Unnormalized marginal: joint entries consistent with evidence, grouped by
// the query binding.  Keys cover every query value combination (zero included).
inline std::map<Binding, double> exact_marginal(const BeliefNet& net,
                                                const std::vector<VarId>& query,
                                                const Binding& evidence) {
  for (VarId q : query)
    if (evidence.binds(q)) throw error("exact_marginal: query variable observed");
  std::map<Binding, double> out;
  // seed all combinations so absent mass reads as zero
  std::vector<ValIx> cur(query.size(), 0);
  for (;;) {
    Binding key;
    for (std::size_t i = 0; i < query.size(); ++i) key.set(query[i], cur[i]);
    out.emplace(std::move(key), 0.0);
    std::size_t k = query.size();
    bool done = query.empty();
    while (k > 0) {
      --k;
      if (++cur[k] < net.var(query[k]).values.size()) break;
      cur[k] = 0;
      if (k == 0) done = true;
    }
    if (done) break;
  }
  for (const auto& e : enumerate_joint(net, evidence)) {
    Binding key = e.assignment.project(sorted(query));
    out[key] += e.mass;
  }
  return out;
}

// Most likely composite hypothesis over `vars`: argmax of the (unnormalized)
// marginal over vars given evidence; ties resolved lexicographically.
inline std::pair<Binding, double> exact_mlch(const BeliefNet& net,
                                             const std::vector<VarId>& vars,
                                             const Binding& evidence) {
  if (vars.empty()) throw error("exact_mlch: empty hypothesis set");
  auto marg = exact_marginal(net, vars, evidence);
  auto best = marg.begin();
  for (auto it = std::next(marg.begin()); it != marg.end(); ++it)
    if (it->second > best->second) best = it;  // map order = lexicographic ties
  return {best->first, best->second};
}

}  // namespace termite
