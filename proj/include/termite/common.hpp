// Shared primitives: ids, bindings over variable/value indices, error type,
// deterministic number formatting used by every text surface (CLI, dumps, traces).
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <iterator>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace termite {

using VarId = std::uint32_t;
using ValIx = std::uint32_t;
using NodeId = std::uint32_t;
using TermId = std::uint32_t;

constexpr NodeId kNoNode = 0xffffffffu;
constexpr TermId kNoTerm = 0xffffffffu;

class error : public std::runtime_error {
 public:
  explicit error(std::string msg) : std::runtime_error(std::move(msg)) {}
};

class parse_error : public error {
 public:
  parse_error(std::string msg, int line, int col)
      : error(std::move(msg)), line(line), col(col) {}
  int line;
  int col;
};

// Assignment of value indices to a sorted set of variables.  Kept sorted by
// variable id so equality/ordering are structural and text renderings stable.
struct Binding {
  std::vector<std::pair<VarId, ValIx>> pairs;

  static Binding empty() { return Binding{}; }

  void set(VarId v, ValIx val) {
    auto it = std::lower_bound(pairs.begin(), pairs.end(), v,
                               [](const auto& p, VarId x) { return p.first < x; });
    if (it != pairs.end() && it->first == v)
      it->second = val;
    else
      pairs.insert(it, {v, val});
  }

  std::optional<ValIx> get(VarId v) const {
    auto it = std::lower_bound(pairs.begin(), pairs.end(), v,
                               [](const auto& p, VarId x) { return p.first < x; });
    if (it != pairs.end() && it->first == v) return it->second;
    return std::nullopt;
  }

  bool binds(VarId v) const { return get(v).has_value(); }
  std::size_t size() const { return pairs.size(); }
  bool empty_set() const { return pairs.empty(); }

  // Restriction to the given sorted variable set.
  Binding project(const std::vector<VarId>& keep) const {
    Binding out;
    out.pairs.reserve(std::min(pairs.size(), keep.size()));
    auto k = keep.begin();
    for (const auto& p : pairs) {
      while (k != keep.end() && *k < p.first) ++k;
      if (k != keep.end() && *k == p.first) out.pairs.push_back(p);
    }
    return out;
  }

  // Union; a conflicting assignment to a shared variable is a logic error in
  // the caller (joins are arranged so shared variables already agree).
  Binding merged_with(const Binding& other) const {
    Binding out;
    out.pairs.reserve(pairs.size() + other.pairs.size());
    auto a = pairs.begin();
    auto b = other.pairs.begin();
    while (a != pairs.end() || b != other.pairs.end()) {
      if (b == other.pairs.end() || (a != pairs.end() && a->first < b->first)) {
        out.pairs.push_back(*a++);
      } else if (a == pairs.end() || b->first < a->first) {
        out.pairs.push_back(*b++);
      } else {
        if (a->second != b->second)
          throw error("conflicting binding on shared variable");
        out.pairs.push_back(*a++);
        ++b;
      }
    }
    return out;
  }

  bool consistent_with(const Binding& other) const {
    auto a = pairs.begin();
    auto b = other.pairs.begin();
    while (a != pairs.end() && b != other.pairs.end()) {
      if (a->first < b->first) ++a;
      else if (b->first < a->first) ++b;
      else {
        if (a->second != b->second) return false;
        ++a; ++b;
      }
    }
    return true;
  }

  bool operator==(const Binding& o) const { return pairs == o.pairs; }
  bool operator<(const Binding& o) const { return pairs < o.pairs; }
};

// 10 significant digits, shortest form; shared by CLI output and traces.
inline std::string fmt_mass(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

// Deterministic uniform in [0,1) from a raw 64-bit generator; avoids the
// implementation-defined sequences of std::uniform_real_distribution.
template <class Rng>
inline double u01(Rng& rng) {
  return double(rng() >> 11) * (1.0 / 9007199254740992.0);  // 53-bit mantissa
}

// Sorted-set helpers used throughout the graph code.
inline std::vector<VarId> sorted(std::vector<VarId> v) {
  std::sort(v.begin(), v.end());
  return v;
}

inline std::vector<VarId> set_union(const std::vector<VarId>& a,
                                    const std::vector<VarId>& b) {
  std::vector<VarId> out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline std::vector<VarId> set_minus(const std::vector<VarId>& a,
                                    const std::vector<VarId>& b) {
  std::vector<VarId> out;
  out.reserve(a.size());
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline std::vector<VarId> set_intersect(const std::vector<VarId>& a,
                                        const std::vector<VarId>& b) {
  std::vector<VarId> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline bool set_contains(const std::vector<VarId>& a, VarId v) {
  return std::binary_search(a.begin(), a.end(), v);
}

}  // namespace termite
