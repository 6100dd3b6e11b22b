// Discrete belief network: DAG of variables, one conditional table per
// variable.  Rows are stored row-major over parent combinations with the LAST
// parent varying fastest; that order is part of the file format and of every
// inline table spec, so nothing here may permute it.
#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "termite/common.hpp"

namespace termite {

constexpr double kRowSumTol = 1e-9;

struct Variable {
  VarId id = 0;
  std::string name;
  std::vector<std::string> values;  // value labels, index = ValIx
};

struct ConditionalTable {
  VarId child = 0;
  std::vector<VarId> parents;       // ordered; row index is row-major over this
  std::vector<std::vector<double>> rows;  // rows[parent_combo][child_value]
};

struct SkewnessReport {
  std::vector<double> per_variable_skew;  // min over rows of the row's max mass
  double threshold = 0.0;                 // (n-1)/n for n variables
  bool is_skewed = false;                 // every variable's skew >= threshold
};

namespace detail {
inline bool valid_token(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '_' || c == '.' || c == '-';
    if (!ok) return false;
  }
  return true;
}
}  // namespace detail

class BeliefNet {
 public:
  std::size_t size() const { return vars_.size(); }
  const Variable& var(VarId v) const { return vars_.at(v); }
  const ConditionalTable& table(VarId v) const { return tables_.at(v); }
  const std::vector<VarId>& children(VarId v) const { return children_.at(v); }

  bool has_var(const std::string& name) const { return by_name_.count(name) != 0; }

  VarId var_id(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw error("unknown variable '" + name + "'");
    return it->second;
  }

  ValIx value_ix(VarId v, const std::string& label) const {
    const auto& vals = vars_[v].values;
    for (std::size_t i = 0; i < vals.size(); ++i)
      if (vals[i] == label) return ValIx(i);
    throw error("variable '" + vars_[v].name + "' has no value '" + label + "'");
  }

  // Adds a variable together with its table.  Parents must already exist, so
  // insertion order is a topological order and the graph stays acyclic.
  VarId add_variable(const std::string& name,
                     const std::vector<std::string>& values,
                     const std::vector<std::string>& parent_names,
                     const std::vector<std::vector<double>>& rows) {
    if (!detail::valid_token(name))
      throw error("invalid variable name '" + name + "'");
    if (by_name_.count(name))
      throw error("duplicate variable '" + name + "'");
    if (values.size() < 2)
      throw error("variable '" + name + "' needs at least two values");
    for (const auto& val : values)
      if (!detail::valid_token(val))
        throw error("invalid value label '" + val + "' for '" + name + "'");
    for (std::size_t i = 0; i < values.size(); ++i)
      for (std::size_t j = i + 1; j < values.size(); ++j)
        if (values[i] == values[j])
          throw error("duplicate value label '" + values[i] + "' for '" + name + "'");

    ConditionalTable t;
    t.child = VarId(vars_.size());
    for (const auto& pn : parent_names) t.parents.push_back(var_id(pn));
    check_rows(name, values.size(), t.parents, rows);
    t.rows = rows;

    Variable v;
    v.id = t.child;
    v.name = name;
    v.values = values;

    by_name_.emplace(name, v.id);
    vars_.push_back(std::move(v));
    tables_.push_back(std::move(t));
    children_.emplace_back();
    for (VarId p : tables_.back().parents) children_[p].push_back(tables_.back().child);
    return tables_.back().child;
  }

  // Re-parents `child` with one extra parent appended; the new table must list
  // exactly the old parents plus `parent`, in that order.
  void add_arc(VarId parent, VarId child, const ConditionalTable& new_table) {
    if (parent >= size() || child >= size()) throw error("add_arc: unknown variable");
    if (parent == child) throw error("add_arc: self arc");
    if (set_contains_sorted(ancestors_of(parent), child))
      throw error("add_arc: arc would create a cycle");
    const auto& old = tables_[child];
    for (VarId p : old.parents)
      if (p == parent) throw error("add_arc: arc already present");
    if (new_table.child != child)
      throw error("add_arc: table is for the wrong child");
    auto expect = old.parents;
    expect.push_back(parent);
    if (new_table.parents != expect)
      throw error("add_arc: table parents must be old parents plus the new one");
    check_rows(vars_[child].name, vars_[child].values.size(), new_table.parents,
               new_table.rows);
    tables_[child] = new_table;
    children_[parent].push_back(child);
  }

  // Number of parent-combination rows expected for a parent list.
  std::size_t row_count(const std::vector<VarId>& parents) const {
    std::size_t n = 1;
    for (VarId p : parents) n *= vars_[p].values.size();
    return n;
  }

  // Row index for a full parent assignment: row-major, last parent fastest.
  std::size_t row_index(const ConditionalTable& t, const Binding& b) const {
    std::size_t ix = 0;
    for (VarId p : t.parents) {
      auto val = b.get(p);
      if (!val) throw error("row_index: parent '" + vars_[p].name + "' unbound");
      ix = ix * vars_[p].values.size() + *val;
    }
    return ix;
  }

  double mass(VarId v, const Binding& full) const {
    const auto& t = tables_[v];
    auto val = full.get(v);
    if (!val) throw error("mass: variable unbound");
    return t.rows[row_index(t, full)][*val];
  }

  // Sorted ancestor set (the variable itself excluded).
  std::vector<VarId> ancestors_of(VarId v) const {
    std::vector<char> seen(size(), 0);
    std::deque<VarId> work{v};
    while (!work.empty()) {
      VarId x = work.front();
      work.pop_front();
      for (VarId p : tables_[x].parents)
        if (!seen[p]) {
          seen[p] = 1;
          work.push_back(p);
        }
    }
    std::vector<VarId> out;
    for (VarId i = 0; i < size(); ++i)
      if (seen[i]) out.push_back(i);
    return out;
  }

  // Sorted ancestral closure of a set (the set itself included).
  std::vector<VarId> closure_of(const std::vector<VarId>& seed) const {
    std::vector<char> seen(size(), 0);
    std::deque<VarId> work;
    for (VarId v : seed) {
      if (v >= size()) throw error("closure_of: unknown variable");
      if (!seen[v]) {
        seen[v] = 1;
        work.push_back(v);
      }
    }
    while (!work.empty()) {
      VarId x = work.front();
      work.pop_front();
      for (VarId p : tables_[x].parents)
        if (!seen[p]) {
          seen[p] = 1;
          work.push_back(p);
        }
    }
    std::vector<VarId> out;
    for (VarId i = 0; i < size(); ++i)
      if (seen[i]) out.push_back(i);
    return out;
  }

 private:
  static bool set_contains_sorted(const std::vector<VarId>& s, VarId v) {
    return std::binary_search(s.begin(), s.end(), v);
  }

  void check_rows(const std::string& name, std::size_t n_values,
                  const std::vector<VarId>& parents,
                  const std::vector<std::vector<double>>& rows) const {
    if (rows.size() != row_count(parents))
      throw error("table for '" + name + "': expected " +
                  std::to_string(row_count(parents)) + " rows, got " +
                  std::to_string(rows.size()));
    for (const auto& row : rows) {
      if (row.size() != n_values)
        throw error("table for '" + name + "': row has " +
                    std::to_string(row.size()) + " entries, expected " +
                    std::to_string(n_values));
      double sum = 0.0;
      for (double p : row) {
        if (p < 0.0 || p > 1.0 || !std::isfinite(p))
          throw error("table for '" + name + "': mass out of [0,1]");
        sum += p;
      }
      if (std::fabs(sum - 1.0) > kRowSumTol)
        throw error("table for '" + name + "': row sums to " + fmt_mass(sum));
    }
  }

  std::vector<Variable> vars_;
  std::vector<ConditionalTable> tables_;
  std::vector<std::vector<VarId>> children_;
  std::map<std::string, VarId> by_name_;
};

// Definition-1 style skew report: a network of n variables is skewed when every
// row of every table puts at least (n-1)/n of its mass on one value.
inline SkewnessReport skewness(const BeliefNet& net) {
  SkewnessReport rep;
  const std::size_t n = net.size();
  rep.threshold = n == 0 ? 0.0 : double(n - 1) / double(n);
  rep.is_skewed = n > 0;
  for (VarId v = 0; v < n; ++v) {
    double worst = 1.0;
    for (const auto& row : net.table(v).rows) {
      double best = 0.0;
      for (double p : row) best = std::max(best, p);
      worst = std::min(worst, best);
    }
    rep.per_variable_skew.push_back(worst);
    if (worst < rep.threshold) rep.is_skewed = false;  // inclusive >= passes
  }
  return rep;
}

// Requisite probability nodes for the posterior of `query` given `evidence`,
// via two-phase reachability (the bouncing-ball traversal): a node's table
// matters iff the traversal marks its top.  Barren descendants and
// d-separated branches never get marked.
inline std::vector<VarId> relevant_nodes(const BeliefNet& net,
                                         const std::vector<VarId>& query,
                                         const std::vector<VarId>& evidence_vars) {
  const std::size_t n = net.size();
  std::vector<char> observed(n, 0);
  for (VarId v : evidence_vars) {
    if (v >= n) throw error("relevant_nodes: unknown variable");
    observed[v] = 1;
  }
  std::vector<char> top(n, 0), bottom(n, 0);
  // visit kinds: true = arriving from a child (moving up), false = from parent
  std::deque<std::pair<VarId, bool>> work;
  for (VarId q : query) {
    if (q >= n) throw error("relevant_nodes: unknown variable");
    work.emplace_back(q, true);
  }
  while (!work.empty()) {
    auto [j, from_child] = work.front();
    work.pop_front();
    if (from_child) {
      if (observed[j]) continue;  // blocked
      if (!top[j]) {
        top[j] = 1;
        for (VarId p : net.table(j).parents) work.emplace_back(p, true);
      }
      if (!bottom[j]) {
        bottom[j] = 1;
        for (VarId c : net.children(j)) work.emplace_back(c, false);
      }
    } else {
      if (observed[j]) {
        if (!top[j]) {  // ball bounces back up through an observed collider
          top[j] = 1;
          for (VarId p : net.table(j).parents) work.emplace_back(p, true);
        }
      } else if (!bottom[j]) {
        bottom[j] = 1;
        for (VarId c : net.children(j)) work.emplace_back(c, false);
      }
    }
  }
  std::vector<VarId> out;
  for (VarId i = 0; i < n; ++i)
    if (top[i]) out.push_back(i);
  return out;
}

// Partition of `relevant` by longest directed path from any root, computed on
// the subgraph induced by `relevant`.  layers()[k] is sorted.
inline std::vector<std::vector<VarId>> layers(const BeliefNet& net,
                                              const std::vector<VarId>& relevant) {
  std::map<VarId, int> depth;
  // relevant is small; resolve depths by memoized recursion over parents
  struct Solver {
    const BeliefNet& net;
    const std::vector<VarId>& rel;
    std::map<VarId, int>& depth;
    int solve(VarId v) {
      auto it = depth.find(v);
      if (it != depth.end()) {
        if (it->second < 0) throw error("layers: cycle");
        return it->second;
      }
      depth[v] = -1;  // in progress
      int d = 0;
      for (VarId p : net.table(v).parents)
        if (set_contains(rel, p)) d = std::max(d, solve(p) + 1);
      depth[v] = d;
      return d;
    }
  } solver{net, relevant, depth};
  int max_d = -1;
  for (VarId v : relevant) max_d = std::max(max_d, solver.solve(v));
  std::vector<std::vector<VarId>> out(std::size_t(max_d + 1));
  for (VarId v : relevant) out[std::size_t(depth[v])].push_back(v);
  return out;
}

}  // namespace termite
