// Shared evaluation poly-tree: binary products and marginalizations over the
// distributions relevant to registered queries.
//
// Construction follows the bottom-up layered scheme: select relevant nodes,
// layer them by longest directed path from the roots, then per layer partition
// the current factors into variable-connected components and combine each
// component with a greedy set-factoring step (smallest resulting table after
// immediately-legal marginalizations; ties by fewer distributions, then lowest
// node ids).  A root variable's marginal always ends up left of conditionals
// naming it, so depth-first left-to-right expansion sees priors first.
// Subtrees are shared across queries through an index keyed by (distribution
// set, needed set, evidence slice).
#pragma once

#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "termite/belief_net.hpp"

namespace termite {

enum class NodeKind { leaf, product, marginalize };

// Raw factor over an ordered variable list; grid is row-major with the last
// variable varying fastest.  Backs fixture leaves (factors that are not CPTs).
struct FactorTable {
  std::vector<VarId> vars;
  std::vector<std::size_t> card;
  std::vector<double> values;

  std::size_t index_of(const Binding& b) const {
    std::size_t ix = 0;
    for (std::size_t k = 0; k < vars.size(); ++k) {
      auto v = b.get(vars[k]);
      if (!v) throw error("factor: variable unbound");
      ix = ix * card[k] + *v;
    }
    return ix;
  }
};

struct EvalNode {
  NodeId id = kNoNode;
  NodeKind kind = NodeKind::leaf;
  bool dead = false;  // invalidated by a structural update; kept for id stability

  VarId dist_var = 0;   // leaf backed by this variable's table
  int fixture_ix = -1;  // >= 0: leaf backed by graph.fixtures[fixture_ix]

  NodeId left = kNoNode, right = kNoNode;  // product
  NodeId child = kNoNode;                  // marginalize
  std::vector<VarId> sum_set;              // marginalize: summed-out vars, sorted

  std::vector<VarId> vars_present;  // free vars of the node's value, sorted
  std::vector<VarId> needed;        // required by ancestors or queries, sorted
  std::vector<VarId> dists;         // distribution vars in the subtree, sorted
  std::vector<VarId> named;         // vars named by those distributions, sorted
};

struct MergeReport {
  NodeId root = kNoNode;
  std::size_t nodes_added = 0;
  std::size_t nodes_reused = 0;
};

class EvalGraph {
 public:
  struct Query {
    std::vector<VarId> targets;  // sorted
    NodeId root = kNoNode;
  };

  struct IndexKey {
    std::vector<VarId> dists;
    std::vector<VarId> needed;
    std::vector<std::pair<VarId, ValIx>> slice;  // evidence touching `named`
    bool operator<(const IndexKey& o) const {
      if (dists != o.dists) return dists < o.dists;
      if (needed != o.needed) return needed < o.needed;
      return slice < o.slice;
    }
  };

  std::vector<EvalNode> nodes;
  std::vector<FactorTable> fixtures;
  std::vector<Query> queries;
  Binding evidence;  // evidence the structure was built/updated under
  std::map<IndexKey, NodeId> index;
  std::size_t reuse_count = 0;

  const EvalNode& at(NodeId n) const { return nodes.at(n); }
  EvalNode& at(NodeId n) { return nodes.at(n); }

  std::vector<VarId> evidence_vars() const {
    std::vector<VarId> out;
    for (const auto& [v, _] : evidence.pairs) out.push_back(v);
    return out;
  }

  IndexKey key_for(const std::vector<VarId>& dists, const std::vector<VarId>& needed,
                   const std::vector<VarId>& named) const {
    IndexKey k{dists, needed, {}};
    for (const auto& p : evidence.pairs)
      if (set_contains(named, p.first)) k.slice.push_back(p);
    return k;
  }

  // The query whose target set matches, if registered.
  const Query* find_query(const std::vector<VarId>& targets_sorted) const {
    for (const auto& q : queries)
      if (q.targets == targets_sorted) return &q;
    return nullptr;
  }
};

namespace detail {

// Greedy layered construction for one query; shared nodes come back out of
// the graph index instead of being rebuilt.
class GraphBuilder {
 public:
  GraphBuilder(EvalGraph& g, const BeliefNet& net) : g_(g), net_(net) {}

  NodeId build_query(const std::vector<VarId>& targets, MergeReport& rep) {
    targets_ = sorted_copy(targets);
    validate_targets();
    rep_ = &rep;

    std::vector<VarId> seed = targets_;
    for (const auto& [v, _] : g_.evidence.pairs) seed.push_back(v);
    const auto relevant = net_.closure_of(seed);
    const auto lay = layers(net_, relevant);

    future_named_.clear();
    for (VarId v : relevant)
      for (VarId x : free_vars_of_dist(v)) future_named_[x]++;

    factors_.clear();
    for (const auto& layer : lay) {
      for (VarId v : layer) {
        Factor f;
        f.node = make_leaf(v);
        compute_mc(f);
        factors_.push_back(f);
        for (VarId x : free_vars_of_dist(v)) future_named_[x]--;
      }
      sort_factors();  // shared leaves can come back with old (low) ids
      combine_components();
    }
    if (factors_.empty()) throw error("build_query: no relevant factors");
    combine_all();  // disconnected components (e.g. evidence islands)
    NodeId root = factors_[0].node;
    if (g_.at(root).vars_present != targets_)
      throw error("build_query: root does not expose exactly the query variables");
    return root;
  }

 private:
  struct Factor {
    NodeId node = kNoNode;
    // ordering aids: root vars whose marginal leaf is inside (M) and root vars
    // named by conditionals inside without their marginal (C)
    std::vector<VarId> M, C;
  };

  void validate_targets() const {
    if (targets_.empty()) throw error("query: empty target set");
    for (std::size_t i = 0; i + 1 < targets_.size(); ++i)
      if (targets_[i] == targets_[i + 1]) throw error("query: duplicate target");
    for (VarId t : targets_) {
      if (t >= net_.size()) throw error("query: unknown variable");
      if (g_.evidence.binds(t)) throw error("query: target variable is observed");
    }
  }

  static std::vector<VarId> sorted_copy(std::vector<VarId> v) {
    std::sort(v.begin(), v.end());
    return v;
  }

  std::vector<VarId> free_vars_of_dist(VarId v) const {
    std::vector<VarId> out;
    if (!g_.evidence.binds(v)) out.push_back(v);
    for (VarId p : net_.table(v).parents)
      if (!g_.evidence.binds(p)) out.push_back(p);
    return sorted_copy(out);
  }

  std::vector<VarId> named_vars_of_dist(VarId v) const {
    std::vector<VarId> out{v};
    for (VarId p : net_.table(v).parents) out.push_back(p);
    return sorted_copy(out);
  }

  // --- node factories, all index-aware -----------------------------------

  NodeId intern(EvalNode n, const EvalGraph::IndexKey& key) {
    auto it = g_.index.find(key);
    if (it != g_.index.end() && !g_.at(it->second).dead) {
      ++g_.reuse_count;
      ++rep_->nodes_reused;
      return it->second;
    }
    n.id = NodeId(g_.nodes.size());
    g_.nodes.push_back(std::move(n));
    g_.index[key] = g_.nodes.back().id;
    ++rep_->nodes_added;
    return g_.nodes.back().id;
  }

  NodeId make_leaf(VarId v) {
    EvalNode n;
    n.kind = NodeKind::leaf;
    n.dist_var = v;
    n.vars_present = free_vars_of_dist(v);
    n.needed = n.vars_present;
    n.dists = {v};
    n.named = named_vars_of_dist(v);
    const auto key = g_.key_for(n.dists, n.needed, n.named);
    return intern(std::move(n), key);
  }

  NodeId make_product(NodeId l, NodeId r) {
    EvalNode n;
    n.kind = NodeKind::product;
    n.left = l;
    n.right = r;
    n.vars_present = set_union(g_.at(l).vars_present, g_.at(r).vars_present);
    n.needed = n.vars_present;
    n.dists = set_union(g_.at(l).dists, g_.at(r).dists);
    n.named = set_union(g_.at(l).named, g_.at(r).named);
    const auto key = g_.key_for(n.dists, n.needed, n.named);
    return intern(std::move(n), key);
  }

  NodeId make_marg(NodeId c, const std::vector<VarId>& sum_set) {
    EvalNode n;
    n.kind = NodeKind::marginalize;
    n.child = c;
    n.sum_set = sum_set;
    n.vars_present = set_minus(g_.at(c).vars_present, sum_set);
    n.needed = n.vars_present;
    n.dists = g_.at(c).dists;
    n.named = g_.at(c).named;
    const auto key = g_.key_for(n.dists, n.needed, n.named);
    return intern(std::move(n), key);
  }

  // --- ordering aids ------------------------------------------------------

  void compute_mc(Factor& f) const {
    std::set<VarId> marg, cond;
    collect_mc(f.node, marg, cond);
    f.M.assign(marg.begin(), marg.end());
    f.C.clear();
    for (VarId r : cond)
      if (!marg.count(r)) f.C.push_back(r);
  }

  void collect_mc(NodeId id, std::set<VarId>& marg, std::set<VarId>& cond) const {
    const EvalNode& n = g_.at(id);
    switch (n.kind) {
      case NodeKind::leaf: {
        if (n.fixture_ix >= 0) return;
        const auto& t = net_.table(n.dist_var);
        if (t.parents.empty()) {
          if (!g_.evidence.binds(n.dist_var)) marg.insert(n.dist_var);
        } else {
          for (VarId p : t.parents)
            if (net_.table(p).parents.empty() && !g_.evidence.binds(p))
              cond.insert(p);
        }
        break;
      }
      case NodeKind::product:
        collect_mc(n.left, marg, cond);
        collect_mc(n.right, marg, cond);
        break;
      case NodeKind::marginalize:
        collect_mc(n.child, marg, cond);
        break;
    }
  }

  // --- combination --------------------------------------------------------

  // Vars summable immediately above the product of factors i and j.
  std::vector<VarId> summable_for(std::size_t i, std::size_t j) const {
    auto uni = set_union(g_.at(factors_[i].node).vars_present,
                         g_.at(factors_[j].node).vars_present);
    std::vector<VarId> out;
    for (VarId x : uni) {
      if (set_contains(targets_, x)) continue;
      auto it = future_named_.find(x);
      if (it != future_named_.end() && it->second > 0) continue;
      bool elsewhere = false;
      for (std::size_t k = 0; k < factors_.size() && !elsewhere; ++k)
        if (k != i && k != j &&
            set_contains(g_.at(factors_[k].node).vars_present, x))
          elsewhere = true;
      if (!elsewhere) out.push_back(x);
    }
    return out;
  }

  double pair_score(std::size_t i, std::size_t j,
                    const std::vector<VarId>& summable) const {
    auto uni = set_union(g_.at(factors_[i].node).vars_present,
                         g_.at(factors_[j].node).vars_present);
    double size = 1.0;
    for (VarId x : set_minus(uni, summable))
      size *= double(net_.var(x).values.size());
    return size;
  }

  // A pair may combine only if the result keeps the ordering invariant:
  // either no unmatched conditionals or no marginals at all.
  bool pair_legal(std::size_t i, std::size_t j) const {
    const auto& a = factors_[i];
    const auto& b = factors_[j];
    auto m = set_union(a.M, b.M);
    auto c = set_minus(set_union(a.C, b.C), m);
    return c.empty() || m.empty();
  }

  void combine_pair(std::size_t i, std::size_t j) {
    Factor& a = factors_[i];
    Factor& b = factors_[j];
    // marginal side goes left; with both or neither, lower node id goes left
    bool a_left;
    if (!a.M.empty() && b.M.empty()) a_left = true;
    else if (a.M.empty() && !b.M.empty()) a_left = false;
    else a_left = a.node < b.node;

    const auto summable = summable_for(i, j);
    NodeId p = a_left ? make_product(a.node, b.node) : make_product(b.node, a.node);
    NodeId top = summable.empty() ? p : make_marg(p, summable);

    Factor merged;
    merged.node = top;
    merged.M = set_union(a.M, b.M);
    merged.C = set_minus(set_union(a.C, b.C), merged.M);
    factors_.erase(factors_.begin() + std::ptrdiff_t(std::max(i, j)));
    factors_.erase(factors_.begin() + std::ptrdiff_t(std::min(i, j)));
    factors_.push_back(merged);
    sort_factors();
  }

  void sort_factors() {
    std::sort(factors_.begin(), factors_.end(),
              [](const Factor& x, const Factor& y) { return x.node < y.node; });
  }

  // Combine every variable-connected component down to a single factor.
  void combine_components() {
    for (;;) {
      // find the best legal pair among factors sharing at least one variable
      bool found = false;
      std::size_t bi = 0, bj = 0;
      double best_score = 0.0;
      std::size_t best_dists = 0;
      for (std::size_t i = 0; i < factors_.size(); ++i) {
        for (std::size_t j = i + 1; j < factors_.size(); ++j) {
          if (set_intersect(g_.at(factors_[i].node).vars_present,
                            g_.at(factors_[j].node).vars_present)
                  .empty())
            continue;
          if (!pair_legal(i, j)) continue;
          const auto summable = summable_for(i, j);
          const double score = pair_score(i, j, summable);
          const std::size_t nd = g_.at(factors_[i].node).dists.size() +
                                 g_.at(factors_[j].node).dists.size();
          if (!found || score < best_score ||
              (score == best_score && nd < best_dists)) {
            found = true;
            bi = i;
            bj = j;
            best_score = score;
            best_dists = nd;
          }
        }
      }
      if (!found) return;
      combine_pair(bi, bj);
    }
  }

  // Final cross-component combine; components are variable-disjoint here.
  void combine_all() {
    while (factors_.size() > 1) {
      bool found = false;
      std::size_t bi = 0, bj = 0;
      double best_score = 0.0;
      std::size_t best_dists = 0;
      for (std::size_t i = 0; i < factors_.size(); ++i) {
        for (std::size_t j = i + 1; j < factors_.size(); ++j) {
          if (!pair_legal(i, j)) continue;
          const auto summable = summable_for(i, j);
          const double score = pair_score(i, j, summable);
          const std::size_t nd = g_.at(factors_[i].node).dists.size() +
                                 g_.at(factors_[j].node).dists.size();
          if (!found || score < best_score ||
              (score == best_score && nd < best_dists)) {
            found = true;
            bi = i;
            bj = j;
            best_score = score;
            best_dists = nd;
          }
        }
      }
      if (!found) throw error("build_query: no legal combination order");
      combine_pair(bi, bj);
    }
  }

  EvalGraph& g_;
  const BeliefNet& net_;
  MergeReport* rep_ = nullptr;
  std::vector<VarId> targets_;
  std::map<VarId, int> future_named_;
  std::vector<Factor> factors_;
};

}  // namespace detail

// Adds a query to the graph, sharing existing subtrees; returns the root and
// reuse counts.  Registering an identical query returns the existing root
// with zero new nodes.
inline MergeReport merge_query(EvalGraph& g, const BeliefNet& net,
                               const std::vector<VarId>& targets) {
  auto sorted_targets = sorted(targets);
  if (const auto* q = g.find_query(sorted_targets))
    return {q->root, 0, 0};
  MergeReport rep;
  detail::GraphBuilder b(g, net);
  rep.root = b.build_query(sorted_targets, rep);
  g.queries.push_back({sorted_targets, rep.root});
  return rep;
}

inline EvalGraph build_eval_graph(const BeliefNet& net,
                                  const std::vector<std::vector<VarId>>& queries,
                                  const Binding& evidence) {
  EvalGraph g;
  g.evidence = evidence;
  for (const auto& [v, val] : evidence.pairs) {
    if (v >= net.size()) throw error("build_eval_graph: unknown evidence variable");
    if (val >= net.var(v).values.size())
      throw error("build_eval_graph: evidence value out of range");
  }
  for (const auto& q : queries) merge_query(g, net, q);
  return g;
}

// Product-chain fixture over raw factors (no marginalization); used for
// factor-level demonstrations that are not expressible as a belief net.
inline NodeId add_product_fixture(EvalGraph& g, const std::vector<FactorTable>& factors) {
  if (factors.empty()) throw error("fixture: no factors");
  std::vector<NodeId> leaves;
  for (const auto& f : factors) {
    g.fixtures.push_back(f);
    EvalNode n;
    n.id = NodeId(g.nodes.size());
    n.kind = NodeKind::leaf;
    n.fixture_ix = int(g.fixtures.size()) - 1;
    n.vars_present = sorted(f.vars);
    n.needed = n.vars_present;
    g.nodes.push_back(n);
    leaves.push_back(n.id);
  }
  NodeId cur = leaves[0];
  for (std::size_t i = 1; i < leaves.size(); ++i) {
    EvalNode n;
    n.id = NodeId(g.nodes.size());
    n.kind = NodeKind::product;
    n.left = cur;
    n.right = leaves[i];
    n.vars_present = set_union(g.at(cur).vars_present, g.at(leaves[i]).vars_present);
    n.needed = n.vars_present;
    g.nodes.push_back(n);
    cur = n.id;
  }
  g.queries.push_back({g.at(cur).vars_present, cur});
  return cur;
}

namespace detail {

inline void collect_leaves(const EvalGraph& g, NodeId id,
                           std::vector<NodeId>& out) {
  const EvalNode& n = g.at(id);
  switch (n.kind) {
    case NodeKind::leaf: out.push_back(id); break;
    case NodeKind::product:
      collect_leaves(g, n.left, out);
      collect_leaves(g, n.right, out);
      break;
    case NodeKind::marginalize: collect_leaves(g, n.child, out); break;
  }
}

inline bool subtree_contains(const EvalGraph& g, NodeId root, NodeId target) {
  if (root == target) return true;
  const EvalNode& n = g.at(root);
  switch (n.kind) {
    case NodeKind::leaf: return false;
    case NodeKind::product:
      return subtree_contains(g, n.left, target) ||
             subtree_contains(g, n.right, target);
    case NodeKind::marginalize: return subtree_contains(g, n.child, target);
  }
  return false;
}

}  // namespace detail

// Structural checks: label consistency, marginalization legality (a summed
// variable appears only below its marginalization within every tree using
// it), and the marginal-before-conditional depth-first ordering.
inline std::vector<std::string> validate(const EvalGraph& g, const BeliefNet& net) {
  std::vector<std::string> bad;
  auto note = [&](const std::string& s) { bad.push_back(s); };

  for (const auto& n : g.nodes) {
    if (n.dead) continue;
    if (!std::is_sorted(n.vars_present.begin(), n.vars_present.end()))
      note("node " + std::to_string(n.id) + ": vars_present not sorted");
    if (set_minus(n.needed, n.vars_present).size() != 0)
      note("node " + std::to_string(n.id) + ": needed not within vars_present");
    switch (n.kind) {
      case NodeKind::leaf: break;
      case NodeKind::product: {
        if (n.left >= n.id || n.right >= n.id)
          note("node " + std::to_string(n.id) + ": child id not below parent");
        auto uni = set_union(g.at(n.left).vars_present, g.at(n.right).vars_present);
        if (n.vars_present != uni)
          note("node " + std::to_string(n.id) + ": product vars mismatch");
        break;
      }
      case NodeKind::marginalize: {
        if (n.child >= n.id)
          note("node " + std::to_string(n.id) + ": child id not below parent");
        if (n.sum_set.empty())
          note("node " + std::to_string(n.id) + ": empty sum set");
        if (!set_intersect(n.sum_set, n.vars_present).empty())
          note("node " + std::to_string(n.id) + ": summed var still present");
        for (VarId x : n.sum_set)
          if (!set_contains(g.at(n.child).vars_present, x))
            note("node " + std::to_string(n.id) + ": sums var absent from child");
        break;
      }
    }
  }

  for (std::size_t qi = 0; qi < g.queries.size(); ++qi) {
    const auto& q = g.queries[qi];
    const EvalNode& root = g.at(q.root);
    if (root.vars_present != q.targets)
      note("query " + std::to_string(qi) + ": root vars differ from targets");

    std::vector<NodeId> leaves;
    detail::collect_leaves(g, q.root, leaves);

    // marginalization legality within this tree
    std::vector<NodeId> stack{q.root};
    while (!stack.empty()) {
      NodeId id = stack.back();
      stack.pop_back();
      const EvalNode& n = g.at(id);
      if (n.kind == NodeKind::marginalize) {
        for (VarId x : n.sum_set)
          for (NodeId leaf : leaves)
            if (set_contains(g.at(leaf).vars_present, x) &&
                !detail::subtree_contains(g, n.child, leaf))
              note("node " + std::to_string(id) + ": sums variable " +
                   net.var(x).name + " that also appears outside");
        stack.push_back(n.child);
      } else if (n.kind == NodeKind::product) {
        stack.push_back(n.left);
        stack.push_back(n.right);
      }
    }

    // marginal-left ordering over the depth-first leaf sequence
    std::map<VarId, std::size_t> marg_pos;
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      const EvalNode& n = g.at(leaves[i]);
      if (n.fixture_ix >= 0) continue;
      if (net.table(n.dist_var).parents.empty() && !g.evidence.binds(n.dist_var))
        marg_pos[n.dist_var] = i;
    }
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      const EvalNode& n = g.at(leaves[i]);
      if (n.fixture_ix >= 0) continue;
      for (VarId p : net.table(n.dist_var).parents) {
        auto it = marg_pos.find(p);
        if (it != marg_pos.end() && it->second > i)
          note("query " + std::to_string(qi) + ": marginal of " +
               net.var(p).name + " appears after a conditional naming it");
      }
    }
  }
  return bad;
}

// Deterministic textual rendering: every query tree pre-order with node ids,
// kinds and variable labels.
inline std::string dump(const EvalGraph& g, const BeliefNet& net) {
  std::ostringstream out;
  auto names = [&](const std::vector<VarId>& vs) {
    std::string s = "{";
    for (std::size_t i = 0; i < vs.size(); ++i) {
      if (i) s += ',';
      s += net.var(vs[i]).name;
    }
    return s + "}";
  };
  struct Walker {
    const EvalGraph& g;
    const BeliefNet& net;
    std::ostringstream& out;
    std::string (*label)(const BeliefNet&, const std::vector<VarId>&);
    void walk(NodeId id, int depth) {
      const EvalNode& n = g.at(id);
      out << std::string(std::size_t(depth) * 2 + 2, ' ') << "node " << n.id << ' ';
      switch (n.kind) {
        case NodeKind::leaf:
          if (n.fixture_ix >= 0) {
            out << "factor " << label(net, n.vars_present);
          } else {
            out << "leaf P(" << net.var(n.dist_var).name;
            const auto& ps = net.table(n.dist_var).parents;
            if (!ps.empty()) {
              out << '|';
              for (std::size_t i = 0; i < ps.size(); ++i)
                out << (i ? "," : "") << net.var(ps[i]).name;
            }
            out << ')';
          }
          break;
        case NodeKind::product: out << "product"; break;
        case NodeKind::marginalize:
          out << "marginalize sum=" << label(net, n.sum_set);
          break;
      }
      out << " vars=" << label(net, n.vars_present)
          << " needed=" << label(net, n.needed) << '\n';
      if (n.kind == NodeKind::product) {
        walk(n.left, depth + 1);
        walk(n.right, depth + 1);
      } else if (n.kind == NodeKind::marginalize) {
        walk(n.child, depth + 1);
      }
    }
  } w{g, net, out,
      +[](const BeliefNet& bn, const std::vector<VarId>& vs) {
        std::string s = "{";
        for (std::size_t i = 0; i < vs.size(); ++i) {
          if (i) s += ',';
          s += bn.var(vs[i]).name;
        }
        return s + "}";
      }};
  for (const auto& q : g.queries) {
    out << "query " << names(q.targets).substr(1, names(q.targets).size() - 2)
        << " -> node " << q.root << '\n';
    w.walk(q.root, 0);
  }
  return out.str();
}

}  // namespace termite
