// Streaming evaluation of a shared graph: every node×conditioning pair gets a
// term stream that emits weighted partial assignments one at a time, largest
// first.  Streams cache their emissions, so a subtree shared by several
// queries (or revisited after a structural change) is never recomputed.
//
// Ordering is exact for products of leaves; a marginalization merges child
// terms that agree on its output variables, so a term emitted early can later
// grow and such growth is pushed through all consumers as a delta.  The same
// delta path retracts terms that new evidence rules out.
#pragma once

#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "termite/belief_net.hpp"
#include "termite/estimator.hpp"
#include "termite/eval_graph.hpp"

namespace termite {

using StreamId = std::uint32_t;
constexpr StreamId kNoStream = 0xffffffffu;

// Thrown inside the engine when a term-creation budget runs out; every throw
// point leaves the streams consistent, so the caller can simply stop (or try
// again with a larger budget) without rebuilding anything.
class budget_exhausted : public error {
 public:
  budget_exhausted() : error("term budget exhausted") {}
};

struct Term {
  TermId id = kNoTerm;
  StreamId owner = kNoStream;
  Binding binding;
  double mass = 0.0;
  double base_mass = 0.0;  // leaf terms: the table entry the mass came from
  bool removed = false;
  std::uint64_t seq = 0;
  std::vector<TermId> contributors;  // product: {left,right}; marginalize: merged
  std::vector<TermId> dependents;    // terms that consume this one
};

struct Stream {
  StreamId id = kNoStream;
  NodeId node = kNoNode;
  Binding cond;  // conditioning context, already projected to the node's vars
  bool dropped = false;  // node was invalidated by a structural change
  std::size_t hits = 0;  // times this stream was found in the cache

  std::vector<TermId> emitted;
  bool exhausted = false;

  // leaf state
  std::vector<std::pair<Binding, double>> entries;  // sorted, mass descending
  std::size_t cursor = 0;

  // product state
  StreamId left = kNoStream;
  std::size_t left_cursor = 0;  // next left emission to expand
  bool left_done = false;
  struct Cand {
    std::size_t li = 0;         // index into left stream's emissions
    StreamId right = kNoStream; // right stream conditioned on that left term
    std::size_t rj = 0;         // index into the right stream's emissions
    double prio = 0.0;
    bool exact = false;         // prio is the realized product, not a bound
    std::uint64_t seq = 0;
  };
  std::vector<Cand> agenda;

  // marginalize state
  StreamId child = kNoStream;
  std::size_t child_cursor = 0;
  struct Pending {
    Binding proj;
    std::vector<TermId> contributors;
    std::uint64_t seq = 0;
  };
  std::vector<Pending> pendings;
  std::map<Binding, std::size_t> emitted_by_proj;
};

struct SessionStats {
  std::size_t terms_created = 0;
  std::size_t streams_opened = 0;
  std::size_t stream_cache_hits = 0;
  std::size_t max_agenda = 0;  // high-water mark across agendas and pendings
};

struct AnytimeCombo {
  Binding assignment;
  double lower = 0.0;
  double upper = 0.0;
  double estimate = 0.0;  // lower normalized by accounted mass
};

struct AnytimeReport {
  std::vector<AnytimeCombo> combos;     // every target assignment, lex order
  double mass_accounted = 0.0;          // sum of emitted root mass
  double remainder = 0.0;               // sound bound on unseen mass
  std::optional<double> remainder_estimate;  // fitted, advisory only
  bool exhausted = false;
  std::size_t pulls_used = 0;
};

struct MlchReport {
  bool found = false;
  bool exhausted = false;  // stream ended with nothing to emit
  Binding assignment;
  double mass = 0.0;
  std::size_t terms_created = 0;  // terms built while searching
};

struct UpdateReport {
  bool noop = false;
  std::size_t removed_terms = 0;   // terms retracted by the change
  std::size_t touched_terms = 0;   // recomputations during propagation
  std::size_t dead_nodes = 0;      // graph nodes invalidated
  std::size_t nodes_added = 0;     // structural rebuild: new nodes
  std::size_t nodes_reused = 0;    // structural rebuild: shared nodes
  std::vector<std::size_t> rebuilt_queries;
};

class Session {
 public:
  explicit Session(BeliefNet net) : net_(std::move(net)) {}

  const BeliefNet& net() const { return net_; }
  const EvalGraph& graph() const { return graph_; }
  const SessionStats& stats() const { return stats_; }
  const Binding& evidence() const { return graph_.evidence; }
  void set_trace(std::ostream* sink) { trace_ = sink; }

  const Term& term(TermId t) const { return terms_.at(t); }
  const Stream& stream(StreamId s) const { return streams_.at(s); }

  // --- queries -----------------------------------------------------------

  std::size_t register_query(const std::vector<std::string>& names) {
    std::vector<VarId> ids;
    for (const auto& nm : names) ids.push_back(net_.var_id(nm));
    return register_query_ids(ids);
  }

  std::size_t register_query_ids(const std::vector<VarId>& targets) {
    last_merge_ = merge_query(graph_, net_, targets);
    auto key = sorted(targets);
    for (std::size_t i = 0; i < graph_.queries.size(); ++i)
      if (graph_.queries[i].targets == key) return i;
    throw error("register_query: query not recorded");  // unreachable
  }

  MergeReport last_merge() const { return last_merge_; }

  // Registers a standalone factor-product demonstration; it behaves like a
  // query whose targets are all the factor variables.
  std::size_t register_fixture(const std::vector<FactorTable>& factors) {
    add_product_fixture(graph_, factors);
    return graph_.queries.size() - 1;
  }

  // --- anytime evaluation ------------------------------------------------

  // Pulls up to `max_pulls` further terms from the query's root stream and
  // reports, per target assignment, a lower bound (mass seen so far) and an
  // upper bound (lower plus all mass not yet accounted for anywhere).
  AnytimeReport anytime_query(std::size_t qi, std::size_t max_pulls) {
    StreamId root = root_stream(qi);
    AnytimeReport rep;
    for (std::size_t i = 0; i < max_pulls; ++i) {
      if (!pop(root)) break;
      ++rep.pulls_used;
    }
    fill_report(qi, root, rep);
    return rep;
  }

  // Most likely composite hypothesis: the first term the root stream emits.
  // If nothing has been emitted yet, pulls once; `term_budget` caps how many
  // terms the whole engine may create while doing so (0 = unlimited).  When
  // the budget runs out first, found=false and the partial work is kept.
  MlchReport mlch(std::size_t qi, std::size_t term_budget) {
    StreamId root = root_stream(qi);
    MlchReport rep;
    const std::size_t before = stats_.terms_created;
    bool have = false;
    for (TermId t : streams_[root].emitted)
      if (!terms_[t].removed) have = true;
    if (!have) {
      if (term_budget > 0) budget_limit_ = before + term_budget;
      try {
        if (!pop(root)) rep.exhausted = true;
      } catch (const budget_exhausted&) {
        budget_limit_.reset();
        rep.terms_created = stats_.terms_created - before;
        return rep;  // not yet: found stays false
      } catch (...) {
        budget_limit_.reset();
        throw;
      }
      budget_limit_.reset();
    }
    rep.terms_created = stats_.terms_created - before;
    // best current emission: highest mass, earliest emission on ties
    const Stream& rs = streams_[root];
    const Term* best = nullptr;
    for (TermId t : rs.emitted) {
      const Term& tm = terms_[t];
      if (tm.removed) continue;
      if (!best || tm.mass > best->mass) best = &tm;
    }
    if (best) {
      rep.found = true;
      rep.assignment = best->binding;
      rep.mass = best->mass;
    }
    return rep;
  }

  // --- incremental changes ------------------------------------------------

  // Observes var=value.  Queries whose graphs already cover the variable are
  // updated in place: contradicting terms are retracted and the retraction is
  // propagated; no term consistent with the observation is touched.  Queries
  // that never mention the variable are rebuilt so the new likelihood factor
  // joins their expression (cached subtrees are picked back up).
  UpdateReport assert_evidence(const std::string& var, const std::string& value) {
    VarId v = net_.var_id(var);
    ValIx val = net_.value_ix(v, value);
    UpdateReport rep;
    if (auto cur = graph_.evidence.get(v)) {
      if (*cur == val) {
        rep.noop = true;  // re-asserting the same observation
        return rep;
      }
      throw error("evidence conflicts with earlier observation of '" + var + "'");
    }
    for (const auto& q : graph_.queries)
      if (set_contains(q.targets, v))
        throw error("evidence on open query target '" + var + "'");

    std::vector<std::size_t> structural;
    for (std::size_t i = 0; i < graph_.queries.size(); ++i) {
      const auto& q = graph_.queries[i];
      if (q.root == kNoNode) continue;
      // fixture demonstrations (empty distribution set) are not net queries
      if (graph_.at(q.root).dists.empty()) continue;
      if (!set_contains(graph_.at(q.root).dists, v)) structural.push_back(i);
    }

    graph_.evidence.set(v, val);
    trace_line("{\"n\":" + std::to_string(++trace_n_) +
               ",\"event\":\"evidence\",\"var\":\"" + var + "\",\"value\":\"" +
               value + "\"}");

    // in-place retraction: leaf terms naming the variable with another value
    std::deque<TermId> work;
    for (const auto& s : streams_) {
      if (s.dropped || s.node == kNoNode) continue;
      const EvalNode& n = graph_.at(s.node);
      if (n.kind != NodeKind::leaf) continue;
      for (TermId t : s.emitted) {
        auto bound = terms_[t].binding.get(v);
        if (bound && *bound != val) work.push_back(t);
      }
    }
    propagate(work, rep);

    // structural extension for queries that never covered the variable
    for (std::size_t qi : structural) rebuild_query(qi, rep);
    return rep;
  }

  // Adds a variable (with its table) to the network.  The new node has no
  // children, so no registered query can depend on it: nothing is touched.
  UpdateReport add_node(const std::string& name,
                        const std::vector<std::string>& values,
                        const std::vector<std::string>& parents,
                        const std::vector<std::vector<double>>& rows) {
    net_.add_variable(name, values, parents, rows);
    trace_line("{\"n\":" + std::to_string(++trace_n_) +
               ",\"event\":\"add_node\",\"var\":\"" + name + "\"}");
    return {};
  }

  // Adds an arc parent->child with the child's widened table.  Every cached
  // subtree whose expression involves the child's (replaced) distribution is
  // invalidated; queries using one are rebuilt, sharing everything else.
  UpdateReport add_arc(const std::string& parent, const std::string& child,
                       const std::vector<std::vector<double>>& rows) {
    VarId p = net_.var_id(parent);
    VarId c = net_.var_id(child);
    ConditionalTable t;
    t.child = c;
    t.parents = net_.table(c).parents;
    t.parents.push_back(p);
    t.rows = rows;
    net_.add_arc(p, c, t);
    trace_line("{\"n\":" + std::to_string(++trace_n_) +
               ",\"event\":\"add_arc\",\"parent\":\"" + parent +
               "\",\"child\":\"" + child + "\"}");

    UpdateReport rep;
    // invalidate graph nodes whose value depends on the replaced table
    for (auto& n : graph_.nodes) {
      if (n.dead || n.fixture_ix >= 0) continue;
      if (set_contains(n.dists, c)) {
        n.dead = true;
        ++rep.dead_nodes;
      }
    }
    for (auto it = graph_.index.begin(); it != graph_.index.end();) {
      if (graph_.at(it->second).dead)
        it = graph_.index.erase(it);
      else
        ++it;
    }
    for (auto it = stream_cache_.begin(); it != stream_cache_.end();) {
      if (graph_.at(it->first.first).dead) {
        Stream& s = streams_[it->second];
        s.dropped = true;
        for (TermId tid : s.emitted) terms_[tid].removed = true;
        it = stream_cache_.erase(it);
      } else {
        ++it;
      }
    }

    for (std::size_t qi = 0; qi < graph_.queries.size(); ++qi)
      if (graph_.queries[qi].root != kNoNode &&
          graph_.at(graph_.queries[qi].root).dead)
        rebuild_query(qi, rep);
    return rep;
  }

  // --- introspection -----------------------------------------------------

  std::string dump() const { return termite::dump(graph_, net_); }
  std::vector<std::string> validate() const { return termite::validate(graph_, net_); }

  // Exposed for the step-through CLI and tests: direct stream access.
  StreamId root_stream(std::size_t qi) {
    if (qi >= graph_.queries.size()) throw error("no such query");
    return open_stream(graph_.queries[qi].root, Binding::empty());
  }

  bool pull(StreamId s) { return pop(s); }

  std::optional<double> bound(StreamId s) { return peek_bound(s); }

 private:
  // --- tracing -----------------------------------------------------------

  void trace_line(const std::string& s) {
    if (trace_) (*trace_) << s << '\n';
  }

  std::string fmt_binding(const Binding& b) const {
    std::string out;
    for (std::size_t i = 0; i < b.pairs.size(); ++i) {
      const auto& [v, val] = b.pairs[i];
      if (i) out += ',';
      out += net_.var(v).name + "=" + net_.var(v).values[val];
    }
    return out;
  }

  // --- term arena --------------------------------------------------------

  TermId create_term(StreamId owner, Binding binding, double mass,
                     double base_mass, std::vector<TermId> contributors) {
    if (budget_limit_ && stats_.terms_created >= *budget_limit_)
      throw budget_exhausted();
    Term t;
    t.id = TermId(terms_.size());
    t.owner = owner;
    t.binding = std::move(binding);
    t.mass = mass;
    t.base_mass = base_mass;
    t.seq = ++seq_;
    t.contributors = std::move(contributors);
    for (TermId c : t.contributors) terms_[c].dependents.push_back(t.id);
    ++stats_.terms_created;
    terms_.push_back(std::move(t));
    // a term built over retracted sources starts out retracted itself
    recompute(terms_.back().id);
    const Term& made = terms_.back();
    trace_line("{\"n\":" + std::to_string(++trace_n_) +
               ",\"event\":\"emit\",\"stream\":" + std::to_string(owner) +
               ",\"term\":" + std::to_string(made.id) + ",\"binding\":\"" +
               fmt_binding(made.binding) + "\",\"mass\":" + fmt_mass(made.mass) +
               "}");
    return made.id;
  }

  // Recomputes `t` from its sources; returns true if anything changed.
  bool recompute(TermId tid) {
    Term& t = terms_[tid];
    const Stream& s = streams_[t.owner];
    double mass = t.mass;
    bool removed = t.removed;
    if (s.dropped) return false;  // stale stream, nothing depends on it
    const EvalNode& n = graph_.at(s.node);
    switch (n.kind) {
      case NodeKind::leaf: {
        bool ok = true;
        for (const auto& [v, val] : t.binding.pairs) {
          auto ev = graph_.evidence.get(v);
          if (ev && *ev != val) ok = false;
        }
        removed = !ok;
        mass = ok ? t.base_mass : 0.0;
        break;
      }
      case NodeKind::product: {
        removed = false;
        mass = 1.0;
        for (TermId c : t.contributors) {
          if (terms_[c].removed) removed = true;
          mass *= terms_[c].mass;
        }
        if (removed) mass = 0.0;
        break;
      }
      case NodeKind::marginalize: {
        mass = 0.0;
        bool any = false;
        for (TermId c : t.contributors) {
          if (terms_[c].removed) continue;
          any = true;
          mass += terms_[c].mass;
        }
        removed = !any;
        break;
      }
    }
    if (mass == t.mass && removed == t.removed) return false;
    t.mass = mass;
    t.removed = removed;
    return true;
  }

  // Breadth-first delta propagation from the given seed terms.
  void propagate(std::deque<TermId>& work, UpdateReport& rep) {
    std::vector<char> queued(terms_.size(), 0);
    for (TermId t : work) queued[t] = 1;
    while (!work.empty()) {
      TermId tid = work.front();
      work.pop_front();
      queued[tid] = 0;
      ++rep.touched_terms;
      bool was_removed = terms_[tid].removed;
      if (!recompute(tid)) continue;
      if (!was_removed && terms_[tid].removed) {
        ++rep.removed_terms;
        trace_line("{\"n\":" + std::to_string(++trace_n_) +
                   ",\"event\":\"remove\",\"term\":" + std::to_string(tid) + "}");
      } else {
        trace_line("{\"n\":" + std::to_string(++trace_n_) +
                   ",\"event\":\"delta\",\"term\":" + std::to_string(tid) +
                   ",\"mass\":" + fmt_mass(terms_[tid].mass) + "}");
      }
      for (TermId d : terms_[tid].dependents)
        if (!queued[d]) {
          queued[d] = 1;
          work.push_back(d);
        }
    }
  }

  // Immediate propagation used when a marginalization merges new mass into an
  // already-emitted term.
  void propagate_from(TermId tid) {
    UpdateReport scratch;
    std::deque<TermId> work{tid};
    propagate(work, scratch);
  }

  // --- stream opening ----------------------------------------------------

  StreamId open_stream(NodeId node, const Binding& cond) {
    const EvalNode& n = graph_.at(node);
    Binding key_cond = cond.project(n.vars_present);
    auto key = std::make_pair(node, key_cond);
    auto it = stream_cache_.find(key);
    if (it != stream_cache_.end()) {
      ++streams_[it->second].hits;
      ++stats_.stream_cache_hits;
      return it->second;
    }
    Stream s;
    s.id = StreamId(streams_.size());
    s.node = node;
    s.cond = key_cond;
    switch (n.kind) {
      case NodeKind::leaf: init_leaf(s, n); break;
      case NodeKind::product:
        s.left = kNoStream;  // opened lazily on first access
        break;
      case NodeKind::marginalize: s.child = kNoStream; break;
    }
    ++stats_.streams_opened;
    streams_.push_back(std::move(s));
    stream_cache_[key] = streams_.back().id;
    trace_line("{\"n\":" + std::to_string(++trace_n_) +
               ",\"event\":\"open\",\"stream\":" + std::to_string(streams_.back().id) +
               ",\"node\":" + std::to_string(node) + ",\"cond\":\"" +
               fmt_binding(key_cond) + "\"}");
    return streams_.back().id;
  }

  void init_leaf(Stream& s, const EvalNode& n) {
    // enumerate the backing table restricted to build evidence and the
    // conditioning context; entries sorted mass-descending, binding ties in
    // assignment order so the sequence is stable
    if (n.fixture_ix >= 0) {
      const FactorTable& f = graph_.fixtures[n.fixture_ix];
      std::size_t total = 1;
      for (auto c : f.card) total *= c;
      for (std::size_t ix = 0; ix < total; ++ix) {
        Binding b;
        std::size_t rest = ix;
        for (std::size_t k = f.vars.size(); k-- > 0;) {
          b.set(f.vars[k], ValIx(rest % f.card[k]));
          rest /= f.card[k];
        }
        if (!b.consistent_with(s.cond)) continue;
        s.entries.push_back({b.project(n.vars_present), f.values[ix]});
      }
    } else {
      const auto& t = net_.table(n.dist_var);
      std::vector<VarId> scope = t.parents;
      scope.push_back(n.dist_var);
      std::vector<std::size_t> card;
      std::size_t total = 1;
      for (VarId v : scope) {
        card.push_back(net_.var(v).values.size());
        total *= card.back();
      }
      for (std::size_t ix = 0; ix < total; ++ix) {
        Binding b;
        std::size_t rest = ix;
        for (std::size_t k = scope.size(); k-- > 0;) {
          b.set(scope[k], ValIx(rest % card[k]));
          rest /= card[k];
        }
        bool ok = true;  // respect evidence the node was built under
        for (const auto& [v, val] : b.pairs) {
          auto ev = graph_.evidence.get(v);
          if (ev && !set_contains(n.vars_present, v) && *ev != val) ok = false;
        }
        if (!ok || !b.consistent_with(s.cond)) continue;
        double m = net_.mass(n.dist_var, b);
        if (m <= 0.0) continue;  // nothing downstream of a zero entry
        s.entries.push_back({b.project(n.vars_present), m});
      }
    }
    std::stable_sort(s.entries.begin(), s.entries.end(),
                     [](const auto& a, const auto& b) {
                       if (a.second != b.second) return a.second > b.second;
                       return a.first < b.first;
                     });
  }

  void ensure_children(Stream& s) {
    const EvalNode& n = graph_.at(s.node);
    if (n.kind == NodeKind::product && s.left == kNoStream)
      s.left = open_stream(n.left, s.cond);
    if (n.kind == NodeKind::marginalize && s.child == kNoStream)
      s.child = open_stream(n.child, s.cond);
  }

  // --- bounds ------------------------------------------------------------

  std::optional<double> peek_bound(StreamId sid) {
    Stream& s = streams_[sid];
    const EvalNode& n = graph_.at(s.node);
    switch (n.kind) {
      case NodeKind::leaf: {
        for (std::size_t i = s.cursor; i < s.entries.size(); ++i) {
          if (!entry_alive(s.entries[i].first)) continue;
          return s.entries[i].second;
        }
        return std::nullopt;
      }
      case NodeKind::product: {
        ensure_children(streams_[sid]);
        refresh_product(sid);
        Stream& p = streams_[sid];
        std::optional<double> best;
        for (const auto& c : p.agenda)
          if (!best || c.prio > *best) best = c.prio;
        if (auto f = frontier_prio(sid))
          if (!best || *f > *best) best = *f;
        return best;
      }
      case NodeKind::marginalize: {
        ensure_children(streams_[sid]);
        Stream& m = streams_[sid];
        std::optional<double> best;
        for (const auto& p : m.pendings) {
          double mass = pending_mass(p);
          if (!best || mass > *best) best = mass;
        }
        // a shared child opened by an earlier expression may already hold
        // emissions this stream has not caught up with yet
        const Stream& ch = streams_[m.child];
        for (std::size_t j = m.child_cursor; j < ch.emitted.size(); ++j) {
          const Term& t = terms_[ch.emitted[j]];
          if (!best || t.mass > *best) best = t.mass;
        }
        auto cb = peek_bound(m.child);
        if (cb && (!best || *cb > *best)) best = *cb;
        return best;
      }
    }
    return std::nullopt;
  }

  bool entry_alive(const Binding& b) const {
    for (const auto& [v, val] : b.pairs) {
      auto ev = graph_.evidence.get(v);
      if (ev && *ev != val) return false;
    }
    return true;
  }

  double pending_mass(const Stream::Pending& p) const {
    double m = 0.0;
    for (TermId c : p.contributors)
      if (!terms_[c].removed) m += terms_[c].mass;
    return m;
  }

  // Bound for expanding the next left term: exact when already emitted.
  std::optional<double> frontier_prio(StreamId sid) {
    Stream& s = streams_[sid];
    if (s.left_done) return std::nullopt;
    Stream& l = streams_[s.left];
    if (s.left_cursor < l.emitted.size())
      return terms_[l.emitted[s.left_cursor]].mass;
    if (l.exhausted) return std::nullopt;
    return peek_bound(s.left);
  }

  // Re-derive agenda priorities from current masses and child bounds.
  // Retracted terms weigh zero here but their pairings are kept: a term
  // retracted only through its sources regains mass if a later change
  // restores one of them, and the agenda must still be holding the pairing
  // when that happens.
  void refresh_product(StreamId sid) {
    Stream& s = streams_[sid];
    Stream& l = streams_[s.left];
    std::vector<Stream::Cand> keep;
    keep.reserve(s.agenda.size());
    for (auto c : s.agenda) {
      if (c.li >= l.emitted.size()) continue;  // should not happen
      const Term& lt = terms_[l.emitted[c.li]];
      Stream& r = streams_[c.right];
      if (c.rj < r.emitted.size()) {
        c.prio = lt.mass * terms_[r.emitted[c.rj]].mass;
        c.exact = true;
      } else if (r.exhausted) {
        continue;
      } else {
        auto rb = peek_bound(c.right);
        if (!rb) continue;
        c.prio = lt.mass * *rb;
        c.exact = false;
      }
      keep.push_back(c);
    }
    streams_[sid].agenda = std::move(keep);
    note_agenda(streams_[sid].agenda.size());
  }

  void note_agenda(std::size_t n) {
    if (n > stats_.max_agenda) stats_.max_agenda = n;
  }

  // --- popping -----------------------------------------------------------

  // Makes sure stream `sid` has more than `j` emissions; pulls as needed.
  bool ensure(StreamId sid, std::size_t j) {
    while (streams_[sid].emitted.size() <= j) {
      if (!pop(sid)) return false;
    }
    return true;
  }

  bool pop(StreamId sid) {
    const EvalNode& n = graph_.at(streams_[sid].node);
    switch (n.kind) {
      case NodeKind::leaf: return pop_leaf(sid);
      case NodeKind::product: return pop_product(sid);
      case NodeKind::marginalize: return pop_marg(sid);
    }
    return false;
  }

  bool pop_leaf(StreamId sid) {
    Stream& s = streams_[sid];
    while (s.cursor < s.entries.size()) {
      const auto& e = s.entries[s.cursor];
      if (!entry_alive(e.first)) {
        ++s.cursor;
        continue;
      }
      TermId t = create_term(sid, e.first, e.second, e.second, {});
      ++streams_[sid].cursor;
      streams_[sid].emitted.push_back(t);
      return true;
    }
    s.exhausted = true;
    return false;
  }

  bool pop_product(StreamId sid) {
    ensure_children(streams_[sid]);
    for (;;) {
      refresh_product(sid);
      // best agenda entry vs. expanding another left term; candidates win ties
      Stream& s = streams_[sid];
      std::size_t best_ix = s.agenda.size();
      for (std::size_t i = 0; i < s.agenda.size(); ++i) {
        if (best_ix == s.agenda.size() ||
            s.agenda[i].prio > s.agenda[best_ix].prio ||
            (s.agenda[i].prio == s.agenda[best_ix].prio &&
             s.agenda[i].seq < s.agenda[best_ix].seq))
          best_ix = i;
      }
      auto fp = frontier_prio(sid);
      bool expand = false;
      if (best_ix == streams_[sid].agenda.size()) {
        if (!fp) {
          streams_[sid].exhausted = true;
          return false;
        }
        expand = true;
      } else if (fp && *fp > streams_[sid].agenda[best_ix].prio) {
        expand = true;
      }

      if (expand) {
        expand_left(sid);
        continue;
      }

      Stream::Cand cand = streams_[sid].agenda[best_ix];
      const Term& lt = terms_[streams_[streams_[sid].left].emitted[cand.li]];
      if (!cand.exact) {
        if (!ensure(cand.right, cand.rj)) {
          streams_[sid].agenda.erase(streams_[sid].agenda.begin() +
                                     std::ptrdiff_t(best_ix));
          continue;
        }
        continue;  // re-refresh picks up the realized mass
      }
      const Term& rt = terms_[streams_[cand.right].emitted[cand.rj]];
      double mass = lt.mass * rt.mass;
      TermId t = create_term(sid, lt.binding.merged_with(rt.binding), mass, mass,
                             {lt.id, rt.id});
      Stream& s2 = streams_[sid];
      s2.agenda.erase(s2.agenda.begin() + std::ptrdiff_t(best_ix));
      // successor pairing for the same left term
      Stream& r = streams_[cand.right];
      if (cand.rj + 1 < r.emitted.size() || !r.exhausted) {
        Stream::Cand nxt;
        nxt.li = cand.li;
        nxt.right = cand.right;
        nxt.rj = cand.rj + 1;
        nxt.seq = ++seq_;
        nxt.exact = false;
        nxt.prio = 0.0;  // refreshed before use
        s2.agenda.push_back(nxt);
        note_agenda(s2.agenda.size());
      }
      s2.emitted.push_back(t);
      return true;
    }
  }

  void expand_left(StreamId sid) {
    Stream& s = streams_[sid];
    if (s.left_cursor >= streams_[s.left].emitted.size()) {
      if (!pop(s.left)) {
        streams_[sid].left_done = true;
        return;
      }
    }
    Stream& s2 = streams_[sid];
    Stream& l2 = streams_[s2.left];
    std::size_t li = s2.left_cursor;
    if (li >= l2.emitted.size()) return;  // popped term was consumed elsewhere
    const Term& lt = terms_[l2.emitted[li]];
    s2.left_cursor = li + 1;
    const EvalNode& n = graph_.at(s2.node);
    Binding rc = s2.cond.merged_with(lt.binding).project(
        graph_.at(n.right).vars_present);
    StreamId rid = open_stream(n.right, rc);
    Stream::Cand c;
    c.li = li;
    c.right = rid;
    c.rj = 0;
    c.seq = ++seq_;
    c.exact = false;
    c.prio = 0.0;
    streams_[sid].agenda.push_back(c);
    note_agenda(streams_[sid].agenda.size());
  }

  bool pop_marg(StreamId sid) {
    ensure_children(streams_[sid]);
    for (;;) {
      Stream& s = streams_[sid];
      // best pending: largest current mass, earliest on ties
      std::size_t best = s.pendings.size();
      double best_mass = 0.0;
      for (std::size_t i = 0; i < s.pendings.size(); ++i) {
        double m = pending_mass(s.pendings[i]);
        if (best == s.pendings.size() || m > best_mass ||
            (m == best_mass && s.pendings[i].seq < s.pendings[best].seq)) {
          best = i;
          best_mass = m;
        }
      }
      auto cb = peek_bound(streams_[sid].child);
      Stream& s2 = streams_[sid];
      if (best < s2.pendings.size() && (!cb || best_mass >= *cb)) {
        // pending term dominates everything the child can still produce
        Stream::Pending p = s2.pendings[best];
        TermId t = create_term(sid, p.proj, best_mass, best_mass, p.contributors);
        Stream& s3 = streams_[sid];
        s3.pendings.erase(s3.pendings.begin() + std::ptrdiff_t(best));
        s3.emitted_by_proj[terms_[t].binding] = s3.emitted.size();
        s3.emitted.push_back(t);
        return true;
      }
      if (!cb) {
        // child finished and nothing pending survived
        if (s2.child_cursor >= streams_[s2.child].emitted.size() &&
            streams_[s2.child].exhausted && s2.pendings.empty()) {
          s2.exhausted = true;
          return false;
        }
      }

      // pull (or catch up with) one child term
      Stream& ch = streams_[s2.child];
      if (s2.child_cursor >= ch.emitted.size()) {
        if (!pop(s2.child)) continue;  // bound goes null; loop decides
      }
      Stream& s4 = streams_[sid];
      Stream& ch2 = streams_[s4.child];
      if (s4.child_cursor >= ch2.emitted.size()) continue;
      TermId cid = ch2.emitted[s4.child_cursor++];
      const Term& ct = terms_[cid];
      const EvalNode& n = graph_.at(s4.node);
      Binding proj = ct.binding.project(n.vars_present);
      auto hit = s4.emitted_by_proj.find(proj);
      if (hit != s4.emitted_by_proj.end()) {
        // merge into an already-emitted term and push the growth through
        TermId tid = s4.emitted[hit->second];
        terms_[tid].contributors.push_back(cid);
        terms_[cid].dependents.push_back(tid);
        propagate_from(tid);
        continue;
      }
      bool merged = false;
      for (auto& p : s4.pendings)
        if (p.proj == proj) {
          p.contributors.push_back(cid);
          merged = true;
          break;
        }
      if (!merged) {
        Stream::Pending p;
        p.proj = proj;
        p.contributors = {cid};
        p.seq = ++seq_;
        s4.pendings.push_back(std::move(p));
        note_agenda(s4.pendings.size());
      }
    }
  }

  // --- reporting ---------------------------------------------------------

  void fill_report(std::size_t qi, StreamId root, AnytimeReport& rep) {
    const auto& q = graph_.queries[qi];
    const Stream& rs = streams_[root];
    std::map<Binding, double> lower;
    double total = 0.0;
    for (TermId t : rs.emitted) {
      const Term& tm = terms_[t];
      if (tm.removed) continue;
      lower[tm.binding] += tm.mass;
      total += tm.mass;
    }
    rep.mass_accounted = total;
    rep.exhausted = rs.exhausted && !peek_bound(root).has_value();
    double trivial = rep.exhausted ? 0.0 : std::max(0.0, 1.0 - total);
    rep.remainder = trivial;

    // fitted remainder, advisory: how much mass the emission curve suggests
    if (!rep.exhausted) {
      std::vector<MassPoint> pts;
      double cum = 0.0;
      std::size_t m = 0;
      for (TermId t : rs.emitted) {
        const Term& tm = terms_[t];
        if (tm.removed) continue;
        cum += tm.mass;
        pts.push_back({++m, cum});
      }
      rep.remainder_estimate = fitted_remaining(pts, total);
    } else {
      rep.remainder_estimate = 0.0;
    }

    // one row per target assignment, lexicographic by value index
    std::vector<std::size_t> card;
    for (VarId v : q.targets) card.push_back(net_.var(v).values.size());
    std::vector<ValIx> odo(q.targets.size(), 0);
    for (;;) {
      Binding b;
      for (std::size_t i = 0; i < q.targets.size(); ++i) b.set(q.targets[i], odo[i]);
      AnytimeCombo cb;
      cb.assignment = b;
      auto it = lower.find(b);
      cb.lower = it == lower.end() ? 0.0 : it->second;
      cb.upper = rep.exhausted ? cb.lower : cb.lower + trivial;
      cb.estimate = total > 0.0 ? cb.lower / total : 0.0;
      rep.combos.push_back(std::move(cb));
      std::size_t k = q.targets.size();
      while (k > 0) {
        if (++odo[k - 1] < card[k - 1]) break;
        odo[k - 1] = 0;
        --k;
      }
      if (k == 0) break;
    }
  }

  // Rebuilds one query against the current network/evidence, reusing cached
  // subtrees through the sharing index.
  void rebuild_query(std::size_t qi, UpdateReport& rep) {
    auto targets = graph_.queries[qi].targets;
    MergeReport mr;
    detail::GraphBuilder b(graph_, net_);
    mr.root = b.build_query(targets, mr);
    graph_.queries[qi].root = mr.root;
    rep.nodes_added += mr.nodes_added;
    rep.nodes_reused += mr.nodes_reused;
    rep.rebuilt_queries.push_back(qi);
    trace_line("{\"n\":" + std::to_string(++trace_n_) +
               ",\"event\":\"rebuild\",\"query\":" + std::to_string(qi) +
               ",\"root\":" + std::to_string(mr.root) + "}");
  }

  BeliefNet net_;
  EvalGraph graph_;
  std::deque<Stream> streams_;
  std::map<std::pair<NodeId, Binding>, StreamId> stream_cache_;
  std::deque<Term> terms_;
  SessionStats stats_;
  MergeReport last_merge_;
  std::uint64_t seq_ = 0;
  std::uint64_t trace_n_ = 0;
  std::optional<std::size_t> budget_limit_;
  std::ostream* trace_ = nullptr;
};

}  // namespace termite
