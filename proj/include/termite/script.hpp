// Line-oriented session driver shared by the CLI and the end-to-end tests.
// One command per line; '#' starts a comment.  Errors are reported on the
// output stream and the session keeps going, so scripts double as a REPL.
#pragma once

#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "termite/circuits.hpp"
#include "termite/net_format.hpp"
#include "termite/oracle.hpp"
#include "termite/session.hpp"

namespace termite {

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

inline std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::vector<std::vector<double>> parse_rows(
    const std::vector<std::string>& words, std::size_t from) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = from; i < words.size(); ++i) {
    std::vector<double> row;
    for (const auto& tok : split_commas(words[i])) {
      std::size_t used = 0;
      double v = std::stod(tok, &used);
      if (used != tok.size()) throw error("bad number '" + tok + "'");
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

// Executes a command stream against one session.  Returns the number of
// commands that failed (0 for a clean run).
class ScriptRunner {
 public:
  explicit ScriptRunner(std::ostream& out, std::ostream* trace = nullptr)
      : out_(out), trace_(trace) {}

  int run(std::istream& in) {
    std::string line;
    int failures = 0;
    while (std::getline(in, line)) {
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      auto words = detail::split_ws(line);
      if (words.empty()) continue;
      try {
        dispatch(words);
      } catch (const std::exception& e) {
        out_ << "error: " << e.what() << "\n";
        ++failures;
      }
    }
    return failures;
  }

  Session* session() { return session_.get(); }

 private:
  Session& need_session() {
    if (!session_) throw error("no network loaded");
    return *session_;
  }

  std::string fmt_binding(const Binding& b) {
    const auto& net = need_session().net();
    std::string out;
    for (std::size_t i = 0; i < b.pairs.size(); ++i) {
      const auto& [v, val] = b.pairs[i];
      if (i) out += ',';
      out += net.var(v).name + "=" + net.var(v).values[val];
    }
    return out.empty() ? "-" : out;
  }

  void adopt(BeliefNet net) {
    session_ = std::make_unique<Session>(std::move(net));
    if (trace_) session_->set_trace(trace_);
  }

  void dispatch(const std::vector<std::string>& w) {
    const std::string& cmd = w[0];
    if (cmd == "load") {
      if (w.size() != 2) throw error("usage: load FILE");
      adopt(load_net_file(w[1]));
      out_ << "loaded " << session_->net().size() << " variables\n";
    } else if (cmd == "skew") {
      auto rep = skewness(need_session().net());
      double worst = 1.0;
      std::size_t worst_v = 0;
      for (std::size_t i = 0; i < rep.per_variable_skew.size(); ++i)
        if (rep.per_variable_skew[i] < worst) {
          worst = rep.per_variable_skew[i];
          worst_v = i;
        }
      out_ << "skewness: threshold=" << fmt_mass(rep.threshold)
           << " min=" << fmt_mass(worst) << " ("
           << need_session().net().var(VarId(worst_v)).name << ")"
           << " skewed=" << (rep.is_skewed ? "yes" : "no") << "\n";
    } else if (cmd == "query") {
      if (w.size() < 2) throw error("usage: query VAR [VAR...]");
      auto& s = need_session();
      std::size_t qi = s.register_query({w.begin() + 1, w.end()});
      auto mr = s.last_merge();
      out_ << "query " << qi << ": root=node " << mr.root
           << " added=" << mr.nodes_added << " reused=" << mr.nodes_reused
           << "\n";
    } else if (cmd == "pull") {
      if (w.size() != 3) throw error("usage: pull QUERY N");
      auto& s = need_session();
      auto rep = s.anytime_query(std::stoul(w[1]), std::stoul(w[2]));
      print_report(rep);
    } else if (cmd == "step") {
      if (w.size() != 3) throw error("usage: step QUERY N");
      auto& s = need_session();
      std::size_t qi = std::stoul(w[1]);
      std::size_t n = std::stoul(w[2]);
      StreamId root = s.root_stream(qi);
      for (std::size_t i = 0; i < n; ++i) {
        if (!s.pull(root)) {
          out_ << "stream exhausted\n";
          break;
        }
        const auto& t = s.term(s.stream(root).emitted.back());
        out_ << "term " << t.id << ": " << fmt_binding(t.binding)
             << " mass=" << fmt_mass(t.mass) << "\n";
      }
    } else if (cmd == "bound") {
      if (w.size() != 2) throw error("usage: bound QUERY");
      auto& s = need_session();
      auto b = s.bound(s.root_stream(std::stoul(w[1])));
      if (b)
        out_ << "next-term bound=" << fmt_mass(*b) << "\n";
      else
        out_ << "stream exhausted\n";
    } else if (cmd == "mlch") {
      if (w.size() != 3) throw error("usage: mlch QUERY BUDGET");
      auto& s = need_session();
      auto m = s.mlch(std::stoul(w[1]), std::stoul(w[2]));
      if (m.found)
        out_ << "mlch: " << fmt_binding(m.assignment)
             << " mass=" << fmt_mass(m.mass) << " terms=" << m.terms_created
             << "\n";
      else if (m.exhausted)
        out_ << "mlch: empty (everything retracted)\n";
      else
        out_ << "mlch: not yet (budget exhausted after " << m.terms_created
             << " terms)\n";
    } else if (cmd == "evidence") {
      if (w.size() != 3) throw error("usage: evidence VAR VALUE");
      auto rep = need_session().assert_evidence(w[1], w[2]);
      if (rep.noop) {
        out_ << "evidence " << w[1] << "=" << w[2] << ": already observed\n";
      } else {
        out_ << "evidence " << w[1] << "=" << w[2] << ": removed="
             << rep.removed_terms << " touched=" << rep.touched_terms
             << " rebuilt=" << rep.rebuilt_queries.size()
             << " added=" << rep.nodes_added << " reused=" << rep.nodes_reused
             << "\n";
      }
    } else if (cmd == "add-node") {
      if (w.size() < 4) throw error("usage: add-node NAME VALUES PARENTS ROW...");
      auto vals = detail::split_commas(w[2]);
      std::vector<std::string> parents;
      if (w[3] != "-") parents = detail::split_commas(w[3]);
      auto rows = detail::parse_rows(w, 4);
      auto rep = need_session().add_node(w[1], vals, parents, rows);
      (void)rep;
      out_ << "added node " << w[1] << " (nothing invalidated)\n";
    } else if (cmd == "add-arc") {
      if (w.size() < 4) throw error("usage: add-arc PARENT CHILD ROW...");
      auto rows = detail::parse_rows(w, 3);
      auto rep = need_session().add_arc(w[1], w[2], rows);
      out_ << "added arc " << w[1] << "->" << w[2] << ": dead=" << rep.dead_nodes
           << " rebuilt=" << rep.rebuilt_queries.size() << " added="
           << rep.nodes_added << " reused=" << rep.nodes_reused << "\n";
    } else if (cmd == "dump") {
      out_ << need_session().dump();
    } else if (cmd == "validate") {
      auto bad = need_session().validate();
      if (bad.empty()) {
        out_ << "ok\n";
      } else {
        for (const auto& s : bad) out_ << "violation: " << s << "\n";
      }
    } else if (cmd == "stats") {
      const auto& st = need_session().stats();
      out_ << "terms=" << st.terms_created << " streams=" << st.streams_opened
           << " cache_hits=" << st.stream_cache_hits
           << " max_agenda=" << st.max_agenda << "\n";
    } else if (cmd == "bench") {
      if (w.size() < 4 || w.size() > 5)
        throw error("usage: bench GATES FAULTS BUDGET [SEED]");
      CircuitSpec spec;
      spec.gates = std::stoul(w[1]);
      spec.faults = std::stoul(w[2]);
      if (w.size() == 5) spec.seed = std::stoull(w[4]);
      std::size_t budget = std::stoul(w[3]);
      auto row = run_circuit_bench(spec, budget);
      out_ << "bench gates=" << row.gates << " faults=" << row.faults
           << " terms=" << row.terms_created << " found="
           << (row.found ? "yes" : "no");
      if (row.found) out_ << " mass=" << fmt_mass(row.mass);
      out_ << "\n";
    } else if (cmd == "fixture") {
      if (w.size() != 2 || w[1] != "worked-example")
        throw error("usage: fixture worked-example");
      make_worked_example();
    } else {
      throw error("unknown command '" + cmd + "'");
    }
  }

  // The three-factor demonstration over two binary variables; its product
  // terms arrive largest first: 0.64125, 0.019, 0.0085, 0.005625.
  void make_worked_example() {
    BeliefNet net;
    net.add_variable("B", {"b0", "b1"}, {}, {{0.5, 0.5}});
    net.add_variable("A", {"a0", "a1"}, {}, {{0.5, 0.5}});
    adopt(std::move(net));
    VarId B = 0, A = 1;
    FactorTable f1{{B, A}, {2, 2}, {0.95, 0.95, 0.05, 0.05}};
    FactorTable f2{{B, A}, {2, 2}, {0.9, 0.1, 0.85, 0.15}};
    FactorTable f3{{B, A}, {2, 2}, {0.75, 0.2, 0.2, 0.75}};
    std::size_t qi = session_->register_fixture({f1, f2, f3});
    out_ << "fixture ready: query " << qi << " over B,A\n";
  }

  void print_report(const AnytimeReport& rep) {
    out_ << "accounted=" << fmt_mass(rep.mass_accounted)
         << " remainder=" << fmt_mass(rep.remainder);
    if (rep.remainder_estimate)
      out_ << " est_remainder=" << fmt_mass(*rep.remainder_estimate);
    out_ << " exhausted=" << (rep.exhausted ? "yes" : "no")
         << " pulls=" << rep.pulls_used << "\n";
    for (const auto& cb : rep.combos) {
      out_ << "  " << fmt_binding(cb.assignment) << " lower="
           << fmt_mass(cb.lower) << " upper=" << fmt_mass(cb.upper)
           << " est=" << fmt_mass(cb.estimate) << "\n";
    }
  }

  std::ostream& out_;
  std::ostream* trace_;
  std::unique_ptr<Session> session_;
};

}  // namespace termite
