// Line-oriented text format for belief nets.
//
//   # comment
//   var A: a0 a1
//   cpt A: 0.75 0.25
//   var B: b0 b1
//   cpt B | A:
//     a0: 0.9 0.1
//     a1: 0.2 0.8
//
// Conditional rows may appear in any order but every parent combination must
// appear exactly once.  Internally rows are stored row-major with the last
// parent varying fastest; the writer emits them in that order.
#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "termite/belief_net.hpp"

namespace termite {

namespace detail {

struct Token {
  std::string text;
  int col = 0;  // 1-based column of the token start
};

inline std::vector<Token> split_tokens(const std::string& line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    if (line[i] == ' ' || line[i] == '\t') {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    out.push_back({line.substr(i, j - i), int(i) + 1});
    i = j;
  }
  return out;
}

inline double parse_prob(const Token& t, int line_no) {
  char* end = nullptr;
  double v = std::strtod(t.text.c_str(), &end);
  if (end == t.text.c_str() || *end != '\0')
    throw parse_error("expected a probability, got '" + t.text + "'", line_no, t.col);
  return v;
}

}  // namespace detail

inline BeliefNet parse_net(std::istream& in) {
  struct PendingVar {
    std::string name;
    std::vector<std::string> values;
    int line = 0;
    bool has_cpt = false;
    std::vector<std::string> parents;
    std::vector<double> root_row;
    // conditional rows keyed by parent labels, in file order
    std::vector<std::pair<std::vector<std::string>, std::vector<double>>> rows;
  };

  std::vector<PendingVar> decls;
  std::map<std::string, std::size_t> by_name;
  PendingVar* open_cpt = nullptr;  // conditional table awaiting indented rows

  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    const bool indented = !line.empty() && (line[0] == ' ' || line[0] == '\t');
    auto toks = detail::split_tokens(line);
    if (toks.empty()) continue;

    if (indented) {
      if (!open_cpt)
        throw parse_error("indented row outside a conditional table", line_no,
                          toks[0].col);
      // <parentval> ... : p p ...
      std::vector<std::string> labels;
      std::size_t i = 0;
      bool saw_colon = false;
      for (; i < toks.size(); ++i) {
        std::string t = toks[i].text;
        if (!t.empty() && t.back() == ':') {
          t.pop_back();
          if (!t.empty()) labels.push_back(t);
          ++i;
          saw_colon = true;
          break;
        }
        labels.push_back(t);
      }
      if (!saw_colon)
        throw parse_error("row is missing ':'", line_no, toks.back().col);
      if (labels.size() != open_cpt->parents.size())
        throw parse_error("row names " + std::to_string(labels.size()) +
                              " parent values, expected " +
                              std::to_string(open_cpt->parents.size()),
                          line_no, toks[0].col);
      std::vector<double> probs;
      for (; i < toks.size(); ++i)
        probs.push_back(detail::parse_prob(toks[i], line_no));
      open_cpt->rows.emplace_back(std::move(labels), std::move(probs));
      continue;
    }

    open_cpt = nullptr;
    const std::string& kw = toks[0].text;
    if (kw == "var") {
      if (toks.size() < 2)
        throw parse_error("var line is missing a name", line_no, toks[0].col);
      std::string name = toks[1].text;
      if (name.empty() || name.back() != ':')
        throw parse_error("expected '<name>:' after var", line_no, toks[1].col);
      name.pop_back();
      if (by_name.count(name))
        throw parse_error("duplicate variable '" + name + "'", line_no, toks[1].col);
      PendingVar pv;
      pv.name = name;
      pv.line = line_no;
      for (std::size_t i = 2; i < toks.size(); ++i) pv.values.push_back(toks[i].text);
      if (pv.values.size() < 2)
        throw parse_error("variable '" + name + "' needs at least two values",
                          line_no, toks[0].col);
      by_name.emplace(name, decls.size());
      decls.push_back(std::move(pv));
    } else if (kw == "cpt") {
      if (toks.size() < 2)
        throw parse_error("cpt line is missing a name", line_no, toks[0].col);
      std::string name = toks[1].text;
      bool name_closed = false;  // 'cpt A:' vs 'cpt A | ...'
      if (!name.empty() && name.back() == ':') {
        name.pop_back();
        name_closed = true;
      }
      auto it = by_name.find(name);
      if (it == by_name.end())
        throw parse_error("cpt for undeclared variable '" + name + "'", line_no,
                          toks[1].col);
      PendingVar& pv = decls[it->second];
      if (pv.has_cpt)
        throw parse_error("duplicate cpt for '" + name + "'", line_no, toks[1].col);
      pv.has_cpt = true;
      if (name_closed) {
        // root table, probabilities inline
        for (std::size_t i = 2; i < toks.size(); ++i)
          pv.root_row.push_back(detail::parse_prob(toks[i], line_no));
      } else {
        if (toks.size() < 3 || toks[2].text != "|")
          throw parse_error("expected ':' or '| <parents>:' after cpt name",
                            line_no, toks.size() > 2 ? toks[2].col : toks[1].col);
        bool saw_colon = false;
        for (std::size_t i = 3; i < toks.size(); ++i) {
          std::string p = toks[i].text;
          if (!p.empty() && p.back() == ':') {
            p.pop_back();
            saw_colon = true;
            if (!p.empty()) pv.parents.push_back(p);
            if (i + 1 != toks.size())
              throw parse_error("unexpected tokens after ':'", line_no,
                                toks[i + 1].col);
            break;
          }
          pv.parents.push_back(p);
        }
        if (!saw_colon)
          throw parse_error("cpt header is missing ':'", line_no, toks.back().col);
        if (pv.parents.empty())
          throw parse_error("cpt header names no parents", line_no, toks[1].col);
        for (const auto& p : pv.parents)
          if (!by_name.count(p))
            throw parse_error("cpt parent '" + p + "' is not declared", line_no,
                              toks[1].col);
        open_cpt = &pv;
      }
    } else {
      throw parse_error("unknown directive '" + kw + "'", line_no, toks[0].col);
    }
  }

  // Commit in declaration order; parents must be declared before children.
  BeliefNet net;
  for (auto& pv : decls) {
    if (!pv.has_cpt)
      throw parse_error("variable '" + pv.name + "' has no cpt", pv.line, 1);
    std::vector<std::vector<double>> rows;
    if (pv.parents.empty()) {
      rows.push_back(pv.root_row);
    } else {
      for (const auto& p : pv.parents)
        if (!net.has_var(p))
          throw parse_error("parent '" + p + "' of '" + pv.name +
                                "' must be declared before its child",
                            pv.line, 1);
      std::vector<std::size_t> card;
      std::size_t n_rows = 1;
      for (const auto& p : pv.parents) {
        card.push_back(net.var(net.var_id(p)).values.size());
        n_rows *= card.back();
      }
      rows.assign(n_rows, {});
      for (auto& [labels, probs] : pv.rows) {
        std::size_t ix = 0;
        for (std::size_t k = 0; k < labels.size(); ++k) {
          VarId pid = net.var_id(pv.parents[k]);
          ix = ix * card[k] + net.value_ix(pid, labels[k]);
        }
        if (!rows[ix].empty())
          throw parse_error("duplicate row in cpt for '" + pv.name + "'", pv.line, 1);
        rows[ix] = std::move(probs);
      }
      for (std::size_t ix = 0; ix < n_rows; ++ix)
        if (rows[ix].empty())
          throw parse_error("cpt for '" + pv.name + "' is missing a parent combination",
                            pv.line, 1);
    }
    try {
      net.add_variable(pv.name, pv.values, pv.parents, rows);
    } catch (const error& e) {
      throw parse_error(e.what(), pv.line, 1);
    }
  }
  return net;
}

inline BeliefNet parse_net_string(const std::string& text) {
  std::istringstream in(text);
  return parse_net(in);
}

inline BeliefNet load_net_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw error("cannot open '" + path + "'");
  return parse_net(in);
}

// Canonical writer; rows in row-major order (last parent fastest), %.17g so a
// round trip preserves every mass exactly.
inline std::string write_net(const BeliefNet& net) {
  std::ostringstream out;
  char buf[64];
  auto put = [&](double p) {
    std::snprintf(buf, sizeof buf, "%.17g", p);
    out << ' ' << buf;
  };
  for (VarId v = 0; v < net.size(); ++v) {
    const auto& var = net.var(v);
    out << "var " << var.name << ":";
    for (const auto& val : var.values) out << ' ' << val;
    out << '\n';
    const auto& t = net.table(v);
    if (t.parents.empty()) {
      out << "cpt " << var.name << ":";
      for (double p : t.rows[0]) put(p);
      out << '\n';
    } else {
      out << "cpt " << var.name << " |";
      for (VarId p : t.parents) out << ' ' << net.var(p).name;
      out << ":\n";
      std::vector<std::size_t> card;
      for (VarId p : t.parents) card.push_back(net.var(p).values.size());
      for (std::size_t ix = 0; ix < t.rows.size(); ++ix) {
        // decode row index back into labels, last parent fastest
        std::vector<std::size_t> vals(card.size());
        std::size_t rem = ix;
        for (std::size_t k = card.size(); k-- > 0;) {
          vals[k] = rem % card[k];
          rem /= card[k];
        }
        out << " ";
        for (std::size_t k = 0; k < card.size(); ++k)
          out << ' ' << net.var(t.parents[k]).values[vals[k]];
        out << ':';
        for (double p : t.rows[ix]) put(p);
        out << '\n';
      }
    }
  }
  return out.str();
}

}  // namespace termite
