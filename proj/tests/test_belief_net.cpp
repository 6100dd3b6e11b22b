#include <catch2/catch_amalgamated.hpp>

#include "support.hpp"
#include "termite/belief_net.hpp"
#include "termite/oracle.hpp"

using namespace termite;
using namespace testsup;

namespace {

std::vector<VarId> ids(const BeliefNet& net, const std::vector<std::string>& names) {
  std::vector<VarId> out;
  for (const auto& n : names) out.push_back(net.var_id(n));
  return out;
}

}  // namespace

TEST_CASE("add_variable validates its inputs") {
  BeliefNet net;
  net.add_variable("A", {"t", "f"}, {}, {{0.5, 0.5}});

  CHECK_THROWS_AS(net.add_variable("A", {"t", "f"}, {}, {{0.5, 0.5}}), error);
  CHECK_THROWS_AS(net.add_variable("bad name", {"t", "f"}, {}, {{0.5, 0.5}}), error);
  CHECK_THROWS_AS(net.add_variable("", {"t", "f"}, {}, {{0.5, 0.5}}), error);
  CHECK_THROWS_AS(net.add_variable("B", {"t"}, {}, {{1.0}}), error);
  CHECK_THROWS_AS(net.add_variable("B", {"t", "t"}, {}, {{0.5, 0.5}}), error);
  CHECK_THROWS_AS(net.add_variable("B", {"t", "f"}, {}, {{0.5, 0.4}}), error);
  CHECK_THROWS_AS(net.add_variable("B", {"t", "f"}, {}, {{0.5, 0.5}, {1, 0}}), error);
  CHECK_THROWS_AS(net.add_variable("B", {"t", "f"}, {}, {{1.5, -0.5}}), error);
  CHECK_THROWS_AS(net.add_variable("B", {"t", "f"}, {"Z"}, {{0.5, 0.5}, {1, 0}}), error);
  // one row per parent combination is required
  CHECK_THROWS_AS(net.add_variable("B", {"t", "f"}, {"A"}, {{0.5, 0.5}}), error);

  VarId b = net.add_variable("B", {"t", "f"}, {"A"}, {{0.9, 0.1}, {0.2, 0.8}});
  CHECK(b == 1);
  CHECK(net.size() == 2);
  CHECK(net.var_id("B") == b);
  CHECK(net.children(0) == std::vector<VarId>{1});
  CHECK(net.value_ix(b, "f") == 1);
  CHECK_THROWS_AS(net.value_ix(b, "x"), error);
  CHECK_THROWS_AS(net.var_id("nope"), error);
}

TEST_CASE("row indexing is row-major with the last parent fastest") {
  auto net = fig2_net();
  VarId D = net.var_id("D");
  const auto& t = net.table(D);
  REQUIRE(t.parents.size() == 3);

  // parents are (B, C, F); index (t, f, t) must land on row 2
  Binding b;
  b.set(net.var_id("B"), 0);
  b.set(net.var_id("C"), 1);
  b.set(net.var_id("F"), 0);
  CHECK(net.row_index(t, b) == 2);
  b.set(D, 0);
  CHECK(net.mass(D, b) == Catch::Approx(0.85).margin(0));
  b.set(D, 1);
  CHECK(net.mass(D, b) == Catch::Approx(0.15).margin(0));

  // last parent toggles adjacent rows
  b.set(net.var_id("F"), 1);
  CHECK(net.row_index(t, b) == 3);

  Binding incomplete;
  incomplete.set(net.var_id("B"), 0);
  CHECK_THROWS_AS(net.row_index(t, incomplete), error);
  incomplete.set(net.var_id("C"), 0);
  incomplete.set(net.var_id("F"), 0);
  CHECK_THROWS_AS(net.mass(D, incomplete), error);  // D itself unbound
}

TEST_CASE("ancestors and closures") {
  auto net = fig2_net();
  auto A = net.var_id("A"), B = net.var_id("B"), C = net.var_id("C");
  auto E = net.var_id("E"), F = net.var_id("F"), D = net.var_id("D");
  auto G = net.var_id("G");

  CHECK(net.ancestors_of(D) == sorted({A, B, C, E, F}));
  CHECK(net.ancestors_of(A).empty());
  CHECK(net.closure_of({G}) == sorted({E, F, G}));
  CHECK(net.closure_of({D, G}) == sorted({A, B, C, D, E, F, G}));
  CHECK(net.closure_of({}).empty());
  CHECK_THROWS_AS(net.closure_of({99}), error);
}

TEST_CASE("add_arc re-parents with a widened table") {
  auto net = diamond_net();
  auto B = net.var_id("B"), C = net.var_id("C");

  ConditionalTable t;
  t.child = C;
  t.parents = {net.var_id("A"), B};
  t.rows = {{0.6, 0.4}, {0.75, 0.25}, {0.35, 0.65}, {0.1, 0.9}};
  net.add_arc(B, C, t);
  CHECK(net.table(C).parents == std::vector<VarId>{net.var_id("A"), B});
  CHECK(net.children(B) == std::vector<VarId>{net.var_id("D"), C});

  Binding b;
  b.set(net.var_id("A"), 0);
  b.set(B, 1);
  b.set(C, 0);
  CHECK(net.mass(C, b) == Catch::Approx(0.75).margin(0));
}

TEST_CASE("add_arc rejects bad arcs") {
  auto net = diamond_net();
  auto A = net.var_id("A"), B = net.var_id("B"), D = net.var_id("D");

  ConditionalTable t;
  t.child = B;
  t.parents = {A, D};
  t.rows = {{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}};
  // D -> B closes a cycle through B -> D
  CHECK_THROWS_AS(net.add_arc(D, B, t), error);
  CHECK_THROWS_AS(net.add_arc(B, B, t), error);
  CHECK_THROWS_AS(net.add_arc(99, B, t), error);

  // arc already present
  t.child = D;
  t.parents = {B, net.var_id("C"), B};
  t.rows.assign(8, {0.5, 0.5});
  CHECK_THROWS_AS(net.add_arc(B, D, t), error);

  // table naming the wrong child or the wrong parent list
  ConditionalTable wrong;
  wrong.child = B;
  wrong.parents = {net.var_id("C"), A};
  wrong.rows.assign(4, {0.5, 0.5});
  CHECK_THROWS_AS(net.add_arc(net.var_id("C"), D, wrong), error);
  wrong.child = D;
  CHECK_THROWS_AS(net.add_arc(net.var_id("C"), D, wrong), error);
}

TEST_CASE("skewness report") {
  auto net = fig2_net();
  auto rep = skewness(net);
  CHECK(rep.threshold == Catch::Approx(6.0 / 7.0).epsilon(1e-12));
  CHECK_FALSE(rep.is_skewed);
  REQUIRE(rep.per_variable_skew.size() == 7);
  CHECK(rep.per_variable_skew[net.var_id("A")] == Catch::Approx(0.9).margin(0));
  // G's worst row is (0.55, 0.45)
  CHECK(rep.per_variable_skew[net.var_id("G")] == Catch::Approx(0.55).margin(0));

  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t n = 4 + std::size_t(u01(rng) * 5.0);
    auto skewed = random_skewed_net(n, 3, rng);
    auto r = skewness(skewed);
    INFO("trial " << trial << " n=" << n);
    CHECK(r.is_skewed);
    for (double s : r.per_variable_skew) CHECK(s >= r.threshold);
  }

  // threshold is inclusive: a row exactly at (n-1)/n still counts as skewed
  BeliefNet edge;
  edge.add_variable("X", {"a", "b"}, {}, {{0.5, 0.5}});
  edge.add_variable("Y", {"a", "b"}, {}, {{0.5, 0.5}});
  auto er = skewness(edge);
  CHECK(er.threshold == Catch::Approx(0.5).margin(0));
  CHECK(er.is_skewed);
}

TEST_CASE("relevant nodes on the reference network") {
  auto net = fig2_net();
  auto A = net.var_id("A"), B = net.var_id("B"), C = net.var_id("C");
  auto E = net.var_id("E"), F = net.var_id("F"), D = net.var_id("D");
  auto G = net.var_id("G");

  // barren G is never relevant to D
  CHECK(relevant_nodes(net, {D}, {}) == sorted({A, B, C, E, F, D}));
  CHECK(relevant_nodes(net, {G}, {}) == sorted({E, F, G}));
  // an observed parent d-separates everything upstream of it
  CHECK(relevant_nodes(net, {B}, {A}) == std::vector<VarId>{B});
  // an observed collider opens the path between its parents
  CHECK(relevant_nodes(net, {B}, {D}) == sorted({A, B, C, E, F, D}));
  CHECK_THROWS_AS(relevant_nodes(net, {99}, {}), error);
  CHECK_THROWS_AS(relevant_nodes(net, {D}, {99}), error);
}

TEST_CASE("excluded nodes cannot influence the posterior") {
  // If a variable is reported irrelevant, replacing its table must leave the
  // normalized answer unchanged.  Checked against full enumeration.
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    auto net = random_net(6, 2, rng);
    std::vector<VarId> query{VarId(std::size_t(u01(rng) * 6.0) % 6)};
    Binding ev = random_evidence(net, std::size_t(u01(rng) * 3.0), query, rng);
    std::vector<VarId> ev_vars;
    for (const auto& [v, _] : ev.pairs) ev_vars.push_back(v);
    auto rel = relevant_nodes(net, query, ev_vars);

    auto posterior = [&](const BeliefNet& bn) {
      auto marg = exact_marginal(bn, query, ev);
      double total = 0.0;
      for (const auto& [_, m] : marg) total += m;
      std::vector<double> out;
      for (const auto& [_, m] : marg) out.push_back(total > 0 ? m / total : 0.0);
      return out;
    };
    auto before = posterior(net);

    for (VarId v = 0; v < net.size(); ++v) {
      if (set_contains(rel, v)) continue;
      // rebuild the net with v's rows pushed toward uniform
      BeliefNet mod;
      for (VarId w = 0; w < net.size(); ++w) {
        auto rows = net.table(w).rows;
        if (w == v)
          for (auto& row : rows)
            for (double& p : row) p = 0.7 * p + 0.3 / double(row.size());
        std::vector<std::string> parents;
        for (VarId p : net.table(w).parents) parents.push_back(net.var(p).name);
        mod.add_variable(net.var(w).name, net.var(w).values, parents, rows);
      }
      auto after = posterior(mod);
      REQUIRE(after.size() == before.size());
      for (std::size_t i = 0; i < before.size(); ++i) {
        INFO("trial " << trial << " perturbed " << net.var(v).name);
        CHECK(after[i] == Catch::Approx(before[i]).margin(1e-9));
      }
    }
  }
}

TEST_CASE("layers follow the longest path from the roots") {
  auto net = fig2_net();
  auto rel = relevant_nodes(net, ids(net, {"D"}), {});
  auto lay = layers(net, rel);
  REQUIRE(lay.size() == 3);
  CHECK(lay[0] == ids(net, {"A", "E"}));
  CHECK(lay[1] == ids(net, {"B", "C", "F"}));
  CHECK(lay[2] == ids(net, {"D"}));

  auto lay_g = layers(net, net.closure_of(ids(net, {"G"})));
  REQUIRE(lay_g.size() == 3);
  CHECK(lay_g[0] == ids(net, {"E"}));
  CHECK(lay_g[1] == ids(net, {"F"}));
  CHECK(lay_g[2] == ids(net, {"G"}));

  // a variable outside `relevant` does not lift its children's depth
  auto partial = layers(net, ids(net, {"B", "D"}));
  REQUIRE(partial.size() == 2);
  CHECK(partial[0] == ids(net, {"B"}));
  CHECK(partial[1] == ids(net, {"D"}));

  CHECK(layers(net, {}).empty());
}
