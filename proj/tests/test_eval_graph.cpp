#include <catch2/catch_amalgamated.hpp>

#include "support.hpp"
#include "termite/eval_graph.hpp"

using namespace termite;
using namespace testsup;

namespace {

const char* kDumpG =
    "query G -> node 6\n"
    "  node 6 marginalize sum={F} vars={G} needed={G}\n"
    "    node 5 product vars={F,G} needed={F,G}\n"
    "      node 3 marginalize sum={E} vars={F} needed={F}\n"
    "        node 2 product vars={E,F} needed={E,F}\n"
    "          node 0 leaf P(E) vars={E} needed={E}\n"
    "          node 1 leaf P(F|E) vars={E,F} needed={E,F}\n"
    "      node 4 leaf P(G|F) vars={F,G} needed={F,G}\n";

const char* kDumpD =
    "query D -> node 17\n"
    "  node 17 marginalize sum={F} vars={D} needed={D}\n"
    "    node 16 product vars={F,D} needed={F,D}\n"
    "      node 3 marginalize sum={E} vars={F} needed={F}\n"
    "        node 2 product vars={E,F} needed={E,F}\n"
    "          node 0 leaf P(E) vars={E} needed={E}\n"
    "          node 1 leaf P(F|E) vars={E,F} needed={E,F}\n"
    "      node 15 marginalize sum={B,C} vars={F,D} needed={F,D}\n"
    "        node 14 product vars={B,C,F,D} needed={B,C,F,D}\n"
    "          node 12 marginalize sum={A} vars={B,C} needed={B,C}\n"
    "            node 11 product vars={A,B,C} needed={A,B,C}\n"
    "              node 10 product vars={A,B} needed={A,B}\n"
    "                node 7 leaf P(A) vars={A} needed={A}\n"
    "                node 8 leaf P(B|A) vars={A,B} needed={A,B}\n"
    "              node 9 leaf P(C|A) vars={A,C} needed={A,C}\n"
    "          node 13 leaf P(D|B,C,F) vars={B,C,F,D} needed={B,C,F,D}\n";

}  // namespace

TEST_CASE("construction of the spur query") {
  auto net = fig2_net();
  EvalGraph g;
  auto rep = merge_query(g, net, {net.var_id("G")});
  CHECK(rep.root == 6);
  CHECK(rep.nodes_added == 7);
  CHECK(rep.nodes_reused == 0);
  CHECK(dump(g, net) == kDumpG);
  CHECK(validate(g, net).empty());

  // structural invariants on the root
  const auto& root = g.at(rep.root);
  CHECK(root.kind == NodeKind::marginalize);
  CHECK(root.vars_present == std::vector<VarId>{net.var_id("G")});
  CHECK(root.dists == sorted({net.var_id("E"), net.var_id("F"), net.var_id("G")}));
}

TEST_CASE("a second query shares the common subexpression") {
  auto net = fig2_net();
  EvalGraph g;
  merge_query(g, net, {net.var_id("G")});
  auto rep = merge_query(g, net, {net.var_id("D")});
  CHECK(rep.root == 17);
  CHECK(rep.nodes_added == 11);
  CHECK(rep.nodes_reused == 4);  // P(E), P(F|E), their product and its sum
  CHECK(g.reuse_count == 4);
  CHECK(dump(g, net) == std::string(kDumpG) + kDumpD);
  CHECK(validate(g, net).empty());

  // registering the same query again is free
  auto again = merge_query(g, net, {net.var_id("D")});
  CHECK(again.root == rep.root);
  CHECK(again.nodes_added == 0);
  CHECK(again.nodes_reused == 0);
  CHECK(g.queries.size() == 2);
}

TEST_CASE("marginals stand left of the conditionals naming them") {
  // In every depth-first leaf order, a root's prior leaf precedes any table
  // conditioned on that root.  validate() checks this; trip it on purpose.
  auto net = fig2_net();
  EvalGraph g;
  auto rep = merge_query(g, net, {net.var_id("D")});
  REQUIRE(validate(g, net).empty());

  // swap a product's operands: P(A) must now trail P(B|A)
  for (auto& n : g.nodes) {
    if (n.kind != NodeKind::product) continue;
    if (g.at(n.left).kind == NodeKind::leaf &&
        g.at(n.left).fixture_ix < 0 &&
        net.table(g.at(n.left).dist_var).parents.empty()) {
      std::swap(n.left, n.right);
      break;
    }
  }
  auto bad = validate(g, net);
  REQUIRE_FALSE(bad.empty());
  CHECK(bad.front().find("appears after a conditional") != std::string::npos);
  (void)rep;
}

TEST_CASE("validate flags structural damage") {
  auto net = fig2_net();
  EvalGraph g;
  merge_query(g, net, {net.var_id("G")});

  SECTION("summed variable leaking out") {
    for (auto& n : g.nodes)
      if (n.kind == NodeKind::marginalize && n.sum_set == std::vector<VarId>{net.var_id("E")}) {
        n.sum_set = {net.var_id("F")};
        n.vars_present = {net.var_id("E")};
        n.needed = n.vars_present;
      }
    CHECK_FALSE(validate(g, net).empty());
  }
  SECTION("product vars out of sync") {
    for (auto& n : g.nodes)
      if (n.kind == NodeKind::product) n.vars_present.clear();
    CHECK_FALSE(validate(g, net).empty());
  }
  SECTION("needed outside vars_present") {
    g.nodes[0].needed.push_back(99);
    CHECK_FALSE(validate(g, net).empty());
  }
}

TEST_CASE("target validation") {
  auto net = fig2_net();
  EvalGraph g;
  CHECK_THROWS_AS(merge_query(g, net, {}), error);
  CHECK_THROWS_AS(merge_query(g, net, {net.var_id("D"), net.var_id("D")}), error);
  CHECK_THROWS_AS(merge_query(g, net, {99}), error);

  g.evidence.set(net.var_id("D"), 0);
  CHECK_THROWS_AS(merge_query(g, net, {net.var_id("D")}), error);
}

TEST_CASE("evidence changes the expression for the same query") {
  auto net = fig2_net();

  EvalGraph plain;
  merge_query(plain, net, {net.var_id("D")});
  // under evidence on B the B leaf carries no free B variable
  EvalGraph under;
  under.evidence.set(net.var_id("B"), 1);
  merge_query(under, net, {net.var_id("D")});

  bool found = false;
  for (const auto& n : under.nodes)
    if (n.kind == NodeKind::leaf && n.fixture_ix < 0 &&
        n.dist_var == net.var_id("B")) {
      found = true;
      CHECK(n.vars_present == std::vector<VarId>{net.var_id("A")});
    }
  CHECK(found);
  CHECK(validate(under, net).empty());
}

TEST_CASE("an observed-only island multiplies in as a likelihood factor") {
  // With evidence on G, a D query must still absorb P(G|F)'s mass.
  auto net = fig2_net();
  EvalGraph g;
  g.evidence.set(net.var_id("G"), 0);
  auto rep = merge_query(g, net, {net.var_id("D")});
  CHECK(validate(g, net).empty());
  // the G leaf appears in the tree even though G itself is bound
  bool saw_g = false;
  std::vector<NodeId> leaves;
  detail::collect_leaves(g, rep.root, leaves);
  for (NodeId id : leaves)
    if (g.at(id).fixture_ix < 0 && g.at(id).dist_var == net.var_id("G")) saw_g = true;
  CHECK(saw_g);
  CHECK(leaves.size() == 7);
}

TEST_CASE("random nets build valid shared graphs") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t n = 3 + std::size_t(u01(rng) * 7.0);
    auto net = random_net(n, 3, rng);
    Binding ev = random_evidence(net, std::size_t(u01(rng) * 3.0), {}, rng);
    EvalGraph g;
    g.evidence = ev;
    std::vector<VarId> free_vars;
    for (VarId v = 0; v < net.size(); ++v)
      if (!ev.binds(v)) free_vars.push_back(v);
    if (free_vars.empty()) continue;
    // two queries over random free variables
    for (int q = 0; q < 2; ++q) {
      VarId t = free_vars[std::size_t(u01(rng) * double(free_vars.size())) %
                          free_vars.size()];
      merge_query(g, net, {t});
    }
    INFO("trial " << trial);
    auto bad = validate(g, net);
    for (const auto& s : bad) UNSCOPED_INFO(s);
    CHECK(bad.empty());
  }
}

TEST_CASE("fixture products register as queries") {
  EvalGraph g;
  FactorTable f1{{0, 1}, {2, 2}, {0.95, 0.95, 0.05, 0.05}};
  FactorTable f2{{0, 1}, {2, 2}, {0.9, 0.1, 0.85, 0.15}};
  NodeId root = add_product_fixture(g, {f1, f2});
  REQUIRE(g.queries.size() == 1);
  CHECK(g.queries[0].root == root);
  CHECK(g.queries[0].targets == std::vector<VarId>{0, 1});
  CHECK(g.at(root).kind == NodeKind::product);
  CHECK(g.at(root).dists.empty());
  CHECK_THROWS_AS(add_product_fixture(g, {}), error);

  // factor indexing: row-major, last variable fastest
  Binding b;
  b.set(0, 1);
  b.set(1, 0);
  CHECK(f2.values[f2.index_of(b)] == 0.85);
  Binding partial;
  partial.set(0, 1);
  CHECK_THROWS_AS(f2.index_of(partial), error);
}
