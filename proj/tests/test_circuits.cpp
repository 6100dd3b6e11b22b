#include <catch2/catch_amalgamated.hpp>

#include "support.hpp"
#include "termite/circuits.hpp"
#include "termite/oracle.hpp"

using namespace termite;

TEST_CASE("circuit layouts have the documented shape") {
  struct Expect {
    std::size_t gates, n_inputs;
    std::vector<std::string> terminal;
  };
  const std::vector<Expect> table = {
      {1, 1, {"O0"}},
      {2, 1, {"O1"}},
      {4, 2, {"O2", "O3"}},
      {9, 3, {"O6", "O7", "O8"}},
  };
  for (const auto& e : table) {
    auto cc = generate_circuit_case({e.gates, 0, 0.02, 1});
    CHECK(cc.inputs.size() == e.n_inputs);
    CHECK(cc.modes.size() == e.gates);
    CHECK(cc.outputs.size() == e.gates);
    REQUIRE(cc.terminal.size() == e.terminal.size());
    for (std::size_t i = 0; i < e.terminal.size(); ++i)
      CHECK(cc.net.var(cc.terminal[i]).name == e.terminal[i]);
    // every input and every terminal output is observed, nothing else
    CHECK(cc.observations.size() == e.n_inputs + e.terminal.size());
  }
}

TEST_CASE("a gate fed twice from one wire collapses to a unary table") {
  auto cc = generate_circuit_case({1, 0, 0.02, 1});
  const auto& t = cc.net.table(cc.outputs[0]);
  REQUIRE(t.parents.size() == 2);
  CHECK(cc.net.var(t.parents[0]).name == "M0");
  CHECK(cc.net.var(t.parents[1]).name == "I0");
  CHECK(t.rows.size() == 8);  // 4 modes x 2 wire values
  // ok rows invert the single input
  CHECK(t.rows[0] == std::vector<double>{0.0, 1.0});  // NAND(0,0) = 1
  CHECK(t.rows[1] == std::vector<double>{1.0, 0.0});  // NAND(1,1) = 0
  // mode prior splits the fault mass three ways
  const auto& prior = cc.net.table(cc.modes[0]).rows[0];
  CHECK(prior[0] == Catch::Approx(0.98).margin(1e-15));
  CHECK(prior[1] == Catch::Approx(0.02 / 3.0).margin(1e-15));
}

TEST_CASE("generation is a pure function of the CircuitSpec") {
  CircuitSpec spec{9, 2, 0.02, 77};
  auto a = generate_circuit_case(spec);
  auto b = generate_circuit_case(spec);
  CHECK(a.observations == b.observations);
  CHECK(a.true_modes == b.true_modes);
}

TEST_CASE("the injected truth has exactly the requested faults") {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    for (std::size_t faults : {std::size_t(0), std::size_t(1), std::size_t(2)}) {
      auto cc = generate_circuit_case({9, faults, 0.02, seed});
      std::size_t broken = 0;
      for (VarId m : cc.modes) {
        auto v = cc.true_modes.get(m);
        REQUIRE(v.has_value());
        if (*v != 0) ++broken;
        CHECK(*v != 3);  // the simulation never injects "unknown"
      }
      CHECK(broken == faults);
    }
  }
}

TEST_CASE("a healthy circuit's observations follow from plain NAND") {
  for (std::size_t gates : {std::size_t(1), std::size_t(2), std::size_t(4),
                            std::size_t(9)}) {
    auto cc = generate_circuit_case({gates, 0, 0.02, 42});
    auto L = detail::circuit_layout(gates);
    std::vector<int> in_val(L.n_inputs), out_val(gates);
    for (std::size_t i = 0; i < L.n_inputs; ++i)
      in_val[i] = int(*cc.observations.get(cc.inputs[i]));
    auto pin_val = [&](const detail::Pin& p) {
      return p.from_gate ? out_val[p.ix] : in_val[p.ix];
    };
    for (std::size_t gi = 0; gi < gates; ++gi)
      out_val[gi] = detail::nand_of(pin_val(L.gates[gi].first),
                                    pin_val(L.gates[gi].second));
    for (VarId t : cc.terminal) {
      std::size_t gi = gates;
      for (std::size_t k = 0; k < gates; ++k)
        if (cc.outputs[k] == t) gi = k;
      REQUIRE(gi < gates);
      CHECK(*cc.observations.get(t) == ValIx(out_val[gi]));
    }
  }
}

TEST_CASE("diagnosis runs match their recorded footprints") {
  auto r10 = run_circuit_bench({1, 0, 0.02, 1}, 0);
  CHECK(r10.terms_created == 5);
  REQUIRE(r10.found);
  CHECK(r10.mass == Catch::Approx(0.49).margin(1e-12));
  CHECK(r10.diagnosis == r10.true_modes);  // healthy gate diagnosed healthy

  auto r21 = run_circuit_bench({2, 1, 0.02, 1}, 0);
  CHECK(r21.terms_created == 10);
  REQUIRE(r21.found);
  CHECK(r21.mass == Catch::Approx(0.4802).margin(1e-12));

  auto r41 = run_circuit_bench({4, 1, 0.02, 1}, 0);
  CHECK(r41.terms_created == 52);
  REQUIRE(r41.found);
  CHECK(r41.mass == Catch::Approx(0.001568653333).margin(1e-12));

  auto r92 = run_circuit_bench({9, 2, 0.02, 1}, 0);
  CHECK(r92.terms_created == 304);
  REQUIRE(r92.found);
  CHECK(r92.mass == Catch::Approx(0.0007089691855).margin(1e-12));
}

TEST_CASE("small diagnoses agree with exhaustive search") {
  for (auto [gates, faults] : std::vector<std::pair<std::size_t, std::size_t>>{
           {1, 0}, {1, 1}, {2, 0}, {2, 1}, {4, 0}, {4, 1}}) {
    auto cc = generate_circuit_case({gates, faults, 0.02, 1});
    auto row = run_circuit_bench({gates, faults, 0.02, 1}, 0);
    REQUIRE(row.found);
    auto [ob, om] = exact_mlch(cc.net, cc.modes, cc.observations);
    INFO("gates=" << gates << " faults=" << faults);
    CHECK(row.diagnosis == ob);
    CHECK(row.mass == Catch::Approx(om).margin(1e-12));
  }
}

TEST_CASE("malformed specs are rejected") {
  CHECK_THROWS_AS(generate_circuit_case({3, 0, 0.02, 1}), error);
  CHECK_THROWS_AS(generate_circuit_case({1, 2, 0.02, 1}), error);
  CHECK_THROWS_AS(generate_circuit_case({1, 0, 0.0, 1}), error);
  CHECK_THROWS_AS(generate_circuit_case({1, 0, 1.0, 1}), error);
}
