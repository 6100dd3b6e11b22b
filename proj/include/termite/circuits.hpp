// Diagnosis benchmark: small NAND circuits with a four-valued fault mode per
// gate (ok, stuck-at-0, stuck-at-1, unknown).  Inputs are uniform coin flips;
// a gate in mode ok computes NAND deterministically, the stuck modes pin the
// output, and unknown makes it a coin flip.  A benchmark case observes every
// input and every terminal output of a simulated run (with a chosen number of
// injected stuck faults) and asks for the most likely joint mode assignment.
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "termite/belief_net.hpp"
#include "termite/common.hpp"
#include "termite/session.hpp"

namespace termite {

struct CircuitSpec {
  std::size_t gates = 1;       // 1, 2, 4 or 9 (fixed layouts)
  std::size_t faults = 0;      // stuck faults injected by the simulation
  double prior_fault = 0.02;   // prior mass spread over the three fault modes
  std::uint64_t seed = 1;
};

struct CircuitCase {
  BeliefNet net;
  std::vector<VarId> inputs;
  std::vector<VarId> modes;    // one per gate, in gate order
  std::vector<VarId> outputs;  // one per gate, in gate order
  std::vector<VarId> terminal; // outputs no later gate consumes
  Binding observations;        // simulated inputs + terminal outputs
  Binding true_modes;          // injected assignment, for scoring
};

namespace detail {

// Wiring for the fixed layouts: per gate the two source wires, each either an
// input (false, index) or an earlier gate's output (true, index).
struct Pin {
  bool from_gate = false;
  std::size_t ix = 0;
};

struct Layout {
  std::size_t n_inputs = 0;
  std::vector<std::pair<Pin, Pin>> gates;
};

inline Layout circuit_layout(std::size_t gates) {
  Layout L;
  auto in = [](std::size_t i) { return Pin{false, i}; };
  auto g = [](std::size_t i) { return Pin{true, i}; };
  switch (gates) {
    case 1:
      L.n_inputs = 1;
      L.gates = {{in(0), in(0)}};
      break;
    case 2:
      L.n_inputs = 1;
      L.gates = {{in(0), in(0)}, {g(0), in(0)}};
      break;
    case 4:
      L.n_inputs = 2;
      L.gates = {{in(0), in(1)}, {in(1), in(1)}, {g(0), g(1)}, {g(0), g(0)}};
      break;
    case 9:
      // three stages of three gates, each stage cross-wired to the previous
      L.n_inputs = 3;
      L.gates = {{in(0), in(1)}, {in(1), in(2)}, {in(2), in(0)},
                 {g(0), g(1)},   {g(1), g(2)},   {g(2), g(0)},
                 {g(3), g(4)},   {g(4), g(5)},   {g(5), g(3)}};
      break;
    default:
      throw error("circuit: supported sizes are 1, 2, 4 and 9 gates");
  }
  return L;
}

inline int nand_of(int a, int b) { return (a == 1 && b == 1) ? 0 : 1; }

}  // namespace detail

// Builds the network for a layout and simulates one run with `faults` stuck
// faults injected (never `unknown`; that mode only exists in the model).
inline CircuitCase generate_circuit_case(const CircuitSpec& spec) {
  if (spec.prior_fault <= 0.0 || spec.prior_fault >= 1.0)
    throw error("circuit: prior_fault must be inside (0,1)");
  const auto L = detail::circuit_layout(spec.gates);
  if (spec.faults > L.gates.size())
    throw error("circuit: more faults than gates");

  CircuitCase cc;
  const double p = spec.prior_fault;
  for (std::size_t i = 0; i < L.n_inputs; ++i)
    cc.inputs.push_back(cc.net.add_variable("I" + std::to_string(i), {"0", "1"},
                                            {}, {{0.5, 0.5}}));

  auto wire_name = [&](const detail::Pin& pin) {
    return pin.from_gate ? "O" + std::to_string(pin.ix)
                         : "I" + std::to_string(pin.ix);
  };

  for (std::size_t gi = 0; gi < L.gates.size(); ++gi) {
    const auto& [a, b] = L.gates[gi];
    VarId m = cc.net.add_variable("M" + std::to_string(gi),
                                  {"ok", "s0", "s1", "u"}, {},
                                  {{1.0 - p, p / 3.0, p / 3.0, p / 3.0}});
    cc.modes.push_back(m);

    const bool unary = a.from_gate == b.from_gate && a.ix == b.ix;
    std::vector<std::string> parents{"M" + std::to_string(gi), wire_name(a)};
    if (!unary) parents.push_back(wire_name(b));

    // rows over (mode, pin values), mode most significant, last parent fastest
    std::vector<std::vector<double>> rows;
    const std::size_t combos = unary ? 2 : 4;
    for (std::size_t mv = 0; mv < 4; ++mv) {
      for (std::size_t w = 0; w < combos; ++w) {
        int av = unary ? int(w) : int(w >> 1);
        int bv = unary ? int(w) : int(w & 1);
        switch (mv) {
          case 0: {  // ok: deterministic NAND
            int out = detail::nand_of(av, bv);
            rows.push_back(out == 0 ? std::vector<double>{1.0, 0.0}
                                    : std::vector<double>{0.0, 1.0});
            break;
          }
          case 1: rows.push_back({1.0, 0.0}); break;  // stuck at 0
          case 2: rows.push_back({0.0, 1.0}); break;  // stuck at 1
          default: rows.push_back({0.5, 0.5}); break; // unknown: coin flip
        }
      }
    }
    cc.outputs.push_back(
        cc.net.add_variable("O" + std::to_string(gi), {"0", "1"}, parents, rows));
  }

  // terminal outputs: not consumed by any later gate
  std::vector<char> consumed(L.gates.size(), 0);
  for (const auto& [a, b] : L.gates) {
    if (a.from_gate) consumed[a.ix] = 1;
    if (b.from_gate) consumed[b.ix] = 1;
  }
  for (std::size_t gi = 0; gi < L.gates.size(); ++gi)
    if (!consumed[gi]) cc.terminal.push_back(cc.outputs[gi]);

  // simulate: pick fault sites, then propagate values
  std::mt19937_64 rng(spec.seed);
  std::vector<std::size_t> order(L.gates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    std::size_t j = i + std::size_t(u01(rng) * double(order.size() - i));
    if (j >= order.size()) j = order.size() - 1;
    std::swap(order[i], order[j]);
  }
  std::vector<ValIx> mode_val(L.gates.size(), 0);  // 0 = ok
  for (std::size_t k = 0; k < spec.faults; ++k)
    mode_val[order[k]] = u01(rng) < 0.5 ? 1 : 2;  // s0 or s1

  std::vector<int> in_val(L.n_inputs);
  for (std::size_t i = 0; i < L.n_inputs; ++i)
    in_val[i] = u01(rng) < 0.5 ? 0 : 1;

  std::vector<int> out_val(L.gates.size(), 0);
  auto pin_val = [&](const detail::Pin& pin) {
    return pin.from_gate ? out_val[pin.ix] : in_val[pin.ix];
  };
  for (std::size_t gi = 0; gi < L.gates.size(); ++gi) {
    const auto& [a, b] = L.gates[gi];
    switch (mode_val[gi]) {
      case 0: out_val[gi] = detail::nand_of(pin_val(a), pin_val(b)); break;
      case 1: out_val[gi] = 0; break;
      default: out_val[gi] = 1; break;
    }
  }

  for (std::size_t i = 0; i < L.n_inputs; ++i)
    cc.observations.set(cc.inputs[i], ValIx(in_val[i]));
  for (std::size_t gi = 0; gi < L.gates.size(); ++gi) {
    cc.true_modes.set(cc.modes[gi], mode_val[gi]);
    if (!consumed[gi]) cc.observations.set(cc.outputs[gi], ValIx(out_val[gi]));
  }
  return cc;
}

struct BenchRow {
  std::size_t gates = 0;
  std::size_t faults = 0;
  std::size_t terms_created = 0;  // engine-wide, for the whole diagnosis
  bool found = false;
  double mass = 0.0;
  Binding diagnosis;
  Binding true_modes;
};

// One diagnosis run: observe the case's evidence, then ask for the most
// likely joint mode assignment under a term budget (0 = unlimited).
inline BenchRow run_circuit_bench(const CircuitSpec& spec, std::size_t term_budget) {
  auto cc = generate_circuit_case(spec);
  Session s(cc.net);
  std::size_t qi = s.register_query_ids(cc.modes);
  for (const auto& [v, val] : cc.observations.pairs)
    s.assert_evidence(cc.net.var(v).name, cc.net.var(v).values[val]);
  auto m = s.mlch(qi, term_budget);
  BenchRow row;
  row.gates = spec.gates;
  row.faults = spec.faults;
  row.terms_created = s.stats().terms_created;
  row.found = m.found;
  row.mass = m.mass;
  row.diagnosis = m.assignment;
  row.true_modes = cc.true_modes;
  return row;
}

}  // namespace termite
