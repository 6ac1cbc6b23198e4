#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "conserva/program.hpp"

namespace conserva {

using GradVector = std::vector<double>;

// One forward execution: all node values plus the derivative selection chosen
// at every application node. Selections are drawn once and shared by the
// forward and reverse differentiation sweeps. References the program, which
// must outlive the trace.
struct Trace {
  const EvalProgram* program = nullptr;
  SelectionPolicy policy;
  std::uint64_t trace_id = 0;
  std::vector<double> values;                    // size q
  std::vector<std::vector<double>> selections;   // size q; empty for input/const
  std::vector<bool> set_valued;                  // node's DerivSet had > 1 vertex

  double output() const { return values[program->output - 1]; }
  bool any_set_valued() const;
};

// Forward pass only; no derivative selections are drawn.
double eval_value(const EvalProgram& program, std::span<const double> x);

// Forward pass recording values and per-node selections. The selection draw
// counter of node k is combine(trace_id, k); distinct trace ids give
// independent draws, identical ones replay bitwise.
Trace forward_eval(const EvalProgram& program, std::span<const double> x,
                   const SelectionPolicy& policy, std::uint64_t trace_id = 0);

// Forward-mode sweep: propagates dx_k/dx rows in ascending node order,
// accumulating over parents in ascending parent index.
GradVector forward_diff(const Trace& trace);

// Reverse-mode sweep: adjoint vector seeded at the output node, swept in
// descending node order. Same selections as forward_diff, so the two agree
// up to floating-point reassociation.
GradVector reverse_diff(const Trace& trace);

// n reverse-mode draws over fresh traces at x with distinct counters.
std::vector<GradVector> sample_field(const EvalProgram& program, std::span<const double> x,
                                     const SelectionPolicy& policy, int n,
                                     std::uint64_t stream = 0);

// Exact Cartesian-product enumeration of per-node derivative vertices,
// deduplicated. Throws EnumerationOverflow when the product exceeds cap.
std::vector<GradVector> enumerate_field_vertices(const EvalProgram& program,
                                                 std::span<const double> x,
                                                 std::size_t cap = 4096);

}  // namespace conserva
