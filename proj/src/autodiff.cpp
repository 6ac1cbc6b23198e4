#include "conserva/autodiff.hpp"

#include <algorithm>
#include <stdexcept>

#include "conserva/errors.hpp"
#include "conserva/rng.hpp"
#include "conserva/vec.hpp"

namespace conserva {

namespace {

void check_input_size(const EvalProgram& prog, std::span<const double> x) {
  if (x.size() != prog.input_count)
    throw std::invalid_argument("expected " + std::to_string(prog.input_count) +
                                " inputs, got " + std::to_string(x.size()));
}

std::vector<double> gather_args(const std::vector<double>& values, const NodeDef& nd) {
  std::vector<double> args(nd.parents.size());
  for (std::size_t j = 0; j < nd.parents.size(); ++j) args[j] = values[nd.parents[j] - 1];
  return args;
}

std::vector<double> forward_values(const EvalProgram& prog, std::span<const double> x) {
  std::vector<double> values(prog.node_count());
  for (const NodeDef& nd : prog.nodes) {
    switch (nd.kind) {
      case NodeDef::Kind::Input:
        values[nd.id - 1] = x[nd.id - 1];
        break;
      case NodeDef::Kind::Const:
        values[nd.id - 1] = nd.value;
        break;
      case NodeDef::Kind::Apply:
        try {
          values[nd.id - 1] = eval_prim(nd.prim, gather_args(values, nd));
        } catch (const DomainError& e) {
          throw DomainError(e.primitive(), nd.id, e.what());
        }
        break;
    }
  }
  return values;
}

// Reverse sweep shared by reverse_diff and field enumeration.
GradVector reverse_sweep(const EvalProgram& prog,
                         const std::vector<std::vector<double>>& selections) {
  const std::uint32_t q = prog.node_count();
  const std::uint32_t p = prog.input_count;
  std::vector<double> v(q, 0.0);
  v[prog.output - 1] = 1.0;
  for (std::uint32_t t = q; t > p; --t) {
    const NodeDef& nd = prog.nodes[t - 1];
    if (nd.kind != NodeDef::Kind::Apply) continue;
    const double vt = v[t - 1];
    const std::vector<double>& d = selections[t - 1];
    for (std::size_t j = 0; j < nd.parents.size(); ++j) v[nd.parents[j] - 1] += vt * d[j];
  }
  return GradVector(v.begin(), v.begin() + p);
}

}  // namespace

bool Trace::any_set_valued() const {
  return std::find(set_valued.begin(), set_valued.end(), true) != set_valued.end();
}

double eval_value(const EvalProgram& program, std::span<const double> x) {
  check_input_size(program, x);
  return forward_values(program, x)[program.output - 1];
}

Trace forward_eval(const EvalProgram& program, std::span<const double> x,
                   const SelectionPolicy& policy, std::uint64_t trace_id) {
  check_input_size(program, x);
  Trace tr;
  tr.program = &program;
  tr.policy = policy;
  tr.trace_id = trace_id;
  const std::uint32_t q = program.node_count();
  tr.values.resize(q);
  tr.selections.resize(q);
  tr.set_valued.assign(q, false);

  for (const NodeDef& nd : program.nodes) {
    const std::uint32_t k = nd.id;
    switch (nd.kind) {
      case NodeDef::Kind::Input:
        tr.values[k - 1] = x[k - 1];
        break;
      case NodeDef::Kind::Const:
        tr.values[k - 1] = nd.value;
        break;
      case NodeDef::Kind::Apply: {
        const auto args = gather_args(tr.values, nd);
        try {
          tr.values[k - 1] = eval_prim(nd.prim, args);
          const DerivSet ds = deriv_set(nd.prim, args);
          tr.set_valued[k - 1] = ds.set_valued();
          tr.selections[k - 1] = select(ds, policy, combine(trace_id, k));
        } catch (const DomainError& e) {
          throw DomainError(e.primitive(), k, e.what());
        }
        break;
      }
    }
  }
  return tr;
}

GradVector forward_diff(const Trace& trace) {
  const EvalProgram& prog = *trace.program;
  const std::uint32_t q = prog.node_count();
  const std::uint32_t p = prog.input_count;
  std::vector<double> table(static_cast<std::size_t>(q) * p, 0.0);
  for (std::uint32_t k = 1; k <= p; ++k) table[(k - 1) * static_cast<std::size_t>(p) + (k - 1)] = 1.0;

  std::vector<std::uint32_t> order;
  for (std::uint32_t k = p + 1; k <= q; ++k) {
    const NodeDef& nd = prog.nodes[k - 1];
    if (nd.kind != NodeDef::Kind::Apply) continue;
    double* row = &table[(k - 1) * static_cast<std::size_t>(p)];
    // accumulate in ascending parent index
    order.resize(nd.parents.size());
    for (std::uint32_t j = 0; j < order.size(); ++j) order[j] = j;
    std::sort(order.begin(), order.end(),
              [&](std::uint32_t a, std::uint32_t b) { return nd.parents[a] < nd.parents[b]; });
    const std::vector<double>& d = trace.selections[k - 1];
    for (std::uint32_t pos : order) {
      const double dk = d[pos];
      const double* prow = &table[(nd.parents[pos] - 1) * static_cast<std::size_t>(p)];
      for (std::uint32_t j = 0; j < p; ++j) row[j] += dk * prow[j];
    }
  }
  const double* out = &table[(prog.output - 1) * static_cast<std::size_t>(p)];
  return GradVector(out, out + p);
}

GradVector reverse_diff(const Trace& trace) {
  return reverse_sweep(*trace.program, trace.selections);
}

std::vector<GradVector> sample_field(const EvalProgram& program, std::span<const double> x,
                                     const SelectionPolicy& policy, int n,
                                     std::uint64_t stream) {
  if (n < 1) throw std::invalid_argument("sample_field: n >= 1");
  std::vector<GradVector> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i)
    out.push_back(reverse_diff(forward_eval(program, x, policy, combine(stream, i))));
  return out;
}

std::vector<GradVector> enumerate_field_vertices(const EvalProgram& program,
                                                 std::span<const double> x, std::size_t cap) {
  check_input_size(program, x);
  const auto values = forward_values(program, x);
  const std::uint32_t q = program.node_count();

  std::vector<std::uint32_t> app_nodes;
  std::vector<DerivSet> sets;
  std::size_t total = 1;
  for (const NodeDef& nd : program.nodes) {
    if (nd.kind != NodeDef::Kind::Apply) continue;
    DerivSet ds;
    try {
      ds = deriv_set(nd.prim, gather_args(values, nd));
    } catch (const DomainError& e) {
      throw DomainError(e.primitive(), nd.id, e.what());
    }
    const std::size_t count = ds.vertices.size();
    if (count > 1) {
      if (total > cap / count)
        throw EnumerationOverflow("vertex-combination count exceeds cap " + std::to_string(cap));
      total *= count;
    }
    app_nodes.push_back(nd.id);
    sets.push_back(std::move(ds));
  }

  std::vector<std::vector<double>> selections(q);
  std::vector<std::size_t> digit(app_nodes.size(), 0);
  std::vector<GradVector> out;
  out.reserve(total);
  while (true) {
    for (std::size_t i = 0; i < app_nodes.size(); ++i)
      selections[app_nodes[i] - 1] = sets[i].vertices[digit[i]];
    out.push_back(reverse_sweep(program, selections));
    // odometer
    std::size_t i = 0;
    for (; i < digit.size(); ++i) {
      if (++digit[i] < sets[i].vertices.size()) break;
      digit[i] = 0;
    }
    if (i == digit.size()) break;
  }

  std::sort(out.begin(), out.end(), [](const GradVector& a, const GradVector& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
  });
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace conserva
