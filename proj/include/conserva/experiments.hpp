#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "conserva/conservativity.hpp"

namespace conserva {

// Probability-of-ReLU(0) experiment: feedforward stacks of linear maps
// (uniform [-1,1] entries, no bias) followed by coordinatewise ReLU, input
// e1. A trial is a hit when any ReLU argument is bitwise +-0.0.
struct Relu0Config {
  std::vector<int> widths;
  std::vector<int> depths;
  long trials = 10000;
  std::uint64_t seed = 0;
};

struct Relu0Row {
  int width = 0;
  int depth = 0;
  long trials = 0;
  long hits = 0;
  double phat = 0.0;
  double lo95 = 0.0;
  double hi95 = 0.0;
};

struct Relu0Trial {
  bool hit = false;
  double min_abs = 0.0;  // smallest |argument| seen by any ReLU in the trial
};

Relu0Trial relu0_trial(int width, int depth, std::uint64_t seed, long trial_index);
std::vector<Relu0Row> relu0_experiment(const Relu0Config& config);

// Closed form for the hit probability: a layer's ReLU output is the zero
// vector iff all width pre-activations are <= 0 (probability 2^-width by the
// sign symmetry of <w, z> for z != 0), and a zero vector forces exact-zero
// arguments at the next layer, so P(hit) = 1 - (1 - 2^-width)^(depth-1).
double relu0_oracle(int width, int depth);

struct WilsonInterval {
  double lo = 0.0;
  double hi = 0.0;
};
WilsonInterval wilson95(long hits, long trials);

// Explicit Euler discretization of the descent inclusion: the step direction
// is the min-norm point of the field at the iterate (or a policy selection
// when policy is set), with steps alpha_k = alpha0 / (1 + k)^gamma.
struct FlowConfig {
  long steps = 1000;
  double alpha0 = 0.1;
  double gamma = 0.6;
  std::size_t cap = 1024;  // field enumeration cap before sampling fallback
  int samples = 64;        // sampling fallback draw count
  std::optional<SelectionPolicy> policy;  // arbitrary-selection mode
  double guard = 1e6;
  std::uint64_t seed = 0;
};

struct FlowRow {
  long k = 0;
  std::vector<double> x;
  double f = 0.0;
  double step_len = 0.0;
  double cum_len = 0.0;
};

struct FlowResult {
  std::vector<FlowRow> rows;
  double cum_len = 0.0;
  double terminal_criticality = 0.0;
  bool diverged = false;
};

FlowResult descent_flow(const EvalProgram& program, std::span<const double> x0,
                        const FlowConfig& config);

}  // namespace conserva
