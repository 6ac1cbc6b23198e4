#include "conserva/experiments.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "conserva/rng.hpp"
#include "conserva/vec.hpp"

namespace conserva {

namespace {

constexpr std::uint64_t kFlowStream = 0xf70b31u;

}  // namespace

Relu0Trial relu0_trial(int width, int depth, std::uint64_t seed, long trial_index) {
  const RngKey key = RngKey(seed)
                         .fork(static_cast<std::uint64_t>(width))
                         .fork(static_cast<std::uint64_t>(depth))
                         .fork(static_cast<std::uint64_t>(trial_index));
  std::vector<double> act(width, 0.0), pre(width);
  act[0] = 1.0;  // input is e1
  Relu0Trial out;
  out.min_abs = std::numeric_limits<double>::infinity();
  for (int layer = 0; layer < depth; ++layer) {
    const RngKey wkey = key.fork(static_cast<std::uint64_t>(layer));
    for (int r = 0; r < width; ++r) {
      double s = 0.0;
      for (int c = 0; c < width; ++c)
        s += wkey.uniform(-1.0, 1.0, static_cast<std::uint64_t>(r) * width + c) * act[c];
      pre[r] = s;
    }
    for (int r = 0; r < width; ++r) {
      if (pre[r] == 0.0) out.hit = true;
      out.min_abs = std::min(out.min_abs, std::fabs(pre[r]));
      act[r] = pre[r] > 0.0 ? pre[r] : 0.0;
    }
  }
  return out;
}

std::vector<Relu0Row> relu0_experiment(const Relu0Config& config) {
  if (config.trials < 1) throw std::invalid_argument("relu0: trials >= 1");
  std::vector<Relu0Row> rows;
  for (int p : config.widths) {
    for (int L : config.depths) {
      if (p < 1 || L < 1) throw std::invalid_argument("relu0: widths and depths >= 1");
      long hits = 0;
      for (long t = 0; t < config.trials; ++t) {
        const Relu0Trial trial = relu0_trial(p, L, config.seed, t);
        if (trial.hit != (trial.min_abs == 0.0))
          throw std::logic_error("relu0: hit flag disagrees with min |argument|");
        if (trial.hit) ++hits;
      }
      Relu0Row row;
      row.width = p;
      row.depth = L;
      row.trials = config.trials;
      row.hits = hits;
      row.phat = static_cast<double>(hits) / static_cast<double>(config.trials);
      const WilsonInterval ci = wilson95(hits, config.trials);
      row.lo95 = ci.lo;
      row.hi95 = ci.hi;
      rows.push_back(row);
    }
  }
  return rows;
}

double relu0_oracle(int width, int depth) {
  const double layer_zero_prob = std::pow(0.5, width);
  return 1.0 - std::pow(1.0 - layer_zero_prob, depth - 1);
}

WilsonInterval wilson95(long hits, long trials) {
  const double z = 1.959963984540054;
  const double n = static_cast<double>(trials);
  const double phat = static_cast<double>(hits) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = phat + z2 / (2.0 * n);
  const double hw = z * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n));
  return {(center - hw) / denom, (center + hw) / denom};
}

FlowResult descent_flow(const EvalProgram& program, std::span<const double> x0,
                        const FlowConfig& config) {
  if (x0.size() != program.input_count)
    throw std::invalid_argument("flow: x0 has wrong dimension");
  const std::size_t p = x0.size();

  std::vector<double> x(x0.begin(), x0.end());
  FlowResult res;
  double cum = 0.0;

  auto direction = [&](std::span<const double> at, long k) -> std::vector<double> {
    if (config.policy)
      return reverse_diff(forward_eval(program, at, *config.policy,
                                       combine(kFlowStream, static_cast<std::uint64_t>(k))));
    return field_min_norm(program, at, config.cap, config.samples, config.seed).point;
  };

  long steps_taken = 0;
  for (long k = 0; k < config.steps; ++k) {
    const double f = eval_value(program, x);
    const double alpha =
        config.alpha0 / std::pow(1.0 + static_cast<double>(k), config.gamma);
    const std::vector<double> d = direction(x, k);
    double step2 = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      const double s = alpha * d[j];
      step2 += s * s;
    }
    const double step_len = std::sqrt(step2);
    cum += step_len;
    res.rows.push_back({k, x, f, step_len, cum});
    for (std::size_t j = 0; j < p; ++j) x[j] -= alpha * d[j];
    steps_taken = k + 1;
    if (norm_inf(x) > config.guard) {
      res.diverged = true;
      break;
    }
  }
  res.rows.push_back({steps_taken, x, eval_value(program, x), 0.0, cum});
  res.cum_len = cum;
  res.terminal_criticality =
      field_min_norm(program, x, config.cap, config.samples, config.seed).norm;
  return res;
}

}  // namespace conserva
