#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "conserva/experiments.hpp"
#include "support/programs.hpp"

using namespace conserva;

namespace {

// Brute-force Monte Carlo with an unrelated generator (mt19937_64), written
// independently of relu0_trial: estimates the probability that propagating e1
// through depth ReLU layers of uniform [-1,1] linear maps ever applies ReLU
// to an exact zero.
double brute_force_relu0(int width, int depth, long trials, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  long hits = 0;
  for (long t = 0; t < trials; ++t) {
    std::vector<double> a(width, 0.0), z(width);
    a[0] = 1.0;
    bool hit = false;
    for (int l = 0; l < depth; ++l) {
      for (int r = 0; r < width; ++r) {
        double s = 0.0;
        for (int c = 0; c < width; ++c) s += uni(gen) * a[c];
        z[r] = s;
      }
      for (int r = 0; r < width; ++r) {
        if (z[r] == 0.0) hit = true;
        a[r] = z[r] > 0.0 ? z[r] : 0.0;
      }
    }
    if (hit) ++hits;
  }
  return static_cast<double>(hits) / trials;
}

}  // namespace

TEST_CASE("closed-form hit probability validated by brute-force Monte Carlo") {
  struct Cell {
    int p, L;
  };
  const Cell cells[] = {{1, 2}, {2, 3}, {3, 10}, {2, 1}};
  const long trials = 200000;
  for (const Cell& c : cells) {
    const double oracle = relu0_oracle(c.p, c.L);
    const double mc = brute_force_relu0(c.p, c.L, trials, 0xbeef + c.p * 31 + c.L);
    const double sigma = std::sqrt(std::max(oracle * (1.0 - oracle), 1e-9) / trials);
    CHECK(std::fabs(mc - oracle) <= 4.0 * sigma + 1e-4);
  }
  CHECK(relu0_oracle(1, 2) == 0.5);
  CHECK(relu0_oracle(3, 10) == doctest::Approx(1.0 - std::pow(7.0 / 8.0, 9)).epsilon(1e-15));
  CHECK(relu0_oracle(4, 1) == 0.0);
}

TEST_CASE("experiment cells agree with the oracle within 3 Wilson half-widths") {
  Relu0Config config;
  config.widths = {1, 3};
  config.depths = {2, 10};
  config.trials = 20000;
  config.seed = 7;
  const auto rows = relu0_experiment(config);
  REQUIRE(rows.size() == 4);
  for (const auto& r : rows) {
    const double hw = (r.hi95 - r.lo95) / 2.0;
    CHECK(std::fabs(r.phat - relu0_oracle(r.width, r.depth)) <= 3.0 * hw);
    CHECK(r.lo95 <= r.phat);
    CHECK(r.phat <= r.hi95);
  }
}

TEST_CASE("hit flag coincides with a bitwise-zero minimum argument") {
  long hits = 0;
  for (long t = 0; t < 5000; ++t) {
    const Relu0Trial trial = relu0_trial(2, 6, 3, t);
    CHECK(trial.hit == (trial.min_abs == 0.0));
    if (trial.hit) ++hits;
  }
  CHECK(hits > 0);
}

TEST_CASE("depth-1 stacks never hit") {
  Relu0Config config;
  config.widths = {2};
  config.depths = {1};
  config.trials = 5000;
  const auto rows = relu0_experiment(config);
  CHECK(rows[0].hits == 0);
}

TEST_CASE("hit rate is monotone in depth and antitone in width, within noise") {
  Relu0Config config;
  config.widths = {1, 2, 3};
  config.depths = {2, 5, 10, 30};
  config.trials = 20000;
  config.seed = 11;
  const auto rows = relu0_experiment(config);
  auto cell = [&](int p, int L) -> const Relu0Row& {
    for (const auto& r : rows)
      if (r.width == p && r.depth == L) return r;
    throw std::logic_error("missing cell");
  };
  for (int p : config.widths) {
    for (std::size_t i = 0; i + 1 < config.depths.size(); ++i) {
      const auto& a = cell(p, config.depths[i]);
      const auto& b = cell(p, config.depths[i + 1]);
      CHECK(b.phat >= a.phat - (a.hi95 - a.lo95));
    }
  }
  for (int L : config.depths) {
    for (std::size_t i = 0; i + 1 < config.widths.size(); ++i) {
      const auto& a = cell(config.widths[i], L);
      const auto& b = cell(config.widths[i + 1], L);
      CHECK(b.phat <= a.phat + (a.hi95 - a.lo95));
    }
  }
}

TEST_CASE("wilson interval basics") {
  const WilsonInterval all = wilson95(100, 100);
  CHECK(all.lo < 1.0);
  CHECK(all.hi == doctest::Approx(1.0));
  const WilsonInterval none = wilson95(0, 100);
  CHECK(none.lo == doctest::Approx(0.0));
  CHECK(none.hi > 0.0);
  const WilsonInterval half = wilson95(50, 100);
  CHECK(half.lo < 0.5);
  CHECK(half.hi > 0.5);
}

TEST_CASE("gradient flow on x^2 travels unit length to the minimum") {
  const EvalProgram prog = testprog::parsed(testprog::kQuadratic);
  FlowConfig config;
  config.steps = 10000;
  config.alpha0 = 0.1;
  config.gamma = 0.6;
  const FlowResult res = descent_flow(prog, std::vector<double>{1.0}, config);
  CHECK(!res.diverged);
  CHECK(res.cum_len == doctest::Approx(1.0).epsilon(1e-2));
  CHECK(std::fabs(res.rows.back().x[0]) <= 1e-2);
  CHECK(res.terminal_criticality <= 1e-2);
}

TEST_CASE("abs flow parks on the kink where the min-norm direction vanishes") {
  const EvalProgram prog = testprog::parsed(testprog::kAbs);
  FlowConfig config;
  config.steps = 2000;
  config.alpha0 = 1.0;  // first step lands exactly on the kink
  config.gamma = 1.0;
  const FlowResult res = descent_flow(prog, std::vector<double>{1.0}, config);
  CHECK(res.rows.back().x[0] == 0.0);
  CHECK(res.cum_len == 1.0);
  CHECK(res.terminal_criticality == 0.0);
  // min-norm direction at the kink is 0: the field {-1, 1} straddles 0
  const auto at_kink = field_min_norm(prog, std::vector<double>{0.0});
  CHECK(at_kink.norm <= 1e-12);
}

TEST_CASE("constant programs generate zero-length flows") {
  const EvalProgram prog = parse_program(
      "conserva-program v1\ninput x1\nconst c 3\nnode x3 = id c\noutput x3\n");
  FlowConfig config;
  config.steps = 50;
  const FlowResult res = descent_flow(prog, std::vector<double>{0.7}, config);
  CHECK(res.cum_len == 0.0);
  CHECK(res.rows.back().x[0] == 0.7);
}

TEST_CASE("policy-selection flow differs from the min-norm flow at kinks") {
  const EvalProgram prog = testprog::parsed(testprog::kAbs);
  FlowConfig config;
  config.steps = 100;
  config.alpha0 = 1.0;
  config.gamma = 1.0;
  config.policy = SelectionPolicy{SelectMode::High, 0};
  const FlowResult res = descent_flow(prog, std::vector<double>{1.0}, config);
  // the High selection keeps pushing with derivative 1 even at the kink
  CHECK(res.cum_len > 1.0);
}

TEST_CASE("flow rows carry cumulative lengths") {
  const EvalProgram prog = testprog::parsed(testprog::kQuadratic);
  FlowConfig config;
  config.steps = 10;
  const FlowResult res = descent_flow(prog, std::vector<double>{1.0}, config);
  REQUIRE(res.rows.size() == 11);
  double cum = 0.0;
  for (const auto& r : res.rows) {
    cum = std::max(cum, r.cum_len);
    CHECK(r.cum_len == cum);  // nondecreasing
  }
  CHECK(res.rows.back().cum_len == res.cum_len);
}
