#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "conserva/errors.hpp"
#include "conserva/rng.hpp"
#include "conserva/train.hpp"
#include "conserva/vec.hpp"
#include "support/programs.hpp"

using namespace conserva;

namespace {

NetSpec one_layer_identity() {
  NetSpec net;
  net.widths = {1, 1};
  net.activations = {registry_lookup("id")};
  net.loss = NetSpec::Loss::Square;
  return net;
}

NetSpec relu_teacher_net() {
  NetSpec net;
  net.widths = {2, 8, 1};
  net.activations = {registry_lookup("relu"), registry_lookup("id")};
  net.loss = NetSpec::Loss::Square;
  return net;
}

// least-squares oracle: solve the d x d normal equations by Gaussian
// elimination with partial pivoting (independent of the autodiff path)
std::vector<double> solve_normal_equations(const Dataset& data) {
  const int d = static_cast<int>(data.x[0].size()) + 1;
  std::vector<std::vector<double>> A(d, std::vector<double>(d + 1, 0.0));
  for (int i = 0; i < data.size(); ++i) {
    std::vector<double> xt(data.x[i]);
    xt.push_back(1.0);
    for (int r = 0; r < d; ++r) {
      for (int c = 0; c < d; ++c) A[r][c] += xt[r] * xt[c];
      A[r][d] += xt[r] * data.y[i][0];
    }
  }
  for (int c = 0; c < d; ++c) {
    int piv = c;
    for (int r = c + 1; r < d; ++r)
      if (std::fabs(A[r][c]) > std::fabs(A[piv][c])) piv = r;
    std::swap(A[c], A[piv]);
    for (int r = c + 1; r < d; ++r) {
      const double f = A[r][c] / A[c][c];
      for (int k = c; k <= d; ++k) A[r][k] -= f * A[c][k];
    }
  }
  std::vector<double> w(d);
  for (int r = d - 1; r >= 0; --r) {
    double s = A[r][d];
    for (int c = r + 1; c < d; ++c) s -= A[r][c] * w[c];
    w[r] = s / A[r][r];
  }
  return w;
}

double least_squares_loss(const Dataset& data, const std::vector<double>& w) {
  double total = 0.0;
  for (int i = 0; i < data.size(); ++i) {
    double pred = w.back();
    for (std::size_t j = 0; j < data.x[i].size(); ++j) pred += w[j] * data.x[i][j];
    const double r = pred - data.y[i][0];
    total += 0.5 * r * r;
  }
  return total / data.size();
}

Dataset linear_regression_data(int n, std::uint64_t seed) {
  Dataset data;
  const RngKey key = RngKey(seed).fork(0x11);
  for (int i = 0; i < n; ++i) {
    const RngKey k = key.fork(i);
    const double x = k.gaussian(0);
    data.x.push_back({x});
    data.y.push_back({2.0 * x - 0.5 + 0.05 * k.gaussian(1)});
  }
  return data;
}

Dataset teacher_data(const NetSpec& net, int n, std::uint64_t seed) {
  Dataset data;
  const std::vector<double> wt = default_init(net.weight_count(), seed ^ 0x7e);
  const RngKey key = RngKey(seed).fork(0x22);
  for (int i = 0; i < n; ++i) {
    const RngKey k = key.fork(i);
    std::vector<double> x{k.gaussian(0), k.gaussian(1)};
    data.y.push_back(net_predict(net, wt, x));
    data.x.push_back(std::move(x));
  }
  return data;
}

}  // namespace

TEST_CASE("one-layer identity loss program and its gradient") {
  const NetSpec net = one_layer_identity();
  const EvalProgram prog =
      build_loss_program(net, std::vector<double>{2.0}, std::vector<double>{1.0});
  CHECK(validate(prog).empty());
  CHECK(prog.input_count == 2);  // w1 and the bias

  // f(w) = 0.5 (w1 * 2 + w2 - 1)^2 at (1, 0): value 0.5, gradient (2, 1)
  const std::vector<double> w{1.0, 0.0};
  CHECK(eval_value(prog, w) == 0.5);
  const GradVector g = reverse_diff(forward_eval(prog, w, SelectionPolicy{}));
  CHECK(g == GradVector{2.0, 1.0});
}

TEST_CASE("dead relu network: only the output bias carries gradient") {
  NetSpec net = relu_teacher_net();
  const std::vector<double> x{0.7, -0.3}, y{1.25};
  const EvalProgram prog = build_loss_program(net, x, y);
  const std::vector<double> w0(net.weight_count(), 0.0);

  CHECK(eval_value(prog, w0) == doctest::Approx(0.5 * y[0] * y[0]).epsilon(1e-15));
  const GradVector g = reverse_diff(forward_eval(prog, w0, SelectionPolicy{}));
  // flattening: [W1 (16), b1 (8), W2 (8), b2 (1)]; only b2 is active
  for (std::size_t j = 0; j + 1 < g.size(); ++j) CHECK(g[j] == 0.0);
  CHECK(g.back() == -y[0]);
}

TEST_CASE("bce loss value at y=1 is -log(a)") {
  NetSpec net;
  net.widths = {1, 1};
  net.activations = {registry_lookup("sigmoid")};
  net.loss = NetSpec::Loss::Bce;
  const EvalProgram prog =
      build_loss_program(net, std::vector<double>{0.8}, std::vector<double>{1.0});
  const std::vector<double> w{0.6, -0.1};
  const double z = 0.6 * 0.8 + -0.1;
  const double a = 1.0 / (1.0 + std::exp(-z));
  CHECK(eval_value(prog, w) == doctest::Approx(-std::log(a)).epsilon(1e-14));
}

TEST_CASE("bce requires a sigmoid head") {
  NetSpec net;
  net.widths = {1, 1};
  net.activations = {registry_lookup("id")};
  net.loss = NetSpec::Loss::Bce;
  CHECK_THROWS_AS(net.check(), ConfigError);
}

TEST_CASE("net_predict matches the loss program's internal forward pass bitwise") {
  const NetSpec net = relu_teacher_net();
  const RngKey key(404);
  for (int i = 0; i < 10; ++i) {
    const RngKey k = key.fork(i);
    const std::vector<double> x{k.gaussian(0), k.gaussian(1)};
    const std::vector<double> y{0.0};
    std::vector<double> w(net.weight_count());
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = k.uniform(-1.0, 1.0, 10 + j);
    const EvalProgram prog = build_loss_program(net, x, y);
    // with y = 0, the square loss is pred^2 / 2
    const double pred = net_predict(net, w, x)[0];
    CHECK(eval_value(prog, w) == 0.5 * (pred * pred));
  }
}

TEST_CASE("zero-gradient start freezes the iterates") {
  const NetSpec net = relu_teacher_net();
  const std::vector<double> w0 = default_init(net.weight_count(), 9);
  Dataset data;
  const RngKey key(5151);
  for (int i = 0; i < 8; ++i) {
    std::vector<double> x{key.fork(i).gaussian(0), key.fork(i).gaussian(1)};
    data.y.push_back(net_predict(net, w0, x));  // exact labels of the start point
    data.x.push_back(std::move(x));
  }
  SGDConfig config;
  config.alpha0 = 0.1;
  config.batch_size = 4;
  config.iterations = 50;
  config.log_every = 10;
  const RunLog log = sgd_run(net, data, config, w0);
  CHECK(log.final_w == w0);
  for (const RunRow& r : log.rows) {
    CHECK(r.loss == 0.0);
    CHECK(r.dnorm == 0.0);
  }
}

TEST_CASE("convex least-squares run reaches the normal-equations optimum") {
  const NetSpec net = one_layer_identity();
  const Dataset data = linear_regression_data(32, 77);
  const std::vector<double> wstar = solve_normal_equations(data);
  const double jstar = least_squares_loss(data, wstar);

  SGDConfig config;
  config.alpha0 = 0.1;
  config.gamma = 0.75;
  config.batch_size = 8;
  config.iterations = 5000;
  config.seed = 3;
  config.log_every = 500;
  const std::vector<double> w0 = default_init(net.weight_count(), 3);
  const RunLog log = sgd_run(net, data, config, w0);

  CHECK(!log.diverged);
  CHECK(log.rows.back().loss - jstar <= 1e-2);
  CHECK(log.rows.back().loss >= jstar - 1e-12);  // cannot beat the optimum

  // descent sanity: last-decile mean below first-decile mean
  const std::size_t decile = std::max<std::size_t>(1, log.rows.size() / 10);
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < decile; ++i) {
    first += log.rows[i].loss;
    last += log.rows[log.rows.size() - 1 - i].loss;
  }
  CHECK(last < first);
}

TEST_CASE("criticality at the least-squares optimum is tiny") {
  const NetSpec net = one_layer_identity();
  const Dataset data = linear_regression_data(32, 78);
  const std::vector<double> wstar = solve_normal_equations(data);
  CHECK(criticality_at(net, data, wstar, 8, 5) <= 1e-6);
}

TEST_CASE("criticality at a smooth point equals the full gradient norm") {
  const NetSpec net = one_layer_identity();
  const Dataset data = linear_regression_data(16, 79);
  const std::vector<double> w{0.3, -0.8};
  const auto programs = build_sample_programs(net, data);
  std::vector<int> all(programs.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  const GradVector grad = batch_field(programs, all, w, SelectionPolicy{}, 0);
  const double crit = criticality_from_programs(programs, w, 8, 42);
  CHECK(crit == doctest::Approx(norm2(grad)).epsilon(1e-10));
}

TEST_CASE("two abs samples at the kink average to a critical field") {
  const EvalProgram abs_prog = testprog::parsed(testprog::kAbs);
  const std::vector<EvalProgram> programs{abs_prog, abs_prog};
  const double crit = criticality_from_programs(programs, std::vector<double>{0.0}, 16, 1);
  CHECK(crit <= 1e-9);
}

TEST_CASE("nonconvex teacher-student run drives the criticality measure down") {
  const NetSpec net = relu_teacher_net();
  const Dataset data = teacher_data(net, 32, 1234);
  SGDConfig config;
  config.alpha0 = 0.05;
  config.gamma = 0.6;
  config.batch_size = 8;
  config.iterations = 2000;
  config.seed = 5;
  config.log_every = 200;
  config.critic_samples = 8;
  const std::vector<double> w0 = default_init(net.weight_count(), 6);
  const RunLog log = sgd_run(net, data, config, w0);
  CHECK(!log.diverged);
  REQUIRE(log.rows.front().crit.has_value());
  double running_min = *log.rows.front().crit;
  for (const RunRow& r : log.rows)
    if (r.crit) running_min = std::min(running_min, *r.crit);
  CHECK(running_min <= *log.rows.front().crit / 10.0);
}

TEST_CASE("full-batch average is bitwise the documented per-sample sum") {
  const NetSpec net = one_layer_identity();
  const Dataset data = linear_regression_data(8, 80);
  const auto programs = build_sample_programs(net, data);
  const std::vector<double> w{0.2, 0.4};
  const SelectionPolicy policy{SelectMode::RandomVertex, 11};
  std::vector<int> all{0, 1, 2, 3, 4, 5, 6, 7};
  const GradVector got = batch_field(programs, all, w, policy, 99);

  GradVector manual(w.size(), 0.0);
  for (int idx : all) {
    const GradVector g = reverse_diff(forward_eval(programs[idx], w, policy, combine(99, idx)));
    for (std::size_t j = 0; j < manual.size(); ++j) manual[j] += g[j];
  }
  for (double& v : manual) v *= 1.0 / 8.0;
  CHECK(got == manual);
}

TEST_CASE("identical configuration reproduces the run log bitwise") {
  const NetSpec net = relu_teacher_net();
  const Dataset data = teacher_data(net, 16, 2);
  SGDConfig config;
  config.alpha0 = 0.05;
  config.batch_size = 4;
  config.iterations = 100;
  config.seed = 9;
  config.policy = {SelectMode::RandomVertex, 9};
  config.log_every = 10;
  const std::vector<double> w0 = default_init(net.weight_count(), 1);
  const RunLog a = sgd_run(net, data, config, w0);
  const RunLog b = sgd_run(net, data, config, w0);
  CHECK(a.final_w == b.final_w);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].loss == b.rows[i].loss);
    CHECK(a.rows[i].dnorm == b.rows[i].dnorm);
    CHECK(a.rows[i].batch == b.rows[i].batch);
  }
}

TEST_CASE("run log shape") {
  const NetSpec net = one_layer_identity();
  const Dataset data = linear_regression_data(8, 81);
  SGDConfig config;
  config.batch_size = 2;
  config.log_every = 10;
  const std::vector<double> w0{0.1, 0.1};

  SUBCASE("zero iterations log only the initial row") {
    config.iterations = 0;
    const RunLog log = sgd_run(net, data, config, w0);
    REQUIRE(log.rows.size() == 1);
    CHECK(log.rows[0].k == 0);
    CHECK(log.final_w == w0);
  }
  SUBCASE("row count is iterations / log_every plus the final row") {
    config.iterations = 100;
    const RunLog log = sgd_run(net, data, config, w0);
    CHECK(log.rows.size() == 11);  // k = 0,10,...,90 and the final row
    CHECK(log.rows.back().k == 100);
  }
}

TEST_CASE("divergence guard aborts with a partial log") {
  const NetSpec net = one_layer_identity();
  const Dataset data = linear_regression_data(8, 82);
  SGDConfig config;
  config.alpha0 = 1e4;  // wildly unstable on purpose
  config.gamma = 0.01;
  config.batch_size = 8;
  config.iterations = 1000;
  config.log_every = 1;
  config.guard = 1e6;
  const RunLog log = sgd_run(net, data, config, std::vector<double>{0.0, 0.0});
  CHECK(log.diverged);
  CHECK(!log.note.empty());
  CHECK(log.rows.size() >= 2);
  CHECK(log.rows.size() < 1000);
}

TEST_CASE("step size schedule: alpha_k log(k+2) decays to zero monotonically in the tail") {
  for (double gamma : {0.6, 0.75, 1.0}) {
    const double alpha0 = 0.1;
    const long k0 = static_cast<long>(std::ceil(std::exp(1.0 / gamma)));
    double prev = std::numeric_limits<double>::infinity();
    for (long k = k0; k < 2000000; k = k * 3 / 2 + 1) {
      const double val = alpha0 / std::pow(1.0 + k, gamma) * std::log(k + 2.0);
      CHECK(val < prev);
      prev = val;
    }
    CHECK(prev < 1e-3);
  }
}

TEST_CASE("train config and dataset files parse") {
  std::istringstream cfg(
      "# sample config\n"
      "widths=2,8,1\n"
      "activations=relu,id\n"
      "loss=square\n"
      "alpha0=0.05\n"
      "gamma=0.6\n"
      "batch_size=8\n"
      "iterations=2000\n"
      "seed=5\n"
      "policy=random-vertex\n"
      "log_every=200\n"
      "critic_samples=8\n");
  const TrainSetup setup = parse_train_config(cfg);
  CHECK(setup.net.widths == std::vector<int>{2, 8, 1});
  CHECK(setup.net.activations[0].op == PrimOp::Relu);
  CHECK(setup.config.alpha0 == 0.05);
  CHECK(setup.config.policy.mode == SelectMode::RandomVertex);
  CHECK(setup.config.policy.seed == 5);  // defaults to seed

  std::istringstream bad("widths=2,1\nactivations=relu\nloss=banana\n");
  CHECK_THROWS_AS(parse_train_config(bad), ParseError);

  std::istringstream csv("x1,x2,y\n0.5,-1,2\n1.5,0.25,-0.75\n");
  const Dataset data = load_dataset_csv(csv, 2, 1);
  REQUIRE(data.size() == 2);
  CHECK(data.x[1] == std::vector<double>{1.5, 0.25});
  CHECK(data.y[1] == std::vector<double>{-0.75});

  std::ostringstream round;
  write_dataset_csv(round, data);
  std::istringstream back(round.str());
  const Dataset again = load_dataset_csv(back, 2, 1);
  CHECK(again.x == data.x);
  CHECK(again.y == data.y);
}

TEST_CASE("runlog csv has the documented schema") {
  RunLog log;
  log.rows.push_back({0, 1.5, 0.1, {2, 5}, 0.25, std::nullopt});
  log.rows.push_back({10, 0.5, 0.05, {}, 0.0, 0.125});
  std::ostringstream out;
  write_runlog_csv(out, log);
  CHECK(out.str() ==
        "k,loss,alpha,batch,dnorm,crit\n"
        "0,1.5,0.1,2;5,0.25,\n"
        "10,0.5,0.05,,0,0.125\n");
}
