#include "conserva/train.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "conserva/errors.hpp"
#include "conserva/numio.hpp"
#include "conserva/rng.hpp"
#include "conserva/vec.hpp"

namespace conserva {

namespace {

constexpr std::uint64_t kBatchStream = 0xba7c41u;
constexpr std::uint64_t kGradStream = 0x96ad11u;
constexpr std::uint64_t kCritStream = 0xc617e3u;
constexpr std::uint64_t kInitStream = 0x1217bdu;

}  // namespace

int NetSpec::weight_count() const {
  int p = 0;
  for (std::size_t j = 1; j < widths.size(); ++j) p += (widths[j - 1] + 1) * widths[j];
  return p;
}

void NetSpec::check() const {
  if (widths.size() < 2) throw ConfigError("network needs at least one layer (two widths)");
  for (int w : widths)
    if (w < 1) throw ConfigError("layer widths must be >= 1");
  if (activations.size() != widths.size() - 1)
    throw ConfigError("expected " + std::to_string(widths.size() - 1) + " activations, got " +
                      std::to_string(activations.size()));
  for (const Primitive& a : activations)
    if (a.arity != 1) throw ConfigError("activation '" + a.name + "' is not unary");
  if (loss == Loss::Bce) {
    if (widths.back() != 1) throw ConfigError("bce loss requires a single output");
    if (activations.back().op != PrimOp::Sigmoid)
      throw ConfigError("bce loss requires a final sigmoid activation");
  }
}

EvalProgram build_loss_program(const NetSpec& net, std::span<const double> x,
                               std::span<const double> y) {
  net.check();
  if (static_cast<int>(x.size()) != net.widths.front() ||
      static_cast<int>(y.size()) != net.widths.back())
    throw ConfigError("sample dimensions do not match the network widths");

  ProgramBuilder b;
  const int L = net.layer_count();

  // weights first: layer-major, row-major weight matrix, then bias
  std::vector<std::vector<std::vector<NodeId>>> weight(L);
  std::vector<std::vector<NodeId>> bias(L);
  for (int j = 0; j < L; ++j) {
    const int rows = net.widths[j + 1];
    const int cols = net.widths[j];
    weight[j].assign(rows, std::vector<NodeId>(cols));
    bias[j].resize(rows);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        weight[j][r][c] =
            b.input("w" + std::to_string(j + 1) + "_" + std::to_string(r + 1) + "_" +
                    std::to_string(c + 1));
    for (int r = 0; r < rows; ++r)
      bias[j][r] = b.input("b" + std::to_string(j + 1) + "_" + std::to_string(r + 1));
  }

  std::vector<NodeId> act(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    act[i] = b.constant(x[i], "xc" + std::to_string(i + 1));

  for (int j = 0; j < L; ++j) {
    const int rows = net.widths[j + 1];
    const int cols = net.widths[j];
    std::vector<NodeId> next(rows);
    for (int r = 0; r < rows; ++r) {
      NodeId acc = b.apply("mul", {weight[j][r][0], act[0]});
      for (int c = 1; c < cols; ++c)
        acc = b.apply("add", {acc, b.apply("mul", {weight[j][r][c], act[c]})});
      acc = b.apply("add", {acc, bias[j][r]});
      next[r] = b.apply(net.activations[j], {acc});
    }
    act = std::move(next);
  }

  NodeId out;
  if (net.loss == NetSpec::Loss::Square) {
    // (1/2) sum_i (a_i - y_i)^2
    NodeId total = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const NodeId yc = b.constant(y[i], "yc" + std::to_string(i + 1));
      const NodeId sq = b.apply("sq", {b.apply("sub", {act[i], yc})});
      total = i == 0 ? sq : b.apply("add", {total, sq});
    }
    out = b.apply("mul", {b.constant(0.5, "half"), total});
  } else {
    // -( y log a + (1 - y) log(1 - a) )
    const NodeId yc = b.constant(y[0], "yc1");
    const NodeId one = b.constant(1.0, "one");
    const NodeId pos = b.apply("mul", {yc, b.apply("log", {act[0]})});
    const NodeId neg = b.apply("mul", {b.apply("sub", {one, yc}),
                                       b.apply("log", {b.apply("sub", {one, act[0]})})});
    out = b.apply("neg", {b.apply("add", {pos, neg})});
  }
  return b.finish(out);
}

std::vector<double> net_predict(const NetSpec& net, std::span<const double> w,
                                std::span<const double> x) {
  net.check();
  if (static_cast<int>(w.size()) != net.weight_count())
    throw ConfigError("weight vector has wrong length");
  const int L = net.layer_count();
  std::vector<double> act(x.begin(), x.end());
  std::size_t pos = 0;
  for (int j = 0; j < L; ++j) {
    const int rows = net.widths[j + 1];
    const int cols = net.widths[j];
    const double* W = w.data() + pos;
    const double* bias = W + static_cast<std::size_t>(rows) * cols;
    std::vector<double> next(rows);
    for (int r = 0; r < rows; ++r) {
      // same accumulation order as the loss program's add chain
      double acc = W[r * cols] * act[0];
      for (int c = 1; c < cols; ++c) acc = acc + W[r * cols + c] * act[c];
      acc = acc + bias[r];
      next[r] = eval_prim(net.activations[j], std::span<const double>(&acc, 1));
    }
    act = std::move(next);
    pos += static_cast<std::size_t>(rows) * cols + rows;
  }
  return act;
}

GradVector batch_field(const std::vector<EvalProgram>& programs, std::span<const int> batch,
                       std::span<const double> w, const SelectionPolicy& policy,
                       std::uint64_t draw) {
  if (batch.empty()) throw std::invalid_argument("batch_field: empty batch");
  GradVector acc(w.size(), 0.0);
  for (int idx : batch) {
    const GradVector g =
        reverse_diff(forward_eval(programs[idx], w, policy, combine(draw, idx)));
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += g[j];
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (double& v : acc) v *= inv;
  return acc;
}

double dataset_loss(const std::vector<EvalProgram>& programs, std::span<const double> w) {
  double total = 0.0;
  for (const EvalProgram& prog : programs) total += eval_value(prog, w);
  return total / static_cast<double>(programs.size());
}

std::vector<EvalProgram> build_sample_programs(const NetSpec& net, const Dataset& data) {
  std::vector<EvalProgram> programs;
  programs.reserve(data.size());
  for (int i = 0; i < data.size(); ++i)
    programs.push_back(build_loss_program(net, data.x[i], data.y[i]));
  return programs;
}

namespace {

// batch_size distinct indices, uniform without replacement, ascending
std::vector<int> draw_batch(int n, int batch_size, std::uint64_t seed, long k) {
  std::vector<int> pool(n);
  for (int i = 0; i < n; ++i) pool[i] = i;
  const RngKey key = RngKey(seed).fork(kBatchStream).fork(static_cast<std::uint64_t>(k));
  for (int i = 0; i < batch_size; ++i) {
    const int j = i + static_cast<int>(key.below(n - i, i));
    std::swap(pool[i], pool[j]);
  }
  std::vector<int> batch(pool.begin(), pool.begin() + batch_size);
  std::sort(batch.begin(), batch.end());
  return batch;
}

}  // namespace

RunLog sgd_run(const NetSpec& net, const Dataset& data, const SGDConfig& config,
               std::span<const double> w0) {
  net.check();
  const int n = data.size();
  if (n < 1) throw ConfigError("empty dataset");
  if (config.batch_size < 1 || config.batch_size > n)
    throw ConfigError("batch_size must be in 1..n");
  if (config.alpha0 <= 0) throw ConfigError("alpha0 must be positive");
  if (config.gamma <= 0 || config.gamma > 1) throw ConfigError("gamma must be in (0, 1]");
  if (config.log_every < 1) throw ConfigError("log_every must be >= 1");
  const int p = net.weight_count();
  if (static_cast<int>(w0.size()) != p) throw ConfigError("w0 has wrong length");

  const std::vector<EvalProgram> programs = build_sample_programs(net, data);
  std::vector<double> w(w0.begin(), w0.end());
  RunLog log;

  auto crit = [&](std::span<const double> at) -> std::optional<double> {
    if (config.critic_samples <= 0) return std::nullopt;
    return criticality_from_programs(programs, at, config.critic_samples, config.policy.seed);
  };

  for (long k = 0; k < config.iterations; ++k) {
    const double alpha = config.alpha0 / std::pow(1.0 + static_cast<double>(k), config.gamma);
    const std::vector<int> batch = draw_batch(n, config.batch_size, config.seed, k);
    const GradVector d =
        batch_field(programs, batch, w, config.policy,
                    combine(kGradStream, static_cast<std::uint64_t>(k)));

    if (k % config.log_every == 0)
      log.rows.push_back({k, dataset_loss(programs, w), alpha, batch, norm2(d), crit(w)});

    for (int j = 0; j < p; ++j) w[j] -= alpha * d[j];

    if (norm_inf(w) > config.guard) {
      log.diverged = true;
      log.note = "divergence guard tripped at iteration " + std::to_string(k) +
                 " (|w|_inf > " + format_double(config.guard) + ")";
      break;
    }
  }

  log.rows.push_back({config.iterations, dataset_loss(programs, w),
                      config.alpha0 / std::pow(1.0 + static_cast<double>(config.iterations),
                                               config.gamma),
                      {}, 0.0, crit(w)});
  log.final_w = std::move(w);
  return log;
}

double criticality_from_programs(const std::vector<EvalProgram>& programs,
                                 std::span<const double> w, int n_samples,
                                 std::uint64_t seed) {
  if (n_samples < 1) throw std::invalid_argument("criticality: n_samples >= 1");
  std::vector<int> all(programs.size());
  for (std::size_t i = 0; i < programs.size(); ++i) all[i] = static_cast<int>(i);
  const SelectionPolicy policy{SelectMode::RandomVertex, seed};
  std::vector<GradVector> draws;
  draws.reserve(n_samples);
  for (int s = 0; s < n_samples; ++s)
    draws.push_back(batch_field(programs, all, w, policy,
                                combine(kCritStream, static_cast<std::uint64_t>(s))));
  return min_norm_point(draws, 1e-14, 20000).norm;
}

double criticality_at(const NetSpec& net, const Dataset& data, std::span<const double> w,
                      int n_samples, std::uint64_t seed) {
  return criticality_from_programs(build_sample_programs(net, data), w, n_samples, seed);
}

std::vector<double> default_init(int p, std::uint64_t seed) {
  const RngKey key = RngKey(seed).fork(kInitStream);
  std::vector<double> w(p);
  for (int j = 0; j < p; ++j) w[j] = key.uniform(-1.0, 1.0, j);
  return w;
}

TrainSetup parse_train_config(std::istream& in) {
  TrainSetup setup;
  bool policy_seed_set = false;
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string_view line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ParseError(lineno, "expected key=value, got '" + std::string(line) + "'");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));

    auto as_double = [&](std::string_view v) {
      const auto d = parse_double(v);
      if (!d) throw ParseError(lineno, "bad number '" + std::string(v) + "'");
      return *d;
    };

    if (key == "widths") {
      setup.net.widths.clear();
      for (auto part : split(value, ','))
        setup.net.widths.push_back(static_cast<int>(as_double(trim(part))));
    } else if (key == "activations") {
      setup.net.activations.clear();
      for (auto part : split(value, ',')) {
        try {
          setup.net.activations.push_back(registry_lookup_spec(trim(part)));
        } catch (const ConfigError& e) {
          throw ParseError(lineno, e.what());
        }
      }
    } else if (key == "loss") {
      if (value == "square")
        setup.net.loss = NetSpec::Loss::Square;
      else if (value == "bce")
        setup.net.loss = NetSpec::Loss::Bce;
      else
        throw ParseError(lineno, "loss must be 'square' or 'bce'");
    } else if (key == "alpha0") {
      setup.config.alpha0 = as_double(value);
    } else if (key == "gamma") {
      setup.config.gamma = as_double(value);
    } else if (key == "batch_size") {
      setup.config.batch_size = static_cast<int>(as_double(value));
    } else if (key == "iterations") {
      setup.config.iterations = static_cast<long>(as_double(value));
    } else if (key == "seed") {
      setup.config.seed = static_cast<std::uint64_t>(as_double(value));
      if (!policy_seed_set) setup.config.policy.seed = setup.config.seed;
    } else if (key == "policy") {
      const auto mode = parse_select_mode(value);
      if (!mode) throw ParseError(lineno, "unknown policy '" + std::string(value) + "'");
      setup.config.policy.mode = *mode;
    } else if (key == "policy_seed") {
      setup.config.policy.seed = static_cast<std::uint64_t>(as_double(value));
      policy_seed_set = true;
    } else if (key == "log_every") {
      setup.config.log_every = static_cast<long>(as_double(value));
    } else if (key == "critic_samples") {
      setup.config.critic_samples = static_cast<int>(as_double(value));
    } else if (key == "guard") {
      setup.config.guard = as_double(value);
    } else {
      throw ParseError(lineno, "unknown key '" + std::string(key) + "'");
    }
  }
  setup.net.check();
  return setup;
}

Dataset load_dataset_csv(std::istream& in, int x_dim, int y_dim) {
  Dataset data;
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string_view line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split(line, ',');
    if (lineno == 1 && !cells.empty() && !parse_double(trim(cells[0]))) continue;  // header
    if (static_cast<int>(cells.size()) != x_dim + y_dim)
      throw ParseError(lineno, "expected " + std::to_string(x_dim + y_dim) +
                                   " columns, got " + std::to_string(cells.size()));
    std::vector<double> row(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto v = parse_double(trim(cells[i]));
      if (!v) throw ParseError(lineno, "bad decimal '" + std::string(cells[i]) + "'");
      row[i] = *v;
    }
    data.x.emplace_back(row.begin(), row.begin() + x_dim);
    data.y.emplace_back(row.begin() + x_dim, row.end());
  }
  return data;
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  for (int i = 0; i < data.size(); ++i) {
    bool first = true;
    for (double v : data.x[i]) {
      out << (first ? "" : ",") << format_double(v);
      first = false;
    }
    for (double v : data.y[i]) out << "," << format_double(v);
    out << "\n";
  }
}

void write_runlog_csv(std::ostream& out, const RunLog& log) {
  out << "k,loss,alpha,batch,dnorm,crit\n";
  for (const RunRow& r : log.rows) {
    out << r.k << "," << format_double(r.loss) << "," << format_double(r.alpha) << ",";
    for (std::size_t i = 0; i < r.batch.size(); ++i) out << (i ? ";" : "") << r.batch[i];
    out << "," << format_double(r.dnorm) << ",";
    if (r.crit) out << format_double(*r.crit);
    out << "\n";
  }
}

}  // namespace conserva
