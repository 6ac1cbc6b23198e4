// Command-line surface: evaluation, differentiation, conservativity checks,
// SGD training, the ReLU(0) probability experiment, and descent flows.
// Exit codes: 0 success / within tolerance, 1 tolerance violation,
// 2 usage error, 3 numeric or domain error.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "conserva/autodiff.hpp"
#include "conserva/conservativity.hpp"
#include "conserva/errors.hpp"
#include "conserva/experiments.hpp"
#include "conserva/numio.hpp"
#include "conserva/train.hpp"

namespace {

using namespace conserva;

constexpr int kExitOk = 0;
constexpr int kExitTolerance = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

EvalProgram load_program(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open program file '" + path + "'");
  EvalProgram prog = parse_program(in);
  const auto diags = validate(prog);
  if (!diags.empty()) {
    std::ostringstream msg;
    msg << "invalid program '" << path << "':";
    for (const auto& d : diags) msg << "\n  " << d.message;
    throw UsageError(msg.str());
  }
  return prog;
}

std::vector<double> parse_vector(const std::string& text) {
  std::vector<double> out;
  for (auto part : split(text, ',')) {
    const auto v = parse_double(trim(part));
    if (!v) throw UsageError("bad decimal '" + std::string(part) + "' in '" + text + "'");
    out.push_back(*v);
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (double v : parse_vector(text)) out.push_back(static_cast<int>(v));
  return out;
}

SelectionPolicy parse_policy(const std::string& name, std::uint64_t seed) {
  const auto mode = parse_select_mode(name);
  if (!mode) throw UsageError("unknown policy '" + name + "'");
  return {*mode, seed};
}

std::ostream& open_out(std::ofstream& file, const std::string& path) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  if (!file) throw UsageError("cannot open output file '" + path + "'");
  return file;
}

struct EvalArgs {
  std::string program;
  std::string at;
};

int cmd_eval(const EvalArgs& a) {
  const EvalProgram prog = load_program(a.program);
  const auto x = parse_vector(a.at);
  std::cout << format_sig17(eval_value(prog, x)) << "\n";
  return kExitOk;
}

struct GradArgs {
  std::string program;
  std::string at;
  std::string policy = "canonical";
  std::uint64_t seed = 0;
  std::string mode = "reverse";
};

int cmd_grad(const GradArgs& a) {
  const EvalProgram prog = load_program(a.program);
  const auto x = parse_vector(a.at);
  const SelectionPolicy policy = parse_policy(a.policy, a.seed);
  const Trace tr = forward_eval(prog, x, policy);
  GradVector g;
  if (a.mode == "forward")
    g = forward_diff(tr);
  else if (a.mode == "reverse")
    g = reverse_diff(tr);
  else
    throw UsageError("--mode must be 'forward' or 'reverse'");
  for (std::size_t j = 0; j < g.size(); ++j) std::cout << (j ? " " : "") << format_sig17(g[j]);
  std::cout << "\n";
  return kExitOk;
}

struct CheckArgs {
  std::string program;
  std::string mode;
  std::string from, to, at;
  std::vector<std::string> points;
  int n = 4096;
  double tol = -1.0;  // mode-specific default
  std::string policy = "canonical";
  std::uint64_t seed = 0;
  std::uint64_t jitter_seed = 0;
  bool jitter = false;
  int samples = 1000;
  std::string sampler = "gaussian";
  double mean = 0.0, sd = 1.0, lo = -1.0, hi = 1.0;
  double rel_tol = 1e-4;
  double fd_h = 1e-5;
  double min_rate = 0.99;
  std::size_t cap = 4096;
  int fermat_samples = 256;
};

int cmd_check(const CheckArgs& a) {
  const EvalProgram prog = load_program(a.program);
  const SelectionPolicy policy = parse_policy(a.policy, a.seed);

  if (a.mode == "segment") {
    if (a.from.empty() || a.to.empty()) throw UsageError("segment needs --from and --to");
    const double tol = a.tol > 0 ? a.tol : 5e-3;
    const auto report = segment_check(
        prog, parse_vector(a.from), parse_vector(a.to), a.n, policy,
        a.jitter ? std::optional<std::uint64_t>(a.jitter_seed) : std::nullopt);
    std::cout << "mode,lhs,rhs,abs_err,n\n"
              << "segment," << format_double(report.lhs) << "," << format_double(report.rhs)
              << "," << format_double(report.abs_err) << "," << report.n_points << "\n";
    return report.abs_err <= tol * (1.0 + std::fabs(report.lhs)) ? kExitOk : kExitTolerance;
  }
  if (a.mode == "loop") {
    if (a.points.size() < 3) throw UsageError("loop needs at least 3 --point flags");
    std::vector<std::vector<double>> waypoints;
    for (const auto& s : a.points) waypoints.push_back(parse_vector(s));
    const double tol = a.tol > 0 ? a.tol : 1e-2;
    const double circ = loop_circulation(prog, waypoints, a.n, policy);
    std::cout << "mode,circulation,n_per_edge,edges\n"
              << "loop," << format_double(circ) << "," << a.n << "," << waypoints.size() - 1
              << "\n";
    return std::fabs(circ) <= tol ? kExitOk : kExitTolerance;
  }
  if (a.mode == "ae") {
    SamplerSpec sampler;
    sampler.seed = a.seed;
    if (a.sampler == "gaussian") {
      sampler.kind = SamplerSpec::Kind::Gaussian;
      sampler.a = a.mean;
      sampler.b = a.sd;
    } else if (a.sampler == "uniform") {
      sampler.kind = SamplerSpec::Kind::Uniform;
      sampler.a = a.lo;
      sampler.b = a.hi;
    } else {
      throw UsageError("--sampler must be 'gaussian' or 'uniform'");
    }
    const double rate = ae_gradient_check(prog, sampler, a.samples, policy, a.rel_tol, a.fd_h);
    std::cout << "mode,samples,pass_rate\n"
              << "ae," << a.samples << "," << format_double(rate) << "\n";
    return rate >= a.min_rate ? kExitOk : kExitTolerance;
  }
  if (a.mode == "fermat") {
    if (a.at.empty()) throw UsageError("fermat needs --at");
    const double tol = a.tol > 0 ? a.tol : 1e-8;
    const auto x = parse_vector(a.at);
    const MinNormResult res = field_min_norm(prog, x, a.cap, a.fermat_samples, a.seed);
    const bool critical = res.norm <= tol;
    std::cout << "mode,norm,tol,critical\n"
              << "fermat," << format_double(res.norm) << "," << format_double(tol) << ","
              << (critical ? "true" : "false") << "\n";
    return critical ? kExitOk : kExitTolerance;
  }
  throw UsageError("--mode must be segment, loop, ae, or fermat");
}

struct TrainArgs {
  std::string config;
  std::string dataset;
  std::string out = "runlog.csv";
  std::string w0_file;
};

int cmd_train(const TrainArgs& a) {
  std::ifstream cfg_in(a.config);
  if (!cfg_in) throw UsageError("cannot open config file '" + a.config + "'");
  TrainSetup setup = parse_train_config(cfg_in);

  std::ifstream data_in(a.dataset);
  if (!data_in) throw UsageError("cannot open dataset file '" + a.dataset + "'");
  const Dataset data =
      load_dataset_csv(data_in, setup.net.widths.front(), setup.net.widths.back());
  if (data.size() == 0) throw UsageError("dataset '" + a.dataset + "' is empty");

  std::vector<double> w0;
  if (!a.w0_file.empty()) {
    std::ifstream w0_in(a.w0_file);
    if (!w0_in) throw UsageError("cannot open w0 file '" + a.w0_file + "'");
    double v;
    while (w0_in >> v) w0.push_back(v);
    if (static_cast<int>(w0.size()) != setup.net.weight_count())
      throw UsageError("w0 file has " + std::to_string(w0.size()) + " values, expected " +
                       std::to_string(setup.net.weight_count()));
  } else {
    w0 = default_init(setup.net.weight_count(), setup.config.seed);
  }

  const RunLog log = sgd_run(setup.net, data, setup.config, w0);

  std::ofstream file;
  write_runlog_csv(open_out(file, a.out), log);

  std::cout << "final_loss=" << format_double(log.rows.back().loss) << "\n";
  if (log.rows.back().crit)
    std::cout << "final_criticality=" << format_double(*log.rows.back().crit) << "\n";
  if (log.diverged) {
    std::cerr << log.note << "\n";
    return kExitNumeric;
  }
  return kExitOk;
}

struct Relu0Args {
  std::string widths = "1,2,3,4,5,6,7,8,9,10";
  std::string depths = "1,2,3,4,5,6,7,8,9,10,11,12,13,14,15,16,17,18,19,20,21,22,23,24,25,26,27,28,29,30";
  long trials = 10000;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_relu0(const Relu0Args& a) {
  Relu0Config config;
  config.widths = parse_int_list(a.widths);
  config.depths = parse_int_list(a.depths);
  config.trials = a.trials;
  config.seed = a.seed;
  const auto rows = relu0_experiment(config);
  std::ofstream file;
  std::ostream& out = open_out(file, a.out);
  out << "width,depth,trials,hits,phat,lo95,hi95\n";
  for (const auto& r : rows)
    out << r.width << "," << r.depth << "," << r.trials << "," << r.hits << ","
        << format_double(r.phat) << "," << format_double(r.lo95) << ","
        << format_double(r.hi95) << "\n";
  return kExitOk;
}

struct FlowArgs {
  std::string program;
  std::string at;
  long steps = 1000;
  double alpha0 = 0.1;
  double gamma = 0.6;
  std::string policy;  // empty = min-norm direction
  std::uint64_t seed = 0;
  std::size_t cap = 1024;
  int samples = 64;
  std::string out;
};

int cmd_flow(const FlowArgs& a) {
  const EvalProgram prog = load_program(a.program);
  const auto x0 = parse_vector(a.at);
  FlowConfig config;
  config.steps = a.steps;
  config.alpha0 = a.alpha0;
  config.gamma = a.gamma;
  config.cap = a.cap;
  config.samples = a.samples;
  config.seed = a.seed;
  if (!a.policy.empty()) config.policy = parse_policy(a.policy, a.seed);

  const FlowResult res = descent_flow(prog, x0, config);

  std::ofstream file;
  std::ostream& out = open_out(file, a.out);
  out << "k";
  for (std::size_t j = 0; j < x0.size(); ++j) out << ",x" << j + 1;
  out << ",f,step_len,cum_len\n";
  for (const auto& r : res.rows) {
    out << r.k;
    for (double v : r.x) out << "," << format_double(v);
    out << "," << format_double(r.f) << "," << format_double(r.step_len) << ","
        << format_double(r.cum_len) << "\n";
  }
  std::cerr << "cum_len=" << format_double(res.cum_len)
            << " terminal_criticality=" << format_double(res.terminal_criticality) << "\n";
  return res.diverged ? kExitNumeric : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conserva: nonsmooth automatic differentiation with conservative-field oracles"};
  app.require_subcommand(1);

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a program at a point");
  eval_cmd->add_option("program", eval_args.program, "program file")->required();
  eval_cmd->add_option("--at", eval_args.at, "comma-separated input values")->required();

  GradArgs grad_args;
  auto* grad_cmd = app.add_subcommand("grad", "differentiate a program at a point");
  grad_cmd->add_option("program", grad_args.program, "program file")->required();
  grad_cmd->add_option("--at", grad_args.at, "comma-separated input values")->required();
  grad_cmd->add_option("--policy", grad_args.policy,
                       "canonical|low|high|random-vertex|random-convex");
  grad_cmd->add_option("--seed", grad_args.seed, "selection seed");
  grad_cmd->add_option("--mode", grad_args.mode, "forward|reverse (default reverse)");

  CheckArgs check_args;
  auto* check_cmd = app.add_subcommand(
      "check",
      "conservativity checks; CSV columns by mode: segment -> mode,lhs,rhs,abs_err,n; "
      "loop -> mode,circulation,n_per_edge,edges; ae -> mode,samples,pass_rate; "
      "fermat -> mode,norm,tol,critical");
  check_cmd->add_option("program", check_args.program, "program file")->required();
  check_cmd->add_option("--mode", check_args.mode, "segment|loop|ae|fermat")->required();
  check_cmd->add_option("--from", check_args.from, "segment start point");
  check_cmd->add_option("--to", check_args.to, "segment end point");
  check_cmd->add_option("--at", check_args.at, "fermat evaluation point");
  check_cmd->add_option("--point", check_args.points,
                        "loop waypoint (repeat; first must equal last)");
  check_cmd->add_option("-n,--nodes", check_args.n, "quadrature nodes per edge (default 4096)");
  check_cmd->add_option("--tol", check_args.tol,
                        "tolerance (defaults: segment 5e-3 rel, loop 1e-2, fermat 1e-8)");
  check_cmd->add_option("--policy", check_args.policy, "selection policy");
  check_cmd->add_option("--seed", check_args.seed, "selection / sampler seed");
  check_cmd->add_flag("--jitter", check_args.jitter, "jitter quadrature offsets");
  check_cmd->add_option("--jitter-seed", check_args.jitter_seed, "jitter seed");
  check_cmd->add_option("--samples", check_args.samples, "ae sample count (default 1000)");
  check_cmd->add_option("--sampler", check_args.sampler, "ae sampler: gaussian|uniform");
  check_cmd->add_option("--mean", check_args.mean, "gaussian mean");
  check_cmd->add_option("--sd", check_args.sd, "gaussian standard deviation");
  check_cmd->add_option("--lo", check_args.lo, "uniform lower bound");
  check_cmd->add_option("--hi", check_args.hi, "uniform upper bound");
  check_cmd->add_option("--rel-tol", check_args.rel_tol, "ae coordinate tolerance (1e-4)");
  check_cmd->add_option("--fd-h", check_args.fd_h, "ae finite-difference scale (1e-5)");
  check_cmd->add_option("--min-rate", check_args.min_rate, "ae required pass rate (0.99)");
  check_cmd->add_option("--cap", check_args.cap, "fermat enumeration cap (4096)");
  check_cmd->add_option("--fermat-samples", check_args.fermat_samples,
                        "fermat sampling fallback draw count (256)");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "mini-batch SGD on a network loss");
  train_cmd->add_option("config", train_args.config, "key=value training config")->required();
  train_cmd->add_option("dataset", train_args.dataset, "CSV dataset (x...,y... columns)")
      ->required();
  train_cmd->add_option("--out", train_args.out, "run log CSV path (default runlog.csv)");
  train_cmd->add_option("--w0", train_args.w0_file, "initial weights file (default: uniform)");

  Relu0Args relu0_args;
  auto* relu0_cmd = app.add_subcommand("relu0", "probability of applying ReLU to 0");
  relu0_cmd->add_option("--widths", relu0_args.widths, "layer widths (default 1..10)");
  relu0_cmd->add_option("--depths", relu0_args.depths, "layer counts (default 1..30)");
  relu0_cmd->add_option("--trials", relu0_args.trials, "trials per cell (default 10000)");
  relu0_cmd->add_option("--seed", relu0_args.seed, "sampling seed");
  relu0_cmd->add_option("--out", relu0_args.out, "CSV output path (default stdout)");

  FlowArgs flow_args;
  auto* flow_cmd = app.add_subcommand("flow", "explicit Euler descent flow");
  flow_cmd->add_option("program", flow_args.program, "program file")->required();
  flow_cmd->add_option("--at", flow_args.at, "starting point")->required();
  flow_cmd->add_option("--steps", flow_args.steps, "step count (default 1000)");
  flow_cmd->add_option("--alpha0", flow_args.alpha0, "initial step size (default 0.1)");
  flow_cmd->add_option("--gamma", flow_args.gamma, "step decay exponent (default 0.6)");
  flow_cmd->add_option("--policy", flow_args.policy,
                       "use a selection policy instead of the min-norm direction");
  flow_cmd->add_option("--seed", flow_args.seed, "seed");
  flow_cmd->add_option("--cap", flow_args.cap, "field enumeration cap (1024)");
  flow_cmd->add_option("--samples", flow_args.samples, "sampling fallback draws (64)");
  flow_cmd->add_option("--out", flow_args.out, "CSV output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*eval_cmd) return cmd_eval(eval_args);
    if (*grad_cmd) return cmd_grad(grad_args);
    if (*check_cmd) return cmd_check(check_args);
    if (*train_cmd) return cmd_train(train_args);
    if (*relu0_cmd) return cmd_relu0(relu0_args);
    if (*flow_cmd) return cmd_flow(flow_args);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const conserva::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitUsage;
}
