#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "conserva/conservativity.hpp"

namespace conserva {

// Feedforward network shape: widths p0..pL, one scalar activation primitive
// per layer, and the loss applied to the final layer's output.
struct NetSpec {
  enum class Loss { Square, Bce };

  std::vector<int> widths;             // p0..pL, all >= 1
  std::vector<Primitive> activations;  // size L, arity-1 primitives
  Loss loss = Loss::Square;

  int layer_count() const { return static_cast<int>(widths.size()) - 1; }
  // flattened weight count: sum over layers of (p_{j-1} + 1) * p_j
  int weight_count() const;
  void check() const;  // throws ConfigError on a malformed spec
};

struct Dataset {
  std::vector<std::vector<double>> x;
  std::vector<std::vector<double>> y;
  int size() const { return static_cast<int>(x.size()); }
};

struct SGDConfig {
  double alpha0 = 0.1;   // step size alpha_k = alpha0 / (1 + k)^gamma
  double gamma = 0.75;   // in (0, 1]
  int batch_size = 1;
  long iterations = 0;
  std::uint64_t seed = 0;        // batch sampling
  SelectionPolicy policy;        // derivative selections
  long log_every = 1;
  int critic_samples = 0;        // 0 disables criticality logging
  double guard = 1e6;            // divergence guard on |w|_inf
};

struct RunRow {
  long k = 0;
  double loss = 0.0;
  double alpha = 0.0;
  std::vector<int> batch;
  double dnorm = 0.0;
  std::optional<double> crit;
};

struct RunLog {
  std::vector<RunRow> rows;
  std::vector<double> final_w;
  bool diverged = false;
  std::string note;
};

// Per-sample loss program: the p network weights are the program inputs
// (layer-major, row-major weights then bias per layer); the sample (x, y)
// enters as constant nodes. Square loss is (1/2) |pred - y|^2; binary cross
// entropy enters negated, -(y log a + (1-y) log(1-a)), so it is minimized.
EvalProgram build_loss_program(const NetSpec& net, std::span<const double> x,
                               std::span<const double> y);

// Network forward pass with the same floating-point evaluation order as the
// loss program (used to generate teacher data bit-exactly).
std::vector<double> net_predict(const NetSpec& net, std::span<const double> w,
                                std::span<const double> x);

// Average of per-sample reverse-mode fields over the given sample indices,
// accumulated in the order given; sample i draws with counter combine(draw, i).
GradVector batch_field(const std::vector<EvalProgram>& programs, std::span<const int> batch,
                       std::span<const double> w, const SelectionPolicy& policy,
                       std::uint64_t draw);

double dataset_loss(const std::vector<EvalProgram>& programs, std::span<const double> w);

std::vector<EvalProgram> build_sample_programs(const NetSpec& net, const Dataset& data);

// Mini-batch SGD: w_{k+1} = w_k - alpha_k d_k with d_k the batch-averaged
// backpropagation field element. Batches are drawn uniformly without
// replacement and logged in ascending index order.
RunLog sgd_run(const NetSpec& net, const Dataset& data, const SGDConfig& config,
               std::span<const double> w0);

// Min-norm point over n_samples RandomVertex draws of the full-batch field.
double criticality_at(const NetSpec& net, const Dataset& data, std::span<const double> w,
                      int n_samples, std::uint64_t seed = 0);
double criticality_from_programs(const std::vector<EvalProgram>& programs,
                                 std::span<const double> w, int n_samples,
                                 std::uint64_t seed = 0);

// Default initialization: i.i.d. uniform [-1, 1].
std::vector<double> default_init(int p, std::uint64_t seed);

// key=value training configuration (widths, activations, loss, alpha0, gamma,
// batch_size, iterations, seed, policy, policy_seed, log_every,
// critic_samples, guard).
struct TrainSetup {
  NetSpec net;
  SGDConfig config;
};
TrainSetup parse_train_config(std::istream& in);

// CSV with x...,y... columns (p0 + pL decimals per row); an optional header
// row is skipped.
Dataset load_dataset_csv(std::istream& in, int x_dim, int y_dim);
void write_dataset_csv(std::ostream& out, const Dataset& data);

// RunLog CSV: k,loss,alpha,batch,dnorm,crit with batch ;-joined and crit
// empty on rows without a criticality measurement.
void write_runlog_csv(std::ostream& out, const RunLog& log);

}  // namespace conserva
