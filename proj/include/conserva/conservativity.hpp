#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "conserva/autodiff.hpp"

namespace conserva {

// f(w) - f(v) against the composite midpoint quadrature of the field
// circulation along the segment. Quadrature points are enumerated from the
// lexicographically smaller endpoint, so the reversed segment evaluates the
// same points (and, through point-hashed draw counters, the same selections)
// and its quadrature is the exact negation.
struct SegmentReport {
  double lhs = 0.0;      // f(w) - f(v)
  double rhs = 0.0;      // quadrature of <field, w - v>
  double abs_err = 0.0;  // |lhs - rhs|
  int n_points = 0;
};

SegmentReport segment_check(const EvalProgram& program, std::span<const double> v,
                            std::span<const double> w, int n, const SelectionPolicy& policy,
                            std::optional<std::uint64_t> jitter_seed = std::nullopt);

// Sum of per-edge segment quadratures along a closed polyline (first waypoint
// equals the last). Tends to zero as n grows for conservative oracles.
double loop_circulation(const EvalProgram& program,
                        const std::vector<std::vector<double>>& waypoints, int n_per_edge,
                        const SelectionPolicy& policy);

struct DirectionalReport {
  double fd = 0.0;   // central finite difference along u
  double ad = 0.0;   // <reverse_diff(x), u>
  double err = 0.0;  // |fd - ad|
  bool near_kink = false;  // some node's DerivSet at x was set-valued
};

DirectionalReport directional_check(const EvalProgram& program, std::span<const double> x,
                                    std::span<const double> u, double h,
                                    const SelectionPolicy& policy);

struct SamplerSpec {
  enum class Kind { Gaussian, Uniform } kind = Kind::Gaussian;
  double a = 0.0;  // mean (gaussian) or lower bound (uniform)
  double b = 1.0;  // standard deviation (gaussian) or upper bound (uniform)
  std::uint64_t seed = 0;
};

std::vector<double> sample_point(const SamplerSpec& sampler, int dim, int index);

// Fraction of sampled points where the central finite-difference gradient
// matches reverse_diff coordinate-wise within rel_tol, using per-coordinate
// steps h = h_scale * (1 + |x_j|).
double ae_gradient_check(const EvalProgram& program, const SamplerSpec& sampler, int n,
                         const SelectionPolicy& policy, double rel_tol = 1e-4,
                         double h_scale = 1e-5);

struct MinNormResult {
  std::vector<double> point;    // argmin over the convex hull
  double norm = 0.0;
  std::vector<double> weights;  // simplex coefficients, sum to 1
  int iterations = 0;
  bool converged = false;
  double gap = 0.0;             // last Frank-Wolfe duality gap
};

// Minimum-norm point in conv(vectors) by Frank-Wolfe with away steps and
// exact line search; stops when the duality gap for |sum w_i v_i|^2 is <= tol.
MinNormResult min_norm_point(const std::vector<GradVector>& vectors, double tol = 1e-12,
                             int max_iter = 10000);

// Min-norm point of the autodiff field at x: enumerated vertices when the
// combination count fits under cap, otherwise n_samples RandomVertex draws.
MinNormResult field_min_norm(const EvalProgram& program, std::span<const double> x,
                             std::size_t cap = 4096, int n_samples = 256,
                             std::uint64_t seed = 0);

// True iff the min-norm point of the field at x has norm <= tol.
bool fermat_check(const EvalProgram& program, std::span<const double> x, int n_samples,
                  double tol, std::size_t cap = 4096, std::uint64_t seed = 0);

}  // namespace conserva
