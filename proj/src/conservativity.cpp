#include "conserva/conservativity.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "conserva/errors.hpp"
#include "conserva/rng.hpp"
#include "conserva/vec.hpp"

namespace conserva {

namespace {

constexpr std::uint64_t kAeStream = 0xae0b5a17u;
constexpr std::uint64_t kFieldStream = 0xf1e7d005u;

void check_dims(const EvalProgram& prog, std::span<const double> x, const char* what) {
  if (x.size() != prog.input_count)
    throw std::invalid_argument(std::string(what) + ": expected " +
                                std::to_string(prog.input_count) + " coordinates");
}

}  // namespace

SegmentReport segment_check(const EvalProgram& program, std::span<const double> v,
                            std::span<const double> w, int n, const SelectionPolicy& policy,
                            std::optional<std::uint64_t> jitter_seed) {
  if (n < 2) throw std::invalid_argument("segment_check: n >= 2");
  check_dims(program, v, "segment_check v");
  check_dims(program, w, "segment_check w");
  const std::size_t p = v.size();

  const double lhs = eval_value(program, w) - eval_value(program, v);

  // canonical orientation: enumerate points from the lexicographically
  // smaller endpoint so both traversal directions see identical floats
  const bool flip = lex_less(w, v);
  std::span<const double> a = flip ? w : v;
  std::span<const double> b = flip ? v : w;

  double off = 0.5;
  if (jitter_seed)
    off = RngKey(*jitter_seed).fork(hash_point(a)).fork(hash_point(b)).u01();

  std::vector<double> dir(p);
  for (std::size_t j = 0; j < p; ++j) dir[j] = w[j] - v[j];

  std::vector<double> pt(p);
  KahanSum acc;
  for (int i = 1; i <= n; ++i) {
    const int idx = flip ? (n + 1 - i) : i;  // i-th point along v -> w
    const double t = (idx - 1 + off) / n;
    for (std::size_t j = 0; j < p; ++j) pt[j] = a[j] + t * (b[j] - a[j]);
    const Trace tr = forward_eval(program, pt, policy, hash_point(pt));
    acc.add(dot(reverse_diff(tr), dir));
  }
  const double rhs = acc.value() / n;
  return {lhs, rhs, std::fabs(lhs - rhs), n};
}

double loop_circulation(const EvalProgram& program,
                        const std::vector<std::vector<double>>& waypoints, int n_per_edge,
                        const SelectionPolicy& policy) {
  if (waypoints.size() < 3) throw std::invalid_argument("loop needs at least 3 waypoints");
  if (waypoints.front() != waypoints.back())
    throw std::invalid_argument("loop is not closed (first waypoint != last)");
  KahanSum total;
  for (std::size_t e = 0; e + 1 < waypoints.size(); ++e)
    total.add(segment_check(program, waypoints[e], waypoints[e + 1], n_per_edge, policy).rhs);
  return total.value();
}

DirectionalReport directional_check(const EvalProgram& program, std::span<const double> x,
                                    std::span<const double> u, double h,
                                    const SelectionPolicy& policy) {
  if (h <= 0) throw std::invalid_argument("directional_check: h > 0");
  check_dims(program, x, "directional_check x");
  const std::size_t p = x.size();

  std::vector<double> xp(p), xm(p);
  for (std::size_t j = 0; j < p; ++j) {
    xp[j] = x[j] + h * u[j];
    xm[j] = x[j] - h * u[j];
  }
  const double fd = (eval_value(program, xp) - eval_value(program, xm)) / (2.0 * h);

  const Trace tr = forward_eval(program, x, policy, hash_point(x));
  const double ad = dot(reverse_diff(tr), u);
  return {fd, ad, std::fabs(fd - ad), tr.any_set_valued()};
}

std::vector<double> sample_point(const SamplerSpec& sampler, int dim, int index) {
  const RngKey key = RngKey(sampler.seed).fork(index);
  std::vector<double> x(dim);
  for (int j = 0; j < dim; ++j)
    x[j] = sampler.kind == SamplerSpec::Kind::Gaussian
               ? sampler.a + sampler.b * key.gaussian(j)
               : key.uniform(sampler.a, sampler.b, j);
  return x;
}

double ae_gradient_check(const EvalProgram& program, const SamplerSpec& sampler, int n,
                         const SelectionPolicy& policy, double rel_tol, double h_scale) {
  if (n < 1) throw std::invalid_argument("ae_gradient_check: n >= 1");
  const int p = static_cast<int>(program.input_count);
  int passed = 0;
  for (int s = 0; s < n; ++s) {
    std::vector<double> x = sample_point(sampler, p, s);
    bool ok = true;
    try {
      const GradVector ad =
          reverse_diff(forward_eval(program, x, policy, combine(kAeStream, s)));
      for (int j = 0; j < p && ok; ++j) {
        const double h = h_scale * (1.0 + std::fabs(x[j]));
        const double orig = x[j];
        x[j] = orig + h;
        const double fp = eval_value(program, x);
        x[j] = orig - h;
        const double fm = eval_value(program, x);
        x[j] = orig;
        const double fd = (fp - fm) / (2.0 * h);
        if (std::fabs(fd - ad[j]) > rel_tol * (1.0 + std::fabs(ad[j]))) ok = false;
      }
    } catch (const DomainError&) {
      ok = false;
    }
    if (ok) ++passed;
  }
  return static_cast<double>(passed) / n;
}

MinNormResult min_norm_point(const std::vector<GradVector>& vectors, double tol, int max_iter) {
  if (vectors.empty()) throw std::invalid_argument("min_norm_point: need at least one vector");
  if (tol <= 0) throw std::invalid_argument("min_norm_point: tol > 0");
  const std::size_t m = vectors.size();
  const std::size_t d = vectors[0].size();
  for (const auto& v : vectors)
    if (v.size() != d) throw std::invalid_argument("min_norm_point: inconsistent dimensions");

  std::size_t start = 0;
  double best = dot(vectors[0], vectors[0]);
  for (std::size_t i = 1; i < m; ++i) {
    const double n2 = dot(vectors[i], vectors[i]);
    if (n2 < best) {
      best = n2;
      start = i;
    }
  }

  std::vector<double> lambda(m, 0.0);
  lambda[start] = 1.0;
  std::vector<double> g = vectors[start];

  MinNormResult res;
  int it = 0;
  for (; it < max_iter; ++it) {
    const double gg = dot(g, g);
    if (gg == 0.0) {
      res.converged = true;
      res.gap = 0.0;
      break;
    }
    std::size_t s = 0, aw = 0;
    double lo = dot(vectors[0], g);
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m; ++i) {
      const double c = i == 0 ? lo : dot(vectors[i], g);
      if (c < lo) {
        lo = c;
        s = i;
      }
      if (lambda[i] > 0.0 && c > hi) {
        hi = c;
        aw = i;
      }
    }
    res.gap = 2.0 * (gg - lo);
    if (res.gap <= tol) {
      res.converged = true;
      break;
    }

    const bool toward = (gg - lo) >= (hi - gg) || lambda[aw] >= 1.0;
    if (toward) {
      double den = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double u = vectors[s][j] - g[j];
        den += u * u;
      }
      if (den == 0.0) break;
      const double gamma = std::min(1.0, (gg - lo) / den);
      if (gamma <= 0.0) break;
      for (std::size_t i = 0; i < m; ++i) lambda[i] *= 1.0 - gamma;
      lambda[s] += gamma;
      for (std::size_t j = 0; j < d; ++j) g[j] += gamma * (vectors[s][j] - g[j]);
    } else {
      double den = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double u = g[j] - vectors[aw][j];
        den += u * u;
      }
      if (den == 0.0) break;
      const double gamma_max = lambda[aw] / (1.0 - lambda[aw]);
      const double gamma = std::min(gamma_max, (hi - gg) / den);
      if (gamma <= 0.0) break;
      for (std::size_t i = 0; i < m; ++i) lambda[i] *= 1.0 + gamma;
      lambda[aw] -= gamma;
      if (lambda[aw] < 1e-18) lambda[aw] = 0.0;
      for (std::size_t j = 0; j < d; ++j) g[j] += gamma * (g[j] - vectors[aw][j]);
    }
  }
  res.iterations = it;

  double sum = 0.0;
  for (double& l : lambda) {
    if (l < 0.0) l = 0.0;
    sum += l;
  }
  if (sum <= 0.0) {
    lambda.assign(m, 0.0);
    lambda[start] = 1.0;
    sum = 1.0;
  }
  for (double& l : lambda) l /= sum;

  res.point.assign(d, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    if (lambda[i] == 0.0) continue;
    for (std::size_t j = 0; j < d; ++j) res.point[j] += lambda[i] * vectors[i][j];
  }
  res.norm = norm2(res.point);
  res.weights = std::move(lambda);
  return res;
}

MinNormResult field_min_norm(const EvalProgram& program, std::span<const double> x,
                             std::size_t cap, int n_samples, std::uint64_t seed) {
  std::vector<GradVector> vecs;
  try {
    vecs = enumerate_field_vertices(program, x, cap);
  } catch (const EnumerationOverflow&) {
    vecs = sample_field(program, x, SelectionPolicy{SelectMode::RandomVertex, seed}, n_samples,
                        kFieldStream);
  }
  return min_norm_point(vecs, 1e-14, 20000);
}

bool fermat_check(const EvalProgram& program, std::span<const double> x, int n_samples,
                  double tol, std::size_t cap, std::uint64_t seed) {
  if (tol <= 0) throw std::invalid_argument("fermat_check: tol > 0");
  return field_min_norm(program, x, cap, n_samples, seed).norm <= tol;
}

}  // namespace conserva
