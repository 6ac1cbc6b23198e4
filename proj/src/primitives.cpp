#include "conserva/primitives.hpp"

#include <algorithm>
#include <cmath>

#include "conserva/errors.hpp"
#include "conserva/numio.hpp"
#include "conserva/rng.hpp"
#include "conserva/vec.hpp"

namespace conserva {

namespace {

struct RegistryEntry {
  PrimOp op;
  const char* name;
  int arity;
  bool needs_param;
};

constexpr RegistryEntry kRegistry[] = {
    {PrimOp::Id, "id", 1, false},
    {PrimOp::Neg, "neg", 1, false},
    {PrimOp::Add, "add", 2, false},
    {PrimOp::Sub, "sub", 2, false},
    {PrimOp::Mul, "mul", 2, false},
    {PrimOp::Div, "div", 2, false},
    {PrimOp::Sq, "sq", 1, false},
    {PrimOp::Exp, "exp", 1, false},
    {PrimOp::Log, "log", 1, false},
    {PrimOp::Tan, "tan", 1, false},
    {PrimOp::Tanh, "tanh", 1, false},
    {PrimOp::Sigmoid, "sigmoid", 1, false},
    {PrimOp::Softplus, "softplus", 1, false},
    {PrimOp::Abs, "abs", 1, false},
    {PrimOp::Relu, "relu", 1, false},
    {PrimOp::Lrelu, "lrelu", 1, true},
    {PrimOp::Max2, "max2", 2, false},
    {PrimOp::Min2, "min2", 2, false},
};

double stable_sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

double stable_softplus(double a) {
  if (a > 0.0) return a + std::log1p(std::exp(-a));
  return std::log1p(std::exp(a));
}

}  // namespace

std::string Primitive::spec() const {
  if (param) return name + ":" + format_double(*param);
  return name;
}

DerivSet DerivSet::singleton(std::vector<double> grad) {
  DerivSet s;
  s.canonical = grad;
  s.vertices.push_back(std::move(grad));
  s.hull = true;
  return s;
}

bool DerivSet::contains(std::span<const double> v, double tol) const {
  auto dist2_to = [&](std::span<const double> w) {
    double d = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      const double e = v[j] - w[j];
      d += e * e;
    }
    return d;
  };
  if (!hull || vertices.size() == 1) {
    for (const auto& w : vertices)
      if (dist2_to(w) <= tol * tol) return true;
    return false;
  }
  if (vertices.size() == 2) {
    // distance to the segment [a, b]
    const auto& a = vertices[0];
    const auto& b = vertices[1];
    double ab2 = 0.0, t = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      const double d = b[j] - a[j];
      ab2 += d * d;
      t += (v[j] - a[j]) * d;
    }
    t = ab2 > 0.0 ? std::clamp(t / ab2, 0.0, 1.0) : 0.0;
    double dist2 = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      const double e = v[j] - (a[j] + t * (b[j] - a[j]));
      dist2 += e * e;
    }
    return dist2 <= tol * tol;
  }
  throw std::logic_error("DerivSet::contains: hulls with more than two vertices are not supported");
}

double eval_prim(const Primitive& prim, std::span<const double> args) {
  if (static_cast<int>(args.size()) != prim.arity)
    throw DomainError(prim.name, "expected " + std::to_string(prim.arity) + " arguments, got " +
                                     std::to_string(args.size()));
  const double a = args[0];
  const double b = prim.arity > 1 ? args[1] : 0.0;
  switch (prim.op) {
    case PrimOp::Id: return a;
    case PrimOp::Neg: return -a;
    case PrimOp::Add: return a + b;
    case PrimOp::Sub: return a - b;
    case PrimOp::Mul: return a * b;
    case PrimOp::Div:
      if (b == 0.0) throw DomainError(prim.name, "division by zero");
      return a / b;
    case PrimOp::Sq: return a * a;
    case PrimOp::Exp: return std::exp(a);
    case PrimOp::Log:
      if (a <= 0.0) throw DomainError(prim.name, "log of nonpositive input " + format_double(a));
      return std::log(a);
    case PrimOp::Tan: return std::tan(a);
    case PrimOp::Tanh: return std::tanh(a);
    case PrimOp::Sigmoid: return stable_sigmoid(a);
    case PrimOp::Softplus: return stable_softplus(a);
    case PrimOp::Abs: return std::fabs(a);
    case PrimOp::Relu: return a > 0.0 ? a : 0.0;
    case PrimOp::Lrelu: return a > 0.0 ? a : *prim.param * a;
    case PrimOp::Max2: return a < b ? b : a;
    case PrimOp::Min2: return b < a ? b : a;
  }
  throw std::logic_error("eval_prim: unhandled op");
}

DerivSet deriv_set(const Primitive& prim, std::span<const double> args) {
  if (static_cast<int>(args.size()) != prim.arity)
    throw DomainError(prim.name, "expected " + std::to_string(prim.arity) + " arguments, got " +
                                     std::to_string(args.size()));
  const double a = args[0];
  const double b = prim.arity > 1 ? args[1] : 0.0;

  auto kink2 = [](std::vector<double> lo, std::vector<double> hi, std::vector<double> canon) {
    DerivSet s;
    s.vertices.push_back(std::move(lo));
    s.vertices.push_back(std::move(hi));
    s.hull = true;
    s.canonical = std::move(canon);
    return s;
  };

  switch (prim.op) {
    case PrimOp::Id: return DerivSet::singleton({1.0});
    case PrimOp::Neg: return DerivSet::singleton({-1.0});
    case PrimOp::Add: return DerivSet::singleton({1.0, 1.0});
    case PrimOp::Sub: return DerivSet::singleton({1.0, -1.0});
    case PrimOp::Mul: return DerivSet::singleton({b, a});
    case PrimOp::Div:
      if (b == 0.0) throw DomainError(prim.name, "division by zero");
      return DerivSet::singleton({1.0 / b, -a / (b * b)});
    case PrimOp::Sq: return DerivSet::singleton({2.0 * a});
    case PrimOp::Exp: return DerivSet::singleton({std::exp(a)});
    case PrimOp::Log:
      if (a <= 0.0) throw DomainError(prim.name, "log of nonpositive input " + format_double(a));
      return DerivSet::singleton({1.0 / a});
    case PrimOp::Tan: {
      const double t = std::tan(a);
      return DerivSet::singleton({1.0 + t * t});
    }
    case PrimOp::Tanh: {
      const double t = std::tanh(a);
      return DerivSet::singleton({1.0 - t * t});
    }
    case PrimOp::Sigmoid: {
      const double s = stable_sigmoid(a);
      return DerivSet::singleton({s * (1.0 - s)});
    }
    case PrimOp::Softplus: return DerivSet::singleton({stable_sigmoid(a)});
    case PrimOp::Abs:
      // set-valued branch fires iff the argument is bitwise +-0.0
      if (a == 0.0) return kink2({-1.0}, {1.0}, {0.0});
      return DerivSet::singleton({a > 0.0 ? 1.0 : -1.0});
    case PrimOp::Relu:
      if (a == 0.0) return kink2({0.0}, {1.0}, {0.0});
      return DerivSet::singleton({a > 0.0 ? 1.0 : 0.0});
    case PrimOp::Lrelu: {
      const double alpha = *prim.param;
      if (a == 0.0) return kink2({alpha}, {1.0}, {alpha});
      return DerivSet::singleton({a > 0.0 ? 1.0 : alpha});
    }
    case PrimOp::Max2:
      if (a == b) return kink2({1.0, 0.0}, {0.0, 1.0}, {1.0, 0.0});
      return DerivSet::singleton(a > b ? std::vector<double>{1.0, 0.0}
                                       : std::vector<double>{0.0, 1.0});
    case PrimOp::Min2:
      if (a == b) return kink2({1.0, 0.0}, {0.0, 1.0}, {1.0, 0.0});
      return DerivSet::singleton(a < b ? std::vector<double>{1.0, 0.0}
                                       : std::vector<double>{0.0, 1.0});
  }
  throw std::logic_error("deriv_set: unhandled op");
}

std::vector<double> select(const DerivSet& set, const SelectionPolicy& policy,
                           std::uint64_t counter) {
  if (set.vertices.empty()) throw std::invalid_argument("select: empty DerivSet");
  if (set.vertices.size() == 1) return set.vertices[0];

  switch (policy.mode) {
    case SelectMode::Canonical:
      return set.canonical;
    case SelectMode::Low:
      return *std::min_element(set.vertices.begin(), set.vertices.end(),
                               [](const auto& x, const auto& y) { return lex_less(x, y); });
    case SelectMode::High:
      return *std::max_element(set.vertices.begin(), set.vertices.end(),
                               [](const auto& x, const auto& y) { return lex_less(x, y); });
    case SelectMode::RandomVertex: {
      const RngKey key = RngKey(policy.seed).fork(counter);
      return set.vertices[key.below(set.vertices.size())];
    }
    case SelectMode::RandomConvex: {
      const RngKey key = RngKey(policy.seed).fork(counter);
      if (!set.hull) return set.vertices[key.below(set.vertices.size())];
      // Dirichlet(1,...,1) weights: uniform over the simplex
      const std::size_t m = set.vertices.size();
      std::vector<double> w(m);
      double total = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        w[i] = -std::log1p(-key.u01(i));
        total += w[i];
      }
      std::vector<double> out(set.vertices[0].size(), 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        const double wi = w[i] / total;
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += wi * set.vertices[i][j];
      }
      return out;
    }
  }
  throw std::logic_error("select: unhandled mode");
}

Primitive registry_lookup(const std::string& name, std::optional<double> param) {
  for (const auto& e : kRegistry) {
    if (name != e.name) continue;
    if (e.needs_param) {
      if (!param) throw ConfigError("primitive '" + name + "' requires a parameter");
      if (e.op == PrimOp::Lrelu && *param <= 0.0)
        throw ConfigError("lrelu slope must be positive, got " + format_double(*param));
    } else if (param) {
      throw ConfigError("primitive '" + name + "' takes no parameter");
    }
    Primitive p;
    p.op = e.op;
    p.name = e.name;
    p.arity = e.arity;
    p.param = param;
    return p;
  }
  throw ConfigError("unknown primitive '" + name + "'");
}

Primitive registry_lookup_spec(std::string_view spec) {
  const auto colon = spec.find(':');
  if (colon == std::string_view::npos) return registry_lookup(std::string(spec));
  const auto value = parse_double(spec.substr(colon + 1));
  if (!value)
    throw ConfigError("bad primitive parameter in '" + std::string(spec) + "'");
  return registry_lookup(std::string(spec.substr(0, colon)), *value);
}

const std::vector<std::string>& registry_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& e : kRegistry) v.push_back(e.name);
    return v;
  }();
  return names;
}

std::optional<SelectMode> parse_select_mode(std::string_view name) {
  if (name == "canonical") return SelectMode::Canonical;
  if (name == "low") return SelectMode::Low;
  if (name == "high") return SelectMode::High;
  if (name == "random-vertex" || name == "random_vertex") return SelectMode::RandomVertex;
  if (name == "random-convex" || name == "random_convex") return SelectMode::RandomConvex;
  return std::nullopt;
}

std::string select_mode_name(SelectMode mode) {
  switch (mode) {
    case SelectMode::Canonical: return "canonical";
    case SelectMode::Low: return "low";
    case SelectMode::High: return "high";
    case SelectMode::RandomVertex: return "random-vertex";
    case SelectMode::RandomConvex: return "random-convex";
  }
  return "?";
}

}  // namespace conserva
