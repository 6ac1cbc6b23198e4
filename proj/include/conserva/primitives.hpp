#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace conserva {

enum class PrimOp {
  Id, Neg, Add, Sub, Mul, Div, Sq,
  Exp, Log, Tan, Tanh, Sigmoid, Softplus,
  Abs, Relu, Lrelu, Max2, Min2,
};

struct Primitive {
  PrimOp op = PrimOp::Id;
  std::string name;             // registry spelling, without the parameter
  int arity = 1;
  std::optional<double> param;  // lrelu slope

  // "lrelu:0.01" style spelling for serialization
  std::string spec() const;
};

// Set-valued derivative of one primitive at one point, represented by its
// extreme points. hull=true means the set is conv(vertices); hull=false means
// it is exactly the finite vertex list. At differentiable points vertices is a
// singleton equal to the classical gradient.
struct DerivSet {
  std::vector<std::vector<double>> vertices;
  bool hull = true;
  std::vector<double> canonical;

  int arity() const { return vertices.empty() ? 0 : static_cast<int>(vertices[0].size()); }
  bool set_valued() const { return vertices.size() > 1; }

  // Membership predicate. Supports finite sets of any size and hulls of up to
  // two vertices, which covers every set the registry produces.
  bool contains(std::span<const double> v, double tol = 1e-12) const;

  static DerivSet singleton(std::vector<double> grad);
};

enum class SelectMode { Canonical, Low, High, RandomVertex, RandomConvex };

struct SelectionPolicy {
  SelectMode mode = SelectMode::Canonical;
  std::uint64_t seed = 0;
};

double eval_prim(const Primitive& prim, std::span<const double> args);
DerivSet deriv_set(const Primitive& prim, std::span<const double> args);

// Pure in (set, policy, counter); random modes draw from the policy seed and
// the caller-supplied counter, so concurrent draws need disjoint counters.
std::vector<double> select(const DerivSet& set, const SelectionPolicy& policy,
                           std::uint64_t counter);

// Throws ConfigError on unknown names or bad parameters (e.g. lrelu slope <= 0).
Primitive registry_lookup(const std::string& name, std::optional<double> param = std::nullopt);
// Accepts the "name" or "name:param" spelling used by the text format.
Primitive registry_lookup_spec(std::string_view spec);

const std::vector<std::string>& registry_names();

std::optional<SelectMode> parse_select_mode(std::string_view name);
std::string select_mode_name(SelectMode mode);

}  // namespace conserva
