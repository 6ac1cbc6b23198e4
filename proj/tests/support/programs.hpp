#pragma once

#include <cmath>
#include <string>

#include "conserva/autodiff.hpp"
#include "conserva/program.hpp"

namespace testprog {

// f(x) = (x1*x2 + tan x2) * (|x1| + x1*x2*x3), decomposed into binary nodes
inline const std::string kProdTanAbs = R"(conserva-program v1
input x1
input x2
input x3
node x4 = mul x1 x2
node x5 = tan x2
node x6 = abs x1
node x7 = mul x3 x4
node x8 = add x4 x5
node x9 = add x6 x7
node x10 = mul x8 x9
output x10
)";

inline const std::string kAbs = R"(conserva-program v1
input x1
node x2 = abs x1
output x2
)";

// f(x, y) = |max(x, y)|
inline const std::string kAbsOfMax = R"(conserva-program v1
input x1
input x2
node x3 = max2 x1 x2
node x4 = abs x3
output x4
)";

inline const std::string kQuadratic = R"(conserva-program v1
input x1
node x2 = sq x1
output x2
)";

// f(x) = 3 x + 1
inline const std::string kAffine = R"(conserva-program v1
input x1
const c3 3
const c1 1
node x4 = mul c3 x1
node x5 = add x4 c1
output x5
)";

// f(x, y) = |x| + |y|
inline const std::string kAbsSum = R"(conserva-program v1
input x1
input x2
node x3 = abs x1
node x4 = abs x2
node x5 = add x3 x4
output x5
)";

inline const std::string kProduct = R"(conserva-program v1
input x1
input x2
node x3 = mul x1 x2
output x3
)";

inline conserva::EvalProgram parsed(const std::string& text) {
  return conserva::parse_program(text);
}

// analytic gradient of kProdTanAbs away from x1 == 0
inline conserva::GradVector prod_tan_abs_grad(double x1, double x2, double x3) {
  const double u = x1 * x2 + std::tan(x2);
  const double v = std::fabs(x1) + x1 * x2 * x3;
  const double sign1 = x1 > 0 ? 1.0 : -1.0;
  const double sec2 = 1.0 + std::tan(x2) * std::tan(x2);
  return {x2 * v + u * (sign1 + x2 * x3), (x1 + sec2) * v + u * (x1 * x3), u * (x1 * x2)};
}

}  // namespace testprog
