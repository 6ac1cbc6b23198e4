#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "conserva/errors.hpp"
#include "conserva/program.hpp"
#include "support/programs.hpp"
#include "support/random_programs.hpp"

using namespace conserva;

TEST_CASE("minimal product program parses") {
  const EvalProgram p = parse_program(
      "conserva-program v1\ninput x1\ninput x2\nnode x3 = mul x1 x2\noutput x3\n");
  CHECK(p.input_count == 2);
  CHECK(p.node_count() == 3);
  CHECK(p.output == 3);
  CHECK(p.node(3).prim.op == PrimOp::Mul);
  CHECK(p.node(3).parents == std::vector<NodeId>{1, 2});
  CHECK(validate(p).empty());
}

TEST_CASE("product-tan-abs program parses with the expected parents map") {
  const EvalProgram p = testprog::parsed(testprog::kProdTanAbs);
  CHECK(p.input_count == 3);
  CHECK(p.node_count() == 10);
  CHECK(p.output == 10);
  CHECK(p.node(4).parents == std::vector<NodeId>{1, 2});
  CHECK(p.node(5).parents == std::vector<NodeId>{2});
  CHECK(p.node(6).parents == std::vector<NodeId>{1});
  CHECK(p.node(7).parents == std::vector<NodeId>{3, 4});
  CHECK(validate(p).empty());
}

TEST_CASE("parse errors carry line numbers") {
  SUBCASE("forward reference / self reference") {
    try {
      parse_program("conserva-program v1\ninput x1\nnode x2 = relu x2\noutput x2\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
      CHECK(std::string(e.what()).find("forward reference") != std::string::npos);
    }
  }
  SUBCASE("unknown primitive") {
    CHECK_THROWS_AS(
        parse_program("conserva-program v1\ninput x1\nnode x2 = frobnicate x1\n"),
        ParseError);
  }
  SUBCASE("arity mismatch") {
    CHECK_THROWS_AS(parse_program("conserva-program v1\ninput x1\nnode x2 = mul x1\n"),
                    ParseError);
  }
  SUBCASE("repeated parent") {
    CHECK_THROWS_AS(
        parse_program("conserva-program v1\ninput x1\nnode x2 = mul x1 x1\n"),
        ParseError);
  }
  SUBCASE("missing header") {
    CHECK_THROWS_AS(parse_program("input x1\n"), ParseError);
  }
  SUBCASE("input after node") {
    CHECK_THROWS_AS(parse_program("conserva-program v1\ninput x1\nnode x2 = sq x1\ninput x3\n"),
                    ParseError);
  }
  SUBCASE("redefinition") {
    CHECK_THROWS_AS(parse_program("conserva-program v1\ninput x1\ninput x1\n"), ParseError);
  }
}

TEST_CASE("validate reports broken invariants") {
  EvalProgram p = testprog::parsed(testprog::kProduct);

  SUBCASE("valid program yields no diagnostics") { CHECK(validate(p).empty()); }

  SUBCASE("repeated parent") {
    p.nodes[2].parents = {1, 1};
    const auto diags = validate(p);
    REQUIRE(!diags.empty());
    bool found = false;
    for (const auto& d : diags)
      if (d.message.find("repeated parent") != std::string::npos) found = true;
    CHECK(found);
  }

  SUBCASE("dangling output") {
    p.output = 4;
    const auto diags = validate(p);
    REQUIRE(!diags.empty());
    CHECK(diags[0].message.find("dangling output") != std::string::npos);
  }

  SUBCASE("forward reference") {
    p.nodes[2].parents = {1, 3};
    bool found = false;
    for (const auto& d : validate(p))
      if (d.message.find("forward reference") != std::string::npos) found = true;
    CHECK(found);
  }
}

TEST_CASE("serialize emits const before first use and round-trips") {
  const EvalProgram p = testprog::parsed(testprog::kAffine);
  const std::string text = serialize(p);
  CHECK(text.find("const c3 3") != std::string::npos);
  CHECK(text.find("const c3 3") < text.find("node x4"));
  CHECK(structurally_equal(parse_program(text), p));
}

TEST_CASE("parse of serialize is the identity on random programs") {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const EvalProgram p = testprog::random_program(seed);
    CHECK(validate(p).empty());
    const EvalProgram q = parse_program(serialize(p));
    if (!structurally_equal(p, q)) {
      CAPTURE(seed);
      FAIL_CHECK("round-trip mismatch");
      break;
    }
  }
}

TEST_CASE("iterating random programs in id order never reads undefined values") {
  // parents strictly below the node id make this hold by construction
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const EvalProgram p = testprog::random_program(seed + 5000);
    bool ok = true;
    for (const NodeDef& nd : p.nodes)
      for (NodeId par : nd.parents)
        if (par >= nd.id) ok = false;
    if (!ok) {
      CAPTURE(seed);
      FAIL_CHECK("parent at or above its node");
      break;
    }
  }
}

TEST_CASE("lrelu parameter survives the text format") {
  const EvalProgram p =
      parse_program("conserva-program v1\ninput x1\nnode x2 = lrelu:0.01 x1\noutput x2\n");
  CHECK(p.node(2).prim.op == PrimOp::Lrelu);
  CHECK(p.node(2).prim.param == 0.01);
  CHECK(serialize(p).find("lrelu:0.01") != std::string::npos);
}

TEST_CASE("default output is the last node") {
  const EvalProgram p = parse_program("conserva-program v1\ninput x1\nnode x2 = sq x1\n");
  CHECK(p.output == 2);
}
