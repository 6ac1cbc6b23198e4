#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "conserva/primitives.hpp"

namespace conserva {

// 1-based node index; ids 1..p are inputs, p+1..q constants or applications.
using NodeId = std::uint32_t;

struct NodeDef {
  enum class Kind { Input, Const, Apply };

  NodeId id = 0;
  std::string name;
  Kind kind = Kind::Input;
  double value = 0.0;            // Const
  Primitive prim;                // Apply
  std::vector<NodeId> parents;   // Apply; ordered, each strictly < id
};

// Directed acyclic evaluation program: p inputs followed by constant and
// application nodes, one designated scalar output. Immutable after
// construction and safe to share across threads.
struct EvalProgram {
  std::uint32_t input_count = 0;  // p
  std::vector<NodeDef> nodes;     // ids 1..q in order
  NodeId output = 0;

  std::uint32_t node_count() const { return static_cast<std::uint32_t>(nodes.size()); }  // q
  const NodeDef& node(NodeId id) const { return nodes[id - 1]; }
};

struct Diagnostic {
  NodeId node = 0;  // 0 when not tied to a node
  std::string message;
};

// Line-based text format:
//   conserva-program v1
//   input <name>
//   const <name> <decimal>
//   node <name> = <prim>[:<param>] <arg> ...
//   output <name>
EvalProgram parse_program(std::istream& in);
EvalProgram parse_program(const std::string& text);

std::string serialize(const EvalProgram& program);

// Empty iff all invariants hold; never throws.
std::vector<Diagnostic> validate(const EvalProgram& program);

bool structurally_equal(const EvalProgram& a, const EvalProgram& b);

// Incremental construction for programmatically built programs (tests,
// network losses). Inputs must be declared before other nodes.
class ProgramBuilder {
public:
  NodeId input(std::string name = {});
  NodeId constant(double value, std::string name = {});
  NodeId apply(const Primitive& prim, std::vector<NodeId> parents, std::string name = {});
  NodeId apply(std::string_view prim_spec, std::vector<NodeId> parents, std::string name = {});

  // output 0 means "last node"
  EvalProgram finish(NodeId output = 0);

private:
  NodeId push(NodeDef def, std::string name);
  EvalProgram prog_;
};

}  // namespace conserva
