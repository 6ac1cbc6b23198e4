#include "conserva/program.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <istream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "conserva/errors.hpp"
#include "conserva/numio.hpp"

namespace conserva {

namespace {

constexpr std::string_view kHeader = "conserva-program v1";

bool valid_name(std::string_view s) {
  if (s.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  return true;
}

std::vector<std::string_view> tokenize(std::string_view line) {
  std::vector<std::string_view> toks;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) toks.push_back(line.substr(start, i - start));
  }
  return toks;
}

}  // namespace

EvalProgram parse_program(std::istream& in) {
  EvalProgram prog;
  std::unordered_map<std::string, NodeId> names;
  bool saw_header = false;
  bool saw_non_input = false;
  bool saw_output = false;
  int lineno = 0;
  std::string raw;

  auto define = [&](const std::string& name, int line) {
    if (!valid_name(name)) throw ParseError(line, "bad name '" + name + "'");
    if (names.count(name)) throw ParseError(line, "redefinition of '" + name + "'");
    const NodeId id = static_cast<NodeId>(prog.nodes.size() + 1);
    names.emplace(name, id);
    return id;
  };

  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (saw_output) throw ParseError(lineno, "content after output line");

    if (!saw_header) {
      if (line != kHeader) throw ParseError(lineno, "expected header '" + std::string(kHeader) + "'");
      saw_header = true;
      continue;
    }

    const auto toks = tokenize(line);
    const std::string_view kw = toks[0];

    if (kw == "input") {
      if (toks.size() != 2) throw ParseError(lineno, "expected 'input <name>'");
      if (saw_non_input) throw ParseError(lineno, "input declared after a const/node line");
      NodeDef nd;
      nd.kind = NodeDef::Kind::Input;
      nd.id = define(std::string(toks[1]), lineno);
      nd.name = std::string(toks[1]);
      prog.nodes.push_back(std::move(nd));
      ++prog.input_count;
    } else if (kw == "const") {
      if (toks.size() != 3) throw ParseError(lineno, "expected 'const <name> <decimal>'");
      const auto v = parse_double(toks[2]);
      if (!v) throw ParseError(lineno, "bad decimal '" + std::string(toks[2]) + "'");
      saw_non_input = true;
      NodeDef nd;
      nd.kind = NodeDef::Kind::Const;
      nd.value = *v;
      nd.id = define(std::string(toks[1]), lineno);
      nd.name = std::string(toks[1]);
      prog.nodes.push_back(std::move(nd));
    } else if (kw == "node") {
      if (toks.size() < 5 || toks[2] != "=")
        throw ParseError(lineno, "expected 'node <name> = <prim> <arg> ...'");
      saw_non_input = true;
      NodeDef nd;
      nd.kind = NodeDef::Kind::Apply;
      nd.id = define(std::string(toks[1]), lineno);
      nd.name = std::string(toks[1]);
      try {
        nd.prim = registry_lookup_spec(toks[3]);
      } catch (const ConfigError& e) {
        throw ParseError(lineno, e.what());
      }
      const int argc = static_cast<int>(toks.size()) - 4;
      if (argc != nd.prim.arity)
        throw ParseError(lineno, "primitive '" + nd.prim.name + "' expects " +
                                     std::to_string(nd.prim.arity) + " arguments, got " +
                                     std::to_string(argc));
      for (int i = 0; i < argc; ++i) {
        const std::string arg(toks[4 + i]);
        const auto it = names.find(arg);
        if (it == names.end()) throw ParseError(lineno, "unknown name '" + arg + "'");
        if (it->second >= nd.id)
          throw ParseError(lineno, "forward reference to '" + arg + "' (node " +
                                       std::to_string(it->second) + " >= " +
                                       std::to_string(nd.id) + ")");
        if (std::find(nd.parents.begin(), nd.parents.end(), it->second) != nd.parents.end())
          throw ParseError(lineno, "repeated parent '" + arg + "'");
        nd.parents.push_back(it->second);
      }
      prog.nodes.push_back(std::move(nd));
    } else if (kw == "output") {
      if (toks.size() != 2) throw ParseError(lineno, "expected 'output <name>'");
      const auto it = names.find(std::string(toks[1]));
      if (it == names.end())
        throw ParseError(lineno, "unknown name '" + std::string(toks[1]) + "'");
      prog.output = it->second;
      saw_output = true;
    } else {
      throw ParseError(lineno, "unknown directive '" + std::string(kw) + "'");
    }
  }

  if (!saw_header) throw ParseError(lineno, "empty program (missing header)");
  if (prog.nodes.empty()) throw ParseError(lineno, "program has no nodes");
  if (!saw_output) prog.output = prog.node_count();
  return prog;
}

EvalProgram parse_program(const std::string& text) {
  std::istringstream in(text);
  return parse_program(in);
}

std::string serialize(const EvalProgram& program) {
  std::ostringstream out;
  out << kHeader << "\n";
  for (const auto& nd : program.nodes) {
    switch (nd.kind) {
      case NodeDef::Kind::Input:
        out << "input " << nd.name << "\n";
        break;
      case NodeDef::Kind::Const:
        out << "const " << nd.name << " " << format_double(nd.value) << "\n";
        break;
      case NodeDef::Kind::Apply:
        out << "node " << nd.name << " = " << nd.prim.spec();
        for (NodeId p : nd.parents) out << " " << program.node(p).name;
        out << "\n";
        break;
    }
  }
  out << "output " << program.node(program.output).name << "\n";
  return out.str();
}

std::vector<Diagnostic> validate(const EvalProgram& program) {
  std::vector<Diagnostic> diags;
  const std::uint32_t q = program.node_count();
  const std::uint32_t p = program.input_count;

  if (p < 1) diags.push_back({0, "program must have at least one input (p >= 1)"});
  if (q <= p) diags.push_back({0, "program must have a node beyond its inputs (q > p)"});
  if (program.output < 1 || program.output > q)
    diags.push_back({program.output, "dangling output (node " + std::to_string(program.output) +
                                         " of " + std::to_string(q) + ")"});

  std::unordered_set<std::string> seen_names;
  for (std::uint32_t k = 1; k <= q; ++k) {
    const NodeDef& nd = program.nodes[k - 1];
    if (nd.id != k)
      diags.push_back({k, "node id " + std::to_string(nd.id) + " out of order (expected " +
                              std::to_string(k) + ")"});
    if (!seen_names.insert(nd.name).second)
      diags.push_back({k, "duplicate name '" + nd.name + "'"});
    const bool should_be_input = k <= p;
    if (should_be_input != (nd.kind == NodeDef::Kind::Input))
      diags.push_back({k, should_be_input ? "node in input range is not an input"
                                          : "input node outside range 1..p"});
    if (nd.kind != NodeDef::Kind::Apply) continue;

    Primitive reg;
    bool known = true;
    try {
      reg = registry_lookup(nd.prim.name, nd.prim.param);
    } catch (const ConfigError& e) {
      known = false;
      diags.push_back({k, e.what()});
    }
    if (known && static_cast<int>(nd.parents.size()) != reg.arity)
      diags.push_back({k, "arity mismatch: '" + nd.prim.name + "' expects " +
                              std::to_string(reg.arity) + " parents, got " +
                              std::to_string(nd.parents.size())});
    std::unordered_set<NodeId> seen_parents;
    for (NodeId par : nd.parents) {
      if (par < 1 || par >= k)
        diags.push_back({k, "forward reference at node " + std::to_string(k) + " (parent " +
                                std::to_string(par) + ")"});
      if (!seen_parents.insert(par).second)
        diags.push_back({k, "repeated parent at node " + std::to_string(k) + " (parent " +
                                std::to_string(par) + ")"});
    }
  }
  return diags;
}

bool structurally_equal(const EvalProgram& a, const EvalProgram& b) {
  if (a.input_count != b.input_count || a.output != b.output ||
      a.nodes.size() != b.nodes.size())
    return false;
  for (std::size_t i = 0; i < a.nodes.size(); ++i) {
    const NodeDef& x = a.nodes[i];
    const NodeDef& y = b.nodes[i];
    if (x.kind != y.kind || x.name != y.name || x.parents != y.parents) return false;
    if (x.kind == NodeDef::Kind::Const &&
        std::bit_cast<std::uint64_t>(x.value) != std::bit_cast<std::uint64_t>(y.value))
      return false;
    if (x.kind == NodeDef::Kind::Apply &&
        (x.prim.op != y.prim.op || x.prim.param != y.prim.param))
      return false;
  }
  return true;
}

NodeId ProgramBuilder::push(NodeDef def, std::string name) {
  def.id = static_cast<NodeId>(prog_.nodes.size() + 1);
  def.name = name.empty() ? "x" + std::to_string(def.id) : std::move(name);
  prog_.nodes.push_back(std::move(def));
  return prog_.nodes.back().id;
}

NodeId ProgramBuilder::input(std::string name) {
  if (prog_.input_count != prog_.nodes.size())
    throw std::logic_error("ProgramBuilder: inputs must precede other nodes");
  NodeDef nd;
  nd.kind = NodeDef::Kind::Input;
  const NodeId id = push(std::move(nd), std::move(name));
  ++prog_.input_count;
  return id;
}

NodeId ProgramBuilder::constant(double value, std::string name) {
  NodeDef nd;
  nd.kind = NodeDef::Kind::Const;
  nd.value = value;
  return push(std::move(nd), std::move(name));
}

NodeId ProgramBuilder::apply(const Primitive& prim, std::vector<NodeId> parents,
                             std::string name) {
  NodeDef nd;
  nd.kind = NodeDef::Kind::Apply;
  nd.prim = prim;
  nd.parents = std::move(parents);
  return push(std::move(nd), std::move(name));
}

NodeId ProgramBuilder::apply(std::string_view prim_spec, std::vector<NodeId> parents,
                             std::string name) {
  return apply(registry_lookup_spec(prim_spec), std::move(parents), std::move(name));
}

EvalProgram ProgramBuilder::finish(NodeId output) {
  prog_.output = output == 0 ? prog_.node_count() : output;
  return std::move(prog_);
}

}  // namespace conserva
