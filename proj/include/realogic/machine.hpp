#pragma once

#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "realogic/scalar.hpp"
#include "realogic/sexpr.hpp"

namespace realogic {

class machine_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class MachineMode { bss, sbss };
enum class NodeKind { input, output, comp, branch, sbranch, shift };
enum class CompOp { add, sub, mul, constant };

struct Node {
  int label = 0;
  NodeKind kind = NodeKind::output;
  CompOp op = CompOp::add;
  long target = 0, src1 = 0, src2 = 0;
  ExactScalar c;
  int next = 0;
  ExactScalar eps_minus, eps_plus;
  int neg = 0, pos = 0;
  bool left = true;

  std::vector<int> successors() const {
    switch (kind) {
      case NodeKind::output: return {};
      case NodeKind::branch:
      case NodeKind::sbranch: return {neg, pos};
      default: return {next};
    }
  }
};

struct Machine {
  MachineMode mode = MachineMode::sbss;
  bool zero_one = false;
  std::vector<Node> nodes;  // nodes[label - 1]

  int size() const { return static_cast<int>(nodes.size()); }
  const Node& node(int label) const {
    if (label < 1 || label > size()) throw machine_error("no node " + std::to_string(label));
    return nodes[static_cast<std::size_t>(label - 1)];
  }

  /// Every coordinate named by a computation node.
  std::set<long> coordinates() const {
    std::set<long> out{0};
    for (const auto& n : nodes) {
      if (n.kind != NodeKind::comp) continue;
      out.insert(n.target);
      if (n.op != CompOp::constant) {
        out.insert(n.src1);
        out.insert(n.src2);
      }
    }
    return out;
  }
};

/// Sparse element of R_*: absent coordinates are 0.
class MachineState {
 public:
  const ExactScalar& get(long i) const {
    static const ExactScalar zero;
    auto it = cells_.find(i);
    return it == cells_.end() ? zero : it->second;
  }
  void set(long i, ExactScalar v) {
    if (v.is_zero()) cells_.erase(i);
    else cells_[i] = std::move(v);
  }
  /// sigma_l(x)_i = x_{i+1}
  void shift_left() {
    std::map<long, ExactScalar> out;
    for (auto& [i, v] : cells_) out.emplace(i - 1, v);
    cells_ = std::move(out);
  }
  /// sigma_r(x)_i = x_{i-1}
  void shift_right() {
    std::map<long, ExactScalar> out;
    for (auto& [i, v] : cells_) out.emplace(i + 1, v);
    cells_ = std::move(out);
  }
  const std::map<long, ExactScalar>& cells() const { return cells_; }

  std::string str() const {
    std::string s = "{";
    bool first = true;
    for (const auto& [i, v] : cells_) {
      if (!first) s += ", ";
      first = false;
      s += std::to_string(i) + ":" + v.str();
    }
    return s + "}";
  }

  friend bool operator==(const MachineState&, const MachineState&) = default;

 private:
  std::map<long, ExactScalar> cells_;
};

struct Configuration {
  int node = 1;
  MachineState state;
  friend bool operator==(const Configuration&, const Configuration&) = default;
};

enum class Outcome { output, reject_by_branch, fuel_exhausted };

struct RunTrace {
  std::vector<Configuration> configs;
  Outcome outcome = Outcome::fuel_exhausted;
  RealString output;

  bool accepted() const { return outcome == Outcome::output && output == RealString{ExactScalar(1)}; }
  /// Steps taken until the output node (configs.size() - 1).
  int steps() const { return static_cast<int>(configs.size()) - 1; }
};

inline const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::output: return "output";
    case Outcome::reject_by_branch: return "reject-by-branch";
    case Outcome::fuel_exhausted: return "fuel-exhausted";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Input and output maps.

/// Deterministic: n at 0, x at 1..n. With a witness x' of length m:
/// n at 0, m at 1, x at 2..n+1, x' at n+2..n+m+1.
inline MachineState input_map(const RealString& x, const std::optional<RealString>& witness = std::nullopt) {
  MachineState s;
  long n = static_cast<long>(x.size());
  s.set(0, ExactScalar(n));
  long base = 1;
  if (witness) {
    s.set(1, ExactScalar(static_cast<long>(witness->size())));
    base = 2;
  }
  for (long i = 0; i < n; ++i) s.set(base + i, x[static_cast<std::size_t>(i)]);
  if (witness)
    for (std::size_t i = 0; i < witness->size(); ++i) s.set(base + n + static_cast<long>(i), (*witness)[i]);
  return s;
}

/// The first l positive coordinates, l = number of consecutive ones from -1 downwards.
inline RealString output_map(const MachineState& s) {
  long l = 0;
  while (s.get(-(l + 1)) == ExactScalar(1)) ++l;
  RealString out;
  for (long i = 1; i <= l; ++i) out.push_back(s.get(i));
  return out;
}

// ---------------------------------------------------------------------------
// Validation.

inline void validate_machine(const Machine& m) {
  const int N = m.size();
  if (N < 2) throw machine_error("a machine needs an input and an output node");
  for (int i = 0; i < N; ++i)
    if (m.nodes[static_cast<std::size_t>(i)].label != i + 1) throw machine_error("node labels must be 1..N in order");
  if (m.node(1).kind != NodeKind::input) throw machine_error("node 1 must be the input node");
  if (m.node(N).kind != NodeKind::output) throw machine_error("node N must be the output node");
  for (const auto& n : m.nodes) {
    if (n.label != 1 && n.kind == NodeKind::input) throw machine_error("only node 1 may be an input node");
    if (n.label != N && n.kind == NodeKind::output) throw machine_error("only node N may be an output node");
    for (int s : n.successors())
      if (s < 1 || s > N) throw machine_error("node " + std::to_string(n.label) + " has successor out of range");
    if (n.kind == NodeKind::branch && m.mode == MachineMode::sbss)
      throw machine_error("branch node " + std::to_string(n.label) + " in an sbss machine");
    if (n.kind == NodeKind::sbranch && m.mode == MachineMode::bss)
      throw machine_error("separate branch node " + std::to_string(n.label) + " in a bss machine");
    if (n.kind == NodeKind::sbranch && !(n.eps_minus < n.eps_plus))
      throw machine_error("node " + std::to_string(n.label) + ": ε−<ε+ violated");
    if (m.zero_one) {
      auto zo = [](const ExactScalar& v) { return v == ExactScalar(0) || v == ExactScalar(1); };
      if (n.kind == NodeKind::comp && n.op == CompOp::constant && !zo(n.c))
        throw machine_error("node " + std::to_string(n.label) + ": constant " + n.c.str() + " not in {0,1}");
      if (n.kind == NodeKind::sbranch && (!zo(n.eps_minus) || !zo(n.eps_plus)))
        throw machine_error("node " + std::to_string(n.label) + ": thresholds not in {0,1}");
    }
  }
  std::vector<bool> seen(static_cast<std::size_t>(N + 1), false);
  std::queue<int> q;
  q.push(1);
  seen[1] = true;
  while (!q.empty()) {
    int k = q.front();
    q.pop();
    for (int s : m.node(k).successors())
      if (!seen[static_cast<std::size_t>(s)]) {
        seen[static_cast<std::size_t>(s)] = true;
        q.push(s);
      }
  }
  for (int k = 1; k <= N; ++k)
    if (!seen[static_cast<std::size_t>(k)]) throw machine_error("node " + std::to_string(k) + " unreachable from node 1");
}

// ---------------------------------------------------------------------------
// Simulation.

/// One step from a non-output node. Returns nullopt on separate-branch rejection.
inline std::optional<Configuration> step(const Machine& m, const Configuration& c) {
  const Node& n = m.node(c.node);
  Configuration out{0, c.state};
  switch (n.kind) {
    case NodeKind::input: out.node = n.next; break;
    case NodeKind::output: throw machine_error("no step from the output node");
    case NodeKind::comp: {
      const auto& x = c.state;
      switch (n.op) {
        case CompOp::add: out.state.set(n.target, x.get(n.src1) + x.get(n.src2)); break;
        case CompOp::sub: out.state.set(n.target, x.get(n.src1) - x.get(n.src2)); break;
        case CompOp::mul: out.state.set(n.target, x.get(n.src1) * x.get(n.src2)); break;
        case CompOp::constant: out.state.set(n.target, n.c); break;
      }
      out.node = n.next;
      break;
    }
    case NodeKind::branch: out.node = c.state.get(0) <= ExactScalar(0) ? n.neg : n.pos; break;
    case NodeKind::sbranch: {
      const auto& x0 = c.state.get(0);
      if (x0 >= n.eps_plus) out.node = n.pos;
      else if (x0 <= n.eps_minus) out.node = n.neg;
      else return std::nullopt;
      break;
    }
    case NodeKind::shift:
      if (n.left) out.state.shift_left();
      else out.state.shift_right();
      out.node = n.next;
      break;
  }
  return out;
}

inline RunTrace run(const Machine& m, const RealString& input, const std::optional<RealString>& witness = std::nullopt,
                    long fuel = 1000) {
  if (fuel < 1) throw machine_error("fuel must be at least 1");
  RunTrace tr;
  tr.configs.push_back({1, input_map(input, witness)});
  for (long k = 0; k < fuel; ++k) {
    const auto& cur = tr.configs.back();
    if (cur.node == m.size()) {
      tr.outcome = Outcome::output;
      tr.output = output_map(cur.state);
      return tr;
    }
    auto nxt = step(m, cur);
    if (!nxt) {
      tr.outcome = Outcome::reject_by_branch;
      return tr;
    }
    tr.configs.push_back(std::move(*nxt));
  }
  if (tr.configs.back().node == m.size()) {
    tr.outcome = Outcome::output;
    tr.output = output_map(tr.configs.back().state);
  } else {
    tr.outcome = Outcome::fuel_exhausted;
  }
  return tr;
}

/// Checks that consecutive configurations follow the node semantics.
inline std::optional<std::string> check_trace(const Machine& m, const RunTrace& tr) {
  if (tr.configs.empty()) return "empty trace";
  if (tr.configs.front().node != 1) return "trace does not start at node 1";
  for (std::size_t i = 0; i + 1 < tr.configs.size(); ++i) {
    if (tr.configs[i].node == m.size()) return "trace continues past the output node";
    auto nxt = step(m, tr.configs[i]);
    if (!nxt) return "step " + std::to_string(i) + " rejects by branch";
    if (!(*nxt == tr.configs[i + 1])) return "step " + std::to_string(i) + " does not follow node " + std::to_string(tr.configs[i].node);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Text format.

namespace detail {

inline long machine_long(const Sexp& s, const char* what) {
  const auto& a = s.expect_atom(what);
  try {
    std::size_t used = 0;
    long v = std::stol(a, &used);
    if (used != a.size()) throw std::invalid_argument(a);
    return v;
  } catch (const std::exception&) {
    s.fail(std::string(what) + " must be an integer");
  }
}

inline ExactScalar machine_rational(const Sexp& s) {
  try {
    return ExactScalar::parse(s.expect_atom("constant"));
  } catch (const literal_error& e) {
    s.fail(e.what());
  }
}

/// Finds (key v...) among the items of a node form.
inline const Sexp& field(const Sexp& node, std::string_view key, std::size_t arity = 1) {
  for (const auto& it : node.items)
    if (it.is_list && it.head() == key) {
      if (it.size() != arity + 1) it.fail("(" + std::string(key) + ") has the wrong number of values");
      return it;
    }
  node.fail("node lacks (" + std::string(key) + " ...)");
}

}  // namespace detail

inline Machine parse_machine(const Sexp& top) {
  using detail::field;
  using detail::machine_long;
  if (top.head() != "machine") top.fail("expected (machine ...)");
  Machine m;
  std::map<int, Node> nodes;
  for (std::size_t i = 1; i < top.size(); ++i) {
    const Sexp& it = top[i].expect_list("machine item");
    auto h = it.head();
    if (h == "mode") {
      if (it.size() != 2) it.fail("(mode bss|sbss)");
      const auto& v = it[1].expect_atom("mode");
      if (v == "bss") m.mode = MachineMode::bss;
      else if (v == "sbss") m.mode = MachineMode::sbss;
      else it[1].fail("mode must be bss or sbss");
    } else if (h == "zero-one") {
      if (it.size() != 2) it.fail("(zero-one #t|#f)");
      const auto& v = it[1].expect_atom("flag");
      if (v != "#t" && v != "#f") it[1].fail("flag must be #t or #f");
      m.zero_one = v == "#t";
    } else if (h == "node") {
      if (it.size() < 3) it.fail("(node k kind ...)");
      Node n;
      n.label = static_cast<int>(machine_long(it[1], "label"));
      const auto& kind = it[2].expect_atom("node kind");
      if (kind == "input") {
        n.kind = NodeKind::input;
        n.next = static_cast<int>(machine_long(field(it, "next")[1], "next"));
      } else if (kind == "output") {
        n.kind = NodeKind::output;
      } else if (kind == "comp") {
        n.kind = NodeKind::comp;
        if (it.size() < 4) it.fail("(node k comp OP ...)");
        const auto& op = it[3].expect_atom("operation");
        n.target = machine_long(field(it, "target")[1], "target");
        n.next = static_cast<int>(machine_long(field(it, "next")[1], "next"));
        if (op == "const") {
          n.op = CompOp::constant;
          if (it.size() < 5 || it[4].is_list) it.fail("(node k comp const c ...)");
          n.c = detail::machine_rational(it[4]);
        } else {
          if (op == "add") n.op = CompOp::add;
          else if (op == "sub") n.op = CompOp::sub;
          else if (op == "mul") n.op = CompOp::mul;
          else it[3].fail("operation must be add, sub, mul or const");
          const auto& src = field(it, "src", 2);
          n.src1 = machine_long(src[1], "source");
          n.src2 = machine_long(src[2], "source");
        }
      } else if (kind == "sbranch") {
        n.kind = NodeKind::sbranch;
        n.eps_minus = detail::machine_rational(field(it, "eps-")[1]);
        n.eps_plus = detail::machine_rational(field(it, "eps+")[1]);
        n.neg = static_cast<int>(machine_long(field(it, "neg")[1], "neg"));
        n.pos = static_cast<int>(machine_long(field(it, "pos")[1], "pos"));
      } else if (kind == "branch") {
        n.kind = NodeKind::branch;
        n.neg = static_cast<int>(machine_long(field(it, "neg")[1], "neg"));
        n.pos = static_cast<int>(machine_long(field(it, "pos")[1], "pos"));
      } else if (kind == "shift") {
        n.kind = NodeKind::shift;
        if (it.size() < 4) it.fail("(node k shift left|right ...)");
        const auto& dir = it[3].expect_atom("direction");
        if (dir != "left" && dir != "right") it[3].fail("direction must be left or right");
        n.left = dir == "left";
        n.next = static_cast<int>(machine_long(field(it, "next")[1], "next"));
      } else {
        it[2].fail("unknown node kind " + kind);
      }
      if (!nodes.emplace(n.label, n).second) it.fail("duplicate node label");
    } else {
      it.fail("unknown machine item");
    }
  }
  for (auto& [k, n] : nodes) m.nodes.push_back(n);
  validate_machine(m);
  return m;
}
inline Machine parse_machine(std::string_view text) { return parse_machine(parse_sexp(text)); }

inline Sexp machine_sexp(const Machine& m) {
  auto a = [](std::string s) { return Sexp::make_atom(std::move(s)); };
  auto kv = [&](const char* k, std::string v) { return Sexp::make_list({a(k), a(std::move(v))}); };
  auto num = [](long v) { return std::to_string(v); };
  Sexp top = Sexp::make_list({a("machine"), kv("mode", m.mode == MachineMode::sbss ? "sbss" : "bss"),
                              kv("zero-one", m.zero_one ? "#t" : "#f")});
  for (const auto& n : m.nodes) {
    Sexp s = Sexp::make_list({a("node"), a(num(n.label))});
    switch (n.kind) {
      case NodeKind::input:
        s.items.push_back(a("input"));
        s.items.push_back(kv("next", num(n.next)));
        break;
      case NodeKind::output: s.items.push_back(a("output")); break;
      case NodeKind::comp: {
        s.items.push_back(a("comp"));
        const char* op = n.op == CompOp::add ? "add" : n.op == CompOp::sub ? "sub" : n.op == CompOp::mul ? "mul" : "const";
        s.items.push_back(a(op));
        if (n.op == CompOp::constant) s.items.push_back(a(n.c.str()));
        s.items.push_back(kv("target", num(n.target)));
        if (n.op != CompOp::constant) s.items.push_back(Sexp::make_list({a("src"), a(num(n.src1)), a(num(n.src2))}));
        s.items.push_back(kv("next", num(n.next)));
        break;
      }
      case NodeKind::sbranch:
        s.items.push_back(a("sbranch"));
        s.items.push_back(kv("eps-", n.eps_minus.str()));
        s.items.push_back(kv("eps+", n.eps_plus.str()));
        s.items.push_back(kv("neg", num(n.neg)));
        s.items.push_back(kv("pos", num(n.pos)));
        break;
      case NodeKind::branch:
        s.items.push_back(a("branch"));
        s.items.push_back(kv("neg", num(n.neg)));
        s.items.push_back(kv("pos", num(n.pos)));
        break;
      case NodeKind::shift:
        s.items.push_back(a("shift"));
        s.items.push_back(a(n.left ? "left" : "right"));
        s.items.push_back(kv("next", num(n.next)));
        break;
    }
    top.items.push_back(std::move(s));
  }
  return top;
}

inline std::string format_trace(const RunTrace& tr) {
  std::string out;
  for (std::size_t i = 0; i < tr.configs.size(); ++i)
    out += std::to_string(i) + " node " + std::to_string(tr.configs[i].node) + " " + tr.configs[i].state.str() + "\n";
  out += std::string("outcome ") + outcome_name(tr.outcome);
  if (tr.outcome == Outcome::output) out += " " + to_string(tr.output);
  return out + "\n";
}

}  // namespace realogic
