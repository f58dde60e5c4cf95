#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "realogic/eval.hpp"
#include "realogic/formula.hpp"
#include "realogic/machine.hpp"
#include "realogic/transforms.hpp"

namespace realogic {

class compile_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TimeMode { exact, at_most };

struct CompileOptions {
  int n = 1;                      // input length
  int t = 1;                      // time bound
  TimeMode mode = TimeMode::exact;
  std::optional<int> guesses;     // guess count; set => nondeterministic input layout
  bool simple_gadget = false;      // emit f*f + g = 1 instead of f*f + 2g = 1 + g*g
};

/// Unrolled machine run as a guarded existential formula with free inputs x1..xn.
/// Register s at time tau holds f/g with f in [-1,1], g in [0,1] and |f| = 1 - g.
struct CompiledEncoding {
  Machine machine;
  CompileOptions opt;
  long lo = 0, hi = 0;  // coordinate window
  FormulaPtr signed_formula;  // before sign elimination: f cells range over [-1,1]
  FormulaPtr formula;         // loose and [0,1]-guarded
  SignedToUnitResult sign;
  std::vector<std::string> inputs;
  std::vector<std::string> guess_vars;

  static std::string coord(long s) { return s < 0 ? "n" + std::to_string(-s) : std::to_string(s); }
  static std::string f_name(long s, int tau) { return "f_" + coord(s) + "_" + std::to_string(tau); }
  static std::string g_name(long s, int tau) { return "g_" + coord(s) + "_" + std::to_string(tau); }
  static std::string h_name(int m, int tau) { return "h_" + std::to_string(m) + "_" + std::to_string(tau); }
};

namespace detail {

inline TermPtr v(const std::string& n) { return term::var(n); }
inline TermPtr c(const ExactScalar& x) { return term::constant(x); }
inline TermPtr prod(std::initializer_list<TermPtr> xs) { return term::mul(std::vector<TermPtr>(xs)); }

}  // namespace detail

inline CompiledEncoding compile_machine(const Machine& m, const CompileOptions& opt) {
  using detail::c;
  using detail::prod;
  using detail::v;
  if (m.mode != MachineMode::sbss) throw compile_error("only sbss machines can be compiled");
  if (opt.t < 1) throw compile_error("time bound must be at least 1");
  if (opt.n < 0) throw compile_error("negative input length");
  CompiledEncoding enc;
  enc.machine = m;
  enc.opt = opt;
  const int t = opt.t, N = m.size();
  const long guesses = opt.guesses.value_or(0);
  const long base = opt.guesses ? 2 : 1;  // first input coordinate
  long min_idx = 0, max_idx = base + opt.n + guesses - 1;
  for (long s : m.coordinates()) {
    min_idx = std::min(min_idx, s);
    max_idx = std::max(max_idx, s);
  }
  enc.lo = std::min(-2L, min_idx) - t;
  enc.hi = std::max(1L, max_idx) + t;
  const long lo = enc.lo, hi = enc.hi;
  auto F = [](long s, int tau) { return v(CompiledEncoding::f_name(s, tau)); };
  auto G = [](long s, int tau) { return v(CompiledEncoding::g_name(s, tau)); };
  auto H = [](int k, int tau) { return v(CompiledEncoding::h_name(k, tau)); };
  auto is = [](const TermPtr& x, int k) { return fm::equal(x, c(k)); };

  std::vector<FormulaPtr> body;
  for (int tau = 0; tau <= t; ++tau)
    for (long s = lo; s <= hi; ++s) {
      if (opt.simple_gadget)
        body.push_back(fm::equal(term::add(prod({F(s, tau), F(s, tau)}), G(s, tau)), c(1)));
      else
        body.push_back(fm::equal(term::add({prod({F(s, tau), F(s, tau)}), G(s, tau), G(s, tau)}),
                                 term::add(c(1), prod({G(s, tau), G(s, tau)}))));
    }
  for (int tau = 0; tau <= t; ++tau) {
    std::vector<TermPtr> hs;
    for (int k = 1; k <= N; ++k) {
      body.push_back(fm::equal(prod({H(k, tau), H(k, tau)}), H(k, tau)));
      hs.push_back(H(k, tau));
    }
    body.push_back(fm::equal(term::add(hs), c(1)));
  }

  // Initial configuration.
  body.push_back(is(H(1, 0), 1));
  for (int i = 1; i <= opt.n; ++i) enc.inputs.push_back("x" + std::to_string(i));
  for (long j = 1; j <= guesses; ++j) enc.guess_vars.push_back("u" + std::to_string(j));
  for (long s = lo; s <= hi; ++s) {
    TermPtr value;
    if (s == 0) value = c(ExactScalar(static_cast<long>(opt.n)));
    else if (opt.guesses && s == 1) value = c(ExactScalar(guesses));
    else if (s >= base && s < base + opt.n) value = v(enc.inputs[static_cast<std::size_t>(s - base)]);
    else if (s >= base + opt.n && s < base + opt.n + guesses) value = v(enc.guess_vars[static_cast<std::size_t>(s - base - opt.n)]);
    if (!value || (value->kind == Term::Kind::constant && value->value.is_zero()))
      body.push_back(is(F(s, 0), 0));
    else
      body.push_back(fm::equal(F(s, 0), prod({value, G(s, 0)})));
  }

  // Transitions.
  auto copy = [&](long s, int tau, long from) {
    return fm::conj({fm::equal(F(s, tau + 1), F(from, tau)), fm::equal(G(s, tau + 1), G(from, tau))});
  };
  auto copy_all_but = [&](int tau, std::optional<long> skip) {
    std::vector<FormulaPtr> xs;
    for (long s = lo; s <= hi; ++s)
      if (!skip || s != *skip) xs.push_back(copy(s, tau, s));
    return xs;
  };
  for (int tau = 0; tau < t; ++tau) {
    for (const auto& nd : m.nodes) {
      std::vector<FormulaPtr> th;
      switch (nd.kind) {
        case NodeKind::input:
          th = copy_all_but(tau, std::nullopt);
          th.push_back(is(H(nd.next, tau + 1), 1));
          break;
        case NodeKind::output:
          if (opt.mode == TimeMode::exact) {
            body.push_back(is(H(N, tau), 0));
            continue;
          }
          th = copy_all_but(tau, std::nullopt);
          th.push_back(is(H(N, tau + 1), 1));
          break;
        case NodeKind::comp: {
          long i = nd.target, j = nd.src1, k = nd.src2;
          th = copy_all_but(tau, i);
          TermPtr fi = F(i, tau + 1), gi = G(i, tau + 1);
          TermPtr fj = F(j, tau), gj = G(j, tau), fk = F(k, tau), gk = G(k, tau);
          switch (nd.op) {
            case CompOp::add:
              th.push_back(fm::equal(prod({fi, gj, gk}), term::add(prod({gi, fj, gk}), prod({gi, gj, fk}))));
              break;
            case CompOp::sub:
              th.push_back(fm::equal(term::add(prod({fi, gj, gk}), prod({gi, gj, fk})), prod({gi, fj, gk})));
              break;
            case CompOp::mul: th.push_back(fm::equal(prod({fi, gj, gk}), prod({gi, fj, fk}))); break;
            case CompOp::constant:
              if (nd.c.is_zero()) th.push_back(is(fi, 0));
              else th.push_back(fm::equal(fi, prod({c(nd.c), gi})));
              break;
          }
          th.push_back(is(H(nd.next, tau + 1), 1));
          break;
        }
        case NodeKind::shift: {
          for (long s = lo; s <= hi; ++s) {
            long from = nd.left ? s + 1 : s - 1;
            if (from < lo || from > hi) th.push_back(is(F(s, tau + 1), 0));
            else th.push_back(copy(s, tau, from));
          }
          th.push_back(is(H(nd.next, tau + 1), 1));
          break;
        }
        case NodeKind::sbranch: {
          th = copy_all_but(tau, std::nullopt);
          TermPtr f0 = F(0, tau), g0 = G(0, tau);
          th.push_back(fm::disj({
              fm::conj({is(H(nd.pos, tau + 1), 1), fm::le(prod({c(nd.eps_plus), g0}), f0)}),
              fm::conj({is(H(nd.neg, tau + 1), 1), fm::le(f0, prod({c(nd.eps_minus), g0}))}),
          }));
          break;
        }
        case NodeKind::branch: throw compile_error("branch nodes are not supported");
      }
      body.push_back(fm::disj({is(H(nd.label, tau), 0), fm::conj(std::move(th))}));
    }
  }

  // Acceptance: node N at time t with coordinates -2, -1, 1 holding 0, 1, 1.
  body.push_back(is(H(N, t), 1));
  body.push_back(fm::equal(F(1, t), G(1, t)));
  body.push_back(fm::equal(F(-1, t), G(-1, t)));
  body.push_back(is(F(-2, t), 0));

  FormulaPtr out = fm::conj(std::move(body));
  for (long j = guesses; j >= 1; --j) out = fm::exists01(enc.guess_vars[static_cast<std::size_t>(j - 1)], out);
  for (int tau = t; tau >= 0; --tau)
    for (int k = N; k >= 1; --k) out = fm::exists01(CompiledEncoding::h_name(k, tau), out);
  for (int tau = t; tau >= 0; --tau)
    for (long s = hi; s >= lo; --s) {
      out = fm::exists01(CompiledEncoding::g_name(s, tau), out);
      out = fm::exists_real(CompiledEncoding::f_name(s, tau), Range::sym, out);
    }
  enc.signed_formula = out;
  enc.sign = signed_to_unit(out);
  enc.formula = enc.sign.formula;
  return enc;
}

// ---------------------------------------------------------------------------
// Witness transport between runs and assignments.

namespace detail {

/// Register value v as the pair (v/(1+|v|), 1/(1+|v|)).
inline std::pair<ExactScalar, ExactScalar> cell_pair(const ExactScalar& val) {
  ExactScalar g = ExactScalar(1) / (ExactScalar(1) + val.abs());
  return {val * g, g};
}

/// Assignment of the signed formula for a configuration sequence padded to t+1.
inline Environment configs_to_signed_env(const CompiledEncoding& enc, const std::vector<Configuration>& configs,
                                         const RealString& input, const RealString& witness) {
  if (enc.opt.simple_gadget) throw compile_error("witness transport is unsupported with the f*f+g=1 gadget");
  Environment env;
  for (std::size_t i = 0; i < enc.inputs.size(); ++i) env.reals[enc.inputs[i]] = input.at(i);
  for (std::size_t j = 0; j < enc.guess_vars.size(); ++j) env.reals[enc.guess_vars[j]] = witness.at(j);
  for (int tau = 0; tau <= enc.opt.t; ++tau) {
    const Configuration& cf = configs[std::min<std::size_t>(static_cast<std::size_t>(tau), configs.size() - 1)];
    for (long s = enc.lo; s <= enc.hi; ++s) {
      auto [f, g] = cell_pair(cf.state.get(s));
      env.reals[CompiledEncoding::f_name(s, tau)] = f;
      env.reals[CompiledEncoding::g_name(s, tau)] = g;
    }
    for (const auto& [s, val] : cf.state.cells())
      if (s < enc.lo || s > enc.hi) throw compile_error("run leaves the coordinate window");
    for (int k = 1; k <= enc.machine.size(); ++k)
      env.reals[CompiledEncoding::h_name(k, tau)] = ExactScalar(k == cf.node ? 1 : 0);
  }
  return env;
}

}  // namespace detail

/// Accepting trace -> satisfying assignment of enc.formula.
inline Environment trace_to_assignment(const RunTrace& tr, const CompiledEncoding& enc, const RealString& input,
                                       const RealString& witness = {}) {
  if (!tr.accepted()) throw compile_error("trace is not accepting");
  if (auto bad = check_trace(enc.machine, tr)) throw compile_error("trace/encoding mismatch: " + *bad);
  if (tr.configs.front().state != input_map(input, enc.opt.guesses ? std::optional<RealString>(witness) : std::nullopt))
    throw compile_error("trace/encoding mismatch: initial state differs from the input map");
  if (static_cast<int>(input.size()) != enc.opt.n || static_cast<long>(witness.size()) != enc.opt.guesses.value_or(0))
    throw compile_error("trace/encoding mismatch: input or witness length");
  int steps = tr.steps();
  if (enc.opt.mode == TimeMode::exact ? steps != enc.opt.t : steps > enc.opt.t)
    throw compile_error("run takes " + std::to_string(steps) + " steps, outside the time bound");
  for (const auto& x : witness)
    if (x < ExactScalar(0) || x > ExactScalar(1)) throw compile_error("guess outside [0,1]");
  const auto& last = tr.configs.back().state;
  if (last.get(-2) != ExactScalar(0))
    throw compile_error("accepting run violates the 0,1,1 convention at coordinates -2,-1,1");
  return enc.sign.forward(detail::configs_to_signed_env(enc, tr.configs, input, witness));
}

/// Assignment built from a (possibly non-accepting) run of at most t steps,
/// padding by repeating the last configuration. For deterministic machines
/// the signed formula has at most one satisfying assignment for a given
/// input, and it is this one; evaluating it decides membership.
inline Environment candidate_assignment(const CompiledEncoding& enc, const RealString& input,
                                        const RealString& witness = {}) {
  auto tr = run(enc.machine, input, enc.opt.guesses ? std::optional<RealString>(witness) : std::nullopt, enc.opt.t);
  return enc.sign.forward(detail::configs_to_signed_env(enc, tr.configs, input, witness));
}

/// Decides x in L^n_t (or L^n_<=t) for machines without guesses.
inline bool compiled_membership(const CompiledEncoding& enc, const RealString& input) {
  if (enc.opt.guesses && *enc.opt.guesses > 0) throw compile_error("membership by candidate needs a deterministic layout");
  auto tr = run(enc.machine, input, std::nullopt, enc.opt.t);
  Environment env = detail::configs_to_signed_env(enc, tr.configs, input, {});
  return eval_formula(enc.signed_formula, env);
}

/// Satisfying assignment -> accepting run, re-checked step by step.
inline RunTrace assignment_to_trace(const Environment& env, const CompiledEncoding& enc) {
  if (!eval_formula(enc.formula, env)) throw compile_error("assignment does not satisfy the compiled formula");
  Environment se = enc.sign.backward(env);
  RealString input, witness;
  for (const auto& x : enc.inputs) input.push_back(se.reals.at(x));
  for (const auto& u : enc.guess_vars) witness.push_back(se.reals.at(u));
  RunTrace tr;
  for (int tau = 0; tau <= enc.opt.t; ++tau) {
    Configuration cf;
    int node = 0;
    for (int k = 1; k <= enc.machine.size(); ++k)
      if (se.reals.at(CompiledEncoding::h_name(k, tau)) == ExactScalar(1)) node = k;
    cf.node = node;
    for (long s = enc.lo; s <= enc.hi; ++s) {
      const auto& g = se.reals.at(CompiledEncoding::g_name(s, tau));
      if (g.is_zero()) throw compile_error("decoded cell has zero denominator");
      cf.state.set(s, se.reals.at(CompiledEncoding::f_name(s, tau)) / g);
    }
    tr.configs.push_back(std::move(cf));
    if (node == enc.machine.size()) break;
  }
  tr.outcome = tr.configs.back().node == enc.machine.size() ? Outcome::output : Outcome::fuel_exhausted;
  if (tr.outcome == Outcome::output) tr.output = output_map(tr.configs.back().state);
  if (auto bad = check_trace(enc.machine, tr)) throw compile_error("decoded run invalid: " + *bad);
  if (tr.configs.front().state != input_map(input, enc.opt.guesses ? std::optional<RealString>(witness) : std::nullopt))
    throw compile_error("decoded run invalid: initial state is not the input map");
  if (!tr.accepted()) throw compile_error("decoded run invalid: not accepting");
  return tr;
}

// ---------------------------------------------------------------------------
// Guarded existential sentence -> S-BSS machine.

struct SentenceMachine {
  Machine machine;
  FormulaPtr matrix;                    // quantifier-free, variables renamed apart
  std::vector<std::string> variables;   // guess positions 0..k-1
  std::size_t selectors = 0;            // one per binary disjunction, after the variables
  std::map<std::string, std::string> renamed;  // new -> old

  /// Guesses for a satisfying environment of the source sentence.
  RealString transport_guesses(const Environment& env) const {
    Environment e;
    for (const auto& x : variables) {
      auto it = renamed.find(x);
      const std::string& src = it == renamed.end() ? x : it->second;
      e.reals[x] = env.reals.at(src);
    }
    RealString out;
    for (const auto& x : variables) out.push_back(e.reals.at(x));
    std::vector<ExactScalar> sel(selectors, ExactScalar(0));
    std::size_t next = 0;
    std::function<void(const FormulaPtr&)> walk = [&](const FormulaPtr& f) {
      if (f->kind == Formula::Kind::and_) {
        for (const auto& k : f->kids) walk(k);
      } else if (f->kind == Formula::Kind::or_ && !f->kids.empty()) {
        // chain: kid0 | (kid1 | (...))
        bool chosen = false;
        for (std::size_t i = 0; i < f->kids.size(); ++i) {
          bool last = i + 1 == f->kids.size();
          std::size_t slot = last ? 0 : next++;
          if (!chosen && (last || eval_formula(f->kids[i], e))) {
            chosen = true;
            if (!last) sel[slot] = ExactScalar(0);
          } else if (!last) {
            sel[slot] = ExactScalar(1);
          }
          walk(f->kids[i]);
        }
      }
    };
    walk(matrix);
    out.insert(out.end(), sel.begin(), sel.end());
    return out;
  }
};

namespace detail {

class SentenceCompiler {
 public:
  SentenceCompiler(bool zero_one) : zero_one_(zero_one) {}

  SentenceMachine compile(const FormulaPtr& sentence) {
    using K = Formula::Kind;
    auto rep = check_fragment(sentence, FragmentSpec::loose_guarded());
    if (!rep.ok()) throw compile_error("sentence is not loose and guarded: " + rep.str());
    if (!free_real_vars(sentence).empty() || !free_function_symbols(sentence).empty())
      throw compile_error("sentence has free symbols");
    NameSupply names(sentence);
    out_.matrix = rename_apart(sentence, names, out_.renamed);
    // Strip the (possibly nested) guarded quantifiers.
    std::function<FormulaPtr(const FormulaPtr&)> strip = [&](const FormulaPtr& f) -> FormulaPtr {
      switch (f->kind) {
        case K::exists_real:
          out_.variables.push_back(f->name);
          return strip(f->body());
        case K::and_:
        case K::or_: {
          std::vector<FormulaPtr> kids;
          for (const auto& k : f->kids) kids.push_back(strip(k));
          return fm::with_kids(*f, std::move(kids));
        }
        case K::atom:
          if (f->cmp == Cmp::lt) throw compile_error("strict atoms are outside the fragment");
          return f;
        default: throw compile_error("unsupported construct in sentence: " + print_formula(f));
      }
    };
    out_.matrix = strip(out_.matrix);
    std::function<void(const FormulaPtr&)> count = [&](const FormulaPtr& f) {
      if (f->kind == K::or_ && f->kids.size() > 1) out_.selectors += f->kids.size() - 1;
      for (const auto& k : f->kids) count(k);
    };
    count(out_.matrix);
    for (std::size_t i = 0; i < out_.variables.size(); ++i) coord_[out_.variables[i]] = 2 + static_cast<long>(i);
    next_selector_coord_ = 2 + static_cast<long>(out_.variables.size());

    // ids: 0 input, 1 output
    nodes_.resize(2);
    nodes_[0].kind = NodeKind::input;
    nodes_[1].kind = NodeKind::output;
    int accept = marker_block(ExactScalar(1));
    int reject = marker_block(ExactScalar(0));
    reject_ = reject;
    nodes_[0].next = emit(out_.matrix, accept);
    out_.machine = finish();
    return std::move(out_);
  }

 private:
  int add(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }
  int comp(CompOp op, long target, long a, long b, int next, ExactScalar cval = ExactScalar(0)) {
    Node n;
    n.kind = NodeKind::comp;
    n.op = op;
    n.target = target;
    n.src1 = a;
    n.src2 = b;
    n.c = cval;
    n.next = next;
    return add(n);
  }
  int sbranch(int neg, int pos) {
    Node n;
    n.kind = NodeKind::sbranch;
    n.eps_minus = ExactScalar(0);
    n.eps_plus = ExactScalar(1);
    n.neg = neg;
    n.pos = pos;
    return add(n);
  }
  /// Sets -1 <- 1, 1 <- out, -2 <- 0, then halts.
  int marker_block(const ExactScalar& out) {
    int k = comp(CompOp::constant, -2, 0, 0, 1, ExactScalar(0));
    k = comp(CompOp::constant, 1, 0, 0, k, out);
    return comp(CompOp::constant, -1, 0, 0, k, ExactScalar(1));
  }

  long scratch() { return next_scratch_--; }

  /// Code computing term t into register r, then continuing at `next`.
  /// Returns the entry id.
  int term_code(const TermPtr& t, long r, int next) {
    using TK = Term::Kind;
    switch (t->kind) {
      case TK::constant: return constant_code(t->value, r, next);
      case TK::var: {
        auto it = coord_.find(t->name);
        if (it == coord_.end()) throw compile_error("unbound variable " + t->name);
        return comp(CompOp::add, r, it->second, kZero, next);
      }
      case TK::add:
      case TK::mul: {
        CompOp op = t->kind == TK::add ? CompOp::add : CompOp::mul;
        // r <- k0 ; then r <- r op ki, built back to front
        std::vector<long> regs;
        for (std::size_t i = 1; i < t->kids.size(); ++i) regs.push_back(scratch());
        int k = next;
        for (std::size_t i = t->kids.size(); i-- > 1;) k = comp(op, r, r, regs[i - 1], k);
        for (std::size_t i = t->kids.size(); i-- > 1;) k = term_code(t->kids[i], regs[i - 1], k);
        return term_code(t->kids[0], r, k);
      }
      default: throw compile_error("term outside real arithmetic: " + print_term(t));
    }
  }

  int constant_code(const ExactScalar& val, long r, int next) {
    if (!zero_one_ || val == ExactScalar(0) || val == ExactScalar(1)) return comp(CompOp::constant, r, 0, 0, next, val);
    if (!val.is_integer()) throw compile_error("constant " + val.str() + " cannot be built from 0 and 1");
    long k = std::abs(val.numerator().get_si());
    int entry = next;
    if (val.sign() < 0) entry = comp(CompOp::sub, r, kZero, r, entry);
    long one = scratch();
    for (long i = 1; i < k; ++i) entry = comp(CompOp::add, r, r, one, entry);
    entry = comp(CompOp::constant, r, 0, 0, entry, ExactScalar(1));
    return comp(CompOp::constant, one, 0, 0, entry, ExactScalar(1));
  }

  /// t1 <= t2: x0 <- t1 - t2, continue if x0 <= 0, reject if x0 >= 1.
  int le_code(const TermPtr& a, const TermPtr& b, int next) {
    int br = sbranch(next, reject_);
    long ra = scratch(), rb = scratch();
    int k = comp(CompOp::sub, 0, ra, rb, br);
    k = term_code(b, rb, k);
    return term_code(a, ra, k);
  }

  int emit(const FormulaPtr& f, int next) {
    using K = Formula::Kind;
    switch (f->kind) {
      case K::atom:
        if (f->cmp == Cmp::le) return le_code(f->lhs, f->rhs, next);
        return le_code(f->lhs, f->rhs, le_code(f->rhs, f->lhs, next));
      case K::and_: {
        int k = next;
        for (std::size_t i = f->kids.size(); i-- > 0;) k = emit(f->kids[i], k);
        return k;
      }
      case K::or_: {
        if (f->kids.empty()) return reject_;
        // Selector coordinates are assigned left to right, in walk order.
        std::vector<long> sel;
        for (std::size_t i = 0; i + 1 < f->kids.size(); ++i) sel.push_back(next_selector_coord_++);
        std::vector<int> entries(f->kids.size());
        for (std::size_t i = 0; i < f->kids.size(); ++i) entries[i] = emit(f->kids[i], next);
        int k = entries.back();
        for (std::size_t i = f->kids.size() - 1; i-- > 0;) {
          int br = sbranch(entries[i], k);
          k = comp(CompOp::add, 0, sel[i], kZero, br);
        }
        return k;
      }
      default: throw compile_error("unsupported construct");
    }
  }

  Machine finish() {
    // ids -> labels: input 1, output N, others in creation order.
    const int total = static_cast<int>(nodes_.size());
    std::vector<int> label(static_cast<std::size_t>(total));
    label[0] = 1;
    int l = 2;
    for (int i = 2; i < total; ++i) label[static_cast<std::size_t>(i)] = l++;
    label[1] = total;
    Machine m;
    m.mode = MachineMode::sbss;
    m.zero_one = zero_one_;
    m.nodes.resize(static_cast<std::size_t>(total));
    for (int i = 0; i < total; ++i) {
      Node n = nodes_[static_cast<std::size_t>(i)];
      n.label = label[static_cast<std::size_t>(i)];
      if (n.kind == NodeKind::sbranch) {
        n.neg = label[static_cast<std::size_t>(n.neg)];
        n.pos = label[static_cast<std::size_t>(n.pos)];
      } else if (n.kind != NodeKind::output) {
        n.next = label[static_cast<std::size_t>(n.next)];
      }
      m.nodes[static_cast<std::size_t>(n.label - 1)] = n;
    }
    // Blocks no branch reaches (an unused reject path) would fail validation.
    prune_unreachable(m);
    validate_machine(m);
    return m;
  }

  static void prune_unreachable(Machine& m) {
    std::vector<bool> seen(static_cast<std::size_t>(m.size() + 1), false);
    std::vector<int> stack{1};
    seen[1] = true;
    while (!stack.empty()) {
      int k = stack.back();
      stack.pop_back();
      for (int s : m.node(k).successors())
        if (!seen[static_cast<std::size_t>(s)]) {
          seen[static_cast<std::size_t>(s)] = true;
          stack.push_back(s);
        }
    }
    seen[static_cast<std::size_t>(m.size())] = true;
    std::vector<int> relabel(static_cast<std::size_t>(m.size() + 1), 0);
    std::vector<Node> kept;
    for (int k = 1; k <= m.size(); ++k)
      if (seen[static_cast<std::size_t>(k)]) {
        relabel[static_cast<std::size_t>(k)] = static_cast<int>(kept.size()) + 1;
        kept.push_back(m.node(k));
      }
    for (auto& n : kept) {
      n.label = relabel[static_cast<std::size_t>(n.label)];
      if (n.kind == NodeKind::sbranch || n.kind == NodeKind::branch) {
        n.neg = relabel[static_cast<std::size_t>(n.neg)];
        n.pos = relabel[static_cast<std::size_t>(n.pos)];
      } else if (n.kind != NodeKind::output) {
        n.next = relabel[static_cast<std::size_t>(n.next)];
      }
    }
    m.nodes = std::move(kept);
  }

  static constexpr long kZero = -3;  // never written
  bool zero_one_;
  SentenceMachine out_;
  std::vector<Node> nodes_;
  std::map<std::string, long> coord_;
  long next_selector_coord_ = 2;
  long next_scratch_ = -4;
  int reject_ = 0;
};

}  // namespace detail

/// Machine that accepts (0-length input, guesses) iff the guesses witness
/// the sentence. Guesses: one per quantified variable, then selectors.
inline SentenceMachine compile_sentence_to_machine(const FormulaPtr& sentence, bool zero_one = false) {
  return detail::SentenceCompiler(zero_one).compile(sentence);
}

}  // namespace realogic
