#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "realogic/formula.hpp"
#include "realogic/structure.hpp"

namespace realogic {

/// Raised when a quantifier has no usable witness. Distinct from falsity.
class WitnessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Witness key for a quantifier nested under first-order quantifiers:
/// the symbol plus the values of the enclosing first-order variables.
inline std::string scoped_name(const std::string& name, const Tuple& ctx) {
  if (ctx.empty()) return name;
  std::string s = name + "@";
  for (std::size_t i = 0; i < ctx.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(ctx[i]);
  }
  return s;
}

struct Environment {
  std::map<std::string, int> fo;
  std::map<std::string, WeightTable> functions;
  std::map<std::string, ExactScalar> reals;
  std::map<std::string, RelationTable> relations;
  std::map<std::string, std::map<Tuple, int>> skolems;

  void merge(const Environment& o) {
    for (const auto& [k, v] : o.fo) fo[k] = v;
    for (const auto& [k, v] : o.functions) functions[k] = v;
    for (const auto& [k, v] : o.reals) reals[k] = v;
    for (const auto& [k, v] : o.relations) relations[k] = v;
    for (const auto& [k, v] : o.skolems) skolems[k] = v;
  }
  friend bool operator==(const Environment&, const Environment&) = default;
};

inline bool in_range(const ExactScalar& v, Range r) {
  switch (r) {
    case Range::real: return true;
    case Range::unit:
    case Range::dist: return v >= ExactScalar(0) && v <= ExactScalar(1);
    case Range::sym: return v >= ExactScalar(-1) && v <= ExactScalar(1);
  }
  return false;
}

namespace detail {

inline std::optional<bool> builtin_order(const std::string& name, const Tuple& args, int n) {
  auto colon = name.find(':');
  if (colon == std::string::npos) return std::nullopt;
  std::string kind = name.substr(0, colon);
  int m = 0;
  try {
    m = std::stoi(name.substr(colon + 1));
  } catch (const std::exception&) {
    return std::nullopt;
  }
  auto index = [&](std::size_t off) {
    long r = 0;
    for (int i = 0; i < m; ++i) r = r * n + args[off + static_cast<std::size_t>(i)];
    return r;
  };
  long last = 1;
  for (int i = 0; i < m; ++i) last *= n;
  --last;
  if (kind == "lt" || kind == "succ") {
    if (static_cast<int>(args.size()) != 2 * m) throw EvalError("arity mismatch for " + name);
    long a = index(0), b = index(static_cast<std::size_t>(m));
    return kind == "lt" ? a < b : a + 1 == b;
  }
  if (kind == "min" || kind == "max") {
    if (static_cast<int>(args.size()) != m) throw EvalError("arity mismatch for " + name);
    return kind == "min" ? index(0) == 0 : index(0) == last;
  }
  return std::nullopt;
}

class Evaluator {
 public:
  Evaluator(const RStructure* s, const Environment& env, Tuple ctx = {})
      : s_(s), env_(env), fo_(env.fo), ctx_(std::move(ctx)) {}

  bool formula(const Formula& f) {
    using K = Formula::Kind;
    switch (f.kind) {
      case K::eq: return fo(f.args[0]) == fo(f.args[1]);
      case K::neq: return fo(f.args[0]) != fo(f.args[1]);
      case K::rel:
      case K::nrel: {
        Tuple t;
        for (const auto& a : f.args) t.push_back(fo(a));
        bool v = relation(f.name, t);
        return f.kind == K::rel ? v : !v;
      }
      case K::atom:
      case K::natom: {
        ExactScalar l = term(*f.lhs), r = term(*f.rhs);
        bool v = f.cmp == Cmp::eq ? l == r : f.cmp == Cmp::le ? l <= r : l < r;
        return f.kind == K::atom ? v : !v;
      }
      case K::and_:
        for (const auto& k : f.kids)
          if (!formula(*k)) return false;
        return true;
      case K::or_:
        for (const auto& k : f.kids)
          if (formula(*k)) return true;
        return false;
      case K::exists:
      case K::forall: {
        bool want = f.kind == K::exists;
        auto saved = save_fo(f.name);
        for (int a = 0; a < domain_size(); ++a) {
          fo_[f.name] = a;
          ctx_.push_back(a);
          bool v = formula(*f.body());
          ctx_.pop_back();
          if (v == want) {
            restore_fo(f.name, saved);
            return want;
          }
        }
        restore_fo(f.name, saved);
        return !want;
      }
      case K::exists_real: {
        auto key = lookup_key(env_.reals, f.name);
        if (!key) throw WitnessError("no witness for real variable " + f.name);
        const ExactScalar& v = env_.reals.at(*key);
        if (!in_range(v, f.range)) return false;
        reals_.push_back({f.name, v});
        bool r = formula(*f.body());
        reals_.pop_back();
        return r;
      }
      case K::exists_fn: {
        auto key = lookup_key(env_.functions, f.name);
        if (!key) throw WitnessError("no witness for function " + f.name);
        const WeightTable& w = env_.functions.at(*key);
        check_table(f, w);
        fns_.push_back({f.name, &w});
        bool r = formula(*f.body());
        fns_.pop_back();
        return r;
      }
      case K::exists_rel: {
        auto key = lookup_key(env_.relations, f.name);
        if (!key) throw WitnessError("no witness for relation " + f.name);
        const RelationTable& r = env_.relations.at(*key);
        for (const auto& t : r.tuples)
          if (static_cast<int>(t.size()) != f.arity || !FiniteDomain(domain_size()).contains(t))
            throw WitnessError("relation witness " + f.name + " has a bad tuple");
        rels_.push_back({f.name, &r});
        bool v = formula(*f.body());
        rels_.pop_back();
        return v;
      }
      case K::exists_skolem: {
        auto key = lookup_key(env_.skolems, f.name);
        if (!key) throw WitnessError("no witness for Skolem function " + f.name);
        const auto& g = env_.skolems.at(*key);
        FiniteDomain d(domain_size());
        if (g.size() != d.tuple_count(f.arity)) throw WitnessError("Skolem witness " + f.name + " is not total");
        for (const auto& [t, v] : g)
          if (static_cast<int>(t.size()) != f.arity || !d.contains(t) || v < 0 || v >= d.size)
            throw WitnessError("Skolem witness " + f.name + " leaves the domain");
        skolems_.push_back({f.name, &g});
        bool v = formula(*f.body());
        skolems_.pop_back();
        return v;
      }
    }
    return false;
  }

  ExactScalar term(const Term& t) {
    using TK = Term::Kind;
    switch (t.kind) {
      case TK::constant: return t.value;
      case TK::var: {
        for (auto it = reals_.rbegin(); it != reals_.rend(); ++it)
          if (it->first == t.name) return it->second;
        auto it = env_.reals.find(t.name);
        if (it == env_.reals.end()) throw WitnessError("unbound real variable " + t.name);
        return it->second;
      }
      case TK::app: {
        Tuple args;
        for (const auto& a : t.args) args.push_back(fo(a));
        const WeightTable* w = nullptr;
        for (auto it = fns_.rbegin(); it != fns_.rend() && !w; ++it)
          if (it->first == t.name) w = it->second;
        if (!w) {
          auto it = env_.functions.find(t.name);
          if (it != env_.functions.end()) w = &it->second;
        }
        if (!w && s_) w = s_->weight(t.name);
        if (!w) throw WitnessError("unbound function symbol " + t.name);
        auto v = w->get(args);
        if (!v) throw WitnessError("function " + t.name + " undefined on argument tuple");
        return *v;
      }
      case TK::add: {
        ExactScalar s;
        for (const auto& k : t.kids) s += term(*k);
        return s;
      }
      case TK::mul: {
        ExactScalar p(1);
        for (const auto& k : t.kids) p *= term(*k);
        return p;
      }
      case TK::sum: {
        if (!s_) throw EvalError("SUM needs a finite structure");
        ExactScalar total;
        std::vector<std::optional<int>> saved;
        for (const auto& v : t.bound) saved.push_back(save_fo(v));
        for (const auto& tup : s_->domain.tuples(static_cast<int>(t.bound.size()))) {
          for (std::size_t i = 0; i < t.bound.size(); ++i) fo_[t.bound[i]] = tup[i];
          total += term(*t.kids[0]);
        }
        for (std::size_t i = 0; i < t.bound.size(); ++i) restore_fo(t.bound[i], saved[i]);
        return total;
      }
    }
    return {};
  }

 private:
  int domain_size() const {
    if (!s_) throw EvalError("first-order quantification needs a finite structure");
    return s_->domain.size;
  }

  int fo(const FoTerm& t) {
    switch (t.kind) {
      case FoTerm::Kind::var: {
        auto it = fo_.find(t.name);
        if (it == fo_.end()) throw WitnessError("unbound first-order variable " + t.name);
        return it->second;
      }
      case FoTerm::Kind::element:
        if (s_ && t.element >= s_->domain.size) throw EvalError("element #" + std::to_string(t.element) + " outside the domain");
        return t.element;
      case FoTerm::Kind::skolem: {
        Tuple args;
        for (const auto& a : t.args) args.push_back(fo(a));
        for (auto it = skolems_.rbegin(); it != skolems_.rend(); ++it)
          if (it->first == t.name) return it->second->at(args);
        auto it = env_.skolems.find(t.name);
        if (it == env_.skolems.end()) throw WitnessError("unbound Skolem function " + t.name);
        auto jt = it->second.find(args);
        if (jt == it->second.end()) throw WitnessError("Skolem function " + t.name + " undefined on tuple");
        return jt->second;
      }
    }
    return 0;
  }

  bool relation(const std::string& name, const Tuple& t) {
    for (auto it = rels_.rbegin(); it != rels_.rend(); ++it)
      if (it->first == name) return it->second->contains(t);
    if (auto it = env_.relations.find(name); it != env_.relations.end()) return it->second.contains(t);
    if (s_) {
      if (const auto* r = s_->relation(name)) {
        if (r->arity != static_cast<int>(t.size())) throw EvalError("arity mismatch for relation " + name);
        return r->contains(t);
      }
      if (auto b = builtin_order(name, t, s_->domain.size)) return *b;
    }
    throw WitnessError("unbound relation symbol " + name);
  }

  template <class Map>
  std::optional<std::string> lookup_key(const Map& m, const std::string& name) const {
    auto scoped = scoped_name(name, ctx_);
    if (m.count(scoped)) return scoped;
    if (m.count(name)) return name;
    return std::nullopt;
  }

  void check_table(const Formula& q, const WeightTable& w) const {
    FiniteDomain d = s_ ? s_->domain : FiniteDomain(1);
    if (w.arity != q.arity) throw WitnessError("witness for " + q.name + " has the wrong arity");
    if (!w.is_total(d)) throw WitnessError("witness for " + q.name + " is not a total table");
    for (const auto& [t, v] : w.values)
      if (!in_range(v, q.range))
        throw WitnessError("witness for " + q.name + " leaves its range " + range_symbol(q.range));
    if (q.range == Range::dist && w.sum() != ExactScalar(1))
      throw WitnessError("distribution witness for " + q.name + " sums to " + w.sum().str());
  }

  std::optional<int> save_fo(const std::string& v) const {
    auto it = fo_.find(v);
    if (it == fo_.end()) return std::nullopt;
    return it->second;
  }
  void restore_fo(const std::string& v, const std::optional<int>& saved) {
    if (saved) fo_[v] = *saved;
    else fo_.erase(v);
  }

  const RStructure* s_;
  const Environment& env_;
  std::map<std::string, int> fo_;
  Tuple ctx_;  // values of the enclosing first-order quantifiers
  std::vector<std::pair<std::string, ExactScalar>> reals_;
  std::vector<std::pair<std::string, const WeightTable*>> fns_;
  std::vector<std::pair<std::string, const RelationTable*>> rels_;
  std::vector<std::pair<std::string, const std::map<Tuple, int>*>> skolems_;
};

}  // namespace detail

inline ExactScalar eval_term(const TermPtr& t, const RStructure* s, const Environment& env) {
  return detail::Evaluator(s, env).term(*t);
}

/// Throws WitnessError when a witness is missing or invalid.
inline bool eval_formula(const FormulaPtr& f, const RStructure* s, const Environment& env) {
  return detail::Evaluator(s, env).formula(*f);
}
inline bool eval_formula(const FormulaPtr& f, const Environment& env) { return eval_formula(f, nullptr, env); }

/// Evaluates a subformula reached under first-order quantifiers whose values
/// (in binding order) are `ctx`; scoped witnesses are looked up relative to it.
inline bool eval_formula_in_context(const FormulaPtr& f, const RStructure* s, const Environment& env, Tuple ctx) {
  return detail::Evaluator(s, env, std::move(ctx)).formula(*f);
}

enum class Verdict { true_, false_, missing_witness };

inline Verdict eval_verdict(const FormulaPtr& f, const RStructure* s, const Environment& env) {
  try {
    return eval_formula(f, s, env) ? Verdict::true_ : Verdict::false_;
  } catch (const WitnessError&) {
    return Verdict::missing_witness;
  }
}

// ---------------------------------------------------------------------------
// Witness files: (env (var x 1/2) (fn f ((0) 1/3) ((1) 2/3)) (fo x 0)
//                      (rel X (0) (1 0)) (skolem g ((0) 1)))

inline Environment parse_environment(const Sexp& top) {
  if (top.head() != "env") top.fail("expected (env ...)");
  Environment env;
  for (std::size_t i = 1; i < top.size(); ++i) {
    const Sexp& it = top[i].expect_list("env entry");
    auto h = it.head();
    if (it.size() < 2) it.fail("env entry needs a name");
    const std::string& name = it[1].expect_atom("name");
    if (h == "var") {
      if (it.size() != 3) it.fail("(var x value)");
      try {
        env.reals[name] = ExactScalar::parse(it[2].expect_atom("value"));
      } catch (const literal_error& e) {
        it[2].fail(e.what());
      }
    } else if (h == "fo") {
      if (it.size() != 3) it.fail("(fo x element)");
      env.fo[name] = parse_int_atom(it[2], "element");
    } else if (h == "fn") {
      WeightTable w;
      bool first = true;
      for (std::size_t j = 2; j < it.size(); ++j) {
        const Sexp& e = it[j].expect_list("(tuple value)");
        if (e.size() != 2) e.fail("(tuple value)");
        Tuple t = parse_tuple(e[0]);
        if (first) w.arity = static_cast<int>(t.size());
        else if (static_cast<int>(t.size()) != w.arity) e.fail("inconsistent arity");
        first = false;
        try {
          w.set(t, ExactScalar::parse(e[1].expect_atom("value")));
        } catch (const literal_error& ex) {
          e[1].fail(ex.what());
        }
      }
      env.functions[name] = std::move(w);
    } else if (h == "rel") {
      RelationTable r;
      bool first = true;
      for (std::size_t j = 2; j < it.size(); ++j) {
        Tuple t = parse_tuple(it[j]);
        if (first) r.arity = static_cast<int>(t.size());
        first = false;
        r.tuples.insert(t);
      }
      env.relations[name] = std::move(r);
    } else if (h == "skolem") {
      auto& g = env.skolems[name];
      for (std::size_t j = 2; j < it.size(); ++j) {
        const Sexp& e = it[j].expect_list("(tuple element)");
        if (e.size() != 2) e.fail("(tuple element)");
        g[parse_tuple(e[0])] = parse_int_atom(e[1], "element");
      }
    } else {
      it.fail("unknown env entry");
    }
  }
  return env;
}
inline Environment parse_environment(std::string_view text) { return parse_environment(parse_sexp(text)); }

inline Sexp environment_sexp(const Environment& env) {
  auto a = [](std::string s) { return Sexp::make_atom(std::move(s)); };
  Sexp top = Sexp::make_list({a("env")});
  for (const auto& [k, v] : env.fo) top.items.push_back(Sexp::make_list({a("fo"), a(k), a(std::to_string(v))}));
  for (const auto& [k, v] : env.reals) top.items.push_back(Sexp::make_list({a("var"), a(k), a(v.str())}));
  for (const auto& [k, w] : env.functions) {
    Sexp e = Sexp::make_list({a("fn"), a(k)});
    for (const auto& [t, v] : w.values) e.items.push_back(Sexp::make_list({tuple_sexp(t), a(v.str())}));
    top.items.push_back(std::move(e));
  }
  for (const auto& [k, r] : env.relations) {
    Sexp e = Sexp::make_list({a("rel"), a(k)});
    for (const auto& t : r.tuples) e.items.push_back(tuple_sexp(t));
    top.items.push_back(std::move(e));
  }
  for (const auto& [k, g] : env.skolems) {
    Sexp e = Sexp::make_list({a("skolem"), a(k)});
    for (const auto& [t, v] : g) e.items.push_back(Sexp::make_list({tuple_sexp(t), a(std::to_string(v))}));
    top.items.push_back(std::move(e));
  }
  return top;
}

// ---------------------------------------------------------------------------
// Bounded witness enumeration (incomplete; for tests).

/// Rationals p/q with 1 <= q <= bound inside [lo, hi], ascending.
inline std::vector<ExactScalar> rational_grid(int bound, const ExactScalar& lo, const ExactScalar& hi) {
  std::set<ExactScalar, std::less<>> seen;
  for (int q = 1; q <= bound; ++q) {
    mpq_class lq = lo.raw() * q, hq = hi.raw() * q;
    mpz_class pmin = lq.get_num() / lq.get_den() - 1;
    mpz_class pmax = hq.get_num() / hq.get_den() + 1;
    for (mpz_class p = pmin; p <= pmax; ++p) {
      ExactScalar v(mpq_class(p, q));
      if (v >= lo && v <= hi) seen.insert(v);
    }
  }
  return {seen.begin(), seen.end()};
}

struct SearchOptions {
  int denominator_bound = 4;
  ExactScalar real_bound = ExactScalar(4);  // range for unrestricted reals
  std::size_t max_combinations = 2'000'000;
};

/// Searches a finite grid for witnesses of every real/function quantifier
/// site not under a first-order quantifier. Returns nullopt when the grid
/// is exhausted; that is "none found at this bound", not unsatisfiability.
inline std::optional<Environment> search_bounded_witness(const FormulaPtr& f, const RStructure* s,
                                                         const SearchOptions& opt = {}) {
  struct Slot {
    enum { real, fn_entry } kind;
    std::string name;
    Tuple tuple;
    Range range;
  };
  std::vector<Slot> slots;
  std::vector<std::pair<std::string, int>> dist_fns;
  FiniteDomain d = s ? s->domain : FiniteDomain(1);
  std::function<void(const Formula&, bool)> collect = [&](const Formula& g, bool under_fo) {
    using K = Formula::Kind;
    if (g.kind == K::exists || g.kind == K::forall) under_fo = true;
    if (g.kind == K::exists_real) {
      if (under_fo) throw EvalError("enumerator does not support real quantifiers under first-order quantifiers");
      slots.push_back({Slot::real, g.name, {}, g.range});
    }
    if (g.kind == K::exists_fn) {
      if (under_fo) throw EvalError("enumerator does not support function quantifiers under first-order quantifiers");
      for (const auto& t : d.tuples(g.arity)) slots.push_back({Slot::fn_entry, g.name, t, g.range});
    }
    if (g.kind == K::exists_rel || g.kind == K::exists_skolem)
      throw EvalError("enumerator supports only real and function quantifiers");
    for (const auto& k : g.kids) collect(*k, under_fo);
  };
  collect(*f, false);

  std::vector<std::vector<ExactScalar>> grids;
  std::size_t combos = 1;
  for (const auto& sl : slots) {
    ExactScalar lo(0), hi(1);
    if (sl.range == Range::sym) lo = ExactScalar(-1);
    if (sl.range == Range::real) {
      lo = -opt.real_bound;
      hi = opt.real_bound;
    }
    grids.push_back(rational_grid(opt.denominator_bound, lo, hi));
    if (combos > opt.max_combinations / grids.back().size()) throw EvalError("enumeration grid too large");
    combos *= grids.back().size();
  }
  std::vector<std::size_t> idx(slots.size(), 0);
  for (;;) {
    Environment env;
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const auto& sl = slots[i];
      if (sl.kind == Slot::real) {
        env.reals[sl.name] = grids[i][idx[i]];
      } else {
        auto& w = env.functions[sl.name];
        w.arity = static_cast<int>(sl.tuple.size());
        w.set(sl.tuple, grids[i][idx[i]]);
      }
    }
    try {
      if (eval_formula(f, s, env)) return env;
    } catch (const WitnessError&) {
      // e.g. a distribution candidate that does not sum to 1
    }
    std::size_t i = 0;
    while (i < idx.size() && ++idx[i] == grids[i].size()) idx[i++] = 0;
    if (i == idx.size()) break;
  }
  return std::nullopt;
}

}  // namespace realogic
