#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "realogic/eval.hpp"
#include "realogic/formula.hpp"
#include "realogic/structure.hpp"

namespace realogic {

class transform_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Transport = std::function<Environment(const Environment&)>;

struct TransformResult {
  FormulaPtr formula;
  Transport forward;   // witnesses of the input -> witnesses of the output
  Transport backward;  // witnesses of the output -> witnesses of the input
  std::vector<std::string> notes;
};

// ---------------------------------------------------------------------------
// Bottom-up rewriting. Hooks see nodes whose children are already rewritten.

struct FormulaMap {
  std::function<FoTerm(FoTerm)> fo;
  std::function<TermPtr(TermPtr)> term;
  std::function<FormulaPtr(FormulaPtr)> node;
};

inline FoTerm map_fo(const FoTerm& t, const FormulaMap& m) {
  FoTerm r = t;
  for (auto& a : r.args) a = map_fo(a, m);
  return m.fo ? m.fo(std::move(r)) : r;
}

inline TermPtr map_term(const TermPtr& t, const FormulaMap& m) {
  auto r = std::make_shared<Term>(*t);
  for (auto& a : r->args) a = map_fo(a, m);
  for (auto& k : r->kids) k = map_term(k, m);
  TermPtr out = r;
  return m.term ? m.term(out) : out;
}

inline FormulaPtr map_formula(const FormulaPtr& f, const FormulaMap& m) {
  Formula g = *f;
  for (auto& a : g.args) a = map_fo(a, m);
  if (g.lhs) g.lhs = map_term(g.lhs, m);
  if (g.rhs) g.rhs = map_term(g.rhs, m);
  for (auto& k : g.kids) k = map_formula(k, m);
  FormulaPtr out = fm::make(std::move(g));
  return m.node ? m.node(out) : out;
}

/// Replaces first-order variables (not Skolem terms) by terms.
inline FormulaPtr substitute_fo(const FormulaPtr& f, const std::map<std::string, FoTerm>& sub) {
  FormulaMap m;
  m.fo = [&](FoTerm t) {
    if (t.kind == FoTerm::Kind::var)
      if (auto it = sub.find(t.name); it != sub.end()) return it->second;
    return t;
  };
  return map_formula(f, m);
}
inline TermPtr substitute_fo(const TermPtr& t, const std::map<std::string, FoTerm>& sub) {
  FormulaMap m;
  m.fo = [&](FoTerm x) {
    if (x.kind == FoTerm::Kind::var)
      if (auto it = sub.find(x.name); it != sub.end()) return it->second;
    return x;
  };
  return map_term(t, m);
}

/// Renames every binder whose name is already bound elsewhere or occurs
/// free, so all bound names become distinct. `renamed` maps new -> old.
inline FormulaPtr rename_apart(const FormulaPtr& f, NameSupply& names, std::map<std::string, std::string>& renamed) {
  std::set<std::string> taken;
  // Free symbols must never be captured.
  {
    std::set<std::string> binders;
    visit_formula(f, [&](const Formula& g) {
      if (g.is_quantifier()) binders.insert(g.name);
      if (g.is_numeric_atom())
        for (const auto* side : {&g.lhs, &g.rhs})
          visit_term(*side, [&](const Term& t) {
            for (const auto& b : t.bound) binders.insert(b);
          });
    });
    for (const auto& v : free_real_vars(f)) taken.insert(v);
    for (const auto& v : free_function_symbols(f)) taken.insert(v);
  }
  std::map<std::string, std::vector<std::string>> scope;
  auto lookup = [&](const std::string& n) {
    auto it = scope.find(n);
    return (it == scope.end() || it->second.empty()) ? n : it->second.back();
  };
  auto bind = [&](const std::string& n) {
    std::string nn = n;
    if (taken.count(n)) {
      nn = names.fresh(n);
      renamed[nn] = n;
    }
    taken.insert(nn);
    names.reserve(nn);
    scope[n].push_back(nn);
    return nn;
  };
  auto unbind = [&](const std::string& n) { scope[n].pop_back(); };

  std::function<FoTerm(const FoTerm&)> fo = [&](const FoTerm& t) {
    FoTerm r = t;
    if (r.kind != FoTerm::Kind::element) r.name = lookup(r.name);
    for (auto& a : r.args) a = fo(a);
    return r;
  };
  std::function<TermPtr(const TermPtr&)> term = [&](const TermPtr& t) -> TermPtr {
    auto r = std::make_shared<Term>(*t);
    if (r->kind == Term::Kind::sum) {
      std::vector<std::string> nb;
      for (const auto& b : r->bound) nb.push_back(bind(b));
      r->kids[0] = term(r->kids[0]);
      for (const auto& b : r->bound) unbind(b);
      r->bound = nb;
      return r;
    }
    if (r->kind == Term::Kind::var || r->kind == Term::Kind::app) r->name = lookup(r->name);
    for (auto& a : r->args) a = fo(a);
    for (auto& k : r->kids) k = term(k);
    return r;
  };
  std::function<FormulaPtr(const FormulaPtr&)> go = [&](const FormulaPtr& g) -> FormulaPtr {
    Formula r = *g;
    if (r.is_quantifier()) {
      std::string old = r.name;
      r.name = bind(old);
      r.kids[0] = go(r.kids[0]);
      unbind(old);
      return fm::make(std::move(r));
    }
    if (r.kind == Formula::Kind::rel || r.kind == Formula::Kind::nrel) r.name = lookup(r.name);
    for (auto& a : r.args) a = fo(a);
    if (r.lhs) r.lhs = term(r.lhs);
    if (r.rhs) r.rhs = term(r.rhs);
    for (auto& k : r.kids) k = go(k);
    return fm::make(std::move(r));
  };
  return go(f);
}

// ---------------------------------------------------------------------------
// Polynomial normal form of numerical terms.

struct Monomial {
  ExactScalar coef{1};
  std::vector<TermPtr> factors;  // var / app leaves, in left-to-right order
};

inline std::vector<Monomial> expand(const TermPtr& t) {
  using TK = Term::Kind;
  switch (t->kind) {
    case TK::constant: return {Monomial{t->value, {}}};
    case TK::var:
    case TK::app: return {Monomial{ExactScalar(1), {t}}};
    case TK::add: {
      std::vector<Monomial> out;
      for (const auto& k : t->kids) {
        auto e = expand(k);
        out.insert(out.end(), e.begin(), e.end());
      }
      return out;
    }
    case TK::mul: {
      std::vector<Monomial> acc{Monomial{}};
      for (const auto& k : t->kids) {
        auto e = expand(k);
        std::vector<Monomial> next;
        for (const auto& a : acc)
          for (const auto& b : e) {
            Monomial m{a.coef * b.coef, a.factors};
            m.factors.insert(m.factors.end(), b.factors.begin(), b.factors.end());
            next.push_back(std::move(m));
          }
        acc = std::move(next);
      }
      return acc;
    }
    case TK::sum: throw transform_error("SUM terms cannot be expanded into polynomials");
  }
  return {};
}

inline TermPtr monomial_term(const Monomial& m) {
  std::vector<TermPtr> xs;
  if (m.coef != ExactScalar(1) || m.factors.empty()) xs.push_back(term::constant(m.coef));
  xs.insert(xs.end(), m.factors.begin(), m.factors.end());
  return term::mul(std::move(xs));
}

inline TermPtr polynomial_term(const std::vector<Monomial>& ms) {
  std::vector<TermPtr> xs;
  for (const auto& m : ms) xs.push_back(monomial_term(m));
  return term::add(std::move(xs));
}

// ---------------------------------------------------------------------------
// Prenex form with Skolemized first-order existentials and a DNF matrix.

namespace detail {

inline std::vector<std::vector<FormulaPtr>> dnf(const FormulaPtr& f) {
  using K = Formula::Kind;
  if (f->kind == K::or_) {
    std::vector<std::vector<FormulaPtr>> out;
    for (const auto& k : f->kids) {
      auto d = dnf(k);
      out.insert(out.end(), d.begin(), d.end());
    }
    return out;
  }
  if (f->kind == K::and_) {
    std::vector<std::vector<FormulaPtr>> acc{{}};
    for (const auto& k : f->kids) {
      auto d = dnf(k);
      std::vector<std::vector<FormulaPtr>> next;
      for (const auto& a : acc)
        for (const auto& b : d) {
          auto c = a;
          c.insert(c.end(), b.begin(), b.end());
          next.push_back(std::move(c));
        }
      acc = std::move(next);
    }
    return acc;
  }
  if (f->is_quantifier()) throw transform_error("quantifier left inside matrix");
  return {{f}};
}

inline FormulaPtr from_dnf(const std::vector<std::vector<FormulaPtr>>& d) {
  std::vector<FormulaPtr> ds;
  for (const auto& c : d) ds.push_back(fm::conj(c));
  return fm::disj(std::move(ds));
}

}  // namespace detail

inline FormulaPtr to_dnf(const FormulaPtr& matrix) { return detail::from_dnf(detail::dnf(matrix)); }

/// Result: exists (second-order) exists (Skolem) forall x1..xk DNF-matrix.
inline TransformResult normalize_prenex_dnf(const FormulaPtr& input, const RStructure* s = nullptr) {
  using K = Formula::Kind;
  NameSupply names(input);
  std::map<std::string, std::string> renamed;
  FormulaPtr f = rename_apart(input, names, renamed);
  auto original_name = [&](const std::string& n) {
    auto it = renamed.find(n);
    return it == renamed.end() ? n : it->second;
  };

  struct Lifted {
    const Formula* node;             // quantifier in the renamed input
    std::vector<std::string> outer;  // enclosing universal variables
    std::string name;                // name in the output
    int arity;                       // arity in the output
  };
  std::vector<Lifted> lifted;
  std::vector<std::string> universals;
  std::map<std::string, std::pair<std::string, std::vector<std::string>>> skolem_of;  // y -> (g, outer)
  std::map<std::string, std::vector<std::string>> raise;  // symbol -> outer universals

  std::function<FormulaPtr(const FormulaPtr&, std::vector<std::string>&)> strip =
      [&](const FormulaPtr& g, std::vector<std::string>& outer) -> FormulaPtr {
    switch (g->kind) {
      case K::forall: {
        universals.push_back(g->name);
        outer.push_back(g->name);
        auto b = strip(g->body(), outer);
        outer.pop_back();
        return b;
      }
      case K::exists: {
        std::string sk = names.fresh("sk_" + g->name);
        skolem_of[g->name] = {sk, outer};
        lifted.push_back({g.get(), outer, sk, static_cast<int>(outer.size())});
        return strip(g->body(), outer);
      }
      case K::exists_fn:
      case K::exists_rel:
      case K::exists_skolem:
      case K::exists_real: {
        if (!outer.empty() && (g->kind == K::exists_fn || g->kind == K::exists_real) && g->range == Range::dist)
          throw transform_error("distribution quantifier " + g->name + " under a universal quantifier");
        int ar = g->kind == K::exists_real ? 0 : g->arity;
        lifted.push_back({g.get(), outer, g->name, ar + static_cast<int>(outer.size())});
        if (!outer.empty()) raise[g->name] = outer;
        return strip(g->body(), outer);
      }
      case K::and_:
      case K::or_: {
        std::vector<FormulaPtr> kids;
        for (const auto& k : g->kids) kids.push_back(strip(k, outer));
        return fm::with_kids(*g, std::move(kids));
      }
      default: return g;
    }
  };
  std::vector<std::string> outer;
  FormulaPtr matrix = strip(f, outer);

  // Apply Skolem substitution and arity raising to the matrix.
  auto prefix_vars = [](const std::vector<std::string>& vs, std::vector<FoTerm> rest) {
    auto out = fo_vars(vs);
    out.insert(out.end(), rest.begin(), rest.end());
    return out;
  };
  FormulaMap m;
  m.fo = [&](FoTerm t) {
    if (t.kind == FoTerm::Kind::var)
      if (auto it = skolem_of.find(t.name); it != skolem_of.end())
        return FoTerm::skolem(it->second.first, fo_vars(it->second.second));
    if (t.kind == FoTerm::Kind::skolem)
      if (auto it = raise.find(t.name); it != raise.end()) t.args = prefix_vars(it->second, t.args);
    return t;
  };
  m.term = [&](TermPtr t) -> TermPtr {
    auto it = raise.find(t->name);
    if (it == raise.end()) return t;
    if (t->kind == Term::Kind::var) return term::app(t->name, fo_vars(it->second));
    if (t->kind == Term::Kind::app) return term::app(t->name, prefix_vars(it->second, t->args));
    return t;
  };
  m.node = [&](FormulaPtr g) -> FormulaPtr {
    if (g->kind != K::rel && g->kind != K::nrel) return g;
    auto it = raise.find(g->name);
    if (it == raise.end()) return g;
    return fm::rel(g->name, prefix_vars(it->second, g->args), g->kind == K::rel);
  };
  matrix = to_dnf(map_formula(matrix, m));

  FormulaPtr out = fm::forall(universals, matrix);
  for (auto it = lifted.rbegin(); it != lifted.rend(); ++it) {
    const Formula& q = *it->node;
    bool raised = !it->outer.empty();
    switch (q.kind) {
      case K::exists: out = fm::exists_skolem(it->name, it->arity, out); break;
      case K::exists_real:
        out = raised ? fm::exists_fn(it->name, it->arity, q.range, out) : fm::exists_real(it->name, q.range, out);
        break;
      case K::exists_fn: out = fm::exists_fn(it->name, it->arity, q.range, out); break;
      case K::exists_rel: out = fm::exists_rel(it->name, it->arity, out); break;
      case K::exists_skolem: out = fm::exists_skolem(it->name, it->arity, out); break;
      default: break;
    }
  }

  TransformResult res;
  res.formula = out;
  res.notes.push_back("DNF disjuncts: " + std::to_string(matrix->kind == K::or_ ? matrix->kids.size() : 1));
  int n = s ? s->domain.size : 1;

  // forward: walk the input, choosing the first satisfying element for each
  // first-order existential and copying second-order witnesses per context.
  res.forward = [=](const Environment& env) {
    Environment out_env = env;
    std::map<const Formula*, std::string> out_name;
    for (const auto& l : lifted) out_name[l.node] = l.name;
    std::function<void(const FormulaPtr&, Environment&, Tuple&, Tuple&)> walk =
        [&](const FormulaPtr& g, Environment& cur, Tuple& ctx, Tuple& uvals) {
          switch (g->kind) {
            case K::forall: {
              for (int a = 0; a < n; ++a) {
                cur.fo[g->name] = a;
                ctx.push_back(a);
                uvals.push_back(a);
                walk(g->body(), cur, ctx, uvals);
                ctx.pop_back();
                uvals.pop_back();
              }
              cur.fo.erase(g->name);
              return;
            }
            case K::exists: {
              int chosen = 0;
              for (int a = 0; a < n; ++a) {
                cur.fo[g->name] = a;
                Tuple c2 = ctx;
                c2.push_back(a);
                bool ok = false;
                try {
                  ok = eval_formula_in_context(g->body(), s, cur, c2);
                } catch (const WitnessError&) {
                }
                if (ok) {
                  chosen = a;
                  break;
                }
              }
              out_env.skolems[out_name.at(g.get())][uvals] = chosen;
              cur.fo[g->name] = chosen;
              ctx.push_back(chosen);
              walk(g->body(), cur, ctx, uvals);
              ctx.pop_back();
              cur.fo.erase(g->name);
              return;
            }
            case K::exists_fn:
            case K::exists_real:
            case K::exists_rel:
            case K::exists_skolem: {
              std::string src = original_name(g->name);
              std::string key = scoped_name(src, ctx);
              std::string local = scoped_name(g->name, ctx);
              const std::string& dst = out_name.at(g.get());
              bool raised = !uvals.empty();
              auto pre = [&](const Tuple& t) {
                Tuple r = uvals;
                r.insert(r.end(), t.begin(), t.end());
                return r;
              };
              if (g->kind == K::exists_real) {
                auto it = env.reals.count(key) ? env.reals.find(key) : env.reals.find(src);
                ExactScalar v = it != env.reals.end() ? it->second : ExactScalar(0);
                if (raised) {
                  auto& w = out_env.functions[dst];
                  w.arity = static_cast<int>(uvals.size());
                  w.set(uvals, v);
                } else {
                  out_env.reals[dst] = v;
                }
                cur.reals[local] = v;
              } else if (g->kind == K::exists_fn) {
                auto it = env.functions.count(key) ? env.functions.find(key) : env.functions.find(src);
                WeightTable w0(g->arity);
                if (it != env.functions.end()) w0 = it->second;
                else
                  for (const auto& t : FiniteDomain(n).tuples(g->arity))
                    w0.set(t, g->range == Range::dist ? ExactScalar(1) / ExactScalar(static_cast<long>(FiniteDomain(n).tuple_count(g->arity))) : ExactScalar(0));
                auto& w = out_env.functions[dst];
                w.arity = static_cast<int>(uvals.size()) + g->arity;
                for (const auto& [t, v] : w0.values) w.set(pre(t), v);
                cur.functions[local] = w0;
              } else if (g->kind == K::exists_rel) {
                auto it = env.relations.count(key) ? env.relations.find(key) : env.relations.find(src);
                RelationTable r0{g->arity, {}};
                if (it != env.relations.end()) r0 = it->second;
                auto& r = out_env.relations[dst];
                r.arity = static_cast<int>(uvals.size()) + g->arity;
                for (const auto& t : r0.tuples) r.tuples.insert(pre(t));
                cur.relations[local] = r0;
              } else {
                auto it = env.skolems.count(key) ? env.skolems.find(key) : env.skolems.find(src);
                std::map<Tuple, int> g0;
                if (it != env.skolems.end()) g0 = it->second;
                else
                  for (const auto& t : FiniteDomain(n).tuples(g->arity)) g0[t] = 0;
                auto& gg = out_env.skolems[dst];
                for (const auto& [t, v] : g0) gg[pre(t)] = v;
                cur.skolems[local] = g0;
              }
              walk(g->body(), cur, ctx, uvals);
              return;
            }
            case K::and_:
            case K::or_:
              for (const auto& k : g->kids) walk(k, cur, ctx, uvals);
              return;
            default: return;
          }
        };
    // The renamed input is evaluated against `cur`, which carries the
    // witnesses under their renamed keys.
    Environment cur = env;
    auto rekey = [&](auto& dst, const auto& src) {
      for (const auto& [nn, old] : renamed)
        for (const auto& [k, v] : src)
          if (k == old || k.rfind(old + "@", 0) == 0) dst[nn + k.substr(old.size())] = v;
    };
    rekey(cur.reals, env.reals);
    rekey(cur.functions, env.functions);
    rekey(cur.relations, env.relations);
    rekey(cur.skolems, env.skolems);
    auto drop = [](auto& mp, const std::string& name) {
      for (auto it = mp.begin(); it != mp.end();)
        it = (it->first == name || it->first.rfind(name + "@", 0) == 0) ? mp.erase(it) : std::next(it);
    };
    for (const auto& l : lifted) {
      std::string src = original_name(l.node->name);
      drop(out_env.reals, src);
      drop(out_env.functions, src);
      drop(out_env.relations, src);
      drop(out_env.skolems, src);
    }
    Tuple ctx, uvals;
    walk(f, cur, ctx, uvals);
    return out_env;
  };

  // backward: unfold raised tables into per-context witnesses.
  res.backward = [=](const Environment& env) {
    Environment out_env = env;
    std::map<const Formula*, std::string> out_name;
    for (const auto& l : lifted) out_name[l.node] = l.name;
    for (const auto& l : lifted) {
      out_env.functions.erase(l.name);
      out_env.reals.erase(l.name);
      out_env.relations.erase(l.name);
      out_env.skolems.erase(l.name);
    }
    std::function<void(const FormulaPtr&, Tuple&, Tuple&)> walk = [&](const FormulaPtr& g, Tuple& ctx, Tuple& uvals) {
      switch (g->kind) {
        case K::forall:
          for (int a = 0; a < n; ++a) {
            ctx.push_back(a);
            uvals.push_back(a);
            walk(g->body(), ctx, uvals);
            ctx.pop_back();
            uvals.pop_back();
          }
          return;
        case K::exists:
          // Every element gets witnesses: evaluation may visit elements before the Skolem choice.
          for (int a = 0; a < n; ++a) {
            ctx.push_back(a);
            walk(g->body(), ctx, uvals);
            ctx.pop_back();
          }
          return;
        case K::exists_fn:
        case K::exists_real:
        case K::exists_rel:
        case K::exists_skolem: {
          std::string key = scoped_name(original_name(g->name), ctx);
          const std::string& src = out_name.at(g.get());
          bool raised = !uvals.empty();
          auto strip_prefix = [&](const Tuple& t) -> std::optional<Tuple> {
            if (t.size() < uvals.size() || !std::equal(uvals.begin(), uvals.end(), t.begin())) return std::nullopt;
            return Tuple(t.begin() + static_cast<long>(uvals.size()), t.end());
          };
          if (g->kind == K::exists_real) {
            out_env.reals[key] = raised ? env.functions.at(src).at(uvals) : env.reals.at(src);
          } else if (g->kind == K::exists_fn) {
            WeightTable w(g->arity);
            for (const auto& [t, v] : env.functions.at(src).values)
              if (auto r = strip_prefix(t)) w.set(*r, v);
            out_env.functions[key] = std::move(w);
          } else if (g->kind == K::exists_rel) {
            RelationTable r{g->arity, {}};
            if (auto it = env.relations.find(src); it != env.relations.end())
              for (const auto& t : it->second.tuples)
                if (auto x = strip_prefix(t)) r.tuples.insert(*x);
            out_env.relations[key] = std::move(r);
          } else {
            std::map<Tuple, int> gg;
            for (const auto& [t, v] : env.skolems.at(src))
              if (auto x = strip_prefix(t)) gg[*x] = v;
            out_env.skolems[key] = std::move(gg);
          }
          walk(g->body(), ctx, uvals);
          return;
        }
        case K::and_:
        case K::or_:
          for (const auto& k : g->kids) walk(k, ctx, uvals);
          return;
        default: return;
      }
    };
    Tuple ctx, uvals;
    walk(f, ctx, uvals);
    return out_env;
  };
  return res;
}

// ---------------------------------------------------------------------------
// [-1,1] -> [0,1]: magnitudes plus sign functions.

struct SignEntry {
  std::string name;               // sign symbol
  int arity = 0;                  // 0: guarded real variable, else unit function
  std::vector<std::string> vars;  // variables of `value`
  TermPtr value;                  // the signed quantity, over the input's symbols
};

struct SignedToUnitResult : TransformResult {
  std::vector<SignEntry> signs;
  struct AtomInfo {
    std::size_t monomials = 0;  // l + m
    std::size_t disjuncts = 0;
  };
  std::vector<AtomInfo> atoms;
};

namespace detail {

class SignPass {
 public:
  SignPass(const FormulaPtr& f, const RStructure* s) : s_(s), names_(f) { run(f); }

  SignedToUnitResult result;

 private:
  using K = Formula::Kind;

  struct Item {
    bool is_const = false;
    ExactScalar c;
    TermPtr factor;  // var/app
  };

  void run(const FormulaPtr& input) {
    // Split the leading second-order prefix.
    std::vector<FormulaPtr> prefix;
    FormulaPtr body = input;
    while (body->kind == K::exists_fn || body->kind == K::exists_real || body->kind == K::exists_rel ||
           body->kind == K::exists_skolem) {
      prefix.push_back(body);
      if (!bound_.insert(body->name).second) throw transform_error("duplicate binder " + body->name);
      if (body->kind == K::exists_fn || body->kind == K::exists_real) {
        if (body->range == Range::sym) sym_[body->name] = body->kind == K::exists_fn ? body->arity : -1;
        else if (body->range == Range::unit) unit_.insert(body->name);
        else throw transform_error("range " + std::string(range_symbol(body->range)) + " of " + body->name +
                                   " is neither [-1,1] nor [0,1]");
      }
      body = body->body();
    }
    visit_formula(body, [&](const Formula& g) {
      if (g.kind == K::exists_fn || g.kind == K::exists_real || g.kind == K::exists_rel || g.kind == K::exists_skolem)
        throw transform_error("second-order quantifier " + g.name + " outside the leading prefix; normalize first");
      if (g.kind == K::natom) throw transform_error("non-loose input: negated numerical atom");
    });
    for (const auto& [name, ar] : sym_) {
      std::string g = names_.fresh("sg_" + name);
      sym_sign_[name] = g;
      int arity = ar < 0 ? 0 : ar;
      std::vector<std::string> vs;
      for (int i = 0; i < arity; ++i) vs.push_back(names_.fresh("y"));
      TermPtr value = ar < 0 ? term::var(name) : term::app(name, vs);
      register_sign(g, arity, vs, value);
      TermPtr gt = arity == 0 ? term::var(g) : term::app(g, vs);
      theta_.push_back(fm::forall(vs, binary(gt)));
    }

    FormulaMap m;
    m.node = [&](FormulaPtr g) -> FormulaPtr { return g->kind == K::atom ? translate_atom(*g) : g; };
    FormulaPtr body2 = map_formula(body, m);

    std::vector<FormulaPtr> conj = theta_;
    conj.push_back(body2);
    FormulaPtr out = fm::conj(std::move(conj));
    for (auto it = prefix.rbegin(); it != prefix.rend(); ++it) {
      const Formula& q = **it;
      if (q.kind == K::exists_fn) out = fm::exists_fn(q.name, q.arity, Range::unit, out);
      else if (q.kind == K::exists_real) out = fm::exists_real(q.name, Range::unit, out);
      else out = fm::with_kids(q, {out});
    }
    for (auto it = result.signs.rbegin(); it != result.signs.rend(); ++it)
      out = it->arity == 0 ? fm::exists01(it->name, out) : fm::exists_fn(it->name, it->arity, Range::unit, out);
    result.formula = out;

    std::size_t max_d = 0;
    for (const auto& a : result.atoms) max_d = std::max(max_d, a.disjuncts);
    result.notes.push_back("sign symbols: " + std::to_string(result.signs.size()));
    result.notes.push_back("max disjuncts per atom: " + std::to_string(max_d));

    auto sym = sym_;
    auto sym_sign = sym_sign_;
    auto signs = result.signs;
    int n = s_ ? s_->domain.size : 1;
    const RStructure* s = s_;
    result.forward = [=](const Environment& env) {
      Environment out_env = env;
      FiniteDomain d(n);
      for (const auto& e : signs) {
        if (e.arity == 0) {
          out_env.reals[e.name] = eval_term(e.value, s, env).sign() >= 0 ? ExactScalar(1) : ExactScalar(0);
          continue;
        }
        WeightTable w(e.arity);
        Environment local = env;
        for (const auto& t : d.tuples(e.arity)) {
          for (std::size_t i = 0; i < e.vars.size(); ++i) local.fo[e.vars[i]] = t[i];
          w.set(t, eval_term(e.value, s, local).sign() >= 0 ? ExactScalar(1) : ExactScalar(0));
        }
        out_env.functions[e.name] = std::move(w);
      }
      for (const auto& [name, ar] : sym) {
        if (ar < 0) {
          auto it = out_env.reals.find(name);
          if (it != out_env.reals.end()) it->second = it->second.abs();
        } else if (auto it = out_env.functions.find(name); it != out_env.functions.end()) {
          for (auto& [t, v] : it->second.values) v = v.abs();
        }
      }
      return out_env;
    };
    result.backward = [=](const Environment& env) {
      Environment out_env = env;
      for (const auto& [name, ar] : sym) {
        const std::string& g = sym_sign.at(name);
        if (ar < 0) {
          if (env.reals.at(g) == ExactScalar(0)) out_env.reals[name] = -env.reals.at(name);
        } else {
          auto& w = out_env.functions.at(name);
          for (auto& [t, v] : w.values) {
            const ExactScalar& sg = ar == 0 ? env.reals.at(g) : env.functions.at(g).at(t);
            if (sg == ExactScalar(0)) v = -v;
          }
        }
      }
      for (const auto& e : signs) {
        out_env.reals.erase(e.name);
        out_env.functions.erase(e.name);
      }
      return out_env;
    };
  }

  static FormulaPtr binary(const TermPtr& g) {
    return fm::disj({fm::equal(g, term::constant(0)), fm::equal(g, term::constant(1))});
  }
  static FormulaPtr is(const TermPtr& g, int v) { return fm::equal(g, term::constant(v)); }

  void register_sign(const std::string& name, int arity, std::vector<std::string> vars, TermPtr value) {
    result.signs.push_back({name, arity, std::move(vars), std::move(value)});
  }

  enum class Cls { signed_, verbatim };

  Cls classify(const Monomial& m) const {
    bool has_sym = false, has_free = false;
    for (const auto& f : m.factors) {
      if (sym_.count(f->name)) has_sym = true;
      else if (!unit_.count(f->name)) has_free = true;
    }
    if (has_sym && has_free)
      throw transform_error("monomial mixes a [-1,1] symbol with an unbounded symbol: " + print_term(monomial_term(m)));
    return has_free ? Cls::verbatim : Cls::signed_;
  }

  std::vector<Item> items_of(const Monomial& m) const {
    std::vector<Item> items;
    if (m.coef != ExactScalar(1) || m.factors.empty()) items.push_back({true, m.coef, nullptr});
    for (const auto& f : m.factors) items.push_back({false, {}, f});
    return items;
  }

  /// Static sign (+1 / -1) when no [-1,1] symbol occurs.
  std::optional<int> static_sign(const std::vector<Item>& items) const {
    int s = 1;
    for (const auto& it : items) {
      if (it.is_const) {
        if (it.c.sign() < 0) s = -s;
      } else if (sym_.count(it.factor->name)) {
        return std::nullopt;
      }
    }
    return s;
  }

  TermPtr constant_sign(const ExactScalar& c) {
    auto key = c.str();
    auto it = const_sign_.find(key);
    if (it != const_sign_.end()) return term::var(it->second);
    std::string base = "sg_c";
    for (char ch : key) base += (ch == '-' ? 'm' : ch == '/' ? '_' : ch);
    std::string g = names_.fresh(base);
    const_sign_[key] = g;
    register_sign(g, 0, {}, term::constant(c));
    theta_.push_back(is(term::var(g), c.sign() >= 0 ? 1 : 0));
    return term::var(g);
  }

  TermPtr item_sign(const Item& it) {
    if (it.is_const) return constant_sign(it.c);
    auto s = sym_sign_.find(it.factor->name);
    if (s == sym_sign_.end()) return term::constant(1);  // [0,1]-ranged factor
    if (it.factor->args.empty()) return term::var(s->second);  // nullary signs are guarded reals
    return term::app(s->second, it.factor->args);
  }

  /// Slots: distinct non-element first-order arguments, by first occurrence.
  static std::vector<FoTerm> slots_of(const std::vector<Item>& items, std::size_t upto) {
    std::vector<FoTerm> slots;
    for (std::size_t i = 0; i < upto; ++i) {
      if (items[i].is_const) continue;
      for (const auto& a : items[i].factor->args)
        if (a.kind != FoTerm::Kind::element && std::find(slots.begin(), slots.end(), a) == slots.end())
          slots.push_back(a);
    }
    return slots;
  }

  static std::string shape_of(const std::vector<Item>& items, std::size_t upto, const std::vector<FoTerm>& slots) {
    std::string s;
    for (std::size_t i = 0; i < upto; ++i) {
      if (i) s += "*";
      if (items[i].is_const) {
        s += items[i].c.str();
        continue;
      }
      s += items[i].factor->name + "(";
      for (const auto& a : items[i].factor->args) {
        if (a.kind == FoTerm::Kind::element) s += "#" + std::to_string(a.element);
        else s += "$" + std::to_string(std::find(slots.begin(), slots.end(), a) - slots.begin());
        s += ",";
      }
      s += ")";
    }
    return s;
  }

  /// Sign term of the full monomial, registering prefix-product signs and
  /// their propagation constraints.
  TermPtr monomial_sign(const std::vector<Item>& items) {
    TermPtr cur = item_sign(items[0]);
    for (std::size_t k = 2; k <= items.size(); ++k) {
      auto slots = slots_of(items, k);
      auto shape = shape_of(items, k, slots);
      auto it = prod_sign_.find(shape);
      std::string g;
      if (it != prod_sign_.end()) {
        g = it->second;
      } else {
        g = names_.fresh("sgp");
        prod_sign_[shape] = g;
        std::vector<std::string> ys;
        for (std::size_t i = 0; i < slots.size(); ++i) ys.push_back(names_.fresh("y"));
        auto inst = [&](const TermPtr& t) {
          FormulaMap m;
          m.fo = [&](FoTerm x) {
            auto p = std::find(slots.begin(), slots.end(), x);
            return p == slots.end() ? x : FoTerm::var(ys[static_cast<std::size_t>(p - slots.begin())]);
          };
          return map_term(t, m);
        };
        // Prefix of length k-1 reuses the sign we just built for it.
        TermPtr prev = inst(cur);
        TermPtr a = inst(item_sign(items[k - 1]));
        TermPtr p = ys.empty() ? term::var(g) : term::app(g, ys);
        std::vector<TermPtr> mags, signed_factors;
        for (std::size_t i = 0; i < k; ++i) {
          if (items[i].is_const) {
            signed_factors.push_back(term::constant(items[i].c));
            continue;
          }
          mags.push_back(inst(items[i].factor));
          signed_factors.push_back(inst(items[i].factor));
        }
        TermPtr mag = term::mul(mags);
        FormulaPtr prop = fm::disj({
            fm::conj({fm::equal(prev, a), is(p, 1)}),
            fm::conj({is(prev, 0), is(a, 1), is(p, 0)}),
            fm::conj({is(prev, 1), is(a, 0), is(p, 0)}),
            fm::conj({fm::equal(mag, term::constant(0)), is(p, 1)}),
        });
        theta_.push_back(fm::forall(ys, fm::conj({binary(p), prop})));
        register_sign(g, static_cast<int>(ys.size()), ys, term::mul(signed_factors));
      }
      std::vector<FoTerm> args(slots.begin(), slots.end());
      cur = args.empty() ? term::var(g) : term::app(g, args);
    }
    return cur;
  }

  static TermPtr magnitude(const Monomial& m) {
    std::vector<TermPtr> xs;
    ExactScalar c = m.coef.abs();
    if (c != ExactScalar(1) || m.factors.empty()) xs.push_back(term::constant(c));
    xs.insert(xs.end(), m.factors.begin(), m.factors.end());
    return term::mul(std::move(xs));
  }

  FormulaPtr translate_atom(const Formula& a) {
    struct Side {
      std::vector<TermPtr> fixed;                        // verbatim / statically placed
      std::vector<std::pair<TermPtr, TermPtr>> dynamic;  // (sign, magnitude)
    };
    Side sides[2];
    std::size_t count = 0;
    for (int side = 0; side < 2; ++side) {
      for (const auto& mono : expand(side == 0 ? a.lhs : a.rhs)) {
        ++count;
        if (classify(mono) == Cls::verbatim) {
          sides[side].fixed.push_back(monomial_term(mono));
          continue;
        }
        auto items = items_of(mono);
        monomial_sign(items);  // registers sign symbols even when the sign is static
        if (auto st = static_sign(items)) {
          sides[*st > 0 ? side : 1 - side].fixed.push_back(magnitude(mono));
          continue;
        }
        sides[side].dynamic.push_back({monomial_sign(items), magnitude(mono)});
      }
    }
    const auto& L = sides[0].dynamic;
    const auto& R = sides[1].dynamic;
    std::size_t total = L.size() + R.size();
    std::vector<FormulaPtr> disjuncts;
    for (std::size_t mask = 0; mask < (std::size_t{1} << total); ++mask) {
      std::vector<FormulaPtr> conds;
      std::vector<TermPtr> lhs = sides[0].fixed, rhs = sides[1].fixed;
      for (std::size_t i = 0; i < total; ++i) {
        bool nonneg = (mask >> i) & 1;
        bool left = i < L.size();
        const auto& [sg, mag] = left ? L[i] : R[i - L.size()];
        conds.push_back(is(sg, nonneg ? 1 : 0));
        ((left == nonneg) ? lhs : rhs).push_back(mag);
      }
      conds.push_back(fm::atom(a.cmp, term::add(lhs), term::add(rhs)));
      disjuncts.push_back(fm::conj(std::move(conds)));
    }
    result.atoms.push_back({count, disjuncts.size()});
    return fm::disj(std::move(disjuncts));
  }

  const RStructure* s_;
  NameSupply names_;
  std::set<std::string> bound_;
  std::map<std::string, int> sym_;  // name -> arity, -1 for real variables
  std::set<std::string> unit_;
  std::map<std::string, std::string> sym_sign_, const_sign_, prod_sign_;
  std::vector<FormulaPtr> theta_;
};

}  // namespace detail

/// Replaces [-1,1]-ranged quantifiers by [0,1]-ranged magnitudes plus sign
/// symbols. Second-order quantifiers must form a leading prefix.
inline SignedToUnitResult signed_to_unit(const FormulaPtr& f, const RStructure* s = nullptr) {
  return detail::SignPass(f, s).result;
}

}  // namespace realogic
