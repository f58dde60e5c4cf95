#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "realogic/eval.hpp"
#include "realogic/formula.hpp"
#include "realogic/structure.hpp"
#include "realogic/transforms.hpp"

namespace realogic {

namespace detail {

/// Enumerates every first-order context of a formula. `visit` runs at each
/// node before its witness is bound and may write witnesses into `env`;
/// returning false prunes the subtree. Witnesses are read with scoped keys.
class ContextWalker {
 public:
  using Visit = std::function<bool(const Formula&, const Tuple&, const Environment&)>;

  ContextWalker(const RStructure* s, Environment& env, Visit visit) : s_(s), env_(env), visit_(std::move(visit)) {}

  void run(const FormulaPtr& f) {
    Environment local = env_;
    Tuple ctx;
    walk(*f, ctx, local);
  }

 private:
  template <class Map>
  static const typename Map::mapped_type* find(const Map& m, const std::string& name, const Tuple& ctx) {
    auto it = m.find(scoped_name(name, ctx));
    if (it == m.end()) it = m.find(name);
    return it == m.end() ? nullptr : &it->second;
  }

  template <class Map>
  void bind(Map Environment::*field, const Formula& f, Tuple& ctx, Environment& local) {
    const auto* w = find(env_.*field, f.name, ctx);
    if (!w) return;
    auto& m = local.*field;
    auto it = m.find(f.name);
    std::optional<typename Map::mapped_type> saved;
    if (it != m.end()) saved = it->second;
    m[f.name] = *w;
    walk(*f.body(), ctx, local);
    if (saved) m[f.name] = *saved;
    else m.erase(f.name);
  }

  void walk(const Formula& f, Tuple& ctx, Environment& local) {
    if (visit_ && !visit_(f, ctx, local)) return;
    using K = Formula::Kind;
    switch (f.kind) {
      case K::and_:
      case K::or_:
        for (const auto& k : f.kids) walk(*k, ctx, local);
        break;
      case K::exists:
      case K::forall: {
        if (!s_) throw transform_error("first-order quantifiers need a finite structure");
        auto it = local.fo.find(f.name);
        std::optional<int> saved;
        if (it != local.fo.end()) saved = it->second;
        for (int a = 0; a < s_->domain.size; ++a) {
          local.fo[f.name] = a;
          ctx.push_back(a);
          walk(*f.body(), ctx, local);
          ctx.pop_back();
        }
        if (saved) local.fo[f.name] = *saved;
        else local.fo.erase(f.name);
        break;
      }
      case K::exists_real: bind(&Environment::reals, f, ctx, local); break;
      case K::exists_fn: bind(&Environment::functions, f, ctx, local); break;
      case K::exists_rel: bind(&Environment::relations, f, ctx, local); break;
      case K::exists_skolem: bind(&Environment::skolems, f, ctx, local); break;
      default: break;
    }
  }

  const RStructure* s_;
  Environment& env_;
  Visit visit_;
};

/// Keys of `m` holding witnesses for `name` (plain or scoped).
template <class Map>
std::vector<std::string> witness_keys(const Map& m, const std::string& name) {
  std::vector<std::string> out;
  for (const auto& [k, v] : m)
    if (k == name || (k.size() > name.size() && k.compare(0, name.size(), name) == 0 && k[name.size()] == '@'))
      out.push_back(k);
  return out;
}

inline std::string key_suffix(const std::string& key, const std::string& name) { return key.substr(name.size()); }

template <class Map>
void erase_witnesses(Map& m, const std::string& name) {
  for (const auto& k : witness_keys(m, name)) m.erase(k);
}

inline ExactScalar power(const ExactScalar& b, long e) {
  ExactScalar r(1);
  for (long i = 0; i < e; ++i) r *= b;
  return r;
}

inline std::vector<std::string> fresh_vars(NameSupply& names, const std::string& base, int k) {
  std::vector<std::string> out;
  for (int i = 0; i < k; ++i) out.push_back(names.fresh(base + std::to_string(i + 1)));
  return out;
}

inline std::vector<FoTerm> concat(std::vector<FoTerm> a, const std::vector<FoTerm>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

inline Tuple concat(Tuple a, const Tuple& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

/// Zero table with `slack` placed on the last tuple; throws when slack < 0.
inline void put_slack(WeightTable& w, const FiniteDomain& d, const Tuple& cell, const std::string& what) {
  ExactScalar slack = ExactScalar(1) - w.sum();
  if (slack < ExactScalar(0)) throw transform_error(what + ": constrained mass exceeds 1");
  w.set(cell, w.at(cell) + slack);
  (void)d;
}

inline WeightTable zero_table(const FiniteDomain& d, int arity) {
  WeightTable w(arity);
  for (const auto& t : d.tuples(arity)) w.set(t, ExactScalar(0));
  return w;
}

inline FoTerm elem(int k) { return FoTerm::elem(k); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Relation quantifiers -> function quantifiers.

enum class RelVariant { zero_one, distribution };

/// ∃X over k-ary relations becomes ∃f_X. zero-one: X(x̄) ↦ f_X(x̄)=1 and
/// ¬X(x̄) ↦ f_X(x̄)=0 with f_X ranging over [0,1]. distribution: f_X is a
/// (k+1)-ary distribution with X(x̄) ↦ f_X(x̄,#1)=u(x̄), ¬X(x̄) ↦ f_X(x̄,#0)=u(x̄),
/// u the uniform k-ary distribution, plus ∀x̄ f_X(x̄,#0)+f_X(x̄,#1)=u(x̄).
inline TransformResult eliminate_relation_quantifiers(const FormulaPtr& input, RelVariant variant,
                                                      const RStructure* s = nullptr) {
  using K = Formula::Kind;
  const bool dist = variant == RelVariant::distribution;
  if (dist && s && s->domain.size < 2) throw transform_error("the distribution variant needs at least two elements");
  NameSupply names(input);
  struct Info {
    std::string rel, fn, uni;
    int arity;
  };
  auto infos = std::make_shared<std::map<std::string, Info>>();  // by fn name
  using Scope = std::map<std::string, Info>;
  std::function<FormulaPtr(const FormulaPtr&, const Scope&)> rw = [&](const FormulaPtr& f, const Scope& scope) -> FormulaPtr {
    switch (f->kind) {
      case K::exists_rel: {
        Info in{f->name, names.fresh("f_" + f->name), dist ? names.fresh("u_" + f->name) : "", f->arity};
        Scope inner = scope;
        inner[f->name] = in;
        (*infos)[in.fn] = in;
        FormulaPtr body = rw(f->body(), inner);
        if (!dist) return fm::exists_fn(in.fn, in.arity, Range::unit, body);
        auto xs = detail::fresh_vars(names, "x", in.arity);
        auto ys = detail::fresh_vars(names, "y", in.arity);
        FormulaPtr uniform = fm::forall(
            xs, fm::forall(ys, fm::equal(term::app(in.uni, fo_vars(xs)), term::app(in.uni, fo_vars(ys)))));
        FormulaPtr tie = fm::forall(
            xs, fm::equal(term::add(term::app(in.fn, detail::concat(fo_vars(xs), {detail::elem(0)})),
                                    term::app(in.fn, detail::concat(fo_vars(xs), {detail::elem(1)}))),
                          term::app(in.uni, fo_vars(xs))));
        return fm::exists_fn(in.uni, in.arity, Range::dist,
                             fm::exists_fn(in.fn, in.arity + 1, Range::dist, fm::conj({uniform, tie, body})));
      }
      case K::rel:
      case K::nrel: {
        auto it = scope.find(f->name);
        if (it == scope.end()) return f;
        const Info& in = it->second;
        bool pos = f->kind == K::rel;
        if (!dist) return fm::equal(term::app(in.fn, f->args), term::constant(ExactScalar(pos ? 1 : 0)));
        return fm::equal(term::app(in.fn, detail::concat(f->args, {detail::elem(pos ? 1 : 0)})),
                         term::app(in.uni, f->args));
      }
      default: {
        if (f->kids.empty()) return f;
        std::vector<FormulaPtr> kids;
        Scope inner = scope;
        if (f->is_quantifier() && f->kind != K::exists_rel) inner.erase(f->name);
        for (const auto& k : f->kids) kids.push_back(rw(k, f->is_quantifier() ? inner : scope));
        return fm::with_kids(*f, std::move(kids));
      }
    }
  };
  TransformResult r;
  r.formula = rw(input, {});
  FormulaPtr out_formula = r.formula;
  r.forward = [infos, dist, s, out_formula](const Environment& in) {
    Environment out = in;
    detail::ContextWalker walker(s, out, [&](const Formula& f, const Tuple& ctx, const Environment&) {
      if (f.kind != Formula::Kind::exists_fn) return true;
      auto it = infos->find(f.name);
      if (dist) {
        it = infos->end();
        for (auto jt = infos->begin(); jt != infos->end(); ++jt)
          if (jt->second.uni == f.name) it = jt;
      }
      if (it == infos->end()) return true;
      const auto& info = it->second;
      auto key = scoped_name(info.rel, ctx);
      auto rt = in.relations.find(key);
      if (rt == in.relations.end()) rt = in.relations.find(info.rel);
      if (rt == in.relations.end()) return false;
      FiniteDomain d = s ? s->domain : FiniteDomain(1);
      if (!dist) {
        WeightTable w(info.arity);
        for (const auto& t : d.tuples(info.arity)) w.set(t, ExactScalar(rt->second.contains(t) ? 1 : 0));
        out.functions[scoped_name(info.fn, ctx)] = w;
        return true;
      }
      if (d.size < 2) throw transform_error("the distribution variant needs at least two elements");
      ExactScalar u = ExactScalar(1) / ExactScalar(static_cast<long>(d.tuple_count(info.arity)));
      WeightTable uw(info.arity), fw = detail::zero_table(d, info.arity + 1);
      for (const auto& t : d.tuples(info.arity)) {
        uw.set(t, u);
        fw.set(detail::concat(t, {rt->second.contains(t) ? 1 : 0}), u);
      }
      out.functions[scoped_name(info.uni, ctx)] = uw;
      out.functions[scoped_name(info.fn, ctx)] = fw;
      return true;
    });
    walker.run(out_formula);
    for (const auto& [fn, info] : *infos) detail::erase_witnesses(out.relations, info.rel);
    return out;
  };
  r.backward = [infos, dist](const Environment& in) {
    Environment out = in;
    for (const auto& [fn, info] : *infos) {
      for (const auto& key : detail::witness_keys(in.functions, info.fn)) {
        const WeightTable& w = in.functions.at(key);
        RelationTable rel{info.arity, {}};
        for (const auto& [t, v] : w.values) {
          if (!dist && v == ExactScalar(1)) rel.tuples.insert(t);
          if (dist && t.back() == 1 && v > ExactScalar(0)) rel.tuples.insert(Tuple(t.begin(), t.end() - 1));
        }
        out.relations[info.rel + detail::key_suffix(key, info.fn)] = rel;
      }
      detail::erase_witnesses(out.functions, info.fn);
      if (dist) detail::erase_witnesses(out.functions, info.uni);
    }
    return out;
  };
  return r;
}

// ---------------------------------------------------------------------------
// Strict and negated atoms -> loose atoms.

/// i<j becomes ∃r∃n∃m(1≤n ∧ 1≤m ∧ n=r×m ∧ i+r=j) over the reals; negated
/// atoms are first turned into strict or non-strict ones with swapped sides.
inline TransformResult strict_to_loose(const FormulaPtr& input, const RStructure* s = nullptr) {
  using K = Formula::Kind;
  NameSupply names(input);
  struct Gadget {
    std::string r, n, m;
    TermPtr i, j;
  };
  auto gadgets = std::make_shared<std::map<std::string, Gadget>>();
  auto one = term::constant(ExactScalar(1));
  auto gadget = [&](const TermPtr& i, const TermPtr& j) {
    Gadget g{names.fresh("r"), names.fresh("n"), names.fresh("m"), i, j};
    (*gadgets)[g.r] = g;
    auto r = term::var(g.r), n = term::var(g.n), m = term::var(g.m);
    return fm::exists_real(
        g.r, Range::real,
        fm::exists_real(g.n, Range::real,
                        fm::exists_real(g.m, Range::real,
                                        fm::conj({fm::le(one, n), fm::le(one, m), fm::equal(n, term::mul(r, m)),
                                                  fm::equal(term::add(i, r), j)}))));
  };
  bool restricted = false;
  visit_formula(input, [&](const Formula& f) {
    if ((f.kind == K::exists_real || f.kind == K::exists_fn) && f.range != Range::real) restricted = true;
  });
  std::function<FormulaPtr(const FormulaPtr&)> rw = [&](const FormulaPtr& f) -> FormulaPtr {
    if (f->kind == K::atom && f->cmp == Cmp::lt) return gadget(f->lhs, f->rhs);
    if (f->kind == K::natom) {
      switch (f->cmp) {
        case Cmp::le: return gadget(f->rhs, f->lhs);
        case Cmp::lt: return fm::le(f->rhs, f->lhs);
        case Cmp::eq: return fm::disj({gadget(f->lhs, f->rhs), gadget(f->rhs, f->lhs)});
      }
    }
    if (f->kids.empty()) return f;
    std::vector<FormulaPtr> kids;
    for (const auto& k : f->kids) kids.push_back(rw(k));
    return fm::with_kids(*f, std::move(kids));
  };
  TransformResult r;
  r.formula = rw(input);
  if (!gadgets->empty() && restricted)
    throw transform_error("strict-to-loose gadget needs unbounded ranges; input has [0,1]- or [-1,1]-ranged quantifiers");
  r.notes.push_back("gadgets: " + std::to_string(gadgets->size()));
  FormulaPtr out_formula = r.formula;
  r.forward = [gadgets, s, out_formula](const Environment& in) {
    Environment out = in;
    detail::ContextWalker walker(s, out, [&](const Formula& f, const Tuple& ctx, const Environment& local) {
      if (f.kind != Formula::Kind::exists_real) return true;
      auto it = gadgets->find(f.name);
      if (it == gadgets->end()) return true;
      const Gadget& g = it->second;
      ExactScalar iv, jv;
      try {
        iv = eval_term(g.i, s, local);
        jv = eval_term(g.j, s, local);
      } catch (const WitnessError&) {
        return false;
      }
      if (!(iv < jv)) {
        // Gadget is false here; zero witnesses keep sibling disjuncts evaluable.
        for (const auto* v : {&g.r, &g.n, &g.m}) out.reals[scoped_name(*v, ctx)] = ExactScalar(0);
        return true;
      }
      ExactScalar rv = jv - iv;
      bool small = rv < ExactScalar(1);
      out.reals[scoped_name(g.r, ctx)] = rv;
      out.reals[scoped_name(g.n, ctx)] = small ? ExactScalar(1) : rv;
      out.reals[scoped_name(g.m, ctx)] = small ? ExactScalar(1) / rv : ExactScalar(1);
      return true;
    });
    walker.run(out_formula);
    return out;
  };
  r.backward = [gadgets](const Environment& in) {
    Environment out = in;
    for (const auto& [name, g] : *gadgets)
      for (const auto* v : {&g.r, &g.n, &g.m}) detail::erase_witnesses(out.reals, *v);
    return out;
  };
  return r;
}

// ---------------------------------------------------------------------------
// Numeric erasure.

/// Drops function and real quantifiers and replaces every numerical atom by
/// ∃x x=x. Truth-preserving for loose formulas without nonzero constants over
/// function-free vocabularies with ranges containing 0.
inline TransformResult erase_numeric(const FormulaPtr& input, const RStructure* s = nullptr) {
  using K = Formula::Kind;
  NameSupply names(input);
  struct Dropped {
    std::string name;
    int arity;
    bool real;
  };
  auto dropped = std::make_shared<std::vector<Dropped>>();
  TransformResult r;
  visit_formula(input, [&](const Formula& f) {
    if (f.kind == K::natom) throw transform_error("negated numerical atom; input is not loose");
    if ((f.kind == K::exists_fn || f.kind == K::exists_real) && f.range == Range::dist)
      throw transform_error("distribution range does not contain the all-zero witness");
    if (f.is_numeric_atom())
      for (const auto* side : {&f.lhs, &f.rhs})
        visit_term(*side, [&](const Term& t) {
          if (t.kind == Term::Kind::constant && !t.value.is_zero())
            throw transform_error("nonzero constant " + t.value.str() + " blocks numeric erasure");
        });
  });
  if (!free_function_symbols(input).empty()) r.notes.push_back("vocabulary has function symbols; erasure may change truth");
  std::function<FormulaPtr(const FormulaPtr&)> rw = [&](const FormulaPtr& f) -> FormulaPtr {
    if (f->kind == K::exists_fn || f->kind == K::exists_real) {
      dropped->push_back({f->name, f->arity, f->kind == K::exists_real});
      return rw(f->body());
    }
    if (f->kind == K::atom) {
      std::string x = names.fresh("x");
      return fm::exists(x, fm::eq(FoTerm::var(x), FoTerm::var(x)));
    }
    if (f->kids.empty()) return f;
    std::vector<FormulaPtr> kids;
    for (const auto& k : f->kids) kids.push_back(rw(k));
    return fm::with_kids(*f, std::move(kids));
  };
  r.formula = rw(input);
  r.forward = [dropped](const Environment& in) {
    Environment out = in;
    for (const auto& d : *dropped) {
      if (d.real) detail::erase_witnesses(out.reals, d.name);
      else detail::erase_witnesses(out.functions, d.name);
    }
    return out;
  };
  r.backward = [dropped, s](const Environment& in) {
    Environment out = in;
    for (const auto& d : *dropped) {
      if (d.real) {
        out.reals[d.name] = ExactScalar(0);
      } else {
        if (!s && d.arity > 0) throw transform_error("zero witness for " + d.name + " needs the domain");
        out.functions[d.name] = detail::zero_table(s ? s->domain : FiniteDomain(1), d.arity);
      }
    }
    return out;
  };
  return r;
}

// ---------------------------------------------------------------------------
// SUM elimination by halving.

/// One normal-form SUM atom f(ū) = SUM_x̄ f'(ū, x̄).
struct SumAtom {
  std::string f, fprime;
  std::vector<FoTerm> u;
  int m = 0;  // |x̄|
};

/// Checks ∃f̄ ∀x̄ θ with θ quantifier-free and SUM only in atoms f(ū)=SUM_x̄ f'(ū,x̄).
inline std::optional<std::string> check_sum_normal_form(const FormulaPtr& f) {
  using K = Formula::Kind;
  FormulaPtr cur = f;
  while (cur->kind == K::exists_fn) cur = cur->body();
  while (cur->kind == K::forall) cur = cur->body();
  std::optional<std::string> err;
  visit_formula(cur, [&](const Formula& g) {
    if (err) return;
    if (g.is_quantifier()) {
      err = "quantifier " + g.name + " inside the matrix";
      return;
    }
    if (!g.is_numeric_atom()) return;
    bool has_sum = false;
    for (const auto* side : {&g.lhs, &g.rhs})
      visit_term(*side, [&](const Term& t) { has_sum = has_sum || t.kind == Term::Kind::sum; });
    if (!has_sum) return;
    if (g.kind != K::atom || g.cmp != Cmp::eq) {
      err = "SUM outside a positive identity";
      return;
    }
    const Term* app = g.lhs->kind == Term::Kind::sum ? g.rhs.get() : g.lhs.get();
    const Term* sum = g.lhs->kind == Term::Kind::sum ? g.lhs.get() : g.rhs.get();
    if (sum->kind != Term::Kind::sum || app->kind != Term::Kind::app) {
      err = "SUM atom not of the form f(u) = SUM_x f'(u,x)";
      return;
    }
    const Term& body = *sum->kids[0];
    if (body.kind != Term::Kind::app || body.name == app->name || sum->bound.empty() ||
        body.args.size() != app->args.size() + sum->bound.size()) {
      err = "SUM body is not f'(u,x) with f' distinct from f";
      return;
    }
    for (std::size_t i = 0; i < app->args.size(); ++i)
      if (!(body.args[i] == app->args[i])) err = "SUM body arguments do not start with u";
    for (std::size_t i = 0; i < sum->bound.size(); ++i)
      if (!(body.args[app->args.size() + i] == FoTerm::var(sum->bound[i])))
        err = "SUM body arguments do not end with the bound variables";
  });
  return err;
}

namespace detail {

/// g (arity 2m) and h (arity m+1) witnessing f(u) = Σ f'(u,·) by halving;
/// fp lists f'(u, x̄) in index order. Slack goes to the last unconstrained cell.
inline std::pair<WeightTable, WeightTable> halving_tables(const std::vector<ExactScalar>& fp, const ExactScalar& fu,
                                                          const FiniteDomain& d, int m) {
  auto ts = d.tuples(m);
  const std::size_t N = ts.size();
  if (N < 2 || d.size < 2) throw transform_error("SUM elimination needs |A|^m >= 2 and |A| >= 2");
  WeightTable g = zero_table(d, 2 * m), h = zero_table(d, m + 1);
  ExactScalar partial, scale(1);
  for (std::size_t j = 0; j < N; ++j) {
    scale /= ExactScalar(2);
    partial += fp[j];
    g.set(concat(ts[j], ts[j]), scale * partial);
    for (std::size_t i = j + 1; i < N; ++i) g.set(concat(ts[i], ts[j]), scale * fp[i]);
    h.set(concat(ts[j], {0}), scale * fu);
  }
  put_slack(g, d, concat(ts[N - 2], ts[N - 1]), "halving table g");
  put_slack(h, d, concat(ts[N - 1], {d.size - 1}), "halving table h");
  return {g, h};
}

}  // namespace detail

inline TransformResult eliminate_sum(const FormulaPtr& input, const RStructure* s = nullptr) {
  using K = Formula::Kind;
  if (auto err = check_sum_normal_form(input)) throw transform_error("input not in normal form: " + *err);
  NameSupply names(input);
  struct Info {
    std::string g, h;
    SumAtom atom;
  };
  auto infos = std::make_shared<std::map<std::string, Info>>();  // by g
  auto c = detail::elem(0);
  auto replace = [&](const Formula& a) -> FormulaPtr {
    const Term& app = a.lhs->kind == Term::Kind::sum ? *a.rhs : *a.lhs;
    const Term& sum = a.lhs->kind == Term::Kind::sum ? *a.lhs : *a.rhs;
    const Term& body = *sum.kids[0];
    SumAtom sa{app.name, body.name, app.args, static_cast<int>(sum.bound.size())};
    const int m = sa.m;
    Info in{names.fresh("g"), names.fresh("h"), sa};
    (*infos)[in.g] = in;
    auto xs = fo_vars(detail::fresh_vars(names, "x", m));
    auto ys = fo_vars(detail::fresh_vars(names, "y", m));
    auto zs = fo_vars(detail::fresh_vars(names, "z", m));
    auto names_of = [](const std::vector<FoTerm>& v) {
      std::vector<std::string> o;
      for (const auto& t : v) o.push_back(t.name);
      return o;
    };
    auto G = [&](const std::vector<FoTerm>& p, const std::vector<FoTerm>& q) {
      return term::app(in.g, detail::concat(p, q));
    };
    auto H = [&](const std::vector<FoTerm>& p) { return term::app(in.h, detail::concat(p, {c})); };
    auto twice = [](const TermPtr& t) { return term::add(t, t); };
    auto rel = [](const std::string& r, std::vector<FoTerm> args) { return fm::rel(r, std::move(args), false); };
    auto fp = term::app(sa.fprime, detail::concat(sa.u, xs));
    auto fu = term::app(sa.f, sa.u);
    auto X = names_of(xs), Y = names_of(ys), Z = names_of(zs);
    std::vector<FormulaPtr> cs{
        fm::forall(X, fm::forall(Y, fm::disj({rel(OrderNames::min(m), ys), fm::equal(twice(G(xs, ys)), fp)}))),
        fm::forall(Y, fm::forall(Z, fm::disj({rel(OrderNames::succ(m), detail::concat(ys, zs)),
                                              fm::equal(twice(G(zs, zs)), term::add(G(zs, ys), G(ys, ys)))}))),
        fm::forall(X, fm::forall(Y, fm::forall(Z, fm::disj({rel(OrderNames::succ(m), detail::concat(ys, zs)),
                                                            rel(OrderNames::lt(m), detail::concat(zs, xs)),
                                                            fm::equal(twice(G(xs, zs)), G(xs, ys))})))),
        fm::forall(Y, fm::disj({rel(OrderNames::min(m), ys), fm::equal(twice(H(ys)), fu)})),
        fm::forall(Y, fm::forall(Z, fm::disj({rel(OrderNames::succ(m), detail::concat(ys, zs)),
                                              fm::equal(twice(H(zs)), H(ys))}))),
        fm::forall(Y, fm::disj({rel(OrderNames::max(m), ys), fm::equal(G(ys, ys), H(ys))})),
    };
    return fm::exists_fn(in.g, 2 * m, Range::dist, fm::exists_fn(in.h, m + 1, Range::dist, fm::conj(std::move(cs))));
  };
  std::function<FormulaPtr(const FormulaPtr&)> rw = [&](const FormulaPtr& f) -> FormulaPtr {
    if (f->kind == K::atom) {
      bool has_sum = f->lhs->kind == Term::Kind::sum || f->rhs->kind == Term::Kind::sum;
      return has_sum ? replace(*f) : f;
    }
    if (f->kids.empty()) return f;
    std::vector<FormulaPtr> kids;
    for (const auto& k : f->kids) kids.push_back(rw(k));
    return fm::with_kids(*f, std::move(kids));
  };
  TransformResult r;
  r.formula = rw(input);
  r.notes.push_back("SUM atoms: " + std::to_string(infos->size()));
  FormulaPtr out_formula = r.formula;
  r.forward = [infos, s, out_formula](const Environment& in) {
    if (!s) throw transform_error("SUM elimination transport needs the structure");
    Environment out = in;
    detail::ContextWalker walker(s, out, [&](const Formula& f, const Tuple& ctx, const Environment& local) {
      if (f.kind != Formula::Kind::exists_fn) return true;
      auto it = infos->find(f.name);
      if (it == infos->end()) return true;
      const SumAtom& sa = it->second.atom;
      std::vector<ExactScalar> fp;
      ExactScalar fu;
      try {
        for (const auto& t : s->domain.tuples(sa.m)) {
          std::vector<FoTerm> args = sa.u;
          for (int a : t) args.push_back(detail::elem(a));
          fp.push_back(eval_term(term::app(sa.fprime, args), s, local));
        }
        fu = eval_term(term::app(sa.f, sa.u), s, local);
      } catch (const WitnessError&) {
        return false;
      }
      auto [g, h] = detail::halving_tables(fp, fu, s->domain, sa.m);
      out.functions[scoped_name(it->second.g, ctx)] = g;
      out.functions[scoped_name(it->second.h, ctx)] = h;
      return true;
    });
    walker.run(out_formula);
    return out;
  };
  r.backward = [infos](const Environment& in) {
    Environment out = in;
    for (const auto& [g, info] : *infos) {
      detail::erase_witnesses(out.functions, info.g);
      detail::erase_witnesses(out.functions, info.h);
    }
    return out;
  };
  return r;
}

// ---------------------------------------------------------------------------
// Distribution constraints with [0,1]-valued functions.

/// ∃g (g(min)=f(min) ∧ ∀x̄ȳ(S(x̄,ȳ) → g(ȳ)=g(x̄)+f(ȳ)) ∧ g(max)=1) for k-ary f.
inline FormulaPtr express_distribution_constraint(const std::string& f, int arity, int domain_size, NameSupply& names,
                                                  std::string* cumulative = nullptr) {
  auto one = term::constant(ExactScalar(1));
  if (domain_size == 1 || arity == 0)
    return fm::equal(term::app(f, std::vector<FoTerm>(static_cast<std::size_t>(arity), detail::elem(0))), one);
  std::string g = names.fresh("cum_" + f);
  if (cumulative) *cumulative = g;
  auto X = detail::fresh_vars(names, "x", arity), Y = detail::fresh_vars(names, "y", arity);
  auto xs = fo_vars(X), ys = fo_vars(Y);
  const int k = arity;
  return fm::exists_fn(
      g, k, Range::unit,
      fm::conj({
          fm::forall(X, fm::disj({fm::rel(OrderNames::min(k), xs, false), fm::equal(term::app(g, xs), term::app(f, xs))})),
          fm::forall(X, fm::forall(Y, fm::disj({fm::rel(OrderNames::succ(k), detail::concat(xs, ys), false),
                                                fm::equal(term::app(g, ys),
                                                          term::add(term::app(g, xs), term::app(f, ys)))}))),
          fm::forall(X, fm::disj({fm::rel(OrderNames::max(k), xs, false), fm::equal(term::app(g, xs), one)})),
      }));
}

inline FormulaPtr express_distribution_constraint(const std::string& f, int arity, int domain_size) {
  NameSupply names;
  names.reserve(f);
  return express_distribution_constraint(f, arity, domain_size, names);
}

/// Cumulative sums of f in index order.
inline WeightTable cumulative_witness(const WeightTable& f, const FiniteDomain& d) {
  WeightTable g(f.arity);
  ExactScalar acc;
  for (const auto& t : d.tuples(f.arity)) {
    acc += f.at(t);
    g.set(t, acc);
  }
  return g;
}

/// Every distribution quantifier becomes a [0,1] quantifier guarded by the
/// cumulative-sum constraint.
inline TransformResult distribution_to_unit(const FormulaPtr& input, const RStructure* s) {
  using K = Formula::Kind;
  if (!s) throw transform_error("distribution constraints need the domain size");
  NameSupply names(input);
  auto cums = std::make_shared<std::map<std::string, std::pair<std::string, int>>>();  // cum -> (f, arity)
  std::function<FormulaPtr(const FormulaPtr&)> rw = [&](const FormulaPtr& f) -> FormulaPtr {
    if (f->kids.empty()) return f;
    std::vector<FormulaPtr> kids;
    for (const auto& k : f->kids) kids.push_back(rw(k));
    if (f->kind == K::exists_fn && f->range == Range::dist) {
      std::string cum;
      auto dc = express_distribution_constraint(f->name, f->arity, s->domain.size, names, &cum);
      if (!cum.empty()) (*cums)[cum] = {f->name, f->arity};
      return fm::exists_fn(f->name, f->arity, Range::unit, fm::conj({dc, kids[0]}));
    }
    if (f->kind == K::exists_real && f->range == Range::dist)
      return fm::exists_real(f->name, Range::unit, fm::conj({fm::equal(term::var(f->name), term::constant(ExactScalar(1))), kids[0]}));
    return fm::with_kids(*f, std::move(kids));
  };
  TransformResult r;
  r.formula = rw(input);
  FormulaPtr out_formula = r.formula;
  r.forward = [cums, s, out_formula](const Environment& in) {
    Environment out = in;
    detail::ContextWalker walker(s, out, [&](const Formula& f, const Tuple& ctx, const Environment& local) {
      if (f.kind != Formula::Kind::exists_fn) return true;
      auto it = cums->find(f.name);
      if (it == cums->end()) return true;
      auto ft = local.functions.find(it->second.first);
      if (ft == local.functions.end()) return false;
      out.functions[scoped_name(f.name, ctx)] = cumulative_witness(ft->second, s->domain);
      return true;
    });
    walker.run(out_formula);
    return out;
  };
  r.backward = [cums](const Environment& in) {
    Environment out = in;
    for (const auto& [cum, f] : *cums) detail::erase_witnesses(out.functions, cum);
    return out;
  };
  return r;
}

// ---------------------------------------------------------------------------
// [0,1]-valued functions -> distributions scaled by 1/n^k.

inline TransformResult scale_to_distributions(const FormulaPtr& input, const RStructure* s) {
  using K = Formula::Kind;
  if (!s) throw transform_error("scaling needs the domain size");
  const int n = s->domain.size;
  if (n < 2) throw transform_error("scaling needs at least two elements");
  NameSupply names(input);
  // Maximal arity and vocabulary symbols.
  int k = 0;
  std::map<std::string, int> vocab;
  {
    std::set<std::string> bound;
    visit_formula(input, [&](const Formula& f) {
      if (f.kind == K::exists_fn) {
        k = std::max(k, f.arity);
        bound.insert(f.name);
        if (f.range != Range::unit) throw transform_error("function quantifier " + f.name + " is not [0,1]-ranged");
      }
      if (f.kind == K::exists_real && f.range != Range::unit)
        throw transform_error("real quantifier " + f.name + " is not [0,1]-ranged");
      if (f.kind == K::natom) throw transform_error("negated numerical atom; input is not loose");
      if (f.kind == K::atom && f.cmp != Cmp::eq) throw transform_error("only identities can be scaled");
      if (f.kind == K::exists_rel || f.kind == K::exists_skolem) throw transform_error("unsupported quantifier " + f.name);
    });
    for (const auto& name : free_function_symbols(input)) {
      visit_formula(input, [&](const Formula& f) {
        if (!f.is_numeric_atom()) return;
        for (const auto* side : {&f.lhs, &f.rhs})
          visit_term(*side, [&](const Term& t) {
            if (t.kind == Term::Kind::app && t.name == name) vocab[name] = static_cast<int>(t.args.size());
          });
      });
    }
    for (const auto& [v, ar] : vocab) k = std::max(k, ar);
    if (!free_real_vars(input).empty()) throw transform_error("free real variables cannot be scaled");
  }
  enum class Src { fn, real, vocab, one, aux };
  struct Info {
    Src src;
    std::string orig;  // source symbol (fn, real, vocab) or parent table (aux)
    int arity = 0;     // arity of the source
    std::vector<std::string> xs;  // aux: the ∀x̄ feeding the parent
  };
  auto infos = std::make_shared<std::map<std::string, Info>>();
  auto c = detail::elem(0);
  auto col = [&](const std::string& d, std::vector<FoTerm> args) {
    args.push_back(c);
    return term::app(d, std::move(args));
  };
  std::map<std::string, std::string> vocab_table;
  for (const auto& [v, ar] : vocab) vocab_table[v] = names.fresh("d_" + v);
  std::string one = names.fresh("d_one");
  bool uses_one = false;

  // ∀x̄ ∃d′ ∀ȳ d′(ȳ,c) = d(x̄,c) [∧ extra(d′, x̄)]
  auto bound_constraint = [&](const std::string& d, int m, Src src,
                              const std::function<FormulaPtr(const std::string&, const std::vector<FoTerm>&,
                                                             const std::vector<std::string>&)>& extra) {
    auto X = detail::fresh_vars(names, "x", m), Y = detail::fresh_vars(names, "y", k);
    std::string aux = names.fresh("e_" + d);
    (*infos)[aux] = Info{Src::aux, d, m, X};
    (void)src;
    std::vector<FormulaPtr> parts{
        fm::forall(Y, fm::equal(col(aux, fo_vars(Y)), col(d, fo_vars(X))))};
    if (extra) parts.push_back(extra(aux, fo_vars(X), Y));
    return fm::forall(X, fm::exists_fn(aux, k + 1, Range::dist, fm::conj(std::move(parts))));
  };

  std::function<TermPtr(const TermPtr&, const std::map<std::string, std::string>&)> factor =
      [&](const TermPtr& t, const std::map<std::string, std::string>& scope) -> TermPtr {
    if (t->kind == Term::Kind::var) {
      auto it = scope.find(t->name);
      if (it == scope.end()) throw transform_error("unbound real variable " + t->name);
      return col(it->second, {});
    }
    auto it = scope.find(t->name);
    if (it != scope.end()) return col(it->second, t->args);
    return col(vocab_table.at(t->name), t->args);
  };

  auto scale_atom = [&](const Formula& a, const std::map<std::string, std::string>& scope) {
    auto side = [&](const TermPtr& t) {
      std::vector<std::vector<TermPtr>> ms;
      for (const auto& mono : expand(t)) {
        if (mono.coef.sign() < 0 || !mono.coef.is_integer())
          throw transform_error("coefficient " + mono.coef.str() + " is not a natural number");
        long reps = mono.coef.numerator().get_si();
        std::vector<TermPtr> fs;
        for (const auto& x : mono.factors) fs.push_back(factor(x, scope));
        for (long i = 0; i < reps; ++i) ms.push_back(fs);
      }
      return ms;
    };
    auto l = side(a.lhs), r = side(a.rhs);
    std::size_t D = 1;
    for (const auto* ms : {&l, &r})
      for (const auto& m : *ms) D = std::max(D, m.size());
    auto build = [&](std::vector<std::vector<TermPtr>>& ms) {
      std::vector<TermPtr> terms;
      for (auto& m : ms) {
        while (m.size() < D) {
          m.push_back(col(one, {}));
          uses_one = true;
        }
        terms.push_back(term::mul(m));
      }
      return terms.empty() ? term::constant(ExactScalar(0)) : term::add(terms);
    };
    return fm::equal(build(l), build(r));
  };

  std::function<FormulaPtr(const FormulaPtr&, const std::map<std::string, std::string>&)> rw =
      [&](const FormulaPtr& f, const std::map<std::string, std::string>& scope) -> FormulaPtr {
    switch (f->kind) {
      case K::atom: return scale_atom(*f, scope);
      case K::exists_fn:
      case K::exists_real: {
        bool real = f->kind == K::exists_real;
        int m = real ? 0 : f->arity;
        std::string d = names.fresh("d_" + f->name);
        (*infos)[d] = Info{real ? Src::real : Src::fn, f->name, m, {}};
        auto inner = scope;
        inner[f->name] = d;
        FormulaPtr body = rw(f->body(), inner);
        return fm::exists_fn(d, m + 1, Range::dist, fm::conj({bound_constraint(d, m, Src::fn, {}), body}));
      }
      default: {
        if (f->kids.empty()) return f;
        std::vector<FormulaPtr> kids;
        for (const auto& kid : f->kids) kids.push_back(rw(kid, scope));
        return fm::with_kids(*f, std::move(kids));
      }
    }
  };
  FormulaPtr body = rw(input, {});
  if (uses_one) {
    (*infos)[one] = Info{Src::one, "", 0, {}};
    auto pin = bound_constraint(one, 0, Src::one, [&](const std::string& aux, const std::vector<FoTerm>&,
                                                       const std::vector<std::string>& Y) {
      std::string z = names.fresh("z");
      auto yz = Y;
      yz.push_back(z);
      return fm::equal(term::sum(Y, col(aux, fo_vars(Y))),
                       term::sum(yz, term::app(aux, fo_vars(yz))));
    });
    body = fm::exists_fn(one, 1, Range::dist, fm::conj({pin, body}));
  }
  for (auto it = vocab.rbegin(); it != vocab.rend(); ++it) {
    const std::string& v = it->first;
    const std::string& d = vocab_table.at(v);
    (*infos)[d] = Info{Src::vocab, v, it->second, {}};
    auto link = bound_constraint(d, it->second, Src::vocab, [&](const std::string& aux, const std::vector<FoTerm>& xs,
                                                                 const std::vector<std::string>& Y) {
      return fm::equal(term::sum(Y, col(aux, fo_vars(Y))), term::app(v, xs));
    });
    body = fm::exists_fn(d, it->second + 1, Range::dist, fm::conj({link, body}));
  }
  TransformResult r;
  r.formula = body;
  r.notes.push_back("k = " + std::to_string(k));
  const ExactScalar nk = detail::power(ExactScalar(static_cast<long>(n)), k);
  FormulaPtr out_formula = r.formula;
  r.forward = [infos, s, nk, k, out_formula](const Environment& in) {
    Environment out = in;
    const FiniteDomain& dom = s->domain;
    const int last = dom.size - 1;
    auto column_table = [&](int m, const std::function<ExactScalar(const Tuple&)>& value) {
      WeightTable w = detail::zero_table(dom, m + 1);
      for (const auto& t : dom.tuples(m)) w.set(detail::concat(t, {0}), value(t) / nk);
      Tuple cell(static_cast<std::size_t>(m), last);
      cell.push_back(last);
      detail::put_slack(w, dom, cell, "scaled table");
      return w;
    };
    detail::ContextWalker walker(s, out, [&](const Formula& f, const Tuple& ctx, const Environment& local) {
      if (f.kind != Formula::Kind::exists_fn) return true;
      auto it = infos->find(f.name);
      if (it == infos->end()) return true;
      const Info& info = it->second;
      const std::string key = scoped_name(f.name, ctx);
      switch (info.src) {
        case Src::fn: {
          const WeightTable* w = nullptr;
          for (const auto& cand : {scoped_name(info.orig, ctx), info.orig})
            if (auto jt = in.functions.find(cand); jt != in.functions.end() && !w) w = &jt->second;
          if (!w) return false;
          out.functions[key] = column_table(info.arity, [&](const Tuple& t) { return w->at(t); });
          break;
        }
        case Src::real: {
          const ExactScalar* v = nullptr;
          for (const auto& cand : {scoped_name(info.orig, ctx), info.orig})
            if (auto jt = in.reals.find(cand); jt != in.reals.end() && !v) v = &jt->second;
          if (!v) return false;
          out.functions[key] = column_table(0, [&](const Tuple&) { return *v; });
          break;
        }
        case Src::vocab: {
          const WeightTable* w = s->weight(info.orig);
          if (!w) throw transform_error("structure lacks function " + info.orig);
          out.functions[key] = column_table(info.arity, [&](const Tuple& t) { return w->at(t); });
          break;
        }
        case Src::one: out.functions[key] = column_table(0, [](const Tuple&) { return ExactScalar(1); }); break;
        case Src::aux: {
          auto pt = local.functions.find(info.orig);
          if (pt == local.functions.end()) return false;
          Tuple xs;
          for (const auto& x : info.xs) xs.push_back(local.fo.at(x));
          xs.push_back(0);
          ExactScalar v = pt->second.at(xs) * nk;  // column value before scaling by 1/n^k
          out.functions[key] = column_table(k, [&](const Tuple&) { return v; });
          break;
        }
      }
      return true;
    });
    walker.run(out_formula);
    for (const auto& [d, info] : *infos) {
      if (info.src == Src::fn) detail::erase_witnesses(out.functions, info.orig);
      if (info.src == Src::real) detail::erase_witnesses(out.reals, info.orig);
    }
    return out;
  };
  r.backward = [infos, s, nk](const Environment& in) {
    Environment out = in;
    for (const auto& [d, info] : *infos) {
      if (info.src == Src::fn || info.src == Src::real) {
        for (const auto& key : detail::witness_keys(in.functions, d)) {
          const WeightTable& w = in.functions.at(key);
          std::string target = info.orig + detail::key_suffix(key, d);
          if (info.src == Src::real) {
            out.reals[target] = w.at({0}) * nk;
          } else {
            WeightTable f(info.arity);
            for (const auto& t : s->domain.tuples(info.arity)) f.set(t, w.at(detail::concat(t, {0})) * nk);
            out.functions[target] = f;
          }
        }
      }
      detail::erase_witnesses(out.functions, d);
    }
    return out;
  };
  return r;
}

}  // namespace realogic
