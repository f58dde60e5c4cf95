#pragma once

#include <functional>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "realogic/scalar.hpp"
#include "realogic/sexpr.hpp"

namespace realogic {

// ---------------------------------------------------------------------------
// First-order terms: variables, named domain elements (#k), and Skolem
// applications over the finite domain.

struct FoTerm {
  enum class Kind { var, element, skolem };
  Kind kind = Kind::var;
  std::string name;
  int element = 0;
  std::vector<FoTerm> args;

  static FoTerm var(std::string n) { return {Kind::var, std::move(n), 0, {}}; }
  static FoTerm elem(int e) { return {Kind::element, {}, e, {}}; }
  static FoTerm skolem(std::string n, std::vector<FoTerm> a) {
    return {Kind::skolem, std::move(n), 0, std::move(a)};
  }

  friend bool operator==(const FoTerm&, const FoTerm&) = default;
};

inline std::vector<FoTerm> fo_vars(const std::vector<std::string>& names) {
  std::vector<FoTerm> out;
  for (const auto& n : names) out.push_back(FoTerm::var(n));
  return out;
}

// ---------------------------------------------------------------------------
// Numerical terms.

struct Term;
using TermPtr = std::shared_ptr<const Term>;

struct Term {
  enum class Kind { constant, var, app, add, mul, sum };
  Kind kind = Kind::constant;
  ExactScalar value;              // constant
  std::string name;               // var / app
  std::vector<FoTerm> args;       // app
  std::vector<TermPtr> kids;      // add / mul (n-ary), sum (one body)
  std::vector<std::string> bound; // sum
};

bool operator==(const Term& a, const Term& b);

inline bool term_eq(const TermPtr& a, const TermPtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  return *a == *b;
}

inline bool operator==(const Term& a, const Term& b) {
  if (a.kind != b.kind || a.value != b.value || a.name != b.name || a.args != b.args ||
      a.bound != b.bound || a.kids.size() != b.kids.size())
    return false;
  for (std::size_t i = 0; i < a.kids.size(); ++i)
    if (!term_eq(a.kids[i], b.kids[i])) return false;
  return true;
}

namespace term {

inline TermPtr constant(ExactScalar v) {
  auto t = std::make_shared<Term>();
  t->kind = Term::Kind::constant;
  t->value = std::move(v);
  return t;
}
inline TermPtr var(std::string n) {
  auto t = std::make_shared<Term>();
  t->kind = Term::Kind::var;
  t->name = std::move(n);
  return t;
}
inline TermPtr app(std::string f, std::vector<FoTerm> args = {}) {
  auto t = std::make_shared<Term>();
  t->kind = Term::Kind::app;
  t->name = std::move(f);
  t->args = std::move(args);
  return t;
}
inline TermPtr app(std::string f, const std::vector<std::string>& args) {
  return app(std::move(f), fo_vars(args));
}
/// n-ary sum; a single operand is returned unchanged, an empty sum is 0.
inline TermPtr add(std::vector<TermPtr> xs) {
  if (xs.empty()) return constant(ExactScalar(0));
  if (xs.size() == 1) return xs[0];
  auto t = std::make_shared<Term>();
  t->kind = Term::Kind::add;
  t->kids = std::move(xs);
  return t;
}
inline TermPtr add(TermPtr a, TermPtr b) { return add(std::vector<TermPtr>{std::move(a), std::move(b)}); }
/// n-ary product; a single operand is returned unchanged, an empty product is 1.
inline TermPtr mul(std::vector<TermPtr> xs) {
  if (xs.empty()) return constant(ExactScalar(1));
  if (xs.size() == 1) return xs[0];
  auto t = std::make_shared<Term>();
  t->kind = Term::Kind::mul;
  t->kids = std::move(xs);
  return t;
}
inline TermPtr mul(TermPtr a, TermPtr b) { return mul(std::vector<TermPtr>{std::move(a), std::move(b)}); }
inline TermPtr sum(std::vector<std::string> bound, TermPtr body) {
  auto t = std::make_shared<Term>();
  t->kind = Term::Kind::sum;
  t->bound = std::move(bound);
  t->kids = {std::move(body)};
  return t;
}

}  // namespace term

// ---------------------------------------------------------------------------
// Formulas (negation normal form).

enum class Cmp { eq, le, lt };
enum class Range { real, unit, sym, dist };

inline const char* cmp_symbol(Cmp c) {
  switch (c) {
    case Cmp::eq: return "=";
    case Cmp::le: return "<=";
    case Cmp::lt: return "<";
  }
  return "?";
}
inline const char* range_symbol(Range r) {
  switch (r) {
    case Range::real: return "real";
    case Range::unit: return "unit";
    case Range::sym: return "sym";
    case Range::dist: return "dist";
  }
  return "?";
}

struct Formula;
using FormulaPtr = std::shared_ptr<const Formula>;

struct Formula {
  enum class Kind {
    eq, neq,            // x = y, not x = y
    rel, nrel,          // R(xs), not R(xs)
    atom, natom,        // i e j, not (i e j)
    and_, or_,
    exists, forall,     // first-order, over the finite domain
    exists_fn,          // function quantifier with arity and range
    exists_rel,         // relation quantifier over the finite domain
    exists_skolem,      // domain-valued function (Skolem function)
    exists_real,        // real variable; range unit is the guarded form
  };
  Kind kind = Kind::and_;
  Cmp cmp = Cmp::le;
  TermPtr lhs, rhs;
  std::string name;          // relation / bound variable / quantified symbol
  std::vector<FoTerm> args;  // eq/neq use args[0], args[1]; rel uses all
  std::vector<FormulaPtr> kids;
  int arity = 0;
  Range range = Range::real;

  bool is_quantifier() const {
    return kind == Kind::exists || kind == Kind::forall || kind == Kind::exists_fn ||
           kind == Kind::exists_rel || kind == Kind::exists_skolem || kind == Kind::exists_real;
  }
  bool is_numeric_atom() const { return kind == Kind::atom || kind == Kind::natom; }
  const FormulaPtr& body() const { return kids.at(0); }
};

bool operator==(const Formula& a, const Formula& b);

inline bool formula_eq(const FormulaPtr& a, const FormulaPtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  return *a == *b;
}

inline bool operator==(const Formula& a, const Formula& b) {
  if (a.kind != b.kind || a.name != b.name || a.args != b.args || a.arity != b.arity ||
      a.kids.size() != b.kids.size())
    return false;
  if (a.is_numeric_atom() && (a.cmp != b.cmp || !term_eq(a.lhs, b.lhs) || !term_eq(a.rhs, b.rhs)))
    return false;
  if ((a.kind == Formula::Kind::exists_fn || a.kind == Formula::Kind::exists_real) && a.range != b.range)
    return false;
  for (std::size_t i = 0; i < a.kids.size(); ++i)
    if (!formula_eq(a.kids[i], b.kids[i])) return false;
  return true;
}

namespace fm {

using K = Formula::Kind;

inline FormulaPtr make(Formula f) { return std::make_shared<const Formula>(std::move(f)); }

inline FormulaPtr eq(FoTerm a, FoTerm b) {
  Formula f;
  f.kind = K::eq;
  f.args = {std::move(a), std::move(b)};
  return make(std::move(f));
}
inline FormulaPtr neq(FoTerm a, FoTerm b) {
  Formula f;
  f.kind = K::neq;
  f.args = {std::move(a), std::move(b)};
  return make(std::move(f));
}
inline FormulaPtr rel(std::string r, std::vector<FoTerm> args, bool positive = true) {
  Formula f;
  f.kind = positive ? K::rel : K::nrel;
  f.name = std::move(r);
  f.args = std::move(args);
  return make(std::move(f));
}
inline FormulaPtr atom(Cmp c, TermPtr l, TermPtr r, bool negated = false) {
  Formula f;
  f.kind = negated ? K::natom : K::atom;
  f.cmp = c;
  f.lhs = std::move(l);
  f.rhs = std::move(r);
  return make(std::move(f));
}
inline FormulaPtr le(TermPtr l, TermPtr r) { return atom(Cmp::le, std::move(l), std::move(r)); }
inline FormulaPtr lt(TermPtr l, TermPtr r) { return atom(Cmp::lt, std::move(l), std::move(r)); }
inline FormulaPtr equal(TermPtr l, TermPtr r) { return atom(Cmp::eq, std::move(l), std::move(r)); }

inline FormulaPtr conj(std::vector<FormulaPtr> xs) {
  if (xs.size() == 1) return xs[0];
  Formula f;
  f.kind = K::and_;
  f.kids = std::move(xs);
  return make(std::move(f));
}
inline FormulaPtr disj(std::vector<FormulaPtr> xs) {
  if (xs.size() == 1) return xs[0];
  Formula f;
  f.kind = K::or_;
  f.kids = std::move(xs);
  return make(std::move(f));
}
inline FormulaPtr truth() { return conj({}); }

inline FormulaPtr quant(K k, std::string v, FormulaPtr body) {
  Formula f;
  f.kind = k;
  f.name = std::move(v);
  f.kids = {std::move(body)};
  return make(std::move(f));
}
inline FormulaPtr exists(std::string v, FormulaPtr body) { return quant(K::exists, std::move(v), std::move(body)); }
inline FormulaPtr forall(std::string v, FormulaPtr body) { return quant(K::forall, std::move(v), std::move(body)); }
inline FormulaPtr forall(const std::vector<std::string>& vs, FormulaPtr body) {
  for (auto it = vs.rbegin(); it != vs.rend(); ++it) body = forall(*it, std::move(body));
  return body;
}
inline FormulaPtr exists_fn(std::string f, int arity, Range r, FormulaPtr body) {
  Formula q;
  q.kind = K::exists_fn;
  q.name = std::move(f);
  q.arity = arity;
  q.range = r;
  q.kids = {std::move(body)};
  return make(std::move(q));
}
inline FormulaPtr exists_rel(std::string x, int arity, FormulaPtr body) {
  Formula q;
  q.kind = K::exists_rel;
  q.name = std::move(x);
  q.arity = arity;
  q.kids = {std::move(body)};
  return make(std::move(q));
}
inline FormulaPtr exists_skolem(std::string g, int arity, FormulaPtr body) {
  Formula q;
  q.kind = K::exists_skolem;
  q.name = std::move(g);
  q.arity = arity;
  q.kids = {std::move(body)};
  return make(std::move(q));
}
inline FormulaPtr exists_real(std::string v, Range r, FormulaPtr body) {
  Formula q;
  q.kind = K::exists_real;
  q.name = std::move(v);
  q.range = r;
  q.kids = {std::move(body)};
  return make(std::move(q));
}
inline FormulaPtr exists01(std::string v, FormulaPtr body) {
  return exists_real(std::move(v), Range::unit, std::move(body));
}

/// Copy of `f` with new children.
inline FormulaPtr with_kids(const Formula& f, std::vector<FormulaPtr> kids) {
  Formula g = f;
  g.kids = std::move(kids);
  return make(std::move(g));
}

}  // namespace fm

// ---------------------------------------------------------------------------
// Printing.

class scope_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Sexp fo_term_sexp(const FoTerm& t) {
  switch (t.kind) {
    case FoTerm::Kind::var: return Sexp::make_atom(t.name);
    case FoTerm::Kind::element: return Sexp::make_atom("#" + std::to_string(t.element));
    case FoTerm::Kind::skolem: {
      Sexp l = Sexp::make_list({Sexp::make_atom("skolem"), Sexp::make_atom(t.name)});
      for (const auto& a : t.args) l.items.push_back(fo_term_sexp(a));
      return l;
    }
  }
  return {};
}

inline Sexp term_sexp(const Term& t) {
  using TK = Term::Kind;
  switch (t.kind) {
    case TK::constant: return Sexp::make_atom(t.value.str());
    case TK::var: return Sexp::make_atom(t.name);
    case TK::app: {
      Sexp l = Sexp::make_list({Sexp::make_atom(t.name)});
      for (const auto& a : t.args) l.items.push_back(fo_term_sexp(a));
      return l;
    }
    case TK::add:
    case TK::mul: {
      Sexp l = Sexp::make_list({Sexp::make_atom(t.kind == TK::add ? "+" : "*")});
      for (const auto& k : t.kids) l.items.push_back(term_sexp(*k));
      return l;
    }
    case TK::sum: {
      Sexp vars = Sexp::make_list();
      for (const auto& v : t.bound) vars.items.push_back(Sexp::make_atom(v));
      return Sexp::make_list({Sexp::make_atom("sum"), std::move(vars), term_sexp(*t.kids.at(0))});
    }
  }
  return {};
}

inline Sexp formula_sexp(const Formula& f) {
  using K = Formula::Kind;
  auto sym = [](std::string s) { return Sexp::make_atom(std::move(s)); };
  auto neg = [&](Sexp inner) { return Sexp::make_list({sym("not"), std::move(inner)}); };
  switch (f.kind) {
    case K::eq:
    case K::neq: {
      Sexp e = Sexp::make_list({sym("eqv"), fo_term_sexp(f.args.at(0)), fo_term_sexp(f.args.at(1))});
      return f.kind == K::eq ? e : neg(std::move(e));
    }
    case K::rel:
    case K::nrel: {
      Sexp r = Sexp::make_list({sym("rel"), sym(f.name)});
      for (const auto& a : f.args) r.items.push_back(fo_term_sexp(a));
      return f.kind == K::rel ? r : neg(std::move(r));
    }
    case K::atom:
    case K::natom: {
      Sexp a = Sexp::make_list({sym(cmp_symbol(f.cmp)), term_sexp(*f.lhs), term_sexp(*f.rhs)});
      return f.kind == K::atom ? a : neg(std::move(a));
    }
    case K::and_:
    case K::or_: {
      Sexp l = Sexp::make_list({sym(f.kind == K::and_ ? "and" : "or")});
      for (const auto& k : f.kids) l.items.push_back(formula_sexp(*k));
      return l;
    }
    case K::exists:
    case K::forall:
      return Sexp::make_list({sym(f.kind == K::exists ? "exists" : "forall"),
                              Sexp::make_list({sym(f.name)}), formula_sexp(*f.body())});
    case K::exists_fn:
      return Sexp::make_list({sym("exists-fn"),
                              Sexp::make_list({sym(f.name), sym(std::to_string(f.arity)),
                                               sym(range_symbol(f.range))}),
                              formula_sexp(*f.body())});
    case K::exists_rel:
      return Sexp::make_list({sym("exists-rel"), Sexp::make_list({sym(f.name), sym(std::to_string(f.arity))}),
                              formula_sexp(*f.body())});
    case K::exists_skolem:
      return Sexp::make_list({sym("exists-skolem"),
                              Sexp::make_list({sym(f.name), sym(std::to_string(f.arity))}),
                              formula_sexp(*f.body())});
    case K::exists_real: {
      const char* head = f.range == Range::unit ? "exists01" : f.range == Range::sym ? "exists-sym" : "exists-real";
      return Sexp::make_list({sym(head), Sexp::make_list({sym(f.name)}), formula_sexp(*f.body())});
    }
  }
  return {};
}

inline std::string print_term(const TermPtr& t) { return to_string(term_sexp(*t)); }
inline std::string print_formula(const FormulaPtr& f) { return to_string(formula_sexp(*f)); }

/// Multi-line rendering for files: one top-level conjunct per line when possible.
/// Directly nested quantifiers share one indentation level.
inline std::string print_formula_pretty(const FormulaPtr& f) {
  constexpr std::size_t kWidth = 100, kProbe = 40;
  std::function<bool(const Formula&, std::size_t&)> small = [&](const Formula& g, std::size_t& budget) {
    if (budget == 0) return false;
    --budget;
    for (const auto& k : g.kids)
      if (!small(*k, budget)) return false;
    return true;
  };
  std::ostringstream os;
  std::function<void(const Formula&, int)> go = [&](const Formula& g, int depth) {
    std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
    bool compound = g.kind == Formula::Kind::and_ || g.kind == Formula::Kind::or_ || g.is_quantifier();
    std::size_t budget = kProbe;
    if (!compound || small(g, budget)) {
      std::string flat = to_string(formula_sexp(g));
      if (!compound || flat.size() <= kWidth) {
        os << pad << flat << '\n';
        return;
      }
    }
    if (g.is_quantifier()) {
      Sexp head = formula_sexp(*fm::with_kids(g, {fm::truth()}));
      os << pad << '(' << to_string(head.items[0]) << ' ' << to_string(head.items[1]) << '\n';
      const Formula& body = *g.kids[0];
      go(body, body.is_quantifier() ? depth : depth + 1);
    } else {
      os << pad << (g.kind == Formula::Kind::and_ ? "(and" : "(or") << '\n';
      for (const auto& k : g.kids) go(*k, depth + 1);
    }
    os << pad << ")\n";
  };
  go(*f, 0);
  return os.str();
}

// ---------------------------------------------------------------------------
// Parsing.

namespace detail {

class FormulaParser {
 public:
  FormulaPtr formula(const Sexp& s) {
    using K = Formula::Kind;
    if (!s.is_list) {
      if (s.atom == "true") return fm::truth();
      if (s.atom == "false") return fm::disj({});
      s.fail("expected formula, got atom " + s.atom);
    }
    auto h = s.head();
    if (h.empty()) s.fail("expected formula head symbol");
    if (h == "not") {
      if (s.size() != 2) s.fail("(not a) takes one argument");
      const Sexp& inner = s[1];
      auto ih = inner.head();
      if (ih == "eqv") {
        auto e = formula(inner);
        return fm::neq(e->args[0], e->args[1]);
      }
      if (ih == "rel") {
        auto r = formula(inner);
        return fm::rel(r->name, r->args, false);
      }
      if (ih == "<=" || ih == "<" || ih == "=") {
        auto a = formula(inner);
        return fm::atom(a->cmp, a->lhs, a->rhs, true);
      }
      s.fail("negation is only allowed directly on atoms");
    }
    if (h == "eqv") {
      if (s.size() != 3) s.fail("(eqv x y)");
      return fm::eq(fo_term(s[1]), fo_term(s[2]));
    }
    if (h == "rel") {
      if (s.size() < 2) s.fail("(rel R x ...)");
      std::vector<FoTerm> args;
      for (std::size_t i = 2; i < s.size(); ++i) args.push_back(fo_term(s[i]));
      return fm::rel(s[1].expect_atom("relation name"), std::move(args));
    }
    if (h == "<=" || h == "<" || h == "=") {
      if (s.size() != 3) s.fail("comparison takes two terms");
      Cmp c = h == "<=" ? Cmp::le : h == "<" ? Cmp::lt : Cmp::eq;
      return fm::atom(c, num_term(s[1]), num_term(s[2]));
    }
    if (h == "and" || h == "or") {
      std::vector<FormulaPtr> kids;
      for (std::size_t i = 1; i < s.size(); ++i) kids.push_back(formula(s[i]));
      Formula f;
      f.kind = h == "and" ? K::and_ : K::or_;
      f.kids = std::move(kids);
      return fm::make(std::move(f));
    }
    if (h == "exists" || h == "forall" || h == "exists01" || h == "exists-real" || h == "exists-sym") {
      if (s.size() != 3) s.fail(std::string(h) + " takes a variable list and a body");
      const Sexp& vars = s[1].expect_list("bound variables");
      if (vars.size() == 0) vars.fail("empty variable list");
      FormulaPtr body = formula(s[2]);
      for (std::size_t i = vars.size(); i-- > 0;) {
        const auto& v = vars[i].expect_atom("variable");
        if (h == "exists") body = fm::exists(v, body);
        else if (h == "forall") body = fm::forall(v, body);
        else if (h == "exists01") body = fm::exists_real(v, Range::unit, body);
        else if (h == "exists-sym") body = fm::exists_real(v, Range::sym, body);
        else body = fm::exists_real(v, Range::real, body);
      }
      return body;
    }
    if (h == "exists-fn") {
      if (s.size() != 3) s.fail("(exists-fn (f ARITY RANGE) body)");
      const Sexp& d = s[1].expect_list("function declaration");
      if (d.size() != 3) d.fail("(f ARITY RANGE)");
      const auto& r = d[2].expect_atom("range");
      Range range;
      if (r == "real") range = Range::real;
      else if (r == "unit") range = Range::unit;
      else if (r == "sym") range = Range::sym;
      else if (r == "dist") range = Range::dist;
      else d[2].fail("range must be real, unit, sym or dist");
      return fm::exists_fn(d[0].expect_atom("function name"), arity(d[1]), range, formula(s[2]));
    }
    if (h == "exists-rel" || h == "exists-skolem") {
      if (s.size() != 3) s.fail(std::string("(") + std::string(h) + " (X ARITY) body)");
      const Sexp& d = s[1].expect_list("declaration");
      if (d.size() != 2) d.fail("(X ARITY)");
      auto name = d[0].expect_atom("name");
      int ar = arity(d[1]);
      auto body = formula(s[2]);
      return h == "exists-rel" ? fm::exists_rel(name, ar, body) : fm::exists_skolem(name, ar, body);
    }
    s.fail("unknown formula form " + std::string(h));
  }

  TermPtr num_term(const Sexp& s) {
    if (!s.is_list) {
      if (ExactScalar::looks_numeric(s.atom)) {
        try {
          return term::constant(ExactScalar::parse(s.atom));
        } catch (const literal_error& e) {
          s.fail(e.what());
        }
      }
      if (s.atom.empty() || s.atom[0] == '#') s.fail("domain element is not a numerical term");
      return term::var(s.atom);
    }
    auto h = s.head();
    if (h.empty()) s.fail("expected term head symbol");
    if (h == "+" || h == "*") {
      if (s.size() < 3) s.fail(std::string(h) + " needs at least two operands");
      std::vector<TermPtr> kids;
      for (std::size_t i = 1; i < s.size(); ++i) kids.push_back(num_term(s[i]));
      auto t = std::make_shared<Term>();
      t->kind = h == "+" ? Term::Kind::add : Term::Kind::mul;
      t->kids = std::move(kids);
      return t;
    }
    if (h == "sum") {
      if (s.size() != 3) s.fail("(sum (y ...) i)");
      std::vector<std::string> bound;
      for (const auto& v : s[1].expect_list("sum variables").items) bound.push_back(v.expect_atom("variable"));
      if (bound.empty()) s[1].fail("sum binds at least one variable");
      return term::sum(std::move(bound), num_term(s[2]));
    }
    if (h == "sqrt" || h == "exp" || h == "root-obj" || h == "pi" || h == "-" || h == "/")
      s.fail("unsupported term operator " + std::string(h) + " (only exact rationals, + and * are allowed)");
    std::vector<FoTerm> args;
    for (std::size_t i = 1; i < s.size(); ++i) args.push_back(fo_term(s[i]));
    return term::app(std::string(h), std::move(args));
  }

  FoTerm fo_term(const Sexp& s) {
    if (!s.is_list) {
      if (!s.atom.empty() && s.atom[0] == '#') {
        try {
          return FoTerm::elem(std::stoi(s.atom.substr(1)));
        } catch (const std::exception&) {
          s.fail("bad domain element " + s.atom);
        }
      }
      if (ExactScalar::looks_numeric(s.atom)) s.fail("numbers are not first-order terms: " + s.atom);
      return FoTerm::var(s.atom);
    }
    if (s.head() != "skolem" || s.size() < 2) s.fail("expected variable, #k or (skolem g args...)");
    std::vector<FoTerm> args;
    for (std::size_t i = 2; i < s.size(); ++i) args.push_back(fo_term(s[i]));
    return FoTerm::skolem(s[1].expect_atom("skolem name"), std::move(args));
  }

 private:
  static int arity(const Sexp& s) {
    const auto& a = s.expect_atom("arity");
    try {
      std::size_t used = 0;
      int v = std::stoi(a, &used);
      if (used != a.size() || v < 0) throw std::invalid_argument(a);
      return v;
    } catch (const std::exception&) {
      s.fail("arity must be a nonnegative integer");
    }
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Scope resolution: every symbol is used in one role, function symbols with a
// single arity, and bound first-order variables are never read as reals.

namespace detail {

class ScopeChecker {
 public:
  void check(const Formula& f) {
    using K = Formula::Kind;
    switch (f.kind) {
      case K::eq:
      case K::neq:
      case K::rel:
      case K::nrel:
        if (f.kind == K::rel || f.kind == K::nrel) use_symbol(f.name, 'R', static_cast<int>(f.args.size()));
        for (const auto& a : f.args) fo(a);
        return;
      case K::atom:
      case K::natom:
        term(*f.lhs);
        term(*f.rhs);
        return;
      case K::and_:
      case K::or_:
        for (const auto& k : f.kids) check(*k);
        return;
      case K::exists:
      case K::forall:
        bind(f.name, 'x', [&] { check(*f.body()); });
        return;
      case K::exists_real:
        bind(f.name, 'v', [&] { check(*f.body()); });
        return;
      case K::exists_fn:
        bind_symbol(f.name, 'f', f.arity, [&] { check(*f.body()); });
        return;
      case K::exists_rel:
        bind_symbol(f.name, 'R', f.arity, [&] { check(*f.body()); });
        return;
      case K::exists_skolem:
        bind_symbol(f.name, 'g', f.arity, [&] { check(*f.body()); });
        return;
    }
  }

 private:
  void term(const Term& t) {
    using TK = Term::Kind;
    switch (t.kind) {
      case TK::constant: return;
      case TK::var: {
        auto it = vars_.find(t.name);
        if (it != vars_.end() && !it->second.empty() && it->second.back() == 'x')
          throw scope_error("first-order variable " + t.name + " used as a real");
        if (symbols_.count(t.name) && symbols_[t.name].back().first != 'v')
          throw scope_error(t.name + " is a function or relation symbol, not a real variable");
        return;
      }
      case TK::app:
        if (vars_.count(t.name) && !vars_[t.name].empty() && vars_[t.name].back() == 'v')
          throw scope_error("real variable " + t.name + " applied as a function");
        use_symbol(t.name, 'f', static_cast<int>(t.args.size()));
        for (const auto& a : t.args) fo(a);
        return;
      case TK::add:
      case TK::mul:
        for (const auto& k : t.kids) term(*k);
        return;
      case TK::sum:
        for (const auto& v : t.bound) vars_[v].push_back('x');
        term(*t.kids.at(0));
        for (const auto& v : t.bound) vars_[v].pop_back();
        return;
    }
  }

  void fo(const FoTerm& t) {
    if (t.kind == FoTerm::Kind::var) {
      auto it = vars_.find(t.name);
      if (it != vars_.end() && !it->second.empty() && it->second.back() == 'v')
        throw scope_error("real variable " + t.name + " used as a first-order argument");
    } else if (t.kind == FoTerm::Kind::skolem) {
      use_symbol(t.name, 'g', static_cast<int>(t.args.size()));
      for (const auto& a : t.args) fo(a);
    } else if (t.element < 0) {
      throw scope_error("negative domain element");
    }
  }

  template <class F>
  void bind(const std::string& v, char role, F&& k) {
    vars_[v].push_back(role);
    k();
    vars_[v].pop_back();
  }

  template <class F>
  void bind_symbol(const std::string& s, char role, int arity, F&& k) {
    symbols_[s].push_back({role, arity});
    k();
    symbols_[s].pop_back();
    if (symbols_[s].empty()) symbols_.erase(s);
  }

  void use_symbol(const std::string& s, char role, int arity) {
    auto& stack = symbols_[s];
    if (stack.empty()) {
      // Free (vocabulary) symbol: first use fixes its role and arity.
      auto it = free_.find(s);
      if (it == free_.end()) {
        free_[s] = {role, arity};
        return;
      }
      if (it->second.first != role) throw scope_error(s + " used in two different roles");
      if (it->second.second != arity) throw scope_error("arity mismatch for " + s);
      stack.clear();
      symbols_.erase(s);
      return;
    }
    if (stack.back().first != role) throw scope_error(s + " used in the wrong role");
    if (stack.back().second != arity)
      throw scope_error("arity mismatch for " + s + ": declared " + std::to_string(stack.back().second) +
                        ", used with " + std::to_string(arity));
  }

  std::map<std::string, std::vector<char>> vars_;
  std::map<std::string, std::vector<std::pair<char, int>>> symbols_;
  std::map<std::string, std::pair<char, int>> free_;
};

}  // namespace detail

inline void check_scopes(const FormulaPtr& f) { detail::ScopeChecker().check(*f); }

inline FormulaPtr parse_formula(const Sexp& s) {
  auto f = detail::FormulaParser().formula(s);
  check_scopes(f);
  return f;
}
inline FormulaPtr parse_formula(std::string_view text) { return parse_formula(parse_sexp(text)); }
inline TermPtr parse_term(std::string_view text) { return detail::FormulaParser().num_term(parse_sexp(text)); }

// ---------------------------------------------------------------------------
// Traversal helpers.

/// Applies `fn` to every term node (pre-order) of `t`.
inline void visit_term(const TermPtr& t, const std::function<void(const Term&)>& fn) {
  fn(*t);
  for (const auto& k : t->kids) visit_term(k, fn);
}

/// Applies `fn` to every formula node (pre-order).
inline void visit_formula(const FormulaPtr& f, const std::function<void(const Formula&)>& fn) {
  fn(*f);
  for (const auto& k : f->kids) visit_formula(k, fn);
}

inline std::size_t formula_size(const FormulaPtr& f) {
  std::size_t n = 0;
  visit_formula(f, [&](const Formula&) { ++n; });
  return n;
}

/// Real variables occurring free (not bound by exists_real).
inline std::set<std::string> free_real_vars(const FormulaPtr& f) {
  std::set<std::string> out;
  std::multiset<std::string> bound;
  std::function<void(const Formula&)> go = [&](const Formula& g) {
    if (g.kind == Formula::Kind::exists_real) {
      bound.insert(g.name);
      go(*g.body());
      bound.erase(bound.find(g.name));
      return;
    }
    if (g.is_numeric_atom()) {
      for (const auto* side : {&g.lhs, &g.rhs})
        visit_term(*side, [&](const Term& t) {
          if (t.kind == Term::Kind::var && !bound.count(t.name)) out.insert(t.name);
        });
    }
    for (const auto& k : g.kids) go(*k);
  };
  go(*f);
  return out;
}

/// Function symbols applied but not bound by exists_fn.
inline std::set<std::string> free_function_symbols(const FormulaPtr& f) {
  std::set<std::string> out;
  std::multiset<std::string> bound;
  std::function<void(const Formula&)> go = [&](const Formula& g) {
    if (g.kind == Formula::Kind::exists_fn) {
      bound.insert(g.name);
      go(*g.body());
      bound.erase(bound.find(g.name));
      return;
    }
    if (g.is_numeric_atom()) {
      for (const auto* side : {&g.lhs, &g.rhs})
        visit_term(*side, [&](const Term& t) {
          if (t.kind == Term::Kind::app && !bound.count(t.name)) out.insert(t.name);
        });
    }
    for (const auto& k : g.kids) go(*k);
  };
  go(*f);
  return out;
}

/// Fresh-name source avoiding every symbol already in a formula.
class NameSupply {
 public:
  NameSupply() = default;
  explicit NameSupply(const FormulaPtr& f) { reserve(f); }

  void reserve(const FormulaPtr& f) {
    visit_formula(f, [&](const Formula& g) {
      if (!g.name.empty()) used_.insert(g.name);
      for (const auto& a : g.args) reserve_fo(a);
      if (g.is_numeric_atom())
        for (const auto* side : {&g.lhs, &g.rhs})
          visit_term(*side, [&](const Term& t) {
            if (!t.name.empty()) used_.insert(t.name);
            for (const auto& b : t.bound) used_.insert(b);
            for (const auto& a : t.args) reserve_fo(a);
          });
    });
  }
  void reserve(const std::string& n) { used_.insert(n); }

  std::string fresh(const std::string& base) {
    if (!used_.count(base)) {
      used_.insert(base);
      return base;
    }
    for (int i = 1;; ++i) {
      std::string c = base + "_" + std::to_string(i);
      if (!used_.count(c)) {
        used_.insert(c);
        return c;
      }
    }
  }

 private:
  void reserve_fo(const FoTerm& t) {
    if (!t.name.empty()) used_.insert(t.name);
    for (const auto& a : t.args) reserve_fo(a);
  }
  std::set<std::string> used_;
};

// ---------------------------------------------------------------------------
// Fragment conformance.

enum class TermOp { add, mul, sum };

struct FragmentSpec {
  bool loose = true;
  bool guarded = true;
  std::set<TermOp> ops{TermOp::add, TermOp::mul, TermOp::sum};
  std::set<Cmp> cmps{Cmp::eq, Cmp::le, Cmp::lt};
  bool zero_one_constants = false;

  static FragmentSpec loose_guarded() {
    FragmentSpec s;
    s.cmps = {Cmp::eq, Cmp::le};
    return s;
  }
  static FragmentSpec loose_only() {
    FragmentSpec s;
    s.guarded = false;
    return s;
  }
};

struct Violation {
  std::string path;  // child indices from the root, dot separated
  std::string message;
};

struct ConformanceReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  std::string str() const {
    std::string out;
    for (const auto& v : violations) out += "at [" + v.path + "]: " + v.message + "\n";
    return out;
  }
};

namespace detail {

/// Real quantifier over all reals whose body starts with 0<=v and v<=1.
inline bool has_explicit_guard(const Formula& q) {
  const Formula& b = *q.body();
  if (b.kind != Formula::Kind::and_) return false;
  bool lower = false, upper = false;
  auto is_var = [&](const TermPtr& t) { return t->kind == Term::Kind::var && t->name == q.name; };
  auto is_const = [](const TermPtr& t, int c) {
    return t->kind == Term::Kind::constant && t->value == ExactScalar(c);
  };
  for (const auto& k : b.kids) {
    if (k->kind != Formula::Kind::atom || k->cmp != Cmp::le) continue;
    if (is_const(k->lhs, 0) && is_var(k->rhs)) lower = true;
    if (is_var(k->lhs) && is_const(k->rhs, 1)) upper = true;
  }
  return lower && upper;
}

}  // namespace detail

inline ConformanceReport check_fragment(const FormulaPtr& root, const FragmentSpec& spec) {
  ConformanceReport rep;
  auto add = [&](const std::string& path, std::string msg) { rep.violations.push_back({path, std::move(msg)}); };
  std::function<void(const Term&, const std::string&)> term = [&](const Term& t, const std::string& path) {
    using TK = Term::Kind;
    if (t.kind == TK::add && !spec.ops.count(TermOp::add)) add(path, "operator + outside the fragment");
    if (t.kind == TK::mul && !spec.ops.count(TermOp::mul)) add(path, "operator * outside the fragment");
    if (t.kind == TK::sum && !spec.ops.count(TermOp::sum)) add(path, "SUM outside the fragment");
    if (t.kind == TK::constant && spec.zero_one_constants && t.value != ExactScalar(0) && t.value != ExactScalar(1))
      add(path, "constant " + t.value.str() + " outside {0,1}");
    for (const auto& k : t.kids) term(*k, path);
  };
  std::function<void(const Formula&, const std::string&)> go = [&](const Formula& f, const std::string& path) {
    using K = Formula::Kind;
    if (f.kind == K::natom && spec.loose) add(path, "negated numerical atom in loose fragment");
    if (f.is_numeric_atom()) {
      if (!spec.cmps.count(f.cmp)) add(path, std::string("comparison ") + cmp_symbol(f.cmp) + " outside the fragment");
      term(*f.lhs, path);
      term(*f.rhs, path);
    }
    if (spec.guarded) {
      if (f.kind == K::exists_real && f.range != Range::unit && !(f.range == Range::real && detail::has_explicit_guard(f)))
        add(path, "real quantifier over " + f.name + " is missing the [0,1] guard");
      if (f.kind == K::exists_fn && f.range != Range::unit && f.range != Range::dist)
        add(path, "function quantifier over " + f.name + " is not [0,1]-ranged");
    }
    for (std::size_t i = 0; i < f.kids.size(); ++i)
      go(*f.kids[i], path.empty() ? std::to_string(i) : path + "." + std::to_string(i));
  };
  go(*root, "");
  return rep;
}

}  // namespace realogic
