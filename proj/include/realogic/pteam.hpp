#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "realogic/eval.hpp"
#include "realogic/formula.hpp"
#include "realogic/scalar.hpp"
#include "realogic/sexpr.hpp"
#include "realogic/structure.hpp"

namespace realogic {

class team_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class certificate_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Probabilistic teams.

class ProbTeam {
 public:
  ProbTeam() = default;

  /// Rows with equal assignments are merged; zero-weight rows are dropped.
  ProbTeam(std::vector<std::string> vars, int domain_size, const std::vector<std::pair<Tuple, ExactScalar>>& rows)
      : vars_(std::move(vars)), n_(domain_size) {
    check_vars();
    for (const auto& [t, w] : rows) add(t, w);
    ExactScalar total;
    for (const auto& [t, w] : rows_) total += w;
    if (total != ExactScalar(1)) throw team_error("team weights sum to " + total.str() + ", not 1");
  }

  static ProbTeam empty(std::vector<std::string> vars, int domain_size) {
    ProbTeam t;
    t.vars_ = std::move(vars);
    t.n_ = domain_size;
    t.check_vars();
    return t;
  }

  /// Normalizes nonnegative weights; all-zero input gives the empty team.
  static ProbTeam from_weights(std::vector<std::string> vars, int domain_size, const std::map<Tuple, ExactScalar>& w) {
    ExactScalar total;
    for (const auto& [t, v] : w) {
      if (v < ExactScalar(0)) throw team_error("negative weight");
      total += v;
    }
    if (total.is_zero()) return empty(std::move(vars), domain_size);
    std::vector<std::pair<Tuple, ExactScalar>> rows;
    for (const auto& [t, v] : w) rows.emplace_back(t, v / total);
    return ProbTeam(std::move(vars), domain_size, rows);
  }

  const std::vector<std::string>& vars() const { return vars_; }
  int domain_size() const { return n_; }
  const std::map<Tuple, ExactScalar>& rows() const { return rows_; }
  bool is_empty() const { return rows_.empty(); }
  ExactScalar weight(const Tuple& t) const {
    auto it = rows_.find(t);
    return it == rows_.end() ? ExactScalar(0) : it->second;
  }

  int index(const std::string& v) const {
    auto it = std::find(vars_.begin(), vars_.end(), v);
    if (it == vars_.end()) throw team_error("unknown variable " + v);
    return static_cast<int>(it - vars_.begin());
  }
  std::vector<int> indices(const std::vector<std::string>& vs) const {
    std::vector<int> out;
    for (const auto& v : vs) out.push_back(index(v));
    return out;
  }

  friend bool operator==(const ProbTeam&, const ProbTeam&) = default;

 private:
  void check_vars() const {
    std::set<std::string> seen(vars_.begin(), vars_.end());
    if (seen.size() != vars_.size()) throw team_error("duplicate team variable");
    if (n_ < 1) throw team_error("value domain must be nonempty");
  }
  void add(const Tuple& t, const ExactScalar& w) {
    if (t.size() != vars_.size()) throw team_error("row has the wrong length");
    for (int a : t)
      if (a < 0 || a >= n_) throw team_error("row value outside the value domain");
    if (w < ExactScalar(0) || w > ExactScalar(1)) throw team_error("row weight outside [0,1]");
    if (w.is_zero()) return;
    rows_[t] += w;
  }

  std::vector<std::string> vars_;
  int n_ = 1;
  std::map<Tuple, ExactScalar> rows_;
};

/// f_X over A^|D|, zero outside the support.
inline WeightTable team_to_distribution(const ProbTeam& t) {
  if (t.is_empty()) throw team_error("the empty team has no distribution");
  FiniteDomain d(t.domain_size());
  WeightTable w(static_cast<int>(t.vars().size()));
  for (const auto& tup : d.tuples(w.arity)) w.set(tup, t.weight(tup));
  return w;
}

inline Tuple project(const Tuple& row, const std::vector<int>& idx) {
  Tuple out;
  for (int i : idx) out.push_back(row[static_cast<std::size_t>(i)]);
  return out;
}

/// |X|_{vars = values}
inline ExactScalar marginal(const ProbTeam& t, const std::vector<std::string>& vars, const Tuple& values) {
  if (vars.size() != values.size()) throw team_error("marginal: arity mismatch");
  auto idx = t.indices(vars);
  ExactScalar m;
  for (const auto& [row, w] : t.rows())
    if (project(row, idx) == values) m += w;
  return m;
}

// ---------------------------------------------------------------------------
// Formulas of FO(⊥⊥c, ≈).

struct PTFormula;
using PTFormulaPtr = std::shared_ptr<const PTFormula>;

struct PTFormula {
  enum class Kind { ci, indep, ident, eq, neq, rel, nrel, and_, or_, exists, forall };
  Kind kind = Kind::and_;
  std::vector<std::string> xs, ys, zs;  // ci: ys ⊥⊥_xs zs; indep: xs ⊥⊥ ys; ident: xs ≈ ys
  std::string name;                     // rel name / quantified variable
  std::vector<FoTerm> args;             // eq, neq, rel, nrel
  std::vector<PTFormulaPtr> kids;

  bool is_atom() const { return kind == Kind::ci || kind == Kind::indep || kind == Kind::ident; }
  bool is_literal() const { return kind == Kind::eq || kind == Kind::neq || kind == Kind::rel || kind == Kind::nrel; }
};

namespace detail {

inline std::vector<std::string> pt_names(const Sexp& s) {
  s.expect_list("variable list");
  std::vector<std::string> out;
  for (const auto& it : s.items) out.push_back(it.expect_atom("variable"));
  return out;
}

inline FoTerm pt_arg(const Sexp& s) {
  const auto& a = s.expect_atom("argument");
  if (!a.empty() && a[0] == '#') return FoTerm::elem(static_cast<int>(parse_int_atom(Sexp::make_atom(a.substr(1)), "element")));
  return FoTerm::var(a);
}

}  // namespace detail

/// (ci (x..) (y..) (z..)) | (indep (x..) (y..)) | (ident (x..) (y..)) | (eqv a b) | (rel R a..)
/// | (not literal) | (and φ..) | (or φ ψ) | (exists (x) φ) | (forall (x) φ)
inline PTFormulaPtr parse_pt_formula(const Sexp& s) {
  using K = PTFormula::Kind;
  s.expect_list("team formula");
  PTFormula f;
  auto h = std::string(s.head());
  if (h == "ci") {
    if (s.size() != 4) s.fail("(ci (x..) (y..) (z..))");
    f.kind = K::ci;
    f.xs = detail::pt_names(s[1]);
    f.ys = detail::pt_names(s[2]);
    f.zs = detail::pt_names(s[3]);
  } else if (h == "indep" || h == "ident") {
    if (s.size() != 3) s.fail("(" + h + " (x..) (y..))");
    f.kind = h == "indep" ? K::indep : K::ident;
    f.xs = detail::pt_names(s[1]);
    f.ys = detail::pt_names(s[2]);
    if (f.kind == K::ident && f.xs.size() != f.ys.size()) s.fail("marginal identity needs tuples of equal length");
  } else if (h == "eqv") {
    if (s.size() != 3) s.fail("(eqv a b)");
    f.kind = K::eq;
    f.args = {detail::pt_arg(s[1]), detail::pt_arg(s[2])};
  } else if (h == "rel") {
    if (s.size() < 2) s.fail("(rel R args..)");
    f.kind = K::rel;
    f.name = s[1].expect_atom("relation");
    for (std::size_t i = 2; i < s.size(); ++i) f.args.push_back(detail::pt_arg(s[i]));
  } else if (h == "not") {
    if (s.size() != 2) s.fail("(not literal)");
    auto inner = parse_pt_formula(s[1]);
    if (inner->kind != K::eq && inner->kind != K::rel) s.fail("negation is allowed only on first-order literals");
    f = *inner;
    f.kind = inner->kind == K::eq ? K::neq : K::nrel;
  } else if (h == "and" || h == "or") {
    f.kind = h == "and" ? K::and_ : K::or_;
    for (std::size_t i = 1; i < s.size(); ++i) f.kids.push_back(parse_pt_formula(s[i]));
    if (f.kind == K::or_ && f.kids.size() != 2) s.fail("or takes exactly two disjuncts");
  } else if (h == "exists" || h == "forall") {
    if (s.size() != 3) s.fail("(" + h + " (x) φ)");
    f.kind = h == "exists" ? K::exists : K::forall;
    auto vs = detail::pt_names(s[1]);
    if (vs.size() != 1) s[1].fail("one variable per quantifier");
    f.name = vs[0];
    f.kids.push_back(parse_pt_formula(s[2]));
  } else {
    s.fail("unknown team formula head " + h);
  }
  return std::make_shared<const PTFormula>(std::move(f));
}

inline PTFormulaPtr parse_pt_formula(std::string_view text) { return parse_pt_formula(parse_sexp(text)); }

inline Sexp pt_formula_sexp(const PTFormula& f) {
  using K = PTFormula::Kind;
  auto a = [](std::string s) { return Sexp::make_atom(std::move(s)); };
  auto names = [&](const std::vector<std::string>& vs) {
    Sexp l = Sexp::make_list();
    for (const auto& v : vs) l.items.push_back(a(v));
    return l;
  };
  auto literal = [&](const char* head) {
    Sexp l = Sexp::make_list({a(head)});
    if (f.kind == K::rel || f.kind == K::nrel) l.items.push_back(a(f.name));
    for (const auto& t : f.args) l.items.push_back(fo_term_sexp(t));
    return l;
  };
  switch (f.kind) {
    case K::ci: return Sexp::make_list({a("ci"), names(f.xs), names(f.ys), names(f.zs)});
    case K::indep: return Sexp::make_list({a("indep"), names(f.xs), names(f.ys)});
    case K::ident: return Sexp::make_list({a("ident"), names(f.xs), names(f.ys)});
    case K::eq: return literal("eqv");
    case K::rel: return literal("rel");
    case K::neq: return Sexp::make_list({a("not"), literal("eqv")});
    case K::nrel: return Sexp::make_list({a("not"), literal("rel")});
    case K::and_:
    case K::or_: {
      Sexp l = Sexp::make_list({a(f.kind == K::and_ ? "and" : "or")});
      for (const auto& k : f.kids) l.items.push_back(pt_formula_sexp(*k));
      return l;
    }
    case K::exists:
    case K::forall:
      return Sexp::make_list({a(f.kind == K::exists ? "exists" : "forall"), names({f.name}), pt_formula_sexp(*f.kids[0])});
  }
  return {};
}

// ---------------------------------------------------------------------------
// Atoms.

namespace detail {

/// Value tuples occurring in the support, projected to idx.
inline std::set<Tuple> support_projection(const ProbTeam& t, const std::vector<int>& idx) {
  std::set<Tuple> out;
  for (const auto& [row, w] : t.rows()) out.insert(project(row, idx));
  return out;
}

inline ExactScalar marginal_idx(const ProbTeam& t, const std::vector<int>& idx, const Tuple& values) {
  ExactScalar m;
  for (const auto& [row, w] : t.rows())
    if (project(row, idx) == values) m += w;
  return m;
}

inline bool literal_holds(const PTFormula& f, const Tuple& row, const ProbTeam& t, const RStructure* s) {
  using K = PTFormula::Kind;
  auto val = [&](const FoTerm& a) {
    if (a.kind == FoTerm::Kind::element) return a.element;
    if (a.kind != FoTerm::Kind::var) throw team_error("unsupported literal argument");
    return row[static_cast<std::size_t>(t.index(a.name))];
  };
  bool v = false;
  if (f.kind == K::eq || f.kind == K::neq) {
    v = val(f.args[0]) == val(f.args[1]);
  } else {
    Tuple args;
    for (const auto& a : f.args) args.push_back(val(a));
    const RelationTable* r = s ? s->relation(f.name) : nullptr;
    if (r) {
      if (r->arity != static_cast<int>(args.size())) throw team_error("arity mismatch for relation " + f.name);
      v = r->contains(args);
    } else if (auto b = detail::builtin_order(f.name, args, t.domain_size())) {
      v = *b;
    } else {
      throw team_error("unknown relation " + f.name);
    }
  }
  return (f.kind == K::eq || f.kind == K::rel) ? v : !v;
}

}  // namespace detail

/// Atom and literal semantics; the empty team satisfies everything.
inline bool check_atom(const ProbTeam& t, const PTFormula& atom, const RStructure* s = nullptr) {
  using K = PTFormula::Kind;
  if (t.is_empty()) return true;
  switch (atom.kind) {
    case K::ci:
    case K::indep: {
      auto X = atom.kind == K::ci ? atom.xs : std::vector<std::string>{};
      auto Y = atom.kind == K::ci ? atom.ys : atom.xs;
      auto Z = atom.kind == K::ci ? atom.zs : atom.ys;
      auto xi = t.indices(X), yi = t.indices(Y), zi = t.indices(Z);
      auto xy = xi, xz = xi, xyz = xi;
      xy.insert(xy.end(), yi.begin(), yi.end());
      xz.insert(xz.end(), zi.begin(), zi.end());
      xyz.insert(xyz.end(), yi.begin(), yi.end());
      xyz.insert(xyz.end(), zi.begin(), zi.end());
      for (const auto& a : detail::support_projection(t, xi))
        for (const auto& b : detail::support_projection(t, yi))
          for (const auto& c : detail::support_projection(t, zi)) {
            Tuple ab = a, ac = a, abc = a;
            ab.insert(ab.end(), b.begin(), b.end());
            ac.insert(ac.end(), c.begin(), c.end());
            abc.insert(abc.end(), b.begin(), b.end());
            abc.insert(abc.end(), c.begin(), c.end());
            if (detail::marginal_idx(t, xy, ab) * detail::marginal_idx(t, xz, ac) !=
                detail::marginal_idx(t, xi, a) * detail::marginal_idx(t, xyz, abc))
              return false;
          }
      return true;
    }
    case K::ident: {
      if (atom.xs.size() != atom.ys.size()) throw team_error("marginal identity arity mismatch");
      auto xi = t.indices(atom.xs), yi = t.indices(atom.ys);
      auto vals = detail::support_projection(t, xi);
      auto more = detail::support_projection(t, yi);
      vals.insert(more.begin(), more.end());
      for (const auto& a : vals)
        if (detail::marginal_idx(t, xi, a) != detail::marginal_idx(t, yi, a)) return false;
      return true;
    }
    case K::eq:
    case K::neq:
    case K::rel:
    case K::nrel:
      for (const auto& [row, w] : t.rows())
        if (!detail::literal_holds(atom, row, t, s)) return false;
      return true;
    default: throw team_error("check_atom expects an atom or a literal");
  }
}

// ---------------------------------------------------------------------------
// Certificates and compositional checking.

/// Witness for the existential choices of a formula: mixture splits for ∨
/// and per-row value distributions for ∃.
struct Certificate {
  enum class Kind { leaf, and_, or_, exists, forall };
  Kind kind = Kind::leaf;
  ExactScalar k;                                   // or
  std::map<Tuple, ExactScalar> left, right;        // or: component teams (normalized or empty)
  std::map<Tuple, std::vector<ExactScalar>> split; // exists: row -> distribution over A
  std::vector<Certificate> kids;
};

inline Certificate parse_certificate(const Sexp& s) {
  using K = Certificate::Kind;
  s.expect_list("certificate");
  Certificate c;
  auto h = std::string(s.head());
  auto rows = [](const Sexp& r, std::map<Tuple, ExactScalar>& out) {
    if (r.head() != "rows") r.fail("expected (rows (row (t) w)..)");
    for (std::size_t i = 1; i < r.size(); ++i) {
      const Sexp& row = r[i];
      if (row.head() != "row" || row.size() != 3) row.fail("(row (t) w)");
      out[parse_tuple(row[1])] = ExactScalar::parse(row[2].expect_atom("weight"));
    }
  };
  if (h == "leaf") {
    c.kind = K::leaf;
  } else if (h == "and") {
    c.kind = K::and_;
    for (std::size_t i = 1; i < s.size(); ++i) c.kids.push_back(parse_certificate(s[i]));
  } else if (h == "or") {
    c.kind = K::or_;
    if (s.size() != 6) s.fail("(or (k q) (left (rows..)) (right (rows..)) C1 C2)");
    if (s[1].head() != "k" || s[1].size() != 2) s[1].fail("(k q)");
    c.k = ExactScalar::parse(s[1][1].expect_atom("k"));
    if (s[2].head() != "left" || s[2].size() != 2) s[2].fail("(left (rows..))");
    if (s[3].head() != "right" || s[3].size() != 2) s[3].fail("(right (rows..))");
    rows(s[2][1], c.left);
    rows(s[3][1], c.right);
    c.kids.push_back(parse_certificate(s[4]));
    c.kids.push_back(parse_certificate(s[5]));
  } else if (h == "exists") {
    c.kind = K::exists;
    if (s.size() != 3 || s[1].head() != "split") s.fail("(exists (split (row (t) (w..))..) C)");
    for (std::size_t i = 1; i < s[1].size(); ++i) {
      const Sexp& row = s[1][i];
      if (row.head() != "row" || row.size() != 3) row.fail("(row (t) (w0 w1 ..))");
      std::vector<ExactScalar> dist;
      for (const auto& w : row[2].expect_list("distribution").items) dist.push_back(ExactScalar::parse(w.expect_atom("weight")));
      c.split[parse_tuple(row[1])] = dist;
    }
    c.kids.push_back(parse_certificate(s[2]));
  } else if (h == "forall") {
    c.kind = K::forall;
    if (s.size() != 2) s.fail("(forall C)");
    c.kids.push_back(parse_certificate(s[1]));
  } else {
    s.fail("unknown certificate head " + h);
  }
  return c;
}

inline Sexp certificate_sexp(const Certificate& c) {
  using K = Certificate::Kind;
  auto a = [](std::string s) { return Sexp::make_atom(std::move(s)); };
  auto rows = [&](const std::map<Tuple, ExactScalar>& m) {
    Sexp l = Sexp::make_list({a("rows")});
    for (const auto& [t, w] : m) l.items.push_back(Sexp::make_list({a("row"), tuple_sexp(t), a(w.str())}));
    return l;
  };
  switch (c.kind) {
    case K::leaf: return Sexp::make_list({a("leaf")});
    case K::and_: {
      Sexp l = Sexp::make_list({a("and")});
      for (const auto& k : c.kids) l.items.push_back(certificate_sexp(k));
      return l;
    }
    case K::or_:
      return Sexp::make_list({a("or"), Sexp::make_list({a("k"), a(c.k.str())}),
                              Sexp::make_list({a("left"), rows(c.left)}), Sexp::make_list({a("right"), rows(c.right)}),
                              certificate_sexp(c.kids.at(0)), certificate_sexp(c.kids.at(1))});
    case K::exists: {
      Sexp sp = Sexp::make_list({a("split")});
      for (const auto& [t, d] : c.split) {
        Sexp ws = Sexp::make_list();
        for (const auto& w : d) ws.items.push_back(a(w.str()));
        sp.items.push_back(Sexp::make_list({a("row"), tuple_sexp(t), ws}));
      }
      return Sexp::make_list({a("exists"), sp, certificate_sexp(c.kids.at(0))});
    }
    case K::forall: return Sexp::make_list({a("forall"), certificate_sexp(c.kids.at(0))});
  }
  return {};
}

struct PTVerdict {
  bool holds = false;
  std::string reason;  // first failure, empty when holds
  explicit operator bool() const { return holds; }
};

namespace detail {

/// Team after setting variable x to per-row distributions.
inline ProbTeam extend_team(const ProbTeam& t, const std::string& x,
                            const std::function<std::vector<ExactScalar>(const Tuple&)>& dist) {
  auto vars = t.vars();
  auto it = std::find(vars.begin(), vars.end(), x);
  std::size_t pos = static_cast<std::size_t>(it - vars.begin());
  if (it == vars.end()) vars.push_back(x);
  std::map<Tuple, ExactScalar> rows;
  for (const auto& [row, w] : t.rows()) {
    auto d = dist(row);
    if (static_cast<int>(d.size()) != t.domain_size()) throw certificate_error("split has the wrong length");
    ExactScalar total;
    for (const auto& p : d) {
      if (p < ExactScalar(0)) throw certificate_error("negative split weight");
      total += p;
    }
    if (total != ExactScalar(1)) throw certificate_error("split does not conserve row mass");
    for (int a = 0; a < t.domain_size(); ++a) {
      Tuple r = row;
      if (pos < r.size()) r[pos] = a;
      else r.push_back(a);
      rows[r] += w * d[static_cast<std::size_t>(a)];
    }
  }
  return ProbTeam::from_weights(vars, t.domain_size(), rows);
}

inline ProbTeam uniform_extension(const ProbTeam& t, const std::string& x) {
  std::vector<ExactScalar> u(static_cast<std::size_t>(t.domain_size()), ExactScalar(1) / ExactScalar(static_cast<long>(t.domain_size())));
  return extend_team(t, x, [&](const Tuple&) { return u; });
}

inline PTVerdict check_rec(const ProbTeam& t, const RStructure* s, const PTFormula& f, const Certificate& c) {
  using K = PTFormula::Kind;
  using CK = Certificate::Kind;
  auto fail = [](std::string why) { return PTVerdict{false, std::move(why)}; };
  if (f.is_atom() || f.is_literal()) {
    if (c.kind != CK::leaf) throw certificate_error("expected a leaf certificate at an atom");
    return check_atom(t, f, s) ? PTVerdict{true, ""} : fail("atom " + to_string(pt_formula_sexp(f)) + " fails");
  }
  switch (f.kind) {
    case K::and_: {
      if (c.kind != CK::and_ || c.kids.size() != f.kids.size()) throw certificate_error("certificate shape mismatch at and");
      for (std::size_t i = 0; i < f.kids.size(); ++i) {
        auto v = check_rec(t, s, *f.kids[i], c.kids[i]);
        if (!v) return v;
      }
      return {true, ""};
    }
    case K::or_: {
      if (c.kind != CK::or_ || c.kids.size() != 2) throw certificate_error("certificate shape mismatch at or");
      if (c.k < ExactScalar(0) || c.k > ExactScalar(1)) return fail("mixture coefficient outside [0,1]");
      ProbTeam L = c.left.empty() ? ProbTeam::empty(t.vars(), t.domain_size())
                                  : ProbTeam(t.vars(), t.domain_size(), {c.left.begin(), c.left.end()});
      ProbTeam R = c.right.empty() ? ProbTeam::empty(t.vars(), t.domain_size())
                                   : ProbTeam(t.vars(), t.domain_size(), {c.right.begin(), c.right.end()});
      if (!c.k.is_zero() && L.is_empty()) return fail("left component empty with k > 0");
      if (c.k != ExactScalar(1) && R.is_empty()) return fail("right component empty with k < 1");
      std::set<Tuple> keys;
      for (const auto* m : {&t.rows(), &L.rows(), &R.rows()})
        for (const auto& [row, w] : *m) keys.insert(row);
      for (const auto& row : keys) {
        ExactScalar mix = c.k * L.weight(row) + (ExactScalar(1) - c.k) * R.weight(row);
        if (mix != t.weight(row))
          return fail("mixture identity violated at row " + to_string(tuple_sexp(row)) + ": " + t.weight(row).str() +
                      " != " + mix.str());
      }
      auto lv = c.k.is_zero() ? PTVerdict{true, ""} : check_rec(L, s, *f.kids[0], c.kids[0]);
      if (!lv) return fail("left disjunct: " + lv.reason);
      auto rv = c.k == ExactScalar(1) ? PTVerdict{true, ""} : check_rec(R, s, *f.kids[1], c.kids[1]);
      if (!rv) return fail("right disjunct: " + rv.reason);
      return {true, ""};
    }
    case K::exists: {
      if (c.kind != CK::exists || c.kids.size() != 1) throw certificate_error("certificate shape mismatch at exists");
      ProbTeam ext = extend_team(t, f.name, [&](const Tuple& row) {
        auto it = c.split.find(row);
        if (it == c.split.end()) throw certificate_error("split misses row " + to_string(tuple_sexp(row)));
        return it->second;
      });
      return check_rec(ext, s, *f.kids[0], c.kids[0]);
    }
    case K::forall: {
      if (c.kind != CK::forall || c.kids.size() != 1) throw certificate_error("certificate shape mismatch at forall");
      return check_rec(uniform_extension(t, f.name), s, *f.kids[0], c.kids[0]);
    }
    default: break;
  }
  throw certificate_error("unexpected formula node");
}

}  // namespace detail

/// ∧: both conjuncts; ∨: X = k·Y + (1−k)·Z exactly, then Y ⊨ φ and Z ⊨ ψ;
/// ∃x: per-row distributions for x from the certificate; ∀x: uniform
/// extension. Components with zero mixture weight are empty and satisfy
/// everything.
inline PTVerdict check_formula(const ProbTeam& t, const RStructure* s, const PTFormula& f, const Certificate& c) {
  if (t.is_empty()) return {true, ""};
  return detail::check_rec(t, s, f, c);
}

/// Leaf-only certificate skeleton for formulas without ∨ or ∃.
inline Certificate trivial_certificate(const PTFormula& f) {
  using K = PTFormula::Kind;
  Certificate c;
  switch (f.kind) {
    case K::and_:
      c.kind = Certificate::Kind::and_;
      for (const auto& k : f.kids) c.kids.push_back(trivial_certificate(*k));
      break;
    case K::forall:
      c.kind = Certificate::Kind::forall;
      c.kids.push_back(trivial_certificate(*f.kids[0]));
      break;
    case K::or_:
    case K::exists: throw certificate_error("formula needs a certificate for its choices");
    default: c.kind = Certificate::Kind::leaf;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Team files.

inline ProbTeam parse_team(const Sexp& s) {
  if (s.head() != "team") s.fail("expected (team (vars ..) (domain n) (row (t) w)..)");
  std::vector<std::string> vars;
  int n = 0;
  std::vector<std::pair<Tuple, ExactScalar>> rows;
  bool empty_marker = false;
  for (std::size_t i = 1; i < s.size(); ++i) {
    const Sexp& it = s[i];
    auto h = std::string(it.head());
    if (h == "vars") {
      for (std::size_t j = 1; j < it.size(); ++j) vars.push_back(it[j].expect_atom("variable"));
    } else if (h == "domain") {
      if (it.size() != 2) it.fail("(domain n)");
      n = static_cast<int>(parse_int_atom(it[1], "domain size"));
    } else if (h == "row") {
      if (it.size() != 3) it.fail("(row (t) w)");
      rows.emplace_back(parse_tuple(it[1]), ExactScalar::parse(it[2].expect_atom("weight")));
    } else if (h == "empty") {
      empty_marker = true;
    } else {
      it.fail("unknown team item " + h);
    }
  }
  if (empty_marker) {
    if (!rows.empty()) s.fail("an empty team has no rows");
    return ProbTeam::empty(vars, n);
  }
  return ProbTeam(vars, n, rows);
}

inline Sexp team_sexp(const ProbTeam& t) {
  auto a = [](std::string s) { return Sexp::make_atom(std::move(s)); };
  Sexp vars = Sexp::make_list({a("vars")});
  for (const auto& v : t.vars()) vars.items.push_back(a(v));
  Sexp out = Sexp::make_list({a("team"), vars, Sexp::make_list({a("domain"), a(std::to_string(t.domain_size()))})});
  if (t.is_empty()) out.items.push_back(Sexp::make_list({a("empty")}));
  for (const auto& [row, w] : t.rows()) out.items.push_back(Sexp::make_list({a("row"), tuple_sexp(row), a(w.str())}));
  return out;
}

// ---------------------------------------------------------------------------
// Encoding into guarded existential arithmetic.

/// Node of the unfolded formula: rows reaching it with their weight variables.
struct EncodedNode {
  const PTFormula* formula = nullptr;
  std::vector<std::string> vars;          // team variables at this node
  std::vector<Tuple> rows;                // row assignments (may repeat)
  std::vector<std::string> weights;       // one weight variable per row
  std::vector<std::size_t> parent_row;    // ∃/∀ children: originating parent row
  std::vector<int> value;                 // ∃/∀ children: chosen value
  std::vector<std::size_t> kids;          // indices into EncodedCheck::nodes
};

struct EncodedCheck {
  FormulaPtr sentence;
  std::vector<EncodedNode> nodes;          // nodes[0] is the root
  std::vector<FormulaPtr> atom_constraints;
  std::vector<FormulaPtr> structural_constraints;
  ProbTeam team;
  std::size_t weight_variables = 0;        // excluding the root
  std::vector<std::string> variables;      // all, root first
};

namespace detail {

class TeamEncoder {
 public:
  TeamEncoder(const ProbTeam& t, const RStructure* s) : t_(t), s_(s) {}

  EncodedCheck encode(const PTFormula& f) {
    EncodedNode root;
    root.formula = &f;
    root.vars = t_.vars();
    for (const auto& [row, w] : t_.rows()) {
      root.rows.push_back(row);
      std::string v = "w0_" + std::to_string(root.weights.size());
      root.weights.push_back(v);
      out_.structural_constraints.push_back(fm::equal(term::var(v), term::constant(w)));
    }
    out_.nodes.push_back(root);
    expand(0);
    out_.team = t_;
    std::vector<FormulaPtr> all = out_.structural_constraints;
    all.insert(all.end(), out_.atom_constraints.begin(), out_.atom_constraints.end());
    FormulaPtr body = fm::conj(std::move(all));
    std::set<std::string> seen;
    for (const auto& n : out_.nodes)
      for (const auto& w : n.weights)
        if (seen.insert(w).second) out_.variables.push_back(w);
    for (auto it = out_.variables.rbegin(); it != out_.variables.rend(); ++it) body = fm::exists01(*it, body);
    out_.sentence = body;
    out_.weight_variables = out_.variables.size() - out_.nodes[0].weights.size();
    return std::move(out_);
  }

 private:
  std::size_t add_node(EncodedNode n) {
    out_.nodes.push_back(std::move(n));
    return out_.nodes.size() - 1;
  }
  std::string fresh() { return "w" + std::to_string(++counter_); }

  TermPtr weight_sum(const EncodedNode& n, const std::function<bool(const Tuple&)>& pick) {
    std::vector<TermPtr> xs;
    for (std::size_t i = 0; i < n.rows.size(); ++i)
      if (pick(n.rows[i])) xs.push_back(term::var(n.weights[i]));
    return term::add(std::move(xs));
  }

  int index_in(const EncodedNode& n, const std::string& v) const {
    auto it = std::find(n.vars.begin(), n.vars.end(), v);
    if (it == n.vars.end()) throw team_error("unknown variable " + v);
    return static_cast<int>(it - n.vars.begin());
  }
  std::vector<int> indices_in(const EncodedNode& n, const std::vector<std::string>& vs) const {
    std::vector<int> out;
    for (const auto& v : vs) out.push_back(index_in(n, v));
    return out;
  }

  void expand(std::size_t id) {
    using K = PTFormula::Kind;
    const PTFormula& f = *out_.nodes[id].formula;
    if (f.is_atom() || f.is_literal()) {
      encode_atom(out_.nodes[id]);
      return;
    }
    switch (f.kind) {
      case K::and_:
        for (const auto& k : f.kids) {
          EncodedNode c = out_.nodes[id];
          c.formula = k.get();
          c.kids.clear();
          std::size_t cid = add_node(std::move(c));
          out_.nodes[id].kids.push_back(cid);
          expand(cid);
        }
        return;
      case K::or_: {
        std::vector<std::size_t> ids;
        for (const auto& k : f.kids) {
          EncodedNode c;
          c.formula = k.get();
          c.vars = out_.nodes[id].vars;
          c.rows = out_.nodes[id].rows;
          for (std::size_t i = 0; i < c.rows.size(); ++i) c.weights.push_back(fresh());
          ids.push_back(add_node(std::move(c)));
        }
        const EncodedNode& p = out_.nodes[id];
        for (std::size_t i = 0; i < p.rows.size(); ++i)
          out_.structural_constraints.push_back(fm::equal(
              term::add(term::var(out_.nodes[ids[0]].weights[i]), term::var(out_.nodes[ids[1]].weights[i])),
              term::var(p.weights[i])));
        out_.nodes[id].kids = ids;
        for (auto c : ids) expand(c);
        return;
      }
      case K::exists:
      case K::forall: {
        const EncodedNode p = out_.nodes[id];
        EncodedNode c;
        c.formula = f.kids[0].get();
        c.vars = p.vars;
        auto it = std::find(c.vars.begin(), c.vars.end(), f.name);
        std::size_t pos = static_cast<std::size_t>(it - c.vars.begin());
        if (it == c.vars.end()) c.vars.push_back(f.name);
        const int n = t_.domain_size();
        for (std::size_t i = 0; i < p.rows.size(); ++i) {
          std::vector<TermPtr> parts;
          for (int a = 0; a < n; ++a) {
            Tuple r = p.rows[i];
            if (pos < r.size()) r[pos] = a;
            else r.push_back(a);
            c.rows.push_back(r);
            c.weights.push_back(fresh());
            c.parent_row.push_back(i);
            c.value.push_back(a);
            parts.push_back(term::var(c.weights.back()));
          }
          out_.structural_constraints.push_back(fm::equal(term::add(parts), term::var(p.weights[i])));
          if (f.kind == K::forall)
            for (int a = 1; a < n; ++a)
              out_.structural_constraints.push_back(fm::equal(parts[static_cast<std::size_t>(a)], parts[0]));
        }
        std::size_t cid = add_node(std::move(c));
        out_.nodes[id].kids = {cid};
        expand(cid);
        return;
      }
      default: break;
    }
  }

  void encode_atom(const EncodedNode& n) {
    using K = PTFormula::Kind;
    const PTFormula& f = *n.formula;
    auto& out = out_.atom_constraints;
    auto zero = term::constant(ExactScalar(0));
    auto proj = [&](const std::vector<int>& idx) {
      std::set<Tuple> vals;
      for (const auto& r : n.rows) vals.insert(project(r, idx));
      return vals;
    };
    auto msum = [&](const std::vector<int>& idx, const Tuple& v) {
      return weight_sum(n, [&](const Tuple& r) { return project(r, idx) == v; });
    };
    switch (f.kind) {
      case K::ci:
      case K::indep: {
        auto X = f.kind == K::ci ? f.xs : std::vector<std::string>{};
        auto Y = f.kind == K::ci ? f.ys : f.xs;
        auto Z = f.kind == K::ci ? f.zs : f.ys;
        auto xi = indices_in(n, X), yi = indices_in(n, Y), zi = indices_in(n, Z);
        auto cat = [](std::vector<int> a, const std::vector<int>& b) {
          a.insert(a.end(), b.begin(), b.end());
          return a;
        };
        for (const auto& a : proj(xi))
          for (const auto& b : proj(yi))
            for (const auto& c : proj(zi)) {
              auto lhs = term::mul(msum(cat(xi, yi), concat_t(a, b)), msum(cat(xi, zi), concat_t(a, c)));
              auto rhs = term::mul(msum(xi, a), msum(cat(cat(xi, yi), zi), concat_t(concat_t(a, b), c)));
              out.push_back(fm::equal(lhs, rhs));
            }
        return;
      }
      case K::ident: {
        auto xi = indices_in(n, f.xs), yi = indices_in(n, f.ys);
        auto vals = proj(xi);
        auto more = proj(yi);
        vals.insert(more.begin(), more.end());
        for (const auto& a : vals) out.push_back(fm::equal(msum(xi, a), msum(yi, a)));
        return;
      }
      default: {
        ProbTeam shape = ProbTeam::empty(n.vars, t_.domain_size());
        for (std::size_t i = 0; i < n.rows.size(); ++i)
          if (!literal_holds(f, n.rows[i], shape, s_)) out.push_back(fm::equal(term::var(n.weights[i]), zero));
        return;
      }
    }
  }

  static Tuple concat_t(Tuple a, const Tuple& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }

  const ProbTeam& t_;
  const RStructure* s_;
  EncodedCheck out_;
  int counter_ = 0;
};

}  // namespace detail

/// Loose [0,1]-guarded sentence over unnormalized row weights: satisfiable
/// iff some certificate makes check_formula true.
inline EncodedCheck encode_check(const ProbTeam& t, const RStructure* s, const PTFormulaPtr& f) {
  if (t.is_empty()) throw team_error("encoding needs a nonempty team");
  EncodedCheck e = detail::TeamEncoder(t, s).encode(*f);
  e.nodes[0].formula = f.get();
  return e;
}

namespace detail {

inline std::map<Tuple, ExactScalar> node_team(const EncodedNode& n, const Environment& env) {
  std::map<Tuple, ExactScalar> w;
  for (std::size_t i = 0; i < n.rows.size(); ++i) w[n.rows[i]] += env.reals.at(n.weights[i]);
  return w;
}

inline void certificate_to_env(const EncodedCheck& e, std::size_t id, const Certificate& c, Environment& env) {
  using K = PTFormula::Kind;
  const EncodedNode& n = e.nodes[id];
  const PTFormula& f = *n.formula;
  if (f.is_atom() || f.is_literal()) return;
  auto parent_team = node_team(n, env);
  ExactScalar total;
  for (const auto& [t, w] : parent_team) total += w;
  switch (f.kind) {
    case K::and_:
      for (std::size_t i = 0; i < n.kids.size(); ++i) {
        const EncodedNode& k = e.nodes[n.kids[i]];
        for (std::size_t r = 0; r < k.rows.size(); ++r) env.reals[k.weights[r]] = env.reals.at(n.weights[r]);
        certificate_to_env(e, n.kids[i], c.kind == Certificate::Kind::and_ ? c.kids.at(i) : c, env);
      }
      return;
    case K::or_: {
      const EncodedNode& L = e.nodes[n.kids[0]];
      const EncodedNode& R = e.nodes[n.kids[1]];
      for (std::size_t r = 0; r < n.rows.size(); ++r) {
        const ExactScalar& pw = env.reals.at(n.weights[r]);
        ExactScalar share;  // fraction of the row's mass sent left
        const ExactScalar& tw = parent_team.at(n.rows[r]);
        if (!tw.is_zero()) {
          auto it = c.left.find(n.rows[r]);
          ExactScalar lw = it == c.left.end() ? ExactScalar(0) : it->second;
          share = c.k * lw * total / tw;
        }
        env.reals[L.weights[r]] = pw * share;
        env.reals[R.weights[r]] = pw - pw * share;
      }
      certificate_to_env(e, n.kids[0], c.kids.at(0), env);
      certificate_to_env(e, n.kids[1], c.kids.at(1), env);
      return;
    }
    case K::exists:
    case K::forall: {
      const EncodedNode& k = e.nodes[n.kids[0]];
      const long size = static_cast<long>(e.team.domain_size());
      for (std::size_t r = 0; r < k.rows.size(); ++r) {
        std::size_t pr = k.parent_row[r];
        const ExactScalar& pw = env.reals.at(n.weights[pr]);
        ExactScalar p;
        if (f.kind == K::forall) {
          p = ExactScalar(1) / ExactScalar(size);
        } else {
          auto it = c.split.find(n.rows[pr]);
          if (it == c.split.end()) {
            if (!pw.is_zero()) throw certificate_error("split misses row " + to_string(tuple_sexp(n.rows[pr])));
            p = ExactScalar(k.value[r] == 0 ? 1 : 0);
          } else {
            p = it->second.at(static_cast<std::size_t>(k.value[r]));
          }
        }
        env.reals[k.weights[r]] = pw * p;
      }
      certificate_to_env(e, n.kids[0], c.kids.at(0), env);
      return;
    }
    default: return;
  }
}

inline Certificate env_to_certificate(const EncodedCheck& e, std::size_t id, const Environment& env) {
  using K = PTFormula::Kind;
  const EncodedNode& n = e.nodes[id];
  const PTFormula& f = *n.formula;
  Certificate c;
  if (f.is_atom() || f.is_literal()) return c;
  auto normalized = [&](const EncodedNode& m) {
    auto w = node_team(m, env);
    ProbTeam t = ProbTeam::from_weights(m.vars, e.team.domain_size(), w);
    return t;
  };
  switch (f.kind) {
    case K::and_:
      c.kind = Certificate::Kind::and_;
      for (auto k : n.kids) c.kids.push_back(env_to_certificate(e, k, env));
      return c;
    case K::or_: {
      c.kind = Certificate::Kind::or_;
      ExactScalar total, left;
      for (const auto& w : n.weights) total += env.reals.at(w);
      for (const auto& w : e.nodes[n.kids[0]].weights) left += env.reals.at(w);
      c.k = total.is_zero() ? ExactScalar(0) : left / total;
      c.left = normalized(e.nodes[n.kids[0]]).rows();
      c.right = normalized(e.nodes[n.kids[1]]).rows();
      c.kids.push_back(env_to_certificate(e, n.kids[0], env));
      c.kids.push_back(env_to_certificate(e, n.kids[1], env));
      return c;
    }
    case K::exists: {
      c.kind = Certificate::Kind::exists;
      const EncodedNode& k = e.nodes[n.kids[0]];
      std::map<Tuple, std::vector<ExactScalar>> mass;
      std::map<Tuple, ExactScalar> row_mass;
      const std::size_t size = static_cast<std::size_t>(e.team.domain_size());
      for (std::size_t r = 0; r < k.rows.size(); ++r) {
        const Tuple& pr = n.rows[k.parent_row[r]];
        auto& v = mass[pr];
        v.resize(size);
        v[static_cast<std::size_t>(k.value[r])] += env.reals.at(k.weights[r]);
        row_mass[pr] += env.reals.at(k.weights[r]);
      }
      for (auto& [row, v] : mass) {
        const ExactScalar& m = row_mass[row];
        if (m.is_zero()) {
          std::fill(v.begin(), v.end(), ExactScalar(0));
          v[0] = ExactScalar(1);
        } else {
          for (auto& x : v) x /= m;
        }
        c.split[row] = v;
      }
      c.kids.push_back(env_to_certificate(e, n.kids[0], env));
      return c;
    }
    case K::forall:
      c.kind = Certificate::Kind::forall;
      c.kids.push_back(env_to_certificate(e, n.kids[0], env));
      return c;
    default: return c;
  }
}

}  // namespace detail

/// Satisfying assignment of e.sentence for a certificate (root weights are the team's).
inline Environment certificate_to_assignment(const EncodedCheck& e, const Certificate& c) {
  Environment env;
  const EncodedNode& root = e.nodes[0];
  for (std::size_t r = 0; r < root.rows.size(); ++r) env.reals[root.weights[r]] = e.team.weight(root.rows[r]);
  detail::certificate_to_env(e, 0, c, env);
  return env;
}

inline Certificate assignment_to_certificate(const EncodedCheck& e, const Environment& env) {
  return detail::env_to_certificate(e, 0, env);
}

}  // namespace realogic
